//! Inputs shared by the benchmarks.

use moments_core::media::MemoryVideo;
use moments_core::synth::{generate_game, make_highlight, OverlayKind, SynthSpec};
use moments_core::{GrayFrame, TimeSpan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth gradient with noise, so every pyramid level has structure.
pub fn textured_frame(width: usize, height: usize, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayFrame::from_fn(width, height, |x, y| {
        let base = (x * 255 / width.max(1) + y * 127 / height.max(1)) as i32;
        (base / 2 + rng.random_range(-40..40)).clamp(0, 255) as u8
    })
}

/// Game and reel of the given length with three highlight segments.
pub fn synthetic_pair(g_duration: f64, seed: u64) -> (MemoryVideo, MemoryVideo) {
    let third = g_duration / 3.0;
    let spec = SynthSpec {
        seed,
        g_duration,
        highlight_segments: (0..3).map(|i| TimeSpan::new(i as f64 * third + 2.0, i as f64 * third + 10.0)).collect(),
        overlay_kinds: vec![OverlayKind::Scorecard, OverlayKind::AdBanner],
        noise_sigma: 4.0,
        ..Default::default()
    };
    let game = generate_game(&spec).expect("valid spec");
    let (reel, _) = make_highlight(&game, &spec).expect("segments inside the game");
    (game, reel)
}
