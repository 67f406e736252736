//! Procedural game footage and spliced highlight reels with known ground
//! truth, so localization can be checked without licensed broadcasts.
//!
//! A game frame is a sum of drifting sinusoidal gratings, a slowly moving
//! luminance gradient and a few drifting discs. Every grating advances its
//! phase at its own rate, drawn from a zero-mean normal distribution whose
//! spread is `pattern_speed`, so frame-to-frame correlation decays smoothly
//! with the time lag and the footage never repeats.

use crate::media::{write_y4m, MediaError, MemoryVideo};
use crate::types::{FrameSpan, GrayFrame, Rational, TimeSpan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;
use thiserror::Error;

/// Grating phase-rate spread (rad/s) that puts the similarity of frames
/// 0.4 s apart just above 0.8 and of frames 1 s apart well below it.
pub const DEFAULT_PATTERN_SPEED: f64 = 0.8;

const GRATINGS: usize = 48;
const DISCS: usize = 3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("segment [{start:.3}, {end:.3}) is outside the game or overlaps another")]
    SpanOutOfRange { start: f64, end: f64 },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OverlayKind {
    Scorecard,
    AdBanner,
    Watermark,
}

impl OverlayKind {
    /// Rectangle as fractions of width and height: (x0, y0, x1, y1), and fill.
    fn region(self) -> ([f64; 4], u8) {
        match self {
            OverlayKind::Scorecard => ([0.04, 0.05, 0.30, 0.15], 24),
            OverlayKind::AdBanner => ([0.10, 0.84, 0.90, 0.92], 226),
            OverlayKind::Watermark => ([0.82, 0.05, 0.96, 0.13], 200),
        }
    }

    fn pixel_rect(self, w: usize, h: usize) -> (usize, usize, usize, usize) {
        let ([x0, y0, x1, y1], _) = self.region();
        let px = |f: f64, n: usize| ((f * n as f64).round() as usize).min(n);
        (px(x0, w), px(y0, h), px(x1, w), px(y1, h))
    }

    /// Fraction of the frame the overlay covers.
    pub fn area_fraction(self, w: usize, h: usize) -> f64 {
        let (x0, y0, x1, y1) = self.pixel_rect(w, h);
        ((x1 - x0) * (y1 - y0)) as f64 / (w * h) as f64
    }

    pub fn apply(self, frame: &mut GrayFrame) {
        let (x0, y0, x1, y1) = self.pixel_rect(frame.width(), frame.height());
        let (_, fill) = self.region();
        for y in y0..y1 {
            for x in x0..x1 {
                frame.set(x, y, fill);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    /// Game length in seconds.
    pub g_duration: f64,
    pub fps: u32,
    pub width: usize,
    pub height: usize,
    /// Highlight segments in game time, in reel order.
    pub highlight_segments: Vec<TimeSpan>,
    pub overlay_kinds: Vec<OverlayKind>,
    /// Standard deviation of additive luma noise on highlight frames.
    pub noise_sigma: f64,
    pub pattern_speed: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            g_duration: 60.0,
            fps: 5,
            width: 96,
            height: 64,
            highlight_segments: Vec::new(),
            overlay_kinds: Vec::new(),
            noise_sigma: 0.0,
            pattern_speed: DEFAULT_PATTERN_SPEED,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=30).contains(&self.fps) {
            return Err(SynthError::InvalidSpec("fps must lie in [1, 30]".into()));
        }
        if !(self.g_duration > 0.0) || self.width == 0 || self.height == 0 {
            return Err(SynthError::InvalidSpec("empty game".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.pattern_speed >= 0.0) {
            return Err(SynthError::InvalidSpec("noise and speed must be non-negative".into()));
        }
        let total: f64 = self.overlay_kinds.iter().map(|k| k.area_fraction(self.width, self.height)).sum();
        if total > 0.15 {
            return Err(SynthError::InvalidSpec(format!("overlays cover {:.1}% of the frame", total * 100.0)));
        }
        Ok(())
    }

    pub fn frame_rate(&self) -> Rational {
        Rational::integer(self.fps)
    }

    pub fn frame_count(&self) -> u64 {
        (self.g_duration * self.fps as f64).round() as u64
    }

    /// Ground-truth frame spans of the highlight segments.
    pub fn segment_frames(&self) -> Result<Vec<FrameSpan>> {
        let n = self.frame_count();
        let f = self.fps as f64;
        let spans: Vec<FrameSpan> = self
            .highlight_segments
            .iter()
            .map(|s| FrameSpan::new((s.start * f).round() as u64, (s.end * f).round() as u64))
            .collect();
        let mut sorted = spans.clone();
        sorted.sort();
        for (i, s) in sorted.iter().enumerate() {
            let bad = s.is_empty() || s.end > n || (i > 0 && sorted[i - 1].end > s.start);
            if bad {
                let t = s.to_time(self.frame_rate());
                return Err(SynthError::SpanOutOfRange { start: t.start, end: t.end });
            }
        }
        Ok(spans)
    }
}

struct Grating {
    ex: Vec<(f64, f64)>,
    ey: Vec<(f64, f64)>,
    omega: f64,
    phase: f64,
    amp: f64,
}

struct Disc {
    center: [(f64, f64, f64); 2],
    radius: f64,
    level: f64,
}

/// Deterministic procedural scene.
struct Scene {
    width: usize,
    height: usize,
    gratings: Vec<Grating>,
    discs: Vec<Disc>,
    gradient_rate: f64,
}

impl Scene {
    fn new(spec: &SynthSpec) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_5ca1_ab1e);
        let (w, h) = (spec.width, spec.height);
        let scale = w.min(h) as f64;
        let speed = Normal::new(0.0, spec.pattern_speed.max(1e-12)).expect("finite spread");
        let gratings = (0..GRATINGS)
            .map(|_| {
                let theta = rng.random_range(0.0..TAU);
                let wavelength = scale * rng.random_range(0.07..0.45);
                let k = TAU / wavelength;
                let (kx, ky) = (k * theta.cos(), k * theta.sin());
                Grating {
                    ex: (0..w).map(|x| ((kx * x as f64).cos(), (kx * x as f64).sin())).collect(),
                    ey: (0..h).map(|y| ((ky * y as f64).cos(), (ky * y as f64).sin())).collect(),
                    omega: speed.sample(&mut rng),
                    phase: rng.random_range(0.0..TAU),
                    amp: rng.random_range(0.5..1.0),
                }
            })
            .collect::<Vec<_>>();
        let norm: f64 = gratings.iter().map(|g| g.amp * g.amp).sum::<f64>().sqrt();
        let gratings = gratings
            .into_iter()
            .map(|g| Grating { amp: g.amp * 40.0 / norm, ..g })
            .collect();
        let discs = (0..DISCS)
            .map(|_| {
                let mut axis = || {
                    (
                        rng.random_range(0.2..0.8),
                        rng.random_range(0.15..0.35),
                        rng.random_range(0.05..0.2) * spec.pattern_speed.max(0.1),
                    )
                };
                Disc {
                    center: [axis(), axis()],
                    radius: scale * rng.random_range(0.06..0.12),
                    level: if rng.random_bool(0.5) { 45.0 } else { -45.0 },
                }
            })
            .collect();
        Scene { width: w, height: h, gratings, discs, gradient_rate: 0.03 * spec.pattern_speed }
    }

    fn render(&self, t: f64) -> GrayFrame {
        let (w, h) = (self.width, self.height);
        let mut acc = vec![128.0; w * h];
        for g in &self.gratings {
            let (c, s) = ((g.omega * t + g.phase).cos(), (g.omega * t + g.phase).sin());
            for (y, &(yc, ys)) in g.ey.iter().enumerate() {
                // row phasor = ey * e^{i(wt+phi)}
                let rr = g.amp * (yc * c - ys * s);
                let ri = g.amp * (yc * s + ys * c);
                let row = &mut acc[y * w..(y + 1) * w];
                for (v, &(xc, xs)) in row.iter_mut().zip(&g.ex) {
                    *v += xc * rr - xs * ri;
                }
            }
        }
        let phase = TAU * self.gradient_rate * t;
        for y in 0..h {
            for x in 0..w {
                let u = x as f64 / w as f64 + 0.5 * y as f64 / h as f64;
                acc[y * w + x] += 18.0 * (TAU * 0.5 * u + phase).sin();
            }
        }
        for d in &self.discs {
            let pos = |(base, amp, rate): (f64, f64, f64), k: f64| base + amp * (TAU * rate * t + k).sin();
            let cx = pos(d.center[0], 0.0) * w as f64;
            let cy = pos(d.center[1], 1.3) * h as f64;
            let r2 = d.radius * d.radius;
            for y in 0..h {
                for x in 0..w {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    if dx * dx + dy * dy <= r2 {
                        acc[y * w + x] += d.level;
                    }
                }
            }
        }
        let px = acc.into_iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        GrayFrame::new(w, h, px).expect("frame size")
    }
}

/// Renders the full game. Identical specs give bitwise-identical frames.
pub fn generate_game(spec: &SynthSpec) -> Result<MemoryVideo> {
    spec.validate()?;
    let scene = Scene::new(spec);
    let fps = spec.fps as f64;
    let frames: Vec<GrayFrame> = (0..spec.frame_count())
        .into_par_iter()
        .map(|i| scene.render(i as f64 / fps))
        .collect();
    Ok(MemoryVideo::new(format!("synth-game-{}", spec.seed), spec.frame_rate(), frames))
}

/// Splices the spec's segments (in listed order) into a highlight reel,
/// stamps overlays and adds luma noise. Returns the reel and the exact G
/// frame spans it was cut from.
pub fn make_highlight(game: &MemoryVideo, spec: &SynthSpec) -> Result<(MemoryVideo, Vec<FrameSpan>)> {
    spec.validate()?;
    let spans = spec.segment_frames()?;
    if let Some(s) = spans.iter().find(|s| s.end > game.frames().len() as u64) {
        let t = s.to_time(spec.frame_rate());
        return Err(SynthError::SpanOutOfRange { start: t.start, end: t.end });
    }
    let sources: Vec<u64> = spans.iter().flat_map(|s| s.start..s.end).collect();
    let frames: Vec<GrayFrame> = sources
        .par_iter()
        .enumerate()
        .map(|(k, &gi)| {
            let mut f = game.frames()[gi as usize].clone();
            for kind in &spec.overlay_kinds {
                kind.apply(&mut f);
            }
            if spec.noise_sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ k as u64);
                for p in f.pixels_mut() {
                    let n: f64 = rng.sample(StandardNormal);
                    *p = (*p as f64 + spec.noise_sigma * n).round().clamp(0.0, 255.0) as u8;
                }
            }
            f
        })
        .collect();
    Ok((MemoryVideo::new(format!("synth-highlight-{}", spec.seed), spec.frame_rate(), frames), spans))
}

/// Ground truth written next to a synthetic pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    /// Source G frame spans in reel order.
    pub g_spans: Vec<FrameSpan>,
    pub g_time_spans: Vec<TimeSpan>,
    pub game_path: String,
    pub highlight_path: String,
}

/// Writes `game.y4m`, `highlight.y4m` and `ground_truth.json` into `dir`.
pub fn write_corpus(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<GroundTruth> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let game = generate_game(spec)?;
    let (reel, spans) = make_highlight(&game, spec)?;
    let game_path = dir.join("game.y4m");
    let highlight_path = dir.join("highlight.y4m");
    write_y4m(&game_path, spec.frame_rate(), game.frames())?;
    write_y4m(&highlight_path, spec.frame_rate(), reel.frames())?;
    let truth = GroundTruth {
        spec: spec.clone(),
        g_time_spans: spans.iter().map(|s| s.to_time(spec.frame_rate())).collect(),
        g_spans: spans,
        game_path: game_path.to_string_lossy().into_owned(),
        highlight_path: highlight_path.to_string_lossy().into_owned(),
    };
    std::fs::write(dir.join("ground_truth.json"), serde_json::to_string_pretty(&truth)?)?;
    Ok(truth)
}
