//! Reference implementations used as test oracles. Each one is written in
//! the most literal form available, independent of the optimized code.

#![allow(dead_code)]

use moments_core::analysis::LogitRecord;
use moments_core::media::MemoryVideo;
use moments_core::ssim::{Comparator, Metric, SsimParams};
use moments_core::synth::{generate_game, make_highlight, OverlayKind, SynthSpec};
use moments_core::{FrameSpan, GrayFrame, TimeSpan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn noise_frame(w: usize, h: usize, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayFrame::from_fn(w, h, |_, _| rng.random())
}

/// A smooth random image with texture at several scales.
pub fn textured_frame(w: usize, h: usize, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64)> =
        (0..6).map(|_| (rng.random_range(0.02..0.4), rng.random_range(0.02..0.4), rng.random_range(0.0..6.3))).collect();
    GrayFrame::from_fn(w, h, |x, y| {
        let v: f64 = waves.iter().map(|(fx, fy, ph)| (fx * x as f64 + fy * y as f64 + ph).sin()).sum();
        (128.0 + 20.0 * v + rng.random_range(-8.0..8.0)).clamp(0.0, 255.0) as u8
    })
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

pub struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn of(f: &GrayFrame) -> Plane {
        Plane { w: f.width(), h: f.height(), data: f.pixels().iter().map(|&p| p as f64).collect() }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    pub fn half(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let s = self.at(2 * x, 2 * y) + self.at(2 * x + 1, 2 * y) + self.at(2 * x, 2 * y + 1)
                    + self.at(2 * x + 1, 2 * y + 1);
                data.push(s / 4.0);
            }
        }
        Plane { w, h, data }
    }
}

fn gaussian(p: &SsimParams) -> Vec<f64> {
    let n = p.window_size;
    let c = (n / 2) as f64;
    let raw: Vec<f64> = (0..n).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * p.gaussian_sigma.powi(2))).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Mean luminance, contrast, structure, and l*c*s over every window
/// position, computed window by window.
pub struct WindowMeans {
    pub l: f64,
    pub cs: f64,
    pub ssim: f64,
}

pub fn window_means(a: &Plane, b: &Plane, p: &SsimParams) -> WindowMeans {
    let g = gaussian(p);
    let n = p.window_size;
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let c3 = c2 / 2.0;
    let (mut sl, mut scs, mut sss, mut count) = (0.0, 0.0, 0.0, 0.0);
    for oy in 0..=a.h - n {
        for ox in 0..=a.w - n {
            let (mut ma, mut mb) = (0.0, 0.0);
            for j in 0..n {
                for i in 0..n {
                    ma += g[i] * g[j] * a.at(ox + i, oy + j);
                    mb += g[i] * g[j] * b.at(ox + i, oy + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..n {
                for i in 0..n {
                    let wgt = g[i] * g[j];
                    let da = a.at(ox + i, oy + j) - ma;
                    let db = b.at(ox + i, oy + j) - mb;
                    va += wgt * da * da;
                    vb += wgt * db * db;
                    cov += wgt * da * db;
                }
            }
            let (sa, sb) = (va.sqrt(), vb.sqrt());
            let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            let c = (2.0 * sa * sb + c2) / (va + vb + c2);
            let s = (cov + c3) / (sa * sb + c3);
            sl += l;
            scs += c * s;
            sss += l * c * s;
            count += 1.0;
        }
    }
    WindowMeans { l: sl / count, cs: scs / count, ssim: sss / count }
}

pub fn oracle_ssim(a: &GrayFrame, b: &GrayFrame, p: &SsimParams) -> f64 {
    window_means(&Plane::of(a), &Plane::of(b), p).ssim
}

/// Product over pyramid levels of `cs^w`, times `l^w` at the coarsest level.
pub fn oracle_ms_ssim(a: &GrayFrame, b: &GrayFrame, p: &SsimParams) -> f64 {
    let mut levels = 0;
    while levels < p.scale_weights.len() && a.width().min(a.height()) >= p.window_size * (1 << levels) {
        levels += 1;
    }
    let total: f64 = p.scale_weights[..levels].iter().sum();
    let (mut pa, mut pb) = (Plane::of(a), Plane::of(b));
    let mut score = 1.0;
    for j in 0..levels {
        if j > 0 {
            pa = pa.half();
            pb = pb.half();
        }
        let m = window_means(&pa, &pb, p);
        let w = p.scale_weights[j] / total;
        score *= m.cs.max(0.0).powf(w);
        if j + 1 == levels {
            score *= m.l.max(0.0).powf(w);
        }
    }
    score.clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

/// Exhaustive argmax over all G frames for every H frame: `(g, score)`,
/// lowest G index on ties.
pub fn exhaustive_matches(h: &MemoryVideo, g: &MemoryVideo, params: &SsimParams) -> (Vec<(u64, f64)>, u64) {
    let cmp = Comparator::new(params.clone(), Metric::MsSsim).unwrap();
    let gp: Vec<_> = g.frames().iter().map(|f| cmp.prepare(f).unwrap()).collect();
    let mut evals = 0;
    let out = h
        .frames()
        .iter()
        .map(|hf| {
            let hp = cmp.prepare(hf).unwrap();
            let mut best = (0u64, f64::NEG_INFINITY);
            for (j, gf) in gp.iter().enumerate() {
                let s = cmp.compare(&hp, gf).unwrap();
                evals += 1;
                if s > best.1 {
                    best = (j as u64, s);
                }
            }
            best
        })
        .collect();
    (out, evals)
}

pub struct SynthPair {
    pub spec: SynthSpec,
    pub game: MemoryVideo,
    pub reel: MemoryVideo,
    pub truth: Vec<FrameSpan>,
}

/// G of 60 s at 5 fps with one or more highlight segments, Scorecard and
/// AdBanner overlays and luma noise.
pub fn synth_pair(seed: u64, segments: Vec<TimeSpan>, noise_sigma: f64) -> SynthPair {
    let spec = SynthSpec {
        seed,
        highlight_segments: segments,
        overlay_kinds: vec![OverlayKind::Scorecard, OverlayKind::AdBanner],
        noise_sigma,
        ..Default::default()
    };
    let game = generate_game(&spec).unwrap();
    let (reel, truth) = make_highlight(&game, &spec).unwrap();
    SynthPair { spec, game, reel, truth }
}

/// Three 10 s segments at seed-dependent offsets inside a 60 s game.
pub fn three_segments(seed: u64) -> Vec<TimeSpan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let a = rng.random_range(1.0..5.0f64);
    let b = rng.random_range(a + 13.0..a + 18.0);
    let c = rng.random_range(b + 13.0..(b + 18.0).min(49.0));
    let q = |t: f64| (t * 5.0).round() / 5.0;
    vec![TimeSpan::new(q(a), q(a) + 10.0), TimeSpan::new(q(b), q(b) + 10.0), TimeSpan::new(q(c), q(c) + 10.0)]
}

// ---------------------------------------------------------------------------
// MFCC
// ---------------------------------------------------------------------------

/// Scalar MFCC pipeline with a direct DFT, returning the mean over frames.
pub fn mfcc_reference(x: &[f64], sr: u32) -> Vec<f64> {
    let srf = sr as f64;
    let flen = (0.025 * srf).round() as usize;
    let hop = (0.010 * srf).round() as usize;
    let mut nfft = 1;
    while nfft < flen {
        nfft *= 2;
    }
    let mut y = vec![x[0]];
    for i in 1..x.len() {
        y.push(x[i] - 0.97 * x[i - 1]);
    }
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let imel = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let hi = mel(srf / 2.0);
    let pts: Vec<f64> = (0..28).map(|i| imel(hi * i as f64 / 27.0)).collect();
    let n_frames = 1 + (x.len() - flen) / hop;
    let mut acc = [0.0; 20];
    for f in 0..n_frames {
        let frame: Vec<f64> = (0..flen)
            .map(|n| y[f * hop + n] * (0.54 - 0.46 * (2.0 * PI * n as f64 / (flen as f64 - 1.0)).cos()))
            .collect();
        let mag: Vec<f64> = (0..=nfft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * n) as f64 / nfft as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let mut logmel = Vec::new();
        for m in 0..26 {
            let mut e = 0.0;
            for (k, mk) in mag.iter().enumerate() {
                let fk = k as f64 * srf / nfft as f64;
                let wt = if fk > pts[m] && fk < pts[m + 1] {
                    (fk - pts[m]) / (pts[m + 1] - pts[m])
                } else if fk >= pts[m + 1] && fk < pts[m + 2] {
                    (pts[m + 2] - fk) / (pts[m + 2] - pts[m + 1])
                } else {
                    0.0
                };
                e += wt * mk;
            }
            logmel.push(e.max(1e-10).ln());
        }
        for (k, a) in acc.iter_mut().enumerate() {
            let norm = if k == 0 { (1.0 / 26.0f64).sqrt() } else { (2.0 / 26.0f64).sqrt() };
            let c: f64 = (0..26).map(|n| logmel[n] * (PI * k as f64 * (n as f64 + 0.5) / 26.0).cos()).sum();
            *a += norm * c;
        }
    }
    acc.iter().map(|v| v / n_frames as f64).collect()
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Fraction of (positive, negative) pairs ranked correctly, ties as half.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

/// Contribution by walking the combination names: every name mentioning
/// the modality letter counts positively, every other name negatively.
pub fn contribution_by_names(r: &LogitRecord, letter: char, names: &[&str]) -> f64 {
    let mut total = 0.0;
    for name in names {
        let entry = r.entries.iter().find(|(c, _)| {
            let mut a: Vec<char> = c.to_string().chars().collect();
            let mut b: Vec<char> = name.chars().collect();
            a.sort();
            b.sort();
            a == b
        });
        let (_, e) = entry.expect("combination present");
        let dz = e.z_true - e.z_false;
        total += if name.contains(letter) { dz } else { -dz };
    }
    total
}

pub const ALL_COMBO_NAMES: [&str; 7] = ["A", "L", "V", "AL", "AV", "LV", "ALV"];
