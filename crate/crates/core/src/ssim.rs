//! Single-scale and multi-scale structural similarity on grayscale frames.
//!
//! Scores use a normalized Gaussian window evaluated at valid positions only
//! (no border padding). The multi-scale variant follows the usual
//! construction: contrast-structure terms from every level of a 2x2
//! mean-pool pyramid, luminance from the coarsest level, each raised to its
//! scale weight.
//!
//! Matching workloads compare one frame against many others, so the
//! per-frame statistics (local means and variances at every pyramid level)
//! can be computed once with [`Comparator::prepare`] and reused. Only the
//! cross term is then evaluated per pair.

use crate::types::GrayFrame;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsimError {
    #[error("frame dimensions differ: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch { a_width: usize, a_height: usize, b_width: usize, b_height: usize },
    #[error("frame {width}x{height} is smaller than the required {required}px")]
    FrameTooSmall { width: usize, height: usize, required: usize },
    #[error("invalid SSIM parameters: {0}")]
    InvalidParams(String),
}

/// Canonical multi-scale weights for five pyramid levels. They sum to
/// 1.0001; [`SsimParams::default`] rescales them to sum to one.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    pub window_size: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub scale_weights: Vec<f64>,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window_size: 11,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
            scale_weights: {
                let total: f64 = MS_SSIM_WEIGHTS.iter().sum();
                MS_SSIM_WEIGHTS.iter().map(|w| w / total).collect()
            },
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<(), SsimError> {
        let bad = |m: &str| Err(SsimError::InvalidParams(m.to_string()));
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return bad("window_size must be odd and at least 3");
        }
        if !(self.gaussian_sigma > 0.0) {
            return bad("gaussian_sigma must be positive");
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return bad("k1 and k2 must be positive");
        }
        if !(self.dynamic_range > 0.0) {
            return bad("dynamic_range must be positive");
        }
        if self.scale_weights.is_empty() || self.scale_weights.iter().any(|w| !(*w > 0.0)) {
            return bad("scale weights must be positive");
        }
        let sum: f64 = self.scale_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return bad("scale weights must sum to 1");
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn gaussian_taps(&self) -> Vec<f64> {
        let r = (self.window_size / 2) as f64;
        let s2 = 2.0 * self.gaussian_sigma * self.gaussian_sigma;
        let mut taps: Vec<f64> = (0..self.window_size)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / s2).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        taps
    }

    /// Largest usable pyramid depth for a frame, capped by the weight count.
    pub fn feasible_levels(&self, width: usize, height: usize) -> usize {
        let min_dim = width.min(height);
        let mut levels = 0;
        while levels < self.scale_weights.len() && min_dim >= self.window_size << levels {
            levels += 1;
        }
        levels
    }
}

/// Which similarity score the matcher computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    MsSsim,
    Single,
}

#[derive(Debug, Clone)]
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_frame(f: &GrayFrame) -> Plane {
        Plane {
            width: f.width(),
            height: f.height(),
            data: f.pixels().iter().map(|&p| p as f64).collect(),
        }
    }

    fn downsample(&self) -> Plane {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let r0 = &self.data[2 * y * self.width..];
            let r1 = &self.data[(2 * y + 1) * self.width..];
            for x in 0..w {
                data.push(0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]));
            }
        }
        Plane { width: w, height: h, data }
    }
}

#[derive(Debug, Clone)]
struct Level {
    plane: Plane,
    mu: Vec<f64>,
    var: Vec<f64>,
}

/// Per-frame statistics for repeated comparisons.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    width: usize,
    height: usize,
    levels: Vec<Level>,
}

impl PreparedFrame {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }
}

/// Horizontal then vertical valid-mode convolution of `src` (w x h).
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let ow = w + 1 - n;
    let oh = h + 1 - n;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * ow..(y + 1) * ow];
        for (k, &t) in taps.iter().enumerate() {
            for (o, &s) in out.iter_mut().zip(&row[k..k + ow]) {
                *o += t * s;
            }
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        let dst = &mut out[y * ow..(y + 1) * ow];
        for (k, &t) in taps.iter().enumerate() {
            let src_row = &tmp[(y + k) * ow..(y + k + 1) * ow];
            for (o, &s) in dst.iter_mut().zip(src_row) {
                *o += t * s;
            }
        }
    }
    out
}

/// Filtered cross product `G * (a.b)` without materializing `a.b`.
fn filter_cross(a: &[f64], b: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let ow = w + 1 - n;
    let oh = h + 1 - n;
    let mut prod_row = vec![0.0; w];
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let ra = &a[y * w..(y + 1) * w];
        let rb = &b[y * w..(y + 1) * w];
        for ((p, &x), &z) in prod_row.iter_mut().zip(ra).zip(rb) {
            *p = x * z;
        }
        let out = &mut tmp[y * ow..(y + 1) * ow];
        for (k, &t) in taps.iter().enumerate() {
            for (o, &s) in out.iter_mut().zip(&prod_row[k..k + ow]) {
                *o += t * s;
            }
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        let dst = &mut out[y * ow..(y + 1) * ow];
        for (k, &t) in taps.iter().enumerate() {
            let src_row = &tmp[(y + k) * ow..(y + k + 1) * ow];
            for (o, &s) in dst.iter_mut().zip(src_row) {
                *o += t * s;
            }
        }
    }
    out
}

/// Mean luminance and contrast-structure terms for one level.
struct LevelTerms {
    luminance: f64,
    contrast_structure: f64,
    ssim: f64,
}

/// Reusable SSIM engine with a fixed parameter set.
#[derive(Debug, Clone)]
pub struct Comparator {
    params: SsimParams,
    metric: Metric,
    taps: Vec<f64>,
    c1: f64,
    c2: f64,
}

impl Comparator {
    pub fn new(params: SsimParams, metric: Metric) -> Result<Self, SsimError> {
        params.validate()?;
        let taps = params.gaussian_taps();
        let c1 = params.c1();
        let c2 = params.c2();
        Ok(Comparator { params, metric, taps, c1, c2 })
    }

    pub fn params(&self) -> &SsimParams {
        &self.params
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    fn levels_for(&self, width: usize, height: usize) -> Result<usize, SsimError> {
        let required = self.params.window_size;
        if width < required || height < required {
            return Err(SsimError::FrameTooSmall { width, height, required });
        }
        Ok(match self.metric {
            Metric::Single => 1,
            Metric::MsSsim => self.params.feasible_levels(width, height),
        })
    }

    pub fn prepare(&self, frame: &GrayFrame) -> Result<PreparedFrame, SsimError> {
        let n_levels = self.levels_for(frame.width(), frame.height())?;
        let mut levels = Vec::with_capacity(n_levels);
        let mut plane = Plane::from_frame(frame);
        for i in 0..n_levels {
            if i > 0 {
                plane = plane.downsample();
            }
            let (w, h) = (plane.width, plane.height);
            let mu = filter_valid(&plane.data, w, h, &self.taps);
            let sq = filter_cross(&plane.data, &plane.data, w, h, &self.taps);
            let var = sq.iter().zip(&mu).map(|(s, m)| s - m * m).collect();
            levels.push(Level { plane: plane.clone(), mu, var });
        }
        Ok(PreparedFrame { width: frame.width(), height: frame.height(), levels })
    }

    fn level_terms(&self, a: &Level, b: &Level, need_luminance: bool) -> LevelTerms {
        let (w, h) = (a.plane.width, a.plane.height);
        let cross = filter_cross(&a.plane.data, &b.plane.data, w, h, &self.taps);
        let (c1, c2) = (self.c1, self.c2);
        let mut cs_sum = 0.0;
        let mut l_sum = 0.0;
        let mut ssim_sum = 0.0;
        for i in 0..cross.len() {
            let (ma, mb) = (a.mu[i], b.mu[i]);
            let cov = cross[i] - ma * mb;
            let cs = (2.0 * cov + c2) / (a.var[i] + b.var[i] + c2);
            cs_sum += cs;
            if need_luminance {
                let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                l_sum += l;
                ssim_sum += l * cs;
            }
        }
        let n = cross.len() as f64;
        LevelTerms { luminance: l_sum / n, contrast_structure: cs_sum / n, ssim: ssim_sum / n }
    }

    /// Similarity of two prepared frames under the configured metric.
    pub fn compare(&self, a: &PreparedFrame, b: &PreparedFrame) -> Result<f64, SsimError> {
        if a.width != b.width || a.height != b.height {
            return Err(SsimError::DimensionMismatch {
                a_width: a.width,
                a_height: a.height,
                b_width: b.width,
                b_height: b.height,
            });
        }
        debug_assert_eq!(a.levels.len(), b.levels.len());
        match self.metric {
            Metric::Single => {
                let t = self.level_terms(&a.levels[0], &b.levels[0], true);
                Ok(t.ssim.clamp(-1.0, 1.0))
            }
            Metric::MsSsim => {
                let n = a.levels.len();
                let weights = &self.params.scale_weights[..n];
                let total: f64 = weights.iter().sum();
                let mut score = 1.0;
                for (i, (la, lb)) in a.levels.iter().zip(&b.levels).enumerate() {
                    let w = weights[i] / total;
                    let coarsest = i + 1 == n;
                    let t = self.level_terms(la, lb, coarsest);
                    score *= t.contrast_structure.max(0.0).powf(w);
                    if coarsest {
                        score *= t.luminance.max(0.0).powf(w);
                    }
                }
                Ok(score.clamp(0.0, 1.0))
            }
        }
    }

    /// Prepares and compares in one call.
    pub fn score(&self, a: &GrayFrame, b: &GrayFrame) -> Result<f64, SsimError> {
        check_dims(a, b)?;
        self.compare(&self.prepare(a)?, &self.prepare(b)?)
    }
}

fn check_dims(a: &GrayFrame, b: &GrayFrame) -> Result<(), SsimError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(SsimError::DimensionMismatch {
            a_width: a.width(),
            a_height: a.height(),
            b_width: b.width(),
            b_height: b.height(),
        });
    }
    Ok(())
}

/// Mean SSIM over all valid window positions, clamped to `[-1, 1]`.
pub fn ssim_single(a: &GrayFrame, b: &GrayFrame, p: &SsimParams) -> Result<f64, SsimError> {
    Comparator::new(p.clone(), Metric::Single)?.score(a, b)
}

/// Multi-scale SSIM. Frames too small for every configured level use the
/// deepest feasible pyramid with renormalized weights.
pub fn ms_ssim(a: &GrayFrame, b: &GrayFrame, p: &SsimParams) -> Result<f64, SsimError> {
    Comparator::new(p.clone(), Metric::MsSsim)?.score(a, b)
}

/// 2x2 mean pool with round-half-up; odd trailing rows and columns are dropped.
pub fn downsample2x(f: &GrayFrame) -> Result<GrayFrame, SsimError> {
    if f.width() < 2 || f.height() < 2 {
        return Err(SsimError::FrameTooSmall { width: f.width(), height: f.height(), required: 2 });
    }
    let (w, h) = (f.width() / 2, f.height() / 2);
    Ok(GrayFrame::from_fn(w, h, |x, y| {
        let s = f.get(2 * x, 2 * y) as u32
            + f.get(2 * x + 1, 2 * y) as u32
            + f.get(2 * x, 2 * y + 1) as u32
            + f.get(2 * x + 1, 2 * y + 1) as u32;
        ((s + 2) / 4) as u8
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_frame(w: usize, h: usize, seed: u64) -> GrayFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayFrame::from_fn(w, h, |_, _| rng.random())
    }

    /// Direct per-window evaluation with explicit l, c, s terms.
    fn naive_ssim(a: &GrayFrame, b: &GrayFrame, p: &SsimParams) -> f64 {
        let taps = p.gaussian_taps();
        let n = p.window_size;
        let (c1, c2) = (p.c1(), p.c2());
        let c3 = c2 / 2.0;
        let mut total = 0.0;
        let mut count = 0usize;
        for oy in 0..=a.height() - n {
            for ox in 0..=a.width() - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let wgt = taps[i] * taps[j];
                        ma += wgt * a.get(ox + i, oy + j) as f64;
                        mb += wgt * b.get(ox + i, oy + j) as f64;
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let wgt = taps[i] * taps[j];
                        let da = a.get(ox + i, oy + j) as f64 - ma;
                        let db = b.get(ox + i, oy + j) as f64 - mb;
                        va += wgt * da * da;
                        vb += wgt * db * db;
                        cov += wgt * da * db;
                    }
                }
                let (sa, sb) = (va.sqrt(), vb.sqrt());
                let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                let c = (2.0 * sa * sb + c2) / (va + vb + c2);
                let s = (cov + c3) / (sa * sb + c3);
                total += l * c * s;
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn identity_is_one() {
        let p = SsimParams::default();
        let f = noise_frame(200, 180, 1);
        assert!((ssim_single(&f, &f, &p).unwrap() - 1.0).abs() < 1e-9);
        assert!((ms_ssim(&f, &f, &p).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_frames_are_identical() {
        let p = SsimParams::default();
        let f = GrayFrame::filled(32, 32, 128);
        assert!((ssim_single(&f, &f, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_vs_inverse_is_negative() {
        let p = SsimParams::default();
        let a = GrayFrame::from_fn(16, 16, |x, y| if (x + y) % 2 == 0 { 255 } else { 0 });
        let b = GrayFrame::from_fn(16, 16, |x, y| 255 - a.get(x, y));
        let fast = ssim_single(&a, &b, &p).unwrap();
        let slow = naive_ssim(&a, &b, &p);
        assert!(slow < 0.0);
        assert!(fast < 0.0);
        assert!((fast - slow).abs() < 1e-9);
    }

    #[test]
    fn matches_naive_window_oracle() {
        let p = SsimParams::default();
        for seed in 0..3 {
            let a = noise_frame(64, 64, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let b = GrayFrame::from_fn(64, 64, |x, y| {
                let n: i32 = rng.random_range(-30..=30);
                (a.get(x, y) as i32 + n).clamp(0, 255) as u8
            });
            let fast = ssim_single(&a, &b, &p).unwrap();
            let slow = naive_ssim(&a, &b, &p);
            assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = SsimParams::default();
        let a = GrayFrame::filled(32, 32, 0);
        let b = GrayFrame::filled(32, 33, 0);
        assert!(matches!(ssim_single(&a, &b, &p), Err(SsimError::DimensionMismatch { .. })));
        assert!(matches!(ms_ssim(&a, &b, &p), Err(SsimError::DimensionMismatch { .. })));
    }

    #[test]
    fn too_small() {
        let p = SsimParams::default();
        let a = GrayFrame::filled(10, 40, 0);
        assert!(matches!(ssim_single(&a, &a, &p), Err(SsimError::FrameTooSmall { .. })));
        assert!(matches!(ms_ssim(&a, &a, &p), Err(SsimError::FrameTooSmall { .. })));
    }

    #[test]
    fn level_fallback_and_renormalization() {
        let p = SsimParams::default();
        assert_eq!(p.feasible_levels(256, 144), 4);
        assert_eq!(p.feasible_levels(256, 176), 5);
        assert_eq!(p.feasible_levels(64, 64), 3);
        assert_eq!(p.feasible_levels(11, 11), 1);
        let a = noise_frame(64, 64, 3);
        let b = noise_frame(64, 64, 4);
        let s = ms_ssim(&a, &b, &p).unwrap();
        assert!((0.0..1.0).contains(&s));
    }

    #[test]
    fn params_validation() {
        let mut p = SsimParams::default();
        p.window_size = 10;
        assert!(p.validate().is_err());
        let mut p = SsimParams::default();
        p.scale_weights = vec![0.5, 0.4];
        assert!(p.validate().is_err());
        let mut p = SsimParams::default();
        p.scale_weights = vec![1.0, -0.0];
        assert!(p.validate().is_err());
    }

    #[test]
    fn downsample_examples() {
        let f = GrayFrame::filled(4, 4, 100);
        let d = downsample2x(&f).unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));
        assert!(d.pixels().iter().all(|&v| v == 100));

        let f = GrayFrame::new(2, 2, vec![0, 255, 255, 0]).unwrap();
        assert_eq!(downsample2x(&f).unwrap().pixels(), &[128]);

        let f = GrayFrame::filled(5, 5, 9);
        let d = downsample2x(&f).unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));

        assert!(downsample2x(&GrayFrame::filled(1, 4, 0)).is_err());
    }

    #[test]
    fn prepared_matches_direct() {
        let c = Comparator::new(SsimParams::default(), Metric::MsSsim).unwrap();
        let a = noise_frame(96, 64, 7);
        let b = noise_frame(96, 64, 8);
        let pa = c.prepare(&a).unwrap();
        let pb = c.prepare(&b).unwrap();
        assert_eq!(c.compare(&pa, &pb).unwrap(), ms_ssim(&a, &b, &SsimParams::default()).unwrap());
    }
}
