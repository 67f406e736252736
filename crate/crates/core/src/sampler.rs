//! Duration model for non-important moments.
//!
//! A Gamma distribution is fit to important-moment durations by maximum
//! likelihood. Sampled durations are then placed in the parts of a game
//! that contain no important moment.

use crate::extractor::{Label, MomentRecord};
use crate::types::TimeSpan;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampled durations are clamped to this range, in seconds.
pub const DURATION_CLAMP: (f64, f64) = (1.0, 300.0);
/// Gap kept between a placed span and any important span, in seconds.
pub const DEFAULT_MARGIN: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("cannot fit a Gamma distribution: {0}")]
    DegenerateData(String),
    #[error("{unplaced} duration(s) could not be placed ({} placed)", placed.len())]
    InfeasiblePlacement { placed: Vec<TimeSpan>, unplaced: usize },
    #[error("no moments to summarize")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = SamplerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    /// Seconds.
    pub scale: f64,
}

impl GammaParams {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

/// Digamma function.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln() - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Trigamma function.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv + 0.5 * inv2 + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

fn check_durations(durations: &[f64]) -> Result<(f64, f64)> {
    if durations.len() < 2 {
        return Err(SamplerError::DegenerateData("need at least two durations".into()));
    }
    if durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(SamplerError::DegenerateData("durations must be positive and finite".into()));
    }
    let n = durations.len() as f64;
    let mean = durations.iter().sum::<f64>() / n;
    let var = durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 || durations.iter().all(|d| *d == durations[0]) {
        return Err(SamplerError::DegenerateData("durations have zero variance".into()));
    }
    Ok((mean, var))
}

/// Method-of-moments estimate: `k = m^2 / v`, `theta = v / m`, using the
/// population variance.
pub fn moments_init(durations: &[f64]) -> Result<GammaParams> {
    let (mean, var) = check_durations(durations)?;
    Ok(GammaParams { shape: mean * mean / var, scale: var / mean })
}

/// Maximum-likelihood fit. Newton iterations on
/// `ln k - digamma(k) = ln(mean) - mean(ln x)` start from the
/// method-of-moments shape and stop once the step is below 1e-8.
pub fn fit_gamma_mle(durations: &[f64]) -> Result<GammaParams> {
    let init = moments_init(durations)?;
    let n = durations.len() as f64;
    let mean = durations.iter().sum::<f64>() / n;
    let s = mean.ln() - durations.iter().map(|d| d.ln()).sum::<f64>() / n;
    if !(s > 0.0) {
        return Err(SamplerError::DegenerateData("log-mean gap is not positive".into()));
    }
    let mut k = init.shape;
    for _ in 0..200 {
        let f = k.ln() - digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let mut next = k - f / df;
        if !(next > 0.0) {
            next = k / 2.0;
        }
        let step = (next - k).abs();
        k = next;
        if step < 1e-8 {
            break;
        }
    }
    if !k.is_finite() {
        return Err(SamplerError::DegenerateData("shape estimate diverged".into()));
    }
    Ok(GammaParams { shape: k, scale: mean / k })
}

/// One Gamma(shape, 1) draw by Marsaglia and Tsang's squeeze method.
fn standard_gamma(shape: f64, rng: &mut impl Rng) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.random();
        return standard_gamma(shape + 1.0, rng) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `n` unclamped Gamma draws, deterministic per seed.
pub fn sample_gamma(p: GammaParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| standard_gamma(p.shape, &mut rng) * p.scale).collect()
}

/// `n` Gamma draws clamped to [`DURATION_CLAMP`].
pub fn sample_durations(p: GammaParams, n: usize, seed: u64) -> Vec<f64> {
    let (lo, hi) = DURATION_CLAMP;
    sample_gamma(p, n, seed).into_iter().map(|d| d.clamp(lo, hi)).collect()
}

/// Order in which durations are assigned to gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PlacementOrder {
    #[default]
    LongestFirst,
    ShortestFirst,
}

/// Free intervals of `[0, g_duration]` at least `margin` away from every
/// important span.
pub fn free_gaps(g_duration: f64, important: &[TimeSpan], margin: f64) -> Result<Vec<TimeSpan>> {
    let mut spans = important.to_vec();
    spans.sort_by(|a, b| a.start.total_cmp(&b.start));
    for (i, s) in spans.iter().enumerate() {
        if !s.is_valid() || s.start < 0.0 || s.end > g_duration {
            return Err(SamplerError::InvalidInput(format!(
                "important span [{}, {}) outside [0, {g_duration}]",
                s.start, s.end
            )));
        }
        if i > 0 && spans[i - 1].end > s.start {
            return Err(SamplerError::InvalidInput("important spans overlap".into()));
        }
    }
    let mut gaps = Vec::new();
    let mut cursor = 0.0;
    for s in &spans {
        let end = s.start - margin;
        if end > cursor {
            gaps.push(TimeSpan::new(cursor, end));
        }
        cursor = s.end + margin;
    }
    if g_duration > cursor {
        gaps.push(TimeSpan::new(cursor, g_duration));
    }
    Ok(gaps)
}

/// Places one span per duration inside the gaps around `important`.
///
/// Durations are assigned to gaps in the given order; each goes to a gap
/// with enough remaining room, chosen with probability proportional to the
/// room left over. Within a gap the assigned spans are shuffled and the
/// slack is split by uniform spacings, so a lone span's start is uniform
/// over its feasible offsets. Returned spans are sorted by start.
pub fn place_with_order(
    g_duration: f64,
    important: &[TimeSpan],
    durations: &[f64],
    seed: u64,
    margin: f64,
    order: PlacementOrder,
) -> Result<Vec<TimeSpan>> {
    if durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(SamplerError::InvalidInput("durations must be positive".into()));
    }
    let gaps = free_gaps(g_duration, important, margin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted: Vec<f64> = durations.to_vec();
    match order {
        PlacementOrder::LongestFirst => sorted.sort_by(|a, b| b.total_cmp(a)),
        PlacementOrder::ShortestFirst => sorted.sort_by(|a, b| a.total_cmp(b)),
    }
    let mut room: Vec<f64> = gaps.iter().map(|g| g.duration()).collect();
    let mut assigned: Vec<Vec<f64>> = vec![Vec::new(); gaps.len()];
    let mut unplaced = 0;
    for d in sorted {
        // tolerance for durations that exactly tile a gap
        let feasible: Vec<usize> = (0..gaps.len()).filter(|&i| room[i] + 1e-9 >= d).collect();
        if feasible.is_empty() {
            unplaced += 1;
            continue;
        }
        let weights: Vec<f64> = feasible.iter().map(|&i| (room[i] - d).max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = *feasible.last().expect("non-empty");
            for (&i, &w) in feasible.iter().zip(&weights) {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            feasible[rng.random_range(0..feasible.len())]
        };
        room[pick] -= d;
        assigned[pick].push(d);
    }
    let mut placed = Vec::new();
    for (gap, mut items) in gaps.iter().zip(assigned) {
        if items.is_empty() {
            continue;
        }
        items.shuffle(&mut rng);
        let slack = (gap.duration() - items.iter().sum::<f64>()).max(0.0);
        let mut cuts: Vec<f64> = (0..items.len()).map(|_| rng.random::<f64>() * slack).collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        let mut cursor = gap.start;
        let mut prev_cut = 0.0;
        for (d, cut) in items.into_iter().zip(cuts) {
            cursor += cut - prev_cut;
            prev_cut = cut;
            let end = (cursor + d).min(gap.end);
            placed.push(TimeSpan::new(cursor, end));
            cursor = end;
        }
    }
    placed.sort_by(|a, b| a.start.total_cmp(&b.start));
    if unplaced > 0 {
        return Err(SamplerError::InfeasiblePlacement { placed, unplaced });
    }
    Ok(placed)
}

/// Longest-first placement with the default 1 s margin.
pub fn place_nonimportant(
    g_duration: f64,
    important: &[TimeSpan],
    durations: &[f64],
    seed: u64,
) -> Result<Vec<TimeSpan>> {
    place_with_order(g_duration, important, durations, seed, DEFAULT_MARGIN, PlacementOrder::LongestFirst)
}

/// Per-game generator seed.
pub fn game_seed(seed: u64, game_id: &str) -> u64 {
    // FNV-1a keeps the derivation stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in game_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Video,
    Audio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSummary {
    pub label: Label,
    pub modality: Modality,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, min and max duration per label and modality.
pub fn duration_summary(moments: &[MomentRecord]) -> Result<Vec<DurationSummary>> {
    if moments.is_empty() {
        return Err(SamplerError::EmptyInput);
    }
    let mut out = Vec::new();
    for label in [Label::Important, Label::NonImportant] {
        for modality in [Modality::Video, Modality::Audio] {
            let d: Vec<f64> = moments
                .iter()
                .filter(|m| m.label == label)
                .map(|m| match modality {
                    Modality::Video => m.video_span.duration(),
                    Modality::Audio => m.audio_span.duration(),
                })
                .collect();
            if d.is_empty() {
                continue;
            }
            out.push(DurationSummary {
                label,
                modality,
                count: d.len(),
                mean: d.iter().sum::<f64>() / d.len() as f64,
                min: d.iter().copied().fold(f64::INFINITY, f64::min),
                max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok(out)
}
