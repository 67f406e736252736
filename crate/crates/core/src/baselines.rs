//! Unimodal logistic-regression baselines over n-gram counts, MFCCs and
//! averaged frame embeddings.

use crate::media::Waveform;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use thiserror::Error;
use tracing::debug;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("corpus yields an empty vocabulary")]
    EmptyCorpus,
    #[error("signal has {samples} samples, one analysis frame needs {needed}")]
    TooShort { samples: usize, needed: usize },
    #[error("expected mono audio, got {0} channels")]
    NotMono(u16),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("inconsistent embedding dimension for {0}")]
    InconsistentDim(String),
    #[error("class {label} has {count} samples, at least 4 are needed")]
    TooFewPerClass { label: u8, count: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite feature value in row {0}")]
    NonFiniteFeature(usize),
    #[error("feature dimension {got} does not match model dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = BaselineError> = std::result::Result<T, E>;

impl From<std::io::Error> for BaselineError {
    fn from(e: std::io::Error) -> Self {
        BaselineError::Io(e.to_string())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f64>,
    pub row_ids: Vec<String>,
    pub feature_names: Option<Vec<String>>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, values: Vec<f64>, row_ids: Vec<String>, feature_names: Option<Vec<String>>) -> Result<Self> {
        let rows = row_ids.len();
        if values.len() != rows * dim {
            return Err(BaselineError::LengthMismatch(values.len(), rows * dim));
        }
        let unique: BTreeSet<&String> = row_ids.iter().collect();
        if unique.len() != rows {
            return Err(BaselineError::InvalidArgument("row ids are not unique".into()));
        }
        if let Some(n) = &feature_names {
            if n.len() != dim {
                return Err(BaselineError::LengthMismatch(n.len(), dim));
            }
        }
        Ok(FeatureMatrix { rows, dim, values, row_ids, feature_names })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows in the given id order.
    pub fn select(&self, ids: &[String]) -> Result<FeatureMatrix> {
        let index: HashMap<&str, usize> = self.row_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut values = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| BaselineError::InvalidArgument(format!("unknown row id {id}")))?;
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix::new(self.dim, values, ids.to_vec(), self.feature_names.clone())
    }
}

/// How features were produced, stored with a model for re-featurization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Ngram { n_lo: usize, n_hi: usize, min_df: usize, vocabulary: Vec<String> },
    Mfcc { with_std: bool },
    Embedding { dim: usize },
}

// ---------------------------------------------------------------------------
// N-grams
// ---------------------------------------------------------------------------

pub const VOCAB_CAP: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub n_lo: usize,
    pub n_hi: usize,
    pub min_df: usize,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig { n_lo: 1, n_hi: 4, min_df: 2 }
    }
}

/// Lowercased words with punctuation removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| !(c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())))
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn ngrams(tokens: &[String], lo: usize, hi: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in lo..=hi {
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Builds the vocabulary: n-grams with document frequency at least
/// `min_df`, capped at [`VOCAB_CAP`] by frequency, sorted lexicographically.
pub fn ngram_vocabulary(texts: &[String], cfg: NgramConfig) -> Result<Vec<String>> {
    if cfg.n_lo == 0 || cfg.n_lo > cfg.n_hi {
        return Err(BaselineError::InvalidArgument(format!("n-gram range {}..={}", cfg.n_lo, cfg.n_hi)));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for t in texts {
        let unique: BTreeSet<String> = ngrams(&tokenize(t), cfg.n_lo, cfg.n_hi).into_iter().collect();
        for g in unique {
            *df.entry(g).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, d)| *d >= cfg.min_df).collect();
    if kept.len() > VOCAB_CAP {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(VOCAB_CAP);
    }
    let mut vocab: Vec<String> = kept.into_iter().map(|(g, _)| g).collect();
    vocab.sort();
    if vocab.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    Ok(vocab)
}

/// Count features over a fixed vocabulary.
pub fn ngram_transform(ids: &[String], texts: &[String], vocab: &[String], cfg: NgramConfig) -> Result<FeatureMatrix> {
    if ids.len() != texts.len() {
        return Err(BaselineError::LengthMismatch(ids.len(), texts.len()));
    }
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let rows: Vec<Vec<f64>> = texts
        .par_iter()
        .map(|t| {
            let mut row = vec![0.0; vocab.len()];
            for g in ngrams(&tokenize(t), cfg.n_lo, cfg.n_hi) {
                if let Some(&j) = index.get(g.as_str()) {
                    row[j] += 1.0;
                }
            }
            row
        })
        .collect();
    FeatureMatrix::new(vocab.len(), rows.concat(), ids.to_vec(), Some(vocab.to_vec()))
}

pub fn ngram_features(ids: &[String], texts: &[String], cfg: NgramConfig) -> Result<(FeatureMatrix, FeatureSpec)> {
    if texts.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let vocab = ngram_vocabulary(texts, cfg)?;
    let x = ngram_transform(ids, texts, &vocab, cfg)?;
    let spec = FeatureSpec::Ngram { n_lo: cfg.n_lo, n_hi: cfg.n_hi, min_df: cfg.min_df, vocabulary: vocab };
    Ok((x, spec))
}

// ---------------------------------------------------------------------------
// MFCC
// ---------------------------------------------------------------------------

pub const N_MFCC: usize = 20;
pub const N_MELS: usize = 26;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Analysis frame length and hop in samples (25 ms and 10 ms).
pub fn frame_geometry(sample_rate: u32) -> (usize, usize) {
    let sr = sample_rate as f64;
    ((0.025 * sr).round() as usize, ((0.010 * sr).round() as usize).max(1))
}

/// Triangular filters spaced evenly on the mel scale between 0 Hz and
/// Nyquist, evaluated at the FFT bin frequencies. Returns `n_mels` rows of
/// `n_fft / 2 + 1` weights.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let sr = sample_rate as f64;
    let top = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect();
    let bins = n_fft / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sr / n_fft as f64;
                    if f > lo && f < mid {
                        (f - lo) / (mid - lo)
                    } else if f >= mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-frame MFCC matrix, one row of [`N_MFCC`] coefficients per frame.
pub fn mfcc_frames(samples: &[f64], sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    if sample_rate == 0 {
        return Err(BaselineError::InvalidArgument("sample rate is zero".into()));
    }
    let (frame_len, hop) = frame_geometry(sample_rate);
    if samples.len() < frame_len || frame_len < 2 {
        return Err(BaselineError::TooShort { samples: samples.len(), needed: frame_len.max(2) });
    }
    let emphasized: Vec<f64> = std::iter::once(samples[0])
        .chain(samples.windows(2).map(|w| w[1] - PRE_EMPHASIS * w[0]))
        .collect();
    let n_fft = frame_len.next_power_of_two();
    let window: Vec<f64> = (0..frame_len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (frame_len - 1) as f64).cos())
        .collect();
    let bank = mel_filterbank(N_MELS, n_fft, sample_rate);
    let dct = dct_matrix(N_MELS, N_MFCC);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_frames = 1 + (samples.len() - frame_len) / hop;

    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut out = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < frame_len { Complex::new(emphasized[start + i] * window[i], 0.0) } else { Complex::new(0.0, 0.0) };
        }
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect();
        let logmel: Vec<f64> = bank
            .iter()
            .map(|w| w.iter().zip(&mag).map(|(a, b)| a * b).sum::<f64>().max(LOG_FLOOR).ln())
            .collect();
        out.push(dct.iter().map(|row| row.iter().zip(&logmel).map(|(a, b)| a * b).sum()).collect());
    }
    Ok(out)
}

/// Orthonormal DCT-II rows `0..keep` for inputs of length `n`.
fn dct_matrix(n: usize, keep: usize) -> Vec<Vec<f64>> {
    (0..keep)
        .map(|k| {
            let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n)
                .map(|i| s * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect()
}

/// Mean MFCC vector over frames; with `with_std`, the per-coefficient
/// standard deviation is appended.
pub fn mfcc_features(w: &Waveform, with_std: bool) -> Result<Vec<f64>> {
    if w.channels != 1 {
        return Err(BaselineError::NotMono(w.channels));
    }
    let frames = mfcc_frames(&w.samples, w.sample_rate)?;
    let n = frames.len() as f64;
    let mean: Vec<f64> = (0..N_MFCC).map(|k| frames.iter().map(|f| f[k]).sum::<f64>() / n).collect();
    if !with_std {
        return Ok(mean);
    }
    let std = (0..N_MFCC).map(|k| (frames.iter().map(|f| (f[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt());
    Ok(mean.iter().copied().chain(std).collect())
}

// ---------------------------------------------------------------------------
// Frame embeddings
// ---------------------------------------------------------------------------

/// Averages per-frame vectors from JSONL lines
/// `{"moment_id": str, "frames": [[f, ...], ...]}`. Lines sharing an id
/// are pooled.
pub fn parse_embeddings(text: &str) -> Result<FeatureMatrix> {
    #[derive(Deserialize)]
    struct Line {
        moment_id: String,
        frames: Vec<Vec<f64>>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut acc: HashMap<String, (Vec<f64>, usize)> = HashMap::new();
    let mut dim: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line =
            serde_json::from_str(raw).map_err(|e| BaselineError::Parse { line: i + 1, reason: e.to_string() })?;
        for f in &line.frames {
            let d = *dim.get_or_insert(f.len());
            if f.len() != d || d == 0 {
                return Err(BaselineError::InconsistentDim(line.moment_id.clone()));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(BaselineError::Parse { line: i + 1, reason: "non-finite value".into() });
            }
            let entry = acc.entry(line.moment_id.clone()).or_insert_with(|| {
                order.push(line.moment_id.clone());
                (vec![0.0; d], 0)
            });
            entry.0.iter_mut().zip(f).for_each(|(a, b)| *a += b);
            entry.1 += 1;
        }
    }
    let dim = dim.ok_or(BaselineError::Parse { line: 0, reason: "no frames".into() })?;
    let mut values = Vec::with_capacity(order.len() * dim);
    for id in &order {
        let (sum, n) = &acc[id];
        values.extend(sum.iter().map(|s| s / *n as f64));
    }
    FeatureMatrix::new(dim, values, order, None)
}

pub fn avg_embedding_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    parse_embeddings(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Split and logistic regression
// ---------------------------------------------------------------------------

/// Stratified 3:1 split, deterministic per seed. Both halves keep the
/// input order.
pub fn split_3to1(ids: &[String], labels: &[u8], seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if ids.len() != labels.len() {
        return Err(BaselineError::LengthMismatch(ids.len(), labels.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; ids.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..ids.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 4 {
            return Err(BaselineError::TooFewPerClass { label: class, count: members.len() });
        }
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * 0.75).round() as usize;
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let pick = |want: bool| ids.iter().zip(&in_train).filter(|(_, &t)| t == want).map(|(s, _)| s.clone()).collect();
    Ok((pick(true), pick(false)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { l2: 1.0, max_iter: 500, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub feature_spec: Option<FeatureSpec>,
}

impl LogRegModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| BaselineError::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: LogRegModel =
            serde_json::from_str(&text).map_err(|e| BaselineError::Parse { line: 0, reason: e.to_string() })?;
        if m.weights.iter().chain([&m.bias]).any(|v| !v.is_finite()) {
            return Err(BaselineError::NonFiniteFeature(0));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    pub grad_inf_norm: f64,
    /// Loss after each accepted step, starting with the initial loss.
    pub loss_history: Vec<f64>,
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Regularized negative log-likelihood, summed over rows. The bias is not
/// penalized.
pub fn loss(x: &FeatureMatrix, y: &[u8], w: &[f64], b: f64, l2: f64) -> f64 {
    let nll: f64 = (0..x.rows)
        .map(|i| {
            let z = dot(x.row(i), w) + b;
            softplus(z) - y[i] as f64 * z
        })
        .sum();
    nll + 0.5 * l2 * dot(w, w)
}

/// Gradient of [`loss`]: weights followed by the bias.
pub fn gradient(x: &FeatureMatrix, y: &[u8], w: &[f64], b: f64, l2: f64) -> Vec<f64> {
    let mut g: Vec<f64> = w.iter().map(|wi| l2 * wi).collect();
    g.push(0.0);
    for i in 0..x.rows {
        let r = sigmoid(dot(x.row(i), w) + b) - y[i] as f64;
        for (gj, xj) in g.iter_mut().zip(x.row(i)) {
            *gj += r * xj;
        }
        g[x.dim] += r;
    }
    g
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full-batch gradient descent with Armijo backtracking, from zero.
pub fn train_logreg(x: &FeatureMatrix, y: &[u8], cfg: TrainConfig) -> Result<(LogRegModel, TrainReport)> {
    if x.rows != y.len() {
        return Err(BaselineError::LengthMismatch(x.rows, y.len()));
    }
    if !(cfg.l2 >= 0.0 && cfg.tol >= 0.0) {
        return Err(BaselineError::InvalidArgument("l2 and tol must be non-negative".into()));
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(BaselineError::InvalidArgument(format!("label {bad}")));
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(BaselineError::SingleClass);
    }
    if let Some(i) = (0..x.rows).find(|&i| x.row(i).iter().any(|v| !v.is_finite())) {
        return Err(BaselineError::NonFiniteFeature(i));
    }

    let mut w = vec![0.0; x.dim];
    let mut b = 0.0;
    let mut f = loss(x, y, &w, b, cfg.l2);
    let mut history = vec![f];
    let mut step = 1.0;
    let mut g = gradient(x, y, &w, b, cfg.l2);
    let inf = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut iterations = 0;
    let mut converged = inf(&g) < cfg.tol;
    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let gg = dot(&g, &g);
        let mut t = step;
        let (nw, nb, nf) = loop {
            let nw: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - t * gi).collect();
            let nb = b - t * g[x.dim];
            let nf = loss(x, y, &nw, nb, cfg.l2);
            if nf <= f - 0.5 * t * gg || t < 1e-20 {
                break (nw, nb, nf);
            }
            t *= 0.5;
        };
        if nf > f {
            // no descent possible at machine precision
            break;
        }
        w = nw;
        b = nb;
        f = nf;
        history.push(f);
        step = t * 2.0;
        g = gradient(x, y, &w, b, cfg.l2);
        converged = inf(&g) < cfg.tol;
    }
    debug!(iterations, converged, loss = f, "logistic regression trained");
    let report = TrainReport { iterations, converged, grad_inf_norm: inf(&g), loss_history: history };
    Ok((LogRegModel { weights: w, bias: b, l2: cfg.l2, feature_spec: None }, report))
}

/// Labels (1 when the probability is at least 0.5) and probabilities.
pub fn predict_logreg(m: &LogRegModel, x: &FeatureMatrix) -> Result<(Vec<u8>, Vec<f64>)> {
    if x.dim != m.weights.len() {
        return Err(BaselineError::DimMismatch { expected: m.weights.len(), got: x.dim });
    }
    let probs: Vec<f64> = (0..x.rows).map(|i| sigmoid(dot(x.row(i), &m.weights) + m.bias)).collect();
    Ok((probs.iter().map(|&p| u8::from(p >= 0.5)).collect(), probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn ngram_single_document() {
        let texts = vec!["The goal!".to_string()];
        let cfg = NgramConfig { n_lo: 1, n_hi: 2, min_df: 1 };
        let (x, spec) = ngram_features(&ids(1), &texts, cfg).unwrap();
        let names = x.feature_names.clone().unwrap();
        assert_eq!(names, vec!["goal", "the", "the goal"]);
        assert_eq!(x.values, vec![1.0, 1.0, 1.0]);
        assert!(matches!(spec, FeatureSpec::Ngram { .. }));
    }

    #[test]
    fn ngram_min_df_on_singleton() {
        let texts = vec!["one lonely document".to_string()];
        assert_eq!(ngram_features(&ids(1), &texts, NgramConfig::default()), Err(BaselineError::EmptyCorpus));
    }

    #[test]
    fn ngram_duplicates_give_identical_rows() {
        let texts = vec!["a b c".to_string(), "a b c".to_string(), "b c d".to_string()];
        let (x, _) = ngram_features(&ids(3), &texts, NgramConfig::default()).unwrap();
        assert_eq!(x.row(0), x.row(1));
    }

    #[test]
    fn mfcc_of_silence_is_constant() {
        let w = Waveform::mono(vec![0.0; 16000], 16000);
        let v = mfcc_features(&w, false).unwrap();
        let n = N_MELS as f64;
        assert!((v[0] - LOG_FLOOR.ln() * n / n.sqrt()).abs() < 1e-9);
        assert!(v[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn mfcc_errors() {
        assert!(matches!(
            mfcc_features(&Waveform::mono(vec![0.1; 100], 16000), false),
            Err(BaselineError::TooShort { .. })
        ));
        let stereo = Waveform { samples: vec![0.0; 32000], sample_rate: 16000, channels: 2 };
        assert_eq!(mfcc_features(&stereo, false), Err(BaselineError::NotMono(2)));
        let w = Waveform::mono(vec![0.5; 8000], 16000);
        assert_eq!(mfcc_features(&w, true).unwrap().len(), 40);
    }

    #[test]
    fn embeddings_average() {
        let x = parse_embeddings("{\"moment_id\":\"a\",\"frames\":[[1,2],[3,4]]}\n{\"moment_id\":\"b\",\"frames\":[[5,6]]}").unwrap();
        assert_eq!(x.row(0), &[2.0, 3.0]);
        assert_eq!(x.row(1), &[5.0, 6.0]);
        assert!(matches!(
            parse_embeddings("{\"moment_id\":\"a\",\"frames\":[[1,2],[3]]}"),
            Err(BaselineError::InconsistentDim(_))
        ));
    }

    #[test]
    fn split_is_stratified() {
        let n = 200;
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let (train, test) = split_3to1(&ids(n), &labels, 5).unwrap();
        assert_eq!((train.len(), test.len()), (150, 50));
        let pos = |v: &[String]| v.iter().filter(|s| s[1..].parse::<usize>().unwrap() % 2 == 1).count();
        assert_eq!((pos(&train), pos(&test)), (75, 25));
        assert_eq!(split_3to1(&ids(n), &labels, 5).unwrap(), (train, test));
        assert_eq!(
            split_3to1(&ids(7), &[0, 0, 0, 1, 1, 1, 1], 0),
            Err(BaselineError::TooFewPerClass { label: 0, count: 3 })
        );
    }

    #[test]
    fn zero_iterations_is_the_zero_model() {
        let x = FeatureMatrix::new(1, vec![-1.0, 1.0], ids(2), None).unwrap();
        let (m, rep) = train_logreg(&x, &[0, 1], TrainConfig { max_iter: 0, ..Default::default() }).unwrap();
        assert_eq!((m.weights[0], m.bias, rep.iterations), (0.0, 0.0, 0));
        let (labels, probs) = predict_logreg(&m, &x).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
        assert_eq!(labels, vec![1, 1]);
    }

    #[test]
    fn prediction_saturates_and_checks_dims() {
        let m = LogRegModel { weights: vec![1.0], bias: 0.0, l2: 1.0, feature_spec: None };
        let x = FeatureMatrix::new(1, vec![20.0], ids(1), None).unwrap();
        assert!(predict_logreg(&m, &x).unwrap().1[0] > 1.0 - 1e-8);
        let x2 = FeatureMatrix::new(2, vec![0.0, 0.0], ids(1), None).unwrap();
        assert_eq!(predict_logreg(&m, &x2), Err(BaselineError::DimMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn single_class_rejected() {
        let x = FeatureMatrix::new(1, vec![0.0, 1.0], ids(2), None).unwrap();
        assert_eq!(train_logreg(&x, &[1, 1], TrainConfig::default()).unwrap_err(), BaselineError::SingleClass);
    }
}
