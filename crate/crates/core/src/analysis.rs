//! Classification metrics with bootstrap intervals, and logit-difference
//! analyses over modality combinations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("only one class present")]
    OneClassOnly,
    #[error("only {valid} of {total} bootstrap resamples were defined")]
    TooFewValidResamples { valid: usize, total: usize },
    #[error("non-finite logit in {0}")]
    NonFinite(String),
    #[error("record {moment_id} lacks combination {combo}")]
    MissingCombination { moment_id: String, combo: String },
    #[error("no records in slice {0}")]
    EmptySlice(String),
    #[error("invalid combination {0:?}")]
    InvalidCombination(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

impl From<std::io::Error> for AnalysisError {
    fn from(e: std::io::Error) -> Self {
        AnalysisError::Io(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Confusion-matrix metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub const fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_binary(v: &[u8]) -> Result<()> {
    match v.iter().find(|&&x| x > 1) {
        Some(x) => Err(AnalysisError::InvalidArgument(format!("binary value expected, got {x}"))),
        None => Ok(()),
    }
}

pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(AnalysisError::Empty);
    }
    check_binary(preds)?;
    check_binary(labels)?;
    let mut c = ConfusionCounts::default();
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return 0.0;
    }
    (tp * tn - fp * fn_) / factors.iter().product::<f64>().sqrt()
}

pub fn accuracy(c: &ConfusionCounts) -> f64 {
    (c.tp + c.tn) as f64 / c.total() as f64
}

/// `2tp / (2tp + fp + fn)`; 0 when there are no positives at all.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let d = 2 * c.tp + c.fp + c.fn_;
    if d == 0 {
        return 0.0;
    }
    (2 * c.tp) as f64 / d as f64
}

/// Area under the ROC curve as the Mann-Whitney statistic, with tied
/// scores counted as half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch(scores.len(), labels.len()));
    }
    check_binary(labels)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AnalysisError::NonFinite("scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AnalysisError::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Resamples on which the statistic was defined.
    pub valid: usize,
    pub skipped: usize,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap over `n` items. `stat` receives the resampled
/// indices and returns `None` where the statistic is undefined. Resample
/// `i` draws from its own ChaCha stream, so results do not depend on
/// thread scheduling.
pub fn bootstrap<F>(n: usize, stat: F, b: usize, level: f64, seed: u64) -> Result<Interval>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if n == 0 {
        return Err(AnalysisError::Empty);
    }
    if b == 0 || !(level > 0.0 && level < 1.0) {
        return Err(AnalysisError::InvalidArgument(format!("resamples {b}, level {level}")));
    }
    let values: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            stat(&idx).filter(|v| v.is_finite())
        })
        .collect();
    let mut defined: Vec<f64> = values.into_iter().flatten().collect();
    let valid = defined.len();
    if 2 * valid < b {
        return Err(AnalysisError::TooFewValidResamples { valid, total: b });
    }
    defined.sort_by(|a, b| a.total_cmp(b));
    let alpha = (1.0 - level) / 2.0;
    Ok(Interval { lo: quantile(&defined, alpha), hi: quantile(&defined, 1.0 - alpha), valid, skipped: b - valid })
}

/// Bootstrap interval of a confusion-matrix metric over (pred, label) pairs.
pub fn bootstrap_ci(
    metric: fn(&ConfusionCounts) -> f64,
    preds: &[u8],
    labels: &[u8],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<Interval> {
    confusion(preds, labels)?;
    let stat = |idx: &[usize]| {
        let p: Vec<u8> = idx.iter().map(|&i| preds[i]).collect();
        let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        confusion(&p, &l).ok().map(|c| metric(&c))
    };
    bootstrap(preds.len(), stat, b, level, seed)
}

/// Bootstrap interval of ROC AUC; resamples with a single class are skipped.
pub fn bootstrap_auc(scores: &[f64], labels: &[u8], b: usize, level: f64, seed: u64) -> Result<Interval> {
    roc_auc(scores, labels)?;
    let stat = |idx: &[usize]| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        roc_auc(&s, &l).ok()
    };
    bootstrap(scores.len(), stat, b, level, seed)
}

/// One row of a plot-ready metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// MCC, accuracy and F1, plus ROC AUC when scores are given, each with a
/// bootstrap interval.
pub fn evaluate(
    preds: &[u8],
    labels: &[u8],
    scores: Option<&[f64]>,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    let c = confusion(preds, labels)?;
    type Metric = fn(&ConfusionCounts) -> f64;
    let metrics: [(&str, Metric); 3] = [("mcc", mcc), ("accuracy", accuracy), ("f1", f1)];
    let mut rows = Vec::new();
    for (name, m) in metrics {
        let ci = bootstrap_ci(m, preds, labels, b, level, seed)?;
        rows.push(MetricRow { metric: name.into(), value: m(&c), ci_lo: ci.lo, ci_hi: ci.hi });
    }
    if let Some(s) = scores {
        let value = roc_auc(s, labels)?;
        let ci = bootstrap_auc(s, labels, b, level, seed)?;
        rows.push(MetricRow { metric: "roc_auc".into(), value, ci_lo: ci.lo, ci_hi: ci.hi });
    }
    Ok(rows)
}

pub fn metric_rows_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("metric,value,ci_lo,ci_hi\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.metric, r.value, r.ci_lo, r.ci_hi));
    }
    out
}

// ---------------------------------------------------------------------------
// Modality combinations and logit differences
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    A,
    L,
    V,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::A, Modality::L, Modality::V];

    fn bit(self) -> u8 {
        match self {
            Modality::A => 1,
            Modality::L => 2,
            Modality::V => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Modality::A),
            "L" => Ok(Modality::L),
            "V" => Ok(Modality::V),
            _ => Err(AnalysisError::InvalidCombination(s.into())),
        }
    }
}

/// Non-empty subset of {A, L, V}, written in A-L-V order ("LV", "ALV").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Combo(u8);

impl Combo {
    pub fn from_bits(bits: u8) -> Option<Combo> {
        (1..=7).contains(&bits).then_some(Combo(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_unimodal(self) -> bool {
        self.len() == 1
    }

    pub fn single(m: Modality) -> Combo {
        Combo(m.bit())
    }

    /// All seven combinations.
    pub fn all() -> Vec<Combo> {
        (1..=7).map(Combo).collect()
    }

    pub fn parse(s: &str) -> Result<Combo> {
        let mut bits = 0u8;
        for ch in s.trim().chars() {
            let m = Modality::parse(&ch.to_string()).map_err(|_| AnalysisError::InvalidCombination(s.into()))?;
            if bits & m.bit() != 0 {
                return Err(AnalysisError::InvalidCombination(s.into()));
            }
            bits |= m.bit();
        }
        Combo::from_bits(bits).ok_or_else(|| AnalysisError::InvalidCombination(s.into()))
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in Modality::ALL {
            if self.contains(m) {
                write!(f, "{m:?}")?;
            }
        }
        Ok(())
    }
}

impl From<Combo> for String {
    fn from(c: Combo) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Combo {
    type Error = AnalysisError;

    fn try_from(s: String) -> Result<Self> {
        Combo::parse(&s)
    }
}

/// Logits for the ground-truth and the incorrect class. A bare number in
/// JSON is read as a precomputed difference (`z_false = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawEntry")]
pub struct LogitEntry {
    pub z_true: f64,
    pub z_false: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Pair { z_true: f64, z_false: f64 },
    Delta(f64),
}

impl From<RawEntry> for LogitEntry {
    fn from(r: RawEntry) -> Self {
        match r {
            RawEntry::Pair { z_true, z_false } => LogitEntry { z_true, z_false },
            RawEntry::Delta(d) => LogitEntry::from_delta(d),
        }
    }
}

impl LogitEntry {
    pub fn from_delta(dz: f64) -> Self {
        LogitEntry { z_true: dz, z_false: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub moment_id: String,
    pub ground_truth: u8,
    pub entries: BTreeMap<Combo, LogitEntry>,
}

impl LogitRecord {
    /// Builds a record from precomputed differences, e.g. `[("V", 3.81)]`.
    pub fn from_deltas(moment_id: &str, ground_truth: u8, deltas: &[(&str, f64)]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for &(c, dz) in deltas {
            entries.insert(Combo::parse(c)?, LogitEntry::from_delta(dz));
        }
        Ok(LogitRecord { moment_id: moment_id.into(), ground_truth, entries })
    }

    fn dz(&self, c: Combo) -> Result<f64> {
        let e = self.entries.get(&c).ok_or_else(|| AnalysisError::MissingCombination {
            moment_id: self.moment_id.clone(),
            combo: c.to_string(),
        })?;
        delta_z(e).map_err(|_| AnalysisError::NonFinite(format!("{}:{c}", self.moment_id)))
    }
}

pub fn delta_z(e: &LogitEntry) -> Result<f64> {
    if !(e.z_true.is_finite() && e.z_false.is_finite()) {
        return Err(AnalysisError::NonFinite("logit entry".into()));
    }
    Ok(e.z_true - e.z_false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slice {
    Im,
    Nim,
    All,
}

impl Slice {
    fn admits(self, r: &LogitRecord) -> bool {
        match self {
            Slice::Im => r.ground_truth == 1,
            Slice::Nim => r.ground_truth == 0,
            Slice::All => true,
        }
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slice::Im => "IM",
            Slice::Nim => "NIM",
            Slice::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub modality: Modality,
    pub slice: Slice,
    pub score: f64,
    pub n: usize,
    pub normalized: bool,
}

/// Sum of differences over combinations containing `m` minus the sum over
/// those without it. With `normalized`, each side is divided by its
/// combination count instead.
pub fn record_contribution(r: &LogitRecord, m: Modality, combos: &[Combo], normalized: bool) -> Result<f64> {
    let (mut inc, mut exc, mut n_inc, mut n_exc) = (0.0, 0.0, 0usize, 0usize);
    for &c in combos {
        let dz = r.dz(c)?;
        if c.contains(m) {
            inc += dz;
            n_inc += 1;
        } else {
            exc += dz;
            n_exc += 1;
        }
    }
    if normalized {
        if n_inc > 0 {
            inc /= n_inc as f64;
        }
        if n_exc > 0 {
            exc /= n_exc as f64;
        }
    }
    Ok(inc - exc)
}

/// Contribution of `m` summed over the records in `slice`.
pub fn contribution(
    records: &[LogitRecord],
    m: Modality,
    combos: &[Combo],
    slice: Slice,
    normalized: bool,
) -> Result<ContributionReport> {
    if combos.is_empty() {
        return Err(AnalysisError::InvalidArgument("empty combination set".into()));
    }
    let mut score = 0.0;
    let mut n = 0;
    for r in records.iter().filter(|r| slice.admits(r)) {
        score += record_contribution(r, m, combos, normalized)?;
        n += 1;
    }
    if n == 0 {
        return Err(AnalysisError::EmptySlice(slice.to_string()));
    }
    Ok(ContributionReport { modality: m, slice, score, n, normalized })
}

/// Combinations every record carries, in canonical order.
pub fn common_combos(records: &[LogitRecord]) -> Vec<Combo> {
    Combo::all()
        .into_iter()
        .filter(|c| !records.is_empty() && records.iter().all(|r| r.entries.contains_key(c)))
        .collect()
}

/// Records whose difference exceeds `threshold` under every combination in
/// `unimodal`.
pub fn reliable_type_filter<'a>(
    records: &'a [LogitRecord],
    unimodal: &[Combo],
    threshold: f64,
) -> Result<Vec<&'a LogitRecord>> {
    let mut kept = Vec::new();
    for r in records {
        let mut all = true;
        for &c in unimodal {
            if r.dz(c)? <= threshold {
                all = false;
            }
        }
        if all {
            kept.push(r);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePair {
    pub moment_id: String,
    pub best_unimodal_dz: f64,
    pub best_multimodal_dz: f64,
    pub ground_truth: u8,
}

/// Best single-modality difference against the best multi-modality one.
pub fn confidence_pairs(records: &[LogitRecord]) -> Result<Vec<ConfidencePair>> {
    records
        .iter()
        .map(|r| {
            let mut uni = f64::NEG_INFINITY;
            let mut multi = f64::NEG_INFINITY;
            for &c in r.entries.keys() {
                let dz = r.dz(c)?;
                if c.is_unimodal() {
                    uni = uni.max(dz);
                } else {
                    multi = multi.max(dz);
                }
            }
            let missing = |kind: &str| AnalysisError::MissingCombination {
                moment_id: r.moment_id.clone(),
                combo: kind.into(),
            };
            if uni == f64::NEG_INFINITY {
                return Err(missing("unimodal"));
            }
            if multi == f64::NEG_INFINITY {
                return Err(missing("multimodal"));
            }
            Ok(ConfidencePair {
                moment_id: r.moment_id.clone(),
                best_unimodal_dz: uni,
                best_multimodal_dz: multi,
                ground_truth: r.ground_truth,
            })
        })
        .collect()
}

pub fn parse_logits_jsonl(text: &str) -> Result<Vec<LogitRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: LogitRecord =
            serde_json::from_str(line).map_err(|e| AnalysisError::Parse { line: i + 1, reason: e.to_string() })?;
        if r.ground_truth > 1 {
            return Err(AnalysisError::Parse { line: i + 1, reason: "ground_truth must be 0 or 1".into() });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn read_logits(path: impl AsRef<Path>) -> Result<Vec<LogitRecord>> {
    parse_logits_jsonl(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_cases() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        assert_eq!(confusion(&labels, &labels).unwrap(), ConfusionCounts::new(10, 0, 10, 0));
        let inv: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let c = confusion(&inv, &labels).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert_eq!(confusion(&[1], &[1, 0]), Err(AnalysisError::LengthMismatch(1, 2)));
        assert_eq!(confusion(&[], &[]), Err(AnalysisError::Empty));
    }

    #[test]
    fn metric_values() {
        assert_eq!(mcc(&ConfusionCounts::new(50, 0, 50, 0)), 1.0);
        assert_eq!(mcc(&ConfusionCounts::new(0, 50, 0, 50)), -1.0);
        let c = ConfusionCounts::new(30, 10, 40, 20);
        assert!((mcc(&c) - 1000.0 / 6_000_000f64.sqrt()).abs() < 1e-12);
        assert!((f1(&c) - 60.0 / 90.0).abs() < 1e-12);
        assert!((accuracy(&c) - 0.7).abs() < 1e-12);
        assert_eq!(mcc(&ConfusionCounts::new(10, 5, 0, 0)), 0.0);
    }

    #[test]
    fn auc_values() {
        assert_eq!(roc_auc(&[0.9, 0.6, 0.4, 0.1], &[1, 0, 1, 0]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(AnalysisError::OneClassOnly));
    }

    #[test]
    fn bootstrap_degenerate_and_deterministic() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
        let ci = bootstrap_ci(accuracy, &labels, &labels, 200, 0.95, 3).unwrap();
        assert_eq!((ci.lo, ci.hi), (1.0, 1.0));
        let preds: Vec<u8> = (0..50).map(|i| ((i / 3) % 2) as u8).collect();
        let a = bootstrap_ci(mcc, &preds, &labels, 200, 0.95, 7).unwrap();
        assert_eq!(a, bootstrap_ci(mcc, &preds, &labels, 200, 0.95, 7).unwrap());
    }

    #[test]
    fn bootstrap_too_few_defined() {
        let err = bootstrap(10, |_| None, 100, 0.95, 0).unwrap_err();
        assert_eq!(err, AnalysisError::TooFewValidResamples { valid: 0, total: 100 });
    }

    #[test]
    fn combo_parsing() {
        assert_eq!(Combo::parse("VL").unwrap().to_string(), "LV");
        assert_eq!(Combo::parse("alv").unwrap().bits(), 7);
        assert!(Combo::parse("").is_err());
        assert!(Combo::parse("VV").is_err());
        assert!(Combo::parse("X").is_err());
    }

    #[test]
    fn delta_z_values() {
        assert_eq!(delta_z(&LogitEntry { z_true: 2.0, z_false: 0.5 }).unwrap(), 1.5);
        assert_eq!(delta_z(&LogitEntry { z_true: 1.0, z_false: 1.0 }).unwrap(), 0.0);
        assert_eq!(delta_z(&LogitEntry::from_delta(-0.93)).unwrap(), -0.93);
        assert!(delta_z(&LogitEntry { z_true: f64::NAN, z_false: 0.0 }).is_err());
    }

    #[test]
    fn logit_jsonl_accepts_both_entry_forms() {
        let text = r#"{"moment_id":"m1","ground_truth":1,"entries":{"V":{"z_true":2.0,"z_false":0.5},"LV":-0.93}}"#;
        let r = &parse_logits_jsonl(text).unwrap()[0];
        assert_eq!(r.dz(Combo::parse("V").unwrap()).unwrap(), 1.5);
        assert_eq!(r.dz(Combo::parse("LV").unwrap()).unwrap(), -0.93);
    }

    #[test]
    fn reliable_filter_rules() {
        let uni: Vec<Combo> = Modality::ALL.iter().map(|&m| Combo::single(m)).collect();
        let keep = LogitRecord::from_deltas("k", 1, &[("A", 3.5), ("L", 4.1), ("V", 3.2)]).unwrap();
        let drop = LogitRecord::from_deltas("d", 1, &[("A", 3.5), ("L", 2.9), ("V", 5.0)]).unwrap();
        let recs = [keep, drop];
        let kept = reliable_type_filter(&recs, &uni, 3.0).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].moment_id, "k");
        assert_eq!(reliable_type_filter(&recs, &uni, 0.0).unwrap().len(), 2);
    }

    #[test]
    fn confidence_pair_single_entries() {
        let r = LogitRecord::from_deltas("x", 0, &[("A", 0.2), ("AV", -1.0)]).unwrap();
        let p = &confidence_pairs(&[r]).unwrap()[0];
        assert_eq!((p.best_unimodal_dz, p.best_multimodal_dz), (0.2, -1.0));
        let only_uni = LogitRecord::from_deltas("y", 0, &[("A", 0.2)]).unwrap();
        assert!(confidence_pairs(&[only_uni]).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = [MetricRow { metric: "mcc".into(), value: 1.0, ci_lo: 1.0, ci_hi: 1.0 }];
        assert_eq!(metric_rows_csv(&rows), "metric,value,ci_lo,ci_hi\nmcc,1,1,1\n");
    }
}
