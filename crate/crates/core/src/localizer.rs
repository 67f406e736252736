//! Hierarchical localization of a highlight reel (H) inside a full game (G).
//!
//! 1. Coarse-to-fine per second: the initial frame of every H second is
//!    scored against the center frame of every G second; G seconds scoring
//!    at least `candidate_threshold` are then searched frame by frame.
//! 2. Seconds that are still poorly localized are searched again inside the
//!    G interval bounded by their nearest well-localized neighbors.
//! 3. Every frame of a well-localized second is matched inside a small G
//!    window around its anchor, and the matched G indices are grouped into
//!    moments.
//!
//! All comparisons are streamed over G in increasing frame order so that a
//! transcoder-backed source is decoded once per pass. Pairs are scored in
//! parallel but reduced in a fixed order, so results never depend on the
//! worker count. Among equal similarities the lowest G index wins.

use crate::media::{FrameSource, MediaError, Selection};
use crate::ssim::{Comparator, Metric, PreparedFrame, SsimError, SsimParams};
use crate::types::{FrameSpan, GrayFrame, Rational};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;
use tracing::info;

/// Number of G frames prepared per parallel batch.
const BATCH: usize = 64;

/// Score given to seconds that were never compared.
pub const NO_SIMILARITY: f64 = -1.0;

#[derive(Debug, Error)]
pub enum LocalizeError {
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Ssim(#[from] SsimError),
    #[error("H frames are {h:?} but G frames are {g:?}; both must share one size")]
    FrameSizeMismatch { h: (usize, usize), g: (usize, usize) },
    #[error("invalid localizer config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = LocalizeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    /// Minimum similarity for a well-localized second or a retained match.
    pub sim_threshold: f64,
    /// Minimum similarity for a G second to become a step-1 candidate.
    pub candidate_threshold: f64,
    /// Largest gap, in seconds, bridged when grouping matches.
    pub separation: f64,
    /// Half-width, in seconds, of the dense search window.
    pub dense_window: f64,
    /// Assume highlights preserve game order when pruning.
    pub monotonic: bool,
    /// Upper bound, in seconds, of the pruned window on each side.
    pub neighbor_cap: f64,
    pub metric: Metric,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        LocalizerConfig {
            sim_threshold: 0.8,
            candidate_threshold: 0.8,
            separation: 1.0,
            dense_window: 2.0,
            monotonic: true,
            neighbor_cap: 120.0,
            metric: Metric::MsSsim,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        let in_range = |t: f64| t > -1.0 && t <= 1.0;
        if !in_range(self.sim_threshold) || !in_range(self.candidate_threshold) {
            return Err(LocalizeError::InvalidConfig("thresholds must lie in (-1, 1]".into()));
        }
        if !(self.separation > 0.0) {
            return Err(LocalizeError::InvalidConfig("separation must be positive".into()));
        }
        if !(self.dense_window >= 0.0) || !(self.neighbor_cap > 0.0) {
            return Err(LocalizeError::InvalidConfig("windows must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    WellLocalized,
    PoorlyLocalized,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondAlignment {
    pub h_second: u64,
    pub g_frame: Option<u64>,
    pub similarity: f64,
    pub status: Status,
}

impl SecondAlignment {
    pub fn unmatched(h_second: u64) -> Self {
        SecondAlignment { h_second, g_frame: None, similarity: NO_SIMILARITY, status: Status::Unmatched }
    }

    fn from_best(h_second: u64, best: Best, threshold: f64) -> Self {
        match best.g {
            None => Self::unmatched(h_second),
            Some(g) => SecondAlignment {
                h_second,
                g_frame: Some(g),
                similarity: best.sim,
                status: if best.sim >= threshold { Status::WellLocalized } else { Status::PoorlyLocalized },
            },
        }
    }

    pub fn is_well_localized(&self) -> bool {
        self.status == Status::WellLocalized
    }
}

/// Similarity evaluations spent in each step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub coarse: u64,
    pub refine: u64,
    pub prune: u64,
    pub dense: u64,
}

impl StepCounts {
    pub fn total(&self) -> u64 {
        self.coarse + self.refine + self.prune + self.dense
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub h_path: String,
    pub g_path: String,
    pub h_fps: Rational,
    pub g_fps: Rational,
    pub per_second: Vec<SecondAlignment>,
    /// H frame index to G frame index.
    #[serde(with = "pairs")]
    pub frame_matches: BTreeMap<u64, u64>,
    pub moments: Vec<FrameSpan>,
    /// Share of H seconds that are well localized.
    pub localized_fraction: f64,
    /// Share of H frames with a retained match.
    pub matched_frame_fraction: f64,
    pub evaluations: StepCounts,
    pub config: LocalizerConfig,
    pub ssim: SsimParams,
}

mod pairs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<u64, u64>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<[u64; 2]> = m.iter().map(|(&h, &g)| [h, g]).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u64, u64>, D::Error> {
        let v: Vec<[u64; 2]> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|[h, g]| (h, g)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Best {
    g: Option<u64>,
    sim: f64,
}

impl Best {
    const NONE: Best = Best { g: None, sim: f64::NEG_INFINITY };

    fn offer(&mut self, g: u64, sim: f64) {
        let better = match self.g {
            None => true,
            Some(cur) => sim > self.sim || (sim == self.sim && g < cur),
        };
        if better {
            self.g = Some(g);
            self.sim = sim;
        }
    }
}

/// Streams the requested G frames once and scores each against the
/// queries that asked for it. `sink` sees scores in (G index, query) order.
fn scan(
    cmp: &Comparator,
    g: &dyn FrameSource,
    requests: &BTreeMap<u64, Vec<usize>>,
    queries: &[PreparedFrame],
    counter: &AtomicU64,
    mut sink: impl FnMut(usize, u64, f64),
) -> Result<()> {
    if requests.is_empty() {
        return Ok(());
    }
    let indices: Vec<u64> = requests.keys().copied().collect();
    let mut stream = g.stream(Selection::Indices(indices))?;
    let mut batch: Vec<(u64, GrayFrame)> = Vec::with_capacity(BATCH);
    loop {
        batch.clear();
        for item in stream.by_ref().take(BATCH) {
            batch.push(item?);
        }
        if batch.is_empty() {
            break;
        }
        let prepared = batch
            .par_iter()
            .map(|(i, f)| cmp.prepare(f).map(|p| (*i, p)))
            .collect::<Result<Vec<_>, SsimError>>()?;
        let pairs: Vec<(usize, usize)> = prepared
            .iter()
            .enumerate()
            .flat_map(|(bi, (gi, _))| requests[gi].iter().map(move |&q| (bi, q)))
            .collect();
        let scores = pairs
            .par_iter()
            .map(|&(bi, q)| cmp.compare(&queries[q], &prepared[bi].1))
            .collect::<Result<Vec<_>, SsimError>>()?;
        counter.fetch_add(pairs.len() as u64, Ordering::Relaxed);
        for (&(bi, q), s) in pairs.iter().zip(scores) {
            sink(q, prepared[bi].0, s);
        }
    }
    Ok(())
}

fn prepare_all(cmp: &Comparator, frames: &[(u64, GrayFrame)]) -> Result<Vec<PreparedFrame>> {
    Ok(frames
        .par_iter()
        .map(|(_, f)| cmp.prepare(f))
        .collect::<Result<Vec<_>, SsimError>>()?)
}

/// Sorts `(second, sim)` by descending similarity, lower second first on ties.
fn rank_candidates(mut scored: Vec<(u64, f64)>) -> Vec<u64> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(s, _)| s).collect()
}

/// G seconds whose representative scores at least `candidate_threshold`
/// against `h_anchor`, best first. `g_reps` pairs each G second with its
/// representative frame.
pub fn coarse_candidates(
    h_anchor: &GrayFrame,
    g_reps: &[(u64, GrayFrame)],
    cfg: &LocalizerConfig,
    ssim: &SsimParams,
) -> Result<Vec<u64>> {
    let cmp = Comparator::new(ssim.clone(), cfg.metric)?;
    let anchor = cmp.prepare(h_anchor)?;
    let scored = g_reps
        .par_iter()
        .map(|(s, f)| Ok((*s, cmp.compare(&anchor, &cmp.prepare(f)?)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_candidates(scored.into_iter().filter(|(_, v)| *v >= cfg.candidate_threshold).collect()))
}

/// Best frame for `h_anchor` among all native frames of the candidate seconds.
pub fn refine_within_seconds(
    h_second: u64,
    h_anchor: &GrayFrame,
    g: &dyn FrameSource,
    candidate_seconds: &[u64],
    cfg: &LocalizerConfig,
    ssim: &SsimParams,
) -> Result<SecondAlignment> {
    let loc = Localizer::new(cfg.clone(), ssim.clone())?;
    let anchor = vec![loc.cmp.prepare(h_anchor)?];
    let mut out = loc.refine_batch(g, &anchor, &[candidate_seconds.to_vec()])?;
    let mut a = out.pop().expect("one anchor");
    a.h_second = h_second;
    Ok(a)
}

/// Search windows for a poorly localized second given its neighbors' matches.
pub fn prune_window(
    prev: Option<u64>,
    next: Option<u64>,
    g_frames: u64,
    cap_frames: u64,
    monotonic: bool,
) -> Vec<FrameSpan> {
    let clamp = |lo: i128, hi: i128| {
        let lo = lo.clamp(0, g_frames as i128) as u64;
        let hi = hi.clamp(0, g_frames as i128) as u64;
        FrameSpan::new(lo, hi)
    };
    let cap = cap_frames as i128;
    let around = |c: u64| clamp(c as i128 - cap, c as i128 + cap + 1);
    let spans = match (prev, next, monotonic) {
        (None, None, _) => vec![],
        (Some(p), Some(n), true) if n > p + 1 => {
            let (p, n) = (p as i128, n as i128);
            if n - p - 1 > 2 * cap {
                vec![clamp(p + 1, p + 1 + cap), clamp(n - cap, n)]
            } else {
                vec![clamp(p + 1, n)]
            }
        }
        (Some(p), None, true) => vec![clamp(p as i128 + 1, p as i128 + 1 + cap)],
        (None, Some(n), true) => vec![clamp(n as i128 - cap, n as i128)],
        // order violated or monotonicity disabled
        (p, n, _) => p.into_iter().chain(n).map(around).collect(),
    };
    merge_spans(spans)
}

fn merge_spans(mut spans: Vec<FrameSpan>) -> Vec<FrameSpan> {
    spans.retain(|s| !s.is_empty());
    spans.sort();
    let mut out: Vec<FrameSpan> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Groups sorted unique G indices into half-open spans. Consecutive indices
/// stay in one span while their gap is at most `separation * fps` frames.
pub fn group_moments(g_indices: &[u64], fps: Rational, separation: f64) -> Vec<FrameSpan> {
    let max_gap = separation * fps.as_f64();
    let mut spans: Vec<FrameSpan> = Vec::new();
    for &i in g_indices {
        match spans.last_mut() {
            Some(last) if ((i - (last.end - 1)) as f64) <= max_gap => last.end = i + 1,
            _ => spans.push(FrameSpan::new(i, i + 1)),
        }
    }
    spans
}

/// Owns the comparator and evaluation counters for one localization run.
pub struct Localizer {
    cfg: LocalizerConfig,
    cmp: Comparator,
    coarse: AtomicU64,
    refine: AtomicU64,
    prune: AtomicU64,
    dense: AtomicU64,
}

impl Localizer {
    pub fn new(cfg: LocalizerConfig, ssim: SsimParams) -> Result<Self> {
        cfg.validate()?;
        let cmp = Comparator::new(ssim, cfg.metric)?;
        Ok(Localizer {
            cfg,
            cmp,
            coarse: AtomicU64::new(0),
            refine: AtomicU64::new(0),
            prune: AtomicU64::new(0),
            dense: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.cfg
    }

    pub fn counts(&self) -> StepCounts {
        StepCounts {
            coarse: self.coarse.load(Ordering::Relaxed),
            refine: self.refine.load(Ordering::Relaxed),
            prune: self.prune.load(Ordering::Relaxed),
            dense: self.dense.load(Ordering::Relaxed),
        }
    }

    fn anchors(&self, h: &dyn FrameSource) -> Result<(Vec<u64>, Vec<PreparedFrame>)> {
        let meta = h.meta();
        let idx: Vec<u64> = (0..meta.full_seconds()).map(|s| meta.fps.second_start(s)).collect();
        let frames = h.fetch(&idx)?;
        Ok((idx, prepare_all(&self.cmp, &frames)?))
    }

    /// Step 1, phase A: candidate G seconds per anchor.
    fn coarse_batch(&self, g: &dyn FrameSource, anchors: &[PreparedFrame]) -> Result<Vec<Vec<u64>>> {
        let meta = g.meta();
        let all: Vec<usize> = (0..anchors.len()).collect();
        let requests: BTreeMap<u64, Vec<usize>> =
            (0..meta.full_seconds()).map(|s| (meta.fps.second_center(s), all.clone())).collect();
        let mut scored: Vec<Vec<(u64, f64)>> = vec![Vec::new(); anchors.len()];
        scan(&self.cmp, g, &requests, anchors, &self.coarse, |q, gi, sim| {
            if sim >= self.cfg.candidate_threshold {
                scored[q].push((meta.fps.second_of(gi), sim));
            }
        })?;
        Ok(scored.into_iter().map(rank_candidates).collect())
    }

    /// Step 1, phase B: exhaustive search inside the candidate seconds.
    fn refine_batch(
        &self,
        g: &dyn FrameSource,
        anchors: &[PreparedFrame],
        candidates: &[Vec<u64>],
    ) -> Result<Vec<SecondAlignment>> {
        let fps = g.meta().fps;
        let mut requests: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (q, secs) in candidates.iter().enumerate() {
            for &s in secs {
                let span = fps.second_frames(s);
                for i in span.start..span.end.min(g.meta().frame_count) {
                    requests.entry(i).or_default().push(q);
                }
            }
        }
        let mut best = vec![Best::NONE; anchors.len()];
        scan(&self.cmp, g, &requests, anchors, &self.refine, |q, gi, sim| best[q].offer(gi, sim))?;
        Ok(best
            .into_iter()
            .enumerate()
            .map(|(s, b)| SecondAlignment::from_best(s as u64, b, self.cfg.sim_threshold))
            .collect())
    }

    /// Step 2. `anchors[i]` must belong to `alignments[i]`.
    fn prune_batch(
        &self,
        g: &dyn FrameSource,
        anchors: &[PreparedFrame],
        alignments: &[SecondAlignment],
    ) -> Result<Vec<SecondAlignment>> {
        let gm = g.meta();
        let cap = gm.fps.frames_in(self.cfg.neighbor_cap);
        let mut requests: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut prev: Option<u64> = None;
        let mut next_well: Vec<Option<u64>> = vec![None; alignments.len()];
        let mut upcoming = None;
        for (i, a) in alignments.iter().enumerate().rev() {
            next_well[i] = upcoming;
            if a.is_well_localized() {
                upcoming = a.g_frame;
            }
        }
        for (q, a) in alignments.iter().enumerate() {
            if a.is_well_localized() {
                prev = a.g_frame;
                continue;
            }
            for span in prune_window(prev, next_well[q], gm.frame_count, cap, self.cfg.monotonic) {
                for i in span.start..span.end {
                    requests.entry(i).or_default().push(q);
                }
            }
        }
        let mut best = vec![Best::NONE; anchors.len()];
        scan(&self.cmp, g, &requests, anchors, &self.prune, |q, gi, sim| best[q].offer(gi, sim))?;
        Ok(alignments
            .iter()
            .zip(best)
            .map(|(a, b)| match b.g {
                Some(_) if !a.is_well_localized() && b.sim > a.similarity => {
                    SecondAlignment::from_best(a.h_second, b, self.cfg.sim_threshold)
                }
                _ => a.clone(),
            })
            .collect())
    }

    /// Step 3 over all well-localized seconds, processed in chunks of H seconds.
    fn dense_batch(
        &self,
        h: &dyn FrameSource,
        g: &dyn FrameSource,
        alignments: &[SecondAlignment],
    ) -> Result<BTreeMap<u64, u64>> {
        const CHUNK_SECONDS: usize = 32;
        let (hm, gm) = (h.meta(), g.meta());
        let half = gm.fps.frames_in(self.cfg.dense_window);
        let window = |g0: u64| FrameSpan::new(g0.saturating_sub(half), (g0 + half + 1).min(gm.frame_count));
        let anchor_of: BTreeMap<u64, u64> = alignments
            .iter()
            .filter(|a| a.is_well_localized())
            .map(|a| (a.h_second, a.g_frame.expect("well-localized has a frame")))
            .collect();
        let mut matches = BTreeMap::new();
        let seconds: Vec<u64> = anchor_of.keys().copied().collect();
        for chunk in seconds.chunks(CHUNK_SECONDS) {
            // (h frame, own anchor, following anchor)
            let mut jobs: Vec<(u64, u64, Option<u64>)> = Vec::new();
            for &s in chunk {
                let g0 = anchor_of[&s];
                let span = hm.fps.second_frames(s);
                matches.insert(span.start, g0);
                for hi in span.start + 1..span.end.min(hm.frame_count) {
                    jobs.push((hi, g0, anchor_of.get(&(s + 1)).copied()));
                }
            }
            if jobs.is_empty() {
                continue;
            }
            let idx: Vec<u64> = jobs.iter().map(|j| j.0).collect();
            let frames = h.fetch(&idx)?;
            let queries = prepare_all(&self.cmp, &frames)?;

            let mut requests: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (q, &(_, g0, _)) in jobs.iter().enumerate() {
                let w = window(g0);
                for i in w.start..w.end {
                    requests.entry(i).or_default().push(q);
                }
            }
            let mut best = vec![Best::NONE; jobs.len()];
            scan(&self.cmp, g, &requests, &queries, &self.dense, |q, gi, sim| best[q].offer(gi, sim))?;

            // A second straddling two highlight segments has frames that
            // belong next to the following anchor, not its own.
            let mut retry: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for (q, &(_, g0, g1)) in jobs.iter().enumerate() {
                if best[q].sim >= self.cfg.sim_threshold {
                    continue;
                }
                if let Some(g1) = g1 {
                    let own = window(g0);
                    let w = window(g1);
                    for i in (w.start..w.end).filter(|i| !own.contains(*i)) {
                        retry.entry(i).or_default().push(q);
                    }
                }
            }
            scan(&self.cmp, g, &retry, &queries, &self.dense, |q, gi, sim| best[q].offer(gi, sim))?;

            for ((hi, _, _), b) in jobs.iter().zip(&best) {
                if let Some(gi) = b.g {
                    if b.sim >= self.cfg.sim_threshold {
                        matches.insert(*hi, gi);
                    }
                }
            }
        }
        Ok(matches)
    }

    /// Runs all three steps.
    pub fn run(&self, h: &dyn FrameSource, g: &dyn FrameSource) -> Result<AlignmentResult> {
        if h.frame_size() != g.frame_size() {
            return Err(LocalizeError::FrameSizeMismatch { h: h.frame_size(), g: g.frame_size() });
        }
        let (_, anchors) = self.anchors(h)?;
        info!(h_seconds = anchors.len(), g_seconds = g.meta().full_seconds(), "step 1: coarse search");
        let candidates = self.coarse_batch(g, &anchors)?;
        let step1 = self.refine_batch(g, &anchors, &candidates)?;
        let well1 = step1.iter().filter(|a| a.is_well_localized()).count();
        info!(well_localized = well1, evaluations = ?self.counts(), "step 1 done");

        let step2 = self.prune_batch(g, &anchors, &step1)?;
        drop(anchors);
        let well2 = step2.iter().filter(|a| a.is_well_localized()).count();
        info!(well_localized = well2, evaluations = ?self.counts(), "step 2 done");

        let frame_matches = self.dense_batch(h, g, &step2)?;
        let mut g_indices: Vec<u64> = frame_matches.values().copied().collect();
        g_indices.sort_unstable();
        g_indices.dedup();
        let moments = group_moments(&g_indices, g.meta().fps, self.cfg.separation);
        info!(matched_frames = frame_matches.len(), moments = moments.len(), "step 3 done");

        let n_sec = step2.len();
        let h_frames = h.meta().frame_count;
        Ok(AlignmentResult {
            h_path: h.meta().path.clone(),
            g_path: g.meta().path.clone(),
            h_fps: h.meta().fps,
            g_fps: g.meta().fps,
            localized_fraction: if n_sec == 0 { 0.0 } else { well2 as f64 / n_sec as f64 },
            matched_frame_fraction: if h_frames == 0 {
                0.0
            } else {
                frame_matches.len() as f64 / h_frames as f64
            },
            per_second: step2,
            frame_matches,
            moments,
            evaluations: self.counts(),
            config: self.cfg.clone(),
            ssim: self.cmp.params().clone(),
        })
    }
}

/// Step 2 on its own: re-searches every non-well-localized second between
/// its well-localized neighbors. Well-localized entries are returned as is.
pub fn prune_and_relocalize(
    alignments: &[SecondAlignment],
    h: &dyn FrameSource,
    g: &dyn FrameSource,
    cfg: &LocalizerConfig,
    ssim: &SsimParams,
) -> Result<Vec<SecondAlignment>> {
    let loc = Localizer::new(cfg.clone(), ssim.clone())?;
    let idx: Vec<u64> = alignments.iter().map(|a| h.meta().fps.second_start(a.h_second)).collect();
    let anchors = prepare_all(&loc.cmp, &h.fetch(&idx)?)?;
    loc.prune_batch(g, &anchors, alignments)
}

/// Step 3 on its own.
pub fn dense_match(
    alignments: &[SecondAlignment],
    h: &dyn FrameSource,
    g: &dyn FrameSource,
    cfg: &LocalizerConfig,
    ssim: &SsimParams,
) -> Result<BTreeMap<u64, u64>> {
    Localizer::new(cfg.clone(), ssim.clone())?.dense_batch(h, g, alignments)
}

/// Localizes `h` in `g` with the three-step search.
pub fn localize(
    h: &dyn FrameSource,
    g: &dyn FrameSource,
    cfg: &LocalizerConfig,
    ssim: &SsimParams,
) -> Result<AlignmentResult> {
    Localizer::new(cfg.clone(), ssim.clone())?.run(h, g)
}
