//! Dataset statistics, classification metrics and modality contributions.

use crate::artifacts::{csv_string, FileHash, Run};
use crate::config::{require_inputs, PipelineConfig};
use crate::exit::data_error;
use crate::report::{bar_chart, page, scatter, table, Bar, Point};
use anyhow::{Context, Result};
use clap::Args;
use moments_core::analysis::{
    confidence_pairs, confusion, common_combos, contribution, evaluate, metric_rows_csv, read_logits,
    reliable_type_filter, AnalysisError, Combo, ConfusionCounts, ContributionReport, LogitRecord, MetricRow,
    Modality, Slice,
};
use moments_core::extractor::{read_manifest, Label, MomentRecord};
use moments_core::sampler::{duration_summary, DurationSummary};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use tracing::{info, warn};

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Moment manifests from `extract`.
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write report.html.
    #[arg(long)]
    pub report: bool,
}

#[derive(Serialize)]
struct DurationRow<'a> {
    id: &'a str,
    game_id: &'a str,
    label: u8,
    video_s: f64,
    audio_s: f64,
    audio_extension_s: f64,
}

#[derive(Serialize)]
struct GameRow {
    game_id: String,
    important: usize,
    non_important: usize,
}

#[derive(Serialize)]
struct StatsResult<'a> {
    records: usize,
    games: usize,
    summaries: &'a [DurationSummary],
}

pub fn load_records(paths: &[PathBuf]) -> Result<Vec<MomentRecord>> {
    let mut out = Vec::new();
    for p in paths {
        let (_, records) = read_manifest(p).with_context(|| format!("reading {}", p.display()))?;
        out.extend(records);
    }
    Ok(out)
}

pub fn run_stats(cfg: &PipelineConfig, a: &StatsArgs) -> Result<Vec<FileHash>> {
    let inputs: Vec<&Path> = a.manifests.iter().map(|p| p.as_path()).collect();
    require_inputs(inputs.iter().copied())?;
    let mut run = Run::start("stats", cfg, &inputs, &a.out)?;
    let records = load_records(&a.manifests)?;
    let summaries = duration_summary(&records)?;

    let mut games: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &records {
        let e = games.entry(&r.game_id).or_default();
        match r.label {
            Label::Important => e.0 += 1,
            Label::NonImportant => e.1 += 1,
        }
    }
    run.write_json("stats.json", &StatsResult { records: records.len(), games: games.len(), summaries: &summaries })?;
    run.write_text("durations.csv", &csv_string(&summaries)?)?;
    let rows: Vec<DurationRow> = records
        .iter()
        .map(|r| DurationRow {
            id: &r.id,
            game_id: &r.game_id,
            label: r.label.into(),
            video_s: r.video_span.duration(),
            audio_s: r.audio_span.duration(),
            audio_extension_s: r.audio_span.duration() - r.video_span.duration(),
        })
        .collect();
    run.write_text("moments.csv", &csv_string(&rows)?)?;
    let game_rows: Vec<GameRow> = games
        .iter()
        .map(|(g, &(important, non_important))| GameRow { game_id: g.to_string(), important, non_important })
        .collect();
    run.write_text("games.csv", &csv_string(&game_rows)?)?;

    if a.report {
        let label = |s: &DurationSummary| {
            let l = if s.label == Label::Important { "IM" } else { "NIM" };
            format!("{l} {}", serde_json::to_value(s.modality).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        };
        let bars: Vec<Bar> =
            summaries.iter().map(|s| Bar { label: label(s), value: s.mean, interval: Some((s.min, s.max)) }).collect();
        let mut cells = vec![vec!["group".into(), "count".into(), "mean".into(), "min".into(), "max".into()]];
        cells.extend(summaries.iter().map(|s| {
            vec![label(s), s.count.to_string(), format!("{:.2}", s.mean), format!("{:.2}", s.min), format!("{:.2}", s.max)]
        }));
        let html = page(
            "Moment durations",
            &run.provenance.config_hash,
            &[
                ("Mean duration in seconds (whiskers span min to max)".into(), bar_chart(&bars)),
                ("Summary".into(), table(&cells)),
            ],
        );
        run.write_text("report.html", &html)?;
    }
    info!(records = records.len(), games = games.len(), "statistics written");
    run.finish()
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// CSV with columns id, label, prediction and an optional score.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub resamples: Option<usize>,
    /// Confidence level of the intervals.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub report: bool,
}

impl MetricsArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(b) = self.resamples {
            cfg.metrics.resamples = b;
        }
        if let Some(l) = self.level {
            cfg.metrics.level = l;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub label: u8,
    pub prediction: u8,
    #[serde(default)]
    pub score: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct MetricsResult {
    pub n: usize,
    pub confusion: ConfusionCounts,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = rd
        .deserialize()
        .collect::<Result<Vec<PredictionRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if rows.is_empty() {
        return Err(data_error(format!("{} has no predictions", path.display())));
    }
    if let Some(r) = rows.iter().find(|r| r.label > 1 || r.prediction > 1) {
        return Err(data_error(format!("row {}: labels and predictions must be 0 or 1", r.id)));
    }
    let with_score = rows.iter().filter(|r| r.score.is_some()).count();
    if with_score != 0 && with_score != rows.len() {
        return Err(data_error("score must be given for every row or for none"));
    }
    Ok(rows)
}

/// Point metrics and intervals for a prediction set.
pub fn metrics_for(rows: &[PredictionRow], cfg: &PipelineConfig) -> Result<MetricsResult> {
    let preds: Vec<u8> = rows.iter().map(|r| r.prediction).collect();
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let scores: Option<Vec<f64>> = rows.iter().map(|r| r.score).collect();
    let m = &cfg.metrics;
    let scores = scores.filter(|_| labels.contains(&0) && labels.contains(&1));
    let metric_rows = evaluate(&preds, &labels, scores.as_deref(), m.resamples, m.level, cfg.global.seed)?;
    Ok(MetricsResult {
        n: rows.len(),
        confusion: confusion(&preds, &labels)?,
        resamples: m.resamples,
        level: m.level,
        seed: cfg.global.seed,
        rows: metric_rows,
    })
}

pub fn write_metrics(run: &mut Run, result: &MetricsResult, report: bool) -> Result<()> {
    run.write_json("metrics.json", result)?;
    run.write_text("metrics.csv", &metric_rows_csv(&result.rows))?;
    if report {
        let bars: Vec<Bar> = result
            .rows
            .iter()
            .map(|r| Bar { label: r.metric.clone(), value: r.value, interval: Some((r.ci_lo, r.ci_hi)) })
            .collect();
        let c = &result.confusion;
        let cells = vec![
            vec!["".into(), "predicted 1".into(), "predicted 0".into()],
            vec!["label 1".into(), c.tp.to_string(), c.fn_.to_string()],
            vec!["label 0".into(), c.fp.to_string(), c.tn.to_string()],
        ];
        let html = page(
            "Classification metrics",
            &run.provenance.config_hash,
            &[
                (format!("Metrics with {:.0}% bootstrap intervals", result.level * 100.0), bar_chart(&bars)),
                ("Confusion counts".into(), table(&cells)),
            ],
        );
        run.write_text("report.html", &html)?;
    }
    Ok(())
}

pub fn run_metrics(cfg: &PipelineConfig, a: &MetricsArgs) -> Result<Vec<FileHash>> {
    require_inputs([a.predictions.as_path()])?;
    let mut run = Run::start("metrics", cfg, &[&a.predictions], &a.out)?;
    let rows = read_predictions(&a.predictions)?;
    let result = metrics_for(&rows, cfg)?;
    for r in &result.rows {
        info!(metric = %r.metric, value = r.value, lo = r.ci_lo, hi = r.ci_hi);
    }
    write_metrics(&mut run, &result, a.report)?;
    run.finish()
}

// ---------------------------------------------------------------------------
// contrib
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ContribArgs {
    /// JSONL logit records, one per moment.
    #[arg(long)]
    pub logits: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Average each side over its combination count.
    #[arg(long)]
    pub normalized: bool,
    /// Keep records whose unimodal differences all reach this value.
    #[arg(long, allow_hyphen_values = true)]
    pub reliable_threshold: Option<f64>,
    #[arg(long)]
    pub report: bool,
}

impl ContribArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if self.normalized {
            cfg.contrib.normalized = true;
        }
        if self.reliable_threshold.is_some() {
            cfg.contrib.reliable_threshold = self.reliable_threshold;
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ContribRow {
    pub modality: Modality,
    pub slice: Slice,
    pub score: f64,
    pub mean: f64,
    pub n: usize,
    pub normalized: bool,
}

impl From<ContributionReport> for ContribRow {
    fn from(r: ContributionReport) -> Self {
        ContribRow {
            modality: r.modality,
            slice: r.slice,
            score: r.score,
            mean: r.score / r.n as f64,
            n: r.n,
            normalized: r.normalized,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ContribResult {
    pub combos: Vec<Combo>,
    pub records: usize,
    pub kept: usize,
    pub rows: Vec<ContribRow>,
}

/// Modalities that some combinations include and others leave out.
fn comparable_modalities(combos: &[Combo]) -> Vec<Modality> {
    Modality::ALL
        .into_iter()
        .filter(|&m| combos.iter().any(|c| c.contains(m)) && combos.iter().any(|c| !c.contains(m)))
        .collect()
}

pub fn contributions(records: &[LogitRecord], cfg: &PipelineConfig) -> Result<(ContribResult, Vec<LogitRecord>)> {
    let combos = common_combos(records);
    if combos.is_empty() {
        return Err(data_error("no modality combination is shared by every record"));
    }
    let kept: Vec<LogitRecord> = match cfg.contrib.reliable_threshold {
        None => records.to_vec(),
        Some(t) => {
            let unimodal: Vec<Combo> = combos.iter().copied().filter(|c| c.is_unimodal()).collect();
            reliable_type_filter(records, &unimodal, t)?.into_iter().cloned().collect()
        }
    };
    let mut rows = Vec::new();
    for m in comparable_modalities(&combos) {
        for slice in [Slice::Im, Slice::Nim, Slice::All] {
            match contribution(&kept, m, &combos, slice, cfg.contrib.normalized) {
                Ok(r) => rows.push(r.into()),
                Err(AnalysisError::EmptySlice(_)) => warn!(%slice, "no records in slice"),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok((ContribResult { combos, records: records.len(), kept: kept.len(), rows }, kept))
}

pub fn run_contrib(cfg: &PipelineConfig, a: &ContribArgs) -> Result<Vec<FileHash>> {
    require_inputs([a.logits.as_path()])?;
    let mut run = Run::start("contrib", cfg, &[&a.logits], &a.out)?;
    let records = read_logits(&a.logits)?;
    let (result, kept) = contributions(&records, cfg)?;
    run.write_json("contributions.json", &result)?;
    run.write_text("contributions.csv", &csv_string(&result.rows)?)?;

    let pairs = match confidence_pairs(&kept) {
        Ok(p) => p,
        Err(e) => {
            warn!(error = %e, "confidence pairs unavailable");
            Vec::new()
        }
    };
    run.write_text("confidence_pairs.csv", &csv_string(&pairs)?)?;

    if a.report {
        let bars: Vec<Bar> = result
            .rows
            .iter()
            .map(|r| Bar { label: format!("{:?} {}", r.modality, r.slice), value: r.mean, interval: None })
            .collect();
        let points: Vec<Point> = pairs
            .iter()
            .map(|p| Point { x: p.best_unimodal_dz, y: p.best_multimodal_dz, positive: p.ground_truth == 1 })
            .collect();
        let html = page(
            "Modality contributions",
            &run.provenance.config_hash,
            &[
                ("Mean contribution per record".into(), bar_chart(&bars)),
                (
                    "Best unimodal against best multimodal logit difference (red: important)".into(),
                    scatter(&points, "best unimodal", "best multimodal"),
                ),
            ],
        );
        run.write_text("report.html", &html)?;
    }
    info!(records = result.records, kept = result.kept, "contributions written");
    run.finish()
}
