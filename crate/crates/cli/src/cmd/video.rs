//! Dataset construction: synthetic corpora, localization, non-important
//! sampling and clip extraction.

use crate::artifacts::{csv_string, read_payload, sha256_file, FileHash, Run, TOOL_VERSION};
use crate::config::{require_inputs, PipelineConfig};
use crate::exit::{config_error, data_error};
use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use moments_core::extractor::{
    build_moments, evs_lag_diagnostic, write_manifest, write_rejects, DryRunExtractor, GameMoments, ManifestHeader,
    MediaExtractor, Provenance, TranscoderExtractor,
};
use moments_core::localizer::{localize, AlignmentResult};
use moments_core::media::{open_video, probe, read_transcript, MediaError, Segment, Transcoder, Transcript};
use moments_core::sampler::{
    fit_gamma_mle, game_seed, place_with_order, sample_durations, GammaParams, PlacementOrder, SamplerError,
};
use moments_core::ssim::Metric;
use moments_core::synth::{write_corpus, GroundTruth, SynthSpec};
use moments_core::TimeSpan;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use tracing::{info, warn};

// ---------------------------------------------------------------------------
// localize
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Single,
    MsSsim,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Highlight reel.
    pub highlight: PathBuf,
    /// Full game recording.
    pub game: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Decode width in pixels; 0 keeps the native resolution.
    #[arg(long)]
    pub downscale: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub sim_threshold: Option<f64>,
    #[arg(long)]
    pub candidate_threshold: Option<f64>,
    /// Largest gap in seconds bridged when grouping matches.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Allow highlights out of game order.
    #[arg(long)]
    pub no_monotonic: bool,
    /// Ground truth from `synth generate`; adds a per-span evaluation.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

impl LocalizeArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let l = &mut cfg.localize;
        if let Some(d) = self.downscale {
            l.downscale = d;
        }
        if let Some(m) = self.metric {
            l.search.metric = match m {
                MetricArg::Single => Metric::Single,
                MetricArg::MsSsim => Metric::MsSsim,
            };
        }
        if let Some(t) = self.sim_threshold {
            l.search.sim_threshold = t;
        }
        if let Some(t) = self.candidate_threshold {
            l.search.candidate_threshold = t;
        }
        if let Some(s) = self.separation {
            l.search.separation = s;
        }
        if self.no_monotonic {
            l.search.monotonic = false;
        }
    }
}

#[derive(Serialize)]
struct MomentRow {
    index: usize,
    start_frame: u64,
    end_frame: u64,
    start_s: f64,
    end_s: f64,
}

#[derive(Serialize)]
struct SecondRow {
    h_second: u64,
    g_frame: Option<u64>,
    similarity: f64,
    status: String,
}

#[derive(Debug, Serialize)]
pub struct SpanEvaluation {
    pub truth: TimeSpan,
    pub best: Option<TimeSpan>,
    pub iou: f64,
    pub boundary_error: f64,
}

#[derive(Debug, Serialize)]
pub struct Evaluation {
    pub spans: Vec<SpanEvaluation>,
    pub min_iou: f64,
    pub max_boundary_error: f64,
    pub extra_moments: usize,
}

pub fn evaluate_against(found: &[TimeSpan], truth: &[TimeSpan]) -> Evaluation {
    let mut used = BTreeSet::new();
    let spans: Vec<SpanEvaluation> = truth
        .iter()
        .map(|t| {
            let best = found
                .iter()
                .enumerate()
                .map(|(i, f)| (i, f, t.iou(f)))
                .max_by(|a, b| a.2.total_cmp(&b.2))
                .filter(|b| b.2 > 0.0);
            match best {
                Some((i, f, iou)) => {
                    used.insert(i);
                    let err = (f.start - t.start).abs().max((f.end - t.end).abs());
                    SpanEvaluation { truth: *t, best: Some(*f), iou, boundary_error: err }
                }
                None => SpanEvaluation { truth: *t, best: None, iou: 0.0, boundary_error: f64::INFINITY },
            }
        })
        .collect();
    Evaluation {
        min_iou: spans.iter().map(|s| s.iou).fold(1.0, f64::min),
        max_boundary_error: spans.iter().map(|s| s.boundary_error).fold(0.0, f64::max),
        extra_moments: found.len() - used.len(),
        spans,
    }
}

pub fn run_localize(cfg: &PipelineConfig, a: &LocalizeArgs) -> Result<Vec<FileHash>> {
    let mut inputs: Vec<&Path> = vec![&a.highlight, &a.game];
    inputs.extend(a.truth.as_deref());
    require_inputs(inputs.iter().copied())?;
    let t = Transcoder::from_env();
    let ds = (cfg.localize.downscale > 0).then_some(cfg.localize.downscale);
    let h = open_video(&t, &a.highlight, ds).with_context(|| format!("opening {}", a.highlight.display()))?;
    let g = open_video(&t, &a.game, ds).with_context(|| format!("opening {}", a.game.display()))?;
    let mut run = Run::start("localize", cfg, &inputs, &a.out)?;

    let result = localize(h.as_ref(), g.as_ref(), &cfg.localize.search, &cfg.localize.ssim)?;
    info!(
        moments = result.moments.len(),
        localized_fraction = result.localized_fraction,
        evaluations = result.evaluations.total(),
        "localization done"
    );
    run.write_json("alignment.json", &result)?;
    let rows: Vec<MomentRow> = result
        .moments
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let ts = s.to_time(result.g_fps);
            MomentRow { index, start_frame: s.start, end_frame: s.end, start_s: ts.start, end_s: ts.end }
        })
        .collect();
    run.write_text("moments.csv", &csv_string(&rows)?)?;
    let seconds: Vec<SecondRow> = result
        .per_second
        .iter()
        .map(|s| SecondRow {
            h_second: s.h_second,
            g_frame: s.g_frame,
            similarity: s.similarity,
            status: format!("{:?}", s.status),
        })
        .collect();
    run.write_text("per_second.csv", &csv_string(&seconds)?)?;

    if let Some(p) = &a.truth {
        let truth: GroundTruth = read_payload(p)?;
        let found: Vec<TimeSpan> = result.moments.iter().map(|s| s.to_time(result.g_fps)).collect();
        let ev = evaluate_against(&found, &truth.g_time_spans);
        info!(min_iou = ev.min_iou, max_boundary_error = ev.max_boundary_error, "ground-truth comparison");
        run.write_json("evaluation.json", &ev)?;
    }
    run.finish()
}

// ---------------------------------------------------------------------------
// sample-nim
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SampleNimArgs {
    /// Alignment files from `localize`, one per game, as `PATH` or
    /// `GAME_ID=PATH`. The game id defaults to the game file's stem.
    #[arg(long = "alignment", required = true, value_parser = parse_alignment_arg)]
    pub alignments: Vec<AlignmentArg>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Fixed Gamma shape; requires --scale. Fitted when omitted.
    #[arg(long, requires = "scale")]
    pub shape: Option<f64>,
    #[arg(long, requires = "shape")]
    pub scale: Option<f64>,
    /// Minimum distance in seconds from important spans.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub shortest_first: bool,
    /// Game length in seconds when the game file cannot be probed.
    #[arg(long)]
    pub g_duration: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AlignmentArg {
    pub game_id: Option<String>,
    pub path: PathBuf,
}

fn parse_alignment_arg(s: &str) -> Result<AlignmentArg, String> {
    match s.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => {
            Ok(AlignmentArg { game_id: Some(id.into()), path: path.into() })
        }
        Some(_) => Err(format!("expected GAME_ID=PATH, got {s}")),
        None => Ok(AlignmentArg { game_id: None, path: s.into() }),
    }
}

impl SampleNimArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let s = &mut cfg.sample_nim;
        if self.shape.is_some() {
            s.shape = self.shape;
            s.scale = self.scale;
        }
        if let Some(m) = self.margin {
            s.margin = m;
        }
        if self.shortest_first {
            s.order = PlacementOrder::ShortestFirst;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameNim {
    pub game_id: String,
    pub alignment: String,
    pub g_duration: f64,
    pub important: Vec<TimeSpan>,
    pub nim: Vec<TimeSpan>,
    pub unplaced: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NimPlan {
    pub gamma: GammaParams,
    pub fitted: bool,
    pub seed: u64,
    pub games: Vec<GameNim>,
}

#[derive(Serialize)]
struct NimRow<'a> {
    game_id: &'a str,
    label: u8,
    start: f64,
    end: f64,
    duration: f64,
}

pub fn game_id_of(a: &AlignmentResult) -> String {
    Path::new(&a.g_path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| a.g_path.clone())
}

fn important_spans(a: &AlignmentResult) -> Vec<TimeSpan> {
    a.moments.iter().map(|s| s.to_time(a.g_fps)).collect()
}

pub fn run_sample_nim(cfg: &PipelineConfig, a: &SampleNimArgs) -> Result<Vec<FileHash>> {
    let inputs: Vec<&Path> = a.alignments.iter().map(|p| p.path.as_path()).collect();
    require_inputs(inputs.iter().copied())?;
    if a.g_duration.is_some() && a.alignments.len() > 1 {
        return Err(config_error("--g-duration applies to a single alignment"));
    }
    let mut run = Run::start("sample-nim", cfg, &inputs, &a.out)?;
    let alignments =
        a.alignments.iter().map(|p| read_payload::<AlignmentResult>(&p.path)).collect::<Result<Vec<_>>>()?;

    let ids: Vec<String> =
        a.alignments.iter().zip(&alignments).map(|(arg, al)| arg.game_id.clone().unwrap_or_else(|| game_id_of(al))).collect();
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(config_error("game ids are not unique; name them with GAME_ID=PATH"));
    }

    let (gamma, fitted) = match cfg.sample_nim.fixed_params() {
        Some(p) => (p, false),
        None => {
            let durations: Vec<f64> =
                alignments.iter().flat_map(|a| important_spans(a).into_iter().map(|s| s.duration())).collect();
            let p = fit_gamma_mle(&durations).context("fitting Gamma to important durations; set shape and scale")?;
            (p, true)
        }
    };
    info!(shape = gamma.shape, scale = gamma.scale, fitted, "duration model");

    let t = Transcoder::from_env();
    let mut games = Vec::new();
    for ((al, path), id) in alignments.iter().zip(&a.alignments).zip(ids) {
        let g_duration = match a.g_duration {
            Some(d) => d,
            None => {
                if !Path::new(&al.g_path).exists() {
                    return Err(config_error(format!("game {} not found; pass --g-duration", al.g_path)));
                }
                probe(&t, &al.g_path)?.duration
            }
        };
        let important = important_spans(al);
        let seed = game_seed(cfg.global.seed, &id);
        let durations = sample_durations(gamma, important.len(), seed);
        let (nim, unplaced) =
            match place_with_order(g_duration, &important, &durations, seed, cfg.sample_nim.margin, cfg.sample_nim.order)
            {
                Ok(v) => (v, 0),
                Err(SamplerError::InfeasiblePlacement { placed, unplaced }) => {
                    warn!(game = %id, unplaced, "not every duration fits between important spans");
                    (placed, unplaced)
                }
                Err(e) => return Err(e.into()),
            };
        games.push(GameNim {
            game_id: id,
            alignment: path.path.display().to_string(),
            g_duration,
            important,
            nim,
            unplaced,
        });
    }

    let plan = NimPlan { gamma, fitted, seed: cfg.global.seed, games };
    run.write_json("nim_spans.json", &plan)?;
    let rows: Vec<NimRow> = plan
        .games
        .iter()
        .flat_map(|g| {
            let im = g.important.iter().map(move |s| (1u8, s));
            let nim = g.nim.iter().map(move |s| (0u8, s));
            im.chain(nim).map(move |(label, s)| NimRow {
                game_id: &g.game_id,
                label,
                start: s.start,
                end: s.end,
                duration: s.duration(),
            })
        })
        .collect();
    run.write_text("spans.csv", &csv_string(&rows)?)?;
    run.finish()
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub alignment: PathBuf,
    /// Plan written by `sample-nim`.
    #[arg(long)]
    pub nim: PathBuf,
    /// ASR transcript as segment JSON.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Media to cut clips from; defaults to the aligned game file.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Game id in the sampling plan; defaults to the game file's stem.
    #[arg(long)]
    pub game_id: Option<String>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Seconds of audio extension for commentary lag.
    #[arg(long)]
    pub evs: Option<f64>,
    /// Write records without invoking the transcoder.
    #[arg(long)]
    pub dry_run: bool,
}

impl ExtractArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(e) = self.evs {
            cfg.extract.evs = e;
        }
        if self.dry_run {
            cfg.extract.dry_run = true;
        }
    }
}

pub fn run_extract(cfg: &PipelineConfig, a: &ExtractArgs) -> Result<Vec<FileHash>> {
    let mut inputs: Vec<&Path> = vec![&a.alignment, &a.nim];
    inputs.extend(a.transcript.as_deref());
    require_inputs(inputs.iter().copied())?;
    let alignment: AlignmentResult = read_payload(&a.alignment)?;
    let plan: NimPlan = read_payload(&a.nim)?;
    let game_id = a.game_id.clone().unwrap_or_else(|| game_id_of(&alignment));
    let game = plan
        .games
        .iter()
        .find(|g| g.game_id == game_id)
        .ok_or_else(|| data_error(format!("no sampled spans for game {game_id} in {}", a.nim.display())))?;

    let transcript = match &a.transcript {
        None => {
            warn!("no transcript given; transcript text will be empty");
            Transcript::default()
        }
        Some(p) => match read_transcript(p) {
            Err(MediaError::EmptyTranscript) => {
                warn!(path = %p.display(), "transcript has no segments");
                Transcript::default()
            }
            other => other?,
        },
    };

    let source = a.source.clone().unwrap_or_else(|| PathBuf::from(&alignment.g_path));
    if !cfg.extract.dry_run {
        require_inputs([source.as_path()])?;
    }
    let mut run = Run::start("extract", cfg, &inputs, &a.out)?;
    let clips = a.out.join("clips");
    let extractor: Box<dyn MediaExtractor> = if cfg.extract.dry_run {
        Box::new(DryRunExtractor { out_dir: clips, video_ext: cfg.extract.video_ext.clone() })
    } else {
        std::fs::create_dir_all(&clips)?;
        Box::new(TranscoderExtractor { transcoder: Transcoder::from_env(), source, out_dir: clips })
    };
    let built = build_moments(
        &GameMoments {
            game_id: &game_id,
            alignment: &alignment,
            nim_spans: &game.nim,
            transcript: &transcript,
            g_duration: game.g_duration,
            evs: cfg.extract.evs,
        },
        extractor.as_ref(),
    )?;
    info!(records = built.records.len(), rejects = built.rejects.len(), "moments built");

    let header = ManifestHeader::new(Provenance {
        config_hash: run.provenance.config_hash.clone(),
        alignment_hash: sha256_file(&a.alignment)?,
        tool_version: TOOL_VERSION.into(),
    });
    write_manifest(run.path("manifest.jsonl"), &header, &built.records)?;
    run.record("manifest.jsonl")?;
    write_rejects(run.path("rejects.jsonl"), &built.rejects)?;
    run.record("rejects.jsonl")?;
    run.write_json("evs_lag.json", &evs_lag_diagnostic(&built.records, &transcript))?;
    run.finish()
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Debug, Subcommand)]
pub enum SynthCmd {
    /// Write a synthetic game, highlight reel, transcript and ground truth.
    Generate(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    /// Game length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub fps: Option<u32>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Highlight segments as START-END seconds, comma separated, in reel order.
    #[arg(long, value_delimiter = ',', value_parser = parse_segment)]
    pub segments: Option<Vec<[f64; 2]>>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub no_overlays: bool,
}

fn parse_segment(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("expected START-END, got {s}"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x}: {e}"));
    Ok([p(a)?, p(b)?])
}

impl SynthArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let s = &mut cfg.synth;
        if let Some(d) = self.duration {
            s.g_duration = d;
        }
        if let Some(f) = self.fps {
            s.fps = f;
        }
        if let Some(w) = self.width {
            s.width = w;
        }
        if let Some(h) = self.height {
            s.height = h;
        }
        if let Some(seg) = &self.segments {
            s.segments = seg.clone();
        }
        if let Some(n) = self.noise {
            s.noise_sigma = n;
        }
        if self.no_overlays {
            s.overlays.clear();
        }
    }
}

const HIGHLIGHT_LINES: [&str; 4] =
    ["what a strike from the edge", "it is in the back of the net", "brilliant save by the keeper", "the crowd is on its feet"];
const ROUTINE_LINES: [&str; 4] =
    ["passing it around at the back", "throw in for the visitors", "they keep possession for now", "slow build up through midfield"];

/// Commentary in 2.5 s blocks; blocks centred inside a highlight use
/// excited lines, the rest routine ones.
pub fn synth_transcript(spec: &SynthSpec) -> Transcript {
    let mut segments = Vec::new();
    let mut t = 0.0;
    let mut i = 0;
    while t + 2.2 <= spec.g_duration {
        let mid = t + 1.1;
        let hot = spec.highlight_segments.iter().any(|s| s.contains(mid));
        let lines = if hot { &HIGHLIGHT_LINES } else { &ROUTINE_LINES };
        segments.push(Segment { start: t, end: t + 2.2, text: lines[i % lines.len()].to_string() });
        t += 2.5;
        i += 1;
    }
    Transcript { segments }
}

pub fn run_synth(cfg: &PipelineConfig, a: &SynthArgs) -> Result<Vec<FileHash>> {
    let spec = cfg.synth.spec(cfg.global.seed);
    spec.validate()?;
    let mut run = Run::start("synth generate", cfg, &[], &a.out)?;
    let truth = write_corpus(&spec, &a.out)?;
    for name in ["game.y4m", "highlight.y4m", "ground_truth.json"] {
        run.record(name)?;
    }
    run.write_text("transcript.json", &(serde_json::to_string_pretty(&synth_transcript(&spec))? + "\n"))?;
    info!(spans = truth.g_spans.len(), frames = spec.frame_count(), "synthetic pair written");
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_arg_syntax() {
        let a = parse_alignment_arg("g1=x/alignment.json").unwrap();
        assert_eq!(a.game_id.as_deref(), Some("g1"));
        assert_eq!(a.path, PathBuf::from("x/alignment.json"));
        assert_eq!(parse_alignment_arg("a.json").unwrap().game_id, None);
        assert!(parse_alignment_arg("=a.json").is_err());
    }

    #[test]
    fn segment_syntax() {
        assert_eq!(parse_segment("5-15.5").unwrap(), [5.0, 15.5]);
        assert!(parse_segment("5").is_err());
    }

    #[test]
    fn evaluation_matches_spans() {
        let truth = [TimeSpan::new(5.0, 15.0), TimeSpan::new(30.0, 40.0)];
        let found = [TimeSpan::new(5.2, 15.0), TimeSpan::new(50.0, 52.0)];
        let ev = evaluate_against(&found, &truth);
        assert!((ev.spans[0].iou - 0.98).abs() < 1e-12);
        assert!((ev.spans[0].boundary_error - 0.2).abs() < 1e-12);
        assert_eq!(ev.spans[1].best, None);
        assert_eq!(ev.min_iou, 0.0);
        assert_eq!(ev.extra_moments, 1);
    }

    #[test]
    fn transcript_marks_highlights() {
        let spec = SynthSpec { highlight_segments: vec![TimeSpan::new(10.0, 20.0)], ..Default::default() };
        let t = synth_transcript(&spec);
        assert!(t.overlapping_pairs().is_empty());
        let hot = t.segments.iter().filter(|s| HIGHLIGHT_LINES.contains(&s.text.as_str())).count();
        assert_eq!(hot, 4);
    }
}
