//! Moment assembly: frame spans to timestamps, eye-voice-span extension of
//! the audio window, transcript collection, and the JSONL moments manifest.

use crate::localizer::AlignmentResult;
use crate::media::{self, ClipPaths, MediaError, Transcoder, Transcript};
use crate::types::{FrameSpan, Rational, TimeSpan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;
use tracing::{info, warn};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_EVS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("invalid frame span [{start}, {end})")]
    InvalidSpan { start: u64, end: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ExtractError> = std::result::Result<T, E>;

/// Importance label; serialized as 1 (important) or 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    NonImportant,
    Important,
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::NonImportant => 0,
            Label::Important => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::NonImportant),
            1 => Ok(Label::Important),
            _ => Err(format!("label must be 0 or 1, got {v}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub id: String,
    pub game_id: String,
    pub label: Label,
    pub video_span: TimeSpan,
    pub audio_span: TimeSpan,
    pub transcript_text: String,
    pub media_paths: ClipPaths,
}

impl MomentRecord {
    pub fn is_consistent(&self) -> bool {
        self.video_span.is_valid()
            && self.audio_span.start == self.video_span.start
            && self.audio_span.end >= self.video_span.end
    }
}

/// `[start/fps, end/fps)` in seconds.
pub fn frames_to_timespan(span: FrameSpan, fps: Rational) -> Result<TimeSpan> {
    if span.end <= span.start {
        return Err(ExtractError::InvalidSpan { start: span.start, end: span.end });
    }
    if !fps.is_valid() {
        return Err(ExtractError::InvalidArgument(format!("frame rate {fps} is not positive")));
    }
    Ok(span.to_time(fps))
}

/// Extends the audio window `evs` seconds past the video end. When a
/// transcript segment contains the extended end, the window is stretched to
/// that segment's end so the commentary is not cut mid-sentence. The result
/// never runs past `g_duration`.
pub fn apply_evs(video_span: TimeSpan, t: &Transcript, evs: f64, g_duration: f64) -> TimeSpan {
    let nominal = video_span.end + evs.max(0.0);
    let end = t
        .segments
        .iter()
        .find(|s| s.start <= nominal && nominal < s.end)
        .map_or(nominal, |s| s.end);
    TimeSpan::new(video_span.start, end.min(g_duration).max(video_span.end))
}

/// Texts of segments with more than half of their own duration inside
/// `span`, joined by single spaces in transcript order.
pub fn collect_transcript(t: &Transcript, span: TimeSpan) -> String {
    t.segments
        .iter()
        .filter(|s| span.overlap(&s.span()) > 0.5 * s.span().duration())
        .map(|s| s.text.trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Produces the media files for one moment.
pub trait MediaExtractor: Sync {
    fn extract(&self, video_span: TimeSpan, audio_span: TimeSpan, stem: &str) -> media::Result<ClipPaths>;
}

/// Cuts clips from the source recording with an external transcoder.
pub struct TranscoderExtractor {
    pub transcoder: Transcoder,
    pub source: PathBuf,
    pub out_dir: PathBuf,
}

impl MediaExtractor for TranscoderExtractor {
    fn extract(&self, video_span: TimeSpan, audio_span: TimeSpan, stem: &str) -> media::Result<ClipPaths> {
        media::extract_clip(&self.transcoder, &self.source, video_span, audio_span, &self.out_dir, stem)
    }
}

/// Records the paths clips would be written to without touching media.
pub struct DryRunExtractor {
    pub out_dir: PathBuf,
    pub video_ext: String,
}

impl MediaExtractor for DryRunExtractor {
    fn extract(&self, video_span: TimeSpan, audio_span: TimeSpan, stem: &str) -> media::Result<ClipPaths> {
        if !video_span.is_valid() || audio_span.end < video_span.end {
            return Err(MediaError::InvalidArgument(format!("inconsistent spans for {stem}")));
        }
        let path = |name: String| self.out_dir.join(name).to_string_lossy().into_owned();
        Ok(ClipPaths {
            video: path(format!("{stem}.video.{}", self.video_ext)),
            audio: path(format!("{stem}.audio.wav")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub id: String,
    pub label: Label,
    pub video_span: TimeSpan,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOutput {
    pub records: Vec<MomentRecord>,
    pub rejects: Vec<Reject>,
}

/// Inputs for one game.
pub struct GameMoments<'a> {
    pub game_id: &'a str,
    pub alignment: &'a AlignmentResult,
    pub nim_spans: &'a [TimeSpan],
    pub transcript: &'a Transcript,
    pub g_duration: f64,
    pub evs: f64,
}

/// One record per important span (from the alignment's moments) and per
/// non-important span. Failed extractions land in `rejects`.
pub fn build_moments(input: &GameMoments<'_>, extractor: &dyn MediaExtractor) -> Result<BuildOutput> {
    if !(input.evs >= 0.0) {
        return Err(ExtractError::InvalidArgument(format!("negative eye-voice span {}", input.evs)));
    }
    let mut planned = Vec::new();
    for (i, span) in input.alignment.moments.iter().enumerate() {
        let video = frames_to_timespan(*span, input.alignment.g_fps)?;
        planned.push((format!("{}_im_{i:04}", input.game_id), Label::Important, video));
    }
    for (i, span) in input.nim_spans.iter().enumerate() {
        if !span.is_valid() {
            return Err(ExtractError::InvalidArgument(format!("non-important span {i} is empty")));
        }
        planned.push((format!("{}_nim_{i:04}", input.game_id), Label::NonImportant, *span));
    }

    let results: Vec<std::result::Result<MomentRecord, Reject>> = planned
        .into_par_iter()
        .map(|(id, label, video)| {
            let video = TimeSpan::new(video.start, video.end.min(input.g_duration));
            let audio = apply_evs(video, input.transcript, input.evs, input.g_duration);
            match extractor.extract(video, audio, &id) {
                Ok(paths) => Ok(MomentRecord {
                    transcript_text: collect_transcript(input.transcript, audio),
                    id,
                    game_id: input.game_id.to_string(),
                    label,
                    video_span: video,
                    audio_span: audio,
                    media_paths: paths,
                }),
                Err(e) => Err(Reject { id, label, video_span: video, reason: e.to_string() }),
            }
        })
        .collect();

    let mut out = BuildOutput::default();
    for r in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(rej) => {
                warn!(id = %rej.id, reason = %rej.reason, "moment rejected");
                out.rejects.push(rej);
            }
        }
    }
    info!(game = input.game_id, records = out.records.len(), rejects = out.rejects.len(), "moments built");
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub alignment_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub provenance: Provenance,
}

impl ManifestHeader {
    pub fn new(provenance: Provenance) -> Self {
        ManifestHeader { schema_version: MANIFEST_SCHEMA_VERSION, provenance }
    }
}

/// Writes `lines` to `path` through a temporary sibling and a rename, so a
/// failed write never leaves a partial file behind.
pub fn write_jsonl_atomic<T: Serialize>(path: impl AsRef<Path>, head: Option<&impl Serialize>, lines: &[T]) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| ExtractError::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        let json = |e: serde_json::Error| ExtractError::Io(e.into());
        if let Some(h) = head {
            serde_json::to_writer(&mut f, h).map_err(json)?;
            f.write_all(b"\n")?;
        }
        for l in lines {
            serde_json::to_writer(&mut f, l).map_err(json)?;
            f.write_all(b"\n")?;
        }
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    };
    let res = write();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

pub fn write_manifest(path: impl AsRef<Path>, header: &ManifestHeader, records: &[MomentRecord]) -> Result<()> {
    write_jsonl_atomic(path, Some(header), records)
}

pub fn write_rejects(path: impl AsRef<Path>, rejects: &[Reject]) -> Result<()> {
    write_jsonl_atomic(path, None::<&()>, rejects)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<(ManifestHeader, Vec<MomentRecord>)> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ExtractError::Media(MediaError::FileNotFound(path.to_path_buf())),
        _ => e.into(),
    })?;
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| ExtractError::Manifest { line: i + 1, reason: e.to_string() };
        if header.is_none() {
            let h: ManifestHeader = serde_json::from_str(&line).map_err(bad)?;
            if h.schema_version != MANIFEST_SCHEMA_VERSION {
                return Err(ExtractError::Manifest {
                    line: 1,
                    reason: format!("unsupported schema version {}", h.schema_version),
                });
            }
            header = Some(h);
        } else {
            records.push(serde_json::from_str(&line).map_err(bad)?);
        }
    }
    let header = header.ok_or(ExtractError::Manifest { line: 1, reason: "missing header".into() })?;
    Ok((header, records))
}

/// Lag between an important moment's video start and the first transcript
/// segment overlapping its audio window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvsLag {
    pub id: String,
    pub lag: Option<f64>,
}

pub fn evs_lag_diagnostic(records: &[MomentRecord], t: &Transcript) -> Vec<EvsLag> {
    records
        .iter()
        .filter(|r| r.label == Label::Important)
        .map(|r| EvsLag {
            id: r.id.clone(),
            lag: t
                .segments
                .iter()
                .find(|s| s.span().intersects(&r.audio_span))
                .map(|s| s.start - r.video_span.start),
        })
        .collect()
}
