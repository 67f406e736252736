//! Video probing, grayscale decoding, clip extraction and ASR transcripts.
//!
//! Compressed media is never decoded in-process. An FFmpeg-compatible
//! transcoder is spawned and raw 8-bit gray frames are read from its
//! standard output. YUV4MPEG2 files (the synthetic corpus format) are read
//! directly since they already hold raw planes.
//!
//! The transcoder binaries default to `ffmpeg` and `ffprobe` on `PATH` and
//! can be overridden with the `MOMENTS_FFMPEG` and `MOMENTS_FFPROBE`
//! environment variables.

use crate::types::{GrayFrame, Rational, TimeSpan};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use thiserror::Error;
use tracing::{debug, warn};

pub const FFMPEG_ENV: &str = "MOMENTS_FFMPEG";
pub const FFPROBE_ENV: &str = "MOMENTS_FFPROBE";

/// Default width frames are scaled to before similarity scoring.
pub const DEFAULT_DOWNSCALE_WIDTH: usize = 256;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("transcoder stream broke: {0}")]
    PipeBroken(String),
    #[error("span [{start:.3}, {end:.3}) is outside [0, {duration:.3}] or malformed")]
    SpanOutOfRange { start: f64, end: f64, duration: f64 },
    #[error("transcode failed: {0}")]
    Transcode(String),
    #[error("transcript parse error: {0}")]
    Parse(String),
    #[error("transcript has no segments")]
    EmptyTranscript,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MediaError {
    /// Conditions callers may log and continue past.
    pub fn is_warning(&self) -> bool {
        matches!(self, MediaError::EmptyTranscript)
    }

    fn decode(path: &Path, reason: impl Into<String>) -> Self {
        MediaError::Decode { path: path.to_path_buf(), reason: reason.into() }
    }
}

pub type Result<T, E = MediaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub path: String,
    pub fps: Rational,
    pub frame_count: u64,
    /// Seconds; always `frame_count / fps`.
    pub duration: f64,
    pub width: usize,
    pub height: usize,
}

impl VideoMeta {
    pub fn new(path: impl Into<String>, fps: Rational, frame_count: u64, width: usize, height: usize) -> Self {
        VideoMeta {
            path: path.into(),
            fps,
            frame_count,
            duration: frame_count as f64 / fps.as_f64(),
            width,
            height,
        }
    }

    /// Complete seconds; a trailing partial second is excluded.
    pub fn full_seconds(&self) -> u64 {
        self.fps.full_seconds(self.frame_count)
    }

    /// Output dimensions after an optional aspect-preserving downscale.
    pub fn scaled_size(&self, downscale: Option<usize>) -> (usize, usize) {
        match downscale {
            Some(w) if w != self.width => (w, GrayFrame::scaled_height(self.width, self.height, w)),
            _ => (self.width, self.height),
        }
    }
}

/// Which native frames a decode pass yields.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    All,
    /// Strictly increasing native indices.
    Indices(Vec<u64>),
}

/// How a periodic sampler picks its frame within each period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodPick {
    /// Center-most frame of the period.
    Center,
    /// First frame at or after the period start.
    Initial,
}

/// Native indices of one frame per `1/sample_fps` period. Only complete
/// periods are sampled.
pub fn periodic_indices(meta: &VideoMeta, sample_fps: Rational, pick: PeriodPick) -> Result<Vec<u64>> {
    if !sample_fps.is_valid() {
        return Err(MediaError::InvalidArgument("sample_fps must be positive".into()));
    }
    let (fn_, fd) = (meta.fps.num as u128, meta.fps.den as u128);
    let (sn, sd) = (sample_fps.num as u128, sample_fps.den as u128);
    // sample_fps <= fps  <=>  sn * fd <= fn * sd
    if sn * fd > fn_ * sd {
        return Err(MediaError::InvalidArgument(format!(
            "sample_fps {sample_fps} exceeds native {}",
            meta.fps
        )));
    }
    // frames per period = (fn * sd) / (fd * sn)
    let num = fn_ * sd;
    let den = fd * sn;
    let periods = (meta.frame_count as u128 * den / num) as u64;
    let start_of = |k: u128| (k * num).div_ceil(den);
    Ok((0..periods as u128)
        .map(|k| {
            let (lo, hi) = (start_of(k), start_of(k + 1));
            let idx = match pick {
                PeriodPick::Initial => lo,
                PeriodPick::Center => ((2 * k + 1) * num / (2 * den)).clamp(lo, hi.max(lo + 1) - 1),
            };
            idx as u64
        })
        .collect())
}

pub type FrameItem = Result<(u64, GrayFrame)>;

/// A decodable video that yields gray frames in temporal order.
pub trait FrameSource: Send + Sync {
    fn meta(&self) -> &VideoMeta;

    /// Width and height of emitted frames.
    fn frame_size(&self) -> (usize, usize);

    /// Streams the selected frames in increasing index order. Dropping the
    /// iterator early releases the underlying decoder.
    fn stream(&self, selection: Selection) -> Result<Box<dyn Iterator<Item = FrameItem> + Send + '_>>;

    /// Collects the selected frames.
    fn fetch(&self, indices: &[u64]) -> Result<Vec<(u64, GrayFrame)>> {
        self.stream(Selection::Indices(indices.to_vec()))?.collect()
    }
}

/// In-memory frames, mostly for tests and synthetic data.
#[derive(Debug, Clone)]
pub struct MemoryVideo {
    meta: VideoMeta,
    frames: Vec<GrayFrame>,
}

impl MemoryVideo {
    pub fn new(path: impl Into<String>, fps: Rational, frames: Vec<GrayFrame>) -> Self {
        let (w, h) = frames.first().map(|f| (f.width(), f.height())).unwrap_or((0, 0));
        let meta = VideoMeta::new(path, fps, frames.len() as u64, w, h);
        MemoryVideo { meta, frames }
    }

    pub fn frames(&self) -> &[GrayFrame] {
        &self.frames
    }
}

impl FrameSource for MemoryVideo {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    fn frame_size(&self) -> (usize, usize) {
        (self.meta.width, self.meta.height)
    }

    fn stream(&self, selection: Selection) -> Result<Box<dyn Iterator<Item = FrameItem> + Send + '_>> {
        match selection {
            Selection::All => Ok(Box::new(
                self.frames.iter().enumerate().map(|(i, f)| Ok((i as u64, f.clone()))),
            )),
            Selection::Indices(idx) => {
                check_selection(&idx, self.meta.frame_count)?;
                Ok(Box::new(idx.into_iter().map(move |i| Ok((i, self.frames[i as usize].clone())))))
            }
        }
    }
}

fn check_selection(indices: &[u64], frame_count: u64) -> Result<()> {
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MediaError::InvalidArgument("selection must be strictly increasing".into()));
    }
    if let Some(&last) = indices.last() {
        if last >= frame_count {
            return Err(MediaError::InvalidArgument(format!(
                "frame {last} beyond frame count {frame_count}"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// YUV4MPEG2
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    Mono,
    C420,
    C422,
    C444,
}

impl Chroma {
    fn frame_bytes(self, w: usize, h: usize) -> usize {
        let luma = w * h;
        match self {
            Chroma::Mono => luma,
            Chroma::C420 => luma + 2 * (w.div_ceil(2) * h.div_ceil(2)),
            Chroma::C422 => luma + 2 * (w.div_ceil(2) * h),
            Chroma::C444 => 3 * luma,
        }
    }
}

#[derive(Debug, Clone)]
struct Y4mHeader {
    width: usize,
    height: usize,
    fps: Rational,
    chroma: Chroma,
    header_len: u64,
}

fn parse_y4m_header(path: &Path, reader: &mut impl BufRead) -> Result<Y4mHeader> {
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let header_len = line.len() as u64;
    let text = std::str::from_utf8(&line).map_err(|_| MediaError::decode(path, "non-ASCII y4m header"))?;
    let mut tokens = text.trim_end().split(' ');
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(MediaError::decode(path, "missing YUV4MPEG2 signature"));
    }
    let (mut width, mut height, mut fps, mut chroma) = (None, None, None, Chroma::C420);
    for tok in tokens {
        let (tag, val) = tok.split_at(tok.len().min(1));
        match tag {
            "W" => width = val.parse().ok(),
            "H" => height = val.parse().ok(),
            "F" => {
                fps = val.split_once(':').and_then(|(n, d)| Some(Rational::new(n.parse().ok()?, d.parse().ok()?)))
            }
            "C" => {
                chroma = match val {
                    "mono" => Chroma::Mono,
                    v if v.starts_with("420") => Chroma::C420,
                    v if v.starts_with("422") => Chroma::C422,
                    v if v.starts_with("444") => Chroma::C444,
                    other => return Err(MediaError::decode(path, format!("unsupported colorspace {other}"))),
                }
            }
            _ => {}
        }
    }
    match (width, height, fps) {
        (Some(width), Some(height), Some(fps)) if fps.is_valid() && width > 0 && height > 0 => {
            Ok(Y4mHeader { width, height, fps, chroma, header_len })
        }
        _ => Err(MediaError::decode(path, "incomplete y4m header")),
    }
}

/// Native reader for YUV4MPEG2 files. Only the luma plane is used.
#[derive(Debug, Clone)]
pub struct Y4mVideo {
    path: PathBuf,
    meta: VideoMeta,
    header: Y4mHeader,
    stride: u64,
    downscale: Option<usize>,
}

impl Y4mVideo {
    pub fn open(path: impl AsRef<Path>, downscale: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = open_existing(path)?;
        let file_len = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let header = parse_y4m_header(path, &mut reader)?;
        // Frame headers are expected to be the bare "FRAME\n" marker.
        let stride = 6 + header.chroma.frame_bytes(header.width, header.height) as u64;
        let body = file_len - header.header_len;
        if body % stride != 0 {
            return Err(MediaError::decode(path, "truncated y4m stream"));
        }
        let meta = VideoMeta::new(
            path.to_string_lossy(),
            header.fps,
            body / stride,
            header.width,
            header.height,
        );
        Ok(Y4mVideo { path: path.to_path_buf(), meta, header, stride, downscale })
    }

    fn read_frame(&self, reader: &mut BufReader<File>, index: u64, seek: bool) -> Result<GrayFrame> {
        if seek {
            reader.seek(SeekFrom::Start(self.header.header_len + index * self.stride))?;
        }
        let mut marker = [0u8; 6];
        reader.read_exact(&mut marker).map_err(|e| eof_to_decode(&self.path, e))?;
        if &marker != b"FRAME\n" {
            return Err(MediaError::decode(&self.path, format!("bad frame marker at frame {index}")));
        }
        let (w, h) = (self.header.width, self.header.height);
        let mut luma = vec![0u8; w * h];
        reader.read_exact(&mut luma).map_err(|e| eof_to_decode(&self.path, e))?;
        let skip = self.stride as i64 - 6 - (w * h) as i64;
        if skip > 0 {
            reader.seek_relative(skip)?;
        }
        let frame = GrayFrame::new(w, h, luma).expect("luma size");
        Ok(match self.downscale {
            Some(dw) if dw != w => frame.resize_to_width(dw),
            _ => frame,
        })
    }
}

fn eof_to_decode(path: &Path, e: std::io::Error) -> MediaError {
    if e.kind() == ErrorKind::UnexpectedEof {
        MediaError::decode(path, "unexpected end of stream")
    } else {
        MediaError::Io(e)
    }
}

impl FrameSource for Y4mVideo {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    fn frame_size(&self) -> (usize, usize) {
        self.meta.scaled_size(self.downscale)
    }

    fn stream(&self, selection: Selection) -> Result<Box<dyn Iterator<Item = FrameItem> + Send + '_>> {
        let indices = match selection {
            Selection::All => (0..self.meta.frame_count).collect::<Vec<_>>(),
            Selection::Indices(idx) => {
                check_selection(&idx, self.meta.frame_count)?;
                idx
            }
        };
        let mut reader = BufReader::with_capacity(1 << 20, File::open(&self.path)?);
        let mut next_pos: Option<u64> = None;
        Ok(Box::new(indices.into_iter().map(move |i| {
            let seek = next_pos != Some(i);
            let f = self.read_frame(&mut reader, i, seek)?;
            next_pos = Some(i + 1);
            Ok((i, f))
        })))
    }
}

/// Writes frames as a monochrome YUV4MPEG2 stream.
pub fn write_y4m<'a>(
    path: impl AsRef<Path>,
    fps: Rational,
    frames: impl IntoIterator<Item = &'a GrayFrame>,
) -> Result<u64> {
    let mut frames = frames.into_iter().peekable();
    let first = frames
        .peek()
        .ok_or_else(|| MediaError::InvalidArgument("no frames to write".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "YUV4MPEG2 W{w} H{h} F{}:{} Ip A1:1 Cmono", fps.num, fps.den)?;
    let mut n = 0;
    for f in frames {
        if f.width() != w || f.height() != h {
            return Err(MediaError::InvalidArgument("frame size changed mid-stream".into()));
        }
        out.write_all(b"FRAME\n")?;
        out.write_all(f.pixels())?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

fn open_existing(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => MediaError::FileNotFound(path.to_path_buf()),
        _ => MediaError::Io(e),
    })
}

fn is_y4m(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

// ---------------------------------------------------------------------------
// Transcoder subprocess
// ---------------------------------------------------------------------------

/// Locations of the FFmpeg-compatible binaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcoder {
    pub ffmpeg: PathBuf,
    pub ffprobe: PathBuf,
}

impl Default for Transcoder {
    fn default() -> Self {
        Transcoder { ffmpeg: "ffmpeg".into(), ffprobe: "ffprobe".into() }
    }
}

#[derive(Deserialize)]
struct ProbeOutput {
    #[serde(default)]
    streams: Vec<ProbeStream>,
}

#[derive(Deserialize)]
struct ProbeStream {
    width: Option<usize>,
    height: Option<usize>,
    r_frame_rate: Option<String>,
    avg_frame_rate: Option<String>,
    nb_read_frames: Option<String>,
    nb_frames: Option<String>,
    duration: Option<String>,
}

impl Transcoder {
    /// Uses `MOMENTS_FFMPEG` / `MOMENTS_FFPROBE` when set.
    pub fn from_env() -> Self {
        let mut t = Transcoder::default();
        if let Some(p) = std::env::var_os(FFMPEG_ENV) {
            t.ffmpeg = p.into();
        }
        if let Some(p) = std::env::var_os(FFPROBE_ENV) {
            t.ffprobe = p.into();
        }
        t
    }

    pub fn probe(&self, path: &Path) -> Result<VideoMeta> {
        open_existing(path)?;
        let out = Command::new(&self.ffprobe)
            .args(["-v", "error", "-select_streams", "v:0", "-count_frames", "-show_entries"])
            .arg("stream=width,height,r_frame_rate,avg_frame_rate,nb_read_frames,nb_frames,duration")
            .args(["-of", "json"])
            .arg(path)
            .output()
            .map_err(|e| MediaError::Transcode(format!("cannot run {}: {e}", self.ffprobe.display())))?;
        if !out.status.success() {
            return Err(MediaError::decode(path, String::from_utf8_lossy(&out.stderr).trim().to_string()));
        }
        let parsed: ProbeOutput = serde_json::from_slice(&out.stdout)
            .map_err(|e| MediaError::decode(path, format!("unreadable probe output: {e}")))?;
        let s = parsed
            .streams
            .into_iter()
            .next()
            .ok_or_else(|| MediaError::decode(path, "no video stream"))?;
        let fps = s
            .r_frame_rate
            .as_deref()
            .and_then(Rational::parse)
            .or_else(|| s.avg_frame_rate.as_deref().and_then(Rational::parse))
            .ok_or_else(|| MediaError::decode(path, "unknown frame rate"))?;
        let count = s
            .nb_read_frames
            .as_deref()
            .or(s.nb_frames.as_deref())
            .and_then(|v| v.parse::<u64>().ok())
            .or_else(|| {
                let d: f64 = s.duration.as_deref()?.parse().ok()?;
                Some((d * fps.as_f64()).round() as u64)
            })
            .ok_or_else(|| MediaError::decode(path, "unknown frame count"))?;
        let (w, h) = match (s.width, s.height) {
            (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
            _ => return Err(MediaError::decode(path, "unknown frame size")),
        };
        Ok(VideoMeta::new(path.to_string_lossy(), fps, count, w, h))
    }

    fn spawn_decoder(&self, path: &Path, size: (usize, usize), scale: bool) -> Result<Child> {
        let mut cmd = Command::new(&self.ffmpeg);
        cmd.args(["-v", "error", "-nostdin", "-i"]).arg(path);
        if scale {
            cmd.args(["-vf", &format!("scale={}:{}:flags=bilinear", size.0, size.1)]);
        }
        cmd.args(["-fps_mode", "passthrough", "-f", "rawvideo", "-pix_fmt", "gray", "-"]);
        debug!(?cmd, "spawning decoder");
        cmd.stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| MediaError::Transcode(format!("cannot run {}: {e}", self.ffmpeg.display())))
    }

    /// Cuts `[span.start, span.end)` of `input` into `output`.
    fn cut(&self, input: &Path, span: TimeSpan, output: &Path, audio: bool) -> Result<()> {
        let mut cmd = Command::new(&self.ffmpeg);
        cmd.args(["-v", "error", "-nostdin", "-y", "-ss", &format!("{:.6}", span.start), "-i"])
            .arg(input)
            .args(["-t", &format!("{:.6}", span.duration())]);
        if audio {
            cmd.args(["-vn", "-ac", "1", "-ar", "16000"]);
        } else {
            cmd.arg("-an");
        }
        cmd.arg(output);
        let out = cmd
            .stdin(Stdio::null())
            .output()
            .map_err(|e| MediaError::Transcode(format!("cannot run {}: {e}", self.ffmpeg.display())))?;
        if !out.status.success() {
            return Err(MediaError::Transcode(String::from_utf8_lossy(&out.stderr).trim().to_string()));
        }
        Ok(())
    }
}

/// Raw gray packets read from a transcoder's stdout.
struct PipeFrames {
    child: Child,
    stdout: BufReader<ChildStdout>,
    width: usize,
    height: usize,
    next_index: u64,
    wanted: Option<std::vec::IntoIter<u64>>,
    pending: Option<u64>,
    done: bool,
}

impl PipeFrames {
    fn read_packet(&mut self) -> Result<Option<Vec<u8>>> {
        let mut buf = vec![0u8; self.width * self.height];
        let mut filled = 0;
        while filled < buf.len() {
            match self.stdout.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(MediaError::PipeBroken(e.to_string())),
            }
        }
        if filled == 0 {
            let status = self.child.wait()?;
            if !status.success() {
                let mut err = String::new();
                if let Some(mut s) = self.child.stderr.take() {
                    let _ = s.read_to_string(&mut err);
                }
                return Err(MediaError::PipeBroken(format!("transcoder exited with {status}: {}", err.trim())));
            }
            return Ok(None);
        }
        if filled < buf.len() {
            return Err(MediaError::PipeBroken(format!(
                "partial frame at index {}: {filled} of {} bytes",
                self.next_index,
                buf.len()
            )));
        }
        Ok(Some(buf))
    }
}

impl Iterator for PipeFrames {
    type Item = FrameItem;

    fn next(&mut self) -> Option<FrameItem> {
        if self.done {
            return None;
        }
        if let Some(w) = self.wanted.as_mut() {
            if self.pending.is_none() {
                self.pending = w.next();
            }
            if self.pending.is_none() {
                self.done = true;
                return None;
            }
        }
        loop {
            let packet = match self.read_packet() {
                Ok(Some(p)) => p,
                Ok(None) => {
                    self.done = true;
                    return self.pending.map(|i| {
                        Err(MediaError::PipeBroken(format!("stream ended before frame {i}")))
                    });
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            let index = self.next_index;
            self.next_index += 1;
            if self.pending.is_some_and(|p| p != index) {
                continue;
            }
            self.pending = None;
            let frame = GrayFrame::new(self.width, self.height, packet).expect("packet size");
            return Some(Ok((index, frame)));
        }
    }
}

impl Drop for PipeFrames {
    fn drop(&mut self) {
        if !self.done {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

/// A video decoded through the transcoder subprocess.
#[derive(Debug, Clone)]
pub struct TranscodedVideo {
    transcoder: Transcoder,
    path: PathBuf,
    meta: VideoMeta,
    downscale: Option<usize>,
}

impl TranscodedVideo {
    pub fn open(transcoder: Transcoder, path: impl AsRef<Path>, downscale: Option<usize>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let meta = transcoder.probe(&path)?;
        Ok(TranscodedVideo { transcoder, path, meta, downscale })
    }
}

impl FrameSource for TranscodedVideo {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    fn frame_size(&self) -> (usize, usize) {
        self.meta.scaled_size(self.downscale)
    }

    fn stream(&self, selection: Selection) -> Result<Box<dyn Iterator<Item = FrameItem> + Send + '_>> {
        let wanted = match selection {
            Selection::All => None,
            Selection::Indices(idx) => {
                check_selection(&idx, self.meta.frame_count)?;
                Some(idx.into_iter())
            }
        };
        let size = self.frame_size();
        let scale = size != (self.meta.width, self.meta.height);
        let mut child = self.transcoder.spawn_decoder(&self.path, size, scale)?;
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Box::new(PipeFrames {
            child,
            stdout: BufReader::with_capacity(1 << 20, stdout),
            width: size.0,
            height: size.1,
            next_index: 0,
            wanted,
            pending: None,
            done: false,
        }))
    }
}

/// Opens a video, reading `.y4m` natively and everything else through the
/// transcoder.
pub fn open_video(
    transcoder: &Transcoder,
    path: impl AsRef<Path>,
    downscale: Option<usize>,
) -> Result<Box<dyn FrameSource>> {
    let path = path.as_ref();
    if is_y4m(path) {
        Ok(Box::new(Y4mVideo::open(path, downscale)?))
    } else {
        Ok(Box::new(TranscodedVideo::open(transcoder.clone(), path, downscale)?))
    }
}

pub fn probe(transcoder: &Transcoder, path: impl AsRef<Path>) -> Result<VideoMeta> {
    let path = path.as_ref();
    if is_y4m(path) {
        Ok(Y4mVideo::open(path, None)?.meta)
    } else {
        transcoder.probe(path)
    }
}

/// Decodes gray frames, optionally one per `1/sample_fps` period.
///
/// Indices in the stream always refer to native frame numbering.
pub fn decode_gray<'a>(
    source: &'a dyn FrameSource,
    sample_fps: Option<Rational>,
    pick: PeriodPick,
) -> Result<Box<dyn Iterator<Item = FrameItem> + Send + 'a>> {
    match sample_fps {
        None => source.stream(Selection::All),
        Some(r) => {
            let idx = periodic_indices(source.meta(), r, pick)?;
            source.stream(Selection::Indices(idx))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipPaths {
    pub video: String,
    pub audio: String,
}

/// Writes a video clip for `video_span` and a mono 16 kHz WAV for
/// `audio_span`, then verifies both durations are within 0.1 s.
pub fn extract_clip(
    transcoder: &Transcoder,
    path: impl AsRef<Path>,
    video_span: TimeSpan,
    audio_span: TimeSpan,
    out_dir: impl AsRef<Path>,
    stem: &str,
) -> Result<ClipPaths> {
    let path = path.as_ref();
    let meta = probe(transcoder, path)?;
    check_clip_spans(&meta, video_span, audio_span)?;
    let out_dir = out_dir.as_ref();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("mp4");
    let video_out = out_dir.join(format!("{stem}.video.{ext}"));
    let audio_out = out_dir.join(format!("{stem}.audio.wav"));
    transcoder.cut(path, video_span, &video_out, false)?;
    transcoder.cut(path, audio_span, &audio_out, true)?;

    let got = probe(transcoder, &video_out)?.duration;
    if (got - video_span.duration()).abs() > 0.1 {
        return Err(MediaError::Transcode(format!(
            "video clip lasts {got:.3}s, expected {:.3}s",
            video_span.duration()
        )));
    }
    let wav = read_wav(&audio_out)?;
    let got = wav.duration();
    if (got - audio_span.duration()).abs() > 0.1 {
        return Err(MediaError::Transcode(format!(
            "audio clip lasts {got:.3}s, expected {:.3}s",
            audio_span.duration()
        )));
    }
    Ok(ClipPaths {
        video: video_out.to_string_lossy().into_owned(),
        audio: audio_out.to_string_lossy().into_owned(),
    })
}

pub fn check_clip_spans(meta: &VideoMeta, video: TimeSpan, audio: TimeSpan) -> Result<()> {
    let out = |s: TimeSpan| MediaError::SpanOutOfRange { start: s.start, end: s.end, duration: meta.duration };
    for s in [video, audio] {
        if !s.is_valid() || s.start < 0.0 || s.end > meta.duration + 1e-9 {
            return Err(out(s));
        }
    }
    if audio.start != video.start || audio.end < video.end {
        return Err(out(audio));
    }
    Ok(())
}

/// Decoded PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
}

impl Waveform {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform { samples, sample_rate, channels: 1 }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / (self.sample_rate as f64 * self.channels.max(1) as f64)
    }
}

/// Reads a PCM WAV file into interleaved samples scaled to `[-1, 1]`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    open_existing(path)?;
    let reader = hound::WavReader::open(path).map_err(|e| MediaError::decode(path, e.to_string()))?;
    let spec = reader.spec();
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
        }
    }
    .map_err(|e| MediaError::decode(path, e.to_string()))?;
    Ok(Waveform { samples, sample_rate: spec.sample_rate, channels: spec.channels })
}

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub text: String,
}

impl Segment {
    pub fn span(&self) -> TimeSpan {
        TimeSpan::new(self.start, self.end)
    }
}

/// ASR output as time-stamped segments sorted by start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub segments: Vec<Segment>,
}

impl Transcript {
    /// Validates and sorts segments.
    pub fn from_segments(mut segments: Vec<Segment>) -> Result<Self> {
        for (i, s) in segments.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite()) || s.end <= s.start {
                return Err(MediaError::Parse(format!(
                    "segment {i} has end {} <= start {}",
                    s.end, s.start
                )));
            }
        }
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        Ok(Transcript { segments })
    }

    /// Index pairs of consecutive segments that overlap in time.
    pub fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        self.segments
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].start < w[0].end)
            .map(|(i, _)| (i, i + 1))
            .collect()
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            segments: Vec<Segment>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| MediaError::Parse(e.to_string()))?;
        let t = Transcript::from_segments(raw.segments)?;
        let overlaps = t.overlapping_pairs();
        if !overlaps.is_empty() {
            warn!(count = overlaps.len(), "transcript has overlapping segments");
        }
        Ok(t)
    }
}

/// Reads segment-JSON. A transcript without segments is reported as
/// [`MediaError::EmptyTranscript`], which callers may treat as a warning.
pub fn read_transcript(path: impl AsRef<Path>) -> Result<Transcript> {
    let path = path.as_ref();
    let mut text = String::new();
    open_existing(path)?.read_to_string(&mut text)?;
    let t = Transcript::parse_json(&text)?;
    if t.segments.is_empty() {
        return Err(MediaError::EmptyTranscript);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(fps: u32, frames: u64) -> VideoMeta {
        VideoMeta::new("x", Rational::integer(fps), frames, 64, 36)
    }

    #[test]
    fn meta_duration_consistent() {
        let m = meta(25, 135000);
        assert_eq!(m.duration, 5400.0);
        assert_eq!(meta(1, 1).duration, 1.0);
    }

    #[test]
    fn center_and_initial_selectors() {
        let m = meta(25, 250);
        let c = periodic_indices(&m, Rational::integer(1), PeriodPick::Center).unwrap();
        assert_eq!(c.len(), 10);
        assert_eq!(&c[..3], &[12, 37, 62]);
        let i = periodic_indices(&m, Rational::integer(1), PeriodPick::Initial).unwrap();
        assert_eq!(&i[..3], &[0, 25, 50]);
        // partial trailing second is dropped
        let m = meta(25, 260);
        assert_eq!(periodic_indices(&m, Rational::integer(1), PeriodPick::Center).unwrap().len(), 10);
        assert!(periodic_indices(&m, Rational::integer(30), PeriodPick::Center).is_err());
    }

    #[test]
    fn periodic_indices_strictly_increasing_ntsc() {
        let m = VideoMeta::new("x", Rational::new(30000, 1001), 1800, 8, 8);
        for pick in [PeriodPick::Center, PeriodPick::Initial] {
            let idx = periodic_indices(&m, Rational::integer(1), pick).unwrap();
            assert_eq!(idx.len() as f64, m.duration.floor());
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn transcript_parse_sorts_and_validates() {
        let t = Transcript::parse_json(
            r#"{"segments":[{"start":4.5,"end":9.0,"text":"b"},{"start":0,"end":4.2,"text":"Kick off"}]}"#,
        )
        .unwrap();
        assert_eq!(t.segments.len(), 2);
        assert_eq!(t.segments[0].text, "Kick off");
        assert!(t.overlapping_pairs().is_empty());

        let bad = Transcript::parse_json(r#"{"segments":[{"start":3,"end":3,"text":"x"}]}"#);
        assert!(matches!(bad, Err(MediaError::Parse(_))));
        assert!(matches!(Transcript::parse_json("{"), Err(MediaError::Parse(_))));
    }

    #[test]
    fn overlaps_are_flagged() {
        let t = Transcript::parse_json(
            r#"{"segments":[{"start":0,"end":5,"text":"a"},{"start":4,"end":6,"text":"b"}]}"#,
        )
        .unwrap();
        assert_eq!(t.overlapping_pairs(), vec![(0, 1)]);
    }

    #[test]
    fn clip_span_checks() {
        let m = meta(25, 25 * 200);
        let v = TimeSpan::new(100.0, 130.0);
        assert!(check_clip_spans(&m, v, TimeSpan::new(100.0, 133.0)).is_ok());
        assert!(matches!(
            check_clip_spans(&m, v, TimeSpan::new(100.0, 129.0)),
            Err(MediaError::SpanOutOfRange { .. })
        ));
        assert!(matches!(
            check_clip_spans(&m, TimeSpan::new(190.0, 205.0), TimeSpan::new(190.0, 205.0)),
            Err(MediaError::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn memory_selection_validation() {
        let v = MemoryVideo::new("m", Rational::integer(5), vec![GrayFrame::filled(4, 4, 1); 10]);
        assert!(v.fetch(&[3, 2]).is_err());
        assert!(v.fetch(&[10]).is_err());
        assert_eq!(v.fetch(&[1, 4]).unwrap().len(), 2);
    }
}
