//! Subprocess contract with the transcoder, exercised through stand-in
//! ffmpeg/ffprobe scripts. Skipped when python3 is unavailable.

use moments_core::extractor::{build_moments, GameMoments, TranscoderExtractor};
use moments_core::localizer::{AlignmentResult, LocalizerConfig, StepCounts};
use moments_core::media::{
    decode_gray, extract_clip, open_video, read_wav, MediaError, PeriodPick, Selection, Transcoder,
    Transcript,
};
use moments_core::ssim::SsimParams;
use moments_core::{FrameSpan, Rational, TimeSpan};
use std::collections::BTreeMap;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::Command;

struct Fixture {
    dir: tempfile::TempDir,
    transcoder: Transcoder,
}

impl Fixture {
    fn new() -> Option<Fixture> {
        if Command::new("python3").arg("--version").output().is_err() {
            eprintln!("python3 not found; skipping transcoder contract tests");
            return None;
        }
        let dir = tempfile::tempdir().unwrap();
        let install = |name: &str| -> PathBuf {
            let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
            let dst = dir.path().join(name);
            std::fs::copy(&src, &dst).unwrap();
            std::fs::set_permissions(&dst, std::fs::Permissions::from_mode(0o755)).unwrap();
            dst
        };
        let transcoder = Transcoder { ffmpeg: install("fake_ffmpeg.py"), ffprobe: install("fake_ffprobe.py") };
        Some(Fixture { dir, transcoder })
    }

    fn media(&self, name: &str, body: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn game(&self) -> PathBuf {
        self.media("game.mkv", r#"{"fps": "5/1", "width": 32, "height": 24, "frame_count": 50}"#)
    }
}

fn expected_pixel(x: usize, y: usize, k: u64) -> u8 {
    ((3 * x + 5 * y) as u64 + 7 * k).rem_euclid(256) as u8
}

#[test]
fn probe_reads_stream_metadata() {
    let Some(fx) = Fixture::new() else { return };
    let meta = fx.transcoder.probe(&fx.game()).unwrap();
    assert_eq!(meta.fps, Rational::integer(5));
    assert_eq!(meta.frame_count, 50);
    assert_eq!((meta.width, meta.height), (32, 24));
    assert_eq!(meta.duration, 10.0);
}

#[test]
fn probe_failure_is_a_decode_error() {
    let Some(fx) = Fixture::new() else { return };
    let bad = fx.media("bad.mkv", "not media");
    assert!(matches!(fx.transcoder.probe(&bad), Err(MediaError::Decode { .. })));
    let missing = fx.dir.path().join("missing.mkv");
    assert!(matches!(fx.transcoder.probe(&missing), Err(MediaError::FileNotFound(_))));
}

#[test]
fn missing_binary_is_reported() {
    let Some(fx) = Fixture::new() else { return };
    let t = Transcoder { ffmpeg: "/nonexistent/ffmpeg".into(), ffprobe: "/nonexistent/ffprobe".into() };
    assert!(matches!(t.probe(&fx.game()), Err(MediaError::Transcode(_))));
}

#[test]
fn streams_every_frame_in_order() {
    let Some(fx) = Fixture::new() else { return };
    let v = open_video(&fx.transcoder, fx.game(), None).unwrap();
    let frames: Vec<_> = v.stream(Selection::All).unwrap().map(Result::unwrap).collect();
    assert_eq!(frames.len(), 50);
    for (k, (i, f)) in frames.iter().enumerate() {
        assert_eq!(*i, k as u64);
        assert_eq!(f.get(4, 3), expected_pixel(4, 3, k as u64));
    }
}

#[test]
fn selection_and_periodic_sampling_use_native_indices() {
    let Some(fx) = Fixture::new() else { return };
    let v = open_video(&fx.transcoder, fx.game(), None).unwrap();
    let got: Vec<_> = v.stream(Selection::Indices(vec![3, 17, 49])).unwrap().map(Result::unwrap).collect();
    assert_eq!(got.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![3, 17, 49]);
    assert_eq!(got[1].1.get(0, 0), expected_pixel(0, 0, 17));

    let centers: Vec<u64> = decode_gray(v.as_ref(), Some(Rational::integer(1)), PeriodPick::Center)
        .unwrap()
        .map(|r| r.unwrap().0)
        .collect();
    assert_eq!(centers, vec![2, 7, 12, 17, 22, 27, 32, 37, 42, 47]);
    assert!(decode_gray(v.as_ref(), Some(Rational::integer(10)), PeriodPick::Center).is_err());
}

#[test]
fn downscaled_decode_has_scaled_packets() {
    let Some(fx) = Fixture::new() else { return };
    let v = open_video(&fx.transcoder, fx.game(), Some(16)).unwrap();
    assert_eq!(v.frame_size(), (16, 12));
    let (_, f) = v.stream(Selection::All).unwrap().next().unwrap().unwrap();
    assert_eq!((f.width(), f.height()), (16, 12));
}

#[test]
fn truncated_stream_is_a_broken_pipe() {
    let Some(fx) = Fixture::new() else { return };
    let p = fx.media("trunc.mkv", r#"{"fps": "5/1", "width": 32, "height": 24, "frame_count": 4, "truncate": true}"#);
    let v = open_video(&fx.transcoder, p, None).unwrap();
    let items: Vec<_> = v.stream(Selection::All).unwrap().collect();
    assert_eq!(items.len(), 5);
    assert!(items[..4].iter().all(|r| r.is_ok()));
    assert!(matches!(items[4], Err(MediaError::PipeBroken(_))));
}

#[test]
fn dropping_a_stream_early_does_not_hang() {
    let Some(fx) = Fixture::new() else { return };
    let p = fx.media("long.mkv", r#"{"fps": "25/1", "width": 64, "height": 48, "frame_count": 5000}"#);
    let v = open_video(&fx.transcoder, p, None).unwrap();
    let first: Vec<_> = v.stream(Selection::All).unwrap().take(2).collect();
    assert_eq!(first.len(), 2);
}

#[test]
fn clip_extraction_checks_durations() {
    let Some(fx) = Fixture::new() else { return };
    let out = tempfile::tempdir().unwrap();
    let clip = extract_clip(
        &fx.transcoder,
        fx.game(),
        TimeSpan::new(2.0, 6.0),
        TimeSpan::new(2.0, 9.0),
        out.path(),
        "g_im_0000",
    )
    .unwrap();
    assert!(clip.video.ends_with("g_im_0000.video.mkv"));
    let wav = read_wav(&clip.audio).unwrap();
    assert_eq!((wav.channels, wav.sample_rate), (1, 16000));
    assert!((wav.duration() - 7.0).abs() < 1e-9);
    assert_eq!(fx.transcoder.probe(Path::new(&clip.video)).unwrap().duration, 4.0);

    let err = extract_clip(&fx.transcoder, fx.game(), TimeSpan::new(2.0, 6.0), TimeSpan::new(2.0, 12.0), out.path(), "x");
    assert!(matches!(err, Err(MediaError::SpanOutOfRange { .. })));
}

#[test]
fn failed_extractions_land_in_the_reject_log() {
    let Some(fx) = Fixture::new() else { return };
    let out = tempfile::tempdir().unwrap();
    let alignment = AlignmentResult {
        h_path: "h".into(),
        g_path: "g".into(),
        h_fps: Rational::integer(5),
        g_fps: Rational::integer(5),
        per_second: vec![],
        frame_matches: BTreeMap::new(),
        moments: vec![FrameSpan::new(5, 20)],
        localized_fraction: 1.0,
        matched_frame_fraction: 1.0,
        evaluations: StepCounts::default(),
        config: LocalizerConfig::default(),
        ssim: SsimParams::default(),
    };
    let extractor =
        TranscoderExtractor { transcoder: fx.transcoder.clone(), source: fx.game(), out_dir: out.path().into() };
    let input = GameMoments {
        game_id: "g",
        alignment: &alignment,
        nim_spans: &[TimeSpan::new(5.0, 8.0), TimeSpan::new(9.0, 30.0)],
        transcript: &Transcript::default(),
        g_duration: 10.0,
        evs: 3.0,
    };
    let built = build_moments(&input, &extractor).unwrap();
    // the second span is clamped to [9, 10) and extracts fine
    assert_eq!(built.records.len(), 3);
    assert!(built.rejects.is_empty());
    assert_eq!(built.records[0].audio_span, TimeSpan::new(1.0, 7.0));

    let bad = TranscoderExtractor {
        transcoder: Transcoder { ffmpeg: "/nonexistent/ffmpeg".into(), ffprobe: fx.transcoder.ffprobe.clone() },
        source: fx.game(),
        out_dir: out.path().into(),
    };
    let built = build_moments(&input, &bad).unwrap();
    assert!(built.records.is_empty());
    assert_eq!(built.rejects.len(), 3);
}

#[test]
fn short_clip_output_is_rejected() {
    let Some(fx) = Fixture::new() else { return };
    let wrapper = fx.dir.path().join("short_ffmpeg.sh");
    std::fs::write(
        &wrapper,
        format!("#!/bin/sh\nFAKE_FFMPEG_SHORT=1 exec {} \"$@\"\n", fx.transcoder.ffmpeg.display()),
    )
    .unwrap();
    std::fs::set_permissions(&wrapper, std::fs::Permissions::from_mode(0o755)).unwrap();
    let t = Transcoder { ffmpeg: wrapper, ffprobe: fx.transcoder.ffprobe.clone() };
    let out = tempfile::tempdir().unwrap();
    let err = extract_clip(&t, fx.game(), TimeSpan::new(1.0, 5.0), TimeSpan::new(1.0, 8.0), out.path(), "s");
    assert!(matches!(err, Err(MediaError::Transcode(_))));
}
