//! Run configuration: one TOML file with a section per subcommand. Command
//! line flags are applied on top before the configuration is validated and
//! hashed.

use crate::exit::config_error;
use anyhow::{Context, Result};
use moments_core::analysis::{DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use moments_core::baselines::{NgramConfig, TrainConfig};
use moments_core::extractor::{sha256_hex, DEFAULT_EVS};
use moments_core::localizer::LocalizerConfig;
use moments_core::media::DEFAULT_DOWNSCALE_WIDTH;
use moments_core::sampler::{GammaParams, PlacementOrder, DEFAULT_MARGIN};
use moments_core::ssim::SsimParams;
use moments_core::synth::{OverlayKind, SynthSpec, DEFAULT_PATTERN_SPEED};
use moments_core::TimeSpan;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub global: GlobalSection,
    pub localize: LocalizeSection,
    pub sample_nim: SampleNimSection,
    pub extract: ExtractSection,
    pub metrics: MetricsSection,
    pub contrib: ContribSection,
    pub baseline: BaselineSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalSection {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime choose.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeSection {
    /// Decode width in pixels; 0 keeps the native resolution.
    pub downscale: usize,
    #[serde(flatten)]
    pub search: LocalizerConfig,
    pub ssim: SsimParams,
}

impl Default for LocalizeSection {
    fn default() -> Self {
        LocalizeSection {
            downscale: DEFAULT_DOWNSCALE_WIDTH,
            search: LocalizerConfig::default(),
            ssim: SsimParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleNimSection {
    /// Fixed Gamma shape; fitted from the important durations when unset.
    pub shape: Option<f64>,
    pub scale: Option<f64>,
    pub margin: f64,
    pub order: PlacementOrder,
}

impl Default for SampleNimSection {
    fn default() -> Self {
        SampleNimSection { shape: None, scale: None, margin: DEFAULT_MARGIN, order: PlacementOrder::default() }
    }
}

impl SampleNimSection {
    pub fn fixed_params(&self) -> Option<GammaParams> {
        Some(GammaParams { shape: self.shape?, scale: self.scale? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub evs: f64,
    /// Record clip paths without running the transcoder.
    pub dry_run: bool,
    pub video_ext: String,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection { evs: DEFAULT_EVS, dry_run: false, video_ext: "mkv".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub resamples: usize,
    pub level: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { resamples: DEFAULT_RESAMPLES, level: DEFAULT_LEVEL }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContribSection {
    pub normalized: bool,
    /// Keep only records whose best unimodal difference reaches this value.
    pub reliable_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[default]
    Ngram,
    Mfcc,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub features: FeatureKind,
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub n_lo: usize,
    pub n_hi: usize,
    pub min_df: usize,
    pub with_std: bool,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let n = NgramConfig::default();
        BaselineSection {
            features: FeatureKind::Ngram,
            l2: t.l2,
            max_iter: t.max_iter,
            tol: t.tol,
            n_lo: n.n_lo,
            n_hi: n.n_hi,
            min_df: n.min_df,
            with_std: true,
        }
    }
}

impl BaselineSection {
    pub fn train(&self) -> TrainConfig {
        TrainConfig { l2: self.l2, max_iter: self.max_iter, tol: self.tol }
    }

    pub fn ngram(&self) -> NgramConfig {
        NgramConfig { n_lo: self.n_lo, n_hi: self.n_hi, min_df: self.min_df }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub g_duration: f64,
    pub fps: u32,
    pub width: usize,
    pub height: usize,
    /// Highlight segments as `[start, end]` seconds, in reel order.
    pub segments: Vec<[f64; 2]>,
    pub overlays: Vec<OverlayKind>,
    pub noise_sigma: f64,
    pub pattern_speed: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            g_duration: 120.0,
            fps: 5,
            width: 96,
            height: 64,
            segments: vec![[10.0, 18.0], [50.0, 64.0], [95.0, 106.0]],
            overlays: vec![OverlayKind::Scorecard, OverlayKind::AdBanner],
            noise_sigma: 4.0,
            pattern_speed: DEFAULT_PATTERN_SPEED,
        }
    }
}

impl SynthSection {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            g_duration: self.g_duration,
            fps: self.fps,
            width: self.width,
            height: self.height,
            highlight_segments: self.segments.iter().map(|&[a, b]| TimeSpan::new(a, b)).collect(),
            overlay_kinds: self.overlays.clone(),
            noise_sigma: self.noise_sigma,
            pattern_speed: self.pattern_speed,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Range checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        self.localize.search.validate()?;
        self.localize.ssim.validate()?;
        let m = &self.metrics;
        if m.resamples == 0 || !(m.level > 0.0 && m.level < 1.0) {
            return Err(config_error("metrics: resamples must be positive and level in (0, 1)"));
        }
        if !(self.extract.evs >= 0.0) {
            return Err(config_error("extract: evs must be non-negative"));
        }
        let s = &self.sample_nim;
        if s.shape.is_some() != s.scale.is_some() {
            return Err(config_error("sample_nim: set both shape and scale or neither"));
        }
        if let Some(p) = s.fixed_params() {
            if !(p.shape > 0.0 && p.scale > 0.0) {
                return Err(config_error("sample_nim: shape and scale must be positive"));
            }
        }
        if !(s.margin >= 0.0) {
            return Err(config_error("sample_nim: margin must be non-negative"));
        }
        let b = &self.baseline;
        if !(b.l2 >= 0.0) || b.max_iter == 0 || !(b.tol > 0.0) {
            return Err(config_error("baseline: need l2 >= 0, max_iter > 0 and tol > 0"));
        }
        if b.n_lo == 0 || b.n_lo > b.n_hi {
            return Err(config_error("baseline: need 1 <= n_lo <= n_hi"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Fails with a configuration error when an input path is missing.
pub fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(config_error(format!("input not found: {}", p.display())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_with_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            [global]
            seed = 7
            [localize]
            sim_threshold = 0.7
            monotonic = false
            [localize.ssim]
            window_size = 7
            [metrics]
            resamples = 200
            "#,
        )
        .unwrap();
        assert_eq!(cfg.global.seed, 7);
        assert_eq!(cfg.localize.search.sim_threshold, 0.7);
        assert!(!cfg.localize.search.monotonic);
        assert_eq!(cfg.localize.ssim.window_size, 7);
        assert_eq!(cfg.localize.downscale, DEFAULT_DOWNSCALE_WIDTH);
        assert_eq!(cfg.metrics.resamples, 200);
        assert_eq!(cfg.metrics.level, DEFAULT_LEVEL);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_sections_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[nope]\na = 1").is_err());
        assert!(toml::from_str::<PipelineConfig>("[metrics]\nresample = 1").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.global.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn validation_catches_ranges() {
        let mut c = PipelineConfig::default();
        c.metrics.level = 1.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.sample_nim.shape = Some(2.0);
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.localize.search.sim_threshold = 2.0;
        assert!(c.validate().is_err());
    }
}
