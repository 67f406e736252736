use thiserror::Error;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Media(#[from] crate::media::MediaError),
    #[error(transparent)]
    Ssim(#[from] crate::ssim::SsimError),
    #[error(transparent)]
    Localize(#[from] crate::localizer::LocalizeError),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
    #[error(transparent)]
    Extract(#[from] crate::extractor::ExtractError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
    #[error(transparent)]
    Baseline(#[from] crate::baselines::BaselineError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
