//! Unimodal logistic-regression baselines over moment manifests.

use super::analyze::{load_records, metrics_for, write_metrics, PredictionRow};
use crate::artifacts::{csv_string, read_payload, FileHash, Run};
use crate::config::{require_inputs, FeatureKind, PipelineConfig};
use crate::exit::{config_error, data_error};
use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use moments_core::baselines::{
    avg_embedding_features, mfcc_features, ngram_features, ngram_transform, predict_logreg, split_3to1,
    train_logreg, FeatureMatrix, FeatureSpec, LogRegModel, NgramConfig,
};
use moments_core::extractor::MomentRecord;
use moments_core::media::read_wav;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use tracing::info;

#[derive(Debug, Subcommand)]
pub enum BaselineCmd {
    /// Fit on a stratified 3:1 split and score the held-out quarter.
    Train(TrainArgs),
    /// Score records with a saved model.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub features: Option<FeatureKind>,
    /// Pre-extracted frame embeddings, required for `embedding` features.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let b = &mut cfg.baseline;
        if let Some(f) = self.features {
            b.features = f;
        }
        if let Some(l) = self.l2 {
            b.l2 = l;
        }
        if let Some(m) = self.max_iter {
            b.max_iter = m;
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model written by `baseline train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Split written by `baseline train`; only its test ids are scored.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

struct Corpus {
    by_id: HashMap<String, MomentRecord>,
    ids: Vec<String>,
}

impl Corpus {
    fn new(records: Vec<MomentRecord>) -> Result<Corpus> {
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let by_id: HashMap<String, MomentRecord> = records.into_iter().map(|r| (r.id.clone(), r)).collect();
        if by_id.len() != ids.len() {
            return Err(data_error("duplicate moment ids across manifests"));
        }
        Ok(Corpus { by_id, ids })
    }

    fn labels(&self, ids: &[String]) -> Result<Vec<u8>> {
        ids.iter().map(|id| Ok(self.get(id)?.label.into())).collect()
    }

    fn texts(&self, ids: &[String]) -> Result<Vec<String>> {
        ids.iter().map(|id| Ok(self.get(id)?.transcript_text.clone())).collect()
    }

    fn get(&self, id: &str) -> Result<&MomentRecord> {
        self.by_id.get(id).ok_or_else(|| data_error(format!("moment {id} is not in the manifests")))
    }
}

fn mfcc_matrix(corpus: &Corpus, ids: &[String], with_std: bool) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = ids
        .par_iter()
        .map(|id| {
            let path = &corpus.get(id)?.media_paths.audio;
            let w = read_wav(path).with_context(|| format!("reading audio of {id}"))?;
            mfcc_features(&w, with_std).with_context(|| format!("MFCC of {id}"))
        })
        .collect::<Result<_>>()?;
    let dim = rows.first().map_or(0, Vec::len);
    Ok(FeatureMatrix::new(dim, rows.concat(), ids.to_vec(), None)?)
}

fn embedding_matrix(path: Option<&Path>, ids: &[String]) -> Result<FeatureMatrix> {
    let path = path.ok_or_else(|| config_error("embedding features need --embeddings"))?;
    Ok(avg_embedding_features(path)?.select(ids)?)
}

/// Features for `ids` as described by a stored spec.
fn featurize(spec: &FeatureSpec, corpus: &Corpus, ids: &[String], embeddings: Option<&Path>) -> Result<FeatureMatrix> {
    match spec {
        FeatureSpec::Ngram { n_lo, n_hi, min_df, vocabulary } => {
            let cfg = NgramConfig { n_lo: *n_lo, n_hi: *n_hi, min_df: *min_df };
            Ok(ngram_transform(ids, &corpus.texts(ids)?, vocabulary, cfg)?)
        }
        FeatureSpec::Mfcc { with_std } => mfcc_matrix(corpus, ids, *with_std),
        FeatureSpec::Embedding { dim } => {
            let x = embedding_matrix(embeddings, ids)?;
            if x.dim != *dim {
                return Err(data_error(format!("embeddings have dimension {}, model expects {dim}", x.dim)));
            }
            Ok(x)
        }
    }
}

fn predictions(model: &LogRegModel, x: &FeatureMatrix, labels: &[u8]) -> Result<Vec<PredictionRow>> {
    let (preds, scores) = predict_logreg(model, x)?;
    Ok(x.row_ids
        .iter()
        .zip(labels)
        .zip(preds.iter().zip(&scores))
        .map(|((id, &label), (&prediction, &score))| PredictionRow { id: id.clone(), label, prediction, score: Some(score) })
        .collect())
}

pub fn run_train(cfg: &PipelineConfig, a: &TrainArgs) -> Result<Vec<FileHash>> {
    let mut inputs: Vec<&Path> = a.manifests.iter().map(|p| p.as_path()).collect();
    inputs.extend(a.embeddings.as_deref());
    require_inputs(inputs.iter().copied())?;
    let mut run = Run::start("baseline train", cfg, &inputs, &a.out)?;
    let corpus = Corpus::new(load_records(&a.manifests)?)?;
    let labels = corpus.labels(&corpus.ids)?;
    let (train, test) = split_3to1(&corpus.ids, &labels, cfg.global.seed)?;
    let b = &cfg.baseline;

    let (x_train, x_test, spec) = match b.features {
        FeatureKind::Ngram => {
            let (xtr, spec) = ngram_features(&train, &corpus.texts(&train)?, b.ngram())?;
            let xte = featurize(&spec, &corpus, &test, None)?;
            (xtr, xte, spec)
        }
        FeatureKind::Mfcc => {
            let spec = FeatureSpec::Mfcc { with_std: b.with_std };
            let all = mfcc_matrix(&corpus, &corpus.ids, b.with_std)?;
            (all.select(&train)?, all.select(&test)?, spec)
        }
        FeatureKind::Embedding => {
            let all = embedding_matrix(a.embeddings.as_deref(), &corpus.ids)?;
            let spec = FeatureSpec::Embedding { dim: all.dim };
            (all.select(&train)?, all.select(&test)?, spec)
        }
    };
    info!(train = train.len(), test = test.len(), dim = x_train.dim, "features ready");

    let (mut model, report) = train_logreg(&x_train, &corpus.labels(&train)?, b.train())?;
    model.feature_spec = Some(spec);
    info!(iterations = report.iterations, converged = report.converged, "training done");

    let rows = predictions(&model, &x_test, &corpus.labels(&test)?)?;
    let metrics = metrics_for(&rows, cfg)?;
    run.write_json("model.json", &model)?;
    run.write_json("train_report.json", &report)?;
    run.write_json("split.json", &Split { train, test })?;
    run.write_text("predictions.csv", &csv_string(&rows)?)?;
    write_metrics(&mut run, &metrics, false)?;
    run.finish()
}

pub fn run_eval(cfg: &PipelineConfig, a: &EvalArgs) -> Result<Vec<FileHash>> {
    let mut inputs: Vec<&Path> = vec![&a.model];
    inputs.extend(a.manifests.iter().map(|p| p.as_path()));
    inputs.extend(a.embeddings.as_deref());
    inputs.extend(a.split.as_deref());
    require_inputs(inputs.iter().copied())?;
    let mut run = Run::start("baseline eval", cfg, &inputs, &a.out)?;
    let model: LogRegModel = read_payload(&a.model)?;
    let spec = model.feature_spec.clone().ok_or_else(|| data_error("model carries no feature description"))?;
    let corpus = Corpus::new(load_records(&a.manifests)?)?;
    let ids = match &a.split {
        Some(p) => read_payload::<Split>(p)?.test,
        None => corpus.ids.clone(),
    };
    let x = featurize(&spec, &corpus, &ids, a.embeddings.as_deref())?;
    let rows = predictions(&model, &x, &corpus.labels(&ids)?)?;
    let metrics = metrics_for(&rows, cfg)?;
    run.write_text("predictions.csv", &csv_string(&rows)?)?;
    write_metrics(&mut run, &metrics, a.report)?;
    run.finish()
}
