//! Training and evaluation protocol: one fixed train/test split, a scaler
//! fitted on the training profiles, and independent models per seed whose
//! test metrics are aggregated as mean and standard deviation.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ProfileId, Snapshot};
use crate::embed::{tokenize_title, train_word_embeddings, EmbedError, SkipGramParams, WordEmbedding};
use crate::features::{FeatureError, FeatureVector, GroupSet, Scaler, Vectorizer, VectorizerOptions};
use crate::golddata::{filter_trivial, label_profiles, split_train_test, GoldError, Interval, LabeledExample, SplitManifest};
use crate::metrics::{aggregate_runs, AggregateMetrics, MetricsError, RunMetrics};
use crate::mlp::{train, EpochMetrics, MlpError, NetworkConfig, NetworkState, Sample};
use crate::model::{ModelArtifact, ModelError};
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("profile {0} is labeled but has no feature vector")]
    MissingFeatures(ProfileId),
    #[error("split manifest names profile {0}, which is not labeled")]
    UnknownSplitProfile(ProfileId),
    #[error("features line {line}: {message}")]
    FeatureFile { line: usize, message: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gold(#[from] GoldError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One line of a features file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub pid: ProfileId,
    pub groups: GroupSet,
    pub x: Vec<f64>,
}

pub fn write_feature_rows<W: Write>(mut w: W, rows: &[FeatureRow]) -> Result<(), ExperimentError> {
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r).expect("row serializes"))?;
    }
    Ok(())
}

pub fn read_feature_rows<R: BufRead>(reader: R) -> Result<BTreeMap<ProfileId, FeatureVector>, ExperimentError> {
    let mut out = BTreeMap::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| ExperimentError::FeatureFile { line: no + 1, message };
        let row: FeatureRow = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if row.x.len() != row.groups.width() {
            return Err(err(format!("{} values for groups {}", row.x.len(), row.groups)));
        }
        out.insert(row.pid, FeatureVector { values: row.x, groups: row.groups });
    }
    Ok(out)
}

/// Design matrices for one split and one feature subset, scaled with a
/// scaler fitted on the training rows only.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub groups: GroupSet,
    pub scaler: Scaler,
    pub train_ids: Vec<ProfileId>,
    pub test_ids: Vec<ProfileId>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn prepare_dataset(
    features: &BTreeMap<ProfileId, FeatureVector>,
    labels: &[LabeledExample],
    split: &SplitManifest,
    groups: GroupSet,
) -> Result<Dataset, ExperimentError> {
    let label_of: BTreeMap<&str, u8> = labels
        .iter()
        .map(|e| (e.profile_id.as_str(), u8::from(e.label.is_homonym())))
        .collect();
    let raw = |ids: &[ProfileId]| -> Result<Vec<(Vec<f64>, u8)>, ExperimentError> {
        ids.iter()
            .map(|id| {
                let label = *label_of
                    .get(id.as_str())
                    .ok_or_else(|| ExperimentError::UnknownSplitProfile(id.clone()))?;
                let fv = features.get(id).ok_or_else(|| ExperimentError::MissingFeatures(id.clone()))?;
                Ok((fv.select(groups)?.values, label))
            })
            .collect()
    };
    let train_raw = raw(&split.train)?;
    let test_raw = raw(&split.test)?;
    let scaler = Scaler::fit(groups, &train_raw.iter().map(|r| &r.0[..]).collect::<Vec<_>>())?;
    let scale = |rows: Vec<(Vec<f64>, u8)>| -> Result<Vec<Sample>, FeatureError> {
        rows.into_iter()
            .map(|(x, label)| Ok(Sample { x: scaler.apply(&x)?, label }))
            .collect()
    };
    let train = scale(train_raw)?;
    let test = scale(test_raw)?;
    Ok(Dataset {
        groups,
        train_ids: split.train.clone(),
        test_ids: split.test.clone(),
        scaler,
        train,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: RunMetrics,
    pub trace: Vec<EpochMetrics>,
    #[serde(skip)]
    pub network: Option<NetworkState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub groups: GroupSet,
    pub runs: Vec<SeedRun>,
    pub aggregate: AggregateMetrics,
}

impl GroupResult {
    pub fn table_row(&self) -> String {
        self.aggregate.table_row(&self.groups.to_string())
    }
}

/// Trains one model per seed on the test-held-out dataset. The test set
/// doubles as the per-epoch evaluation set for the metric trace only; it
/// never influences training.
pub fn run_seeds(
    data: &Dataset,
    base: &NetworkConfig,
    seeds: &[u64],
    keep_networks: bool,
) -> Result<GroupResult, ExperimentError> {
    let runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = base.clone();
            cfg.input_dim = data.groups.width();
            cfg.seed = seed;
            let (net, trace) = train(&cfg, &data.train, &data.test)?;
            let scores: Vec<f64> = data
                .test
                .iter()
                .map(|s| net.forward(&s.x).map(|p| p.p_homonym()))
                .collect::<Result<_, _>>()?;
            let labels: Vec<bool> = data.test.iter().map(|s| s.label == 1).collect();
            Ok(SeedRun {
                seed,
                metrics: RunMetrics::evaluate(&scores, &labels)?,
                trace,
                network: keep_networks.then_some(net),
            })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let metrics: Vec<RunMetrics> = runs.iter().map(|r| r.metrics).collect();
    Ok(GroupResult {
        groups: data.groups,
        aggregate: aggregate_runs(&metrics)?,
        runs,
    })
}

pub fn title_corpus(snap: &Snapshot) -> Vec<Vec<String>> {
    snap.publications.values().map(|p| tokenize_title(&p.title)).collect()
}

pub fn vectorize_all(vz: &Vectorizer<'_>, ids: &[ProfileId], groups: GroupSet) -> Result<Vec<FeatureRow>, FeatureError> {
    let vectors = vz.vectorize_many(ids, groups)?;
    Ok(ids
        .iter()
        .zip(vectors)
        .map(|(pid, fv)| FeatureRow {
            pid: pid.clone(),
            groups: fv.groups,
            x: fv.values,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub embedding: SkipGramParams,
    pub vectorizer: VectorizerOptions,
    pub network: NetworkConfig,
    pub split_seed: u64,
    pub embedding_seed: u64,
    pub model_seeds: Vec<u64>,
    pub group_sets: Vec<GroupSet>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            synth: SynthConfig::default(),
            embedding: SkipGramParams::default(),
            vectorizer: VectorizerOptions::default(),
            network: NetworkConfig::new(GroupSet::FULL.width(), 0),
            split_seed: 0,
            embedding_seed: 0,
            model_seeds: (0..25).collect(),
            group_sets: ["B", "BV", "BCTVY"].iter().map(|g| g.parse().expect("valid groups")).collect(),
        }
    }
}

/// Everything a synthetic end-to-end run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub embedding: WordEmbedding,
    pub labels: Vec<LabeledExample>,
    pub split: SplitManifest,
    pub features: BTreeMap<ProfileId, FeatureVector>,
    pub results: Vec<GroupResult>,
    /// Full-feature model of the first seed, with its scaler.
    pub model: ModelArtifact,
    pub ranking: Vec<crate::ranking::RankedProfile>,
}

impl PipelineOutput {
    pub fn result(&self, groups: GroupSet) -> Option<&GroupResult> {
        self.results.iter().find(|r| r.groups == groups)
    }
}

/// Generate corpus, train embeddings, label, split, vectorize, train the
/// seed ensemble per feature subset and rank all profiles.
pub fn run_synthetic_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, ExperimentError> {
    let corpus = generate(&cfg.synth)?;
    let snap = &corpus.snapshot;
    let embedding = train_word_embeddings(&title_corpus(snap), &cfg.embedding, cfg.embedding_seed)?;
    let interval: Interval = cfg.synth.interval();
    let (labeled, _) = label_profiles(snap, &corpus.events, interval);
    let labels = filter_trivial(snap, labeled);
    let split = split_train_test(&labels, 0.8, cfg.split_seed)?;

    let vz = Vectorizer::new(snap, &embedding, cfg.vectorizer);
    let ids: Vec<ProfileId> = labels.iter().map(|e| e.profile_id.clone()).collect();
    let features: BTreeMap<ProfileId, FeatureVector> = ids
        .iter()
        .cloned()
        .zip(vz.vectorize_many(&ids, GroupSet::FULL)?)
        .collect();

    let mut results = Vec::new();
    let mut model = None;
    for &groups in &cfg.group_sets {
        let data = prepare_dataset(&features, &labels, &split, groups)?;
        let keep = groups == GroupSet::FULL;
        let mut res = run_seeds(&data, &cfg.network, &cfg.model_seeds, keep)?;
        if keep {
            let net = res.runs[0].network.take().expect("network kept");
            res.runs.iter_mut().for_each(|r| r.network = None);
            model = Some(ModelArtifact::new(groups, cfg.vectorizer, data.scaler.clone(), net)?);
        }
        results.push(res);
    }
    let model = match model {
        Some(m) => m,
        None => {
            let data = prepare_dataset(&features, &labels, &split, GroupSet::FULL)?;
            let mut net_cfg = cfg.network.clone();
            net_cfg.input_dim = GroupSet::FULL.width();
            net_cfg.seed = cfg.model_seeds.first().copied().unwrap_or(0);
            let (net, _) = train(&net_cfg, &data.train, &data.test)?;
            ModelArtifact::new(GroupSet::FULL, cfg.vectorizer, data.scaler, net)?
        }
    };
    let ranking = crate::ranking::score_all(&vz, &model)?;
    Ok(PipelineOutput {
        embedding,
        labels,
        split,
        features,
        results,
        model,
        ranking,
    })
}
