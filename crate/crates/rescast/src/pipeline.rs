//! End-to-end orchestration: derive targets from job profiles, bin them,
//! split, and train the four models in parallel.

use std::collections::BTreeMap;
use std::thread;

use rescast_core::discretize::BinError;
use rescast_core::encode::NumericTransform;
use rescast_core::ingest::{split_test, split_validation, Dataset, IngestError, JobProfile, LabeledTask, SplitSpec, StratifyOn, Target, TaskRecord};
use rescast_core::model::{fit_target_model, ModelError};
use rescast_core::nnet::{TrainConfig, TrainReport, DEFAULT_HIDDEN};
use rescast_core::targets::{aggregate_scouts, ResourceConfig, TargetError};
use rescast_core::{BinSet, ModelSet, ResourceTargets};

use crate::csvio::TargetRow;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Bins(#[from] BinError),
    #[error("{target}: {source}")]
    Model { target: Target, source: ModelError },
    #[error("task {task_id}: {source}")]
    Target { task_id: String, source: TargetError },
    #[error("no task has derived targets")]
    NothingToTrain,
}

/// Aggregates the jobs of each task into continuous targets, ordered by task id.
/// With `scouts_only`, tasks without scout jobs are skipped.
pub fn derive_targets(jobs: &[JobProfile], cfg: &ResourceConfig, scouts_only: bool) -> Result<Vec<TargetRow>, PipelineError> {
    let mut by_task: BTreeMap<&str, Vec<JobProfile>> = BTreeMap::new();
    for j in jobs.iter().filter(|j| !scouts_only || j.is_scout) {
        by_task.entry(j.task_id.as_str()).or_default().push(j.clone());
    }
    by_task
        .into_iter()
        .map(|(id, group)| {
            let agg = aggregate_scouts(&group, cfg)
                .map_err(|source| PipelineError::Target { task_id: id.to_string(), source })?;
            Ok(TargetRow { task_id: id.to_string(), targets: agg.targets, cpu_filter_fallback: agg.cpu_filter_fallback })
        })
        .collect()
}

/// Pairs task records with their targets by id. Returns the pairs in record
/// order and the ids of records that had no target row.
pub fn join_targets(records: &[TaskRecord], rows: &[TargetRow]) -> (Vec<(TaskRecord, ResourceTargets)>, Vec<String>) {
    let by_id: BTreeMap<&str, &ResourceTargets> = rows.iter().map(|r| (r.task_id.as_str(), &r.targets)).collect();
    let mut joined = Vec::with_capacity(records.len());
    let mut missing = Vec::new();
    for r in records {
        match by_id.get(r.task_id.as_str()) {
            Some(t) => joined.push((r.clone(), **t)),
            None => missing.push(r.task_id.clone()),
        }
    }
    (joined, missing)
}

pub fn label(pairs: &[(TaskRecord, ResourceTargets)], bins: &BinSet) -> Result<Dataset, IngestError> {
    Dataset::new(
        pairs.iter().map(|(task, t)| LabeledTask { task: task.clone(), classes: Some(bins.classify(t)) }).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub split_seed: u64,
    pub test_fraction: f64,
    /// Share of the train/validation pool held out for early stopping.
    pub val_fraction: f64,
    pub hidden: Vec<usize>,
    pub transform: NumericTransform,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            split_seed: 0,
            test_fraction: 0.15,
            val_fraction: 0.15,
            hidden: DEFAULT_HIDDEN.to_vec(),
            transform: NumericTransform::Log1p,
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Canonical text of every setting that influences the trained weights.
    pub fn canonical(&self) -> String {
        format!("{self:?}")
    }

    /// Training config of one target: its own initialization and shuffling seed.
    pub fn train_config(&self, target: Target) -> TrainConfig {
        TrainConfig { seed: self.train.seed.wrapping_add(target.index() as u64), ..self.train.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRun {
    pub target: Target,
    /// Epoch history; the network itself lives in the model set.
    pub report: TrainReport,
    pub train_rows: usize,
    pub val_rows: usize,
    pub val_stratified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub models: ModelSet,
    pub bins: BinSet,
    pub test: Dataset,
    pub test_stratified: bool,
    pub runs: Vec<TargetRun>,
}

/// Bins fitted on all targets, a joint-stratified test cut shared by the
/// four models, then per-model validation cuts and parallel training.
pub fn train_pipeline(pairs: &[(TaskRecord, ResourceTargets)], cfg: &PipelineConfig) -> Result<TrainedPipeline, PipelineError> {
    if pairs.is_empty() {
        return Err(PipelineError::NothingToTrain);
    }
    let targets: Vec<ResourceTargets> = pairs.iter().map(|p| p.1).collect();
    let bins = BinSet::fit(&targets)?;
    let dataset = label(pairs, &bins)?;
    let spec = SplitSpec {
        train_val_fraction: 1.0 - cfg.test_fraction,
        test_fraction: cfg.test_fraction,
        val_fraction_of_train_val: cfg.val_fraction,
        seed: cfg.split_seed,
        stratify_on: StratifyOn::Joint,
    };
    let (pool, test, test_stratified) = split_test(&dataset, &spec)?;

    let results: Vec<Result<_, PipelineError>> = thread::scope(|s| {
        let handles: Vec<_> = Target::ALL
            .map(|target| {
                let (pool, bins) = (&pool, &bins);
                s.spawn(move || {
                    let seed = cfg.split_seed.wrapping_add(1 + target.index() as u64);
                    let (train, val, stratified) = split_validation(pool, cfg.val_fraction, target, seed)?;
                    let (model, mut report) = fit_target_model(
                        &train,
                        &val,
                        target,
                        bins.get(target).clone(),
                        cfg.transform,
                        &cfg.hidden,
                        &cfg.train_config(target),
                    )
                    .map_err(|source| PipelineError::Model { target, source })?;
                    report.network = None;
                    let run = TargetRun { target, report, train_rows: train.len(), val_rows: val.len(), val_stratified: stratified };
                    Ok((model, run))
                })
            })
            .into_iter()
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });

    let mut models = Vec::with_capacity(4);
    let mut runs = Vec::with_capacity(4);
    for r in results {
        let (m, run) = r?;
        models.push(m);
        runs.push(run);
    }
    let models = ModelSet::from_models(models).map_err(|source| PipelineError::Model { target: Target::Ram, source })?;
    Ok(TrainedPipeline { models, bins, test, test_stratified, runs })
}
