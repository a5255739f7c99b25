//! Trained per-target models and joint four-target prediction.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::discretize::{class_to_allocation, BinSpec, ResourceClasses};
use crate::encode::{encode, encode_dataset, fit_encoder, EncodeError, EncoderSpec, NumericTransform};
use crate::ingest::{Dataset, Target, TaskRecord};
use crate::simsynth::{ClassPredictor, SimError};
use crate::nnet::{self, Architecture, Network, NnetError, Probabilities, StopReason, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("model for {0} is missing or misplaced")]
    MissingTarget(Target),
    #[error("{target}: network has {network} classes, bins have {bins}")]
    ClassMismatch { target: Target, network: usize, bins: usize },
    #[error("{0}: training produced no usable network")]
    TrainingFailed(Target),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
}

/// What is kept of a training run alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stop_reason: StopReason,
}

impl TrainSummary {
    pub fn from_report(report: &TrainReport) -> Self {
        TrainSummary {
            epochs_run: report.epochs.len(),
            best_epoch: report.best_epoch,
            best_val_accuracy: report.best_val_accuracy().unwrap_or(0.0),
            stop_reason: report.stop_reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub target: Target,
    pub encoder: EncoderSpec,
    pub bins: BinSpec,
    pub network: Network,
    pub summary: TrainSummary,
}

impl TargetModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.bins.target() != self.target || self.target.n_classes() != self.bins.n_classes() {
            return Err(ModelError::MissingTarget(self.target));
        }
        if self.network.n_classes() != self.bins.n_classes() {
            return Err(ModelError::ClassMismatch {
                target: self.target,
                network: self.network.n_classes(),
                bins: self.bins.n_classes(),
            });
        }
        Ok(())
    }

    pub fn predict_proba<'a, I>(&self, tasks: I) -> Result<Probabilities, ModelError>
    where
        I: IntoIterator<Item = &'a TaskRecord>,
    {
        Ok(self.network.predict_proba(&encode(tasks, &self.encoder))?)
    }
}

/// Fits the encoder on `train`, then trains and keeps the best network.
pub fn fit_target_model(
    train: &Dataset,
    val: &Dataset,
    target: Target,
    bins: BinSpec,
    transform: NumericTransform,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(TargetModel, TrainReport), ModelError> {
    let encoder = fit_encoder(train, transform)?;
    let train_batch = encode_dataset(train, &encoder, target)?;
    let val_batch = encode_dataset(val, &encoder, target)?;
    let mut arch = Architecture::for_encoder(&encoder, target.n_classes());
    arch.hidden = hidden.to_vec();
    let net = Network::new(arch, cfg.seed)?;
    let mut report = nnet::train(net, &train_batch, &val_batch, cfg)?;
    let network = report.network.take().ok_or(ModelError::TrainingFailed(target))?;
    let model = TargetModel { target, encoder, bins, network, summary: TrainSummary::from_report(&report) };
    model.validate()?;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetPrediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
    /// Request value of the predicted tier.
    pub allocation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskPrediction {
    pub task_id: String,
    /// In [`Target::ALL`] order.
    pub targets: [TargetPrediction; 4],
}

impl TaskPrediction {
    pub fn get(&self, target: Target) -> &TargetPrediction {
        &self.targets[target.index()]
    }

    pub fn classes(&self) -> ResourceClasses {
        let mut c = ResourceClasses::default();
        for t in Target::ALL {
            c.set(t, self.get(t).class);
        }
        c
    }
}

/// The four target models served together.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    models: [TargetModel; 4],
}

impl ModelSet {
    pub fn new(models: [TargetModel; 4]) -> Result<Self, ModelError> {
        for (m, t) in models.iter().zip(Target::ALL) {
            if m.target != t {
                return Err(ModelError::MissingTarget(t));
            }
            m.validate()?;
        }
        Ok(ModelSet { models })
    }

    /// Assembles a set from models in any order; every target must be present once.
    pub fn from_models(models: Vec<TargetModel>) -> Result<Self, ModelError> {
        let mut slots: [Option<TargetModel>; 4] = Default::default();
        for m in models {
            let i = m.target.index();
            if slots[i].is_some() {
                return Err(ModelError::MissingTarget(m.target));
            }
            slots[i] = Some(m);
        }
        let [a, b, c, d] = slots;
        let take = |m: Option<TargetModel>, t| m.ok_or(ModelError::MissingTarget(t));
        Self::new([
            take(a, Target::Ram)?,
            take(b, Target::Cpu)?,
            take(c, Target::Io)?,
            take(d, Target::Wall)?,
        ])
    }

    pub fn get(&self, target: Target) -> &TargetModel {
        &self.models[target.index()]
    }

    pub fn models(&self) -> &[TargetModel; 4] {
        &self.models
    }

    /// Runs all four models over `tasks` in one pass each.
    pub fn predict(&self, tasks: &[TaskRecord]) -> Result<Vec<TaskPrediction>, ModelError> {
        let mut probs: Vec<Probabilities> = Vec::with_capacity(4);
        for m in &self.models {
            probs.push(m.predict_proba(tasks)?);
        }
        let mut out = Vec::with_capacity(tasks.len());
        for (r, task) in tasks.iter().enumerate() {
            let one = |t: Target| {
                let p = &probs[t.index()];
                let class = p.argmax(r);
                let allocation = class_to_allocation(class, &self.get(t).bins).expect("class within bins");
                TargetPrediction { class, probabilities: p.row(r).to_vec(), allocation }
            };
            out.push(TaskPrediction {
                task_id: task.task_id.clone(),
                targets: [one(Target::Ram), one(Target::Cpu), one(Target::Io), one(Target::Wall)],
            });
        }
        Ok(out)
    }

    pub fn predict_one(&self, task: &TaskRecord) -> Result<TaskPrediction, ModelError> {
        Ok(self.predict(core::slice::from_ref(task))?.remove(0))
    }
}

impl ClassPredictor for ModelSet {
    fn predict_classes(&self, tasks: &[TaskRecord]) -> Result<Vec<ResourceClasses>, SimError> {
        let preds = self.predict(tasks).map_err(|e| SimError::Predictor(e.to_string()))?;
        Ok(preds.iter().map(TaskPrediction::classes).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::BinSpec;
    use crate::ingest::LabeledTask;
    use crate::nnet::StopReason;
    use alloc::format;
    use alloc::vec;

    fn tasks() -> Vec<TaskRecord> {
        (0..6)
            .map(|i| TaskRecord {
                task_id: format!("t{i}"),
                processing_type: ["reco", "simul"][i % 2].into(),
                framework: "athena".into(),
                core_count: 1 + (i as u32 % 2) * 7,
                n_input: 10 + i as u64,
                n_files: 30 + i as u64,
                n_events: 1000 * (i as u64 + 1),
            })
            .collect()
    }

    fn untrained_set() -> ModelSet {
        let ds = Dataset::new(tasks().into_iter().map(|task| LabeledTask { task, classes: None }).collect()).unwrap();
        let encoder = fit_encoder(&ds, NumericTransform::Log1p).unwrap();
        let model = |t: Target| {
            let edges: Vec<f64> = (1..t.n_classes()).map(|k| k as f64 * 10.0).collect();
            let cap = t.n_classes() as f64 * 10.0;
            let mut arch = Architecture::for_encoder(&encoder, t.n_classes());
            arch.hidden = vec![8, 4];
            TargetModel {
                target: t,
                encoder: encoder.clone(),
                bins: BinSpec::explicit(t, edges, cap).unwrap(),
                network: Network::new(arch, t.index() as u64).unwrap(),
                summary: TrainSummary { epochs_run: 0, best_epoch: 0, best_val_accuracy: 0.0, stop_reason: StopReason::MaxEpochs },
            }
        };
        ModelSet::new([model(Target::Ram), model(Target::Cpu), model(Target::Io), model(Target::Wall)]).unwrap()
    }

    #[test]
    fn prediction_shape() {
        let set = untrained_set();
        let preds = set.predict(&tasks()).unwrap();
        assert_eq!(preds.len(), 6);
        for p in &preds {
            let widths: Vec<usize> = p.targets.iter().map(|t| t.probabilities.len()).collect();
            assert_eq!(widths, vec![4, 5, 2, 5]);
            for t in Target::ALL {
                let tp = p.get(t);
                assert_eq!(class_to_allocation(tp.class, &set.get(t).bins).unwrap(), tp.allocation);
                assert!((tp.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_and_batch_prediction_agree() {
        let set = untrained_set();
        let all = set.predict(&tasks()).unwrap();
        for (task, p) in tasks().iter().zip(&all) {
            assert_eq!(&set.predict_one(task).unwrap(), p);
        }
    }

    #[test]
    fn missing_target_is_rejected() {
        let set = untrained_set();
        let three: Vec<TargetModel> = set.models()[..3].to_vec();
        assert_eq!(ModelSet::from_models(three), Err(ModelError::MissingTarget(Target::Wall)));
    }

    #[test]
    fn misordered_models_are_reordered() {
        let set = untrained_set();
        let mut v = set.models().to_vec();
        v.reverse();
        assert_eq!(ModelSet::from_models(v).unwrap(), set);
    }
}
