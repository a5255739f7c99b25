//! Evaluation report: per-class tables, per-model summary, pipeline metrics
//! and ROC / precision-recall point files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rescast_core::ingest::{Dataset, Target};
use rescast_core::metrics::{
    curve_inputs, per_class_prf, pipeline_metrics, pr_auc, pr_curve, roc_auc, roc_curve, ConfusionMatrix, MetricsError,
    PipelineReport, PrfReport,
};
use rescast_core::model::ModelError;
use rescast_core::nnet::Probabilities;
use rescast_core::ModelSet;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("test data lacks class labels: {0}")]
    Labels(String),
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetEvaluation {
    pub target: Target,
    pub confusion: ConfusionMatrix,
    pub prf: PrfReport,
    /// `None` when the truth labels hold a single class.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    /// (false positive rate, true positive rate) points.
    pub roc_curve: Vec<(f64, f64)>,
    /// (recall, precision) points.
    pub pr_curve: Vec<(f64, f64)>,
    /// Accuracy of always predicting the most frequent true class.
    pub majority_baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub n: usize,
    pub targets: Vec<TargetEvaluation>,
    pub pipeline: PipelineReport,
}

fn optional(r: Result<f64, MetricsError>) -> Result<Option<f64>, MetricsError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricsError::Degenerate) => Ok(None),
        Err(e) => Err(e),
    }
}

fn optional_curve(r: Result<Vec<(f64, f64)>, MetricsError>) -> Result<Vec<(f64, f64)>, MetricsError> {
    match r {
        Err(MetricsError::Degenerate) => Ok(Vec::new()),
        other => other,
    }
}

/// Evaluates probability matrices against truth labels, both in [`Target::ALL`] order.
pub fn evaluate_probabilities(probs: &[Probabilities; 4], truth: &[Vec<usize>; 4]) -> Result<EvaluationReport, EvalError> {
    let n = truth[0].len();
    let mut targets = Vec::with_capacity(4);
    let mut predicted = Vec::with_capacity(4);
    for t in Target::ALL {
        let (p, y) = (&probs[t.index()], &truth[t.index()]);
        if p.rows != n || y.len() != n || p.n_classes != t.n_classes() {
            return Err(EvalError::Shape(format!("{t}: {} rows x {} classes for {n} labels", p.rows, p.n_classes)));
        }
        let pred = p.predictions();
        let confusion = ConfusionMatrix::from_labels(y, &pred, t.n_classes())?;
        let prf = per_class_prf(&confusion)?;
        let (scores, positive) = curve_inputs(p, y)?;
        let mut counts = vec![0usize; t.n_classes()];
        for &c in y {
            counts[c] += 1;
        }
        let majority_baseline = *counts.iter().max().expect("classes") as f64 / n.max(1) as f64;
        targets.push(TargetEvaluation {
            target: t,
            roc_auc: optional(roc_auc(&scores, &positive))?,
            pr_auc: optional(pr_auc(&scores, &positive))?,
            roc_curve: optional_curve(roc_curve(&scores, &positive))?,
            pr_curve: optional_curve(pr_curve(&scores, &positive))?,
            confusion,
            prf,
            majority_baseline,
        });
        predicted.push(pred);
    }
    let pairs: Vec<(&[usize], &[usize])> = predicted.iter().zip(truth).map(|(p, y)| (p.as_slice(), y.as_slice())).collect();
    let pipeline = pipeline_metrics(&pairs)?;
    Ok(EvaluationReport { n, targets, pipeline })
}

pub fn dataset_labels(ds: &Dataset) -> Result<[Vec<usize>; 4], EvalError> {
    let get = |t| ds.labels(t).map_err(|e| EvalError::Labels(e.to_string()));
    Ok([get(Target::Ram)?, get(Target::Cpu)?, get(Target::Io)?, get(Target::Wall)?])
}

pub fn evaluate_models(models: &ModelSet, test: &Dataset) -> Result<EvaluationReport, EvalError> {
    let truth = dataset_labels(test)?;
    let proba = |t: Target| models.get(t).predict_proba(test.tasks());
    let probs = [proba(Target::Ram)?, proba(Target::Cpu)?, proba(Target::Io)?, proba(Target::Wall)?];
    evaluate_probabilities(&probs, &truth)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl TargetEvaluation {
    pub fn accuracy(&self) -> f64 {
        self.prf.accuracy
    }
}

impl EvaluationReport {
    /// Plain-text report. Formatting is fixed so equal reports render to equal bytes.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Evaluation on {} tasks", self.n);
        let _ = writeln!(s);
        let _ = writeln!(s, "Per-class metrics");
        let _ = writeln!(s, "{:<12} {:>6} {:>10} {:>8} {:>8} {:>8}", "model", "class", "precision", "recall", "f1", "support");
        let mut flagged = false;
        for e in &self.targets {
            for (k, m) in e.prf.per_class.iter().enumerate() {
                let mark = |undefined: bool| if undefined { "*" } else { " " };
                flagged |= m.precision_undefined || m.recall_undefined || m.f1_undefined;
                let _ = writeln!(
                    s,
                    "{:<12} {:>6} {:>9.4}{} {:>7.4}{} {:>7.4}{} {:>8}",
                    e.target.name(),
                    k,
                    m.precision,
                    mark(m.precision_undefined),
                    m.recall,
                    mark(m.recall_undefined),
                    m.f1,
                    mark(m.f1_undefined),
                    m.support
                );
            }
            let p = &e.prf;
            let _ = writeln!(s, "{:<12} {:>6} {:>9.4}  {:>7.4}  {:>7.4}  {:>8}", e.target.name(), "macro", p.macro_precision, p.macro_recall, p.macro_f1, self.n);
            let _ = writeln!(s, "{:<12} {:>6} {:>9.4}  {:>7.4}  {:>7.4}  {:>8}", e.target.name(), "micro", p.micro_precision, p.micro_recall, p.micro_f1, self.n);
        }
        if flagged {
            let _ = writeln!(s, "* undefined (zero denominator), reported as 0");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Model summary");
        let _ = writeln!(s, "{:<12} {:>9} {:>9} {:>9} {:>9}", "model", "accuracy", "roc_auc", "pr_auc", "majority");
        for e in &self.targets {
            let _ = writeln!(
                s,
                "{:<12} {:>9.4} {:>9} {:>9} {:>9.4}",
                e.target.name(),
                e.accuracy(),
                fmt_opt(e.roc_auc),
                fmt_opt(e.pr_auc),
                e.majority_baseline
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Pipeline");
        let p = &self.pipeline;
        let m = p.per_model.len();
        for k in (1..=m).rev() {
            let _ = writeln!(s, "{:<28} {:>9.4}", format!("at least {k} of {m} correct"), p.at_least[k - 1]);
        }
        let _ = writeln!(s, "{:<28} {:>9.4}", "exact match", p.exact_match);
        let _ = writeln!(s, "{:<28} {:>9.4}", "average model accuracy", p.average);
        s
    }

    /// Writes `roc_<TARGET>.csv` and `pr_<TARGET>.csv` into `dir` and returns their paths.
    pub fn write_curves(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for e in &self.targets {
            for (kind, header, points) in [("roc", "fpr,tpr", &e.roc_curve), ("pr", "recall,precision", &e.pr_curve)] {
                let mut body = format!("{header}\n");
                for (x, y) in points {
                    let _ = writeln!(body, "{x},{y}");
                }
                let path = dir.join(format!("{kind}_{}.csv", e.target.name()));
                fs::write(&path, body)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}
