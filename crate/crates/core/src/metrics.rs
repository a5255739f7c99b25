//! Evaluation metrics: confusion matrices, per-class precision/recall/F1
//! with macro and micro aggregation, micro-averaged ROC-AUC and PR-AUC over
//! the one-vs-rest expansion, and pipeline metrics over the four models.
//!
//! Zero-denominator precision, recall or F1 are reported as 0 and flagged.
//! ROC-AUC counts tied positive/negative pairs as one half. PR-AUC is the
//! step-wise sum `sum (R_i - R_{i-1}) * P_i` over descending thresholds,
//! without interpolation.

use alloc::vec;
use alloc::vec::Vec;

use crate::nnet::Probabilities;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no samples")]
    Empty,
    #[error("need at least two classes")]
    TooFewClasses,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label {0} out of range")]
    LabelOutOfRange(usize),
    #[error("scores need at least one positive and one negative")]
    Degenerate,
}

/// `k x k` counts, rows are true classes and columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], k: usize) -> Result<Self, MetricsError> {
        if truth.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch(truth.len(), predicted.len()));
        }
        let mut cm = ConfusionMatrix::new(k);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= k || p >= k {
                return Err(MetricsError::LabelOutOfRange(t.max(p)));
            }
            cm.counts[t * k + p] += 1;
        }
        Ok(cm)
    }

    /// From a row-major `k x k` table.
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self, MetricsError> {
        if counts.len() != k * k {
            return Err(MetricsError::LengthMismatch(counts.len(), k * k));
        }
        Ok(ConfusionMatrix { k, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            self.correct() as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the metric had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrfReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

pub fn per_class_prf(cm: &ConfusionMatrix) -> Result<PrfReport, MetricsError> {
    let k = cm.k;
    if k < 2 {
        return Err(MetricsError::TooFewClasses);
    }
    if cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let mut per_class = Vec::with_capacity(k);
    let (mut tp_all, mut fp_all, mut fn_all) = (0u64, 0u64, 0u64);
    for c in 0..k {
        let tp = cm.get(c, c);
        let predicted: u64 = (0..k).map(|t| cm.get(t, c)).sum();
        let support: u64 = (0..k).map(|p| cm.get(c, p)).sum();
        tp_all += tp;
        fp_all += predicted - tp;
        fn_all += support - tp;
        let (precision, precision_undefined) = ratio(tp, predicted);
        let (recall, recall_undefined) = ratio(tp, support);
        let (f1, f1_undefined) = harmonic(precision, recall);
        per_class.push(ClassMetrics { precision, recall, f1, support, precision_undefined, recall_undefined, f1_undefined });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let (micro_precision, _) = ratio(tp_all, tp_all + fp_all);
    let (micro_recall, _) = ratio(tp_all, tp_all + fn_all);
    Ok(PrfReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        micro_precision,
        micro_recall,
        micro_f1: harmonic(micro_precision, micro_recall).0,
        accuracy: cm.accuracy(),
        per_class,
    })
}

/// Flattens a probability matrix into one-vs-rest `(score, is_positive)` pairs.
pub fn one_vs_rest(probs: &Probabilities, labels: &[usize]) -> Result<(Vec<f64>, Vec<bool>), MetricsError> {
    if labels.len() != probs.rows {
        return Err(MetricsError::LengthMismatch(labels.len(), probs.rows));
    }
    let mut scores = Vec::with_capacity(probs.data.len());
    let mut positive = Vec::with_capacity(probs.data.len());
    for (r, &y) in labels.iter().enumerate() {
        if y >= probs.n_classes {
            return Err(MetricsError::LabelOutOfRange(y));
        }
        for (c, &p) in probs.row(r).iter().enumerate() {
            scores.push(p);
            positive.push(c == y);
        }
    }
    Ok((scores, positive))
}

/// Groups of equal score, highest score first, as `(positives, negatives)`.
fn ranked_groups(scores: &[f64], positive: &[bool]) -> Vec<(u64, u64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last: Option<f64> = None;
    for i in idx {
        if last != Some(scores[i]) {
            groups.push((0, 0));
            last = Some(scores[i]);
        }
        let g = groups.last_mut().expect("pushed above");
        if positive[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

fn class_totals(positive: &[bool]) -> (u64, u64) {
    let p = positive.iter().filter(|&&x| x).count() as u64;
    (p, positive.len() as u64 - p)
}

/// Probability that a random positive outranks a random negative, ties 1/2.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != positive.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), positive.len()));
    }
    let (p, n) = class_totals(positive);
    if p == 0 || n == 0 {
        return Err(MetricsError::Degenerate);
    }
    // Twice the Mann-Whitney count, kept integral.
    let mut doubled: u64 = 0;
    let mut negatives_below = n;
    for (gp, gn) in ranked_groups(scores, positive) {
        negatives_below -= gn;
        doubled += gp * (2 * negatives_below + gn);
    }
    Ok(doubled as f64 / (2 * p * n) as f64)
}

/// `(false positive rate, true positive rate)` points from the origin to (1, 1).
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let (p, n) = class_totals(positive);
    if p == 0 || n == 0 {
        return Err(MetricsError::Degenerate);
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    for (gp, gn) in ranked_groups(scores, positive) {
        tp += gp;
        fp += gn;
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(points)
}

/// Step-wise area under the precision-recall curve.
pub fn pr_auc(scores: &[f64], positive: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != positive.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), positive.len()));
    }
    let (p, _) = class_totals(positive);
    if p == 0 {
        return Err(MetricsError::Degenerate);
    }
    let mut area = 0.0;
    let (mut tp, mut fp) = (0u64, 0u64);
    for (gp, gn) in ranked_groups(scores, positive) {
        let prev_tp = tp;
        tp += gp;
        fp += gn;
        area += (tp - prev_tp) as f64 / p as f64 * (tp as f64 / (tp + fp) as f64);
    }
    Ok(area)
}

/// `(recall, precision)` points, one per distinct threshold, highest first.
pub fn pr_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let (p, _) = class_totals(positive);
    if p == 0 {
        return Err(MetricsError::Degenerate);
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    Ok(ranked_groups(scores, positive)
        .into_iter()
        .map(|(gp, gn)| {
            tp += gp;
            fp += gn;
            (tp as f64 / p as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect())
}

pub fn roc_auc_micro(probs: &Probabilities, labels: &[usize]) -> Result<f64, MetricsError> {
    let (s, p) = one_vs_rest(probs, labels)?;
    roc_auc(&s, &p)
}

pub fn pr_auc_micro(probs: &Probabilities, labels: &[usize]) -> Result<f64, MetricsError> {
    let (s, p) = one_vs_rest(probs, labels)?;
    pr_auc(&s, &p)
}

/// Positive-class scores and labels of a two-class model.
pub fn binary_scores(probs: &Probabilities, labels: &[usize]) -> Result<(Vec<f64>, Vec<bool>), MetricsError> {
    if probs.n_classes != 2 {
        return Err(MetricsError::TooFewClasses);
    }
    if labels.len() != probs.rows {
        return Err(MetricsError::LengthMismatch(labels.len(), probs.rows));
    }
    Ok(((0..probs.rows).map(|r| probs.row(r)[1]).collect(), labels.iter().map(|&y| y == 1).collect()))
}

/// ROC/PR inputs as reported per model: the positive-class score for
/// two-class models, the one-vs-rest expansion otherwise.
pub fn curve_inputs(probs: &Probabilities, labels: &[usize]) -> Result<(Vec<f64>, Vec<bool>), MetricsError> {
    if probs.n_classes == 2 {
        binary_scores(probs, labels)
    } else {
        one_vs_rest(probs, labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub n: usize,
    /// Fraction of tasks with every model correct.
    pub exact_match: f64,
    /// `at_least[k - 1]`: fraction with at least `k` models correct.
    pub at_least: Vec<f64>,
    pub per_model: Vec<f64>,
    /// Unweighted mean of the per-model accuracies.
    pub average: f64,
}

pub fn average_pipeline_accuracy(per_model: &[f64]) -> f64 {
    if per_model.is_empty() {
        return 0.0;
    }
    per_model.iter().sum::<f64>() / per_model.len() as f64
}

/// Joint evaluation. `models[j] = (predicted, truth)` for model `j`.
pub fn pipeline_metrics(models: &[(&[usize], &[usize])]) -> Result<PipelineReport, MetricsError> {
    let m = models.len();
    if m == 0 {
        return Err(MetricsError::Empty);
    }
    let n = models[0].0.len();
    for (pred, truth) in models {
        if pred.len() != n || truth.len() != n {
            return Err(MetricsError::LengthMismatch(pred.len().max(truth.len()), n));
        }
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let mut hits = vec![0u64; m];
    let mut at_least_counts = vec![0u64; m + 1];
    for i in 0..n {
        let mut correct = 0;
        for (j, (pred, truth)) in models.iter().enumerate() {
            if pred[i] == truth[i] {
                hits[j] += 1;
                correct += 1;
            }
        }
        at_least_counts[correct] += 1;
    }
    // Suffix sums: at least k correct.
    let mut at_least = vec![0.0; m];
    let mut acc = 0u64;
    for k in (1..=m).rev() {
        acc += at_least_counts[k];
        at_least[k - 1] = acc as f64 / n as f64;
    }
    let per_model: Vec<f64> = hits.iter().map(|&h| h as f64 / n as f64).collect();
    Ok(PipelineReport {
        n,
        exact_match: at_least[m - 1],
        average: average_pipeline_accuracy(&per_model),
        at_least,
        per_model,
    })
}
