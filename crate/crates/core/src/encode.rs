//! Feature encoding: embedding indices for the categorical task features and
//! standardized numeric features.

use alloc::vec::Vec;

use crate::ingest::{Dataset, Target, TaskRecord, Vocabularies, Vocabulary};
use crate::stats;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("vocabulary size must be at least 1")]
    EmptyVocabulary,
    #[error("cannot fit an encoder on an empty split")]
    EmptySplit,
    #[error("record {0} has no class label")]
    MissingLabel(alloc::string::String),
}

/// Embedding width for a vocabulary of `v` entries: `min(32, floor(log2 v) + 1)`.
pub fn embed_dim(v: u64) -> Result<usize, EncodeError> {
    if v == 0 {
        return Err(EncodeError::EmptyVocabulary);
    }
    // floor(log2 v) + 1 is the bit length of v.
    let bits = (u64::BITS - v.leading_zeros()) as usize;
    Ok(bits.min(32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CategoricalFeature {
    ProcessingType,
    Framework,
}

impl CategoricalFeature {
    pub const ALL: [CategoricalFeature; 2] = [CategoricalFeature::ProcessingType, CategoricalFeature::Framework];

    pub fn name(self) -> &'static str {
        match self {
            CategoricalFeature::ProcessingType => "PROCESSINGTYPE",
            CategoricalFeature::Framework => "FRAMEWORK",
        }
    }

    fn token(self, task: &TaskRecord) -> &str {
        match self {
            CategoricalFeature::ProcessingType => &task.processing_type,
            CategoricalFeature::Framework => &task.framework,
        }
    }

    fn vocabulary(self, v: &Vocabularies) -> &Vocabulary {
        match self {
            CategoricalFeature::ProcessingType => &v.processing_type,
            CategoricalFeature::Framework => &v.framework,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NumericFeature {
    NCore,
    NInput,
    NFiles,
    NEvents,
}

impl NumericFeature {
    pub const ALL: [NumericFeature; 4] =
        [NumericFeature::NCore, NumericFeature::NInput, NumericFeature::NFiles, NumericFeature::NEvents];

    pub fn name(self) -> &'static str {
        match self {
            NumericFeature::NCore => "NCORE",
            NumericFeature::NInput => "NINPUT",
            NumericFeature::NFiles => "NFILES",
            NumericFeature::NEvents => "NEVENTS",
        }
    }

    pub fn raw(self, task: &TaskRecord) -> f64 {
        match self {
            NumericFeature::NCore => task.core_count as f64,
            NumericFeature::NInput => task.n_input as f64,
            NumericFeature::NFiles => task.n_files as f64,
            NumericFeature::NEvents => task.n_events as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericTransform {
    Log1p,
    Identity,
}

impl NumericTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            NumericTransform::Log1p => libm::log1p(x),
            NumericTransform::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericColumn {
    pub feature: NumericFeature,
    pub transform: NumericTransform,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalColumn {
    pub feature: CategoricalFeature,
    pub vocab_size: usize,
    pub embed_dim: usize,
}

/// Fitted encoder. Numeric moments come from the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub vocabularies: Vocabularies,
    pub categorical: Vec<CategoricalColumn>,
    pub numeric: Vec<NumericColumn>,
    /// Numeric features with zero variance on the training split.
    pub dropped: Vec<NumericFeature>,
}

impl EncoderSpec {
    pub fn vocab_sizes(&self) -> Vec<usize> {
        self.categorical.iter().map(|c| c.vocab_size).collect()
    }

    pub fn embed_dims(&self) -> Vec<usize> {
        self.categorical.iter().map(|c| c.embed_dim).collect()
    }

    pub fn n_numeric(&self) -> usize {
        self.numeric.len()
    }

    /// Width of the concatenated input vector.
    pub fn input_width(&self) -> usize {
        self.embed_dims().iter().sum::<usize>() + self.n_numeric()
    }
}

pub fn fit_encoder(train: &Dataset, transform: NumericTransform) -> Result<EncoderSpec, EncodeError> {
    if train.is_empty() {
        return Err(EncodeError::EmptySplit);
    }
    let categorical = CategoricalFeature::ALL
        .iter()
        .map(|&feature| {
            let vocab_size = feature.vocabulary(&train.vocabularies).len();
            Ok(CategoricalColumn { feature, vocab_size, embed_dim: embed_dim(vocab_size as u64)? })
        })
        .collect::<Result<Vec<_>, EncodeError>>()?;
    let mut numeric = Vec::new();
    let mut dropped = Vec::new();
    for feature in NumericFeature::ALL {
        let values: Vec<f64> = train.tasks().map(|t| transform.apply(feature.raw(t))).collect();
        let std = stats::sample_std(&values);
        if std > 0.0 && std.is_finite() {
            numeric.push(NumericColumn { feature, transform, mean: stats::mean(&values), std });
        } else {
            dropped.push(feature);
        }
    }
    Ok(EncoderSpec { vocabularies: train.vocabularies.clone(), categorical, numeric, dropped })
}

/// Encoded model input. Categorical columns are stored per feature; the
/// numeric block is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub categorical: Vec<Vec<u32>>,
    pub numeric: Vec<f64>,
    pub n_numeric: usize,
    pub labels: Option<Vec<usize>>,
    pub rows: usize,
}

impl EncodedBatch {
    pub fn numeric_row(&self, r: usize) -> &[f64] {
        &self.numeric[r * self.n_numeric..(r + 1) * self.n_numeric]
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> EncodedBatch {
        let categorical = self
            .categorical
            .iter()
            .map(|col| idx.iter().map(|&i| col[i]).collect())
            .collect();
        let mut numeric = Vec::with_capacity(idx.len() * self.n_numeric);
        for &i in idx {
            numeric.extend_from_slice(self.numeric_row(i));
        }
        EncodedBatch {
            categorical,
            numeric,
            n_numeric: self.n_numeric,
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            rows: idx.len(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Self {
        debug_assert_eq!(labels.len(), self.rows);
        self.labels = Some(labels);
        self
    }
}

pub fn encode<'a, I>(records: I, spec: &EncoderSpec) -> EncodedBatch
where
    I: IntoIterator<Item = &'a TaskRecord>,
{
    let mut categorical: Vec<Vec<u32>> = spec.categorical.iter().map(|_| Vec::new()).collect();
    let mut numeric = Vec::new();
    let mut rows = 0;
    for task in records {
        for (col, c) in categorical.iter_mut().zip(&spec.categorical) {
            col.push(c.feature.vocabulary(&spec.vocabularies).index_of(c.feature.token(task)));
        }
        for n in &spec.numeric {
            numeric.push((n.transform.apply(n.feature.raw(task)) - n.mean) / n.std);
        }
        rows += 1;
    }
    EncodedBatch { categorical, numeric, n_numeric: spec.numeric.len(), labels: None, rows }
}

/// Encodes a labeled dataset for one target.
pub fn encode_dataset(ds: &Dataset, spec: &EncoderSpec, target: Target) -> Result<EncodedBatch, EncodeError> {
    let labels = ds
        .records
        .iter()
        .map(|r| {
            r.classes
                .map(|c| c.get(target))
                .ok_or_else(|| EncodeError::MissingLabel(r.task.task_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(encode(ds.tasks(), spec).with_labels(labels))
}
