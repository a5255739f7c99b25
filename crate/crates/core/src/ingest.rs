//! Task and job data model, categorical vocabularies and stratified splits.
//!
//! A task is the unit of submission; it is broken into jobs that each
//! process a subset of the task's input files. [`TaskRecord`] carries the
//! metadata that is known when the task is submitted and is the model's
//! input. [`JobProfile`] carries what is measured after a job ran and is
//! the raw material for the continuous resource targets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::discretize::ResourceClasses;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("task {task_id}: {reason}")]
    InvalidTask { task_id: String, reason: &'static str },
    #[error("job of task {task_id}: {reason}")]
    InvalidJob { task_id: String, reason: &'static str },
    #[error("duplicate task id {0}")]
    DuplicateTaskId(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record {task_id} has no class label for {target}")]
    MissingLabel { task_id: String, target: Target },
    #[error("invalid split fractions: {0}")]
    InvalidSplit(&'static str),
}

/// The four predicted resources, in model order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Ram,
    Cpu,
    Io,
    Wall,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::Ram, Target::Cpu, Target::Io, Target::Wall];

    /// Number of classes each model predicts.
    pub const fn n_classes(self) -> usize {
        match self {
            Target::Ram => 4,
            Target::Cpu => 5,
            Target::Io => 2,
            Target::Wall => 5,
        }
    }

    /// Column-style name, e.g. `RAMCOUNT`.
    pub const fn name(self) -> &'static str {
        match self {
            Target::Ram => "RAMCOUNT",
            Target::Cpu => "CPUTIME",
            Target::Io => "IOINTENSITY",
            Target::Wall => "WALLTIME",
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Target> {
        Target::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Submission-time metadata of one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub task_id: String,
    pub processing_type: String,
    pub framework: String,
    pub core_count: u32,
    /// Number of unique input file sets.
    pub n_input: u64,
    pub n_files: u64,
    pub n_events: u64,
}

impl TaskRecord {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |reason| IngestError::InvalidTask { task_id: self.task_id.clone(), reason };
        if self.core_count == 0 {
            return Err(bad("core_count must be >= 1"));
        }
        if self.n_input > 0 && self.n_files < self.n_input {
            return Err(bad("n_files must be >= n_input"));
        }
        Ok(())
    }
}

/// Post-execution measurements of one job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobProfile {
    pub task_id: String,
    /// Peak resident set size in MB.
    pub max_pss: f64,
    pub start_time: f64,
    pub end_time: f64,
    /// HS06 rating per core of the resource that ran the job.
    pub core_power: f64,
    pub n_events_job: u64,
    pub input_bytes: f64,
    pub output_bytes: f64,
    pub core_count: u32,
    pub is_scout: bool,
}

impl JobProfile {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |reason| IngestError::InvalidJob { task_id: self.task_id.clone(), reason };
        let finite = [
            self.max_pss,
            self.start_time,
            self.end_time,
            self.core_power,
            self.input_bytes,
            self.output_bytes,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(bad("non-finite measurement"));
        }
        if self.end_time < self.start_time {
            return Err(bad("end_time before start_time"));
        }
        if self.max_pss < 0.0 {
            return Err(bad("negative max_pss"));
        }
        if self.core_power <= 0.0 {
            return Err(bad("core_power must be positive"));
        }
        if self.core_count == 0 {
            return Err(bad("core_count must be >= 1"));
        }
        if self.input_bytes < 0.0 || self.output_bytes < 0.0 {
            return Err(bad("negative byte count"));
        }
        Ok(())
    }
}

/// Token to dense index map. Index 0 is reserved for tokens never seen
/// while building the vocabulary; known tokens are numbered from 1 in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub const UNKNOWN: u32 = 0;

    pub fn from_tokens<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> Self {
        let set: BTreeSet<&str> = tokens.into_iter().collect();
        let tokens: Vec<String> = set.into_iter().map(String::from).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Vocabulary size including the reserved UNKNOWN slot.
    pub fn len(&self) -> usize {
        self.tokens.len() + 1
    }

    /// True when no known token exists (only UNKNOWN).
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(Self::UNKNOWN)
    }

    /// Known tokens in index order (index `i + 1`).
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabularies of the two categorical task features.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabularies {
    pub processing_type: Vocabulary,
    pub framework: Vocabulary,
}

impl Vocabularies {
    pub fn build(tasks: &[TaskRecord]) -> Self {
        Vocabularies {
            processing_type: Vocabulary::from_tokens(tasks.iter().map(|t| t.processing_type.as_str())),
            framework: Vocabulary::from_tokens(tasks.iter().map(|t| t.framework.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTask {
    pub task: TaskRecord,
    pub classes: Option<ResourceClasses>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<LabeledTask>,
    pub vocabularies: Vocabularies,
}

impl Dataset {
    /// Builds a dataset and its vocabularies. Task ids must be unique.
    pub fn new(records: Vec<LabeledTask>) -> Result<Self, IngestError> {
        let tasks: Vec<TaskRecord> = records.iter().map(|r| r.task.clone()).collect();
        let vocabularies = Vocabularies::build(&tasks);
        Self::with_vocabularies(records, vocabularies)
    }

    /// Builds a dataset that shares an existing vocabulary (used for splits).
    pub fn with_vocabularies(records: Vec<LabeledTask>, vocabularies: Vocabularies) -> Result<Self, IngestError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            r.task.validate()?;
            if !seen.insert(r.task.task_id.as_str()) {
                return Err(IngestError::DuplicateTaskId(r.task.task_id.clone()));
            }
        }
        Ok(Dataset { records, vocabularies })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskRecord> {
        self.records.iter().map(|r| &r.task)
    }

    /// Class labels of one target; fails on the first unlabeled record.
    pub fn labels(&self, target: Target) -> Result<Vec<usize>, IngestError> {
        self.records
            .iter()
            .map(|r| {
                r.classes.map(|c| c.get(target)).ok_or_else(|| IngestError::MissingLabel {
                    task_id: r.task.task_id.clone(),
                    target,
                })
            })
            .collect()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        let mut records: Vec<LabeledTask> = idx.iter().map(|&i| self.records[i].clone()).collect();
        records.sort_by(|a, b| a.task.task_id.cmp(&b.task.task_id));
        Dataset { records, vocabularies: self.vocabularies.clone() }
    }
}

/// What drives stratification. With either key, strata with fewer than
/// three members are pooled into one remainder stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratifyOn {
    Target(Target),
    /// The joint label of all four targets.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_val_fraction: f64,
    pub test_fraction: f64,
    /// Share of the train/validation pool that becomes validation.
    pub val_fraction_of_train_val: f64,
    pub seed: u64,
    pub stratify_on: StratifyOn,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_val_fraction: 0.85,
            test_fraction: 0.15,
            val_fraction_of_train_val: 0.15,
            seed: 0,
            stratify_on: StratifyOn::Target(Target::Ram),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        let open = |f: f64| f > 0.0 && f < 1.0;
        if !open(self.train_val_fraction) || !open(self.test_fraction) || !open(self.val_fraction_of_train_val) {
            return Err(IngestError::InvalidSplit("fractions must lie in (0, 1)"));
        }
        if (self.train_val_fraction + self.test_fraction - 1.0).abs() > 1e-9 {
            return Err(IngestError::InvalidSplit("train_val + test must equal 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// False when some strata had fewer than three members. Those are pooled
    /// into one remainder stratum; the others keep their proportions.
    pub stratified: bool,
}

/// Three-way split, stratified on `spec.stratify_on` for both the test cut
/// and the validation cut.
pub fn stratified_split(dataset: &Dataset, spec: &SplitSpec) -> Result<Splits, IngestError> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let keys = strata_keys(dataset, spec.stratify_on)?;
    let fractions = [
        spec.test_fraction,
        spec.train_val_fraction * spec.val_fraction_of_train_val,
        spec.train_val_fraction * (1.0 - spec.val_fraction_of_train_val),
    ];
    let (parts, stratified) = split_indices(dataset, &keys, &fractions, spec.seed);
    Ok(Splits {
        test: dataset.subset(&parts[0]),
        val: dataset.subset(&parts[1]),
        train: dataset.subset(&parts[2]),
        stratified,
    })
}

/// Two-way cut of `dataset` into (remainder, test).
pub fn split_test(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, bool), IngestError> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let keys = strata_keys(dataset, spec.stratify_on)?;
    let (parts, stratified) = split_indices(dataset, &keys, &[spec.test_fraction, spec.train_val_fraction], spec.seed);
    Ok((dataset.subset(&parts[1]), dataset.subset(&parts[0]), stratified))
}

/// Two-way cut of a train/validation pool into (train, val), stratified on `target`.
pub fn split_validation(
    pool: &Dataset,
    val_fraction: f64,
    target: Target,
    seed: u64,
) -> Result<(Dataset, Dataset, bool), IngestError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(IngestError::InvalidSplit("fractions must lie in (0, 1)"));
    }
    if pool.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let keys = strata_keys(pool, StratifyOn::Target(target))?;
    let (parts, stratified) = split_indices(pool, &keys, &[val_fraction, 1.0 - val_fraction], seed);
    Ok((pool.subset(&parts[1]), pool.subset(&parts[0]), stratified))
}

fn strata_keys(dataset: &Dataset, on: StratifyOn) -> Result<Vec<u32>, IngestError> {
    let mut keys = Vec::with_capacity(dataset.len());
    for r in &dataset.records {
        let c = r.classes.ok_or_else(|| IngestError::MissingLabel {
            task_id: r.task.task_id.clone(),
            target: match on {
                StratifyOn::Target(t) => t,
                StratifyOn::Joint => Target::Ram,
            },
        })?;
        keys.push(match on {
            StratifyOn::Target(t) => c.get(t) as u32,
            StratifyOn::Joint => Target::ALL.iter().fold(0u32, |acc, &t| acc * 8 + c.get(t) as u32),
        });
    }
    Ok(keys)
}

/// Core splitter. Records are ordered by task id, grouped by stratum and
/// shuffled within each stratum. Per-stratum part sizes come from a
/// controlled rounding of `n_c * size_s / n`, so every count is the floor or
/// ceiling of its exact proportional share of the realised part size.
fn split_indices(dataset: &Dataset, keys: &[u32], fractions: &[f64], seed: u64) -> (Vec<Vec<usize>>, bool) {
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dataset.records[a].task.task_id.cmp(&dataset.records[b].task.task_id));

    let mut strata: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        strata.entry(keys[i]).or_default().push(i);
    }
    let rare: Vec<u32> = strata.iter().filter(|(_, m)| m.len() < 3).map(|(&k, _)| k).collect();
    let stratified = rare.is_empty();
    if !stratified {
        let mut pooled: Vec<usize> = rare.iter().flat_map(|k| strata.remove(k).unwrap_or_default()).collect();
        pooled.sort_by(|&a, &b| dataset.records[a].task.task_id.cmp(&dataset.records[b].task.task_id));
        // Keys are class tuples well below u32::MAX, so this slot is free.
        strata.insert(u32::MAX, pooled);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
    }

    let sizes = part_sizes(n, fractions);
    let class_sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let table = apportion(&class_sizes, &sizes);

    let mut parts: Vec<Vec<usize>> = (0..fractions.len()).map(|_| Vec::new()).collect();
    for (members, counts) in strata.values().zip(table.iter()) {
        let mut at = 0;
        for (p, &c) in counts.iter().enumerate() {
            parts[p].extend_from_slice(&members[at..at + c]);
            at += c;
        }
    }
    (parts, stratified)
}

/// Rounded sizes of each part; the last part absorbs the remainder.
fn part_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(fractions.len());
    let mut left = n;
    for (i, f) in fractions.iter().enumerate() {
        if i + 1 == fractions.len() {
            sizes.push(left);
        } else {
            let s = (libm::round(n as f64 * f) as usize).min(left);
            sizes.push(s);
            left -= s;
        }
    }
    sizes
}

/// Controlled rounding of the matrix `q[c][s] = rows[c] * cols[s] / n`.
/// Row sums equal `rows` and column sums equal `cols`. Columns are fixed one
/// at a time; each entry is kept within one of its quota while the row
/// residue stays within one of the quota still to be placed, so the final
/// column is also within one of its quota.
fn apportion(rows: &[usize], cols: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = rows.iter().sum();
    let k = rows.len();
    let mut table = alloc::vec![alloc::vec![0usize; cols.len()]; k];
    if n == 0 {
        return table;
    }
    let quota = |c: usize, s: usize| rows[c] as f64 * cols[s] as f64 / n as f64;
    let mut residue: Vec<usize> = rows.to_vec();
    for (s, &col) in cols.iter().enumerate() {
        if s + 1 == cols.len() {
            for c in 0..k {
                table[c][s] = residue[c];
            }
            break;
        }
        let mut lo = alloc::vec![0usize; k];
        let mut hi = alloc::vec![0usize; k];
        let mut frac = alloc::vec![0.0f64; k];
        for c in 0..k {
            let q = quota(c, s);
            let after: f64 = (s + 1..cols.len()).map(|t| quota(c, t)).sum();
            let r = residue[c] as f64;
            // entry within one of q, and residue - entry within one of `after`
            let a = libm::floor(q).max(libm::ceil(r - libm::ceil(after) - 1e-9).max(0.0));
            let b = libm::ceil(q).min(libm::floor(r - libm::floor(after) + 1e-9)).min(r);
            let (a, b) = if a <= b { (a, b) } else { (b.max(0.0), b.max(0.0)) };
            lo[c] = a as usize;
            hi[c] = b as usize;
            frac[c] = q - libm::floor(q);
        }
        let mut chosen = lo.clone();
        let mut total: usize = chosen.iter().sum();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));
        for &c in &order {
            while total < col && chosen[c] < hi[c] {
                chosen[c] += 1;
                total += 1;
            }
        }
        // Infeasible bounds: relax within the row residue.
        for &c in &order {
            while total < col && chosen[c] < residue[c] {
                chosen[c] += 1;
                total += 1;
            }
        }
        for &c in order.iter().rev() {
            while total > col && chosen[c] > 0 {
                chosen[c] -= 1;
                total -= 1;
            }
        }
        for c in 0..k {
            table[c][s] = chosen[c];
            residue[c] -= chosen[c];
        }
    }
    table
}
