//! CSV formats: task metadata, job profiles, derived targets and predictions.
//!
//! Readers collect row-level problems in a [`ParseReport`] instead of
//! failing the whole file. Structural problems (missing file, missing
//! header column) are hard errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rescast_core::ingest::{Dataset, IngestError, JobProfile, LabeledTask, Target, TaskRecord};
use rescast_core::nnet::Probabilities;
use rescast_core::{ResourceClasses, ResourceTargets, TaskPrediction};

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowErrorKind {
    NonNumeric,
    OutOfRange,
    DuplicateId,
    Invalid(String),
    Malformed(String),
}

impl fmt::Display for RowErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowErrorKind::NonNumeric => f.write_str("non-numeric"),
            RowErrorKind::OutOfRange => f.write_str("out of range"),
            RowErrorKind::DuplicateId => f.write_str("duplicate task id"),
            RowErrorKind::Invalid(r) => write!(f, "invalid: {r}"),
            RowErrorKind::Malformed(r) => write!(f, "malformed: {r}"),
        }
    }
}

/// A rejected data row. `row` counts data rows from 0 (the header is not a row).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub row: usize,
    pub column: Option<String>,
    pub kind: RowErrorKind,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.column {
            Some(c) => write!(f, "row {}: {} ({})", self.row, self.kind, c),
            None => write!(f, "row {}: {}", self.row, self.kind),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub rows_read: usize,
    pub errors: Vec<RowError>,
}

impl ParseReport {
    pub fn accepted(&self) -> usize {
        self.rows_read - self.errors.len()
    }
}

/// Column names of the task file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSchema {
    pub task_id: String,
    pub processing_type: String,
    pub framework: String,
    pub core_count: String,
    pub n_input: String,
    pub n_files: String,
    pub n_events: String,
    /// Optional class columns, in [`Target::ALL`] order.
    pub classes: [String; 4],
}

impl Default for TaskSchema {
    fn default() -> Self {
        TaskSchema {
            task_id: "TASK_ID".into(),
            processing_type: "PROCESSINGTYPE".into(),
            framework: "FRAMEWORK".into(),
            core_count: "NCORE".into(),
            n_input: "NINPUT".into(),
            n_files: "NFILES".into(),
            n_events: "NEVENTS".into(),
            classes: Target::ALL.map(class_column),
        }
    }
}

pub fn class_column(t: Target) -> String {
    format!("{}_CLASS", t.name())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTasks {
    pub dataset: Dataset,
    pub report: ParseReport,
}

fn open(path: &Path) -> Result<File, CsvError> {
    File::open(path).map_err(|source| CsvError::Open { path: path.to_path_buf(), source })
}

fn create(path: &Path) -> Result<File, CsvError> {
    File::create(path).map_err(|source| CsvError::Open { path: path.to_path_buf(), source })
}

struct Header(BTreeMap<String, usize>);

impl Header {
    fn read<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Self, CsvError> {
        let h = rdr.headers()?;
        Ok(Header(h.iter().enumerate().map(|(i, n)| (n.trim().to_string(), i)).collect()))
    }

    fn require(&self, name: &str) -> Result<usize, CsvError> {
        self.0.get(name).copied().ok_or_else(|| CsvError::MissingColumn(name.to_string()))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.0.get(name).copied()
    }
}

/// One row plus the column names, for typed field access.
struct Row<'a> {
    rec: &'a csv::StringRecord,
    index: usize,
}

impl Row<'_> {
    /// Cell text as written; tokens are not trimmed so they survive a round trip.
    fn text(&self, col: usize) -> &str {
        self.rec.get(col).unwrap_or("")
    }

    fn number<T: FromStr>(&self, col: usize, name: &str) -> Result<T, RowError> {
        self.text(col).trim().parse().map_err(|_| RowError {
            row: self.index,
            column: Some(name.to_string()),
            kind: RowErrorKind::NonNumeric,
        })
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).from_reader(input)
}

pub fn parse_task_csv(path: &Path, schema: &TaskSchema) -> Result<ParsedTasks, CsvError> {
    read_tasks(open(path)?, schema)
}

pub fn read_tasks<R: Read>(input: R, schema: &TaskSchema) -> Result<ParsedTasks, CsvError> {
    let mut rdr = reader(input);
    let header = Header::read(&mut rdr)?;
    let cols = [
        &schema.task_id,
        &schema.processing_type,
        &schema.framework,
        &schema.core_count,
        &schema.n_input,
        &schema.n_files,
        &schema.n_events,
    ]
    .map(|n| header.require(n));
    let [id, pt, fw, nc, ni, nf, ne] = cols;
    let (id, pt, fw, nc, ni, nf, ne) = (id?, pt?, fw?, nc?, ni?, nf?, ne?);
    let class_cols: Option<Vec<usize>> = schema.classes.iter().map(|n| header.optional(n)).collect();

    let mut report = ParseReport::default();
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, rec) in rdr.records().enumerate() {
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(RowError { row: index, column: None, kind: RowErrorKind::Malformed(e.to_string()) });
                continue;
            }
        };
        let row = Row { rec: &rec, index };
        let parsed = (|| -> Result<LabeledTask, RowError> {
            let task = TaskRecord {
                task_id: row.text(id).to_string(),
                processing_type: row.text(pt).to_string(),
                framework: row.text(fw).to_string(),
                core_count: row.number(nc, &schema.core_count)?,
                n_input: row.number(ni, &schema.n_input)?,
                n_files: row.number(nf, &schema.n_files)?,
                n_events: row.number(ne, &schema.n_events)?,
            };
            task.validate().map_err(|e| RowError {
                row: index,
                column: None,
                kind: RowErrorKind::Invalid(e.to_string()),
            })?;
            let classes = match &class_cols {
                Some(cols) if cols.iter().all(|&c| !row.text(c).trim().is_empty()) => {
                    let mut c = ResourceClasses::default();
                    for (t, (&col, name)) in Target::ALL.into_iter().zip(cols.iter().zip(&schema.classes)) {
                        let k: usize = row.number(col, name)?;
                        if k >= t.n_classes() {
                            return Err(RowError { row: index, column: Some(name.clone()), kind: RowErrorKind::OutOfRange });
                        }
                        c.set(t, k);
                    }
                    Some(c)
                }
                _ => None,
            };
            Ok(LabeledTask { task, classes })
        })();
        match parsed {
            Ok(t) if !seen.insert(t.task.task_id.clone()) => {
                report.errors.push(RowError { row: index, column: Some(schema.task_id.clone()), kind: RowErrorKind::DuplicateId })
            }
            Ok(t) => records.push(t),
            Err(e) => report.errors.push(e),
        }
    }
    Ok(ParsedTasks { dataset: Dataset::new(records)?, report })
}

/// Writes tasks with the default schema. Class columns are written when any record carries classes.
pub fn write_tasks<W: Write>(output: W, dataset: &Dataset) -> Result<(), CsvError> {
    let schema = TaskSchema::default();
    let labeled = dataset.records.iter().any(|r| r.classes.is_some());
    let mut w = csv::Writer::from_writer(output);
    let mut header = vec![
        schema.task_id.as_str(),
        &schema.processing_type,
        &schema.framework,
        &schema.core_count,
        &schema.n_input,
        &schema.n_files,
        &schema.n_events,
    ];
    if labeled {
        header.extend(schema.classes.iter().map(String::as_str));
    }
    w.write_record(&header)?;
    for r in &dataset.records {
        let t = &r.task;
        let mut row = vec![
            t.task_id.clone(),
            t.processing_type.clone(),
            t.framework.clone(),
            t.core_count.to_string(),
            t.n_input.to_string(),
            t.n_files.to_string(),
            t.n_events.to_string(),
        ];
        if labeled {
            match r.classes {
                Some(c) => row.extend(Target::ALL.map(|t| c.get(t).to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_task_csv(path: &Path, dataset: &Dataset) -> Result<(), CsvError> {
    write_tasks(create(path)?, dataset)
}

const JOB_COLUMNS: [&str; 10] = [
    "TASK_ID",
    "MAXPSS_MB",
    "STARTTIME",
    "ENDTIME",
    "COREPOWER",
    "NEVENTS_JOB",
    "INPUT_BYTES",
    "OUTPUT_BYTES",
    "CORECOUNT",
    "IS_SCOUT",
];

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

pub fn read_jobs<R: Read>(input: R) -> Result<(Vec<JobProfile>, ParseReport), CsvError> {
    let mut rdr = reader(input);
    let header = Header::read(&mut rdr)?;
    let mut cols = [0usize; 10];
    for (c, name) in cols.iter_mut().zip(JOB_COLUMNS) {
        *c = header.require(name)?;
    }
    let mut report = ParseReport::default();
    let mut jobs = Vec::new();
    for (index, rec) in rdr.records().enumerate() {
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(RowError { row: index, column: None, kind: RowErrorKind::Malformed(e.to_string()) });
                continue;
            }
        };
        let row = Row { rec: &rec, index };
        let parsed = (|| -> Result<JobProfile, RowError> {
            let is_scout = parse_bool(row.text(cols[9]).trim()).ok_or_else(|| RowError {
                row: index,
                column: Some(JOB_COLUMNS[9].into()),
                kind: RowErrorKind::Malformed("expected a boolean".into()),
            })?;
            let job = JobProfile {
                task_id: row.text(cols[0]).to_string(),
                max_pss: row.number(cols[1], JOB_COLUMNS[1])?,
                start_time: row.number(cols[2], JOB_COLUMNS[2])?,
                end_time: row.number(cols[3], JOB_COLUMNS[3])?,
                core_power: row.number(cols[4], JOB_COLUMNS[4])?,
                n_events_job: row.number(cols[5], JOB_COLUMNS[5])?,
                input_bytes: row.number(cols[6], JOB_COLUMNS[6])?,
                output_bytes: row.number(cols[7], JOB_COLUMNS[7])?,
                core_count: row.number(cols[8], JOB_COLUMNS[8])?,
                is_scout,
            };
            job.validate().map_err(|e| RowError { row: index, column: None, kind: RowErrorKind::Invalid(e.to_string()) })?;
            Ok(job)
        })();
        match parsed {
            Ok(j) => jobs.push(j),
            Err(e) => report.errors.push(e),
        }
    }
    Ok((jobs, report))
}

pub fn parse_job_csv(path: &Path) -> Result<(Vec<JobProfile>, ParseReport), CsvError> {
    read_jobs(open(path)?)
}

pub fn write_jobs<'a, W, I>(output: W, jobs: I) -> Result<(), CsvError>
where
    W: Write,
    I: IntoIterator<Item = &'a JobProfile>,
{
    let mut w = csv::Writer::from_writer(output);
    w.write_record(JOB_COLUMNS)?;
    for j in jobs {
        w.write_record([
            j.task_id.clone(),
            j.max_pss.to_string(),
            j.start_time.to_string(),
            j.end_time.to_string(),
            j.core_power.to_string(),
            j.n_events_job.to_string(),
            j.input_bytes.to_string(),
            j.output_bytes.to_string(),
            j.core_count.to_string(),
            u8::from(j.is_scout).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_job_csv<'a, I: IntoIterator<Item = &'a JobProfile>>(path: &Path, jobs: I) -> Result<(), CsvError> {
    write_jobs(create(path)?, jobs)
}

/// Continuous targets of one task, as written by `derive` and `synth`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRow {
    pub task_id: String,
    pub targets: ResourceTargets,
    pub cpu_filter_fallback: bool,
}

const FALLBACK_COLUMN: &str = "CPU_FILTER_FALLBACK";

pub fn read_targets<R: Read>(input: R) -> Result<(Vec<TargetRow>, ParseReport), CsvError> {
    let mut rdr = reader(input);
    let header = Header::read(&mut rdr)?;
    let id = header.require("TASK_ID")?;
    let mut cols = [0usize; 4];
    for (c, t) in cols.iter_mut().zip(Target::ALL) {
        *c = header.require(t.name())?;
    }
    let fallback = header.optional(FALLBACK_COLUMN);
    let mut report = ParseReport::default();
    let mut rows = Vec::new();
    for (index, rec) in rdr.records().enumerate() {
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(RowError { row: index, column: None, kind: RowErrorKind::Malformed(e.to_string()) });
                continue;
            }
        };
        let row = Row { rec: &rec, index };
        let parsed = (|| -> Result<TargetRow, RowError> {
            let mut v = [0.0f64; 4];
            for ((x, &c), t) in v.iter_mut().zip(&cols).zip(Target::ALL) {
                *x = row.number(c, t.name())?;
                if !x.is_finite() || *x < 0.0 {
                    return Err(RowError { row: index, column: Some(t.name().into()), kind: RowErrorKind::OutOfRange });
                }
            }
            Ok(TargetRow {
                task_id: row.text(id).to_string(),
                targets: ResourceTargets { ram_count: v[0], cpu_time: v[1], io_intensity: v[2], walltime: v[3] },
                cpu_filter_fallback: fallback.and_then(|c| parse_bool(row.text(c).trim())).unwrap_or(false),
            })
        })();
        match parsed {
            Ok(t) => rows.push(t),
            Err(e) => report.errors.push(e),
        }
    }
    Ok((rows, report))
}

pub fn parse_targets_csv(path: &Path) -> Result<(Vec<TargetRow>, ParseReport), CsvError> {
    read_targets(open(path)?)
}

pub fn write_targets<W: Write>(output: W, rows: &[TargetRow]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(output);
    let mut header: Vec<&str> = vec!["TASK_ID"];
    header.extend(Target::ALL.map(Target::name));
    header.push(FALLBACK_COLUMN);
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.task_id.clone()];
        row.extend(Target::ALL.map(|t| r.targets.get(t).to_string()));
        row.push(u8::from(r.cpu_filter_fallback).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_targets_csv(path: &Path, rows: &[TargetRow]) -> Result<(), CsvError> {
    write_targets(create(path)?, rows)
}

fn probability_column(t: Target, k: usize) -> String {
    format!("{}_P{k}", t.name())
}

fn allocation_column(t: Target) -> String {
    format!("{}_ALLOCATION", t.name())
}

pub fn write_predictions<W: Write>(output: W, preds: &[TaskPrediction]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(output);
    let mut header = vec!["TASK_ID".to_string()];
    for t in Target::ALL {
        header.push(class_column(t));
        header.push(allocation_column(t));
        header.extend((0..t.n_classes()).map(|k| probability_column(t, k)));
    }
    w.write_record(&header)?;
    for p in preds {
        let mut row = vec![p.task_id.clone()];
        for t in Target::ALL {
            let tp = p.get(t);
            row.push(tp.class.to_string());
            row.push(tp.allocation.to_string());
            row.extend(tp.probabilities.iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions_csv(path: &Path, preds: &[TaskPrediction]) -> Result<(), CsvError> {
    write_predictions(create(path)?, preds)
}

/// Predicted classes and probability matrices keyed by task id. Files
/// without probability columns get one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub task_ids: Vec<String>,
    pub classes: Vec<ResourceClasses>,
    pub probabilities: [Probabilities; 4],
}

pub fn read_predictions<R: Read>(input: R) -> Result<(PredictionTable, ParseReport), CsvError> {
    let mut rdr = reader(input);
    let header = Header::read(&mut rdr)?;
    let id = header.require("TASK_ID")?;
    let mut class_cols = [0usize; 4];
    for (c, t) in class_cols.iter_mut().zip(Target::ALL) {
        *c = header.require(&class_column(t))?;
    }
    let prob_cols: [Option<Vec<usize>>; 4] =
        Target::ALL.map(|t| (0..t.n_classes()).map(|k| header.optional(&probability_column(t, k))).collect());
    let mut report = ParseReport::default();
    let mut task_ids = Vec::new();
    let mut classes = Vec::new();
    let mut data: [Vec<f64>; 4] = Default::default();
    for (index, rec) in rdr.records().enumerate() {
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(RowError { row: index, column: None, kind: RowErrorKind::Malformed(e.to_string()) });
                continue;
            }
        };
        let row = Row { rec: &rec, index };
        let parsed = (|| -> Result<(ResourceClasses, [Vec<f64>; 4]), RowError> {
            let mut c = ResourceClasses::default();
            let mut probs: [Vec<f64>; 4] = Default::default();
            for t in Target::ALL {
                let name = class_column(t);
                let k: usize = row.number(class_cols[t.index()], &name)?;
                if k >= t.n_classes() {
                    return Err(RowError { row: index, column: Some(name), kind: RowErrorKind::OutOfRange });
                }
                c.set(t, k);
                probs[t.index()] = match &prob_cols[t.index()] {
                    Some(cols) => {
                        let mut v = Vec::with_capacity(cols.len());
                        for (j, &col) in cols.iter().enumerate() {
                            v.push(row.number(col, &probability_column(t, j))?);
                        }
                        v
                    }
                    None => (0..t.n_classes()).map(|j| if j == k { 1.0 } else { 0.0 }).collect(),
                };
            }
            Ok((c, probs))
        })();
        match parsed {
            Ok((c, probs)) => {
                task_ids.push(row.text(id).to_string());
                classes.push(c);
                for (d, p) in data.iter_mut().zip(probs) {
                    d.extend(p);
                }
            }
            Err(e) => report.errors.push(e),
        }
    }
    let rows = classes.len();
    let mut it = data.into_iter();
    let probabilities =
        Target::ALL.map(|t| Probabilities { rows, n_classes: t.n_classes(), data: it.next().expect("four targets") });
    Ok((PredictionTable { task_ids, classes, probabilities }, report))
}

pub fn parse_predictions_csv(path: &Path) -> Result<(PredictionTable, ParseReport), CsvError> {
    read_predictions(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "TASK_ID,PROCESSINGTYPE,FRAMEWORK,NCORE,NINPUT,NFILES,NEVENTS\n";

    #[test]
    fn vocabulary_counts_distinct_tokens() {
        let csv = format!("{HEADER}a,reco,athena,8,2,10,1000\nb,simul,root,1,1,4,50\nc,reco,athena,8,3,9,70\n");
        let p = read_tasks(csv.as_bytes(), &TaskSchema::default()).unwrap();
        assert_eq!(p.dataset.len(), 3);
        assert_eq!(p.dataset.vocabularies.framework.len(), 3);
        assert!(p.report.errors.is_empty());
    }

    #[test]
    fn header_only_file_is_empty() {
        let p = read_tasks(HEADER.as_bytes(), &TaskSchema::default()).unwrap();
        assert_eq!(p.dataset.len(), 0);
        assert_eq!(p.dataset.vocabularies.processing_type.len(), 1);
        assert_eq!(p.dataset.vocabularies.framework.len(), 1);
    }

    #[test]
    fn non_numeric_cell_is_reported() {
        let csv = format!("{HEADER}a,reco,athena,abc,2,10,1000\nb,reco,athena,1,2,10,1000\n");
        let p = read_tasks(csv.as_bytes(), &TaskSchema::default()).unwrap();
        assert_eq!(p.dataset.len(), 1);
        assert_eq!(p.report.rows_read, 2);
        let e = &p.report.errors[0];
        assert_eq!((e.row, &e.kind), (0, &RowErrorKind::NonNumeric));
        assert_eq!(e.column.as_deref(), Some("NCORE"));
        assert_eq!(e.kind.to_string(), "non-numeric");
    }

    #[test]
    fn missing_column_is_structural() {
        let csv = "TASK_ID,PROCESSINGTYPE,FRAMEWORK,NCORE,NINPUT,NFILES\n";
        match read_tasks(csv.as_bytes(), &TaskSchema::default()) {
            Err(CsvError::MissingColumn(c)) => assert_eq!(c, "NEVENTS"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_and_duplicate_rows_are_rejected() {
        let csv = format!("{HEADER}a,reco,athena,0,2,10,1000\nb,reco,athena,1,5,2,1\nc,x,y,1,1,1,1\nc,x,y,1,1,1,1\n");
        let p = read_tasks(csv.as_bytes(), &TaskSchema::default()).unwrap();
        assert_eq!(p.dataset.len(), 1);
        assert_eq!(p.report.errors.len(), 3);
        assert_eq!(p.report.errors[2].kind, RowErrorKind::DuplicateId);
    }

    #[test]
    fn renamed_columns() {
        let schema = TaskSchema { n_events: "EVENTS".into(), ..TaskSchema::default() };
        let csv = "TASK_ID,PROCESSINGTYPE,FRAMEWORK,NCORE,NINPUT,NFILES,EVENTS\na,r,f,1,1,1,7\n";
        let p = read_tasks(csv.as_bytes(), &schema).unwrap();
        assert_eq!(p.dataset.records[0].task.n_events, 7);
    }

    #[test]
    fn class_columns_are_range_checked() {
        let csv = "TASK_ID,PROCESSINGTYPE,FRAMEWORK,NCORE,NINPUT,NFILES,NEVENTS,RAMCOUNT_CLASS,CPUTIME_CLASS,IOINTENSITY_CLASS,WALLTIME_CLASS\n\
                   a,r,f,1,1,1,7,3,4,1,4\nb,r,f,1,1,1,7,0,0,2,0\nc,r,f,1,1,1,7,,,,\n";
        let p = read_tasks(csv.as_bytes(), &TaskSchema::default()).unwrap();
        assert_eq!(p.dataset.len(), 2);
        assert_eq!(p.report.errors[0].column.as_deref(), Some("IOINTENSITY_CLASS"));
        assert_eq!(p.dataset.records[0].classes.unwrap().get(Target::Wall), 4);
        assert!(p.dataset.records[1].classes.is_none());
    }

    #[test]
    fn job_rows() {
        let csv = "TASK_ID,MAXPSS_MB,STARTTIME,ENDTIME,COREPOWER,NEVENTS_JOB,INPUT_BYTES,OUTPUT_BYTES,CORECOUNT,IS_SCOUT\n\
                   t,2000,10,70,10.5,100,1e9,0,8,1\nt,2000,10,5,10.5,100,1e9,0,8,0\nt,2000,10,70,10.5,100,1e9,0,8,maybe\n";
        let (jobs, report) = read_jobs(csv.as_bytes()).unwrap();
        assert_eq!(jobs.len(), 1);
        assert!(jobs[0].is_scout);
        assert_eq!(jobs[0].input_bytes, 1e9);
        assert_eq!(report.errors.len(), 2);
        let mut out = Vec::new();
        write_jobs(&mut out, &jobs).unwrap();
        assert_eq!(read_jobs(out.as_slice()).unwrap().0, jobs);
    }

    #[test]
    fn predictions_without_probabilities_are_one_hot() {
        let csv = "TASK_ID,RAMCOUNT_CLASS,CPUTIME_CLASS,IOINTENSITY_CLASS,WALLTIME_CLASS\na,2,0,1,4\n";
        let (t, _) = read_predictions(csv.as_bytes()).unwrap();
        assert_eq!(t.probabilities[0].row(0), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(t.probabilities[2].row(0), &[0.0, 1.0]);
        assert_eq!(t.classes[0].get(Target::Wall), 4);
    }
}
