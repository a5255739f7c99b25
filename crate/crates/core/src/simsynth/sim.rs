//! Event-driven brokerage simulation.
//!
//! Tasks arrive as a Poisson stream. Each waits for an allocation decision
//! (sampled scout wait, or a fixed model latency), then all of its jobs
//! start at once on an unlimited pool. Only the RAM and walltime tiers gate
//! execution: a RAM tier below the task's true tier fails the attempt part
//! way through, a walltime tier below it kills the attempt when the
//! allocated fraction of the runtime is used up. Either way the job retries
//! one tier up. Surplus tiers on successful attempts are charged as wasted
//! core-hours in proportion to the over-allocation.
//!
//! Both modes execute the same job set after the decision. The scout phase
//! is represented by the sampled wait alone, so with equal allocations the
//! two modes differ only by their decision delay.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::generator::{scout_count, SyntheticTask};
use crate::discretize::{class_to_allocation, BinSet, ResourceClasses};
use crate::ingest::{Target, TaskRecord};
use crate::stats;
use crate::targets::{aggregate_scouts, ResourceConfig, TargetError};

pub const HOUR: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(&'static str),
    #[error("model-driven mode needs a predictor")]
    MissingPredictor,
    #[error("predictor failed: {0}")]
    Predictor(String),
    #[error("predictor returned {got} predictions for {expected} tasks")]
    PredictionCount { expected: usize, got: usize },
    #[error("task {0} has fewer than two jobs")]
    TooFewJobs(String),
    #[error(transparent)]
    Target(#[from] TargetError),
}

/// Source of class predictions for model-driven brokerage.
pub trait ClassPredictor {
    fn predict_classes(&self, tasks: &[TaskRecord]) -> Result<Vec<ResourceClasses>, SimError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaitDistribution {
    /// `min(exp(mu + sigma * Z), cap)` hours.
    CappedLogNormal { mu_log_hours: f64, sigma: f64, cap_hours: f64 },
    Fixed { hours: f64 },
}

impl WaitDistribution {
    /// Mean about 7 hours with close to 0.9% of waits above 150 hours.
    pub const CALIBRATED: WaitDistribution =
        WaitDistribution::CappedLogNormal { mu_log_hours: -0.226, sigma: 2.2, cap_hours: 240.0 };

    pub fn sample_hours<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            WaitDistribution::CappedLogNormal { mu_log_hours, sigma, cap_hours } => {
                let z: f64 = rng.sample(StandardNormal);
                libm::exp(mu_log_hours + sigma * z).min(cap_hours)
            }
            WaitDistribution::Fixed { hours } => hours,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            WaitDistribution::CappedLogNormal { mu_log_hours, sigma, cap_hours } => {
                mu_log_hours.is_finite() && sigma > 0.0 && sigma.is_finite() && cap_hours > 0.0
            }
            WaitDistribution::Fixed { hours } => hours >= 0.0 && hours.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config("bad wait distribution"))
        }
    }
}

/// Where scout-mode allocations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoutAllocation {
    /// Aggregated from the scout jobs' measurements.
    Derived,
    /// The task's true classes, to isolate the effect of the wait.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisallocationPolicy {
    /// Fraction of the runtime after which an under-provisioned RAM attempt fails.
    pub ram_failure_point: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub scout_wait: WaitDistribution,
    pub scout_fraction: f64,
    /// Seconds per task.
    pub ml_latency: f64,
    pub arrivals_per_hour: f64,
    pub policy: MisallocationPolicy,
    pub scout_allocation: ScoutAllocation,
    pub resource: ResourceConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            scout_wait: WaitDistribution::CALIBRATED,
            scout_fraction: 0.1,
            ml_latency: 0.1,
            arrivals_per_hour: 50.0,
            policy: MisallocationPolicy { ram_failure_point: 0.5 },
            scout_allocation: ScoutAllocation::Derived,
            resource: ResourceConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.scout_wait.validate()?;
        if !(self.scout_fraction > 0.0 && self.scout_fraction < 1.0) {
            return Err(SimError::Config("scout_fraction must be in (0, 1)"));
        }
        if !(self.ml_latency >= 0.0) || !self.ml_latency.is_finite() {
            return Err(SimError::Config("ml_latency must be non-negative"));
        }
        if !(self.arrivals_per_hour > 0.0) || !self.arrivals_per_hour.is_finite() {
            return Err(SimError::Config("arrival rate must be positive"));
        }
        if !(self.policy.ram_failure_point > 0.0 && self.policy.ram_failure_point <= 1.0) {
            return Err(SimError::Config("ram_failure_point must be in (0, 1]"));
        }
        self.resource.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Scout,
    Ml,
}

impl SimMode {
    pub fn name(self) -> &'static str {
        match self {
            SimMode::Scout => "scout",
            SimMode::Ml => "ml",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Summary::default();
        }
        let sorted = stats::sorted_copy(values);
        Summary {
            mean: stats::mean(values),
            median: stats::percentile_sorted(&sorted, 0.5),
            p95: stats::percentile_sorted(&sorted, 0.95),
            max: *sorted.last().expect("non-empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub mode: SimMode,
    pub n_tasks: usize,
    pub n_jobs: usize,
    /// Hours from arrival to the last job finishing.
    pub turnaround_hours: Summary,
    /// Hours from arrival to the allocation decision.
    pub decision_hours: Summary,
    pub decisions_over_150h: f64,
    /// Hours from the decision to the last job finishing.
    pub execution_hours: Summary,
    pub retries: u64,
    pub ram_failures: u64,
    pub walltime_kills: u64,
    pub wasted_core_hours: f64,
    pub wasted_ram_gb_hours: f64,
    /// Per task, in input order.
    pub turnarounds: Vec<f64>,
    pub decisions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival,
    Decision,
    AttemptEnd { job: usize },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    task: usize,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Min-heap on (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Queue {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, time: f64, task: usize, kind: EventKind) {
        self.heap.push(Event { time, seq: self.seq, task, kind });
        self.seq += 1;
    }
}

struct JobState {
    hours: f64,
    cores: f64,
    ram_class: usize,
    wall_class: usize,
}

struct TaskState {
    arrival: f64,
    decision: f64,
    truth: ResourceClasses,
    jobs: Vec<JobState>,
    remaining: usize,
    done: f64,
}

fn job_hours(task: &SyntheticTask) -> Vec<(f64, f64)> {
    task.jobs.iter().map(|j| (j.duration() / HOUR, j.core_count as f64)).collect()
}

/// Arrival times in hours, shared by both modes for a given seed.
fn arrivals(n: usize, cfg: &SimConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gap = Exp::new(cfg.arrivals_per_hour).expect("validated rate");
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += gap.sample(&mut rng);
            t
        })
        .collect()
}

fn scout_classes(task: &SyntheticTask, bins: &BinSet, cfg: &SimConfig) -> Result<ResourceClasses, SimError> {
    let truth = bins.classify(&task.targets);
    match cfg.scout_allocation {
        ScoutAllocation::Truth => Ok(truth),
        ScoutAllocation::Derived => {
            let n = scout_count(task.jobs.len(), cfg.scout_fraction);
            let agg = aggregate_scouts(&task.jobs[..n], &cfg.resource)?;
            Ok(bins.classify(&agg.targets))
        }
    }
}

/// Runs one mode. `predictor` is required for [`SimMode::Ml`].
pub fn simulate(
    tasks: &[SyntheticTask],
    bins: &BinSet,
    mode: SimMode,
    cfg: &SimConfig,
    predictor: Option<&dyn ClassPredictor>,
) -> Result<SimReport, SimError> {
    cfg.validate()?;
    if let Some(t) = tasks.iter().find(|t| t.jobs.len() < 2) {
        return Err(SimError::TooFewJobs(t.record.task_id.clone()));
    }
    let allocations: Vec<ResourceClasses> = match mode {
        SimMode::Ml => {
            let p = predictor.ok_or(SimError::MissingPredictor)?;
            let records: Vec<TaskRecord> = tasks.iter().map(|t| t.record.clone()).collect();
            let out = p.predict_classes(&records)?;
            if out.len() != tasks.len() {
                return Err(SimError::PredictionCount { expected: tasks.len(), got: out.len() });
            }
            out
        }
        SimMode::Scout => tasks.iter().map(|t| scout_classes(t, bins, cfg)).collect::<Result<_, _>>()?,
    };

    let arrival_times = arrivals(tasks.len(), cfg);
    let mut wait_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5c0a_7ca1);
    let mut states: Vec<TaskState> = tasks
        .iter()
        .zip(&allocations)
        .zip(&arrival_times)
        .map(|((t, &alloc), &arrival)| {
            let jobs: Vec<JobState> = job_hours(t)
                .into_iter()
                .map(|(hours, cores)| JobState { hours, cores, ram_class: alloc.ram as usize, wall_class: alloc.wall as usize })
                .collect();
            TaskState {
                arrival,
                decision: 0.0,
                truth: bins.classify(&t.targets),
                remaining: jobs.len(),
                jobs,
                done: 0.0,
            }
        })
        .collect();

    let ram_spec = bins.get(Target::Ram);
    let wall_spec = bins.get(Target::Wall);
    let tier = |spec, c: usize| class_to_allocation(c, spec).expect("class within bins");
    let mut q = Queue { heap: BinaryHeap::new(), seq: 0 };
    for (i, s) in states.iter().enumerate() {
        q.push(s.arrival, i, EventKind::Arrival);
    }
    let (mut retries, mut ram_failures, mut walltime_kills) = (0u64, 0u64, 0u64);
    let (mut wasted_core_hours, mut wasted_ram_gb_hours) = (0.0, 0.0);

    // Starts an attempt and returns its end time.
    let attempt_length = |s: &TaskState, j: usize| -> f64 {
        let job = &s.jobs[j];
        if job.ram_class < s.truth.ram as usize {
            job.hours * cfg.policy.ram_failure_point
        } else if job.wall_class < s.truth.wall as usize {
            job.hours * tier(wall_spec, job.wall_class) / tier(wall_spec, s.truth.wall as usize)
        } else {
            job.hours
        }
    };

    while let Some(ev) = q.heap.pop() {
        let s = &mut states[ev.task];
        match ev.kind {
            EventKind::Arrival => {
                let wait = match mode {
                    SimMode::Scout => cfg.scout_wait.sample_hours(&mut wait_rng),
                    SimMode::Ml => cfg.ml_latency / HOUR,
                };
                q.push(ev.time + wait, ev.task, EventKind::Decision);
            }
            EventKind::Decision => {
                s.decision = ev.time;
                for j in 0..s.jobs.len() {
                    let end = ev.time + attempt_length(s, j);
                    q.push(end, ev.task, EventKind::AttemptEnd { job: j });
                }
            }
            EventKind::AttemptEnd { job: j } => {
                let truth = s.truth;
                let job = &mut s.jobs[j];
                let ran = if job.ram_class < truth.ram as usize {
                    ram_failures += 1;
                    job.ram_class += 1;
                    Some(job.hours * cfg.policy.ram_failure_point)
                } else if job.wall_class < truth.wall as usize {
                    walltime_kills += 1;
                    let frac = tier(wall_spec, job.wall_class) / tier(wall_spec, truth.wall as usize);
                    job.wall_class += 1;
                    Some(job.hours * frac)
                } else {
                    None
                };
                match ran {
                    Some(hours) => {
                        retries += 1;
                        wasted_core_hours += job.cores * hours;
                        let end = ev.time + attempt_length(s, j);
                        q.push(end, ev.task, EventKind::AttemptEnd { job: j });
                    }
                    None => {
                        let wall_over = tier(wall_spec, job.wall_class) / tier(wall_spec, truth.wall as usize) - 1.0;
                        let ram_alloc = tier(ram_spec, job.ram_class);
                        let ram_true = tier(ram_spec, truth.ram as usize);
                        let ram_over = ram_alloc / ram_true - 1.0;
                        wasted_core_hours += job.cores * job.hours * (wall_over + ram_over);
                        wasted_ram_gb_hours += job.cores * job.hours * (ram_alloc - ram_true) / 1000.0;
                        s.remaining -= 1;
                        if s.remaining == 0 {
                            s.done = ev.time;
                        }
                    }
                }
            }
        }
    }

    let turnarounds: Vec<f64> = states.iter().map(|s| s.done - s.arrival).collect();
    let decisions: Vec<f64> = states.iter().map(|s| s.decision - s.arrival).collect();
    let execution: Vec<f64> = states.iter().map(|s| s.done - s.decision).collect();
    let over = decisions.iter().filter(|&&d| d > 150.0).count();
    Ok(SimReport {
        mode,
        n_tasks: tasks.len(),
        n_jobs: states.iter().map(|s| s.jobs.len()).sum(),
        turnaround_hours: Summary::of(&turnarounds),
        decision_hours: Summary::of(&decisions),
        decisions_over_150h: if tasks.is_empty() { 0.0 } else { over as f64 / tasks.len() as f64 },
        execution_hours: Summary::of(&execution),
        retries,
        ram_failures,
        walltime_kills,
        wasted_core_hours,
        wasted_ram_gb_hours,
        turnarounds,
        decisions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub scout: SimReport,
    pub ml: SimReport,
    /// Scout minus model-driven mean turnaround, hours.
    pub turnaround_reduction_hours: f64,
    pub turnaround_reduction_fraction: f64,
    /// Model-driven minus scout retries.
    pub retry_delta: i64,
    /// Model-driven minus scout wasted core-hours.
    pub wasted_core_hours_delta: f64,
}

/// Both modes over the same tasks, arrivals and seed.
pub fn compare(
    tasks: &[SyntheticTask],
    bins: &BinSet,
    cfg: &SimConfig,
    predictor: &dyn ClassPredictor,
) -> Result<Comparison, SimError> {
    let scout = simulate(tasks, bins, SimMode::Scout, cfg, None)?;
    let ml = simulate(tasks, bins, SimMode::Ml, cfg, Some(predictor))?;
    let reduction = scout.turnaround_hours.mean - ml.turnaround_hours.mean;
    Ok(Comparison {
        turnaround_reduction_hours: reduction,
        turnaround_reduction_fraction: if scout.turnaround_hours.mean > 0.0 {
            reduction / scout.turnaround_hours.mean
        } else {
            0.0
        },
        retry_delta: ml.retries as i64 - scout.retries as i64,
        wasted_core_hours_delta: ml.wasted_core_hours - scout.wasted_core_hours,
        scout,
        ml,
    })
}

/// Predicts each task's true classes; a lower bound for any predictor.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    classes: alloc::collections::BTreeMap<String, ResourceClasses>,
    ram_shift: i32,
}

impl OraclePredictor {
    pub fn new(tasks: &[SyntheticTask], bins: &BinSet) -> Self {
        OraclePredictor {
            classes: tasks.iter().map(|t| (t.record.task_id.clone(), bins.classify(&t.targets))).collect(),
            ram_shift: 0,
        }
    }

    /// Moves every RAM prediction by `shift` tiers, clamped to the valid range.
    pub fn with_ram_shift(mut self, shift: i32) -> Self {
        self.ram_shift = shift;
        self
    }
}

impl ClassPredictor for OraclePredictor {
    fn predict_classes(&self, tasks: &[TaskRecord]) -> Result<Vec<ResourceClasses>, SimError> {
        tasks
            .iter()
            .map(|t| {
                let mut c = *self
                    .classes
                    .get(&t.task_id)
                    .ok_or_else(|| SimError::Predictor(alloc::format!("unknown task {}", t.task_id)))?;
                let top = Target::Ram.n_classes() as i32 - 1;
                c.ram = (c.ram as i32 + self.ram_shift).clamp(0, top) as u8;
                Ok(c)
            })
            .collect()
    }
}

/// Sample of scout waits in hours, for calibration checks.
pub fn sample_waits(dist: &WaitDistribution, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| dist.sample_hours(&mut rng)).collect()
}
