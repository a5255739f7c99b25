//! Synthetic task populations with heavy-tailed resource usage.
//!
//! Each task draws a (processing type, framework) profile, then its counts.
//! The latent log-targets are the profile mean plus the profile spread times
//! a fixed mix of standardized log-features, plus a little noise, so classes
//! are learnable from the features while the marginals stay heavy-tailed.
//! Jobs are synthesized so that re-deriving the targets from them recovers
//! the latent values up to a small per-job jitter.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::discretize::BinSet;
use crate::ingest::{Dataset, IngestError, JobProfile, LabeledTask, TaskRecord};
use crate::targets::{aggregate_scouts, ResourceConfig, ResourceTargets, TargetError};

/// Log-space location and spread of one latent quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryProfile {
    pub processing_type: String,
    pub framework: String,
    pub weight: f64,
    /// MB per core, after the memory margin.
    pub ram: LogNormalParams,
    /// HS06-seconds per event.
    pub cpu: LogNormalParams,
    /// Bytes per second.
    pub io: LogNormalParams,
    pub n_events: LogNormalParams,
    /// Input file sets, log-uniform on `1..=max_input`.
    pub max_input: u64,
    /// Files per input set, log-uniform on `1..=max_files_per_input`.
    pub max_files_per_input: u64,
    /// Probability that the task runs multi-core.
    pub multicore_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub n_tasks: usize,
    pub profiles: Vec<CategoryProfile>,
    /// Standard deviation of the unexplained log-space noise.
    pub noise: f64,
    /// Per-job multiplicative jitter around the task's latent values.
    pub job_jitter: f64,
    pub max_jobs: usize,
    pub multicore_cores: u32,
    pub scout_fraction: f64,
    pub resource: ResourceConfig,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    Spec(&'static str),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

const PROCESSING_TYPES: [(&str, f64, f64, f64, f64); 5] = [
    // name, ram mu, cpu mu, io mu, multicore probability
    ("evgen", 9.4, 3.2, 9.5, 0.1),
    ("simul", 10.1, 5.6, 8.5, 0.9),
    ("reco", 10.7, 4.2, 13.0, 0.8),
    ("deriv", 9.8, 1.6, 15.0, 0.2),
    ("merge", 9.2, 0.3, 16.5, 0.0),
];

const FRAMEWORKS: [(&str, f64, f64, f64, f64); 3] = [
    // name, ram shift, cpu shift, io shift, weight
    ("athena", 0.0, 0.0, 0.0, 0.6),
    ("root", -0.4, -0.7, 0.6, 0.25),
    ("gaudi", 0.6, 0.5, -0.5, 0.15),
];

impl GeneratorSpec {
    /// Fifteen profiles spanning about four orders of magnitude per target.
    pub fn default_with(seed: u64, n_tasks: usize) -> Self {
        let mut profiles = Vec::new();
        for (i, &(pt, ram, cpu, io, mc)) in PROCESSING_TYPES.iter().enumerate() {
            for &(fw, dram, dcpu, dio, w) in &FRAMEWORKS {
                profiles.push(CategoryProfile {
                    processing_type: pt.into(),
                    framework: fw.into(),
                    weight: w * [0.25, 0.3, 0.2, 0.15, 0.1][i],
                    ram: LogNormalParams { mu: ram + dram, sigma: 1.3 },
                    cpu: LogNormalParams { mu: cpu + dcpu, sigma: 1.2 },
                    io: LogNormalParams { mu: io + dio, sigma: 1.0 },
                    n_events: LogNormalParams { mu: 10.0 + i as f64 * 0.4, sigma: 1.3 },
                    max_input: 30,
                    max_files_per_input: 40,
                    multicore_probability: mc,
                });
            }
        }
        GeneratorSpec {
            seed,
            n_tasks,
            profiles,
            noise: 0.05,
            job_jitter: 0.02,
            max_jobs: 40,
            multicore_cores: 8,
            scout_fraction: 0.1,
            resource: ResourceConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.profiles.is_empty() {
            return Err(GeneratorError::Spec("no profiles"));
        }
        for p in &self.profiles {
            if !(p.weight > 0.0) || !p.weight.is_finite() {
                return Err(GeneratorError::Spec("profile weights must be positive"));
            }
            if [p.ram, p.cpu, p.io, p.n_events].iter().any(|d| !(d.sigma > 0.0) || !d.mu.is_finite()) {
                return Err(GeneratorError::Spec("log-normal sigma must be positive"));
            }
            if p.max_input == 0 || p.max_files_per_input == 0 || !(0.0..=1.0).contains(&p.multicore_probability) {
                return Err(GeneratorError::Spec("bad count distribution"));
            }
        }
        if !(self.noise >= 0.0) || !(self.job_jitter >= 0.0) {
            return Err(GeneratorError::Spec("noise must be non-negative"));
        }
        if self.max_jobs < 2 || self.multicore_cores < 1 {
            return Err(GeneratorError::Spec("need at least two jobs per task and one core"));
        }
        if !(self.scout_fraction > 0.0 && self.scout_fraction < 1.0) {
            return Err(GeneratorError::Spec("scout fraction must be in (0, 1)"));
        }
        self.resource.validate()?;
        Ok(())
    }

    /// Profile weights normalized to probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.profiles.iter().map(|p| p.weight).sum();
        self.profiles.iter().map(|p| p.weight / total).collect()
    }
}

/// A task with its jobs and the targets derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub record: TaskRecord,
    pub jobs: Vec<JobProfile>,
    pub targets: ResourceTargets,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub tasks: Vec<SyntheticTask>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn records(&self) -> Vec<TaskRecord> {
        self.tasks.iter().map(|t| t.record.clone()).collect()
    }

    pub fn targets(&self) -> Vec<ResourceTargets> {
        self.tasks.iter().map(|t| t.targets).collect()
    }

    pub fn jobs(&self) -> impl Iterator<Item = &JobProfile> {
        self.tasks.iter().flat_map(|t| &t.jobs)
    }

    /// Dataset labeled with the classes of `bins`.
    pub fn labeled(&self, bins: &BinSet) -> Result<Dataset, IngestError> {
        Dataset::new(
            self.tasks
                .iter()
                .map(|t| LabeledTask { task: t.record.clone(), classes: Some(bins.classify(&t.targets)) })
                .collect(),
        )
    }
}

fn log_uniform_count<R: Rng + ?Sized>(rng: &mut R, max: u64) -> u64 {
    let x = libm::exp(rng.random::<f64>() * libm::log(max as f64 + 1.0));
    (x as u64).clamp(1, max)
}

/// Deterministic in `spec.seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<Population, GeneratorError> {
    spec.validate()?;
    if spec.n_tasks == 0 {
        return Ok(Population::default());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pick = WeightedIndex::new(spec.profiles.iter().map(|p| p.weight)).map_err(|_| GeneratorError::Spec("weights"))?;
    let width = format!("{}", spec.n_tasks - 1).len();
    let mut tasks = Vec::with_capacity(spec.n_tasks);
    for i in 0..spec.n_tasks {
        let p = &spec.profiles[pick.sample(&mut rng)];
        let z_events: f64 = rng.sample(StandardNormal);
        let n_events_raw = libm::exp(p.n_events.mu + p.n_events.sigma * z_events);
        let n_input = log_uniform_count(&mut rng, p.max_input);
        let files_per_input = log_uniform_count(&mut rng, p.max_files_per_input);
        let n_files = n_input * files_per_input;
        let multicore = rng.random::<f64>() < p.multicore_probability;
        let core_count = if multicore { spec.multicore_cores } else { 1 };
        let n_jobs = (n_files as usize).clamp(2, spec.max_jobs);
        let n_events = (n_events_raw as u64).max(n_jobs as u64 * 10);

        // Standardized log-features driving the latent targets.
        let z_ev = (libm::log(n_events as f64) - p.n_events.mu) / p.n_events.sigma;
        let z_fpi = libm::log(files_per_input as f64) - 0.5 * libm::log(p.max_files_per_input as f64);
        let z_in = libm::log(n_input as f64) - 0.5 * libm::log(p.max_input as f64);
        let z_core = if multicore { 1.0 } else { -1.0 };
        let mut noise = || spec.noise * rng.sample::<f64, _>(StandardNormal);
        let ram = libm::exp(p.ram.mu + p.ram.sigma * (0.7 * z_ev + 0.5 * z_fpi - 0.4 * z_core) + noise());
        let cpu = libm::exp(p.cpu.mu + p.cpu.sigma * (0.6 * z_in - 0.5 * z_fpi + 0.5 * z_ev) + noise());
        let io = libm::exp(p.io.mu + p.io.sigma * (0.8 * z_fpi - 0.5 * z_ev + 0.3 * z_core) + noise());

        let record = TaskRecord {
            task_id: format!("task-{i:0width$}"),
            processing_type: p.processing_type.clone(),
            framework: p.framework.clone(),
            core_count,
            n_input,
            n_files,
            n_events,
        };
        let jobs = synthesize_jobs(&mut rng, spec, &record, n_jobs, ram, cpu, io, i);
        let targets = aggregate_scouts(&jobs, &spec.resource)?.targets;
        tasks.push(SyntheticTask { record, jobs, targets });
    }
    Ok(Population { tasks })
}

const EPOCH_START: f64 = 1.7e9;
const CORE_POWERS: [f64; 4] = [8.0, 10.0, 12.0, 15.0];

#[allow(clippy::too_many_arguments)]
fn synthesize_jobs<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &GeneratorSpec,
    task: &TaskRecord,
    n_jobs: usize,
    ram: f64,
    cpu: f64,
    io: f64,
    index: usize,
) -> Vec<JobProfile> {
    let cfg = &spec.resource;
    let cores = task.core_count as f64;
    let n_scouts = scout_count(n_jobs, spec.scout_fraction);
    let base = task.n_events / n_jobs as u64;
    let extra = (task.n_events % n_jobs as u64) as usize;
    let start_base = EPOCH_START + index as f64 * 60.0;
    (0..n_jobs)
        .map(|j| {
            let mut jitter = || libm::exp(spec.job_jitter * rng.sample::<f64, _>(StandardNormal));
            let ram_j = ram * jitter();
            let cpu_j = cpu * jitter();
            let io_j = io * jitter();
            let core_power = CORE_POWERS[rng.random_range(0..CORE_POWERS.len())];
            let events = base + u64::from(j < extra);
            // Inverse of the cpu-time derivation for this job.
            let duration = cpu_j * events as f64
                / (core_power * cores * cfg.cpu_efficiency * cfg.cpu_safety_factor)
                + cfg.base_time;
            let max_pss = ram_j * cores / cfg.margin + cfg.base_ram_count;
            let bytes = io_j * duration;
            let start_time = start_base + j as f64;
            JobProfile {
                task_id: task.task_id.clone(),
                max_pss,
                start_time,
                end_time: start_time + duration,
                core_power,
                n_events_job: events,
                input_bytes: 0.7 * bytes,
                output_bytes: 0.3 * bytes,
                core_count: task.core_count,
                is_scout: j < n_scouts,
            }
        })
        .collect()
}

/// Number of scout jobs: the rounded fraction, at least one and leaving at
/// least one job to run afterwards.
pub fn scout_count(n_jobs: usize, fraction: f64) -> usize {
    if n_jobs < 2 {
        return n_jobs;
    }
    (libm::round(fraction * n_jobs as f64) as usize).clamp(1, n_jobs - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Target;
    use crate::stats;

    #[test]
    fn zero_tasks_is_empty() {
        assert!(generate(&GeneratorSpec::default_with(1, 0)).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_population() {
        let spec = GeneratorSpec::default_with(9, 200);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&GeneratorSpec::default_with(10, 200)).unwrap();
        assert_ne!(generate(&spec).unwrap(), other);
    }

    #[test]
    fn records_and_jobs_are_valid() {
        let pop = generate(&GeneratorSpec::default_with(3, 300)).unwrap();
        for t in &pop.tasks {
            t.record.validate().unwrap();
            assert!(t.jobs.len() >= 2);
            assert!(t.jobs.iter().any(|j| j.is_scout) && t.jobs.iter().any(|j| !j.is_scout));
            for j in &t.jobs {
                j.validate().unwrap();
                assert_eq!(j.task_id, t.record.task_id);
            }
            assert_eq!(t.jobs.iter().map(|j| j.n_events_job).sum::<u64>(), t.record.n_events);
            for target in Target::ALL {
                assert!(t.targets.get(target).is_finite() && t.targets.get(target) > 0.0);
            }
        }
    }

    #[test]
    fn targets_are_heavy_tailed() {
        let pop = generate(&GeneratorSpec::default_with(5, 5000)).unwrap();
        for target in [Target::Ram, Target::Cpu, Target::Wall] {
            let v: Vec<f64> = pop.tasks.iter().map(|t| t.targets.get(target)).collect();
            assert!(stats::skewness(&v) > 2.0, "{target}");
        }
    }

    #[test]
    fn scout_count_bounds() {
        assert_eq!(scout_count(2, 0.1), 1);
        assert_eq!(scout_count(40, 0.1), 4);
        assert_eq!(scout_count(3, 0.9), 2);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = GeneratorSpec::default_with(1, 10);
        spec.profiles[0].ram.sigma = 0.0;
        assert!(generate(&spec).is_err());
        let mut spec = GeneratorSpec::default_with(1, 10);
        spec.scout_fraction = 1.0;
        assert!(generate(&spec).is_err());
    }
}
