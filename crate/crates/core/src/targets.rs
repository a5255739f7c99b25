//! Continuous resource targets derived from job execution profiles.
//!
//! Four quantities are computed per job and aggregated over the scout jobs
//! of a task:
//!
//! * RAM per core: `max((maxPSS - baseRamCount) / coreCount * margin, minRamCount)`
//! * CPU time per event: `max(0, end - start - baseTime) * corePower / nEvents
//!   * coreCount * cpuEfficiency * safety` (safety factor 1.5)
//! * I/O intensity: `(input + output bytes) / (end - start)`
//! * walltime: `cpuTime * nEvents / (C * P * cpuEfficiency) + baseTime`,
//!   clamped to the queue's `[min_time, max_time]`.
//!
//! Across scouts, RAM takes the 75th percentile, CPU time the 95th
//! percentile of the scouts that processed at least `10 * coreCount` events
//! or ran longer than six hours, and I/O intensity the median.

use alloc::vec::Vec;

use crate::ingest::JobProfile;
use crate::stats;

/// Jobs longer than this always qualify for the CPU-time percentile.
pub const LONG_JOB_SECONDS: f64 = 6.0 * 3600.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TargetError {
    #[error("undefined target: {0}")]
    Undefined(&'static str),
    #[error("no scout jobs to aggregate")]
    NoScouts,
    #[error("invalid resource config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceConfig {
    /// MB.
    pub base_ram_count: f64,
    /// MB per core.
    pub min_ram_count: f64,
    pub margin: f64,
    /// Seconds.
    pub base_time: f64,
    pub cpu_efficiency: f64,
    pub cpu_safety_factor: f64,
    pub walltime_c: f64,
    /// HS06 per core.
    pub walltime_p: f64,
    pub min_time: f64,
    pub max_time: f64,
}

impl Default for ResourceConfig {
    fn default() -> Self {
        ResourceConfig {
            base_ram_count: 0.0,
            min_ram_count: 500.0,
            margin: 10.0,
            base_time: 0.0,
            cpu_efficiency: 0.9,
            cpu_safety_factor: 1.5,
            walltime_c: 1.0,
            walltime_p: 10.0,
            min_time: 60.0,
            max_time: 30.0 * 86400.0,
        }
    }
}

impl ResourceConfig {
    pub fn validate(&self) -> Result<(), TargetError> {
        let non_negative = [
            self.base_ram_count,
            self.min_ram_count,
            self.margin,
            self.base_time,
            self.cpu_safety_factor,
            self.min_time,
            self.max_time,
        ]
        .iter()
        .all(|v| *v >= 0.0);
        if !non_negative {
            return Err(TargetError::InvalidConfig("parameters must be non-negative"));
        }
        if !(self.cpu_efficiency > 0.0 && self.cpu_efficiency <= 1.0) {
            return Err(TargetError::InvalidConfig("cpu_efficiency must lie in (0, 1]"));
        }
        if !(self.walltime_c > 0.0 && self.walltime_p > 0.0) {
            return Err(TargetError::InvalidConfig("walltime C and P must be positive"));
        }
        if self.min_time > self.max_time {
            return Err(TargetError::InvalidConfig("min_time exceeds max_time"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResourceTargets {
    /// MB per core.
    pub ram_count: f64,
    /// HS06-seconds per event.
    pub cpu_time: f64,
    /// Bytes per second.
    pub io_intensity: f64,
    /// Seconds.
    pub walltime: f64,
}

impl ResourceTargets {
    pub fn get(&self, target: crate::ingest::Target) -> f64 {
        use crate::ingest::Target;
        match target {
            Target::Ram => self.ram_count,
            Target::Cpu => self.cpu_time,
            Target::Io => self.io_intensity,
            Target::Wall => self.walltime,
        }
    }
}

pub fn derive_ram_count(job: &JobProfile, cfg: &ResourceConfig) -> f64 {
    let cores = job.core_count.max(1) as f64;
    (((job.max_pss - cfg.base_ram_count) / cores) * cfg.margin).max(cfg.min_ram_count)
}

pub fn derive_cpu_time(job: &JobProfile, cfg: &ResourceConfig) -> Result<f64, TargetError> {
    if job.n_events_job == 0 {
        return Err(TargetError::Undefined("cpu time of a job that processed no events"));
    }
    let busy = (job.end_time - job.start_time - cfg.base_time).max(0.0);
    Ok((busy * job.core_power / job.n_events_job as f64)
        * job.core_count as f64
        * cfg.cpu_efficiency
        * cfg.cpu_safety_factor)
}

pub fn derive_io_intensity(job: &JobProfile) -> Result<f64, TargetError> {
    let duration = job.end_time - job.start_time;
    if !(duration > 0.0) {
        return Err(TargetError::Undefined("io intensity of a zero-duration job"));
    }
    Ok((job.input_bytes + job.output_bytes) / duration)
}

pub fn derive_walltime(cpu_time: f64, n_events: f64, cfg: &ResourceConfig) -> f64 {
    let w = cpu_time * n_events / (cfg.walltime_c * cfg.walltime_p * cfg.cpu_efficiency) + cfg.base_time;
    w.clamp(cfg.min_time, cfg.max_time)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoutAggregate {
    pub targets: ResourceTargets,
    /// No scout passed the event-count / duration gate, so the CPU-time
    /// percentile was taken over all scouts.
    pub cpu_filter_fallback: bool,
    /// Events per job used for the walltime (median over scouts).
    pub events_per_job: f64,
}

/// Aggregates per-job targets of a set of jobs (normally the scouts of one
/// task). The result does not depend on the order of `scouts`.
pub fn aggregate_scouts(scouts: &[JobProfile], cfg: &ResourceConfig) -> Result<ScoutAggregate, TargetError> {
    if scouts.is_empty() {
        return Err(TargetError::NoScouts);
    }
    let ram: Vec<f64> = scouts.iter().map(|j| derive_ram_count(j, cfg)).collect();
    let io = scouts.iter().map(derive_io_intensity).collect::<Result<Vec<_>, _>>()?;
    let qualifies = |j: &JobProfile| {
        j.n_events_job >= 10 * j.core_count as u64 || j.duration() > LONG_JOB_SECONDS
    };
    let gated: Vec<&JobProfile> = scouts.iter().filter(|j| qualifies(j)).collect();
    let cpu_filter_fallback = gated.is_empty();
    let cpu_pool: Vec<&JobProfile> = if cpu_filter_fallback { scouts.iter().collect() } else { gated };
    let cpu = cpu_pool
        .into_iter()
        .map(|j| derive_cpu_time(j, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let events: Vec<f64> = scouts.iter().map(|j| j.n_events_job as f64).collect();

    let ram_count = stats::percentile_sorted(&stats::sorted_copy(&ram), 0.75);
    let cpu_time = stats::percentile_sorted(&stats::sorted_copy(&cpu), 0.95);
    let io_intensity = stats::percentile_sorted(&stats::sorted_copy(&io), 0.5);
    let events_per_job = stats::percentile_sorted(&stats::sorted_copy(&events), 0.5);
    let walltime = derive_walltime(cpu_time, events_per_job, cfg);
    Ok(ScoutAggregate {
        targets: ResourceTargets { ram_count, cpu_time, io_intensity, walltime },
        cpu_filter_fallback,
        events_per_job,
    })
}
