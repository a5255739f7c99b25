//! Synthetic workloads and a brokerage simulator comparing scout-based
//! allocation with model-driven allocation.

pub mod generator;
pub mod sim;

pub use generator::{generate, scout_count, CategoryProfile, GeneratorSpec, LogNormalParams, Population, SyntheticTask};
pub use sim::{
    compare, sample_waits, simulate, ClassPredictor, Comparison, MisallocationPolicy, OraclePredictor, ScoutAllocation,
    SimConfig, SimError, SimMode, SimReport, Summary, WaitDistribution, HOUR,
};
