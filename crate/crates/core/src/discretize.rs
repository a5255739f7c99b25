//! Discretization of continuous targets into allocation classes.
//!
//! Class `k` covers `(edges[k-1], edges[k]]`; class 0 is open below and the
//! top class is open above. A value sitting exactly on an edge belongs to
//! the lower class. Mapping a class back to a request uses the upper edge of
//! its bin, and a configured cap for the top bin.

use alloc::vec::Vec;

use crate::ingest::Target;
use crate::stats;
use crate::targets::ResourceTargets;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BinError {
    #[error("no values to fit")]
    Empty,
    #[error("{target} has {expected} classes, got {got}")]
    ClassCount { target: Target, expected: usize, got: usize },
    #[error("fewer distinct values than classes: only {achievable} classes achievable")]
    FewerDistinctValues { achievable: usize },
    #[error("bin edges must be finite and strictly increasing")]
    BadEdges,
    #[error("top-bin cap {cap} is below the last edge")]
    BadCap { cap: f64 },
    #[error("class {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Quantile,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    target: Target,
    edges: Vec<f64>,
    fit_method: FitMethod,
    allocation_values: Vec<f64>,
}

impl BinSpec {
    /// Operator-chosen thresholds. `cap` is the request value of the top bin.
    pub fn explicit(target: Target, edges: Vec<f64>, cap: f64) -> Result<Self, BinError> {
        Self::from_parts(target, edges, FitMethod::Explicit, cap)
    }

    /// Rebuilds a spec from stored parts (edges plus the top-bin cap).
    pub fn from_parts(target: Target, edges: Vec<f64>, fit_method: FitMethod, cap: f64) -> Result<Self, BinError> {
        let expected = target.n_classes();
        if edges.len() + 1 != expected {
            return Err(BinError::ClassCount { target, expected, got: edges.len() + 1 });
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BinError::BadEdges);
        }
        if !cap.is_finite() || cap < *edges.last().expect("at least one edge") {
            return Err(BinError::BadCap { cap });
        }
        let mut allocation_values = edges.clone();
        allocation_values.push(cap);
        Ok(BinSpec { target, edges, fit_method, allocation_values })
    }

    pub fn with_cap(self, cap: f64) -> Result<Self, BinError> {
        Self::from_parts(self.target, self.edges, self.fit_method, cap)
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn n_classes(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn fit_method(&self) -> FitMethod {
        self.fit_method
    }

    pub fn allocation_values(&self) -> &[f64] {
        &self.allocation_values
    }

    pub fn cap(&self) -> f64 {
        *self.allocation_values.last().expect("non-empty")
    }
}

/// Quantile edges at `k / n_classes`, `k = 1..n_classes`. The top-bin cap
/// defaults to the largest fitted value.
pub fn fit_bins(values: &[f64], target: Target, n_classes: usize) -> Result<BinSpec, BinError> {
    if values.is_empty() {
        return Err(BinError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(BinError::NonFinite);
    }
    let expected = target.n_classes();
    if n_classes != expected {
        return Err(BinError::ClassCount { target, expected, got: n_classes });
    }
    let sorted = stats::sorted_copy(values);
    let edges: Vec<f64> = (1..n_classes)
        .map(|k| stats::percentile_sorted(&sorted, k as f64 / n_classes as f64))
        .collect();
    let mut distinct = edges.clone();
    distinct.dedup();
    let top = *sorted.last().expect("non-empty");
    // The top class also needs a value above the last edge.
    let top_class = usize::from(top > *distinct.last().expect("n_classes >= 2"));
    if distinct.len() < edges.len() || top_class == 0 {
        return Err(BinError::FewerDistinctValues { achievable: distinct.len() + top_class });
    }
    BinSpec::from_parts(target, edges, FitMethod::Quantile, top)
}

/// Class index of `value`: the number of edges strictly below it.
pub fn assign_class(value: f64, spec: &BinSpec) -> usize {
    spec.edges.partition_point(|&e| e < value)
}

pub fn class_to_allocation(class: usize, spec: &BinSpec) -> Result<f64, BinError> {
    spec.allocation_values
        .get(class)
        .copied()
        .ok_or(BinError::ClassOutOfRange { class, n_classes: spec.n_classes() })
}

/// Class labels of the four targets of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub struct ResourceClasses {
    pub ram: u8,
    pub cpu: u8,
    pub io: u8,
    pub wall: u8,
}

impl ResourceClasses {
    pub fn get(&self, target: Target) -> usize {
        (match target {
            Target::Ram => self.ram,
            Target::Cpu => self.cpu,
            Target::Io => self.io,
            Target::Wall => self.wall,
        }) as usize
    }

    pub fn set(&mut self, target: Target, class: usize) {
        let c = class as u8;
        match target {
            Target::Ram => self.ram = c,
            Target::Cpu => self.cpu = c,
            Target::Io => self.io = c,
            Target::Wall => self.wall = c,
        }
    }

    pub fn is_valid(&self) -> bool {
        Target::ALL.iter().all(|&t| self.get(t) < t.n_classes())
    }
}

/// Bin specs of all four targets, in [`Target::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSet {
    specs: [BinSpec; 4],
}

impl BinSet {
    pub fn new(specs: [BinSpec; 4]) -> Result<Self, BinError> {
        for (spec, target) in specs.iter().zip(Target::ALL) {
            if spec.target != target {
                return Err(BinError::ClassCount { target, expected: target.n_classes(), got: spec.n_classes() });
            }
        }
        Ok(BinSet { specs })
    }

    /// Quantile-fits all four targets.
    pub fn fit(targets: &[ResourceTargets]) -> Result<Self, BinError> {
        let fit = |t: Target| {
            let values: Vec<f64> = targets.iter().map(|r| r.get(t)).collect();
            fit_bins(&values, t, t.n_classes())
        };
        Ok(BinSet { specs: [fit(Target::Ram)?, fit(Target::Cpu)?, fit(Target::Io)?, fit(Target::Wall)?] })
    }

    pub fn get(&self, target: Target) -> &BinSpec {
        &self.specs[target.index()]
    }

    pub fn specs(&self) -> &[BinSpec; 4] {
        &self.specs
    }

    pub fn classify(&self, targets: &ResourceTargets) -> ResourceClasses {
        let mut c = ResourceClasses::default();
        for t in Target::ALL {
            c.set(t, assign_class(targets.get(t), self.get(t)));
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Reference quantile: linear interpolation written out on ranks.
    fn reference_quantile(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let h = (v.len() - 1) as f64 * q;
        let below = h as usize;
        if below + 1 >= v.len() {
            return v[below];
        }
        v[below] * (1.0 - (h - below as f64)) + v[below + 1] * (h - below as f64)
    }

    #[test]
    fn quartile_edges_of_one_to_hundred() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let spec = fit_bins(&values, Target::Ram, 4).unwrap();
        let expected: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&q| reference_quantile(&values, q)).collect();
        assert_eq!(expected, vec![25.75, 50.5, 75.25]);
        for (a, b) in spec.edges().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(spec.cap(), 100.0);
    }

    #[test]
    fn median_edge_for_two_classes() {
        let values = [1.0, 2.0, 3.0, 4.0];
        let spec = fit_bins(&values, Target::Io, 2).unwrap();
        assert_eq!(spec.edges(), &[reference_quantile(&values, 0.5)]);
        assert_eq!(spec.edges(), &[2.5]);
    }

    #[test]
    fn constant_values_cannot_be_binned() {
        let err = fit_bins(&[3.0; 10], Target::Io, 2).unwrap_err();
        assert_eq!(err, BinError::FewerDistinctValues { achievable: 1 });
    }

    #[test]
    fn massive_ties_report_achievable_classes() {
        let mut values = vec![1.0; 90];
        values.extend((0..10).map(|i| 10.0 + i as f64));
        let err = fit_bins(&values, Target::Ram, 4).unwrap_err();
        assert_eq!(err, BinError::FewerDistinctValues { achievable: 2 });
    }

    #[test]
    fn class_count_must_match_target() {
        assert!(matches!(fit_bins(&[1.0, 2.0, 3.0], Target::Ram, 3), Err(BinError::ClassCount { .. })));
    }

    #[test]
    fn assign_class_conventions() {
        let spec = BinSpec::explicit(Target::Ram, vec![10.0, 20.0, 30.0], 40.0).unwrap();
        assert_eq!(assign_class(15.0, &spec), 1);
        assert_eq!(assign_class(20.0, &spec), 1);
        assert_eq!(assign_class(1e9, &spec), 3);
        assert_eq!(assign_class(-5.0, &spec), 0);
        assert_eq!(assign_class(10.0, &spec), 0);
    }

    #[test]
    fn allocation_is_upper_edge_then_cap() {
        let spec = BinSpec::explicit(Target::Ram, vec![10.0, 20.0, 30.0], 64.0).unwrap();
        assert_eq!(class_to_allocation(0, &spec), Ok(10.0));
        assert_eq!(class_to_allocation(3, &spec), Ok(64.0));
        assert!(class_to_allocation(4, &spec).is_err());
    }

    #[test]
    fn explicit_edges_are_validated() {
        assert_eq!(BinSpec::explicit(Target::Io, vec![f64::NAN], 1.0), Err(BinError::BadEdges));
        assert_eq!(BinSpec::explicit(Target::Ram, vec![1.0, 1.0, 2.0], 3.0), Err(BinError::BadEdges));
        assert!(matches!(BinSpec::explicit(Target::Io, vec![5.0], 1.0), Err(BinError::BadCap { .. })));
    }

    #[test]
    fn classes_roundtrip_through_accessors() {
        let mut c = ResourceClasses::default();
        for t in Target::ALL {
            c.set(t, t.n_classes() - 1);
        }
        assert_eq!(c, ResourceClasses { ram: 3, cpu: 4, io: 1, wall: 4 });
        assert!(c.is_valid());
        c.set(Target::Io, 2);
        assert!(!c.is_valid());
    }
}
