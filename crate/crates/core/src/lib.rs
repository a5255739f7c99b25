//! Resource-requirement prediction for workflow brokerage.
//!
//! This crate holds the algorithmic core: the task/job data model and
//! stratified splitting, derivation of continuous resource targets from job
//! execution profiles, discretization into allocation tiers, feature
//! encoding, a from-scratch tabular classifier (embeddings, dense stack with
//! batch normalization and dropout, Adam), evaluation metrics, and a
//! synthetic workload generator with a discrete-event brokerage simulator.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the model
//! artifact, the HTTP service and the command line live in the `rescast`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod discretize;
pub mod encode;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod nnet;
pub mod simsynth;
pub mod stats;
pub mod targets;

pub use discretize::{assign_class, class_to_allocation, fit_bins, BinSet, BinSpec, FitMethod, ResourceClasses};
pub use encode::{embed_dim, encode, fit_encoder, EncodedBatch, EncoderSpec, NumericTransform};
pub use ingest::{stratified_split, Dataset, JobProfile, LabeledTask, SplitSpec, Splits, Target, TaskRecord};
pub use model::{ModelSet, TargetModel, TaskPrediction};
pub use nnet::{Network, TrainConfig, TrainReport};
pub use targets::{ResourceConfig, ResourceTargets};
