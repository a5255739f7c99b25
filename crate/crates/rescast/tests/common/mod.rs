#![allow(dead_code)]

use rescast::pipeline::{self, PipelineConfig, TrainedPipeline};
use rescast_core::nnet::TrainConfig;
use rescast_core::simsynth::{generate, GeneratorSpec, Population};

/// Pairs of records and targets from a generated population.
pub fn pairs(pop: &Population) -> Vec<(rescast_core::TaskRecord, rescast_core::ResourceTargets)> {
    pop.tasks.iter().map(|t| (t.record.clone(), t.targets)).collect()
}

/// A small, quickly trained pipeline. Accuracy is irrelevant here.
pub fn quick_pipeline(seed: u64, n: usize) -> (TrainedPipeline, Population) {
    let pop = generate(&GeneratorSpec::default_with(seed, n)).unwrap();
    let cfg = PipelineConfig {
        split_seed: seed,
        hidden: vec![16, 8, 4],
        train: TrainConfig { max_epochs: 3, learning_rate: 1e-3, batch_size: 64, seed, ..TrainConfig::default() },
        ..PipelineConfig::default()
    };
    (pipeline::train_pipeline(&pairs(&pop), &cfg).unwrap(), pop)
}
