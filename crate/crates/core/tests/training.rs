use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rescast_core::encode::EncodedBatch;
use rescast_core::ingest::{Dataset, LabeledTask, Target, TaskRecord};
use rescast_core::encode::{encode, fit_encoder, NumericTransform};
use rescast_core::nnet::{
    loss, train, Adam, Architecture, DropoutMasks, Mode, Network, StopReason, TrainConfig, PROB_FLOOR,
};
use rescast_core::ResourceClasses;

/// Two numeric features, label = side of a fixed hyperplane with a margin.
fn separable(rows: usize, seed: u64) -> EncodedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut numeric = Vec::new();
    let mut labels = Vec::new();
    while labels.len() < rows {
        let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let side = 0.8 * a - 0.6 * b;
        if side.abs() < 0.1 {
            continue;
        }
        numeric.extend([a, b]);
        labels.push(usize::from(side > 0.0));
    }
    EncodedBatch {
        categorical: vec![(0..rows as u32).map(|r| r % 3).collect()],
        numeric,
        n_numeric: 2,
        labels: Some(labels),
        rows,
    }
}

fn small_arch(k: usize) -> Architecture {
    Architecture { vocab_sizes: vec![3], embed_dims: vec![2], n_numeric: 2, hidden: vec![32, 16, 8], n_classes: k }
}

#[test]
fn separable_binary_data_is_learned() {
    let cfg = TrainConfig { max_epochs: 50, batch_size: 32, seed: 4, learning_rate: 1e-3, ..TrainConfig::default() };
    let report = train(Network::new(small_arch(2), 1).unwrap(), &separable(2000, 1), &separable(400, 2), &cfg).unwrap();
    assert!(report.epochs.len() <= 50);
    assert!(report.best_val_accuracy().unwrap() >= 0.95, "{:?}", report.best_val_accuracy());
    let best = report.epochs.iter().map(|e| e.val_accuracy).fold(0.0, f64::max);
    assert_eq!(report.best_val_accuracy(), Some(best));
    assert!(report.network.is_some());
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig { max_epochs: 6, batch_size: 64, seed: 9, learning_rate: 1e-3, ..TrainConfig::default() };
    let run = || train(Network::new(small_arch(2), 3).unwrap(), &separable(500, 5), &separable(100, 6), &cfg).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn nan_weight_aborts_training() {
    let mut net = Network::new(small_arch(2), 3).unwrap();
    net.parameters_mut()[1][0] = f64::NAN;
    let cfg = TrainConfig { max_epochs: 5, ..TrainConfig::default() };
    let report = train(net, &separable(200, 5), &separable(50, 6), &cfg).unwrap();
    assert_eq!(report.stop_reason, StopReason::NanAbort);
    assert!(report.network.is_none());
}

#[test]
fn l2_alone_shrinks_weights_every_step() {
    let mut net = Network::new(small_arch(3), 8).unwrap();
    let shapes: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(&shapes, 1e-4, 0.9, 0.999, 1e-8);
    let mut norm = net.squared_weight_norm();
    for _ in 0..25 {
        let grads = net.l2_gradients(1e-2);
        adam.step(net.parameters_mut(), &grads.tensors);
        let next = net.squared_weight_norm();
        assert!(next < norm, "{next} !< {norm}");
        norm = next;
    }
}

#[test]
fn unit_class_weights_give_plain_cross_entropy() {
    let net = Network::new(small_arch(3), 2).unwrap();
    let mut b = separable(40, 3);
    b.labels = Some((0..40).map(|i| i % 3).collect());
    let probs = net.predict_proba(&b).unwrap();
    let labels = b.labels.clone().unwrap();
    let l2 = 3e-4;
    let plain: f64 = labels.iter().enumerate().map(|(r, &y)| -probs.row(r)[y].max(PROB_FLOOR).ln()).sum::<f64>() / 40.0;
    let expected = plain + 0.5 * l2 * net.squared_weight_norm();
    assert_eq!(loss(&probs, &labels, &[1.0; 3], &net, l2).unwrap(), expected);
}

#[test]
fn inverted_dropout_preserves_expected_logits() {
    let arch = Architecture { vocab_sizes: vec![5, 4], embed_dims: vec![3, 3], n_numeric: 4, hidden: vec![256, 128, 64], n_classes: 5 };
    let net = Network::new(arch, 3).unwrap();
    let rows = 16;
    let b = EncodedBatch {
        categorical: vec![(0..rows as u32).map(|r| r % 5).collect(), (0..rows as u32).map(|r| r % 4).collect()],
        numeric: (0..rows * 4).map(|i| (i as f64 * 0.7).sin()).collect(),
        n_numeric: 4,
        labels: None,
        rows,
    };
    let reference = net.logits(&b, Mode::Inference).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n_masks = 10_000;
    let mut mean = vec![0.0; reference.len()];
    for _ in 0..n_masks {
        // Dropout on the layer feeding the linear output head.
        let masks = DropoutMasks::sample(&mut rng, rows, &[256, 128, 64], &[0.0, 0.0, 0.3]);
        for (m, x) in mean.iter_mut().zip(net.logits(&b, Mode::McDropout(&masks)).unwrap()) {
            *m += x / n_masks as f64;
        }
    }
    for r in 0..rows {
        let row = r * 5..(r + 1) * 5;
        let diff: f64 = row.clone().map(|i| (mean[i] - reference[i]).powi(2)).sum::<f64>().sqrt();
        let size: f64 = row.map(|i| reference[i].powi(2)).sum::<f64>().sqrt();
        assert!(diff / size < 0.02, "row {r}: {}", diff / size);
    }
}

fn records(n: usize, offset: u64) -> Vec<LabeledTask> {
    (0..n)
        .map(|i| LabeledTask {
            task: TaskRecord {
                task_id: format!("t{}", i as u64 + offset),
                processing_type: ["a", "b"][i % 2].into(),
                framework: "f".into(),
                core_count: 1 + (i % 3) as u32,
                n_input: 1 + i as u64 + offset,
                n_files: 10 * (1 + i as u64 + offset),
                n_events: 100 * (i as u64 + 1) + offset * 1000,
            },
            classes: Some(ResourceClasses::default()),
        })
        .collect()
}

#[test]
fn encoder_moments_come_from_training_data_only() {
    let train = Dataset::new(records(50, 0)).unwrap();
    let mut all = records(50, 0);
    all.extend(records(20, 500));
    let union = Dataset::new(all).unwrap();
    let a = fit_encoder(&train, NumericTransform::Log1p).unwrap();
    let b = fit_encoder(&union, NumericTransform::Log1p).unwrap();
    assert_ne!(a.numeric, b.numeric);
    // Encoding unseen rows never refits.
    let test = Dataset::new(records(20, 500)).unwrap();
    let before = a.clone();
    let _ = encode(test.tasks(), &a);
    assert_eq!(a, before);
}

#[test]
fn uniform_network_predicts_lowest_class() {
    let mut net = Network::new(small_arch(4), 1).unwrap();
    net.zero_output_layer();
    let b = separable(10, 1);
    let p = net.predict_proba(&b).unwrap();
    assert!(p.predictions().iter().all(|&c| c == 0));
    assert_eq!(Target::Ram.n_classes(), 4);
}
