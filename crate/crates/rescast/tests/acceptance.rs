//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line
//! to the real stdout (bypassing the harness capture) and then asserts.

mod common;

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rescast::artifact::{fingerprint, ModelArtifact};
use rescast::pipeline::{train_pipeline, PipelineConfig};
use rescast::report::evaluate_models;
use rescast::service::{prediction_json, AppState, FeedbackLog, RunningServer};
use rescast_core::encode::{embed_dim, fit_encoder, EncodedBatch, NumericTransform};
use rescast_core::ingest::{Dataset, JobProfile, LabeledTask, Target, TaskRecord};
use rescast_core::metrics::{
    average_pipeline_accuracy, per_class_prf, pipeline_metrics, pr_auc_micro, roc_auc_micro, ConfusionMatrix,
};
use rescast_core::model::TrainSummary;
use rescast_core::nnet::{Architecture, BatchStats, DropoutMasks, Mode, Network, Probabilities, StopReason, TrainConfig};
use rescast_core::simsynth::{
    compare, generate, simulate, GeneratorSpec, OraclePredictor, Population, ScoutAllocation, SimConfig, SimMode,
};
use rescast_core::targets::{derive_cpu_time, derive_io_intensity, derive_ram_count, derive_walltime, ResourceConfig};
use rescast_core::{BinSet, ModelSet, TargetModel};
use serde_json::{json, Value};

fn verdict(n: u8, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_resource_formulas() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let (mut ram_floor, mut cpu_floor, mut wall_low, mut wall_high) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let min_time = rng.random_range(0.0..20_000.0);
        let cfg = ResourceConfig {
            base_ram_count: rng.random_range(0.0..2000.0),
            min_ram_count: rng.random_range(0.0..4000.0),
            margin: rng.random_range(0.5..12.0),
            base_time: rng.random_range(0.0..900.0),
            cpu_efficiency: rng.random_range(0.05..=1.0),
            cpu_safety_factor: rng.random_range(1.0..2.0),
            walltime_c: rng.random_range(0.1..8.0),
            walltime_p: rng.random_range(1.0..30.0),
            min_time,
            max_time: min_time + rng.random_range(0.0..3e6),
        };
        // Log-uniform durations reach both sides of base_time.
        let duration = 10f64.powf(rng.random_range(0.0..5.5));
        let start_time = rng.random_range(1.6e9..1.7e9);
        let job = JobProfile {
            task_id: "t".into(),
            max_pss: rng.random_range(0.0..64_000.0),
            start_time,
            end_time: start_time + duration,
            core_power: rng.random_range(5.0..25.0),
            n_events_job: rng.random_range(1..200_000),
            input_bytes: rng.random_range(0.0..1e11),
            output_bytes: rng.random_range(0.0..1e10),
            core_count: rng.random_range(1..=64),
            is_scout: true,
        };
        let d = job.end_time - job.start_time;

        let mut ram = (job.max_pss - cfg.base_ram_count) / f64::from(job.core_count) * cfg.margin;
        if ram < cfg.min_ram_count {
            ram = cfg.min_ram_count;
            ram_floor += 1;
        }
        worst = worst.max(rel(derive_ram_count(&job, &cfg), ram));

        let mut busy = d - cfg.base_time;
        if busy < 0.0 {
            busy = 0.0;
            cpu_floor += 1;
        }
        let cpu = busy * job.core_power / job.n_events_job as f64
            * f64::from(job.core_count)
            * cfg.cpu_efficiency
            * cfg.cpu_safety_factor;
        worst = worst.max(rel(derive_cpu_time(&job, &cfg).unwrap(), cpu));

        let io = (job.input_bytes + job.output_bytes) / d;
        worst = worst.max(rel(derive_io_intensity(&job).unwrap(), io));

        let events = 10f64.powf(rng.random_range(0.0..6.0));
        let mut wall = cpu * events / (cfg.walltime_c * cfg.walltime_p * cfg.cpu_efficiency) + cfg.base_time;
        if wall < cfg.min_time {
            wall = cfg.min_time;
            wall_low += 1;
        } else if wall > cfg.max_time {
            wall = cfg.max_time;
            wall_high += 1;
        }
        worst = worst.max(rel(derive_walltime(cpu, events, &cfg), wall));
    }
    let elapsed = start.elapsed();
    let branches = ram_floor > 0 && cpu_floor > 0 && wall_low > 0 && wall_high > 0;
    let pass = worst < 1e-9 && branches && elapsed < Duration::from_secs(1);
    verdict(
        1,
        pass,
        &format!(
            "max rel err {worst:.1e} (< 1e-9), clamps hit: ram floor {ram_floor}, cpu floor {cpu_floor}, \
             wall min {wall_low}, wall max {wall_high}; {elapsed:.2?} (< 1 s)"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_embedding_width() {
    let start = Instant::now();
    let reference = |v: u64| ((v as f64).log2().floor() as usize + 1).min(32);
    let mut mismatches = 0;
    for v in 1u64..=1_000_000 {
        // Bit length is exact where the float log could round near powers of two.
        let bits = 64 - v.leading_zeros() as usize;
        assert_eq!(bits.min(32), reference(v), "oracles disagree at {v}");
        if embed_dim(v).unwrap() != bits.min(32) {
            mismatches += 1;
        }
    }
    let edges = [((1u64 << 31) - 1, 31), (1u64 << 31, 32), (1u64 << 32, 32), ((1u64 << 32) + 1, 32), (u64::MAX, 32)];
    let edge_ok = edges.iter().all(|&(v, w)| embed_dim(v).unwrap() == w && reference(v.min(1 << 40)) == w);
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && edge_ok && elapsed < Duration::from_secs(1);
    verdict(2, pass, &format!("{mismatches} mismatches on 1..=1e6, cap edges ok: {edge_ok}; {elapsed:.2?} (< 1 s)"));
    assert!(pass);
}

// ---------------------------------------------------------------- 3

fn tiny_network() -> Network {
    let arch = Architecture { vocab_sizes: vec![3, 3], embed_dims: vec![2, 2], n_numeric: 2, hidden: vec![4, 3, 2], n_classes: 3 };
    let mut net = Network::new(arch, 31).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let stats = BatchStats {
        layers: [4usize, 3, 2]
            .iter()
            .map(|&w| ((0..w).map(|_| rng.random_range(-0.5..0.5)).collect(), (0..w).map(|_| rng.random_range(0.5..2.0)).collect()))
            .collect(),
    };
    net.update_running_stats(&stats, 0.0);
    // Non-trivial values everywhere, including the zero-initialized output bias.
    for p in net.parameters_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    net
}

fn gradient_error(net: &Network, batch: &EncodedBatch, mode: Mode<'_>) -> (f64, usize) {
    const H: f64 = 1e-5;
    let weights = [1.0, 1.7, 0.6];
    let l2 = 1e-3;
    let (_, grads, _) = net.loss_and_gradients(batch, &weights, l2, mode).unwrap();
    let loss = |n: &Network| n.loss_and_gradients(batch, &weights, l2, mode).unwrap().0;
    let lens: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
    let (mut worst, mut count) = (0.0f64, 0);
    for (t, &len) in lens.iter().enumerate() {
        for i in 0..len {
            let mut plus = net.clone();
            plus.parameters_mut()[t][i] += H;
            let mut minus = net.clone();
            minus.parameters_mut()[t][i] -= H;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
            let analytic = grads.tensors[t][i];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8));
            count += 1;
        }
    }
    (worst, count)
}

#[test]
fn criterion_3_gradient_check() {
    let start = Instant::now();
    let net = tiny_network();
    let rows = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let batch = EncodedBatch {
        categorical: vec![(0..rows).map(|_| rng.random_range(0..3)).collect(), (0..rows).map(|_| rng.random_range(0..3)).collect()],
        numeric: (0..rows * 2).map(|_| rng.random_range(-2.0..2.0)).collect(),
        n_numeric: 2,
        labels: Some((0..rows).map(|_| rng.random_range(0..3)).collect()),
        rows,
    };
    let masks = DropoutMasks::sample(&mut rng, rows, &[4, 3, 2], &[0.25, 0.25, 0.0]);
    let (train_err, n_train) = gradient_error(&net, &batch, Mode::Train(&masks));
    let (infer_err, n_infer) = gradient_error(&net, &batch, Mode::Inference);
    let elapsed = start.elapsed();
    let all = n_train == net.parameter_count() && n_infer == net.parameter_count();
    let pass = all && train_err < 1e-4 && infer_err < 1e-4 && elapsed < Duration::from_secs(10);
    verdict(
        3,
        pass,
        &format!(
            "{} parameters, max rel err train {train_err:.1e}, inference {infer_err:.1e} (< 1e-4); {elapsed:.2?} (< 10 s)",
            net.parameter_count()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_training_sanity() {
    let start = Instant::now();
    let pop = generate(&GeneratorSpec::default_with(42, 10_000)).unwrap();
    let cfg = PipelineConfig {
        split_seed: 42,
        train: TrainConfig { learning_rate: 1e-3, max_epochs: 50, seed: 42, ..TrainConfig::default() },
        ..PipelineConfig::default()
    };
    let trained = train_pipeline(&common::pairs(&pop), &cfg).unwrap();
    let report = evaluate_models(&trained.models, &trained.test).unwrap();
    let elapsed = start.elapsed();
    let mut pass = elapsed < Duration::from_secs(300);
    let mut parts = Vec::new();
    for (run, eval) in trained.runs.iter().zip(&report.targets) {
        let val = run.report.best_val_accuracy().unwrap_or(0.0);
        let epochs = run.report.epochs.len();
        let margin = eval.accuracy() - eval.majority_baseline;
        pass &= val >= 0.90 && epochs <= 50 && margin >= 0.10;
        parts.push(format!(
            "{} val {val:.3} in {epochs} ep, test {:.3} vs majority {:.3}",
            run.target.name(),
            eval.accuracy(),
            eval.majority_baseline
        ));
    }
    verdict(
        4,
        pass,
        &format!("{}; test n {}, fully stratified {}; {elapsed:.1?} (< 5 min)", parts.join("; "), trained.test.len(), trained.test_stratified),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut doubled, mut pairs) = (0u64, 0u64);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1;
                doubled += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

/// Step-wise area over thresholds `score >= t`, highest threshold first.
fn swept_pr_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let p = positive.iter().filter(|&&y| y).count() as f64;
    let (mut area, mut prev_tp) = (0.0, 0.0);
    for t in thresholds {
        let tp = scores.iter().zip(positive).filter(|(s, y)| **s >= t && **y).count() as f64;
        let selected = scores.iter().filter(|s| **s >= t).count() as f64;
        area += (tp - prev_tp) / p * (tp / selected);
        prev_tp = tp;
    }
    area
}

#[test]
fn criterion_5_metric_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut failures = Vec::new();
    for inst in 0..100 {
        let n = rng.random_range(1..=50);
        let k = rng.random_range(2..=5);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| if rng.random_bool(0.5) { truth[0] } else { rng.random_range(0..k) }).collect();

        let report = per_class_prf(&ConfusionMatrix::from_labels(&truth, &pred, k).unwrap()).unwrap();
        for c in 0..k {
            let tp = (0..n).filter(|&i| truth[i] == c && pred[i] == c).count() as f64;
            let fp = (0..n).filter(|&i| truth[i] != c && pred[i] == c).count() as f64;
            let fn_ = (0..n).filter(|&i| truth[i] == c && pred[i] != c).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            let m = &report.per_class[c];
            if (m.precision, m.recall, m.f1, m.support) != (p, r, f, (tp + fn_) as u64) {
                failures.push(format!("prf {inst}/{c}"));
            }
        }
        let correct = (0..n).filter(|&i| truth[i] == pred[i]).count() as f64;
        if report.accuracy != correct / n as f64 {
            failures.push(format!("accuracy {inst}"));
        }

        // Coarse scores force ties on some instances.
        let coarse = inst % 4 == 0;
        let mut data = Vec::with_capacity(n * k);
        for _ in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| if coarse { rng.random_range(1..4) as f64 } else { rng.random_range(0.01..1.0) }).collect();
            let s: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|x| x / s));
        }
        let probs = Probabilities { rows: n, n_classes: k, data };
        let mut scores = Vec::new();
        let mut positive = Vec::new();
        for (r, &y) in truth.iter().enumerate() {
            for c in 0..k {
                scores.push(probs.data[r * k + c]);
                positive.push(y == c);
            }
        }
        if roc_auc_micro(&probs, &truth).unwrap() != pairwise_auc(&scores, &positive) {
            failures.push(format!("roc {inst}"));
        }
        if pr_auc_micro(&probs, &truth).unwrap() != swept_pr_auc(&scores, &positive) {
            failures.push(format!("pr {inst}"));
        }

        let preds: Vec<Vec<usize>> =
            (0..4).map(|_| (0..n).map(|i| if rng.random_bool(0.6) { truth[i] } else { rng.random_range(0..k) }).collect()).collect();
        let models: Vec<(&[usize], &[usize])> = preds.iter().map(|p| (p.as_slice(), truth.as_slice())).collect();
        let pm = pipeline_metrics(&models).unwrap();
        let hits: Vec<usize> = (0..n).map(|i| (0..4).filter(|&j| preds[j][i] == truth[i]).count()).collect();
        for kk in 1..=4 {
            if pm.at_least[kk - 1] != hits.iter().filter(|&&h| h >= kk).count() as f64 / n as f64 {
                failures.push(format!("at_least {inst}/{kk}"));
            }
        }
        if pm.exact_match != hits.iter().filter(|&&h| h == 4).count() as f64 / n as f64 {
            failures.push(format!("exact {inst}"));
        }
        for (j, p) in preds.iter().enumerate() {
            if pm.per_model[j] != (0..n).filter(|&i| p[i] == truth[i]).count() as f64 / n as f64 {
                failures.push(format!("per_model {inst}/{j}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(10);
    verdict(5, pass, &format!("100 instances, {} exact-equality failures {:?}; {elapsed:.2?} (< 10 s)", failures.len(), failures));
    assert!(pass);
}

// ---------------------------------------------------------------- 6

/// Per-task correctness for `n` tasks such that model `j` is right on
/// `per_model[j]` tasks and exactly `j` models are right on `exactly[j]` tasks.
/// Each task's correct models are the ones with the most remaining quota.
fn correctness_table(per_model: [usize; 4], exactly: [usize; 5]) -> Vec<[bool; 4]> {
    let mut quota = per_model;
    let mut rows = Vec::new();
    for j in (0..=4).rev() {
        for _ in 0..exactly[j] {
            let mut order = [0usize, 1, 2, 3];
            order.sort_by(|&a, &b| quota[b].cmp(&quota[a]).then(a.cmp(&b)));
            let mut row = [false; 4];
            for &m in &order[..j] {
                assert!(quota[m] > 0, "infeasible quotas");
                quota[m] -= 1;
                row[m] = true;
            }
            rows.push(row);
        }
    }
    assert_eq!(quota, [0; 4]);
    rows
}

#[test]
fn criterion_6_reported_arithmetic() {
    let avg = average_pipeline_accuracy(&[0.805, 0.858, 0.939, 0.839]) * 100.0;
    // Half a unit in the last reported digit, plus float slack.
    let avg_ok = (avg - 86.03).abs() <= 0.005 + 1e-9;

    let rows = correctness_table([8050, 8580, 9390, 8392], [22, 190, 882, 3166, 5740]);
    let truth = vec![0usize; rows.len()];
    let preds: Vec<Vec<usize>> = (0..4).map(|j| rows.iter().map(|r| usize::from(!r[j])).collect()).collect();
    let models: Vec<(&[usize], &[usize])> = preds.iter().map(|p| (p.as_slice(), truth.as_slice())).collect();
    let pm = pipeline_metrics(&models).unwrap();
    let pct = |x: f64| (x * 1000.0).round() / 10.0;
    let at_least: Vec<f64> = pm.at_least.iter().map(|&x| pct(x)).collect();
    let table_ok = at_least == [99.8, 97.9, 89.1, 57.4] && (pm.average * 100.0 - 86.03).abs() < 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut monotone = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..=200);
        let k = rng.random_range(2..=5);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let acc: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let preds: Vec<Vec<usize>> =
            acc.iter().map(|&a| truth.iter().map(|&y| if rng.random_bool(a) { y } else { rng.random_range(0..k) }).collect()).collect();
        let models: Vec<(&[usize], &[usize])> = preds.iter().map(|p| (p.as_slice(), truth.as_slice())).collect();
        let r = pipeline_metrics(&models).unwrap();
        monotone &= r.at_least.windows(2).all(|w| w[0] >= w[1]) && r.at_least[3] == r.exact_match;
    }
    let pass = avg_ok && table_ok && monotone;
    verdict(
        6,
        pass,
        &format!("average {avg:.4}% (86.03 +/- 0.005), at least 1..4 of 4 = {at_least:?}, monotone on 1000 random instances: {monotone}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

/// Untrained models with the production architecture, for latency only.
fn default_architecture_set(pop: &Population, bins: &BinSet) -> ModelSet {
    let ds = Dataset::new(pop.tasks.iter().map(|t| LabeledTask { task: t.record.clone(), classes: None }).collect()).unwrap();
    let encoder = fit_encoder(&ds, NumericTransform::Log1p).unwrap();
    let model = |t: Target| TargetModel {
        target: t,
        encoder: encoder.clone(),
        bins: bins.get(t).clone(),
        network: Network::new(Architecture::for_encoder(&encoder, t.n_classes()), t.index() as u64).unwrap(),
        summary: TrainSummary { epochs_run: 0, best_epoch: 0, best_val_accuracy: 0.0, stop_reason: StopReason::MaxEpochs },
    };
    ModelSet::new(Target::ALL.map(model)).unwrap()
}

#[test]
fn criterion_7_simulation() {
    let start = Instant::now();
    let pop = generate(&GeneratorSpec::default_with(7, 10_000)).unwrap();
    let bins = BinSet::fit(&pop.targets()).unwrap();
    let cfg = SimConfig::default();
    let scout = simulate(&pop.tasks, &bins, SimMode::Scout, &cfg, None).unwrap();
    let wait = scout.decision_hours.mean;
    let wait_ok = (7.0 * 0.8..=7.0 * 1.2).contains(&wait) && scout.decisions_over_150h >= 0.005;

    // Per-task decision latency of the real predictor.
    let models = default_architecture_set(&pop, &bins);
    let mut latencies: Vec<f64> = pop.tasks[..500]
        .iter()
        .map(|t| {
            let s = Instant::now();
            models.predict_one(&t.record).unwrap();
            s.elapsed().as_secs_f64()
        })
        .collect();
    latencies.sort_by(f64::total_cmp);
    let worst_latency = *latencies.last().unwrap();
    let mean_latency = latencies.iter().sum::<f64>() / latencies.len() as f64;
    let ml_cfg = SimConfig { ml_latency: mean_latency, ..cfg.clone() };
    let ml = simulate(&pop.tasks, &bins, SimMode::Ml, &ml_cfg, Some(&models)).unwrap();
    let latency_ok = worst_latency < 1.0 && ml.decision_hours.max * 3600.0 < 1.0;

    // Equal allocation quality on both sides isolates the decision delay.
    let eq_cfg = SimConfig { scout_allocation: ScoutAllocation::Truth, ml_latency: mean_latency, ..cfg };
    let oracle = OraclePredictor::new(&pop.tasks, &bins);
    let cmp = compare(&pop.tasks, &bins, &eq_cfg, &oracle).unwrap();
    let expected = cmp.scout.decision_hours.mean - mean_latency / 3600.0;
    let deviation = (cmp.turnaround_reduction_hours - expected).abs() / expected;
    let elapsed = start.elapsed();
    let pass = wait_ok && latency_ok && deviation <= 0.05 && elapsed < Duration::from_secs(120);
    verdict(
        7,
        pass,
        &format!(
            "scout wait mean {wait:.2} h (5.6..8.4), over 150 h {:.2}% (>= 0.5%), ml latency max {:.1} ms (< 1 s), \
             reduction {:.3} h vs expected {expected:.3} h ({:.2}% off, <= 5%); {elapsed:.1?} (< 2 min)",
            scout.decisions_over_150h * 100.0,
            worst_latency * 1e3,
            cmp.turnaround_reduction_hours,
            deviation * 100.0
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

fn request_body(t: &TaskRecord) -> Value {
    json!({
        "TASK_ID": t.task_id, "PROCESSINGTYPE": t.processing_type, "FRAMEWORK": t.framework,
        "NCORE": t.core_count, "NINPUT": t.n_input, "NFILES": t.n_files, "NEVENTS": t.n_events,
    })
}

#[test]
fn criterion_8_serving() {
    let pop = generate(&GeneratorSpec::default_with(808, 1500)).unwrap();
    let cfg = PipelineConfig {
        split_seed: 8,
        train: TrainConfig { learning_rate: 1e-3, max_epochs: 2, seed: 8, ..TrainConfig::default() },
        ..PipelineConfig::default()
    };
    let trained = train_pipeline(&common::pairs(&pop), &cfg).unwrap();

    let artifact = ModelArtifact::new(&trained.models, fingerprint(&cfg.canonical()), 1_700_000_000);
    let bytes = artifact.to_bytes();
    let loaded = ModelArtifact::from_bytes(&bytes).unwrap();
    let round_trip = loaded.to_bytes() == bytes && loaded.model_set().unwrap() == trained.models;

    let models = loaded.model_set().unwrap();
    let state = Arc::new(AppState::new(Some(models.clone()), FeedbackLog::in_memory()));
    let srv = RunningServer::start(state, "127.0.0.1:0").unwrap();
    let client = reqwest::blocking::Client::new();
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("INFERENCE_SECONDS");
        v
    };

    // Fresh tasks, not seen in training.
    let fresh = generate(&GeneratorSpec::default_with(809, 100)).unwrap();
    let mut equal = 0;
    let mut latencies = Vec::new();
    for t in &fresh.tasks {
        let s = Instant::now();
        let remote: Value = client.post(srv.url("/predict")).json(&request_body(&t.record)).send().unwrap().json().unwrap();
        latencies.push(s.elapsed().as_secs_f64());
        let local = Value::Object(prediction_json(&models.predict_one(&t.record).unwrap()));
        if strip(remote) == strip(local) {
            equal += 1;
        }
    }
    for t in pop.tasks.iter().take(100) {
        let s = Instant::now();
        let r = client.post(srv.url("/predict")).json(&request_body(&t.record)).send().unwrap();
        assert_eq!(r.status().as_u16(), 200);
        r.bytes().unwrap();
        latencies.push(s.elapsed().as_secs_f64());
    }
    srv.stop().unwrap();
    latencies.sort_by(f64::total_cmp);
    let p99 = latencies[(latencies.len() * 99).div_ceil(100) - 1];
    let pass = round_trip && equal == 100 && p99 < 1.0;
    verdict(
        8,
        pass,
        &format!(
            "artifact bit-identical: {round_trip}, HTTP equals in-process on {equal}/100, p99 {:.2} ms over {} requests (< 1 s)",
            p99 * 1e3,
            latencies.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

fn cli_pipeline(root: &Path) -> i32 {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = root.join("data");
    let model = root.join("model");
    let steps: [Vec<String>; 3] = [
        vec!["synth".into(), "--tasks".into(), "1200".into(), "--seed".into(), "99".into(), "--out-dir".into(), s(&data)],
        vec![
            "train".into(),
            "--data".into(),
            s(&data.join("tasks.csv")),
            "--targets".into(),
            s(&data.join("targets.csv")),
            "--model-dir".into(),
            s(&model),
            "--seed".into(),
            "99".into(),
            "--max-epochs".into(),
            "4".into(),
            "--learning-rate".into(),
            "1e-3".into(),
            "--hidden".into(),
            "32,16,8".into(),
        ],
        vec!["evaluate".into(), "--model-dir".into(), s(&model)],
    ];
    for args in steps {
        let code = rescast::cli::main_with_args(std::iter::once("rescast".to_string()).chain(args));
        if code != 0 {
            return code;
        }
    }
    0
}

fn eval_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_9_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let codes = (cli_pipeline(a.path()), cli_pipeline(b.path()));
    let fa = eval_files(&a.path().join("model").join("eval"));
    let fb = eval_files(&b.path().join("model").join("eval"));
    let report_present = fa.iter().any(|(n, _)| n == "report.txt");
    let identical = fa == fb;
    let pass = codes == (0, 0) && report_present && identical;
    verdict(
        9,
        pass,
        &format!("exit codes {codes:?}, {} evaluation files compared, byte-identical: {identical}", fa.len()),
    );
    assert!(pass);
}
