use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnetError;
use crate::encode::{EncodedBatch, EncoderSpec};

/// Hidden widths of the production network.
pub const DEFAULT_HIDDEN: [usize; 3] = [256, 128, 64];
/// Batch-norm variance epsilon.
pub const BN_EPS: f64 = 1e-3;
/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub vocab_sizes: Vec<usize>,
    pub embed_dims: Vec<usize>,
    pub n_numeric: usize,
    pub hidden: Vec<usize>,
    pub n_classes: usize,
}

impl Architecture {
    pub fn for_encoder(spec: &EncoderSpec, n_classes: usize) -> Self {
        Architecture {
            vocab_sizes: spec.vocab_sizes(),
            embed_dims: spec.embed_dims(),
            n_numeric: spec.n_numeric(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            n_classes,
        }
    }

    pub fn input_width(&self) -> usize {
        self.embed_dims.iter().sum::<usize>() + self.n_numeric
    }

    /// Two-class models use a single sigmoid output.
    pub fn is_binary(&self) -> bool {
        self.n_classes == 2
    }

    pub fn n_outputs(&self) -> usize {
        if self.is_binary() {
            1
        } else {
            self.n_classes
        }
    }

    fn validate(&self) -> Result<(), NnetError> {
        if self.vocab_sizes.len() != self.embed_dims.len() {
            return Err(NnetError::Architecture("one embedding width per categorical feature"));
        }
        if self.vocab_sizes.iter().chain(&self.embed_dims).any(|&v| v == 0) {
            return Err(NnetError::Architecture("empty embedding table"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(NnetError::Architecture("hidden widths must be positive"));
        }
        if self.n_classes < 2 {
            return Err(NnetError::Architecture("need at least two classes"));
        }
        if self.input_width() == 0 {
            return Err(NnetError::Architecture("empty input"));
        }
        Ok(())
    }
}

/// Dense layer followed by batch normalization. The normalization shift
/// acts as the layer bias.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    /// `fan_in x width`, row-major.
    pub weight: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl HiddenLayer {
    pub fn width(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    embeddings: Vec<Vec<f64>>,
    hidden: Vec<HiddenLayer>,
    out_weight: Vec<f64>,
    out_bias: Vec<f64>,
}

/// Inverted-dropout masks for one mini-batch: entries are `0` or `1 / keep`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub layers: Vec<Vec<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, rows: usize, widths: &[usize], rates: &[f64]) -> Self {
        let layers = widths
            .iter()
            .zip(rates)
            .map(|(&w, &rate)| {
                let keep = 1.0 - rate;
                (0..rows * w)
                    .map(|_| {
                        if rate == 0.0 || rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        DropoutMasks { layers }
    }

    /// All-ones masks (no unit dropped).
    pub fn keep_all(rows: usize, widths: &[usize]) -> Self {
        DropoutMasks { layers: widths.iter().map(|&w| vec![1.0; rows * w]).collect() }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Running batch-norm statistics, no dropout.
    Inference,
    /// Mini-batch batch-norm statistics and the given dropout masks.
    Train(&'a DropoutMasks),
    /// Running batch-norm statistics with dropout active (Monte-Carlo dropout).
    McDropout(&'a DropoutMasks),
}

impl Mode<'_> {
    fn batch_stats(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    fn masks(&self) -> Option<&DropoutMasks> {
        match self {
            Mode::Inference => None,
            Mode::Train(m) | Mode::McDropout(m) => Some(m),
        }
    }
}

/// Row-major `rows x n_classes` probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities {
    pub rows: usize,
    pub n_classes: usize,
    pub data: Vec<f64>,
}

impl Probabilities {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_classes..(r + 1) * self.n_classes]
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self, r: usize) -> usize {
        let row = self.row(r);
        let mut best = 0;
        for (k, &p) in row.iter().enumerate().skip(1) {
            if p > row[best] {
                best = k;
            }
        }
        best
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.rows).map(|r| self.argmax(r)).collect()
    }
}

/// Per-tensor gradients in [`Network::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

/// Mini-batch mean and biased variance per hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

struct LayerCache {
    input: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// ReLU output before dropout.
    act: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    last: Vec<f64>,
    logits: Vec<f64>,
    probs: Probabilities,
}

// out[r][j] = sum_i x[r][i] * w[i][j]
fn matmul(x: &[f64], rows: usize, inner: usize, w: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let xr = &x[r * inner..(r + 1) * inner];
        let or = &mut out[r * cols..(r + 1) * cols];
        for (i, &xi) in xr.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let wi = &w[i * cols..(i + 1) * cols];
            for (o, &wij) in or.iter_mut().zip(wi) {
                *o += xi * wij;
            }
        }
    }
    out
}

// out[i][j] = sum_r x[r][i] * dy[r][j]
fn matmul_at_b(x: &[f64], rows: usize, inner: usize, dy: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; inner * cols];
    for r in 0..rows {
        let xr = &x[r * inner..(r + 1) * inner];
        let dr = &dy[r * cols..(r + 1) * cols];
        for (i, &xi) in xr.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let oi = &mut out[i * cols..(i + 1) * cols];
            for (o, &d) in oi.iter_mut().zip(dr) {
                *o += xi * d;
            }
        }
    }
    out
}

// out[r][i] = sum_j dy[r][j] * w[i][j]
fn matmul_a_bt(dy: &[f64], rows: usize, cols: usize, w: &[f64], inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * inner];
    for r in 0..rows {
        let dr = &dy[r * cols..(r + 1) * cols];
        for i in 0..inner {
            let wi = &w[i * cols..(i + 1) * cols];
            out[r * inner + i] = dr.iter().zip(wi).map(|(a, b)| a * b).sum();
        }
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

impl Network {
    /// Seeded initialization: He-uniform dense weights (limit `sqrt(6 / fan_in)`),
    /// embeddings uniform in `(-0.05, 0.05)`, unit batch-norm scale.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, NnetError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = arch
            .vocab_sizes
            .iter()
            .zip(&arch.embed_dims)
            .map(|(&v, &d)| (0..v * d).map(|_| rng.random_range(-0.05..0.05)).collect())
            .collect();
        let mut fan_in = arch.input_width();
        let mut hidden = Vec::with_capacity(arch.hidden.len());
        for &w in &arch.hidden {
            let limit = libm::sqrt(6.0 / fan_in as f64);
            hidden.push(HiddenLayer {
                weight: (0..fan_in * w).map(|_| rng.random_range(-limit..limit)).collect(),
                gamma: vec![1.0; w],
                beta: vec![0.0; w],
                running_mean: vec![0.0; w],
                running_var: vec![1.0; w],
            });
            fan_in = w;
        }
        let n_out = arch.n_outputs();
        let limit = libm::sqrt(6.0 / fan_in as f64);
        let out_weight = (0..fan_in * n_out).map(|_| rng.random_range(-limit..limit)).collect();
        Ok(Network { out_bias: vec![0.0; n_out], arch, embeddings, hidden, out_weight })
    }

    /// Assembles a network from stored tensors, checking every shape.
    pub fn from_parts(
        arch: Architecture,
        embeddings: Vec<Vec<f64>>,
        hidden: Vec<HiddenLayer>,
        out_weight: Vec<f64>,
        out_bias: Vec<f64>,
    ) -> Result<Self, NnetError> {
        arch.validate()?;
        let shape = NnetError::Shape;
        if embeddings.len() != arch.vocab_sizes.len() {
            return Err(shape("embedding table count"));
        }
        for (table, (&v, &d)) in embeddings.iter().zip(arch.vocab_sizes.iter().zip(&arch.embed_dims)) {
            if table.len() != v * d {
                return Err(shape("embedding table size"));
            }
        }
        if hidden.len() != arch.hidden.len() {
            return Err(shape("hidden layer count"));
        }
        let mut fan_in = arch.input_width();
        for (layer, &w) in hidden.iter().zip(&arch.hidden) {
            let ok = layer.weight.len() == fan_in * w
                && [&layer.gamma, &layer.beta, &layer.running_mean, &layer.running_var]
                    .iter()
                    .all(|v| v.len() == w);
            if !ok {
                return Err(shape("hidden layer tensors"));
            }
            if layer.running_var.iter().any(|&v| !(v > 0.0)) {
                return Err(NnetError::Architecture("running variance must be positive"));
            }
            fan_in = w;
        }
        if out_weight.len() != fan_in * arch.n_outputs() || out_bias.len() != arch.n_outputs() {
            return Err(shape("output layer"));
        }
        Ok(Network { arch, embeddings, hidden, out_weight, out_bias })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn hidden_layers(&self) -> &[HiddenLayer] {
        &self.hidden
    }

    pub fn output_weight(&self) -> &[f64] {
        &self.out_weight
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.out_bias
    }

    /// Zeroes the output layer, making every prediction uniform.
    pub fn zero_output_layer(&mut self) {
        self.out_weight.iter_mut().for_each(|w| *w = 0.0);
        self.out_bias.iter_mut().for_each(|b| *b = 0.0);
    }

    /// Trainable tensors: embeddings, then `weight, gamma, beta` per hidden
    /// layer, then output weight and bias.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut p: Vec<&[f64]> = self.embeddings.iter().map(Vec::as_slice).collect();
        for l in &self.hidden {
            p.push(&l.weight);
            p.push(&l.gamma);
            p.push(&l.beta);
        }
        p.push(&self.out_weight);
        p.push(&self.out_bias);
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = self.embeddings.iter_mut().map(Vec::as_mut_slice).collect();
        for l in &mut self.hidden {
            p.push(&mut l.weight);
            p.push(&mut l.gamma);
            p.push(&mut l.beta);
        }
        p.push(&mut self.out_weight);
        p.push(&mut self.out_bias);
        p
    }

    /// Which tensors carry the L2 penalty (embedding and dense weights).
    pub fn regularized(&self) -> Vec<bool> {
        let mut r = vec![true; self.embeddings.len()];
        for _ in &self.hidden {
            r.extend_from_slice(&[true, false, false]);
        }
        r.extend_from_slice(&[true, false]);
        r
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self.hidden.iter().all(|l| {
                l.running_mean.iter().chain(&l.running_var).all(|v| v.is_finite())
            })
    }

    /// `sum ||W||^2` over the regularized tensors.
    pub fn squared_weight_norm(&self) -> f64 {
        self.parameters()
            .iter()
            .zip(self.regularized())
            .filter(|(_, r)| *r)
            .map(|(p, _)| p.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn forward(&self, batch: &EncodedBatch, mode: Mode<'_>) -> Result<Probabilities, NnetError> {
        Ok(self.forward_cached(batch, mode)?.probs)
    }

    /// Output-layer pre-activations, row-major `rows x n_outputs`.
    pub fn logits(&self, batch: &EncodedBatch, mode: Mode<'_>) -> Result<Vec<f64>, NnetError> {
        Ok(self.forward_cached(batch, mode)?.logits)
    }

    /// Inference-mode probabilities.
    pub fn predict_proba(&self, batch: &EncodedBatch) -> Result<Probabilities, NnetError> {
        self.forward(batch, Mode::Inference)
    }

    fn check_batch(&self, batch: &EncodedBatch, mode: &Mode<'_>) -> Result<(), NnetError> {
        if batch.categorical.len() != self.arch.vocab_sizes.len() || batch.n_numeric != self.arch.n_numeric {
            return Err(NnetError::Shape("batch features do not match the network input"));
        }
        if batch.numeric.len() != batch.rows * batch.n_numeric
            || batch.categorical.iter().any(|c| c.len() != batch.rows)
        {
            return Err(NnetError::Shape("ragged batch"));
        }
        for (col, &v) in batch.categorical.iter().zip(&self.arch.vocab_sizes) {
            if col.iter().any(|&i| i as usize >= v) {
                return Err(NnetError::Shape("categorical index outside vocabulary"));
            }
        }
        if let Some(m) = mode.masks() {
            let ok = m.layers.len() == self.hidden.len()
                && m.layers.iter().zip(&self.hidden).all(|(l, h)| l.len() == batch.rows * h.width());
            if !ok {
                return Err(NnetError::Shape("dropout masks do not match the batch"));
            }
        }
        Ok(())
    }

    fn input_matrix(&self, batch: &EncodedBatch) -> Vec<f64> {
        let width = self.arch.input_width();
        let mut x = Vec::with_capacity(batch.rows * width);
        for r in 0..batch.rows {
            for ((col, table), &d) in batch.categorical.iter().zip(&self.embeddings).zip(&self.arch.embed_dims) {
                let i = col[r] as usize;
                x.extend_from_slice(&table[i * d..(i + 1) * d]);
            }
            x.extend_from_slice(batch.numeric_row(r));
        }
        x
    }

    fn forward_cached(&self, batch: &EncodedBatch, mode: Mode<'_>) -> Result<ForwardCache, NnetError> {
        self.check_batch(batch, &mode)?;
        let rows = batch.rows;
        let mut x = self.input_matrix(batch);
        let mut fan_in = self.arch.input_width();
        let mut layers = Vec::with_capacity(self.hidden.len());
        for (li, layer) in self.hidden.iter().enumerate() {
            let w = layer.width();
            let z = matmul(&x, rows, fan_in, &layer.weight, w);
            let (mean, var) = if mode.batch_stats() {
                let mut mean = vec![0.0; w];
                let mut var = vec![0.0; w];
                let n = rows.max(1) as f64;
                for r in 0..rows {
                    for j in 0..w {
                        mean[j] += z[r * w + j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                for r in 0..rows {
                    for j in 0..w {
                        let d = z[r * w + j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                (mean, var)
            } else {
                (layer.running_mean.clone(), layer.running_var.clone())
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPS)).collect();
            let mut xhat = vec![0.0; rows * w];
            let mut act = vec![0.0; rows * w];
            for r in 0..rows {
                for j in 0..w {
                    let k = r * w + j;
                    xhat[k] = (z[k] - mean[j]) * inv_std[j];
                    act[k] = (layer.gamma[j] * xhat[k] + layer.beta[j]).max(0.0);
                }
            }
            let out = match mode.masks() {
                Some(m) => act.iter().zip(&m.layers[li]).map(|(a, k)| a * k).collect(),
                None => act.clone(),
            };
            layers.push(LayerCache { input: x, xhat, inv_std, act, mean, var });
            x = out;
            fan_in = w;
        }
        let n_out = self.arch.n_outputs();
        let mut logits = matmul(&x, rows, fan_in, &self.out_weight, n_out);
        for r in 0..rows {
            for (o, b) in logits[r * n_out..(r + 1) * n_out].iter_mut().zip(&self.out_bias) {
                *o += b;
            }
        }
        let k = self.arch.n_classes;
        let mut data = vec![0.0; rows * k];
        for r in 0..rows {
            if self.arch.is_binary() {
                let z = logits[r];
                data[r * 2] = sigmoid(-z);
                data[r * 2 + 1] = sigmoid(z);
            } else {
                let lr = &logits[r * k..(r + 1) * k];
                let max = lr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (p, &l) in data[r * k..(r + 1) * k].iter_mut().zip(lr) {
                    *p = libm::exp(l - max);
                    sum += *p;
                }
                data[r * k..(r + 1) * k].iter_mut().for_each(|p| *p /= sum);
            }
        }
        Ok(ForwardCache { layers, last: x, logits, probs: Probabilities { rows, n_classes: k, data } })
    }

    /// Total loss (weighted mean negative log-likelihood plus
    /// `lambda / 2 * sum ||W||^2`), its gradient with respect to every
    /// parameter tensor, and the batch-norm statistics seen in train mode.
    pub fn loss_and_gradients(
        &self,
        batch: &EncodedBatch,
        class_weights: &[f64],
        l2_lambda: f64,
        mode: Mode<'_>,
    ) -> Result<(f64, Gradients, BatchStats), NnetError> {
        let labels = batch.labels.as_ref().ok_or(NnetError::MissingLabels)?;
        let cache = self.forward_cached(batch, mode)?;
        let loss = super::train::loss(&cache.probs, labels, class_weights, self, l2_lambda)?;
        let rows = batch.rows;
        let n = rows.max(1) as f64;
        let k = self.arch.n_classes;
        let n_out = self.arch.n_outputs();

        // d loss / d logits
        let mut dlogits = vec![0.0; rows * n_out];
        for (r, &y) in labels.iter().enumerate() {
            let w = class_weights[y] / n;
            if self.arch.is_binary() {
                dlogits[r] = (sigmoid(cache.logits[r]) - y as f64) * w;
            } else {
                for c in 0..k {
                    let target = if c == y { 1.0 } else { 0.0 };
                    dlogits[r * k + c] = (cache.probs.data[r * k + c] - target) * w;
                }
            }
        }

        let mut hidden_grads: Vec<[Vec<f64>; 3]> = Vec::with_capacity(self.hidden.len());
        let fan_last = self.hidden.last().map(HiddenLayer::width).unwrap_or(0);
        let mut d_out_w = matmul_at_b(&cache.last, rows, fan_last, &dlogits, n_out);
        for (g, w) in d_out_w.iter_mut().zip(&self.out_weight) {
            *g += l2_lambda * w;
        }
        let mut d_out_b = vec![0.0; n_out];
        for r in 0..rows {
            for (g, d) in d_out_b.iter_mut().zip(&dlogits[r * n_out..(r + 1) * n_out]) {
                *g += d;
            }
        }
        let mut dx = matmul_a_bt(&dlogits, rows, n_out, &self.out_weight, fan_last);

        for (li, layer) in self.hidden.iter().enumerate().rev() {
            let c = &cache.layers[li];
            let w = layer.width();
            let fan_in = c.input.len() / rows.max(1);
            // dropout, then ReLU
            let mut dy = dx;
            if let Some(m) = mode.masks() {
                dy.iter_mut().zip(&m.layers[li]).for_each(|(d, k)| *d *= k);
            }
            dy.iter_mut().zip(&c.act).for_each(|(d, &a)| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            let mut dgamma = vec![0.0; w];
            let mut dbeta = vec![0.0; w];
            for r in 0..rows {
                for j in 0..w {
                    dgamma[j] += dy[r * w + j] * c.xhat[r * w + j];
                    dbeta[j] += dy[r * w + j];
                }
            }
            let mut dz = vec![0.0; rows * w];
            if mode.batch_stats() {
                for j in 0..w {
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for r in 0..rows {
                        let dxh = dy[r * w + j] * layer.gamma[j];
                        s1 += dxh;
                        s2 += dxh * c.xhat[r * w + j];
                    }
                    for r in 0..rows {
                        let dxh = dy[r * w + j] * layer.gamma[j];
                        dz[r * w + j] = c.inv_std[j] / n * (n * dxh - s1 - c.xhat[r * w + j] * s2);
                    }
                }
            } else {
                for r in 0..rows {
                    for j in 0..w {
                        dz[r * w + j] = dy[r * w + j] * layer.gamma[j] * c.inv_std[j];
                    }
                }
            }
            let mut dw = matmul_at_b(&c.input, rows, fan_in, &dz, w);
            for (g, wt) in dw.iter_mut().zip(&layer.weight) {
                *g += l2_lambda * wt;
            }
            dx = matmul_a_bt(&dz, rows, w, &layer.weight, fan_in);
            hidden_grads.push([dw, dgamma, dbeta]);
        }
        hidden_grads.reverse();

        let width = self.arch.input_width();
        let mut emb_grads: Vec<Vec<f64>> =
            self.embeddings.iter().map(|t| t.iter().map(|w| l2_lambda * w).collect()).collect();
        for r in 0..rows {
            let mut off = 0;
            for ((g, col), &d) in emb_grads.iter_mut().zip(&batch.categorical).zip(&self.arch.embed_dims) {
                let i = col[r] as usize;
                for (gi, dxi) in g[i * d..(i + 1) * d].iter_mut().zip(&dx[r * width + off..r * width + off + d]) {
                    *gi += dxi;
                }
                off += d;
            }
        }

        let mut tensors = emb_grads;
        for [dw, dg, db] in hidden_grads {
            tensors.push(dw);
            tensors.push(dg);
            tensors.push(db);
        }
        tensors.push(d_out_w);
        tensors.push(d_out_b);
        let stats = BatchStats { layers: cache.layers.into_iter().map(|c| (c.mean, c.var)).collect() };
        Ok((loss, Gradients { tensors }, stats))
    }

    /// Moves running batch-norm statistics toward the mini-batch statistics:
    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running_stats(&mut self, stats: &BatchStats, momentum: f64) {
        for (layer, (mean, var)) in self.hidden.iter_mut().zip(&stats.layers) {
            for (r, m) in layer.running_mean.iter_mut().zip(mean) {
                *r = momentum * *r + (1.0 - momentum) * m;
            }
            for (r, v) in layer.running_var.iter_mut().zip(var) {
                *r = momentum * *r + (1.0 - momentum) * v;
            }
        }
    }

    /// Gradient of the L2 term alone.
    pub fn l2_gradients(&self, l2_lambda: f64) -> Gradients {
        let tensors = self
            .parameters()
            .iter()
            .zip(self.regularized())
            .map(|(p, r)| p.iter().map(|w| if r { l2_lambda * w } else { 0.0 }).collect())
            .collect();
        Gradients { tensors }
    }
}
