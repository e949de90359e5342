//! Dense softmax classifiers over one or two input streams, trained with
//! minibatch cross-entropy, plus a seeded stratified cross-validation
//! harness.
//!
//! Every stream is `input -> 128 rectified units`; the head is a 10-way
//! softmax over the concatenated hidden activations. Models are generic over
//! the float type: training runs in `f32`, while [`gradient_check`] runs the
//! same code in an `f64` shadow against central finite differences.
//!
//! Per-fold feature production is abstracted behind [`StreamSource`] so that
//! anything fitted from data (vectorizer sample ranges, feature scaling)
//! can be refit on each training split — test rows never influence fitting.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayD, ArrayView1, Axis, NdFloat};
use num_traits::FromPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HIDDEN: usize = 128;
pub const CLASSES: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("stream {stream} expects input dim {expected}, got {got}")]
    DimMismatch {
        stream: usize,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} input streams, got {got}")]
    StreamCountMismatch { expected: usize, got: usize },
    #[error("training loss became non-finite at batch {batch}")]
    NanLoss { batch: usize },
    #[error("{0}")]
    Argument(String),
}

/// The four evaluated network shapes: image-only, topology-only, and the
/// two-stream fusions (topology + image, topology + topology).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    MlpI,
    MlpT,
    MlpTPlusI,
    MlpTPlusT,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::MlpI,
        Architecture::MlpT,
        Architecture::MlpTPlusI,
        Architecture::MlpTPlusT,
    ];

    pub fn stream_count(self) -> usize {
        match self {
            Architecture::MlpI | Architecture::MlpT => 1,
            Architecture::MlpTPlusI | Architecture::MlpTPlusT => 2,
        }
    }

    /// Whether any stream consumes topological features.
    pub fn uses_topology(self) -> bool {
        !matches!(self, Architecture::MlpI)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::MlpI => "mlp-i",
            Architecture::MlpT => "mlp-t",
            Architecture::MlpTPlusI => "mlp-t+mlp-i",
            Architecture::MlpTPlusT => "mlp-t+mlp-t",
        })
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp-i" => Ok(Architecture::MlpI),
            "mlp-t" => Ok(Architecture::MlpT),
            "mlp-t+mlp-i" => Ok(Architecture::MlpTPlusI),
            "mlp-t+mlp-t" => Ok(Architecture::MlpTPlusT),
            other => Err(format!(
                "unknown architecture '{other}' (expected mlp-i, mlp-t, mlp-t+mlp-i, \
                 or mlp-t+mlp-t)"
            )),
        }
    }
}

/// One input branch: weights `(input_dim, HIDDEN)` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

/// A 1- or 2-stream dense classifier with a shared softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseClassifier<F> {
    pub streams: Vec<Stream<F>>,
    pub w_out: Array2<F>,
    pub b_out: Array1<F>,
}

impl<F: NdFloat + FromPrimitive> DenseClassifier<F> {
    /// Fan-in-scaled uniform init, drawn in `f64` then cast, so the same
    /// seed yields the same network in both float widths.
    pub fn new(input_dims: &[usize], seed: u64) -> Self {
        assert!(!input_dims.is_empty() && input_dims.len() <= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |fan_in: usize, shape: (usize, usize)| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn(shape, |_| {
                F::from_f64(rng.gen_range(-bound..bound)).unwrap()
            })
        };
        let streams = input_dims
            .iter()
            .map(|&dim| Stream {
                w: uniform(dim, (dim, HIDDEN)),
                b: Array1::zeros(HIDDEN),
            })
            .collect::<Vec<_>>();
        let head_in = HIDDEN * input_dims.len();
        DenseClassifier {
            w_out: uniform(head_in, (head_in, CLASSES)),
            b_out: Array1::zeros(CLASSES),
            streams,
        }
    }

    pub fn stream_dims(&self) -> Vec<usize> {
        self.streams.iter().map(|s| s.w.nrows()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.streams
            .iter()
            .map(|s| s.w.len() + s.b.len())
            .sum::<usize>()
            + self.w_out.len()
            + self.b_out.len()
    }

    /// All parameter tensors in the fixed order
    /// `[stream0.w, stream0.b, ..., w_out, b_out]` (gradient order).
    pub fn params_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, F>> {
        let mut out = Vec::new();
        for s in &mut self.streams {
            out.push(s.w.view_mut().into_dyn());
            out.push(s.b.view_mut().into_dyn());
        }
        out.push(self.w_out.view_mut().into_dyn());
        out.push(self.b_out.view_mut().into_dyn());
        out
    }

    fn check_inputs(&self, xs: &[Array2<F>]) -> Result<(), LearnError> {
        if xs.len() != self.streams.len() {
            return Err(LearnError::StreamCountMismatch {
                expected: self.streams.len(),
                got: xs.len(),
            });
        }
        for (i, (x, s)) in xs.iter().zip(&self.streams).enumerate() {
            if x.ncols() != s.w.nrows() {
                return Err(LearnError::DimMismatch {
                    stream: i,
                    expected: s.w.nrows(),
                    got: x.ncols(),
                });
            }
        }
        Ok(())
    }

    /// Class probabilities for a single example (one vector per stream).
    pub fn forward(&self, inputs: &[ArrayView1<F>]) -> Result<Array1<F>, LearnError> {
        let xs: Vec<Array2<F>> = inputs
            .iter()
            .map(|v| v.to_owned().insert_axis(Axis(0)))
            .collect();
        self.check_inputs(&xs)?;
        let (probs, _) = self.forward_batch(&xs);
        Ok(probs.row(0).to_owned())
    }

    /// Batch forward pass; also returns the per-stream pre-activations and
    /// hidden concatenation needed by the backward pass.
    fn forward_batch(&self, xs: &[Array2<F>]) -> (Array2<F>, ForwardCache<F>) {
        let mut zs = Vec::with_capacity(self.streams.len());
        let mut hs = Vec::with_capacity(self.streams.len());
        for (x, s) in xs.iter().zip(&self.streams) {
            let z = x.dot(&s.w) + &s.b;
            let h = z.mapv(|v| v.max(F::zero()));
            zs.push(z);
            hs.push(h);
        }
        let hidden = if hs.len() == 1 {
            hs[0].clone()
        } else {
            concatenate(Axis(1), &[hs[0].view(), hs[1].view()]).unwrap()
        };
        let logits = hidden.dot(&self.w_out) + &self.b_out;
        let probs = softmax_rows(logits);
        (probs, ForwardCache { zs, hidden })
    }

    pub fn predict_batch(&self, xs: &[Array2<F>]) -> Result<Vec<u8>, LearnError> {
        self.check_inputs(xs)?;
        let (probs, _) = self.forward_batch(xs);
        Ok(probs
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..CLASSES {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect())
    }

    /// Mean cross-entropy loss and gradients for every parameter tensor, in
    /// [`DenseClassifier::params_mut`] order.
    pub fn gradients(&self, xs: &[Array2<F>], labels: &[u8]) -> (f64, Vec<ArrayD<F>>) {
        let batch = labels.len();
        let (probs, cache) = self.forward_batch(xs);

        let mut loss = 0.0f64;
        let floor = F::from_f64(1e-30).unwrap();
        for (i, &y) in labels.iter().enumerate() {
            let p = probs[(i, y as usize)];
            // `max` would mask a NaN probability; let it poison the loss so
            // training aborts instead of silently continuing.
            if p.is_nan() {
                loss = f64::NAN;
                break;
            }
            loss -= p.max(floor).ln().to_f64().unwrap();
        }
        if loss.is_finite() {
            loss /= batch as f64;
        }

        // d(loss)/d(logits) = (p - onehot) / batch
        let scale = F::from_usize(batch).unwrap();
        let mut dlogits = probs;
        for (i, &y) in labels.iter().enumerate() {
            dlogits[(i, y as usize)] -= F::one();
        }
        dlogits.mapv_inplace(|v| v / scale);

        let g_w_out = cache.hidden.t().dot(&dlogits);
        let g_b_out = dlogits.sum_axis(Axis(0));
        let dhidden = dlogits.dot(&self.w_out.t());

        let mut grads: Vec<ArrayD<F>> = Vec::new();
        for (si, (x, z)) in xs.iter().zip(&cache.zs).enumerate() {
            let lo = si * HIDDEN;
            let mut dz = dhidden.slice(s![.., lo..lo + HIDDEN]).to_owned();
            ndarray::Zip::from(&mut dz).and(z).for_each(|d, &zv| {
                if zv <= F::zero() {
                    *d = F::zero();
                }
            });
            grads.push(x.t().dot(&dz).into_dyn());
            grads.push(dz.sum_axis(Axis(0)).into_dyn());
        }
        grads.push(g_w_out.into_dyn());
        grads.push(g_b_out.into_dyn());
        (loss, grads)
    }
}

struct ForwardCache<F> {
    zs: Vec<Array2<F>>,
    hidden: Array2<F>,
}

fn softmax_rows<F: NdFloat>(mut logits: Array2<F>) -> Array2<F> {
    for mut row in logits.rows_mut() {
        let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    logits
}

/// Training hyperparameters. Defaults: adaptive-moment steps at rate 1e-3,
/// batches of 32, 10 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Adaptive-moment optimizer state, one `(m, v)` pair per parameter tensor.
struct Adam<F> {
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
    step: i32,
}

impl<F: NdFloat + FromPrimitive> Adam<F> {
    fn new(shapes: &[Vec<usize>]) -> Self {
        let zeros = |shape: &Vec<usize>| ArrayD::zeros(ndarray::IxDyn(shape));
        Adam {
            m: shapes.iter().map(zeros).collect(),
            v: shapes.iter().map(zeros).collect(),
            step: 0,
        }
    }

    fn update(
        &mut self,
        params: &mut [ndarray::ArrayViewMutD<'_, F>],
        grads: &[ArrayD<F>],
        lr: f64,
    ) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let b1 = F::from_f64(BETA1).unwrap();
        let b2 = F::from_f64(BETA2).unwrap();
        let eps = F::from_f64(EPS).unwrap();
        let corr1 = F::from_f64(1.0 - BETA1.powi(self.step)).unwrap();
        let corr2 = F::from_f64(1.0 - BETA2.powi(self.step)).unwrap();
        let lr = F::from_f64(lr).unwrap();
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            ndarray::Zip::from(param)
                .and(grad)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (F::one() - b1) * g;
                    *v = b2 * *v + (F::one() - b2) * g * g;
                    let m_hat = *m / corr1;
                    let v_hat = *v / corr2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

/// Train in place with seeded shuffling; returns the per-epoch mean loss.
/// A non-finite batch loss aborts with the batch index.
pub fn train<F: NdFloat + FromPrimitive>(
    model: &mut DenseClassifier<F>,
    xs: &[Array2<F>],
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, LearnError> {
    model.check_inputs(xs)?;
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(LearnError::Argument(
            "epochs and batch_size must be ≥ 1".into(),
        ));
    }
    let n = labels.len();
    if xs.iter().any(|x| x.nrows() != n) {
        return Err(LearnError::Argument(format!(
            "feature rows do not match {n} labels"
        )));
    }

    let shapes: Vec<Vec<usize>> = {
        let mut m = model.clone();
        m.params_mut().iter().map(|p| p.shape().to_vec()).collect()
    };
    let mut adam = Adam::<F>::new(&shapes);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut batch_index = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Vec<Array2<F>> = xs.iter().map(|x| x.select(Axis(0), chunk)).collect();
            let by: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = model.gradients(&bx, &by);
            if !loss.is_finite() {
                return Err(LearnError::NanLoss { batch: batch_index });
            }
            adam.update(&mut model.params_mut(), &grads, cfg.learning_rate);
            epoch_loss += loss;
            batches += 1;
            batch_index += 1;
        }
        let mean = epoch_loss / batches.max(1) as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(epoch_losses)
}

/// Compare analytic gradients with central finite differences (step 1e-5)
/// over every parameter, in an `f64` shadow model; returns the maximum
/// relative error `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(model: &DenseClassifier<f64>, inputs: &[Array1<f64>], label: u8) -> f64 {
    const H: f64 = 1e-5;
    let xs: Vec<Array2<f64>> = inputs
        .iter()
        .map(|v| v.clone().insert_axis(Axis(0)))
        .collect();
    let labels = [label];
    let (_, analytic) = model.gradients(&xs, &labels);

    let mut probe = model.clone();
    let tensor_count = analytic.len();
    let mut worst = 0.0f64;
    for t in 0..tensor_count {
        let len = analytic[t].len();
        for i in 0..len {
            let nudge = |probe: &mut DenseClassifier<f64>, delta: f64| {
                let mut params = probe.params_mut();
                let slice = params[t].as_slice_mut().unwrap();
                slice[i] += delta;
            };
            nudge(&mut probe, H);
            let (up, _) = probe.gradients(&xs, &labels);
            nudge(&mut probe, -2.0 * H);
            let (down, _) = probe.gradients(&xs, &labels);
            nudge(&mut probe, H);
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[t].as_slice().unwrap()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Per-fold feature production. `fit` rows are the only ones allowed to
/// influence data-dependent state; `emit` rows are the ones returned.
pub trait StreamSource: Send + Sync {
    fn dim(&self) -> usize;
    fn features(&self, fit: &[usize], emit: &[usize]) -> Array2<f32>;
}

/// Raw, fixed feature rows (e.g. image pixels): fitting is a no-op.
pub struct FixedSource {
    pub rows: Array2<f32>,
}

impl StreamSource for FixedSource {
    fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn features(&self, _fit: &[usize], emit: &[usize]) -> Array2<f32> {
        self.rows.select(Axis(0), emit)
    }
}

/// Seeded stratified fold assignment: indices of each class are shuffled and
/// dealt round-robin, so fold sizes differ by at most one per class.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); CLASSES];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); folds];
    for mut pool in by_class {
        pool.shuffle(&mut rng);
        for (k, idx) in pool.into_iter().enumerate() {
            out[k % folds].push(idx);
        }
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    out
}

/// Column mean / scale fitted on training rows; constant columns scale by 1.
fn zscore_fit(x: &Array2<f32>) -> (Array1<f32>, Array1<f32>) {
    let n = x.nrows().max(1) as f32;
    let mean = x.sum_axis(Axis(0)) / n;
    let mut var = Array1::<f32>::zeros(x.ncols());
    for row in x.rows() {
        for (j, &v) in row.iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    let std = var.mapv(|v| {
        let s = (v / n).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    (mean, std)
}

fn zscore_apply(x: &mut Array2<f32>, mean: &Array1<f32>, std: &Array1<f32>) {
    for mut row in x.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[j]) / std[j];
        }
    }
}

/// Labels for a cross-validation report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTags {
    pub architecture: String,
    pub vectorizer: String,
    pub strategy: String,
}

/// One cross-validation outcome: per-fold accuracies with their mean and
/// population standard deviation, and the fold-accumulated confusion matrix
/// (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub architecture: String,
    pub vectorizer: String,
    pub strategy: String,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    /// Mean and population standard deviation recomputed from the fold list.
    pub fn recompute(&self) -> (f64, f64) {
        mean_std(&self.fold_accuracies)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stratified k-fold cross-validation: per fold, features are produced with
/// fitting restricted to the training split, z-scored on training statistics,
/// and a fresh seeded model is trained and scored on the held-out fold.
pub fn crossvalidate(
    sources: &[&dyn StreamSource],
    labels: &[u8],
    folds: usize,
    cfg: &TrainConfig,
    tags: ReportTags,
) -> Result<EvalReport, LearnError> {
    if sources.is_empty() || sources.len() > 2 {
        return Err(LearnError::Argument(format!(
            "need 1 or 2 feature streams, got {}",
            sources.len()
        )));
    }
    if folds < 2 || labels.len() < folds {
        return Err(LearnError::Argument(format!(
            "{} samples cannot form {folds} folds",
            labels.len()
        )));
    }
    // Stratification deals each class's samples across the folds, so a class
    // with fewer members than folds would leave some validation folds empty
    // and their accuracy undefined. Refuse instead of reporting NaN.
    let mut class_counts = [0usize; CLASSES];
    for &y in labels {
        class_counts[y as usize] += 1;
    }
    if let Some((c, &n)) = class_counts
        .iter()
        .enumerate()
        .filter(|&(_, &n)| n > 0)
        .min_by_key(|&(_, &n)| n)
    {
        if n < folds {
            return Err(LearnError::Argument(format!(
                "class {c} has only {n} samples, fewer than the {folds} folds; \
                 use fewer folds or a larger subset"
            )));
        }
    }

    let fold_sets = stratified_folds(labels, folds, cfg.seed);
    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut confusion = vec![vec![0u64; CLASSES]; CLASSES];
    for (k, test_idx) in fold_sets.iter().enumerate() {
        let mut train_idx: Vec<usize> = fold_sets
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train_idx.sort_unstable();

        let mut train_xs = Vec::with_capacity(sources.len());
        let mut test_xs = Vec::with_capacity(sources.len());
        for src in sources {
            let mut tr = src.features(&train_idx, &train_idx);
            let mut te = src.features(&train_idx, test_idx);
            let (mean, std) = zscore_fit(&tr);
            zscore_apply(&mut tr, &mean, &std);
            zscore_apply(&mut te, &mean, &std);
            train_xs.push(tr);
            test_xs.push(te);
        }
        let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();

        let dims: Vec<usize> = train_xs.iter().map(|x| x.ncols()).collect();
        let fold_seed = cfg.seed ^ (k as u64 + 1);
        let mut model = DenseClassifier::<f32>::new(&dims, fold_seed);
        let fold_cfg = TrainConfig {
            seed: fold_seed,
            ..cfg.clone()
        };
        train(&mut model, &train_xs, &train_labels, &fold_cfg)?;

        let predictions = model.predict_batch(&test_xs)?;
        let mut hits = 0usize;
        for (&i, &p) in test_idx.iter().zip(&predictions) {
            confusion[labels[i] as usize][p as usize] += 1;
            if labels[i] == p {
                hits += 1;
            }
        }
        let acc = hits as f64 / test_idx.len() as f64;
        log::info!("fold {k}: accuracy {acc:.5}");
        fold_accuracies.push(acc);
    }

    let (mean_accuracy, std_accuracy) = mean_std(&fold_accuracies);
    Ok(EvalReport {
        architecture: tags.architecture,
        vectorizer: tags.vectorizer,
        strategy: tags.strategy,
        fold_accuracies,
        mean_accuracy,
        std_accuracy,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(dims: &[usize], seed: u64) -> DenseClassifier<f64> {
        DenseClassifier::<f64>::new(dims, seed)
    }

    #[test]
    fn zeroed_model_is_uniform() {
        let mut model = toy_model(&[4], 1);
        for mut p in model.params_mut() {
            p.fill(0.0);
        }
        let x = Array1::from(vec![0.3, -0.2, 0.5, 1.0]);
        let probs = model.forward(&[x.view()]).unwrap();
        for &p in probs.iter() {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant() {
        let model = toy_model(&[6], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let x = Array1::from_shape_fn(6, |_| rng.gen_range(-3.0..3.0));
            let probs = model.forward(&[x.view()]).unwrap();
            let sum: f64 = probs.sum();
            assert!((sum - 1.0).abs() < 1e-5);
        }
        // Adding a constant to every head logit (via the bias) keeps argmax.
        let x = Array1::from_shape_fn(6, |i| i as f64 / 3.0);
        let before = model.forward(&[x.view()]).unwrap();
        let argmax = |p: &Array1<f64>| {
            (0..CLASSES)
                .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap())
                .unwrap()
        };
        let mut shifted = model.clone();
        shifted.b_out.mapv_inplace(|b| b + 7.5);
        let after = shifted.forward(&[x.view()]).unwrap();
        assert_eq!(argmax(&before), argmax(&after));
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // the plain-loop oracle is the point
    fn forward_matches_straight_line_evaluation() {
        let model = toy_model(&[5], 11);
        let x = Array1::from(vec![0.1, -0.4, 0.9, 0.0, 2.0]);
        let probs = model.forward(&[x.view()]).unwrap();

        // Independent re-evaluation with plain loops.
        let s = &model.streams[0];
        let mut hidden = vec![0.0f64; HIDDEN];
        for j in 0..HIDDEN {
            let mut acc = s.b[j];
            for i in 0..5 {
                acc += x[i] * s.w[(i, j)];
            }
            hidden[j] = acc.max(0.0);
        }
        let mut logits = [0.0f64; CLASSES];
        for k in 0..CLASSES {
            let mut acc = model.b_out[k];
            for j in 0..HIDDEN {
                acc += hidden[j] * model.w_out[(j, k)];
            }
            logits[k] = acc;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for k in 0..CLASSES {
            assert!((probs[k] - exps[k] / total).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = toy_model(&[5], 0);
        let x = Array1::from(vec![1.0; 4]);
        assert_eq!(
            model.forward(&[x.view()]).unwrap_err(),
            LearnError::DimMismatch {
                stream: 0,
                expected: 5,
                got: 4
            }
        );
        let x5 = Array1::from(vec![1.0; 5]);
        assert!(matches!(
            model.forward(&[x5.view(), x5.view()]).unwrap_err(),
            LearnError::StreamCountMismatch { .. }
        ));
    }

    fn blobs(per_class: usize, classes: usize, dim: usize, seed: u64) -> (Array2<f32>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..per_class {
                for d in 0..dim {
                    let center = if d == c % dim {
                        3.0 * (1 + c / dim) as f32
                    } else {
                        0.0
                    };
                    rows.push(center + rng.gen_range(-0.5..0.5));
                }
                labels.push(c as u8);
            }
        }
        (
            Array2::from_shape_vec((per_class * classes, dim), rows).unwrap(),
            labels,
        )
    }

    #[test]
    fn separable_blobs_train_to_full_accuracy() {
        let (x, y) = blobs(25, 2, 4, 5);
        let mut model = DenseClassifier::<f32>::new(&[4], 7);
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        train(&mut model, std::slice::from_ref(&x), &y, &cfg).unwrap();
        let preds = model.predict_batch(&[x]).unwrap();
        let hits = preds.iter().zip(&y).filter(|(a, b)| a == b).count();
        assert_eq!(hits, y.len());
    }

    #[test]
    fn training_is_deterministic_and_zero_lr_is_identity() {
        let (x, y) = blobs(10, 3, 4, 2);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 42,
            ..TrainConfig::default()
        };
        let mut a = DenseClassifier::<f32>::new(&[4], 1);
        let mut b = DenseClassifier::<f32>::new(&[4], 1);
        train(&mut a, std::slice::from_ref(&x), &y, &cfg).unwrap();
        train(&mut b, std::slice::from_ref(&x), &y, &cfg).unwrap();
        assert_eq!(a, b);

        let mut c = DenseClassifier::<f32>::new(&[4], 1);
        let frozen = c.clone();
        let cfg0 = TrainConfig {
            learning_rate: 0.0,
            ..cfg
        };
        train(&mut c, &[x], &y, &cfg0).unwrap();
        assert_eq!(c, frozen);
    }

    #[test]
    fn non_finite_features_abort_with_batch_index() {
        let (mut x, y) = blobs(10, 2, 4, 3);
        x[(0, 0)] = f32::INFINITY;
        let mut model = DenseClassifier::<f32>::new(&[4], 1);
        let err = train(&mut model, &[x], &y, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, LearnError::NanLoss { .. }));
    }

    #[test]
    fn gradient_check_small_models() {
        for seed in 0..2 {
            let model = toy_model(&[8], seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = Array1::from_shape_fn(8, |_| rng.gen_range(-1.0..1.0));
            let err = gradient_check(&model, &[x], (seed % 10) as u8);
            assert!(err < 1e-4, "seed {seed}: rel error {err}");
        }
    }

    #[test]
    fn gradient_check_two_stream() {
        let model = toy_model(&[5, 3], 8);
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let a = Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0));
        let b = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0));
        let err = gradient_check(&model, &[a, b], 4);
        assert!(err < 1e-4, "rel error {err}");
    }

    #[test]
    fn stratified_folds_partition_evenly() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let folds = stratified_folds(&labels, 10, 3);
        let mut seen = [false; 100];
        for fold in &folds {
            assert_eq!(fold.len(), 10);
            for &i in fold {
                assert!(!seen[i], "index {i} in two folds");
                seen[i] = true;
            }
            for c in 0..10u8 {
                assert_eq!(fold.iter().filter(|&&i| labels[i] == c).count(), 1);
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(folds, stratified_folds(&labels, 10, 3));
        assert_ne!(folds, stratified_folds(&labels, 10, 4));
    }

    fn tags() -> ReportTags {
        ReportTags {
            architecture: "mlp-t".into(),
            vectorizer: "betti".into(),
            strategy: "h0".into(),
        }
    }

    #[test]
    fn crossvalidate_blobs_and_determinism() {
        let (x, y) = blobs(30, 4, 6, 11);
        let src = FixedSource { rows: x };
        let cfg = TrainConfig {
            epochs: 15,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = crossvalidate(&[&src], &y, 5, &cfg, tags()).unwrap();
        assert!(a.mean_accuracy > 0.95, "mean {}", a.mean_accuracy);
        assert_eq!(a.fold_accuracies.len(), 5);
        let (m, s) = a.recompute();
        assert!((m - a.mean_accuracy).abs() < 1e-9);
        assert!((s - a.std_accuracy).abs() < 1e-9);
        let total: u64 = a.confusion.iter().flatten().sum();
        assert_eq!(total, y.len() as u64);

        let b = crossvalidate(&[&src], &y, 5, &cfg, tags()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_class_dataset_scores_perfectly() {
        let mut rows = Array2::<f32>::zeros((100, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        rows.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        let labels = vec![3u8; 100];
        let src = FixedSource { rows };
        let report = crossvalidate(&[&src], &labels, 10, &TrainConfig::default(), tags()).unwrap();
        assert_eq!(report.mean_accuracy, 1.0);
    }

    #[test]
    fn too_few_samples_for_folds() {
        let src = FixedSource {
            rows: Array2::zeros((5, 2)),
        };
        let labels = vec![0u8, 1, 2, 3, 4];
        assert!(matches!(
            crossvalidate(&[&src], &labels, 10, &TrainConfig::default(), tags()),
            Err(LearnError::Argument(_))
        ));
    }

    #[test]
    fn sparse_class_cannot_fill_every_fold() {
        // Class 7 has 4 members; 10 folds would leave validation folds with
        // no samples at all, so the split is refused up front.
        let mut labels = vec![0u8; 30];
        labels.extend([7u8; 4]);
        let src = FixedSource {
            rows: Array2::zeros((labels.len(), 2)),
        };
        let err = crossvalidate(&[&src], &labels, 10, &TrainConfig::default(), tags()).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("class 7") && msg.contains("4 samples"),
            "unexpected message: {msg}"
        );
    }

    // A dead all-zero second stream only adds a learnable constant, so the
    // two-stream net should land within a point of the single-stream one.
    #[test]
    fn dead_second_stream_matches_single_stream() {
        let (x, y) = blobs(25, 4, 6, 21);
        let single = FixedSource { rows: x.clone() };
        let dead = FixedSource {
            rows: Array2::zeros((x.nrows(), 8)),
        };
        let cfg = TrainConfig {
            epochs: 15,
            seed: 9,
            ..TrainConfig::default()
        };
        let alone = crossvalidate(&[&single], &y, 5, &cfg, tags()).unwrap();
        let paired = crossvalidate(&[&single, &dead], &y, 5, &cfg, tags()).unwrap();
        assert!(
            (alone.mean_accuracy - paired.mean_accuracy).abs() <= 0.01,
            "{} vs {}",
            alone.mean_accuracy,
            paired.mean_accuracy
        );
    }

    #[test]
    fn architecture_names_round_trip() {
        for arch in Architecture::ALL {
            assert_eq!(arch.to_string().parse::<Architecture>(), Ok(arch));
        }
        assert_eq!(Architecture::MlpTPlusI.stream_count(), 2);
        assert!(!Architecture::MlpI.uses_topology());
        let err = "mlp-x".parse::<Architecture>().unwrap_err();
        assert!(
            err.contains("mlp-t+mlp-i"),
            "error lists valid names: {err}"
        );
    }
}
