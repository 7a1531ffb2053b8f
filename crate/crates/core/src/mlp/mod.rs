//! Dense feed-forward classifier: ReLU hidden layers, a linear output layer,
//! softmax cross-entropy loss, Adam, and early-stopped mini-batch training.
//!
//! Parameters, activations and loss are all `f64`.

mod adam;
mod file;
mod linalg;
mod train;

pub use adam::{adam_step, AdamState};
pub use file::{load_model, save_model, ModelMeta, TrainedModel, MODEL_MAGIC, MODEL_VERSION};
pub use train::{
    accuracy, evaluate_loss, train, train_with_progress, EpochReport, FeatureSet, LabeledSet,
    TrainConfig, TrainHistory,
};

use rand::Rng;

use crate::baseband::IqFrame;
use crate::rng::{self, tag};
use crate::{Error, Result};

/// One fully connected layer. `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub outputs: usize,
    pub inputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self { outputs, inputs, weights: vec![0.0; outputs * inputs], bias: vec![0.0; outputs] }
    }
}

/// Weights and biases of every layer, input to output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// All-zero parameters for layer widths `[input, hidden.., output]`.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        Self { layers: sizes.windows(2).map(|w| Dense::zeros(w[1], w[0])).collect() }
    }

    /// Hidden layers drawn uniform on `±sqrt(6 / fan_in)`, zero biases, and a
    /// zero output layer (so the initial logits are identically zero).
    pub fn init(sizes: &[usize], seed: u64) -> Self {
        let mut p = Self::zeros(sizes);
        let last = p.layers.len() - 1;
        let mut rng = rng::stream(seed, 0, tag::INIT);
        for layer in &mut p.layers[..last] {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        }
        p
    }

    /// Layer widths `[input, hidden.., output]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.sizes() == other.sizes()
    }

    /// Every parameter, layer by layer (weights then bias).
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if idx < l.weights.len() {
                return (li, true, idx);
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return (li, false, idx);
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter at flat index `idx` (same order as [`values`](Self::values)).
    pub fn get(&self, idx: usize) -> f64 {
        let (li, w, i) = self.locate(idx);
        if w { self.layers[li].weights[i] } else { self.layers[li].bias[i] }
    }

    pub fn set(&mut self, idx: usize, v: f64) {
        let (li, w, i) = self.locate(idx);
        if w {
            self.layers[li].weights[i] = v;
        } else {
            self.layers[li].bias[i] = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `rows × cols` row-major input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Precondition(format!(
                "batch data has {} values, expected {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stack featurized frames, one per row.
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a IqFrame>, frame_len: usize) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        for f in frames {
            check_frame_len(f, frame_len)?;
            let start = data.len();
            data.resize(start + 2 * frame_len, 0.0);
            featurize_into(f, &mut data[start..]);
            rows += 1;
        }
        Self::new(rows, 2 * frame_len, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

fn check_frame_len(frame: &IqFrame, frame_len: usize) -> Result<()> {
    if frame.len() != frame_len {
        return Err(Error::Precondition(format!(
            "frame has {} samples, expected {frame_len}",
            frame.len()
        )));
    }
    Ok(())
}

/// Interleave real and imaginary parts: `(re0, im0, re1, im1, ..)`.
pub fn featurize(frame: &IqFrame, frame_len: usize) -> Result<Vec<f64>> {
    check_frame_len(frame, frame_len)?;
    let mut out = vec![0.0; 2 * frame_len];
    featurize_into(frame, &mut out);
    Ok(out)
}

pub(crate) fn featurize_into(frame: &IqFrame, out: &mut [f64]) {
    debug_assert_eq!(out.len(), 2 * frame.len());
    for (pair, s) in out.chunks_exact_mut(2).zip(frame.samples()) {
        pair[0] = s.re as f64;
        pair[1] = s.im as f64;
    }
}

/// Post-activation outputs of every layer (hidden layers after ReLU, the
/// last entry holds the logits).
struct Activations {
    layers: Vec<Vec<f64>>,
}

fn check_batch(params: &MlpParams, batch: &Batch) -> Result<()> {
    if batch.cols != params.input_dim() {
        return Err(Error::Precondition(format!(
            "batch has {} features, network expects {}",
            batch.cols,
            params.input_dim()
        )));
    }
    if let Some(i) = batch.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!(
            "non-finite input at row {}, column {}",
            i / batch.cols,
            i % batch.cols
        )));
    }
    Ok(())
}

fn forward_pass(params: &MlpParams, batch: &Batch) -> Activations {
    let n = batch.rows;
    let last = params.layers.len() - 1;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(params.layers.len());
    for (li, layer) in params.layers.iter().enumerate() {
        let input: &[f64] = if li == 0 { &batch.data } else { &acts[li - 1] };
        let mut z = vec![0.0; n * layer.outputs];
        linalg::matmul_nt(n, layer.inputs, layer.outputs, input, &layer.weights, &mut z);
        for row in z.chunks_exact_mut(layer.outputs) {
            for (v, b) in row.iter_mut().zip(&layer.bias) {
                *v += b;
                if li < last && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        acts.push(z);
    }
    Activations { layers: acts }
}

/// Logits for every row of `batch`, `rows × outputs` row-major.
pub fn forward(params: &MlpParams, batch: &Batch) -> Result<Vec<f64>> {
    check_batch(params, batch)?;
    Ok(forward_pass(params, batch).layers.pop().unwrap())
}

/// Per-row cross-entropy and softmax of a logits row.
fn softmax_xent(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - m).exp()).sum();
    let lse = m + sum.ln();
    for (p, z) in probs.iter_mut().zip(logits) {
        *p = (z - lse).exp();
    }
    lse - logits[label]
}

fn check_labels(params: &MlpParams, batch: &Batch, labels: &[u8]) -> Result<()> {
    if labels.len() != batch.rows {
        return Err(Error::Precondition(format!(
            "{} labels for {} rows",
            labels.len(),
            batch.rows
        )));
    }
    let k = params.output_dim();
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(Error::Precondition(format!("label {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// Sum (not mean) of per-row cross-entropy losses.
pub(crate) fn loss_sum(params: &MlpParams, batch: &Batch, labels: &[u8]) -> Result<f64> {
    check_batch(params, batch)?;
    check_labels(params, batch, labels)?;
    let logits = forward_pass(params, batch).layers.pop().unwrap();
    let k = params.output_dim();
    let mut probs = vec![0.0; k];
    Ok(logits
        .chunks_exact(k)
        .zip(labels)
        .map(|(row, &l)| softmax_xent(row, l as usize, &mut probs))
        .sum())
}

/// Mean cross-entropy over the batch.
pub fn loss(params: &MlpParams, batch: &Batch, labels: &[u8]) -> Result<f64> {
    Ok(loss_sum(params, batch, labels)? / batch.rows as f64)
}

/// Mean cross-entropy and its gradient with respect to every parameter.
pub fn loss_and_grad(params: &MlpParams, batch: &Batch, labels: &[u8]) -> Result<(f64, MlpParams)> {
    check_batch(params, batch)?;
    check_labels(params, batch, labels)?;
    let n = batch.rows;
    let k = params.output_dim();
    let mut acts = forward_pass(params, batch);

    // dL/dlogits = (softmax - onehot) / n, computed in place over the logits.
    let mut delta = acts.layers.pop().unwrap();
    let mut total = 0.0;
    let mut probs = vec![0.0; k];
    for (row, &l) in delta.chunks_exact_mut(k).zip(labels) {
        total += softmax_xent(row, l as usize, &mut probs);
        for (j, (d, p)) in row.iter_mut().zip(&probs).enumerate() {
            *d = (p - if j == l as usize { 1.0 } else { 0.0 }) / n as f64;
        }
    }

    let mut grads = MlpParams::zeros(&params.sizes());
    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        let input: &[f64] = if li == 0 { &batch.data } else { &acts.layers[li - 1] };
        let g = &mut grads.layers[li];
        linalg::matmul_tn(layer.outputs, n, layer.inputs, &delta, input, &mut g.weights);
        for row in delta.chunks_exact(layer.outputs) {
            for (b, d) in g.bias.iter_mut().zip(row) {
                *b += d;
            }
        }
        if li > 0 {
            let mut upstream = vec![0.0; n * layer.inputs];
            linalg::matmul_nn(n, layer.outputs, layer.inputs, &delta, &layer.weights, &mut upstream);
            // ReLU gate: post-activation > 0 exactly where pre-activation > 0.
            for (u, a) in upstream.iter_mut().zip(&acts.layers[li - 1]) {
                if *a <= 0.0 {
                    *u = 0.0;
                }
            }
            delta = upstream;
        }
    }
    Ok((total / n as f64, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex32;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Batch {
        let mut rng = rng::stream(seed, 0, 0);
        Batch::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_params(sizes: &[usize], seed: u64) -> MlpParams {
        let mut p = MlpParams::init(sizes, seed);
        let mut rng = rng::stream(seed, 1, 0);
        p.values_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        p
    }

    #[test]
    fn featurize_layout() {
        let mut s = vec![Complex32::new(0.0, 0.0); 111];
        s[0] = Complex32::new(1.0, 2.0);
        s[1] = Complex32::new(-3.0, 4.5);
        let f = featurize(&IqFrame::new(s).unwrap(), 111).unwrap();
        assert_eq!(f.len(), 222);
        assert_eq!(&f[..4], &[1.0, 2.0, -3.0, 4.5]);
        assert!(f[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn featurize_rejects_wrong_length() {
        let f = IqFrame::new(vec![Complex32::new(0.0, 0.0); 110]).unwrap();
        assert!(matches!(featurize(&f, 111), Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let p = MlpParams::zeros(&[222, 400, 400, 2]);
        let logits = forward(&p, &random_batch(5, 222, 1)).unwrap();
        assert!(logits.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn init_has_zero_output_layer() {
        let p = MlpParams::init(&[222, 400, 400, 2], 3);
        assert_eq!(p.num_params(), 400 * 222 + 400 + 400 * 400 + 400 + 2 * 400 + 2);
        let out = p.layers.last().unwrap();
        assert!(out.weights.iter().chain(&out.bias).all(|&v| v == 0.0));
        let bound = (6.0f64 / 222.0).sqrt();
        assert!(p.layers[0].weights.iter().all(|w| w.abs() < bound));
        assert!(p.layers[0].weights.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn batched_forward_equals_row_loop() {
        let p = random_params(&[12, 9, 7, 2], 4);
        let b = random_batch(33, 12, 5);
        let all = forward(&p, &b).unwrap();
        for i in 0..b.rows() {
            let single = Batch::new(1, 12, b.row(i).to_vec()).unwrap();
            let one = forward(&p, &single).unwrap();
            assert!((one[0] - all[2 * i]).abs() < 1e-12 && (one[1] - all[2 * i + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let p = MlpParams::zeros(&[3, 4, 2]);
        let b = Batch::new(1, 3, vec![0.0, f64::NAN, 1.0]).unwrap();
        assert!(matches!(forward(&p, &b), Err(Error::Precondition(_))));
    }

    #[test]
    fn dead_relu_unit_is_inert() {
        let mut p = random_params(&[6, 5, 4, 2], 7);
        let b = Batch::new(1, 6, vec![0.5, -0.2, 0.9, 0.1, -0.7, 0.3]).unwrap();
        // Make unit 2 of the first hidden layer dead for this input.
        let pre = |p: &MlpParams| -> f64 {
            let l0 = &p.layers[0];
            (0..6).map(|j| l0.weights[2 * 6 + j] * b.row(0)[j]).sum::<f64>() + l0.bias[2]
        };
        if pre(&p) >= 0.0 {
            let l0 = &mut p.layers[0];
            l0.weights[12..18].iter_mut().for_each(|w| *w = -*w);
            l0.bias[2] = -l0.bias[2] - 0.1;
        }
        assert!(pre(&p) < 0.0);
        let reference = forward(&p, &b).unwrap();

        // Rescaling the dead unit's incoming row keeps it dead.
        let mut scaled = p.clone();
        scaled.layers[0].weights[12..18].iter_mut().for_each(|w| *w *= 3.0);
        scaled.layers[0].bias[2] *= 3.0;
        assert_eq!(forward(&scaled, &b).unwrap(), reference);

        // Its outgoing weights are irrelevant.
        let mut cut = p.clone();
        for r in 0..4 {
            cut.layers[1].weights[r * 5 + 2] = 0.0;
        }
        assert_eq!(forward(&cut, &b).unwrap(), reference);
    }

    #[test]
    fn first_layer_is_positively_homogeneous() {
        let p = random_params(&[8, 6, 4, 2], 21);
        let b = random_batch(3, 8, 22);
        let mut scaled = p.clone();
        let c = 2.5;
        scaled.layers[0].weights.iter_mut().for_each(|w| *w *= c);
        scaled.layers[0].bias.iter_mut().for_each(|w| *w *= c);
        let h = forward_pass(&p, &b).layers[0].clone();
        let hs = forward_pass(&scaled, &b).layers[0].clone();
        assert!(h.iter().zip(&hs).all(|(a, s)| (a * c - s).abs() <= 1e-12 * (1.0 + s.abs())));
    }

    #[test]
    fn zero_output_layer_loss_is_ln2() {
        let p = MlpParams::init(&[222, 400, 400, 2], 9);
        let b = random_batch(17, 222, 10);
        let labels: Vec<u8> = (0..17).map(|i| (i % 2) as u8).collect();
        let l = loss(&p, &b, &labels).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() <= 1e-12, "{l}");
        let (l2, _) = loss_and_grad(&p, &b, &labels).unwrap();
        assert!((l2 - std::f64::consts::LN_2).abs() <= 1e-12);
    }

    #[test]
    fn saturated_logits_have_vanishing_gradient() {
        let mut p = MlpParams::init(&[222, 400, 400, 2], 11);
        p.layers[2].bias[1] = 50.0;
        let b = random_batch(4, 222, 12);
        let (l, g) = loss_and_grad(&p, &b, &[1, 1, 1, 1]).unwrap();
        assert!(l < 1e-20);
        assert!(g.norm() <= 1e-20, "{}", g.norm());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = random_params(&[10, 8, 6, 2], 13);
        let b = random_batch(4, 10, 14);
        let labels = [0u8, 1, 1, 0];
        let (_, g) = loss_and_grad(&p, &b, &labels).unwrap();
        let h = 1e-5;
        for idx in 0..p.num_params() {
            let mut plus = p.clone();
            plus.set(idx, p.get(idx) + h);
            let mut minus = p.clone();
            minus.set(idx, p.get(idx) - h);
            let fd = (loss(&plus, &b, &labels).unwrap() - loss(&minus, &b, &labels).unwrap()) / (2.0 * h);
            let a = g.get(idx);
            let scale = a.abs().max(fd.abs());
            if scale > 0.0 {
                assert!((a - fd).abs() / scale <= 1e-5 || (a - fd).abs() < 1e-10, "idx {idx}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn label_checks() {
        let p = MlpParams::zeros(&[2, 3, 2]);
        let b = random_batch(2, 2, 1);
        assert!(loss_and_grad(&p, &b, &[0]).is_err());
        assert!(loss_and_grad(&p, &b, &[0, 2]).is_err());
    }

    #[test]
    fn flat_indexing_round_trips() {
        let mut p = MlpParams::zeros(&[3, 2, 2]);
        for i in 0..p.num_params() {
            p.set(i, i as f64);
        }
        let flat: Vec<f64> = p.values().copied().collect();
        assert_eq!(flat, (0..p.num_params()).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(p.layers[0].bias, vec![6.0, 7.0]);
    }
}
