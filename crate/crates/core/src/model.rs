//! Multilayer perceptron: forward pass, per-sample losses, backpropagation
//! and plain SGD.
//!
//! Activations are kept column-per-sample (`units x batch`) internally; the
//! public [`ForwardTrace::outputs`] is `batch x classes` with one row per
//! sample.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{argmax, Dataset, TargetKind};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Lower clamp for the argument of `ln` in the cross-entropy loss.
pub const LOG_CLAMP: f64 = 1e-12;

/// Evaluation is chunked so memory stays bounded on large datasets. Fixed
/// chunking keeps reductions in the same order with or without threads.
const EVAL_CHUNK: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputUnit {
    Sigmoid,
    Softmax,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    SumSquared,
    SoftmaxCrossEntropy,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation value `a = f(z)`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" | "linear" => Ok(Activation::Identity),
            _ => Err(Error::invalid(format!("unknown activation {s:?}"))),
        }
    }
}

impl FromStr for OutputUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(OutputUnit::Sigmoid),
            "softmax" => Ok(OutputUnit::Softmax),
            "identity" | "linear" => Ok(OutputUnit::Identity),
            _ => Err(Error::invalid(format!("unknown output unit {s:?}"))),
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sse" | "sum-squared" => Ok(Loss::SumSquared),
            "softmax" | "cross-entropy" => Ok(Loss::SoftmaxCrossEntropy),
            _ => Err(Error::invalid(format!("unknown loss {s:?}"))),
        }
    }
}

/// Parses `"d0-d1-...-dk"`, e.g. `"784-1000-10"`.
pub fn parse_arch(s: &str) -> Result<Vec<usize>> {
    let arch = s
        .split('-')
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad layer width {d:?} in architecture {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_arch(&arch)?;
    Ok(arch)
}

fn validate_arch(arch: &[usize]) -> Result<()> {
    if arch.len() < 2 || arch.contains(&0) {
        return Err(Error::invalid(format!(
            "architecture needs at least two widths, all >= 1, got {arch:?}"
        )));
    }
    Ok(())
}

pub fn format_arch(arch: &[usize]) -> String {
    arch.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Matrix,
    pub bias: Vector,
    /// Ignored on the last layer, which uses the network's output unit.
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
    output_unit: OutputUnit,
    loss: Loss,
}

fn check_loss_output(output_unit: OutputUnit, loss: Loss) -> Result<()> {
    let softmax_out = output_unit == OutputUnit::Softmax;
    let ce = loss == Loss::SoftmaxCrossEntropy;
    if softmax_out != ce {
        return Err(Error::invalid(format!(
            "loss {loss:?} is incompatible with output unit {output_unit:?}; \
             cross-entropy requires a softmax output and vice versa"
        )));
    }
    Ok(())
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Layer>, output_unit: OutputUnit, loss: Loss) -> Result<Self> {
        check_loss_output(output_unit, loss)?;
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.rows() {
                return Err(Error::Length {
                    op: "MlpParams::from_layers",
                    expected: l.weights.rows(),
                    found: l.bias.len(),
                });
            }
            if let Some(next) = layers.get(k + 1) {
                if next.weights.cols() != l.weights.rows() {
                    return Err(Error::Shape {
                        op: "MlpParams::from_layers",
                        left: l.weights.shape(),
                        right: next.weights.shape(),
                    });
                }
            }
        }
        Ok(MlpParams {
            layers,
            output_unit,
            loss,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_unit(&self) -> OutputUnit {
        self.output_unit
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weights.rows()
    }

    pub fn arch(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.rows()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }
}

/// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`,
/// and zero biases.
pub fn init_params(
    arch: &[usize],
    activation: Activation,
    output_unit: OutputUnit,
    loss: Loss,
    seed: u64,
) -> Result<MlpParams> {
    init_params_with_rng(arch, activation, output_unit, loss, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn init_params_with_rng<R: Rng>(
    arch: &[usize],
    activation: Activation,
    output_unit: OutputUnit,
    loss: Loss,
    rng: &mut R,
) -> Result<MlpParams> {
    validate_arch(arch)?;
    check_loss_output(output_unit, loss)?;
    let last = arch.len() - 2;
    let layers = arch
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)).collect();
            Layer {
                weights: Matrix::new(fan_out, fan_in, data).expect("sized"),
                bias: Vector::zeros(fan_out),
                activation: if k == last { Activation::Identity } else { activation },
            }
        })
        .collect();
    MlpParams::from_layers(layers, output_unit, loss)
}

/// Everything backpropagation needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `activations[0]` is the input block; `activations[k + 1]` is the
    /// output of layer `k`. All are `units x batch`.
    pub activations: Vec<Matrix>,
    /// Pre-activations per layer, `units x batch`.
    pub pre_activations: Vec<Matrix>,
    /// `batch x classes`, one row per sample.
    pub outputs: Matrix,
}

impl ForwardTrace {
    pub fn batch_len(&self) -> usize {
        self.outputs.rows()
    }

    fn output_block(&self) -> &Matrix {
        self.activations.last().expect("nonempty")
    }
}

fn softmax_columns(z: &Matrix) -> Matrix {
    let (rows, cols) = z.shape();
    let mut out = Matrix::zeros(rows, cols);
    for j in 0..cols {
        let max = (0..rows).map(|k| z.get(k, j)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for k in 0..rows {
            let e = (z.get(k, j) - max).exp();
            out.set(k, j, e);
            sum += e;
        }
        for k in 0..rows {
            out.set(k, j, out.get(k, j) / sum);
        }
    }
    out
}

/// Runs the network on a `p x b` feature block.
pub fn forward(params: &MlpParams, features: &Matrix) -> Result<ForwardTrace> {
    if features.rows() != params.input_dim() {
        return Err(Error::Shape {
            op: "forward",
            left: params.layers[0].weights.shape(),
            right: features.shape(),
        });
    }
    let n_layers = params.layers.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    let mut pre_activations = Vec::with_capacity(n_layers);
    activations.push(features.clone());
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = layer.weights.matmul(&activations[k])?;
        for (r, &b) in layer.bias.iter().enumerate() {
            z.row_mut(r).iter_mut().for_each(|v| *v += b);
        }
        let a = if k + 1 == n_layers {
            match params.output_unit {
                OutputUnit::Sigmoid => z.map(sigmoid),
                OutputUnit::Identity => z.clone(),
                OutputUnit::Softmax => softmax_columns(&z),
            }
        } else {
            let act = layer.activation;
            z.map(|v| act.apply(v))
        };
        pre_activations.push(z);
        activations.push(a);
    }
    let outputs = activations.last().expect("nonempty").transpose();
    Ok(ForwardTrace {
        activations,
        pre_activations,
        outputs,
    })
}

fn check_targets(op: &'static str, trace: &ForwardTrace, targets: &Matrix) -> Result<()> {
    if trace.outputs.shape() != targets.shape() {
        return Err(Error::Shape {
            op,
            left: trace.outputs.shape(),
            right: targets.shape(),
        });
    }
    Ok(())
}

/// Per-sample loss of one output row against its target row.
#[inline]
pub fn sample_loss(loss: Loss, output: &[f64], target: &[f64]) -> f64 {
    match loss {
        Loss::SumSquared => 0.5 * output.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum::<f64>(),
        Loss::SoftmaxCrossEntropy => -output
            .iter()
            .zip(target)
            .filter(|(_, &t)| t != 0.0)
            .map(|(&p, &t)| t * p.max(LOG_CLAMP).ln())
            .sum::<f64>(),
    }
}

/// Loss of each sample in the batch: half the squared residual norm, or the
/// cross-entropy of the softmax output against the target.
pub fn per_sample_loss(params: &MlpParams, trace: &ForwardTrace, targets: &Matrix) -> Result<Vector> {
    check_targets("per_sample_loss", trace, targets)?;
    Ok((0..targets.rows())
        .map(|i| sample_loss(params.loss, trace.outputs.row(i), targets.row(i)))
        .collect::<Vec<_>>()
        .into())
}

/// Error signal at the output pre-activations, `classes x batch`.
///
/// Sum-squared: `(y - y0) * f'(z)` for the configured output unit.
/// Softmax cross-entropy: `p - y0`.
pub fn output_delta(params: &MlpParams, trace: &ForwardTrace, targets: &Matrix) -> Result<Matrix> {
    check_targets("output_delta", trace, targets)?;
    let y = trace.output_block();
    let (c, b) = y.shape();
    let mut delta = Matrix::zeros(c, b);
    for k in 0..c {
        for i in 0..b {
            let yk = y.get(k, i);
            let residual = yk - targets.get(i, k);
            let d = match (params.loss, params.output_unit) {
                (Loss::SoftmaxCrossEntropy, _) => residual,
                (Loss::SumSquared, OutputUnit::Sigmoid) => residual * yk * (1.0 - yk),
                (Loss::SumSquared, _) => residual,
            };
            delta.set(k, i, d);
        }
    }
    Ok(delta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vector,
}

/// Gradient of the mean batch loss, shaped like [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: Vector::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// L2 norm over every weight and bias entry.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|g| g.weights.frobenius_sq() + g.bias.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    fn congruent_with(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, l)| g.weights.shape() == l.weights.shape() && g.bias.len() == l.bias.len())
    }
}

/// Backpropagates the mean batch loss.
pub fn backward(params: &MlpParams, trace: &ForwardTrace, targets: &Matrix) -> Result<Gradients> {
    let n_layers = params.layers.len();
    let stale = trace.activations.len() != n_layers + 1
        || trace
            .activations
            .iter()
            .zip(params.arch())
            .any(|(a, width)| a.rows() != width);
    if stale {
        return Err(Error::invalid(
            "forward trace does not match these parameters (stale trace)",
        ));
    }
    let batch = trace.batch_len();
    if batch == 0 {
        return Ok(Gradients::zeros_like(params));
    }
    let inv_b = 1.0 / batch as f64;
    let mut delta = output_delta(params, trace, targets)?;
    let mut grads = Vec::with_capacity(n_layers);
    for k in (0..n_layers).rev() {
        let input_t = trace.activations[k].transpose();
        let mut gw = delta.matmul(&input_t)?;
        gw.map_inplace(|v| v * inv_b);
        let gb = delta.row_means();
        if k > 0 {
            let act = params.layers[k - 1].activation;
            let mut prev = params.layers[k].weights.transpose().matmul(&delta)?;
            let a = &trace.activations[k];
            for (d, &av) in prev.as_mut_slice().iter_mut().zip(a.as_slice()) {
                *d *= act.derivative_from_output(av);
            }
            delta = prev;
        }
        grads.push(LayerGrad { weights: gw, bias: gb });
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

/// `w <- w - eta * g` for every parameter.
pub fn sgd_step(params: &mut MlpParams, grads: &Gradients, eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be > 0, got {eta}")));
    }
    if !grads.congruent_with(params) {
        return Err(Error::invalid("gradients are not shaped like the parameters"));
    }
    for (layer, g) in params.layers.iter_mut().zip(&grads.layers) {
        for (w, &gw) in layer.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
            *w -= eta * gw;
        }
        for (b, &gb) in layer.bias.as_mut_slice().iter_mut().zip(g.bias.as_slice()) {
            *b -= eta * gb;
        }
    }
    Ok(())
}

/// Whole-dataset metrics from one pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Misclassified fraction; `None` for real-valued targets.
    pub classification_error: Option<f64>,
    /// Mean of `||y_i - y0_i||^2`.
    pub mse: f64,
    /// Mean per-sample loss under the network's loss.
    pub mean_loss: f64,
}

impl Evaluation {
    /// Classification error when defined, else MSE.
    pub fn error(&self) -> f64 {
        self.classification_error.unwrap_or(self.mse)
    }
}

#[derive(Clone, Copy, Default)]
struct Partial {
    wrong: usize,
    sq: f64,
    loss: f64,
}

fn evaluate_chunk(params: &MlpParams, ds: &Dataset, start: usize) -> Result<Partial> {
    let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(ds.n())).collect();
    let batch = ds.gather(&idx)?;
    let trace = forward(params, &batch.features)?;
    let mut part = Partial::default();
    for i in 0..idx.len() {
        let y = trace.outputs.row(i);
        let t = batch.targets.row(i);
        if argmax(y) != argmax(t) {
            part.wrong += 1;
        }
        part.sq += y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        part.loss += sample_loss(params.loss, y, t);
    }
    Ok(part)
}

/// Evaluates the network on every sample. Chunks may be processed in
/// parallel; partial sums are combined in chunk order.
pub fn evaluate(params: &MlpParams, ds: &Dataset) -> Result<Evaluation> {
    if ds.p() != params.input_dim() || ds.c() != params.output_dim() {
        return Err(Error::Shape {
            op: "evaluate",
            left: (params.input_dim(), params.output_dim()),
            right: (ds.p(), ds.c()),
        });
    }
    let starts: Vec<usize> = (0..ds.n()).step_by(EVAL_CHUNK).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<Partial> = {
        use rayon::prelude::*;
        starts
            .par_iter()
            .map(|&s| evaluate_chunk(params, ds, s))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Partial> = starts
        .iter()
        .map(|&s| evaluate_chunk(params, ds, s))
        .collect::<Result<_>>()?;

    let total = parts.iter().fold(Partial::default(), |acc, p| Partial {
        wrong: acc.wrong + p.wrong,
        sq: acc.sq + p.sq,
        loss: acc.loss + p.loss,
    });
    let n = ds.n() as f64;
    Ok(Evaluation {
        classification_error: (ds.kind() == TargetKind::Classification).then(|| total.wrong as f64 / n),
        mse: total.sq / n,
        mean_loss: total.loss / n,
    })
}

/// Fraction of samples whose output argmax differs from the target argmax.
pub fn classify_error(params: &MlpParams, ds: &Dataset) -> Result<f64> {
    if ds.kind() != TargetKind::Classification {
        return Err(Error::Unsupported(
            "classification error needs one-hot targets; use mse_error".into(),
        ));
    }
    Ok(evaluate(params, ds)?.classification_error.expect("classification"))
}

/// `sum_i ||y_i - y0_i||^2 / n`.
pub fn mse_error(params: &MlpParams, ds: &Dataset) -> Result<f64> {
    Ok(evaluate(params, ds)?.mse)
}

impl fmt::Display for MlpParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({:?} output, {:?} loss)",
            format_arch(&self.arch()),
            self.output_unit,
            self.loss
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_net(arch: &[usize], out: OutputUnit, loss: Loss) -> MlpParams {
        let mut p = init_params(arch, Activation::Tanh, out, loss, 0).unwrap();
        for l in p.layers_mut() {
            l.weights.map_inplace(|_| 0.0);
        }
        p
    }

    #[test]
    fn arch_parsing() {
        assert_eq!(parse_arch("784-1000-10").unwrap(), vec![784, 1000, 10]);
        assert!(parse_arch("5").is_err());
        assert!(parse_arch("4-0-2").is_err());
        assert!(parse_arch("4-x-2").is_err());
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_params(&[784, 1000, 10], Activation::Tanh, OutputUnit::Sigmoid, Loss::SumSquared, 3).unwrap();
        let b = init_params(&[784, 1000, 10], Activation::Tanh, OutputUnit::Sigmoid, Loss::SumSquared, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers()[0].weights.shape(), (1000, 784));
        assert_eq!(a.layers()[1].weights.shape(), (10, 1000));
        let bound = (6.0f64 / 1784.0).sqrt();
        assert!(a.layers()[0].weights.as_slice().iter().all(|w| w.abs() <= bound));
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_rejects_bad_configs() {
        assert!(init_params(&[5], Activation::Tanh, OutputUnit::Sigmoid, Loss::SumSquared, 0).is_err());
        assert!(init_params(&[3, 2], Activation::Tanh, OutputUnit::Softmax, Loss::SumSquared, 0).is_err());
        assert!(init_params(&[3, 2], Activation::Tanh, OutputUnit::Sigmoid, Loss::SoftmaxCrossEntropy, 0).is_err());
    }

    #[test]
    fn zero_weights_sigmoid_gives_half() {
        let p = zero_net(&[3, 4, 2], OutputUnit::Sigmoid, Loss::SumSquared);
        let t = forward(&p, &Matrix::filled(3, 5, 0.7)).unwrap();
        assert!(t.outputs.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_weights_softmax_is_uniform() {
        let p = zero_net(&[3, 4, 5], OutputUnit::Softmax, Loss::SoftmaxCrossEntropy);
        let t = forward(&p, &Matrix::filled(3, 2, -1.0)).unwrap();
        assert!(t.outputs.as_slice().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn identity_layer_passes_features_through() {
        let layer = Layer {
            weights: Matrix::identity(3),
            bias: Vector::zeros(3),
            activation: Activation::Identity,
        };
        let p = MlpParams::from_layers(vec![layer], OutputUnit::Identity, Loss::SumSquared).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(forward(&p, &x).unwrap().outputs, x.transpose());
        assert!(forward(&p, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one_under_large_logits() {
        let mut p = init_params(&[2, 3], Activation::Tanh, OutputUnit::Softmax, Loss::SoftmaxCrossEntropy, 1).unwrap();
        p.layers_mut()[0].weights.map_inplace(|w| w * 500.0);
        let x = Matrix::from_rows(&[[3.0, -2.0, 0.1], [1.0, 4.0, -0.3]]).unwrap();
        let t = forward(&p, &x).unwrap();
        for i in 0..3 {
            let s: f64 = t.outputs.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(t.outputs.row(i).iter().all(|v| v.is_finite()));
        }
    }

    fn identity_net(c: usize, out: OutputUnit, loss: Loss) -> MlpParams {
        let layer = Layer {
            weights: Matrix::identity(c),
            bias: Vector::zeros(c),
            activation: Activation::Identity,
        };
        MlpParams::from_layers(vec![layer], out, loss).unwrap()
    }

    #[test]
    fn sum_squared_loss_values() {
        let p = identity_net(2, OutputUnit::Identity, Loss::SumSquared);
        let x = Matrix::from_rows(&[[1.0, 0.3], [0.0, 0.7]]).unwrap();
        let t = forward(&p, &x).unwrap();
        let targets = Matrix::from_rows(&[[0.0, 1.0], [0.3, 0.7]]).unwrap();
        let e = per_sample_loss(&p, &t, &targets).unwrap();
        assert_eq!(e[0], 1.0);
        assert_eq!(e[1], 0.0);
        assert!(per_sample_loss(&p, &t, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        let p = identity_net(2, OutputUnit::Softmax, Loss::SoftmaxCrossEntropy);
        let logits = Matrix::zeros(2, 1);
        let t = forward(&p, &logits).unwrap();
        let e = per_sample_loss(&p, &t, &Matrix::from_rows(&[[1.0, 0.0]]).unwrap()).unwrap();
        assert!((e[0] - std::f64::consts::LN_2).abs() < 1e-15);

        // Probability one on the target class: zero loss.
        assert_eq!(sample_loss(Loss::SoftmaxCrossEntropy, &[0.0, 1.0], &[0.0, 1.0]), 0.0);
        // Clamp keeps a zero probability finite.
        let clamped = sample_loss(Loss::SoftmaxCrossEntropy, &[1.0, 0.0], &[0.0, 1.0]);
        assert!((clamped - -(LOG_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn gradients_vanish_at_target() {
        let p = identity_net(3, OutputUnit::Identity, Loss::SumSquared);
        let x = Matrix::from_rows(&[[0.2], [0.5], [0.3]]).unwrap();
        let t = forward(&p, &x).unwrap();
        let g = backward(&p, &t, &t.outputs).unwrap();
        assert_eq!(g.norm(), 0.0);

        let sm = identity_net(3, OutputUnit::Softmax, Loss::SoftmaxCrossEntropy);
        let t = forward(&sm, &x).unwrap();
        let g = backward(&sm, &t, &t.outputs).unwrap();
        assert!(g.norm() < 1e-16);
    }

    #[test]
    fn backward_rejects_stale_trace() {
        let a = init_params(&[3, 4, 2], Activation::Tanh, OutputUnit::Sigmoid, Loss::SumSquared, 0).unwrap();
        let b = init_params(&[3, 5, 2], Activation::Tanh, OutputUnit::Sigmoid, Loss::SumSquared, 0).unwrap();
        let t = forward(&a, &Matrix::zeros(3, 2)).unwrap();
        assert!(backward(&b, &t, &Matrix::zeros(2, 2)).is_err());
        assert!(backward(&a, &t, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn residual_scaling_scales_output_delta() {
        let p = init_params(&[4, 3, 2], Activation::Tanh, OutputUnit::Identity, Loss::SumSquared, 5).unwrap();
        let x = Matrix::from_rows(&[[0.1], [-0.4], [0.9], [0.3]]).unwrap();
        let t = forward(&p, &x).unwrap();
        let y = t.outputs.row(0).to_vec();
        let target = Matrix::from_rows(&[[y[0] - 0.3, y[1] + 0.2]]).unwrap();
        let target2 = Matrix::from_rows(&[[y[0] - 0.75, y[1] + 0.5]]).unwrap();
        let d1 = output_delta(&p, &t, &target).unwrap().frobenius_sq().sqrt();
        let d2 = output_delta(&p, &t, &target2).unwrap().frobenius_sq().sqrt();
        assert!((d2 / d1 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn sgd_step_cases() {
        let mut p = identity_net(1, OutputUnit::Identity, Loss::SumSquared);
        let mut g = Gradients::zeros_like(&p);
        let before = p.clone();
        sgd_step(&mut p, &g, 1.0).unwrap();
        assert_eq!(p, before);

        g.layers[0].weights.set(0, 0, 0.5);
        sgd_step(&mut p, &g, 1.0).unwrap();
        assert_eq!(p.layers()[0].weights.get(0, 0), 0.5);

        assert!(sgd_step(&mut p, &g, 0.0).is_err());
        assert!(sgd_step(&mut p, &g, -1.0).is_err());
        let other = Gradients::zeros_like(&identity_net(2, OutputUnit::Identity, Loss::SumSquared));
        assert!(sgd_step(&mut p, &other, 1.0).is_err());
    }

    fn ds_from(samples: &[[f64; 3]], targets: &[[f64; 3]]) -> Dataset {
        Dataset::from_samples(Matrix::from_rows(samples).unwrap(), Matrix::from_rows(targets).unwrap()).unwrap()
    }

    #[test]
    fn classification_error_counts_argmax_misses() {
        let p = identity_net(3, OutputUnit::Identity, Loss::SumSquared);
        let targets = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        let exact = ds_from(&targets, &targets);
        assert_eq!(classify_error(&p, &exact).unwrap(), 0.0);

        let outputs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.9, 0.0]];
        assert_eq!(classify_error(&p, &ds_from(&outputs, &targets)).unwrap(), 0.25);

        // A tie resolves to the lowest index.
        let tie = ds_from(&[[0.5, 0.5, 0.0]], &[[1.0, 0.0, 0.0]]);
        assert_eq!(classify_error(&p, &tie).unwrap(), 0.0);
    }

    #[test]
    fn mse_error_values() {
        let p = identity_net(3, OutputUnit::Identity, Loss::SumSquared);
        let real = ds_from(&[[0.2, 0.3, 0.5]], &[[0.2, 0.3, 0.5]]);
        assert_eq!(mse_error(&p, &real).unwrap(), 0.0);
        assert!(classify_error(&p, &real).is_err());

        let one = ds_from(&[[1.0, 0.0, 0.0]], &[[0.0, 0.0, 0.0]]);
        assert_eq!(mse_error(&p, &one).unwrap(), 1.0);

        // Residual norms squared 1 and 3.
        let two = ds_from(&[[1.0, 0.0, 0.0], [1.0, 1.0, 1.0]], &[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(mse_error(&p, &two).unwrap(), 2.0);
    }
}
