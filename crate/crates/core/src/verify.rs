//! Independent oracles: central finite differences for backpropagation, the
//! empirical loss/gradient-norm association, and a full-sort reference for
//! elimination selection.
//!
//! The gradient and selection oracles never call the code paths they check
//! (`backward`, `select_elimination_global`).

use std::cmp::Ordering;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{backward, forward, sample_loss, Gradients, MlpParams};

/// Floor on the denominator of [`relative_error`].
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

fn mean_batch_loss(params: &MlpParams, features: &Matrix, targets: &Matrix) -> Result<f64> {
    let trace = forward(params, features)?;
    let b = targets.rows();
    Ok((0..b)
        .map(|i| sample_loss(params.loss(), trace.outputs.row(i), targets.row(i)))
        .sum::<f64>()
        / b as f64)
}

/// Which scalar a flat parameter position refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLocation {
    pub layer: usize,
    /// Weight row, or the bias entry.
    pub row: usize,
    /// `None` for a bias.
    pub col: Option<usize>,
}

fn locations(params: &MlpParams) -> Vec<ParamLocation> {
    let mut out = Vec::with_capacity(params.param_count());
    for (layer, l) in params.layers().iter().enumerate() {
        let (rows, cols) = l.weights.shape();
        for row in 0..rows {
            for col in 0..cols {
                out.push(ParamLocation {
                    layer,
                    row,
                    col: Some(col),
                });
            }
        }
        out.extend((0..rows).map(|row| ParamLocation { layer, row, col: None }));
    }
    out
}

fn param_mut(params: &mut MlpParams, at: ParamLocation) -> &mut f64 {
    let layer = &mut params.layers_mut()[at.layer];
    match at.col {
        Some(c) => {
            let cols = layer.weights.cols();
            &mut layer.weights.as_mut_slice()[at.row * cols + c]
        }
        None => &mut layer.bias.as_mut_slice()[at.row],
    }
}

fn grad_at(g: &Gradients, at: ParamLocation) -> f64 {
    let l = &g.layers[at.layer];
    match at.col {
        Some(c) => l.weights.get(at.row, c),
        None => l.bias[at.row],
    }
}

fn central_difference(
    params: &MlpParams,
    scratch: &mut MlpParams,
    at: ParamLocation,
    features: &Matrix,
    targets: &Matrix,
    h: f64,
) -> Result<f64> {
    let w = *param_mut(scratch, at);
    *param_mut(scratch, at) = w + h;
    let plus = mean_batch_loss(scratch, features, targets)?;
    *param_mut(scratch, at) = w - h;
    let minus = mean_batch_loss(scratch, features, targets)?;
    *param_mut(scratch, at) = w;
    debug_assert_eq!(scratch, params);
    Ok((plus - minus) / (2.0 * h))
}

/// Gradient of the mean batch loss by central differences,
/// `(L(w + h) - L(w - h)) / 2h` per scalar parameter.
pub fn finite_diff_grad(params: &MlpParams, features: &Matrix, targets: &Matrix, h: f64) -> Result<Gradients> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step h must be > 0, got {h}")));
    }
    if features.cols() != targets.rows() || targets.cols() != params.output_dim() {
        return Err(Error::Shape {
            op: "finite_diff_grad",
            left: features.shape(),
            right: targets.shape(),
        });
    }
    let locs = locations(params);

    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        locs.par_iter()
            .map_init(
                || params.clone(),
                |scratch, &at| central_difference(params, scratch, at, features, targets, h),
            )
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = {
        let mut scratch = params.clone();
        locs.iter()
            .map(|&at| central_difference(params, &mut scratch, at, features, targets, h))
            .collect::<Result<_>>()?
    };

    let mut grads = Gradients::zeros_like(params);
    for (at, v) in locs.into_iter().zip(values) {
        let l = &mut grads.layers[at.layer];
        match at.col {
            Some(c) => l.weights.set(at.row, c, v),
            None => l.bias.as_mut_slice()[at.row] = v,
        }
    }
    Ok(grads)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: ParamLocation,
    pub passed: bool,
    pub tolerance: f64,
}

/// Compares an analytic gradient against a finite-difference one entry by
/// entry using [`relative_error`].
pub fn compare_gradients(analytic: &Gradients, numeric: &Gradients, tolerance: f64) -> Result<GradCheckReport> {
    if analytic.layers.len() != numeric.layers.len() {
        return Err(Error::Length {
            op: "compare_gradients",
            expected: numeric.layers.len(),
            found: analytic.layers.len(),
        });
    }
    let mut worst = (0.0, ParamLocation { layer: 0, row: 0, col: Some(0) });
    for (layer, (a, n)) in analytic.layers.iter().zip(&numeric.layers).enumerate() {
        if a.weights.shape() != n.weights.shape() || a.bias.len() != n.bias.len() {
            return Err(Error::Shape {
                op: "compare_gradients",
                left: a.weights.shape(),
                right: n.weights.shape(),
            });
        }
        let (rows, cols) = a.weights.shape();
        for row in 0..rows {
            for col in 0..cols {
                let at = ParamLocation { layer, row, col: Some(col) };
                let e = relative_error(grad_at(analytic, at), grad_at(numeric, at));
                if e > worst.0 {
                    worst = (e, at);
                }
            }
            let at = ParamLocation { layer, row, col: None };
            let e = relative_error(grad_at(analytic, at), grad_at(numeric, at));
            if e > worst.0 {
                worst = (e, at);
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_param: worst.1,
        passed: worst.0 < tolerance,
        tolerance,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Report {
    /// `None` when either series has zero variance.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub n_samples: usize,
    pub degenerate: bool,
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
}

fn per_sample_grad_norm(params: &MlpParams, x: &[f64], target: &[f64]) -> Result<(f64, f64)> {
    let features = Matrix::new(x.len(), 1, x.to_vec())?;
    let targets = Matrix::new(1, target.len(), target.to_vec())?;
    let trace = forward(params, &features)?;
    let loss = sample_loss(params.loss(), trace.outputs.row(0), target);
    Ok((loss, backward(params, &trace, &targets)?.norm()))
}

/// Per-sample loss `e_i` against the gradient norm `||grad e_i||` over the
/// first `sample_cap` samples, summarized as Pearson and Spearman
/// correlations.
pub fn lemma1_correlation(params: &MlpParams, ds: &Dataset, sample_cap: usize) -> Result<Lemma1Report> {
    if sample_cap < 30 {
        return Err(Error::invalid(format!("sample_cap must be at least 30, got {sample_cap}")));
    }
    let n = sample_cap.min(ds.n());
    if n < 30 {
        return Err(Error::invalid(format!("need at least 30 samples, dataset has {}", ds.n())));
    }
    let one = |i: usize| per_sample_grad_norm(params, ds.sample(i), ds.targets().row(i));

    #[cfg(feature = "parallel")]
    let pairs: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<(f64, f64)> = (0..n).map(one).collect::<Result<_>>()?;

    let (losses, grad_norms): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let pearson = pearson(&losses, &grad_norms);
    let spearman = spearman(&losses, &grad_norms);
    Ok(Lemma1Report {
        degenerate: pearson.is_none() || spearman.is_none(),
        pearson,
        spearman,
        n_samples: n,
        losses,
        grad_norms,
    })
}

/// Pearson correlation; `None` if either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// Indices of the `k` smallest errors by `(error, index)`, via a full sort.
pub fn brute_select(errors: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > errors.len() {
        return Err(Error::IndexOutOfRange {
            op: "brute_select",
            index: k,
            len: errors.len(),
        });
    }
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| match errors[a].partial_cmp(&errors[b]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::linalg::Vector;
    use crate::model::{init_params, Activation, Layer, Loss, OutputUnit};

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert_eq!(relative_error(0.0, 1e-12), 1e-12 / REL_ERROR_FLOOR);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    fn scalar_net(w: f64) -> MlpParams {
        let layer = Layer {
            weights: Matrix::new(1, 1, vec![w]).unwrap(),
            bias: Vector::zeros(1),
            activation: Activation::Identity,
        };
        MlpParams::from_layers(vec![layer], OutputUnit::Identity, Loss::SumSquared).unwrap()
    }

    #[test]
    fn closed_form_single_weight() {
        // e = (w x - 0)^2 / 2 with x = 1, so de/dw = w.
        for w in [0.3, -1.7, 2.5] {
            let p = scalar_net(w);
            let x = Matrix::new(1, 1, vec![1.0]).unwrap();
            let y0 = Matrix::new(1, 1, vec![0.0]).unwrap();
            let g = finite_diff_grad(&p, &x, &y0, 1e-5).unwrap();
            assert!((g.layers[0].weights.get(0, 0) - w).abs() < 1e-9);
            // Bias gradient is the residual too.
            assert!((g.layers[0].bias[0] - w).abs() < 1e-9);
        }
    }

    #[test]
    fn one_one_one_net_by_hand() {
        // x -> tanh(w1 x + b1) -> sigmoid(w2 h + b2), sum-squared against t.
        let (w1, b1, w2, b2, x, t) = (0.7, -0.2, 1.3, 0.1, 0.9, 1.0);
        let layers = vec![
            Layer {
                weights: Matrix::new(1, 1, vec![w1]).unwrap(),
                bias: Vector::from(vec![b1]),
                activation: Activation::Tanh,
            },
            Layer {
                weights: Matrix::new(1, 1, vec![w2]).unwrap(),
                bias: Vector::from(vec![b2]),
                activation: Activation::Identity,
            },
        ];
        let p = MlpParams::from_layers(layers, OutputUnit::Sigmoid, Loss::SumSquared).unwrap();
        let h = (w1 * x + b1).tanh();
        let y = 1.0 / (1.0 + (-(w2 * h + b2)).exp());
        let d2 = (y - t) * y * (1.0 - y);
        let d1 = w2 * d2 * (1.0 - h * h);
        let expected = [d1 * x, d1, d2 * h, d2];

        let xm = Matrix::new(1, 1, vec![x]).unwrap();
        let tm = Matrix::new(1, 1, vec![t]).unwrap();
        let g = finite_diff_grad(&p, &xm, &tm, 1e-5).unwrap();
        let got = [
            g.layers[0].weights.get(0, 0),
            g.layers[0].bias[0],
            g.layers[1].weights.get(0, 0),
            g.layers[1].bias[0],
        ];
        for (a, b) in got.iter().zip(expected) {
            assert!(relative_error(*a, b) < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_gradient_configuration() {
        let p = scalar_net(0.4);
        let x = Matrix::new(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let y0 = Matrix::new(3, 1, vec![0.4, -0.8, 0.2]).unwrap();
        let g = finite_diff_grad(&p, &x, &y0, 1e-5).unwrap();
        assert!(g.norm() < 1e-8);
        assert!(finite_diff_grad(&p, &x, &y0, 0.0).is_err());
    }

    #[test]
    fn matches_backprop_on_small_net() {
        let p = init_params(&[4, 3, 2], Activation::Sigmoid, OutputUnit::Sigmoid, Loss::SumSquared, 9).unwrap();
        let x = Matrix::new(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let t = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        let trace = forward(&p, &x).unwrap();
        let analytic = backward(&p, &trace, &t).unwrap();
        let numeric = finite_diff_grad(&p, &x, &t, 1e-5).unwrap();
        let report = compare_gradients(&analytic, &numeric, 1e-6).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn per_sample_norm_matches_gradient_object() {
        let ds = synth_blobs(40, 5, 3, 0.4, 3).unwrap();
        let p = init_params(&[5, 4, 3], Activation::Tanh, OutputUnit::Softmax, Loss::SoftmaxCrossEntropy, 2).unwrap();
        for i in [0, 7, 21] {
            let (_, norm) = per_sample_grad_norm(&p, ds.sample(i), ds.targets().row(i)).unwrap();
            let b = ds.gather(&[i]).unwrap();
            let numeric = finite_diff_grad(&p, &b.features, &b.targets, 1e-5).unwrap();
            assert!(relative_error(norm, numeric.norm()) < 1e-6);
        }
    }

    #[test]
    fn lemma1_degenerate_on_identical_samples() {
        let samples = Matrix::filled(40, 3, 0.5);
        let labels = vec![0; 40];
        let ds = Dataset::from_labels(samples, &labels, 2).unwrap();
        let p = init_params(&[3, 4, 2], Activation::Tanh, OutputUnit::Sigmoid, Loss::SumSquared, 0).unwrap();
        let r = lemma1_correlation(&p, &ds, 40).unwrap();
        assert!(r.degenerate);
        assert!(r.spearman.is_none());
        assert!(lemma1_correlation(&p, &ds, 29).is_err());
    }

    #[test]
    fn lemma1_positive_on_blobs() {
        let ds = synth_blobs(300, 10, 3, 0.2, 1).unwrap();
        let rhos: Vec<f64> = (1..=5)
            .map(|seed| {
                let p = init_params(&[10, 8, 3], Activation::Tanh, OutputUnit::Sigmoid, Loss::SumSquared, seed).unwrap();
                let r = lemma1_correlation(&p, &ds, 200).unwrap();
                assert_eq!(r.n_samples, 200);
                r.spearman.unwrap()
            })
            .collect();
        // Individual untrained nets vary (0.14 to 0.81 here); all are positive.
        assert!(rhos.iter().all(|&r| r > 0.0), "{rhos:?}");
        assert!(rhos.iter().sum::<f64>() / 5.0 > 0.5, "{rhos:?}");
    }

    #[test]
    fn correlation_helpers() {
        assert_eq!(ranks(&[0.3, 0.1, 0.3, 0.2]), vec![3.5, 1.0, 3.5, 2.0]);
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[1.0, 10.0, 100.0, 1000.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&x, &[1.0; 4]).is_none());
    }

    #[test]
    fn brute_select_examples() {
        assert_eq!(brute_select(&[0.9, 0.1, 0.5, 0.2, 0.3], 2).unwrap(), vec![1, 3]);
        assert!(brute_select(&[0.9, 0.1], 0).unwrap().is_empty());
        assert_eq!(brute_select(&[0.2, 0.2, 0.2], 2).unwrap(), vec![0, 1]);
        assert!(brute_select(&[0.2], 2).is_err());
    }
}
