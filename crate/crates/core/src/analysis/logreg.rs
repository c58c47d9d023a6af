//! L2-regularized binary and multinomial logistic regression.
//!
//! Objective: mean cross-entropy + λ/(2n)·‖w‖², bias unregularized,
//! minimized with L-BFGS from zero weights on rescaled features.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::design::{Design, Scaler};
use super::lbfgs::{lbfgs, LbfgsConfig};
use super::AnalysisError;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LogRegParams {
    pub l2_lambda: f64,
    pub iterations: usize,
    pub grad_tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2_lambda: 1.0,
            iterations: 1000,
            grad_tol: 1e-6,
        }
    }
}

impl LogRegParams {
    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            max_iter: self.iterations,
            grad_tol: self.grad_tol,
            ..LbfgsConfig::default()
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Binary objective at `params = [w.., b]` over an already scaled design;
/// writes the gradient into `grad`.
pub fn logistic_loss<D: Design>(x: &D, y: &[bool], l2_lambda: f64, params: &[f64], grad: &mut [f64]) -> f64 {
    let d = x.cols();
    let n = x.rows() as f64;
    let (w, b) = (&params[..d], params[d]);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut gb = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let z = x.dot_row(i, w) + b;
        loss += softplus(z) - if yi { z } else { 0.0 };
        let r = (sigmoid(z) - yi as u8 as f64) / n;
        x.add_row(i, r, &mut grad[..d]);
        gb += r;
    }
    grad[d] = gb;
    let reg = l2_lambda / n;
    let mut wsq = 0.0;
    for (g, wi) in grad[..d].iter_mut().zip(w) {
        *g += reg * wi;
        wsq += wi * wi;
    }
    loss / n + 0.5 * reg * wsq
}

fn check_inputs<D: Design>(x: &D, labels: usize) -> Result<(), AnalysisError> {
    if x.rows() != labels {
        return Err(AnalysisError::LengthMismatch { rows: x.rows(), labels });
    }
    if labels < 4 {
        return Err(AnalysisError::TooFewSamples { need: 4, got: labels });
    }
    x.check_finite()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Scaler,
    pub l2_lambda: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub loss_history: Vec<f64>,
}

impl LogRegModel {
    /// Logits for unscaled rows.
    pub fn decision<D: Design>(&self, x: &D) -> Vec<f64> {
        let z = x.scaled(&self.scaler);
        (0..z.rows()).map(|i| z.dot_row(i, &self.weights) + self.bias).collect()
    }

    pub fn predict<D: Design>(&self, x: &D) -> Vec<bool> {
        self.decision(x).into_iter().map(|z| z > 0.0).collect()
    }

    pub fn accuracy<D: Design>(&self, x: &D, y: &[bool]) -> f64 {
        let hits = self.predict(x).iter().zip(y).filter(|(p, t)| p == t).count();
        hits as f64 / y.len().max(1) as f64
    }
}

/// Fits a binary classifier. Dense designs are standardized, sparse ones
/// max-abs scaled; the scaler is stored in the model.
pub fn train_logreg<D: Design>(x: &D, y: &[bool], p: &LogRegParams) -> Result<LogRegModel, AnalysisError> {
    check_inputs(x, y.len())?;
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(AnalysisError::SingleClass);
    }
    let scaler = x.fit_scaler();
    let z = x.scaled(&scaler);
    let d = z.cols();
    let r = lbfgs(
        |params, grad| logistic_loss(&z, y, p.l2_lambda, params, grad),
        alloc::vec![0.0; d + 1],
        &p.lbfgs(),
    );
    let mut weights = r.x;
    let bias = weights.pop().unwrap_or(0.0);
    Ok(LogRegModel {
        weights,
        bias,
        scaler,
        l2_lambda: p.l2_lambda,
        iterations: r.iterations,
        grad_norm: r.grad_norm,
        loss_history: r.history,
    })
}

/// Multinomial model over the classes seen in training.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxModel {
    pub classes: Vec<usize>,
    /// `classes.len() × cols`, row per class.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub scaler: Scaler,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl SoftmaxModel {
    pub fn predict<D: Design>(&self, x: &D) -> Vec<usize> {
        let z = x.scaled(&self.scaler);
        let d = z.cols();
        (0..z.rows())
            .map(|i| {
                let mut best = (f64::NEG_INFINITY, 0);
                for (c, &label) in self.classes.iter().enumerate() {
                    let s = z.dot_row(i, &self.weights[c * d..(c + 1) * d]) + self.bias[c];
                    if s > best.0 {
                        best = (s, label);
                    }
                }
                best.1
            })
            .collect()
    }

    pub fn accuracy<D: Design>(&self, x: &D, y: &[usize]) -> f64 {
        let hits = self.predict(x).iter().zip(y).filter(|(p, t)| p == t).count();
        hits as f64 / y.len().max(1) as f64
    }
}

fn softmax_loss<D: Design>(x: &D, y: &[usize], k: usize, l2_lambda: f64, params: &[f64], grad: &mut [f64]) -> f64 {
    let d = x.cols();
    let n = x.rows() as f64;
    let (w, b) = params.split_at(k * d);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut logits = alloc::vec![0.0; k];
    let mut loss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        for c in 0..k {
            logits[c] = x.dot_row(i, &w[c * d..(c + 1) * d]) + b[c];
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| libm::exp(z - m)).sum();
        let lse = m + libm::log(sum);
        loss += lse - logits[yi];
        for c in 0..k {
            let r = (libm::exp(logits[c] - lse) - (c == yi) as u8 as f64) / n;
            x.add_row(i, r, &mut grad[c * d..(c + 1) * d]);
            grad[k * d + c] += r;
        }
    }
    let reg = l2_lambda / n;
    let mut wsq = 0.0;
    for (g, wi) in grad[..k * d].iter_mut().zip(w) {
        *g += reg * wi;
        wsq += wi * wi;
    }
    loss / n + 0.5 * reg * wsq
}

/// Fits a multinomial classifier on arbitrary `usize` labels.
pub fn train_softmax<D: Design>(x: &D, y: &[usize], p: &LogRegParams) -> Result<SoftmaxModel, AnalysisError> {
    check_inputs(x, y.len())?;
    let classes: Vec<usize> = y.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(AnalysisError::SingleClass);
    }
    let idx: Vec<usize> = y.iter().map(|v| classes.binary_search(v).unwrap()).collect();
    let scaler = x.fit_scaler();
    let z = x.scaled(&scaler);
    let (k, d) = (classes.len(), z.cols());
    let r = lbfgs(
        |params, grad| softmax_loss(&z, &idx, k, p.l2_lambda, params, grad),
        alloc::vec![0.0; k * d + k],
        &p.lbfgs(),
    );
    let mut weights = r.x;
    let bias = weights.split_off(k * d);
    Ok(SoftmaxModel {
        classes,
        weights,
        bias,
        scaler,
        iterations: r.iterations,
        grad_norm: r.grad_norm,
    })
}
