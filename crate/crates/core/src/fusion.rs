//! Denoise-then-decode.
//!
//! A non-negative sparse deconvolution on the low-rate grid (decay `γ = α^D`)
//! gives an activity estimate `x̂[n]`; the denoised trace
//! `ŷ[n] = γ·ŷ[n−1] + x̂[n]` has c-sequence `x̂` itself, which is then decoded
//! block by block. Any external estimate of `x̂` can be plugged in through
//! [`DenoiseResult::from_activity`].

use serde::Serialize;

use crate::codebook::Codebook;
use crate::decoder::{decode_c_sequence, DecodeMode, DecodeReport};
use crate::error::{Error, Result};
use crate::model::Trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoiseResult {
    /// Non-negative low-rate activity estimate.
    pub x_l1: Vec<f64>,
    /// Denoised trace rebuilt from `x_l1`.
    pub y_hat: Vec<f64>,
    pub lambda: f64,
}

impl DenoiseResult {
    pub fn from_activity(x_l1: Vec<f64>, alpha_d: f64, lambda: f64) -> Result<Self> {
        if let Some((i, v)) = x_l1.iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
            return Err(Error::Parameter(format!(
                "activity must be non-negative, entry {i} is {v}"
            )));
        }
        let mut y_hat = Vec::with_capacity(x_l1.len());
        let mut prev = 0.0;
        for &v in &x_l1 {
            prev = alpha_d * prev + v;
            y_hat.push(prev);
        }
        Ok(Self {
            x_l1,
            y_hat,
            lambda,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DenoiseOptions {
    pub max_iter: usize,
    /// Stop when the projected-gradient step moves no entry by more than
    /// `tol·(1 + max|z|)`.
    pub tol: f64,
}

impl Default for DenoiseOptions {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            tol: 1e-12,
        }
    }
}

/// `σ·√(2 ln M)`.
pub fn default_lambda(sigma: f64, m: usize) -> f64 {
    sigma * (2.0 * (m.max(1) as f64).ln()).sqrt()
}

fn forward(gamma: f64, s: &[f64], out: &mut [f64]) {
    let mut prev = 0.0;
    for (o, &v) in out.iter_mut().zip(s) {
        prev = gamma * prev + v;
        *o = prev;
    }
}

fn adjoint(gamma: f64, r: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, &v) in out.iter_mut().zip(r).rev() {
        acc = gamma * acc + v;
        *o = acc;
    }
}

fn lipschitz(gamma: f64, m: usize) -> f64 {
    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    let mut t = vec![0.0; m];
    let mut est = 0.0;
    for _ in 0..200 {
        forward(gamma, &v, &mut t);
        adjoint(gamma, &t, &mut v);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        if (n - est).abs() <= 1e-10 * n {
            return n;
        }
        est = n;
    }
    est
}

/// Non-negative LASSO `min_{s ≥ 0} ½‖z − T·s‖² + λ·Σs`, `T` the low-rate
/// AR(1) response, by FISTA with adaptive restart.
pub fn denoise_low_rate(
    trace: &Trace,
    lambda: f64,
    opts: &DenoiseOptions,
) -> Result<DenoiseResult> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let gamma = trace.model.alpha_d();
    let z = &trace.values;
    let m = z.len();
    let step = 1.0 / (lipschitz(gamma, m) * 1.01);
    let scale = 1.0 + z.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut s = vec![0.0; m];
    let mut s_prev = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut ts = vec![0.0; m];
    let mut grad = vec![0.0; m];
    let mut t = 1.0f64;
    let mut last_move = f64::INFINITY;
    for _ in 0..opts.max_iter {
        forward(gamma, &w, &mut ts);
        for (r, zi) in ts.iter_mut().zip(z) {
            *r -= zi;
        }
        adjoint(gamma, &ts, &mut grad);
        s_prev.copy_from_slice(&s);
        let mut moved = 0.0f64;
        let mut restart = 0.0;
        for i in 0..m {
            s[i] = (w[i] - step * (grad[i] + lambda)).max(0.0);
            moved = moved.max((s[i] - s_prev[i]).abs());
            restart += (w[i] - s[i]) * (s[i] - s_prev[i]);
        }
        last_move = moved;
        if moved <= opts.tol * scale {
            return DenoiseResult::from_activity(s, gamma, lambda);
        }
        if restart > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..m {
            w[i] = s[i] + beta * (s[i] - s_prev[i]);
        }
        t = t_next;
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        feasibility: 0.0,
        gap: last_move / scale,
    })
}

/// Nearest-neighbor decode of a denoised trace; its c-sequence is `x_l1`.
pub fn fused_decode(den: &DenoiseResult, cb: &Codebook) -> Result<DecodeReport> {
    decode_c_sequence(&den.x_l1, cb, DecodeMode::Nearest, false)
}
