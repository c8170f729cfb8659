//! Comparison methods and counterexamples.
//!
//! Sparsity alone does not identify a binary train: [`sparse_alternative`]
//! builds a different vector with the same measurements and no more
//! nonzeros, and box-constrained ℓ1 minimization pushes mass towards the end
//! of every block ([`box_l1_noiseless`]). [`fir_collision_pair`] shows that a
//! finite filter loses identifiability once `D` exceeds its length.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ArModel, SpikeTrain, Trace};

fn check_train(train: &SpikeTrain, model: &ArModel) -> Result<()> {
    if train.decimation() != model.decimation || train.amplitude() != model.amplitude {
        return Err(Error::ModelMismatch(format!(
            "train has D = {}, A = {}; model has D = {}, A = {}",
            train.decimation(),
            train.amplitude(),
            model.decimation,
            model.amplitude
        )));
    }
    Ok(())
}

/// A vector `v ≠ x` with `H_D·v = H_D·x` and `‖v‖₀ ≤ ‖x‖₀`.
///
/// Block 0 is copied. A block with one spike moves it to the last slot as
/// `c`, or, when it already sits there, to the slot before as `c/α`; a block
/// with two or more spikes collapses to `c` in the last slot. Fails when no
/// block after the first has a spike, or when `D = 1`.
pub fn sparse_alternative(train: &SpikeTrain, model: &ArModel) -> Result<Vec<f64>> {
    check_train(train, model)?;
    let d = model.decimation;
    if d == 1 {
        return Err(Error::NotApplicable(
            "with D = 1 the measurements determine the train".into(),
        ));
    }
    if train.blocks().skip(1).all(|b| b.iter().all(|&v| v == 0.0)) {
        return Err(Error::NotApplicable(
            "every block after the first is empty".into(),
        ));
    }
    let h = model.block_weights();
    let mut v = Vec::with_capacity(train.len());
    v.push(train.block(0)[0]);
    for block in train.blocks().skip(1) {
        let spikes = block.iter().filter(|&&x| x != 0.0).count();
        let c: f64 = block.iter().zip(&h).map(|(x, w)| x * w).sum();
        let mut out = vec![0.0; d];
        match spikes {
            0 => {}
            1 if block[d - 1] == 0.0 => out[d - 1] = c,
            1 => out[d - 2] = c / model.alpha,
            _ => out[d - 1] = c,
        }
        v.extend(out);
    }
    Ok(v)
}

/// Relative slack for values on the edge of the feasible range.
const FEAS_REL_TOL: f64 = 1e-12;

/// The ℓ1-minimal `x ∈ [0, A]^L` with `H_D·x = c`, in closed form.
///
/// Per block, let `k` be the largest count with `μ_k = A(1 + α + … + α^{k−1}) ≤ c`;
/// the last `k` slots get `A` and slot `D − k` gets `(c − μ_k)/α^k`.
pub fn box_l1_noiseless(c: &[f64], model: &ArModel) -> Result<Vec<f64>> {
    if c.is_empty() {
        return Err(Error::Shape("empty c-sequence".into()));
    }
    let a = model.amplitude;
    let d = model.decimation;
    let alpha = model.alpha;
    let block_max = a * model.block_weights().iter().sum::<f64>();
    let mut x = Vec::with_capacity(model.train_len(c.len()));
    x.push(clamp_feasible(c[0], a, 0)?);
    for (n, &cn) in c.iter().enumerate().skip(1) {
        let cn = clamp_feasible(cn, block_max, n)?;
        let mut block = vec![0.0; d];
        let mut mu = 0.0;
        let mut k = 0;
        while k < d && mu + a * alpha.powi(k as i32) <= cn {
            mu += a * alpha.powi(k as i32);
            k += 1;
        }
        for slot in block.iter_mut().skip(d - k) {
            *slot = a;
        }
        if k < d {
            block[d - 1 - k] = (cn - mu) / alpha.powi(k as i32);
        }
        x.extend(block);
    }
    Ok(x)
}

fn clamp_feasible(v: f64, max: f64, block: usize) -> Result<f64> {
    let slack = FEAS_REL_TOL * (1.0 + max);
    if v < -slack || v > max + slack || v.is_nan() {
        return Err(Error::Infeasible {
            block,
            value: v,
            max,
        });
    }
    Ok(v.clamp(0.0, max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative tolerance on constraint violation and duality gap.
    pub tol: f64,
    /// Iterations between convergence and restart checks.
    pub check_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200_000,
            tol: 1e-10,
            check_every: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `max(0, ‖y − Kx‖ − ε)`.
    pub feasibility: f64,
    pub gap: f64,
}

/// `K = S_D·G_α` applied in O(L).
struct Operator {
    alpha: f64,
    d: usize,
    l: usize,
    m: usize,
}

impl Operator {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut state = 0.0;
        for (j, &v) in x.iter().enumerate() {
            state = self.alpha * state + v;
            if j % self.d == 0 {
                out[j / self.d] = state;
            }
        }
    }

    fn adjoint(&self, z: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for j in (0..self.l).rev() {
            acc *= self.alpha;
            if j % self.d == 0 {
                acc += z[j / self.d];
            }
            out[j] = acc;
        }
    }

    fn norm(&self) -> f64 {
        let mut x = vec![1.0 / (self.l as f64).sqrt(); self.l];
        let mut y = vec![0.0; self.m];
        let mut est = 0.0;
        for _ in 0..200 {
            self.apply(&x, &mut y);
            self.adjoint(&y, &mut x);
            let n = norm2(&x);
            if n == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= n);
            if (n - est).abs() <= 1e-9 * n {
                est = n;
                break;
            }
            est = n;
        }
        est.sqrt()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Problem<'a> {
    op: Operator,
    y: &'a [f64],
    eps: f64,
    amp: f64,
    y_norm: f64,
}

impl Problem<'_> {
    /// Scaled constraint violation and duality gap at `(x, z)`.
    fn errors(&self, x: &[f64], z: &[f64], kx: &mut [f64], ktz: &mut [f64]) -> (f64, f64) {
        self.op.apply(x, kx);
        let resid = kx
            .iter()
            .zip(self.y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let feas = (resid - self.eps).max(0.0);
        self.op.adjoint(z, ktz);
        let primal: f64 = x.iter().sum();
        let dual = -dot(z, self.y)
            - self.eps * norm2(z)
            - self.amp * ktz.iter().map(|&w| (-w - 1.0).max(0.0)).sum::<f64>();
        let gap = (primal - dual).abs() / (1.0 + primal.abs() + dual.abs());
        (feas / (1.0 + self.y_norm), gap)
    }
}

/// Box-constrained ℓ1 minimization against noisy measurements:
/// `min ‖x‖₁` subject to `‖z − S_D·G_α·x‖₂ ≤ ε` and `0 ≤ x ≤ A`.
///
/// Solved with a primal-dual hybrid gradient iteration (restarted to the
/// running average when that has the smaller error, with primal-weight
/// balancing at restarts); the box is enforced exactly at every step.
pub fn box_l1_noisy(trace: &Trace, epsilon: f64, opts: &SolverOptions) -> Result<L1Solution> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let model = trace.model;
    let m = trace.len();
    let l = model.train_len(m);
    let op = Operator {
        alpha: model.alpha,
        d: model.decimation,
        l,
        m,
    };
    let knorm = op.norm() * 1.01;
    let y = &trace.values[..];
    let prob = Problem {
        op,
        y,
        eps: epsilon,
        amp: model.amplitude,
        y_norm: norm2(y),
    };
    let a = model.amplitude;

    let mut x = vec![0.0; l];
    let mut z = vec![0.0; m];
    let mut x_avg = vec![0.0; l];
    let mut z_avg = vec![0.0; m];
    let mut avg_len = 0usize;
    let mut x_anchor = x.clone();
    let mut z_anchor = z.clone();
    let mut ktz = vec![0.0; l];
    let mut kxbar = vec![0.0; m];
    let mut x_new = vec![0.0; l];
    let mut scratch_m = vec![0.0; m];
    let mut scratch_l = vec![0.0; l];

    let eta = 0.99 / knorm.max(f64::MIN_POSITIVE);
    let mut weight = if prob.y_norm > 0.0 {
        (l as f64).sqrt() / prob.y_norm
    } else {
        1.0
    };
    let mut anchor_err = f64::INFINITY;
    let mut last = (f64::INFINITY, f64::INFINITY);

    for iter in 1..=opts.max_iter {
        let tau = eta / weight;
        let sigma = eta * weight;
        prob.op.adjoint(&z, &mut ktz);
        for j in 0..l {
            x_new[j] = (x[j] - tau * (ktz[j] + 1.0)).clamp(0.0, a);
        }
        for j in 0..l {
            scratch_l[j] = 2.0 * x_new[j] - x[j];
        }
        prob.op.apply(&scratch_l, &mut kxbar);
        for i in 0..m {
            scratch_m[i] = z[i] + sigma * (kxbar[i] - y[i]);
        }
        let n = norm2(&scratch_m);
        let shrink = if n > 0.0 {
            (1.0 - sigma * epsilon / n).max(0.0)
        } else {
            0.0
        };
        for i in 0..m {
            z[i] = scratch_m[i] * shrink;
        }
        std::mem::swap(&mut x, &mut x_new);

        avg_len += 1;
        let w = 1.0 / avg_len as f64;
        for j in 0..l {
            x_avg[j] += w * (x[j] - x_avg[j]);
        }
        for i in 0..m {
            z_avg[i] += w * (z[i] - z_avg[i]);
        }

        if iter % opts.check_every != 0 && iter != opts.max_iter {
            continue;
        }
        let cur = prob.errors(&x, &z, &mut scratch_m, &mut scratch_l);
        last = cur;
        if cur.0 <= opts.tol && cur.1 <= opts.tol {
            return Ok(L1Solution {
                x,
                iterations: iter,
                feasibility: cur.0,
                gap: cur.1,
            });
        }
        let avg = prob.errors(&x_avg, &z_avg, &mut scratch_m, &mut scratch_l);
        if avg.0 <= opts.tol && avg.1 <= opts.tol {
            return Ok(L1Solution {
                x: x_avg,
                iterations: iter,
                feasibility: avg.0,
                gap: avg.1,
            });
        }
        let cur_err = cur.0.hypot(cur.1);
        let avg_err = avg.0.hypot(avg.1);
        let (cand_err, use_avg) = if avg_err < cur_err {
            (avg_err, true)
        } else {
            (cur_err, false)
        };
        if cand_err <= 0.2 * anchor_err || avg_len >= 64 * opts.check_every {
            if use_avg {
                x.copy_from_slice(&x_avg);
                z.copy_from_slice(&z_avg);
            }
            let dx = x
                .iter()
                .zip(&x_anchor)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            let dz = z
                .iter()
                .zip(&z_anchor)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            if dx > 1e-12 && dz > 1e-12 {
                weight = (0.5 * (dz / dx).ln() + 0.5 * weight.ln()).exp();
            }
            x_anchor.copy_from_slice(&x);
            z_anchor.copy_from_slice(&z);
            x_avg.copy_from_slice(&x);
            z_avg.copy_from_slice(&z);
            avg_len = 0;
            anchor_err = cand_err;
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        feasibility: last.0,
        gap: last.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirFilter {
    taps: Vec<f64>,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Parameter(
                "an FIR filter needs at least one tap".into(),
            ));
        }
        Ok(Self { taps })
    }

    /// `[1, α, …, α^{r−1}]`, the AR(1) response cut after `r` taps.
    pub fn truncated_ar(alpha: f64, r: usize) -> Result<Self> {
        Self::new((0..r).map(|k| alpha.powi(k as i32)).collect())
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `z[n] = Σ_i u[r−1−i]·x[n+i]` with zeros past the end.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let r = self.taps.len();
        (0..x.len())
            .map(|n| {
                (0..r)
                    .filter(|i| n + i < x.len())
                    .map(|i| self.taps[r - 1 - i] * x[n + i])
                    .sum()
            })
            .collect()
    }

    /// Every D-th filter output starting at 0.
    pub fn decimated(&self, x: &[f64], decimation: usize) -> Vec<f64> {
        self.filter(x)
            .into_iter()
            .step_by(decimation.max(1))
            .collect()
    }
}

/// Two different binary trains of length `len` whose D-fold decimated FIR
/// outputs coincide: one is empty, the other has a spike at every position
/// that no retained output sample reads.
pub fn fir_collision_pair(
    filter: &FirFilter,
    decimation: usize,
    len: usize,
    amplitude: f64,
) -> Result<(SpikeTrain, SpikeTrain)> {
    let r = filter.len();
    if decimation <= r {
        return Err(Error::NotApplicable(format!(
            "D = {decimation} does not exceed the filter length {r}"
        )));
    }
    if len <= decimation {
        return Err(Error::Shape(format!(
            "length {len} leaves no unobserved samples at D = {decimation}"
        )));
    }
    let mut bits = vec![false; len];
    for (i, b) in bits.iter_mut().enumerate() {
        *b = i % decimation >= r;
    }
    let x1 = SpikeTrain::from_bits(&bits, amplitude, decimation)?;
    let x0 = SpikeTrain::new(vec![0.0; len], amplitude, decimation)?;
    Ok((x0, x1))
}
