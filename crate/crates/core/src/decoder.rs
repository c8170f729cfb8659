//! Block-wise decoding of low-rate measurements.
//!
//! The c-sequence `c[n] = y[n] − α^D·y[n−1]` splits the measurements into
//! independent scalar equations `c[n] = h_α·x^(n)`, one per block, and each is
//! solved by a binary search over the sorted codebook.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{pattern_of, Codebook};
use crate::error::{Error, Result};
use crate::model::{SpikeTrain, Trace};

/// Relative tolerance for exact-mode matches.
pub const EXACT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Values must hit a codebook entry; anything else is an error.
    Exact,
    /// Closest codebook entry.
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub train: SpikeTrain,
    /// Spikes per block; block 0 holds at most one.
    pub counts: Vec<usize>,
    /// `|c[n] − θ|` for the entry chosen in each block.
    pub residuals: Vec<f64>,
    pub amplitude_used: f64,
}

/// `c[0] = v[0]`, `c[n] = v[n] − α^D·v[n−1]`.
pub fn c_sequence(values: &[f64], alpha_d: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(values.len());
    let mut prev = 0.0;
    for &v in values {
        c.push(v - alpha_d * prev);
        prev = v;
    }
    c
}

pub fn preprocess(trace: &Trace) -> Vec<f64> {
    c_sequence(&trace.values, trace.model.alpha_d())
}

/// Bracketing binary search; returns the sorted position of the entry
/// closest to `c` (lower one on an exact tie) and the number of list probes.
pub fn nearest_position_probed(thetas: &[f64], c: f64) -> (usize, usize) {
    assert!(!thetas.is_empty(), "empty codebook");
    if thetas.len() == 1 {
        return (0, 1);
    }
    let mut l = 0;
    let mut u = thetas.len() - 1;
    let mut probes = 0;
    while u - l > 1 {
        let m = l + (u - l) / 2;
        probes += 1;
        if thetas[m] > c {
            u = m;
        } else {
            l = m;
        }
    }
    probes += 1;
    let dl = c - thetas[l];
    let du = thetas[u] - c;
    if dl * dl <= du * du {
        (l, probes)
    } else {
        (u, probes)
    }
}

pub fn nearest_position(thetas: &[f64], c: f64) -> usize {
    nearest_position_probed(thetas, c).0
}

fn exact_position(cb: &Codebook, c: f64) -> Option<usize> {
    let j = nearest_position(cb.thetas(), c);
    let tol = EXACT_REL_TOL * (1.0 + cb.theta_max());
    ((c - cb.thetas()[j]).abs() <= tol).then_some(j)
}

/// Algorithm 1: the block whose codebook value equals `c`.
pub fn decode_block_exact(c: f64, cb: &Codebook) -> Result<Vec<f64>> {
    cb.require_collision_free()?;
    exact_position(cb, c)
        .map(|j| cb.pattern(j))
        .ok_or(Error::NotInCodebook { block: 0, value: c })
}

/// Algorithm 2: the block whose codebook value is closest to `c`, with the
/// residual `|c − θ|`.
pub fn decode_block_nn(c: f64, cb: &Codebook) -> Result<(Vec<f64>, f64)> {
    cb.require_collision_free()?;
    let j = nearest_position(cb.thetas(), c);
    Ok((cb.pattern(j), (c - cb.thetas()[j]).abs()))
}

/// Scalar first block: either 0 or A.
fn decode_first(c0: f64, amplitude: f64, mode: DecodeMode, tol: f64) -> Result<bool> {
    match mode {
        DecodeMode::Nearest => Ok((c0 - amplitude).abs() < c0.abs()),
        DecodeMode::Exact => {
            if c0.abs() <= tol {
                Ok(false)
            } else if (c0 - amplitude).abs() <= tol {
                Ok(true)
            } else {
                Err(Error::NotInCodebook {
                    block: 0,
                    value: c0,
                })
            }
        }
    }
}

fn decode_rest(c: f64, n: usize, cb: &Codebook, mode: DecodeMode) -> Result<usize> {
    match mode {
        DecodeMode::Nearest => Ok(nearest_position(cb.thetas(), c)),
        DecodeMode::Exact => {
            exact_position(cb, c).ok_or(Error::NotInCodebook { block: n, value: c })
        }
    }
}

pub fn decode_train(trace: &Trace, cb: &Codebook, mode: DecodeMode) -> Result<DecodeReport> {
    check_model(trace, cb)?;
    decode_c_sequence(&preprocess(trace), cb, mode, false)
}

/// Same as [`decode_train`] with blocks decoded on the rayon pool.
pub fn decode_train_par(trace: &Trace, cb: &Codebook, mode: DecodeMode) -> Result<DecodeReport> {
    check_model(trace, cb)?;
    decode_c_sequence(&preprocess(trace), cb, mode, true)
}

fn check_model(trace: &Trace, cb: &Codebook) -> Result<()> {
    if trace.model.same_system(cb.model()) {
        Ok(())
    } else {
        Err(Error::ModelMismatch(format!(
            "trace model {:?} differs from codebook model {:?}",
            trace.model,
            cb.model()
        )))
    }
}

/// Decodes an already preprocessed sequence (block 0 first).
pub fn decode_c_sequence(
    c: &[f64],
    cb: &Codebook,
    mode: DecodeMode,
    parallel: bool,
) -> Result<DecodeReport> {
    if c.is_empty() {
        return Err(Error::Shape("nothing to decode".into()));
    }
    cb.require_collision_free()?;
    let model = cb.model();
    let a = model.amplitude;
    let d = model.decimation;
    let tol = EXACT_REL_TOL * (1.0 + cb.theta_max());

    let first = decode_first(c[0], a, mode, tol)?;
    let rest = &c[1..];
    let positions: Vec<usize> = if parallel {
        rest.par_iter()
            .enumerate()
            .map(|(i, &v)| decode_rest(v, i + 1, cb, mode))
            .collect::<Result<_>>()?
    } else {
        rest.iter()
            .enumerate()
            .map(|(i, &v)| decode_rest(v, i + 1, cb, mode))
            .collect::<Result<_>>()?
    };

    let x0 = if first { a } else { 0.0 };
    let mut values = Vec::with_capacity(1 + rest.len() * d);
    values.push(x0);
    let mut counts = Vec::with_capacity(c.len());
    counts.push(usize::from(first));
    let mut residuals = Vec::with_capacity(c.len());
    residuals.push((c[0] - x0).abs());
    for (&j, &v) in positions.iter().zip(rest) {
        let k = cb.perm()[j];
        values.extend(pattern_of(k, d, a));
        counts.push(k.count_ones() as usize);
        residuals.push((v - cb.thetas()[j]).abs());
    }
    Ok(DecodeReport {
        train: SpikeTrain::new(values, a, d)?,
        counts,
        residuals,
        amplitude_used: a,
    })
}

/// Spikes per block of a train.
pub fn estimate_counts(train: &SpikeTrain) -> Vec<usize> {
    train
        .blocks()
        .map(|b| b.iter().filter(|&&v| v != 0.0).count())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeEstimate {
    pub amplitude: f64,
    pub pivot: usize,
    /// Every candidate that passed the consistency test, ascending.
    pub survivors: Vec<f64>,
}

/// Amplitude from a c-sequence when `α` and `D` are known.
///
/// Each nonzero unit-amplitude codebook value `θ_k` proposes
/// `A_k = c[pivot]/θ_k`; a proposal survives when every `c[n]` lies within
/// `tol` of `A_k·Θ` (block 0 of `{0, A_k}`). Among survivors the one with the
/// smallest summed distance wins. `pivot` defaults to the largest `|c[n]|`.
pub fn estimate_amplitude(
    c: &[f64],
    alpha: f64,
    decimation: usize,
    pivot: Option<usize>,
    tol: f64,
) -> Result<AmplitudeEstimate> {
    if c.is_empty() {
        return Err(Error::Shape("no measurements".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::Parameter(format!(
            "tolerance must be >= 0, got {tol}"
        )));
    }
    let unit = Codebook::build(&crate::model::ArModel::new(alpha, 1.0, decimation)?)?;
    let pivot = match pivot {
        Some(p) if p >= c.len() => {
            return Err(Error::Parameter(format!(
                "pivot {p} out of range for {} measurements",
                c.len()
            )))
        }
        Some(p) => p,
        None => c.iter().enumerate().fold(
            0,
            |best, (i, v)| if v.abs() > c[best].abs() { i } else { best },
        ),
    };
    let floor = 3.0 * tol;
    let cp = c[pivot];
    if !(cp.abs() > floor) || cp <= 0.0 {
        return Err(Error::Pivot {
            pivot,
            value: cp,
            floor,
        });
    }
    // Float round-off slack so noiseless data passes at tol = 0.
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol_eff = tol + EXACT_REL_TOL * (1.0 + scale);

    let mut candidates: Vec<f64> = if pivot == 0 {
        vec![cp]
    } else {
        unit.thetas()
            .iter()
            .filter(|&&t| t > 0.0)
            .map(|&t| cp / t)
            .collect()
    };
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut scored: Vec<(f64, f64)> = Vec::new();
    for &ak in &candidates {
        if let Some(total) = consistency(c, ak, unit.thetas(), tol_eff) {
            scored.push((ak, total));
        }
    }
    let best = scored
        .iter()
        .fold(None::<(f64, f64)>, |best, &(a, r)| match best {
            Some((_, br)) if br <= r => best,
            _ => Some((a, r)),
        })
        .ok_or_else(|| {
            Error::EstimationFailed(format!(
                "none of {} candidates is consistent within {tol}",
                candidates.len()
            ))
        })?;
    Ok(AmplitudeEstimate {
        amplitude: best.0,
        pivot,
        survivors: scored.into_iter().map(|(a, _)| a).collect(),
    })
}

/// Summed distance of `c` to the grid `a·Θ`, or `None` if some value is
/// farther than `tol`.
fn consistency(c: &[f64], a: f64, thetas: &[f64], tol: f64) -> Option<f64> {
    let mut total = 0.0;
    for (n, &v) in c.iter().enumerate() {
        let dist = if n == 0 {
            v.abs().min((v - a).abs())
        } else {
            let j = nearest_position(thetas, v / a);
            (v - a * thetas[j]).abs()
        };
        if dist > tol {
            return None;
        }
        total += dist;
    }
    Some(total)
}
