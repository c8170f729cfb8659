//! Noise tolerances and error probabilities of nearest-neighbor decoding.
//!
//! With `z[n] = y[n] + w[n]`, `w ~ N(0, σ²)` iid, the preprocessed noise is
//! `w[n] − α^D·w[n−1]` with variance `σ₁² = (1 + α^{2D})·σ²`.

use serde::Serialize;

use crate::codebook::{is_count_separable, Codebook};
use crate::error::{Error, Result};

/// Largest D for the exhaustive per-block error sum.
pub const BLOCK_PROB_GUARD: usize = 20;

/// Tail of the standard normal, `Q(x) = ½·erfc(x/√2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseBudget {
    /// `Δθ_min/4`: below this every pattern is recovered.
    pub exact_recovery_bound: f64,
    /// `Δ^c_min/4`: below this every count is recovered. Only present when
    /// the counts cluster.
    pub count_recovery_bound: Option<f64>,
    pub sigma1_sq: f64,
}

fn sigma1_sq(cb: &Codebook, sigma: f64) -> f64 {
    let ad = cb.model().alpha_d();
    (1.0 + ad * ad) * sigma * sigma
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("sigma must be >= 0, got {sigma}")))
    }
}

pub fn noise_budget(cb: &Codebook, sigma: f64) -> Result<NoiseBudget> {
    check_sigma(sigma)?;
    let gap = cb.min_gap()?;
    let model = cb.model();
    let count_recovery_bound = if is_count_separable(model.alpha, model.decimation)? {
        cb.cluster_stats().cluster_min_gap.map(|g| g / 4.0)
    } else {
        None
    };
    Ok(NoiseBudget {
        exact_recovery_bound: gap / 4.0,
        count_recovery_bound,
        sigma1_sq: sigma1_sq(cb, sigma),
    })
}

/// `Δθ_min²/σ₁² ≥ 8·ln(2M/δ)`: enough SNR for whole-train recovery with
/// probability at least `1 − δ`, i.e. [`error_bound`] is at most `δ`.
pub fn snr_condition(cb: &Codebook, sigma: f64, m: usize, delta: f64) -> Result<bool> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if m == 0 {
        return Err(Error::Parameter("M must be at least 1".into()));
    }
    let gap = cb.min_gap()?;
    Ok(gap * gap / sigma1_sq(cb, sigma) >= 8.0 * (2.0 * m as f64 / delta).ln())
}

/// Union bound on the probability that any of `m` blocks is decoded wrongly,
/// `min(1, 2M·exp(−Δθ_min²/(8σ₁²)))`.
///
/// Each block fails with probability at most `2·Q(Δθ_min/(2σ₁))`, and
/// `Q(x) ≤ exp(−x²/2)`.
pub fn error_bound(cb: &Codebook, sigma: f64, m: usize) -> Result<f64> {
    check_sigma(sigma)?;
    let gap = cb.min_gap()?;
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let raw = 2.0 * m as f64 * (-gap * gap / (8.0 * sigma1_sq(cb, sigma))).exp();
    Ok(raw.min(1.0))
}

/// Exact probability that one length-D block with iid `A·Bern(p)` spikes is
/// decoded wrongly by nearest-neighbor search.
///
/// An entry is missed when the noise carries `c` past the midpoint to a
/// neighbor: `Q(gap_below/(2σ₁)) + Q(gap_above/(2σ₁))`, with one term at the
/// two ends of the list.
pub fn block_error_prob(cb: &Codebook, sigma: f64, p: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("p must lie in [0, 1], got {p}")));
    }
    let d = cb.decimation();
    if d > BLOCK_PROB_GUARD {
        return Err(Error::Size {
            what: "decimation D for the exact error sum",
            value: d,
            limit: BLOCK_PROB_GUARD,
        });
    }
    cb.require_collision_free()?;
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let s1 = sigma1_sq(cb, sigma).sqrt();
    let th = cb.thetas();
    let last = th.len() - 1;
    let mut total = 0.0;
    for j in 0..=last {
        let psi = cb.count(j) as i32;
        let weight = p.powi(psi) * (1.0 - p).powi(d as i32 - psi);
        if weight == 0.0 {
            continue;
        }
        let mut miss = 0.0;
        if j > 0 {
            miss += q_function((th[j] - th[j - 1]) / (2.0 * s1));
        }
        if j < last {
            miss += q_function((th[j + 1] - th[j]) / (2.0 * s1));
        }
        total += weight * miss;
    }
    Ok(total)
}
