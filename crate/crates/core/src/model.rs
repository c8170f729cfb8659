//! AR(1) measurement model: filtering, decimation, synthetic data.
//!
//! A binary train `x_hi[n] ∈ {0, A}` drives `y_hi[n] = α·y_hi[n-1] + x_hi[n]`
//! (rest initial condition), and only every D-th output is observed:
//! `y_lo[n] = y_hi[D·n]`. The train has `L = (M-1)·D + 1` samples for `M`
//! low-rate measurements; the first block is the scalar `x_hi[0]`, the rest
//! are consecutive blocks of length D.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, TrialRng};

/// Largest `L` for which the dense system matrices are built.
pub const DENSE_GUARD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub alpha: f64,
    pub amplitude: f64,
    pub decimation: usize,
}

impl ArModel {
    pub fn new(alpha: f64, amplitude: f64, decimation: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::Parameter(format!(
                "amplitude must be positive, got {amplitude}"
            )));
        }
        if decimation == 0 {
            return Err(Error::Parameter("decimation must be at least 1".into()));
        }
        Ok(Self {
            alpha,
            amplitude,
            decimation,
        })
    }

    /// `α^D`, the per-measurement decay of the low-rate sequence.
    pub fn alpha_d(&self) -> f64 {
        self.alpha.powi(self.decimation as i32)
    }

    /// High-rate length covered by `m` low-rate samples.
    pub fn train_len(&self, m: usize) -> usize {
        if m == 0 {
            0
        } else {
            (m - 1) * self.decimation + 1
        }
    }

    /// Number of low-rate samples for a high-rate length `l ≥ 1`
    /// (largest `M` with `(M-1)·D + 1 ≤ l`).
    pub fn samples_for_len(&self, l: usize) -> usize {
        if l == 0 {
            0
        } else {
            (l - 1) / self.decimation + 1
        }
    }

    /// The per-block weights `h_α = [α^{D-1}, …, α, 1]`.
    pub fn block_weights(&self) -> Vec<f64> {
        let d = self.decimation;
        (0..d)
            .map(|k| self.alpha.powi((d - 1 - k) as i32))
            .collect()
    }

    pub(crate) fn same_system(&self, other: &ArModel) -> bool {
        self.alpha.to_bits() == other.alpha.to_bits()
            && self.amplitude.to_bits() == other.amplitude.to_bits()
            && self.decimation == other.decimation
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// A binary high-rate spike train with values in `{0, A}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    values: Vec<f64>,
    amplitude: f64,
    decimation: usize,
}

impl SpikeTrain {
    pub fn new(values: Vec<f64>, amplitude: f64, decimation: usize) -> Result<Self> {
        if decimation == 0 {
            return Err(Error::Parameter("decimation must be at least 1".into()));
        }
        if values.is_empty() || !(values.len() - 1).is_multiple_of(decimation) {
            return Err(Error::Shape(format!(
                "train length {} is not of the form (M-1)·{decimation}+1",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| v != 0.0 && v != amplitude)
        {
            return Err(Error::Parameter(format!(
                "entry {i} = {v} is neither 0 nor the amplitude {amplitude}"
            )));
        }
        Ok(Self {
            values,
            amplitude,
            decimation,
        })
    }

    /// Builds a train from spike flags.
    pub fn from_bits(bits: &[bool], amplitude: f64, decimation: usize) -> Result<Self> {
        let values = bits
            .iter()
            .map(|&b| if b { amplitude } else { 0.0 })
            .collect();
        Self::new(values, amplitude, decimation)
    }

    pub fn zeros(m: usize, amplitude: f64, decimation: usize) -> Result<Self> {
        let len = if m == 0 { 0 } else { (m - 1) * decimation + 1 };
        Self::new(vec![0.0; len], amplitude, decimation)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn decimation(&self) -> usize {
        self.decimation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of blocks, which equals the number of low-rate samples `M`.
    pub fn num_blocks(&self) -> usize {
        (self.values.len() - 1) / self.decimation + 1
    }

    /// Block `n` of the partition: `[x[0]]` for `n = 0`, otherwise
    /// `x[(n-1)·D + 1 ..= n·D]`.
    pub fn block(&self, n: usize) -> &[f64] {
        if n == 0 {
            &self.values[..1]
        } else {
            let d = self.decimation;
            &self.values[(n - 1) * d + 1..n * d + 1]
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.num_blocks()).map(move |n| self.block(n))
    }

    pub fn spike_indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn spike_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }
}

/// A low-rate measurement sequence together with the model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub values: Vec<f64>,
    pub model: ArModel,
    pub noisy: bool,
    pub noise_sigma: f64,
}

impl Trace {
    pub fn clean(values: Vec<f64>, model: ArModel) -> Result<Self> {
        Self::with_noise(values, model, 0.0)
    }

    pub fn with_noise(values: Vec<f64>, model: ArModel, noise_sigma: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("a trace needs at least one sample".into()));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise sigma must be non-negative, got {noise_sigma}"
            )));
        }
        Ok(Self {
            values,
            model,
            noisy: noise_sigma > 0.0,
            noise_sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Runs the AR(1) recursion from rest over the whole input.
pub fn ar_filter(x: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let mut state = 0.0;
    Ok(x.iter()
        .map(|&v| {
            state = alpha * state + v;
            state
        })
        .collect())
}

/// Keeps `y_hi[D·n]` for every `n` with `D·n < len`.
pub fn decimate(y_hi: &[f64], decimation: usize) -> Result<Vec<f64>> {
    if decimation == 0 {
        return Err(Error::Parameter("decimation must be at least 1".into()));
    }
    if y_hi.is_empty() {
        return Err(Error::Shape("cannot decimate an empty sequence".into()));
    }
    Ok(y_hi.iter().step_by(decimation).copied().collect())
}

/// Like [`decimate`] but for an explicit number of samples `m`.
pub fn decimate_to(y_hi: &[f64], decimation: usize, m: usize) -> Result<Vec<f64>> {
    if decimation == 0 {
        return Err(Error::Parameter("decimation must be at least 1".into()));
    }
    let needed = if m == 0 { 0 } else { (m - 1) * decimation + 1 };
    if y_hi.len() < needed {
        return Err(Error::Shape(format!(
            "{m} samples at D = {decimation} need {needed} inputs, got {}",
            y_hi.len()
        )));
    }
    Ok((0..m).map(|n| y_hi[n * decimation]).collect())
}

/// Clean low-rate measurements of a train.
pub fn measure(train: &SpikeTrain, alpha: f64) -> Result<Vec<f64>> {
    let y_hi = ar_filter(train.values(), alpha)?;
    decimate(&y_hi, train.decimation())
}

/// Synthetic train plus its (possibly noisy) decimated output.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub train: SpikeTrain,
    pub trace: Trace,
    /// The additive noise `w[n]` that was injected.
    pub noise: Vec<f64>,
}

/// Draws `x_hi ~ iid A·Bern(p)` of length `(M-1)·D + 1` and returns
/// `z_lo = decimate(ar_filter(x_hi)) + w` with `w ~ iid N(0, σ²)`.
pub fn simulate(model: &ArModel, m: usize, p: f64, sigma: f64, seed: u64) -> Result<Simulation> {
    let mut rng = rng_from_seed(seed);
    simulate_with_rng(model, m, p, sigma, &mut rng)
}

pub fn simulate_with_rng(
    model: &ArModel,
    m: usize,
    p: f64,
    sigma: f64,
    rng: &mut TrialRng,
) -> Result<Simulation> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "spike probability must lie in [0, 1], got {p}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "noise sigma must be non-negative, got {sigma}"
        )));
    }
    if m == 0 {
        return Err(Error::Parameter("need at least one measurement".into()));
    }
    let len = model.train_len(m);
    let values: Vec<f64> = (0..len)
        .map(|_| {
            if rng.random_bool(p) {
                model.amplitude
            } else {
                0.0
            }
        })
        .collect();
    let train = SpikeTrain::new(values, model.amplitude, model.decimation)?;
    let mut z = measure(&train, model.alpha)?;
    let noise: Vec<f64> = if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Parameter(format!("noise distribution: {e}")))?;
        (0..m).map(|_| normal.sample(rng)).collect()
    } else {
        vec![0.0; m]
    };
    for (zv, w) in z.iter_mut().zip(&noise) {
        *zv += w;
    }
    let trace = Trace::with_noise(z, *model, sigma)?;
    Ok(Simulation {
        train,
        trace,
        noise,
    })
}

/// Dense forms of the measurement operators, for checking the streaming code.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    /// `L×L` lower-triangular Toeplitz matrix with `[G]_{ij} = α^{i-j}`.
    pub g_alpha: Array2<f64>,
    /// `M×L` row selector picking samples `0, D, 2D, …`.
    pub s_d: Array2<f64>,
    /// `M×L` block-diagonal map from the train to the c-sequence.
    pub h_d: Array2<f64>,
}

pub fn build_system_matrices(model: &ArModel, m: usize) -> Result<SystemMatrices> {
    if m == 0 {
        return Err(Error::Parameter("need at least one measurement".into()));
    }
    let l = model.train_len(m);
    if l > DENSE_GUARD {
        return Err(Error::Size {
            what: "dense system size L",
            value: l,
            limit: DENSE_GUARD,
        });
    }
    let d = model.decimation;
    let g_alpha = Array2::from_shape_fn((l, l), |(i, j)| {
        if i >= j {
            model.alpha.powi((i - j) as i32)
        } else {
            0.0
        }
    });
    let s_d = Array2::from_shape_fn((m, l), |(i, j)| if j == i * d { 1.0 } else { 0.0 });
    let h = model.block_weights();
    let h_d = Array2::from_shape_fn((m, l), |(i, j)| {
        if i == 0 {
            if j == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            let start = (i - 1) * d + 1;
            if (start..start + d).contains(&j) {
                h[j - start]
            } else {
                0.0
            }
        }
    });
    Ok(SystemMatrices { g_alpha, s_d, h_d })
}
