//! The sorted codebook: every value `h_α·v` a length-D block can produce,
//! sorted ascending, with the block pattern that produced each entry.
//!
//! Codeword `k` is the D-bit pattern of `k` with the most significant bit in
//! the earliest slot, scaled by the amplitude. Its value is
//! `A·Σ_j bit_j(k)·α^j` where `bit_0` is the least significant bit (the last
//! slot, weight 1).

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::slice::ParallelSliceMut;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_alpha, ArModel};

/// Default cap on D when building a codebook (two arrays of 2^D words).
pub const DEFAULT_MAX_DECIMATION: usize = 24;

/// Adjacent entries closer than this fraction of `1 + θ_max` count as collisions.
pub const COLLISION_REL_TOL: f64 = 1e-10;

const MAGIC: &[u8; 4] = b"BSRC";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    model: ArModel,
    thetas: Vec<f64>,
    perm: Vec<u64>,
    min_gap: f64,
    collision_free: bool,
}

/// Materializes codeword `k` as a block of length D.
pub fn codeword(k: u64, model: &ArModel) -> Result<Vec<f64>> {
    let d = model.decimation;
    if d < 64 && k >> d != 0 {
        return Err(Error::Index {
            index: k,
            decimation: d,
        });
    }
    Ok(pattern_of(k, d, model.amplitude))
}

pub(crate) fn pattern_of(k: u64, d: usize, amplitude: f64) -> Vec<f64> {
    (0..d)
        .map(|slot| {
            if (k >> (d - 1 - slot)) & 1 == 1 {
                amplitude
            } else {
                0.0
            }
        })
        .collect()
}

/// Index of a block pattern (inverse of [`codeword`]); nonzero entries are spikes.
pub fn codeword_index(block: &[f64]) -> u64 {
    block
        .iter()
        .fold(0u64, |acc, &v| (acc << 1) | u64::from(v != 0.0))
}

/// Unsorted values `θ_k` for `k = 0..2^D`, via `θ_k = A·b_0(k) + α·θ_{k>>1}`.
fn unsorted_thetas(model: &ArModel) -> Vec<f64> {
    let size = 1usize << model.decimation;
    let mut th = vec![0.0; size];
    for k in 1..size {
        let bit = if k & 1 == 1 { model.amplitude } else { 0.0 };
        th[k] = bit + model.alpha * th[k >> 1];
    }
    th
}

impl Codebook {
    pub fn build(model: &ArModel) -> Result<Self> {
        Self::build_with_guard(model, DEFAULT_MAX_DECIMATION)
    }

    pub fn build_with_guard(model: &ArModel, max_decimation: usize) -> Result<Self> {
        let model = ArModel::new(model.alpha, model.amplitude, model.decimation)?;
        if model.decimation > max_decimation.min(62) {
            return Err(Error::Size {
                what: "codebook decimation D",
                value: model.decimation,
                limit: max_decimation.min(62),
            });
        }
        let raw = unsorted_thetas(&model);
        let mut perm: Vec<u64> = (0..raw.len() as u64).collect();
        // Stable, so equal values keep ascending index order.
        perm.par_sort_by(|&a, &b| raw[a as usize].total_cmp(&raw[b as usize]));
        let thetas: Vec<f64> = perm.iter().map(|&k| raw[k as usize]).collect();
        Ok(Self::from_parts(model, thetas, perm))
    }

    fn from_parts(model: ArModel, thetas: Vec<f64>, perm: Vec<u64>) -> Self {
        let min_gap = thetas
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let tolerance = COLLISION_REL_TOL * (1.0 + thetas.last().copied().unwrap_or(0.0));
        Self {
            model,
            thetas,
            perm,
            min_gap,
            collision_free: min_gap > tolerance,
        }
    }

    pub fn model(&self) -> &ArModel {
        &self.model
    }

    pub fn decimation(&self) -> usize {
        self.model.decimation
    }

    /// Sorted codebook values.
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// `perm[j]` is the codeword index whose value is `thetas[j]`.
    pub fn perm(&self) -> &[u64] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// `A·(1 + α + … + α^{D-1})`.
    pub fn theta_max(&self) -> f64 {
        *self.thetas.last().expect("codebook is never empty")
    }

    pub fn collision_tolerance(&self) -> f64 {
        COLLISION_REL_TOL * (1.0 + self.theta_max())
    }

    pub fn is_collision_free(&self) -> bool {
        self.collision_free
    }

    /// Smallest adjacent gap of the sorted list, whether or not it is a collision.
    pub fn smallest_gap(&self) -> f64 {
        self.min_gap
    }

    /// `Δθ_min`; an error when the codebook has collisions.
    pub fn min_gap(&self) -> Result<f64> {
        self.require_collision_free()?;
        Ok(self.min_gap)
    }

    pub(crate) fn require_collision_free(&self) -> Result<()> {
        if self.collision_free {
            Ok(())
        } else {
            Err(Error::DegenerateCodebook {
                min_gap: self.min_gap,
                tolerance: self.collision_tolerance(),
            })
        }
    }

    /// Block pattern stored at sorted position `j`.
    pub fn pattern(&self, j: usize) -> Vec<f64> {
        pattern_of(self.perm[j], self.model.decimation, self.model.amplitude)
    }

    /// Spike count of the pattern at sorted position `j`.
    pub fn count(&self, j: usize) -> usize {
        self.perm[j].count_ones() as usize
    }

    pub fn cluster_stats(&self) -> ClusterStats {
        cluster_stats(&self.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(26 + 16 * self.thetas.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.model.alpha.to_le_bytes());
        buf.extend_from_slice(&self.model.amplitude.to_le_bytes());
        buf.extend_from_slice(&(self.model.decimation as u32).to_le_bytes());
        for t in &self.thetas {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        for p in &self.perm {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        buf
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads a codebook and checks that it was built for `expected`.
    pub fn load_for(path: impl AsRef<Path>, expected: &ArModel) -> Result<Self> {
        let cb = Self::load(path)?;
        if !cb.model.same_system(expected) {
            return Err(Error::ModelMismatch(format!(
                "file holds {:?}, requested {:?}",
                cb.model, expected
            )));
        }
        Ok(cb)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader { bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a codebook file".into()));
        }
        let version = u16::from_le_bytes(rd.array()?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let alpha = f64::from_le_bytes(rd.array()?);
        let amplitude = f64::from_le_bytes(rd.array()?);
        let d = u32::from_le_bytes(rd.array()?) as usize;
        let model =
            ArModel::new(alpha, amplitude, d).map_err(|e| Error::Format(format!("header: {e}")))?;
        if d > 62 {
            return Err(Error::Format(format!("decimation {d} too large")));
        }
        let size = 1usize << d;
        if bytes.len() != rd.pos + 16 * size {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                16 * size,
                bytes.len() - rd.pos
            )));
        }
        let thetas = (0..size)
            .map(|_| rd.array().map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let perm = (0..size)
            .map(|_| rd.array().map(u64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let mut seen = vec![false; size];
        for &p in &perm {
            match seen.get_mut(p as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::Format("perm is not a permutation".into())),
            }
        }
        if thetas.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Format("thetas are not sorted".into()));
        }
        Ok(Self::from_parts(model, thetas, perm))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated codebook file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Per-count extremes of the codebook values and whether counts form
/// disjoint clusters on the real line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterStats {
    /// `theta_min[k]`: smallest value among patterns with `k` spikes.
    pub theta_min: Vec<f64>,
    /// `theta_max[k]`: largest value among patterns with `k` spikes.
    pub theta_max: Vec<f64>,
    pub clustered: bool,
    /// `min_k theta_min[k+1] - theta_max[k]`, only when clustered.
    pub cluster_min_gap: Option<f64>,
}

/// Closed-form cluster extremes: the `k` spikes packed into the last slots
/// give the maximum, packed into the first slots give the minimum.
pub fn cluster_stats(model: &ArModel) -> ClusterStats {
    let d = model.decimation;
    let a = model.amplitude;
    // prefix[k] = Σ_{j<k} α^j
    let mut prefix = vec![0.0; d + 1];
    for k in 1..=d {
        prefix[k] = prefix[k - 1] + model.alpha.powi((k - 1) as i32);
    }
    let theta_max: Vec<f64> = (0..=d).map(|k| a * prefix[k]).collect();
    let theta_min: Vec<f64> = (0..=d).map(|k| a * (prefix[d] - prefix[d - k])).collect();
    let gaps: Vec<f64> = (0..d).map(|k| theta_min[k + 1] - theta_max[k]).collect();
    let clustered = gaps.iter().all(|&g| g > 0.0);
    let cluster_min_gap = clustered.then(|| gaps.iter().copied().fold(f64::INFINITY, f64::min));
    ClusterStats {
        theta_min,
        theta_max,
        clustered,
        cluster_min_gap,
    }
}

/// Polynomial test `α^D − α^{D−k₀−1} − α^{k₀} + 1 < 0` with `k₀ = ⌊D/2⌋`;
/// when it holds, patterns with equal spike counts cluster together.
pub fn is_count_separable(alpha: f64, decimation: usize) -> Result<bool> {
    check_alpha(alpha)?;
    if decimation == 0 {
        return Err(Error::Parameter("decimation must be at least 1".into()));
    }
    let d = decimation as i32;
    let k0 = d / 2;
    let r = alpha.powi(d) - alpha.powi(d - k0 - 1) - alpha.powi(k0) + 1.0;
    Ok(r < 0.0)
}
