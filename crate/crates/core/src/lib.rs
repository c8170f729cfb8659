//! Recovery of binary spike trains from decimated AR(1) measurements.
//!
//! A spike train with values in `{0, A}` passes through `y[n] = α·y[n−1] + x[n]`
//! and only every D-th output is kept. Because the input is binary, each
//! low-rate sample pins down its block of D spikes through a sorted codebook
//! of the `2^D` possible block responses, which is searched in `O(D)`.
//!
//! ```
//! use binspike::{simulate, ArModel, Codebook, DecodeMode, decode_train};
//!
//! let model = ArModel::new(0.5, 1.0, 4).unwrap();
//! let sim = simulate(&model, 50, 0.35, 0.0, 7).unwrap();
//! let cb = Codebook::build(&model).unwrap();
//! let report = decode_train(&sim.trace, &cb, DecodeMode::Nearest).unwrap();
//! assert_eq!(report.train, sim.train);
//! ```

// `!(x >= 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod codebook;
pub mod decoder;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;

pub use analysis::{
    block_error_prob, error_bound, noise_budget, q_function, snr_condition, NoiseBudget,
};
pub use baselines::{
    box_l1_noiseless, box_l1_noisy, fir_collision_pair, sparse_alternative, FirFilter,
    SolverOptions,
};
pub use codebook::{cluster_stats, codeword, is_count_separable, ClusterStats, Codebook};
pub use decoder::{
    decode_block_exact, decode_block_nn, decode_train, decode_train_par, estimate_amplitude,
    estimate_counts, preprocess, AmplitudeEstimate, DecodeMode, DecodeReport,
};
pub use error::{Error, Result};
pub use fusion::{denoise_low_rate, fused_decode, DenoiseResult};
pub use metrics::{count_error, match_spikes, MatchResult};
pub use model::{
    ar_filter, build_system_matrices, decimate, measure, simulate, ArModel, Simulation, SpikeTrain,
    Trace,
};
