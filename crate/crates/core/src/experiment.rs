//! Seeded Monte Carlo sweeps and figure tables.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::error_bound;
use crate::baselines::{box_l1_noiseless, box_l1_noisy, SolverOptions};
use crate::codebook::Codebook;
use crate::decoder::{decode_c_sequence, preprocess, DecodeMode};
use crate::error::{Error, Result};
use crate::fusion::{default_lambda, denoise_low_rate, fused_decode, DenoiseOptions};
use crate::metrics::{count_error, match_spikes, threshold_indices};
use crate::model::{simulate_with_rng, ArModel, Simulation};
use crate::rng::{coord, derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nearest,
    L1box,
    Fused,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Nearest => "nearest",
            Method::L1box => "l1box",
            Method::Fused => "fused",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Method::Nearest),
            "l1box" => Ok(Method::L1box),
            "fused" => Ok(Method::Fused),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }
}

/// How the box-ℓ1 baseline picks its noise radius ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsRule {
    /// `‖w‖₂` of the injected noise.
    Oracle,
    /// `√M·σ`.
    SigmaSqrtM,
}

fn default_len() -> usize {
    1000
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_trials() -> usize {
    1000
}
fn default_methods() -> Vec<Method> {
    vec![Method::Nearest]
}
fn default_eps() -> EpsRule {
    EpsRule::Oracle
}
fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub decimations: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub probs: Vec<f64>,
    /// High-rate length budget L; each cell uses `M = ⌊(L−1)/D⌋ + 1`.
    #[serde(default = "default_len")]
    pub len: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub t0: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_eps")]
    pub eps_rule: EpsRule,
    /// Box-ℓ1 outputs above `threshold·A` count as spikes.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Denoiser penalty for the fused method; `σ·√(2 ln M)` when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Where the CLI writes the table; stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.alphas.is_empty()
            || self.decimations.is_empty()
            || self.sigmas.is_empty()
            || self.probs.is_empty()
            || self.methods.is_empty()
        {
            return bad("every grid and the method list must be nonempty".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.len == 0 {
            return bad("len must be at least 1".into());
        }
        if let Some(a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return bad(format!("alpha {a} is outside (0, 1)"));
        }
        if self.decimations.contains(&0) {
            return bad("decimation must be at least 1".into());
        }
        if let Some(s) = self.sigmas.iter().find(|&&s| !(s >= 0.0 && s.is_finite())) {
            return bad(format!("sigma {s} is negative"));
        }
        if let Some(p) = self.probs.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
            return bad(format!("probability {p} is outside [0, 1]"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude {} must be positive", self.amplitude));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return bad(format!("lambda {l} is negative"));
            }
        }
        Ok(())
    }
}

/// One output line: a grid cell and a method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub decimation: usize,
    pub sigma: f64,
    pub p: f64,
    pub m: usize,
    pub len: usize,
    pub method: Method,
    pub trials: usize,
    pub f_mean: f64,
    pub f_std: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub count_error_mean: f64,
    /// Fraction of trials where the recovered train differs anywhere.
    pub train_error_rate: f64,
    pub min_gap: Option<f64>,
    pub cluster_min_gap: Option<f64>,
    pub error_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    alpha: f64,
    decimation: usize,
    sigma: f64,
    p: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    f: f64,
    precision: f64,
    recall: f64,
    count_err: usize,
    wrong: bool,
}

/// Seed of one trial, from the cell's parameter values and the trial number.
pub fn trial_seed(
    master: u64,
    alpha: f64,
    decimation: usize,
    sigma: f64,
    p: f64,
    trial: usize,
) -> u64 {
    derive_seed(
        master,
        &[
            coord(alpha),
            decimation as u64,
            coord(sigma),
            coord(p),
            trial as u64,
        ],
    )
}

fn sweep_solver() -> SolverOptions {
    SolverOptions {
        max_iter: 100_000,
        tol: 1e-7,
        check_every: 64,
    }
}

fn run_trial(cfg: &SweepConfig, cell: Cell, cb: &Codebook, trial: usize) -> Result<Vec<Outcome>> {
    let model = *cb.model();
    let m = model.samples_for_len(cfg.len);
    let mut rng = rng_from_seed(trial_seed(
        cfg.seed,
        cell.alpha,
        cell.decimation,
        cell.sigma,
        cell.p,
        trial,
    ));
    let sim = simulate_with_rng(&model, m, cell.p, cell.sigma, &mut rng)?;
    let truth = sim.train.spike_indices();
    let gamma: Vec<usize> = crate::decoder::estimate_counts(&sim.train);
    cfg.methods
        .iter()
        .map(|&method| {
            let est = estimate(cfg, method, &sim, cb)?;
            let mr = match_spikes(&truth, &est, cfg.t0);
            let gamma_hat = block_counts(&est, model.decimation, m);
            Ok(Outcome {
                f: mr.f_score,
                precision: mr.precision,
                recall: mr.recall,
                count_err: count_error(&gamma, &gamma_hat)?,
                wrong: est != truth,
            })
        })
        .collect()
}

/// Spike positions estimated by one method.
fn estimate(
    cfg: &SweepConfig,
    method: Method,
    sim: &Simulation,
    cb: &Codebook,
) -> Result<Vec<usize>> {
    let model = cb.model();
    match method {
        Method::Nearest => {
            let c = preprocess(&sim.trace);
            Ok(decode_c_sequence(&c, cb, DecodeMode::Nearest, false)?
                .train
                .spike_indices())
        }
        Method::L1box => {
            let eps = match cfg.eps_rule {
                EpsRule::Oracle => sim.noise.iter().map(|w| w * w).sum::<f64>().sqrt(),
                EpsRule::SigmaSqrtM => sim.trace.noise_sigma * (sim.trace.len() as f64).sqrt(),
            };
            // ε = 0 pins every block; the closed form is the exact minimizer.
            let x = if eps == 0.0 {
                box_l1_noiseless(&preprocess(&sim.trace), model)?
            } else {
                box_l1_noisy(&sim.trace, eps, &sweep_solver())?.x
            };
            Ok(threshold_indices(&x, cfg.threshold * model.amplitude))
        }
        Method::Fused => {
            let lambda = cfg
                .lambda
                .unwrap_or_else(|| default_lambda(sim.trace.noise_sigma, sim.trace.len()));
            let den = denoise_low_rate(&sim.trace, lambda, &DenoiseOptions::default())?;
            Ok(fused_decode(&den, cb)?.train.spike_indices())
        }
    }
}

fn block_counts(indices: &[usize], d: usize, m: usize) -> Vec<usize> {
    let mut counts = vec![0; m];
    for &i in indices {
        let block = if i == 0 { 0 } else { (i - 1) / d + 1 };
        counts[block] += 1;
    }
    counts
}

/// Runs every (α, D, σ, p) cell for `cfg.trials` trials. Rows come out in
/// grid order (α, then D, σ, p, method) whatever the scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut codebooks = Vec::new();
    for &alpha in &cfg.alphas {
        for &d in &cfg.decimations {
            let model = ArModel::new(alpha, cfg.amplitude, d)?;
            codebooks.push(Codebook::build(&model)?);
        }
    }
    let mut cells = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        for (di, &decimation) in cfg.decimations.iter().enumerate() {
            for &sigma in &cfg.sigmas {
                for &p in &cfg.probs {
                    let cb = ai * cfg.decimations.len() + di;
                    cells.push((
                        Cell {
                            alpha,
                            decimation,
                            sigma,
                            p,
                        },
                        cb,
                    ));
                }
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<Vec<Outcome>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (cell, cb) = cells[c];
            run_trial(cfg, cell, &codebooks[cb], t)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (ci, (cell, cbi)) in cells.iter().enumerate() {
        let cb = &codebooks[*cbi];
        let m = cb.model().samples_for_len(cfg.len);
        let trials = &outcomes[ci * cfg.trials..(ci + 1) * cfg.trials];
        let min_gap = cb.min_gap().ok();
        let cluster_min_gap = cb.cluster_stats().cluster_min_gap;
        let bound = error_bound(cb, cell.sigma, m).ok();
        for (k, &method) in cfg.methods.iter().enumerate() {
            let per: Vec<Outcome> = trials.iter().map(|o| o[k]).collect();
            let n = per.len() as f64;
            let mean = |f: &dyn Fn(&Outcome) -> f64| per.iter().map(f).sum::<f64>() / n;
            let f_mean = mean(&|o| o.f);
            let f_std = if per.len() > 1 {
                (per.iter().map(|o| (o.f - f_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            rows.push(SweepRow {
                alpha: cell.alpha,
                decimation: cell.decimation,
                sigma: cell.sigma,
                p: cell.p,
                m,
                len: cb.model().train_len(m),
                method,
                trials: cfg.trials,
                f_mean,
                f_std,
                precision_mean: mean(&|o| o.precision),
                recall_mean: mean(&|o| o.recall),
                count_error_mean: mean(&|o| o.count_err as f64),
                train_error_rate: mean(&|o| f64::from(u8::from(o.wrong))),
                min_gap,
                cluster_min_gap,
                error_bound: bound,
            });
        }
    }
    Ok(rows)
}

pub fn write_rows<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_config(path: impl AsRef<Path>) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            "fig7" => Ok(Figure::Fig7),
            _ => Err(Error::Config(format!(
                "unknown figure '{s}' (expected fig2, fig4, fig5, fig6 or fig7)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FigureOverrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub len: Option<usize>,
}

/// The sweep behind each figure.
pub fn figure_config(fig: Figure) -> SweepConfig {
    let base = SweepConfig {
        alphas: vec![0.5, 0.9],
        decimations: (2..=10).collect(),
        sigmas: vec![0.01],
        probs: vec![0.35],
        len: 1000,
        amplitude: 1.0,
        trials: 1000,
        t0: 2,
        seed: 0,
        methods: vec![Method::Nearest, Method::L1box],
        eps_rule: EpsRule::Oracle,
        threshold: 0.5,
        lambda: None,
        output: None,
    };
    match fig {
        Figure::Fig2 => SweepConfig {
            sigmas: vec![0.0],
            t0: 0,
            ..base
        },
        Figure::Fig4 => base,
        Figure::Fig5 => SweepConfig {
            decimations: vec![5],
            sigmas: vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1],
            ..base
        },
        Figure::Fig6 => SweepConfig {
            alphas: vec![0.9],
            decimations: vec![5],
            sigmas: vec![0.002, 0.005, 0.01],
            probs: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            ..base
        },
        Figure::Fig7 => SweepConfig {
            decimations: (2..=8).collect(),
            sigmas: vec![0.005],
            len: 100,
            methods: vec![Method::Nearest],
            ..base
        },
    }
}

/// A plot-ready table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

pub fn emit_figure_data(fig: Figure, overrides: &FigureOverrides) -> Result<Table> {
    let mut cfg = figure_config(fig);
    if let Some(t) = overrides.trials {
        cfg.trials = t;
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(l) = overrides.len {
        cfg.len = l;
    }
    let rows = run_sweep(&cfg)?;
    let s = |v: f64| v.to_string();
    let table = match fig {
        Figure::Fig2 | Figure::Fig4 => Table {
            header: vec!["alpha", "decimation", "method", "f_score", "f_std"],
            rows: rows
                .iter()
                .map(|r| {
                    vec![
                        s(r.alpha),
                        r.decimation.to_string(),
                        r.method.to_string(),
                        s(r.f_mean),
                        s(r.f_std),
                    ]
                })
                .collect(),
        },
        Figure::Fig5 => Table {
            header: vec!["alpha", "sigma", "method", "f_score", "count_error"],
            rows: rows
                .iter()
                .map(|r| {
                    vec![
                        s(r.alpha),
                        s(r.sigma),
                        r.method.to_string(),
                        s(r.f_mean),
                        s(r.count_error_mean),
                    ]
                })
                .collect(),
        },
        Figure::Fig6 => Table {
            header: vec!["sigma", "p", "method", "f_score"],
            rows: rows
                .iter()
                .map(|r| vec![s(r.sigma), s(r.p), r.method.to_string(), s(r.f_mean)])
                .collect(),
        },
        Figure::Fig7 => Table {
            header: vec![
                "alpha",
                "decimation",
                "sigma",
                "trials",
                "empirical",
                "stderr",
                "bound",
            ],
            rows: rows
                .iter()
                .map(|r| {
                    let e = r.train_error_rate;
                    let se = (e * (1.0 - e) / r.trials as f64).sqrt();
                    vec![
                        s(r.alpha),
                        r.decimation.to_string(),
                        s(r.sigma),
                        r.trials.to_string(),
                        s(e),
                        s(se),
                        s(r.error_bound.unwrap_or(1.0)),
                    ]
                })
                .collect(),
        },
    };
    Ok(table)
}
