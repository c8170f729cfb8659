use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use binspike::baselines::SolverOptions;
use binspike::experiment::{
    emit_figure_data, read_config, run_sweep, write_rows, EpsRule, Figure, FigureOverrides, Method,
    SweepConfig,
};
use binspike::fusion::{default_lambda, DenoiseOptions};
use binspike::io::{read_meta, read_series, sidecar_path, write_meta, write_series_to, TraceMeta};
use binspike::metrics::threshold_indices;
use binspike::{
    block_error_prob, box_l1_noiseless, box_l1_noisy, cluster_stats, count_error, decode_train,
    decode_train_par, denoise_low_rate, error_bound, estimate_amplitude, estimate_counts,
    fir_collision_pair, fused_decode, match_spikes, noise_budget, preprocess, simulate,
    snr_condition, sparse_alternative, ArModel, Codebook, DecodeMode, DenoiseResult, Error,
    FirFilter, SpikeTrain, Trace,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "binspike",
    version,
    about = "Binary spike recovery from decimated AR(1) traces"
)]
struct Cli {
    /// Master RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, short = 'D')]
    decimation: Option<usize>,
}

#[derive(Args, Clone)]
struct TraceArgs {
    /// Trace CSV (`n,value`); model parameters are read from the `.json`
    /// sidecar when present and can be overridden by flags.
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Noise standard deviation of the trace.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Nearest,
}

#[derive(Clone, Copy, ValueEnum)]
enum EpsArg {
    Oracle,
    SigmaSqrtM,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a codebook and print its gaps and cluster structure.
    Codebook {
        #[command(flatten)]
        model: ModelArgs,
        /// Save the sorted codebook in binary form.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the sorted table (value, pattern, count) as CSV.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Draw a random train and its (noisy) decimated trace.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of low-rate samples M.
        #[arg(long, short = 'M', conflicts_with = "len")]
        m: Option<usize>,
        /// High-rate length budget L.
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, short = 'p', default_value_t = 0.35)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Trace CSV; a `.json` sidecar with the model is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth train CSV.
        #[arg(long)]
        train_out: Option<PathBuf>,
    },
    /// Recover a binary train from a trace.
    Decode {
        #[command(flatten)]
        input: TraceArgs,
        #[arg(long, value_enum, default_value = "nearest")]
        mode: ModeArg,
        /// Use a saved codebook instead of building one.
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Estimate the amplitude from the trace first.
        #[arg(long)]
        estimate_amplitude: bool,
        /// Consistency tolerance for amplitude estimation.
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Comparison methods and counterexamples.
    Baseline {
        #[command(subcommand)]
        which: BaselineCmd,
    },
    /// Noise tolerances and error probabilities.
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, short = 'M', default_value_t = 100)]
        m: usize,
        #[arg(long)]
        delta: Option<f64>,
        /// Spike probability for the exact per-block error.
        #[arg(long, short = 'p')]
        p: Option<f64>,
    },
    /// Score an estimated train against the truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long, default_value_t = 0)]
        t0: usize,
        /// Values above this count as spikes.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Also report the per-block count error.
        #[arg(long, short = 'D')]
        decimation: Option<usize>,
    },
    /// Denoise the trace, then decode the denoised c-sequence.
    Fuse {
        #[command(flatten)]
        input: TraceArgs,
        /// Penalty, or `auto` for σ·√(2 ln M).
        #[arg(long, default_value = "auto")]
        lambda: String,
        /// Externally denoised activity CSV; skips the built-in denoiser.
        #[arg(long)]
        ext_denoised: Option<PathBuf>,
        #[arg(long)]
        denoised_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep over (α, D, σ, p).
    Sweep(SweepArgs),
    /// Plot-ready data for one of the standard figures.
    Figure {
        name: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BaselineCmd {
    /// Box-constrained ℓ1 minimization with a noise radius.
    L1box {
        #[command(flatten)]
        input: TraceArgs,
        /// Noise radius; defaults to σ·√M.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form box-ℓ1 minimizer for noiseless traces.
    L1boxExact {
        #[command(flatten)]
        input: TraceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A different, no denser vector with the same measurements.
    SparseAlt {
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two binary trains an FIR filter cannot tell apart after decimation.
    FirCollide {
        /// Comma-separated taps; overrides --alpha/--taps-len.
        #[arg(long, value_delimiter = ',')]
        taps: Vec<f64>,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        /// Length of the truncated AR(1) response.
        #[arg(long, default_value_t = 2)]
        taps_len: usize,
        #[arg(long, short = 'D')]
        decimation: usize,
        #[arg(long)]
        len: usize,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    decimations: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    probs: Vec<f64>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    t0: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, value_enum)]
    eps_rule: Option<EpsArg>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_values(path: Option<&Path>, values: &[f64]) -> Result<()> {
    let mut out = output(path)?;
    write_series_to(&mut out, values)?;
    out.flush()?;
    Ok(())
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| config_err(format!("--{name} is required")))
}

fn build_model(args: &ModelArgs) -> Result<ArModel> {
    Ok(ArModel::new(
        need(args.alpha, "alpha")?,
        args.amplitude.unwrap_or(1.0),
        need(args.decimation, "decimation")?,
    )?)
}

/// Trace values plus the model, merged from the sidecar and flags.
fn load_input(input: &TraceArgs) -> Result<(Trace, Option<u64>)> {
    let values =
        read_series(&input.trace).with_context(|| format!("reading {}", input.trace.display()))?;
    let side = sidecar_path(&input.trace);
    let meta = if side.exists() {
        Some(read_meta(&side).with_context(|| format!("reading {}", side.display()))?)
    } else {
        None
    };
    let m = &input.model;
    let alpha = m.alpha.or(meta.as_ref().map(|x| x.alpha));
    let amplitude = m.amplitude.or(meta.as_ref().map(|x| x.amplitude));
    let decimation = m.decimation.or(meta.as_ref().map(|x| x.decimation));
    let sigma = input
        .sigma
        .or(meta.as_ref().map(|x| x.sigma))
        .unwrap_or(0.0);
    let model = ArModel::new(
        need(alpha, "alpha")?,
        amplitude.unwrap_or(1.0),
        need(decimation, "decimation")?,
    )?;
    let seed = meta.and_then(|x| x.seed);
    Ok((Trace::with_noise(values, model, sigma)?, seed))
}

fn codebook_for(model: &ArModel, saved: Option<&Path>) -> Result<Codebook> {
    Ok(match saved {
        Some(p) => Codebook::load_for(p, model)?,
        None => Codebook::build(model)?,
    })
}

fn opt(v: Result<f64, Error>) -> Option<f64> {
    v.ok()
}

fn cmd_codebook(model: &ModelArgs, out: Option<&Path>, table: Option<&Path>) -> Result<()> {
    let m = build_model(model)?;
    let cb = Codebook::build(&m)?;
    if let Some(p) = out {
        cb.save(p)?;
    }
    if let Some(p) = table {
        let mut w = output(Some(p))?;
        writeln!(w, "j,value,pattern,count")?;
        for j in 0..cb.len() {
            let pat: String = cb
                .pattern(j)
                .iter()
                .map(|&v| if v != 0.0 { '1' } else { '0' })
                .collect();
            writeln!(w, "{j},{},{pat},{}", cb.thetas()[j], cb.count(j))?;
        }
        w.flush()?;
    }
    let cl = cluster_stats(&m);
    print_json(&json!({
        "alpha": m.alpha,
        "amplitude": m.amplitude,
        "decimation": m.decimation,
        "entries": cb.len(),
        "theta_max": cb.theta_max(),
        "collision_free": cb.is_collision_free(),
        "min_gap": cb.smallest_gap(),
        "count_separable": binspike::is_count_separable(m.alpha, m.decimation)?,
        "clustered": cl.clustered,
        "cluster_min_gap": cl.cluster_min_gap,
    }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model: &ModelArgs,
    m: Option<usize>,
    len: Option<usize>,
    p: f64,
    sigma: f64,
    seed: u64,
    out: &Path,
    train_out: Option<&Path>,
) -> Result<()> {
    let model = build_model(model)?;
    let m = match (m, len) {
        (Some(m), _) => m,
        (None, Some(l)) => model.samples_for_len(l),
        (None, None) => return Err(config_err("one of -M/--m or --len is required")),
    };
    let sim = simulate(&model, m, p, sigma, seed)?;
    write_values(Some(out), &sim.trace.values)?;
    write_meta(
        sidecar_path(out),
        &TraceMeta {
            alpha: model.alpha,
            amplitude: model.amplitude,
            decimation: model.decimation,
            sigma,
            seed: Some(seed),
        },
    )?;
    if let Some(t) = train_out {
        write_values(Some(t), sim.train.values())?;
    }
    print_json(&json!({
        "m": m,
        "len": sim.train.len(),
        "spikes": sim.train.spike_count(),
        "seed": seed,
    }))
}

fn cmd_decode(
    input: &TraceArgs,
    mode: ModeArg,
    saved: Option<&Path>,
    estimate: bool,
    tol: f64,
    parallel: bool,
    out: Option<&Path>,
) -> Result<()> {
    let (mut trace, _) = load_input(input)?;
    if estimate {
        let m = trace.model;
        let est = estimate_amplitude(&preprocess(&trace), m.alpha, m.decimation, None, tol)?;
        eprintln!("estimated amplitude {}", est.amplitude);
        trace.model = ArModel::new(m.alpha, est.amplitude, m.decimation)?;
    }
    let cb = codebook_for(&trace.model, saved)?;
    let mode = match mode {
        ModeArg::Exact => DecodeMode::Exact,
        ModeArg::Nearest => DecodeMode::Nearest,
    };
    let rep = if parallel {
        decode_train_par(&trace, &cb, mode)?
    } else {
        decode_train(&trace, &cb, mode)?
    };
    write_values(out, rep.train.values())?;
    if out.is_some() {
        let worst = rep.residuals.iter().fold(0.0f64, |a, &r| a.max(r));
        print_json(&json!({
            "spikes": rep.train.spike_count(),
            "amplitude": rep.amplitude_used,
            "max_residual": worst,
            "counts": rep.counts,
        }))?;
    }
    Ok(())
}

fn cmd_baseline(which: &BaselineCmd) -> Result<()> {
    match which {
        BaselineCmd::L1box {
            input,
            eps,
            tol,
            max_iter,
            out,
        } => {
            let (trace, _) = load_input(input)?;
            let eps = eps.unwrap_or(trace.noise_sigma * (trace.len() as f64).sqrt());
            let opts = SolverOptions {
                max_iter: *max_iter,
                tol: *tol,
                ..SolverOptions::default()
            };
            let sol = box_l1_noisy(&trace, eps, &opts)?;
            eprintln!(
                "converged in {} iterations (feasibility {:.2e}, gap {:.2e})",
                sol.iterations, sol.feasibility, sol.gap
            );
            write_values(out.as_deref(), &sol.x)
        }
        BaselineCmd::L1boxExact { input, out } => {
            let (trace, _) = load_input(input)?;
            let x = box_l1_noiseless(&preprocess(&trace), &trace.model)?;
            write_values(out.as_deref(), &x)
        }
        BaselineCmd::SparseAlt { train, model, out } => {
            let m = build_model(model)?;
            let values = read_series(train)?;
            let train = SpikeTrain::new(values, m.amplitude, m.decimation)?;
            let v = sparse_alternative(&train, &m)?;
            write_values(out.as_deref(), &v)
        }
        BaselineCmd::FirCollide {
            taps,
            alpha,
            taps_len,
            decimation,
            len,
        } => {
            let f = if taps.is_empty() {
                FirFilter::truncated_ar(*alpha, *taps_len)?
            } else {
                FirFilter::new(taps.clone())?
            };
            let (x0, x1) = fir_collision_pair(&f, *decimation, *len, 1.0)?;
            let y0 = f.decimated(x0.values(), *decimation);
            let y1 = f.decimated(x1.values(), *decimation);
            print_json(&json!({
                "taps": f.taps(),
                "x0": x0.values(),
                "x1": x1.values(),
                "outputs_equal": y0 == y1,
                "output": y0,
            }))
        }
    }
}

fn cmd_bounds(
    model: &ModelArgs,
    sigma: f64,
    m: usize,
    delta: Option<f64>,
    p: Option<f64>,
) -> Result<()> {
    let model = build_model(model)?;
    let cb = Codebook::build(&model)?;
    let nb = noise_budget(&cb, sigma)?;
    let snr = match delta {
        Some(d) if sigma > 0.0 => Some(snr_condition(&cb, sigma, m, d)?),
        _ => None,
    };
    let pe = match p {
        Some(p) => Some(block_error_prob(&cb, sigma, p)?),
        None => None,
    };
    print_json(&json!({
        "min_gap": opt(cb.min_gap()),
        "exact_recovery_bound": nb.exact_recovery_bound,
        "count_recovery_bound": nb.count_recovery_bound,
        "sigma1_sq": nb.sigma1_sq,
        "error_bound": error_bound(&cb, sigma, m)?,
        "snr_condition": snr,
        "block_error_prob": pe,
    }))
}

fn cmd_eval(truth: &Path, est: &Path, t0: usize, threshold: f64, d: Option<usize>) -> Result<()> {
    let t = read_series(truth)?;
    let e = read_series(est)?;
    let ti = threshold_indices(&t, threshold);
    let ei = threshold_indices(&e, threshold);
    let r = match_spikes(&ti, &ei, t0);
    let counts = match d {
        Some(d) => {
            let tt = SpikeTrain::from_bits(&bits(&t, threshold), 1.0, d)?;
            let et = SpikeTrain::from_bits(&bits(&e, threshold), 1.0, d)?;
            Some(count_error(&estimate_counts(&tt), &estimate_counts(&et))?)
        }
        None => None,
    };
    print_json(&json!({
        "true_spikes": ti.len(),
        "estimated_spikes": ei.len(),
        "true_positives": r.true_positives,
        "precision": r.precision,
        "recall": r.recall,
        "f_score": r.f_score,
        "count_error": counts,
    }))
}

fn bits(v: &[f64], thr: f64) -> Vec<bool> {
    v.iter().map(|&x| x > thr).collect()
}

fn cmd_fuse(
    input: &TraceArgs,
    lambda: &str,
    ext: Option<&Path>,
    denoised_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (trace, _) = load_input(input)?;
    let cb = Codebook::build(&trace.model)?;
    let gamma = trace.model.alpha_d();
    let den = match ext {
        Some(p) => {
            let x = read_series(p)?;
            if x.len() != trace.len() {
                return Err(Error::Shape(format!(
                    "denoised activity has {} samples, trace has {}",
                    x.len(),
                    trace.len()
                ))
                .into());
            }
            DenoiseResult::from_activity(x, gamma, f64::NAN)?
        }
        None => {
            let lam = if lambda == "auto" {
                if input.sigma.is_none() && trace.noise_sigma == 0.0 {
                    eprintln!("note: no noise level given; λ = 0");
                }
                default_lambda(trace.noise_sigma, trace.len())
            } else {
                lambda.parse::<f64>().map_err(|_| {
                    config_err(format!(
                        "--lambda must be 'auto' or a number, got '{lambda}'"
                    ))
                })?
            };
            denoise_low_rate(&trace, lam, &DenoiseOptions::default())?
        }
    };
    if let Some(p) = denoised_out {
        write_values(Some(p), &den.y_hat)?;
    }
    let rep = fused_decode(&den, &cb)?;
    write_values(out, rep.train.values())
}

fn cmd_sweep(args: &SweepArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => SweepConfig {
            alphas: vec![],
            decimations: vec![],
            sigmas: vec![],
            probs: vec![],
            len: 1000,
            amplitude: 1.0,
            trials: 1000,
            t0: 0,
            seed: 0,
            methods: vec![Method::Nearest],
            eps_rule: EpsRule::Oracle,
            threshold: 0.5,
            lambda: None,
            output: None,
        },
    };
    if !args.alphas.is_empty() {
        cfg.alphas = args.alphas.clone();
    }
    if !args.decimations.is_empty() {
        cfg.decimations = args.decimations.clone();
    }
    if !args.sigmas.is_empty() {
        cfg.sigmas = args.sigmas.clone();
    }
    if !args.probs.is_empty() {
        cfg.probs = args.probs.clone();
    }
    if !args.methods.is_empty() {
        cfg.methods = args.methods.clone();
    }
    cfg.len = args.len.unwrap_or(cfg.len);
    cfg.amplitude = args.amplitude.unwrap_or(cfg.amplitude);
    cfg.trials = args.trials.unwrap_or(cfg.trials);
    cfg.t0 = args.t0.unwrap_or(cfg.t0);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.threshold = args.threshold.unwrap_or(cfg.threshold);
    cfg.lambda = args.lambda.or(cfg.lambda);
    if let Some(e) = args.eps_rule {
        cfg.eps_rule = match e {
            EpsArg::Oracle => EpsRule::Oracle,
            EpsArg::SigmaSqrtM => EpsRule::SigmaSqrtM,
        };
    }
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    let rows = run_sweep(&cfg)?;
    let mut w = output(cfg.output.as_deref())?;
    write_rows(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn cmd_figure(
    name: &str,
    trials: Option<usize>,
    len: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let fig: Figure = name.parse()?;
    let table = emit_figure_data(fig, &FigureOverrides { trials, seed, len })?;
    let mut w = output(out)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Codebook { model, out, table } => {
            cmd_codebook(model, out.as_deref(), table.as_deref())
        }
        Cmd::Simulate {
            model,
            m,
            len,
            p,
            sigma,
            out,
            train_out,
        } => cmd_simulate(
            model,
            *m,
            *len,
            *p,
            *sigma,
            cli.seed.unwrap_or(0),
            out,
            train_out.as_deref(),
        ),
        Cmd::Decode {
            input,
            mode,
            codebook,
            estimate_amplitude,
            tol,
            parallel,
            out,
        } => cmd_decode(
            input,
            *mode,
            codebook.as_deref(),
            *estimate_amplitude,
            *tol,
            *parallel,
            out.as_deref(),
        ),
        Cmd::Baseline { which } => cmd_baseline(which),
        Cmd::Bounds {
            model,
            sigma,
            m,
            delta,
            p,
        } => cmd_bounds(model, *sigma, *m, *delta, *p),
        Cmd::Eval {
            truth,
            est,
            t0,
            threshold,
            decimation,
        } => cmd_eval(truth, est, *t0, *threshold, *decimation),
        Cmd::Fuse {
            input,
            lambda,
            ext_denoised,
            denoised_out,
            out,
        } => cmd_fuse(
            input,
            lambda,
            ext_denoised.as_deref(),
            denoised_out.as_deref(),
            out.as_deref(),
        ),
        Cmd::Sweep(args) => cmd_sweep(args, cli.seed),
        Cmd::Figure {
            name,
            trials,
            len,
            out,
        } => cmd_figure(name, *trials, *len, cli.seed, out.as_deref()),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_numeric() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
