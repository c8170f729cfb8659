//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::time::{Duration, Instant};

use binspike::baselines::SolverOptions;
use binspike::experiment::{run_sweep, EpsRule, Method, SweepConfig};
use binspike::model::simulate_with_rng;
use binspike::rng::{derive_seed, rng_from_seed};
use binspike::{
    block_error_prob, box_l1_noiseless, box_l1_noisy, codeword, count_error, decode_block_nn,
    decode_train, error_bound, estimate_amplitude, estimate_counts, fir_collision_pair,
    match_spikes, noise_budget, preprocess, simulate, sparse_alternative, ArModel, Codebook,
    DecodeMode, Error, FirFilter, Trace,
};
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn model(alpha: f64, d: usize) -> ArModel {
    ArModel::new(alpha, 1.0, d).unwrap()
}

fn noiseless_exactness() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for alpha in [0.5, 0.9] {
        for d in 2..=10 {
            let m = model(alpha, d);
            let cb = Codebook::build(&m).unwrap();
            let mm = m.samples_for_len(1000);
            let worst = (0..200u64)
                .into_par_iter()
                .map(|t| {
                    let sim = simulate(&m, mm, 0.35, 0.0, derive_seed(1, &[d as u64, t])).unwrap();
                    let rep = decode_train(&sim.trace, &cb, DecodeMode::Nearest).unwrap();
                    match_spikes(&sim.train.spike_indices(), &rep.train.spike_indices(), 0).f_score
                })
                .reduce(|| 1.0, f64::min);
            if worst != 1.0 {
                bad.push(format!("α={alpha} D={d} F={worst}"));
            }
        }
    }
    let took = start.elapsed();
    let fast = took <= Duration::from_secs(60);
    outcome(
        bad.is_empty() && fast,
        format!(
            "3600 trains, min F = 1 except {:?}, {:.2}s",
            bad,
            took.as_secs_f64()
        ),
    )
}

fn brute_force_equivalence() -> Outcome {
    let mut rng = rng_from_seed(2);
    let mut mismatches = 0;
    let mut total = 0;
    for alpha in [0.3, 0.5, 0.7, 0.9] {
        for d in 1..=10 {
            let m = model(alpha, d);
            let cb = Codebook::build(&m).unwrap();
            let h = m.block_weights();
            let all: Vec<(Vec<f64>, f64)> = (0..1u64 << d)
                .map(|k| {
                    let v = codeword(k, &m).unwrap();
                    let t = v.iter().zip(&h).map(|(a, b)| a * b).sum();
                    (v, t)
                })
                .collect();
            for i in 0..1000 {
                let c = if i % 2 == 0 {
                    rng.random_range(-0.3..cb.theta_max() + 0.3)
                } else {
                    let j = rng.random_range(0..cb.len());
                    cb.thetas()[j] + rng.random_range(-1.0..1.0) * cb.smallest_gap().max(1e-6)
                };
                let (got, _) = decode_block_nn(c, &cb).unwrap();
                let best = all
                    .iter()
                    .map(|(_, t)| (c - t).abs())
                    .fold(f64::INFINITY, f64::min);
                let got_t: f64 = got.iter().zip(&h).map(|(a, b)| a * b).sum();
                let exact_best = all
                    .iter()
                    .filter(|(_, t)| (c - t).abs() == best)
                    .any(|(v, _)| *v == got);
                total += 1;
                if !exact_best && (c - got_t).abs() > best {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches in {total} inputs"),
    )
}

fn min_gap_power_law() -> Outcome {
    let mut worst = 0.0f64;
    for i in 1..=10 {
        let alpha = 0.05 * i as f64;
        for d in 1..=12 {
            let cb = Codebook::build(&model(alpha, d)).unwrap();
            worst = worst.max((cb.smallest_gap() - alpha.powi(d as i32 - 1)).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |gap − α^(D−1)| = {worst:.1e}"))
}

fn bounded_noise(values: &[f64], b: f64, rng: &mut impl Rng, alternate: bool) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(n, y)| {
            let up = if alternate {
                n % 2 == 0
            } else {
                rng.random_bool(0.5)
            };
            y + if up { b } else { -b }
        })
        .collect()
}

fn adversarial_robustness() -> Outcome {
    let mut rng = rng_from_seed(4);
    let mut failures = 0;
    for alpha in [0.5, 0.9] {
        for d in 2..=8 {
            let m = model(alpha, d);
            let cb = Codebook::build(&m).unwrap();
            let b = cb.min_gap().unwrap() / 4.0 - 1e-9;
            for t in 0..500 {
                let sim = simulate_with_rng(&m, 100, 0.35, 0.0, &mut rng).unwrap();
                let z = bounded_noise(&sim.trace.values, b, &mut rng, t % 5 == 0);
                let trace = Trace::with_noise(z, m, b).unwrap();
                let rep = decode_train(&trace, &cb, DecodeMode::Nearest).unwrap();
                failures += usize::from(rep.train != sim.train);
            }
        }
    }
    // Noise just past the tolerance, signed so that the two samples feeding
    // one block push its c-value across a midpoint.
    let m = model(0.995, 2);
    let cb = Codebook::build(&m).unwrap();
    let b = 1.01 * cb.min_gap().unwrap() / 4.0;
    let train =
        binspike::SpikeTrain::from_bits(&[false, false, false, false, true], 1.0, 2).unwrap();
    let clean = binspike::measure(&train, 0.995).unwrap();
    let z = vec![clean[0], clean[1] + b, clean[2] - b];
    let rep = decode_train(
        &Trace::with_noise(z, m, b).unwrap(),
        &cb,
        DecodeMode::Nearest,
    )
    .unwrap();
    let broke = rep.train != train;
    outcome(
        failures == 0 && broke,
        format!(
            "{failures} failures in 7000 trials below Δθ/4; boundary instance (α=0.995, D=2, |w|=1.01·Δθ/4) {}",
            if broke { "fails as expected" } else { "did not fail" }
        ),
    )
}

fn count_recovery() -> Outcome {
    let m = model(0.9, 5);
    let cb = Codebook::build(&m).unwrap();
    let budget = noise_budget(&cb, 0.0).unwrap();
    let Some(cb4) = budget.count_recovery_bound else {
        return outcome(false, "α=0.9, D=5 not count-separable");
    };
    let b = 0.999 * cb4;
    let mut rng = rng_from_seed(5);
    let mut count_errors = 0;
    let mut pattern_errors = 0;
    for _ in 0..500 {
        let sim = simulate_with_rng(&m, 100, 0.35, 0.0, &mut rng).unwrap();
        let z: Vec<f64> = sim
            .trace
            .values
            .iter()
            .map(|y| y + rng.random_range(-b..=b))
            .collect();
        let rep = decode_train(
            &Trace::with_noise(z, m, b).unwrap(),
            &cb,
            DecodeMode::Nearest,
        )
        .unwrap();
        count_errors += count_error(&estimate_counts(&sim.train), &rep.counts).unwrap();
        let f = match_spikes(&sim.train.spike_indices(), &rep.train.spike_indices(), 0).f_score;
        pattern_errors += usize::from(f < 1.0);
    }
    // Same noise scale at α = 0.5 moves an empty block onto a one-spike code.
    let m5 = model(0.5, 5);
    let cb5 = Codebook::build(&m5).unwrap();
    let w = 0.04;
    let z = vec![0.0, w];
    let rep = decode_train(
        &Trace::with_noise(z, m5, w).unwrap(),
        &cb5,
        DecodeMode::Nearest,
    )
    .unwrap();
    let counter = count_error(&[0, 0], &rep.counts).unwrap();
    outcome(
        count_errors == 0 && pattern_errors > 0 && counter > 0 && w < b,
        format!(
            "α=0.9: count error {count_errors} over 500 trials ({pattern_errors} with F<1), |w|≤{b:.4}; α=0.5 empty block with w={w} decodes to count {counter}"
        ),
    )
}

fn bound_dominance() -> Outcome {
    let start = Instant::now();
    let trials = 10_000u64;
    let mut lines = Vec::new();
    let mut ok = true;
    for alpha in [0.5, 0.9] {
        for d in 2..=8 {
            let m = model(alpha, d);
            let cb = Codebook::build(&m).unwrap();
            let mm = m.samples_for_len(100);
            let gap = cb.min_gap().unwrap();
            // σ₁ placing the bound at 0.1.
            let s1 = gap / (8.0 * (2.0 * mm as f64 / 0.1).ln()).sqrt();
            let sigma = s1 / (1.0 + m.alpha_d().powi(2)).sqrt();
            let bound = error_bound(&cb, sigma, mm).unwrap();
            let fails: usize = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(6, &[binspike::rng::coord(alpha), d as u64, t]);
                    let sim = simulate(&m, mm, 0.35, sigma, seed).unwrap();
                    let rep = decode_train(&sim.trace, &cb, DecodeMode::Nearest).unwrap();
                    usize::from(rep.train != sim.train)
                })
                .sum();
            let e = fails as f64 / trials as f64;
            let se = (e * (1.0 - e) / trials as f64).sqrt();
            let good = (1e-3..=0.5).contains(&bound) && e <= bound + 3.0 * se;
            ok &= good;
            if !good {
                lines.push(format!("α={alpha} D={d}: {e} > {bound}"));
            } else if d == 8 {
                lines.push(format!("α={alpha} D=8 emp {e:.4} bound {bound:.3}"));
            }
        }
    }
    let took = start.elapsed();
    ok &= took <= Duration::from_secs(300);
    outcome(
        ok,
        format!("{}; {:.1}s", lines.join("; "), took.as_secs_f64()),
    )
}

fn exact_block_error() -> Outcome {
    let (alpha, d, sigma, p) = (0.9, 3, 0.02, 0.35);
    let m = model(alpha, d);
    let cb = Codebook::build(&m).unwrap();
    let pe = block_error_prob(&cb, sigma, p).unwrap();
    let n = 100_000u64;
    let fails: usize = (0..n)
        .into_par_iter()
        .map(|t| {
            let sim = simulate(&m, 2, p, sigma, derive_seed(7, &[t])).unwrap();
            let rep = decode_train(&sim.trace, &cb, DecodeMode::Nearest).unwrap();
            usize::from(rep.train.block(1) != sim.train.block(1))
        })
        .sum();
    let freq = fails as f64 / n as f64;
    let se = (pe * (1.0 - pe) / n as f64).sqrt();
    outcome(
        (freq - pe).abs() <= 3.0 * se,
        format!(
            "p_e = {pe:.5}, Monte Carlo {freq:.5}, 3·SE = {:.5}",
            3.0 * se
        ),
    )
}

fn sparse_counterexample() -> Outcome {
    let mut rng = rng_from_seed(8);
    let (mut done, mut bad, mut strict) = (0, 0, 0);
    while done < 500 {
        let alpha = rng.random_range(0.2..0.95);
        let d = rng.random_range(2..=8);
        let m = model(alpha, d);
        let sim = simulate_with_rng(&m, 20, rng.random_range(0.05..0.7), 0.0, &mut rng).unwrap();
        let v = match sparse_alternative(&sim.train, &m) {
            Ok(v) => v,
            Err(Error::NotApplicable(_)) => continue,
            Err(e) => return outcome(false, e.to_string()),
        };
        done += 1;
        let x = sim.train.values();
        let c = preprocess(&sim.trace);
        let h = m.block_weights();
        let mut cv = vec![v[0]];
        cv.extend(
            v[1..]
                .chunks(d)
                .map(|b| b.iter().zip(&h).map(|(a, w)| a * w).sum::<f64>()),
        );
        let consistent = cv.iter().zip(&c).all(|(a, b)| (a - b).abs() <= 1e-9);
        let nz = |s: &[f64]| s.iter().filter(|&&u| u != 0.0).count();
        let multi = sim.train.blocks().skip(1).any(|b| nz(b) >= 2);
        let ok = consistent && v.as_slice() != x && nz(&v) <= nz(x) && (!multi || nz(&v) < nz(x));
        bad += usize::from(!ok);
        strict += usize::from(multi);
    }
    outcome(
        bad == 0,
        format!("{bad} violations in 500 trains ({strict} with a multi-spike block)"),
    )
}

fn suffix_supported(x: &[f64], d: usize) -> bool {
    x[1..]
        .chunks(d)
        .all(|b| match b.iter().position(|v| v.abs() > 1e-6) {
            None => true,
            Some(i) => b[i..].iter().all(|v| v.abs() > 1e-6),
        })
}

fn l1_bias() -> Outcome {
    let mut rng = rng_from_seed(9);
    let mut worst = 0.0f64;
    let mut not_suffix = 0;
    let mut moved = 0;
    for i in 0..100 {
        let alpha = [0.5, 0.7, 0.9][i % 3];
        let d = 1 + i % 10;
        let m = model(alpha, d);
        let l = rng.random_range(20..=200);
        let sim = simulate_with_rng(&m, m.samples_for_len(l), 0.35, 0.0, &mut rng).unwrap();
        let exact = box_l1_noiseless(&preprocess(&sim.trace), &m).unwrap();
        let it = match box_l1_noisy(&sim.trace, 0.0, &SolverOptions::default()) {
            Ok(s) => s.x,
            Err(e) => return outcome(false, format!("instance {i}: {e}")),
        };
        worst = worst.max(
            exact
                .iter()
                .zip(&it)
                .fold(0.0f64, |a, (p, q)| a.max((p - q).abs())),
        );
        not_suffix += usize::from(!suffix_supported(&exact, d) || !suffix_supported(&it, d));
        moved += usize::from(!suffix_supported(sim.train.values(), d));
    }
    outcome(
        worst <= 1e-5 && not_suffix == 0,
        format!(
            "max deviation {worst:.1e}; {not_suffix} non-suffix solutions; {moved} instances had non-suffix truth"
        ),
    )
}

fn fir_non_identifiability() -> Outcome {
    let mut rng = rng_from_seed(10);
    let mut bad = 0;
    let mut cases = 0;
    for r in 1..=5 {
        for d in r + 1..=r + 4 {
            for f in [
                FirFilter::truncated_ar(0.8, r).unwrap(),
                FirFilter::new((0..r).map(|_| rng.random_range(0.1..2.0)).collect()).unwrap(),
            ] {
                cases += 1;
                let (x0, x1) = fir_collision_pair(&f, d, 6 * d + 1, 1.0).unwrap();
                let binary = x1
                    .values()
                    .iter()
                    .chain(x0.values())
                    .all(|&v| v == 0.0 || v == 1.0);
                let diff = f
                    .decimated(x0.values(), d)
                    .iter()
                    .zip(f.decimated(x1.values(), d))
                    .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
                bad += usize::from(x0 == x1 || !binary || diff > 1e-12);
            }
        }
    }
    outcome(
        bad == 0,
        format!("{bad} failures over {cases} (filter, D) pairs"),
    )
}

fn sweep(
    alphas: Vec<f64>,
    decimations: Vec<usize>,
    sigmas: Vec<f64>,
    probs: Vec<f64>,
) -> SweepConfig {
    SweepConfig {
        alphas,
        decimations,
        sigmas,
        probs,
        len: 1000,
        amplitude: 1.0,
        trials: 50,
        t0: 2,
        seed: 11,
        methods: vec![Method::Nearest],
        eps_rule: EpsRule::Oracle,
        threshold: 0.5,
        lambda: None,
        output: None,
    }
}

fn trends() -> Outcome {
    let mut cfg = sweep(vec![0.5, 0.9], (2..=10).collect(), vec![0.01], vec![0.35]);
    cfg.methods = vec![Method::Nearest, Method::L1box];
    let rows = match run_sweep(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut notes = Vec::new();
    let mut ok = true;
    for alpha in [0.5, 0.9] {
        let avg = |method| {
            let f: Vec<f64> = rows
                .iter()
                .filter(|r| r.alpha == alpha && r.method == method)
                .map(|r| r.f_mean)
                .collect();
            f.iter().sum::<f64>() / f.len() as f64
        };
        let (nn, l1) = (avg(Method::Nearest), avg(Method::L1box));
        ok &= nn > l1;
        notes.push(format!("α={alpha}: nearest {nn:.3} vs l1box {l1:.3}"));
    }

    let mut cfg = sweep(
        vec![0.9],
        vec![5],
        vec![0.01],
        vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
    );
    cfg.trials = 200;
    let f: Vec<f64> = run_sweep(&cfg).unwrap().iter().map(|r| r.f_mean).collect();
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let spread = f.iter().fold(0.0f64, |a, v| a.max((v - mean).abs()));
    ok &= spread <= 0.05;
    notes.push(format!("F vs p within ±{spread:.4}"));

    let mut cfg = sweep(vec![0.5, 0.9], vec![5], vec![0.01, 0.02], vec![0.35]);
    cfg.trials = 200;
    let rows = run_sweep(&cfg).unwrap();
    let cnt = |alpha: f64, sigma: f64| {
        rows.iter()
            .find(|r| r.alpha == alpha && r.sigma == sigma)
            .map(|r| r.count_error_mean)
            .unwrap()
    };
    let mut shown = false;
    for sigma in [0.01, 0.02] {
        let (a5, a9) = (cnt(0.5, sigma), cnt(0.9, sigma));
        ok &= a9 == 0.0;
        if a5 > 0.0 && a9 == 0.0 {
            shown = true;
            notes.push(format!("σ={sigma}: count error α=0.5 {a5:.3}, α=0.9 {a9}"));
        }
    }
    ok &= shown;
    outcome(ok, notes.join("; "))
}

fn amplitude_estimation() -> Outcome {
    let (alpha, d) = (0.9, 5);
    let mut exact = 0;
    let mut close = 0;
    let amps = [0.5, 2.0, 3.0];
    for &a in &amps {
        let m = ArModel::new(alpha, a, d).unwrap();
        for t in 0..100 {
            let clean = simulate(&m, 200, 0.35, 0.0, derive_seed(12, &[t])).unwrap();
            if let Ok(est) = estimate_amplitude(&preprocess(&clean.trace), alpha, d, None, 0.0) {
                exact += usize::from((est.amplitude - a).abs() <= 1e-9);
            }
            let noisy = simulate(&m, 200, 0.35, 0.01, derive_seed(13, &[t])).unwrap();
            if let Ok(est) = estimate_amplitude(&preprocess(&noisy.trace), alpha, d, None, 0.5) {
                close += usize::from((est.amplitude - a).abs() <= 0.05 * a);
            }
        }
    }
    // Per amplitude: 100/100 exact and at least 95/100 close.
    let need_close = 95 * amps.len();
    outcome(
        exact == 100 * amps.len() && close >= need_close,
        format!("α=0.9, D=5, M=200: exact {exact}/300 at σ=0, within 5% {close}/300 at σ=0.01"),
    )
}

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("noiseless exactness", noiseless_exactness),
        ("brute-force equivalence", brute_force_equivalence),
        ("minimum gap α^(D-1)", min_gap_power_law),
        ("bounded-noise robustness", adversarial_robustness),
        ("count recovery", count_recovery),
        ("union bound dominance", bound_dominance),
        ("exact block error", exact_block_error),
        ("sparse alternative", sparse_counterexample),
        ("box-l1 suffix bias", l1_bias),
        ("FIR non-identifiability", fir_non_identifiability),
        ("Monte Carlo trends", trends),
        ("amplitude estimation", amplitude_estimation),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {:<26} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
