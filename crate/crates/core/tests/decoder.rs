use binspike::decoder::{decode_c_sequence, nearest_position_probed};
use binspike::model::simulate_with_rng;
use binspike::rng::rng_from_seed;
use binspike::{
    build_system_matrices, decode_block_nn, decode_train, decode_train_par, estimate_counts,
    measure, preprocess, simulate, ArModel, Codebook, DecodeMode, SpikeTrain, Trace,
};
use ndarray::Array1;
use proptest::prelude::*;
use rand::Rng;

fn brute_force(c: f64, m: &ArModel) -> u64 {
    let d = m.decimation;
    let h = m.block_weights();
    let mut best = (f64::INFINITY, 0u64);
    for k in 0..(1u64 << d) {
        let v: f64 = (0..d)
            .filter(|&s| (k >> (d - 1 - s)) & 1 == 1)
            .map(|s| m.amplitude * h[s])
            .sum();
        let err = (c - v).abs();
        // Strictly smaller, or the lower value on an exact tie.
        if err < best.0 {
            best = (err, k);
        }
    }
    best.1
}

#[test]
fn nearest_matches_exhaustive_search() {
    let mut rng = rng_from_seed(5);
    for alpha in [0.5, 0.7, 0.9] {
        for d in 2..=10 {
            let m = ArModel::new(alpha, 1.0, d).unwrap();
            let cb = Codebook::build(&m).unwrap();
            let top = cb.theta_max();
            for _ in 0..300 {
                let c = rng.random_range(-0.2..top + 0.2);
                let (v, _) = decode_block_nn(c, &cb).unwrap();
                let want = codeword_value(brute_force(c, &m), &m);
                let got: f64 = v.iter().zip(m.block_weights()).map(|(a, b)| a * b).sum();
                assert!((got - want).abs() < 1e-12, "α={alpha} D={d} c={c}");
            }
        }
    }
}

fn codeword_value(k: u64, m: &ArModel) -> f64 {
    let v = binspike::codeword(k, m).unwrap();
    v.iter().zip(m.block_weights()).map(|(a, b)| a * b).sum()
}

#[test]
fn exact_mode_recovers_clean_trains() {
    let mut rng = rng_from_seed(17);
    for alpha in [0.3, 0.5, 0.9] {
        for d in 1..=10 {
            let m = ArModel::new(alpha, 1.0, d).unwrap();
            let cb = Codebook::build(&m).unwrap();
            for _ in 0..100 {
                let p = rng.random_range(0.0..1.0);
                let sim = simulate_with_rng(&m, 30, p, 0.0, &mut rng).unwrap();
                let rep = decode_train(&sim.trace, &cb, DecodeMode::Exact).unwrap();
                assert_eq!(rep.train, sim.train);
                assert!(rep.residuals.iter().all(|&r| r <= 1e-9));
            }
        }
    }
}

#[test]
fn bounded_noise_below_a_quarter_gap_is_harmless() {
    let mut rng = rng_from_seed(23);
    for alpha in [0.5, 0.9] {
        for d in 2..=8 {
            let m = ArModel::new(alpha, 1.0, d).unwrap();
            let cb = Codebook::build(&m).unwrap();
            let b = cb.min_gap().unwrap() / 4.0 - 1e-9;
            for _ in 0..50 {
                let sim = simulate_with_rng(&m, 40, 0.35, 0.0, &mut rng).unwrap();
                let z: Vec<f64> = sim
                    .trace
                    .values
                    .iter()
                    .map(|y| y + if rng.random_bool(0.5) { b } else { -b })
                    .collect();
                let t = Trace::with_noise(z, m, b).unwrap();
                let rep = decode_train(&t, &cb, DecodeMode::Nearest).unwrap();
                assert_eq!(rep.train, sim.train, "α={alpha} D={d}");
            }
        }
    }
}

#[test]
fn parallel_and_sequential_decoding_agree() {
    let m = ArModel::new(0.8, 1.5, 7).unwrap();
    let cb = Codebook::build(&m).unwrap();
    for seed in 0..5 {
        let sim = simulate(&m, 2000, 0.4, 0.03, seed).unwrap();
        let a = decode_train(&sim.trace, &cb, DecodeMode::Nearest).unwrap();
        let b = decode_train_par(&sim.trace, &cb, DecodeMode::Nearest).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn c_sequence_equals_block_operator() {
    for (alpha, d) in [(0.5, 2), (0.85, 3), (0.6, 5)] {
        let m = ArModel::new(alpha, 1.0, d).unwrap();
        let sim = simulate(&m, 40, 0.5, 0.0, 3).unwrap();
        let sys = build_system_matrices(&m, 40).unwrap();
        let hx = sys.h_d.dot(&Array1::from(sim.train.values().to_vec()));
        let c = preprocess(&sim.trace);
        for (a, b) in c.iter().zip(hx.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn dense_and_streaming_measurements_agree() {
    let mut rng = rng_from_seed(8);
    for d in 1..=6 {
        let m = ArModel::new(0.77, 1.0, d).unwrap();
        let mm = 511 / d + 1;
        let sim = simulate_with_rng(&m, mm, 0.3, 0.0, &mut rng).unwrap();
        let sys = build_system_matrices(&m, mm).unwrap();
        let dense = sys
            .s_d
            .dot(&sys.g_alpha)
            .dot(&Array1::from(sim.train.values().to_vec()));
        for (a, b) in dense.iter().zip(&sim.trace.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn counts_follow_blocks() {
    let m = ArModel::new(0.7, 2.0, 4).unwrap();
    let cb = Codebook::build(&m).unwrap();
    let sim = simulate(&m, 100, 0.5, 0.05, 1).unwrap();
    let rep = decode_train(&sim.trace, &cb, DecodeMode::Nearest).unwrap();
    assert_eq!(rep.counts, estimate_counts(&rep.train));
    assert!(rep.counts[0] <= 1);
    assert!(rep.residuals.iter().all(|&r| r >= 0.0));
    assert_eq!(rep.amplitude_used, 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn probes_stay_within_d_plus_one(alpha in 0.05f64..0.95, d in 1usize..=12, u in -0.5f64..1.5) {
        let cb = Codebook::build(&ArModel::new(alpha, 1.0, d).unwrap()).unwrap();
        let c = u * cb.theta_max();
        let (j, probes) = nearest_position_probed(cb.thetas(), c);
        prop_assert!(probes <= d + 1);
        let best = cb.thetas().iter().map(|t| (t - c).abs()).fold(f64::INFINITY, f64::min);
        prop_assert!(((cb.thetas()[j] - c).abs() - best).abs() < 1e-15);
    }

    #[test]
    fn decoded_train_is_binary(seed in 0u64..1000, sigma in 0.0f64..0.5) {
        let m = ArModel::new(0.9, 1.0, 5).unwrap();
        let cb = Codebook::build(&m).unwrap();
        let sim = simulate(&m, 20, 0.35, sigma, seed).unwrap();
        let rep = decode_c_sequence(&preprocess(&sim.trace), &cb, DecodeMode::Nearest, true).unwrap();
        prop_assert!(rep.train.values().iter().all(|&v| v == 0.0 || v == 1.0));
        prop_assert_eq!(rep.train.len(), sim.train.len());
    }

    #[test]
    fn clean_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..8).prop_map(|b| b)) {
        // Pad to a valid length for D = 3.
        let d = 3;
        let len = ((bits.len() - 1) / d + 1) * d + 1;
        let mut padded = bits.clone();
        padded.resize(len, false);
        let m = ArModel::new(0.45, 1.0, d).unwrap();
        let train = SpikeTrain::from_bits(&padded, 1.0, d).unwrap();
        let trace = Trace::clean(measure(&train, 0.45).unwrap(), m).unwrap();
        let cb = Codebook::build(&m).unwrap();
        prop_assert_eq!(decode_train(&trace, &cb, DecodeMode::Exact).unwrap().train, train);
    }
}
