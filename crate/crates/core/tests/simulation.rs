use crnsens::model::{builtin, Kinetics, OutputFunction, ReactionNetwork, State};
use crnsens::sim::{
    crp_pair, evaluate_coupled_difference, evaluate_integral, generate_poisson, simulate_terminal,
    split_clock_pair, RngStream,
};
use crnsens::oracle::brute_force_d_theta;
use crnsens::stats::aggregate;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn birth_death() -> ReactionNetwork {
    builtin("birth-death").unwrap()
}

/// Chi-square p-value of `draws` against Poisson(r), pooling the tails so
/// every bin expects at least 5 draws.
fn poisson_gof(r: f64, draws: &[u64]) -> f64 {
    let n = draws.len() as f64;
    let dist = Poisson::new(r).unwrap();
    let max = *draws.iter().max().unwrap() as usize;
    let mut counts = vec![0u64; max + 1];
    for &k in draws {
        counts[k as usize] += 1;
    }
    // Bins [lo, hi) over k, with the last bin open-ended.
    let mut edges = vec![0usize];
    let mut acc = 0.0;
    for k in 0.. {
        acc += dist.pmf(k as u64) * n;
        if acc >= 5.0 {
            edges.push(k + 1);
            acc = 0.0;
        }
        let tail = (1.0 - statrs::distribution::DiscreteCDF::cdf(&dist, k as u64)) * n;
        if tail < 5.0 {
            break;
        }
    }
    let last = edges.len() - 1;
    edges[last] = usize::MAX;
    let mut stat = 0.0;
    let bins = edges.len() - 1;
    for b in 0..bins {
        let (lo, hi) = (edges[b], edges[b + 1]);
        let expected = if hi == usize::MAX {
            n * (1.0 - (0..lo).map(|k| dist.pmf(k as u64)).sum::<f64>())
        } else {
            n * (lo..hi).map(|k| dist.pmf(k as u64)).sum::<f64>()
        };
        let observed: u64 = counts.iter().enumerate().filter(|(k, _)| *k >= lo && *k < hi).map(|(_, c)| c).sum();
        stat += (observed as f64 - expected).powi(2) / expected;
    }
    ChiSquared::new((bins - 1) as f64).unwrap().sf(stat)
}

#[test]
fn poisson_sampler_passes_chi_square() {
    for (i, r) in [0.5, 3.0, 20.0, 45.0].into_iter().enumerate() {
        let mut rng = RngStream::new(11, i as u64);
        let draws: Vec<u64> = (0..100_000).map(|_| generate_poisson(r, &mut rng)).collect();
        let p = poisson_gof(r, &draws);
        assert!(p > 0.01, "r = {r}: chi-square p = {p}");
    }
}

#[test]
fn poisson_zero_rate_is_zero() {
    let mut rng = RngStream::new(1, 0);
    assert!((0..1000).all(|_| generate_poisson(0.0, &mut rng) == 0));
}

fn terminal_counts(kin: &Kinetics, x0: &State, t: f64, seed: u64, n: u64) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .map(|i| simulate_terminal(kin, x0, t, &mut RngStream::new(seed, i)).unwrap()[0] as f64)
        .collect()
}

#[test]
fn ssa_mean_matches_birth_death_closed_form() {
    let net = birth_death();
    let kin = Kinetics::new(&net).unwrap();
    for t in [2.0, 20.0] {
        let xs = terminal_counts(&kin, net.initial_state(), t, 5, 20_000);
        let s = aggregate(&xs).unwrap();
        let exact = 1.0 - (-0.1f64 * t).exp();
        assert!((s.mean - exact).abs() < 4.0 * s.std_dev, "T={t}: {} vs {exact}", s.mean);
    }
}

#[test]
fn time_integral_matches_closed_form() {
    let net = birth_death();
    let kin = Kinetics::new(&net).unwrap();
    let f = OutputFunction::species(0);
    let t = 20.0;
    let vals: Vec<f64> = (0..20_000u64)
        .into_par_iter()
        .map(|i| evaluate_integral(&kin, net.initial_state(), t, &f, &mut RngStream::new(6, i)).unwrap())
        .collect();
    let s = aggregate(&vals).unwrap();
    // ∫_0^T (1 − e^{−0.1 s}) ds
    let exact = t - 10.0 * (1.0 - (-0.1f64 * t).exp());
    assert!((s.mean - exact).abs() < 4.0 * s.std_dev, "{} vs {exact}", s.mean);
}

/// Asymptotic two-sample Kolmogorov-Smirnov p-value.
fn ks_p_value(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let lambda = (n * m / (n + m)).sqrt() * d;
    // Q(λ) = 1 to double precision here, and the series converges slowly.
    if lambda < 0.2 {
        return 1.0;
    }
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn coupled_marginals_match_plain_simulation() {
    let net = birth_death();
    let shifted = net.with_param("theta2", 0.2).unwrap();
    let kin = Kinetics::new(&net).unwrap();
    let kin_h = Kinetics::new(&shifted).unwrap();
    let x0 = net.initial_state();
    let t = 20.0;
    let n = 10_000u64;
    let plain = terminal_counts(&kin, x0, t, 21, n);
    let plain_h = terminal_counts(&kin_h, x0, t, 22, n);
    let crp: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let o = crp_pair(&kin_h, &kin, x0, t, &mut RngStream::new(23, i)).unwrap();
            (o.x1[0] as f64, o.x2[0] as f64)
        })
        .collect();
    let cfd: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let o = split_clock_pair(&kin_h, &kin, x0, x0, t, false, &mut RngStream::new(24, i))
                .unwrap();
            (o.x1[0] as f64, o.x2[0] as f64)
        })
        .collect();
    for (name, pairs) in [("crp", crp), ("cfd", cfd)] {
        let (shifted_side, nominal): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let p = ks_p_value(&nominal, &plain);
        assert!(p > 0.01, "{name} nominal marginal: KS p = {p}");
        let p = ks_p_value(&shifted_side, &plain_h);
        assert!(p > 0.01, "{name} shifted marginal: KS p = {p}");
    }
}

#[test]
fn ks_detects_a_shift() {
    let a: Vec<f64> = (0..2000).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..2000).map(|i| i as f64 + 200.0).collect();
    assert!(ks_p_value(&a, &b) < 1e-6);
    assert!(ks_p_value(&a, &a) > 0.99);
}

#[test]
fn coupled_difference_matches_brute_force() {
    let net = birth_death();
    let kin = Kinetics::new(&net).unwrap();
    let f = OutputFunction::species(0);
    let (x, t) = (State(vec![3]), 4.0);
    for k in 0..2 {
        let moved = x.shifted(&net.reactions()[k].stoich).unwrap();
        let vals: Vec<f64> = (0..10_000u64)
            .into_par_iter()
            .map(|i| {
                evaluate_coupled_difference(&kin, &moved, &x, t, &f, &mut RngStream::new(31, i))
                    .unwrap()
            })
            .collect();
        let s = aggregate(&vals).unwrap();
        let exact = brute_force_d_theta(&net, &x, &f, t, k, &[80]).unwrap();
        assert!((s.mean - exact).abs() < 4.0 * s.std_dev, "k={k}: {} vs {exact}", s.mean);
    }
}

#[test]
fn streams_are_reproducible() {
    let net = builtin("toggle-switch").unwrap();
    let kin = Kinetics::new(&net).unwrap();
    let run = |i| simulate_terminal(&kin, net.initial_state(), 10.0, &mut RngStream::new(9, i)).unwrap();
    assert_eq!(run(4), run(4));
    assert_ne!((0..20).map(run).collect::<Vec<_>>(), (20..40).map(run).collect::<Vec<_>>());
}
