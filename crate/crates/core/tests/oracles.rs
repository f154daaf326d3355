use qsurrogate_core::baselines::{mean_l, TwoMomentSpec, Variant};
use qsurrogate_core::dists::{fit_h2_balanced, Dist, ParametricDist, PhaseType};
use qsurrogate_core::seed::rng_from_seed;
use qsurrogate_core::simqueue::{mmc_exact, replication_ci, simulate, IdleRule, QueueSpec, SimConfig};

fn erlang(k: u32, mean: f64) -> Dist {
    Dist::Parametric(ParametricDist::erlang_with_mean(k, mean).unwrap())
}

/// Root of `s = A*(mu (1 - s))` for Erlang-2 inter-arrivals with rate 2,
/// by fixed-point iteration from zero.
fn gi_m1_sigma(mu: f64) -> f64 {
    let lst = |s: f64| (2.0 / (2.0 + s)).powi(2);
    let mut sigma = 0.0;
    for _ in 0..10_000 {
        sigma = lst(mu * (1.0 - sigma));
    }
    sigma
}

#[test]
fn klb_tracks_e2_m1_simulation() {
    let rho = 0.7;
    let mu = 1.0 / rho;
    let spec = QueueSpec::homogeneous(erlang(2, 1.0), Dist::exponential(rho).unwrap(), 1).unwrap();
    let cfg = SimConfig {
        num_arrivals: 2_000_000,
        seed: 11,
        truncation: 500,
        ..SimConfig::default()
    };
    let sim = simulate(&spec, &cfg).unwrap();

    // GI/M/1 closed form: L = rho / (1 - sigma).
    let exact = rho / (1.0 - gi_m1_sigma(mu));
    assert!((sim.mean_l - exact).abs() / exact < 0.02, "sim {} exact {}", sim.mean_l, exact);

    let klb = mean_l(
        &TwoMomentSpec { lambda: 1.0, mu, c: 1, ca2: 0.5, cs2: 1.0 },
        Variant::Klb,
    )
    .unwrap();
    assert!((klb - sim.mean_l).abs() / sim.mean_l < 0.10, "klb {} sim {}", klb, sim.mean_l);
}

#[test]
fn mm5_mean_matches_erlang_c() {
    let (c, rho) = (5usize, 0.8);
    let mu = 1.0 / (c as f64 * rho);
    let spec = QueueSpec::homogeneous(
        Dist::exponential(1.0).unwrap(),
        Dist::exponential(1.0 / mu).unwrap(),
        c,
    )
    .unwrap();
    let cfg = SimConfig {
        num_arrivals: 2_000_000,
        seed: 3,
        ..SimConfig::default()
    };
    let sim = simulate(&spec, &cfg).unwrap();
    let exact = mmc_exact(1.0, mu, c, 500).unwrap();
    assert!((sim.mean_l - exact.mean_l).abs() / exact.mean_l < 0.01);
}

#[test]
fn littles_law_within_replication_error() {
    let spec = QueueSpec::homogeneous(erlang(3, 1.0), erlang(2, 1.5), 2).unwrap();
    let cfg = SimConfig {
        num_arrivals: 200_000,
        seed: 9,
        ..SimConfig::default()
    };
    let ci = replication_ci(&spec, &cfg, 10, IdleRule::Random).unwrap();
    let se = ci.std_dev / (ci.reps as f64).sqrt();
    let lambda_w: Vec<f64> = ci
        .seeds
        .iter()
        .map(|&s| {
            let r = simulate(&spec, &SimConfig { seed: s, ..cfg.clone() }).unwrap();
            r.throughput() * r.mean_sojourn
        })
        .collect();
    let lw = lambda_w.iter().sum::<f64>() / lambda_w.len() as f64;
    assert!((ci.mean_l - lw).abs() < 3.0 * se.max(1e-3), "L {} vs lambda W {}", ci.mean_l, lw);
}

#[test]
fn erlang_two_phase_type_moments() {
    let ph = PhaseType::erlang(2, 2.0).unwrap();
    let m = ph.moments(3).unwrap();
    // k (k+1) ... (k+j-1) / rate^j for k = 2, rate = 2.
    let expected = [1.0, 1.5, 3.0];
    for (got, want) in m.as_slice().iter().zip(expected) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn draw_means_match_first_moment() {
    let laws = [
        Dist::exponential(2.0).unwrap(),
        erlang(4, 1.0),
        Dist::Parametric(fit_h2_balanced(1.0, 4.0).unwrap()),
        Dist::Parametric(ParametricDist::lognormal_with_mean_scv(1.0, 4.0).unwrap()),
        Dist::Parametric(ParametricDist::gamma_with_mean_scv(0.5, 0.3).unwrap()),
        Dist::Ph(PhaseType::erlang(3, 1.5).unwrap()),
    ];
    let n = 1_000_000;
    for (i, d) in laws.iter().enumerate() {
        let mut rng = rng_from_seed(100 + i as u64);
        let s = d.sampler();
        let mut sum = 0.0;
        for _ in 0..n {
            sum += s.sample(&mut rng);
        }
        let m = d.moments(2).unwrap();
        let se = ((m[1] - m[0] * m[0]) / n as f64).sqrt();
        let mean = sum / n as f64;
        assert!((mean - m[0]).abs() < 4.0 * se, "{}: {} vs {}", d.family(), mean, m[0]);
    }
}
