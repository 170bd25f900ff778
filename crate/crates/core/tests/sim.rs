use trimcuped::cuped::yuen_cuped_test;
use trimcuped::distributions::{generate_pairs, substream, Family, ScenarioSpec};
use trimcuped::hypothesis::yuen_test;
use trimcuped::sim::{gamma_sweep, run_grid, MethodSummary, SimScenario};
use trimcuped::{Method, Sample, TrimSpec};

fn scenario(family: Family, sd: f64, rho: f64, effect: f64) -> ScenarioSpec {
    ScenarioSpec {
        family,
        mean: 5.0,
        sd,
        zero_fraction: if family == Family::ZeroInflatedLognormal {
            0.9
        } else {
            0.0
        },
        spearman_rho: rho,
        effect,
    }
}

fn sim(scenario: ScenarioSpec, n: usize, reps: usize, methods: &[Method]) -> SimScenario {
    SimScenario {
        name: "test".into(),
        scenario,
        n_per_group: n,
        replications: reps,
        gamma: TrimSpec::new(0.01).unwrap(),
        alpha: 0.05,
        methods: methods.to_vec(),
        seed: 2024,
        missing_covariate_fraction: 0.0,
        track_naive: false,
    }
}

fn rate(r: &trimcuped::sim::SimResult, m: Method) -> &MethodSummary {
    r.method(m).unwrap()
}

#[test]
fn zero_gamma_sweep_collapses_yuen_onto_welch() {
    let s = sim(
        scenario(Family::Lognormal, 1000.0, 0.95, 0.25),
        500,
        30,
        &Method::ALL,
    );
    let results = gamma_sweep(&s, &[0.0, 0.05]).unwrap();
    assert_eq!(results.len(), 2);
    let flat = &results[0];
    for (trimmed, plain) in [
        (Method::Yuen, Method::Welch),
        (Method::YuenCuped, Method::WelchCuped),
    ] {
        let (a, b) = (rate(flat, trimmed), rate(flat, plain));
        assert_eq!(
            (a.rejections, a.mean_std_error, a.mean_delta_hat),
            (b.rejections, b.mean_std_error, b.mean_delta_hat)
        );
    }
    assert!((flat.true_trimmed_effect - flat.true_effect).abs() < 1e-12);
    assert!(results[1].trimming_gap() > 0.0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut s = sim(
        scenario(Family::ZeroInflatedLognormal, 1000.0, 0.95, 0.25),
        400,
        40,
        &Method::ALL,
    );
    s.track_naive = true;
    s.missing_covariate_fraction = 0.1;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_grid(&s).unwrap())
    };
    // Debug text, because an all-degenerate naive summary holds NaN
    let one = format!("{:?}", run(1));
    assert_eq!(one, format!("{:?}", run(3)));
    assert_eq!(one, format!("{:?}", run(8)));
}

#[test]
fn null_scenarios_are_calibrated_and_unbiased() {
    let s = sim(
        scenario(Family::Normal, 100.0, 0.5, 0.0),
        2000,
        400,
        &Method::ALL,
    );
    let r = run_grid(&s).unwrap();
    assert_eq!(r.true_effect, 0.0);
    for m in &r.methods {
        let se = (0.05 * 0.95 / m.replications_used as f64).sqrt();
        assert!(
            (m.rejection_rate - 0.05).abs() <= 3.5 * se,
            "{}: rate {}",
            m.method,
            m.rejection_rate
        );
        assert!(
            m.mean_delta_hat.abs() <= 3.5 * m.delta_hat_se,
            "{}: mean delta {}",
            m.method,
            m.mean_delta_hat
        );
        assert!(
            (m.rejection_rate_se
                - (m.rejection_rate * (1.0 - m.rejection_rate) / m.replications_used as f64)
                    .sqrt())
            .abs()
                < 1e-15
        );
    }
}

#[test]
fn power_does_not_fall_with_sample_size() {
    let mut last = 0.0;
    for n in [25_000, 50_000, 100_000] {
        let s = sim(
            scenario(Family::Lognormal, 1000.0, 0.95, 0.25),
            n,
            150,
            &[Method::Yuen],
        );
        let m = run_grid(&s).unwrap().methods[0].clone();
        assert!(
            m.rejection_rate >= last - m.rejection_rate_se,
            "n {n}: power {} after {last}",
            m.rejection_rate
        );
        last = m.rejection_rate;
    }
}

#[test]
fn light_trimming_beats_welch_on_lognormal() {
    let s = sim(
        scenario(Family::Lognormal, 1000.0, 0.95, 0.25),
        100_000,
        120,
        &[Method::Welch, Method::Yuen],
    );
    for r in gamma_sweep(&s, &[0.001, 0.01]).unwrap() {
        let (welch, yuen) = (rate(&r, Method::Welch), rate(&r, Method::Yuen));
        let se = yuen.rejection_rate_se.hypot(welch.rejection_rate_se);
        assert!(
            yuen.rejection_rate - welch.rejection_rate > 3.0 * se,
            "gamma {}: yuen {} welch {}",
            r.gamma,
            yuen.rejection_rate,
            welch.rejection_rate
        );
    }
}

#[test]
fn correlated_covariates_reduce_the_variance() {
    let spec = scenario(Family::Lognormal, 1000.0, 0.95, 0.0);
    let (c, x) = (
        spec.control_marginal().unwrap(),
        spec.control_marginal().unwrap(),
    );
    let gamma = TrimSpec::new(0.01).unwrap();
    let reps = 200;
    let mut reduced = 0;
    for r in 0..reps {
        let (y1, x1) = generate_pairs(&c, &x, 0.95, 5000, &mut substream(77, 2 * r));
        let (y2, x2) = generate_pairs(&c, &x, 0.95, 5000, &mut substream(77, 2 * r + 1));
        let plain = yuen_test(&y1, &y2, gamma, 0.05).unwrap();
        let s1 = Sample::with_complete_covariates(y1, x1).unwrap();
        let s2 = Sample::with_complete_covariates(y2, x2).unwrap();
        let adjusted = yuen_cuped_test(&s1, &s2, gamma, 0.05).unwrap();
        if adjusted.report.std_error < plain.std_error {
            reduced += 1;
        }
    }
    assert!(
        reduced as f64 >= 0.99 * reps as f64,
        "reduced in {reduced} of {reps}"
    );
}

#[test]
fn masked_covariates_only_cost_power() {
    let base = sim(
        scenario(Family::Normal, 100.0, 0.95, 2.0),
        5000,
        150,
        &[Method::WelchCuped],
    );
    let full = run_grid(&base).unwrap();
    let masked = run_grid(&SimScenario {
        missing_covariate_fraction: 0.5,
        ..base
    })
    .unwrap();
    let (f, m) = (&full.methods[0], &masked.methods[0]);
    assert_eq!(m.replications_used, 150);
    assert!(m.mean_std_error > f.mean_std_error);
    assert!(
        (m.mean_delta_hat - 2.0).abs() < 4.0 * m.delta_hat_se,
        "biased: {}",
        m.mean_delta_hat
    );
}
