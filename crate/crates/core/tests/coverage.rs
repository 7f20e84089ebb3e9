use approx::assert_abs_diff_eq;

use groupcover::coverage_lab::{
    simulate_coverage, width_comparison, GDist, Linking, MuMode, Noise, ProcedureOptions, Scenario,
};
use groupcover::eb_normal::{exact_eb_coverage, mc_bayes_risk, posterior, NormalModelSpec};
use groupcover::quantile_bound::{two_sided_interval, BootstrapConfig};
use groupcover::{Estimator, GroupSummary, Method, RngStream};

fn points_scenario(values: Vec<f64>, procedures: Vec<Method>, reps: usize, seed: u64) -> Scenario {
    Scenario {
        name: "points".into(),
        n_groups: values.len(),
        g_dist: GDist::Points { values },
        planted: vec![],
        noise: Noise::Constant { sigma: 1.0 },
        per_group_n: None,
        alpha: 0.05,
        procedures,
        linking: Linking::Fixed {
            phi: 0.0,
            tau2: 1.0,
        },
        estimator: Estimator::Mom,
        mu_mode: MuMode::Fixed,
        reps,
        seed,
        bootstrap_b: 200,
    }
}

#[test]
fn lab_reproduces_closed_form_eb_coverage() {
    let mus = vec![-2.5, -1.0, 0.0, 1.5, 3.0];
    let reps = 20_000;
    let report =
        simulate_coverage(&points_scenario(mus.clone(), vec![Method::Eb], reps, 31)).unwrap();
    let spec = NormalModelSpec::with(0.0, 1.0, 1.0).unwrap();
    for (g, mu) in report.groups(Method::Eb).zip(&mus) {
        let exact = exact_eb_coverage(*mu, &spec, 0.05).unwrap();
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        assert!(
            (g.coverage - exact).abs() < 4.0 * se,
            "mu {mu}: {} vs {exact}",
            g.coverage
        );
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let scenario = points_scenario(
        vec![-1.0, 0.5, 2.0],
        vec![Method::UmauZ, Method::Eb],
        500,
        5,
    );
    let a = simulate_coverage(&scenario).unwrap();
    let b = simulate_coverage(&Scenario::from_json(&scenario.to_json().unwrap()).unwrap()).unwrap();
    let (mut ja, mut jb) = (Vec::new(), Vec::new());
    a.write_json(&mut ja).unwrap();
    b.write_json(&mut jb).unwrap();
    assert_eq!(ja, jb);
}

#[test]
fn qbound_two_sided_covers_marginally() {
    let reps = 200;
    let groups = 30;
    let mut hits = 0usize;
    for r in 0..reps {
        let mut rng = RngStream::new(4242, r as u64);
        let mus: Vec<f64> = (0..groups).map(|_| rng.normal(1.0, 1.5)).collect();
        let data: Vec<GroupSummary> = mus
            .iter()
            .enumerate()
            .map(|(i, &mu)| GroupSummary::known(format!("g{i}"), rng.normal(mu, 1.0), 1.0))
            .collect();
        let cfg =
            BootstrapConfig::new(100, Estimator::Mom, RngStream::new(4343, r as u64)).unwrap();
        let iv = two_sided_interval(data[0].mean, 1.0, &data, 0.05, &cfg).unwrap();
        hits += iv.contains(mus[0]) as usize;
    }
    let rate = hits as f64 / reps as f64;
    let se = (0.95f64 * 0.05 / reps as f64).sqrt();
    assert!(rate >= 0.95 - 3.0 * se, "coverage {rate}");
}

#[test]
fn posterior_mean_beats_raw_observation_in_bayes_risk() {
    let spec = NormalModelSpec::with(0.0, 1.0, 1.0).unwrap();
    let mut rng = RngStream::new(12, 0);
    let (shrunk, se_a) = mc_bayes_risk(
        |z| posterior(z, &spec).unwrap().mean,
        &spec,
        40_000,
        &mut rng,
    )
    .unwrap();
    let (raw, se_b) = mc_bayes_risk(|z| z, &spec, 40_000, &mut rng).unwrap();
    assert_abs_diff_eq!(shrunk, 0.5, epsilon = 4.0 * se_a);
    assert_abs_diff_eq!(raw, 1.0, epsilon = 4.0 * se_b);
}

#[test]
fn fab_narrower_than_umau_when_groups_cluster() {
    let mut rng = RngStream::new(21, 0);
    let groups: Vec<GroupSummary> = (0..15)
        .map(|i| {
            let xs: Vec<f64> = (0..6)
                .map(|_| rng.normal(0.2 * (i % 3) as f64, 1.0))
                .collect();
            let mean = xs.iter().sum::<f64>() / 6.0;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
            GroupSummary::from_sample(format!("g{i}"), 6, mean, sd)
        })
        .collect();
    let opts = ProcedureOptions::new(0.05, Estimator::Mom, 3);
    let cmp = width_comparison(&groups, (Method::FabT, Method::UmauT), &opts).unwrap();
    assert_eq!(cmp.groups, 15);
    assert!(cmp.fraction_narrower > 0.5, "{cmp:?}");
    assert!(cmp.mean_width_ratio > 1.0);
}
