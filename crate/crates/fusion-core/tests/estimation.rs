use fusion_core::estimation::{
    empirical_law, monte_carlo, obedient_projection, one_step, one_step_from, sample,
    sample_stream, Dataset, MonteCarloConfig, MonteCarloRow, Record,
};
use fusion_core::frameworks::{Framework, FrameworkKind, FusedFramework};
use fusion_core::model::{check_alignment_tol, FusedLaw};
use fusion_core::verify::{appendix_c_law, random_instance};
use fusion_core::{AxisSet, Error, Pmf, PmfMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn spaces(law: &FusedLaw) -> Vec<AxisSet> {
    law.sources.iter().map(|p| p.space().clone()).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn scenario_ii_law() -> (Framework, FusedLaw) {
    let fw = Framework::with_defaults(FrameworkKind::TransportIi);
    let law = appendix_c_law(&fw, 0.5).unwrap();
    (fw, law)
}

#[test]
fn sample_rejects_empty_request() {
    let (_, law) = scenario_ii_law();
    assert!(matches!(sample(&law, 0, 1), Err(Error::InvalidArgument(_))));
}

#[test]
fn sample_is_deterministic_per_seed_and_stream() {
    let (_, law) = scenario_ii_law();
    let a = sample(&law, 500, 17).unwrap();
    let b = sample(&law, 500, 17).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_ne!(a.records, sample(&law, 500, 18).unwrap().records);
    assert_ne!(a.records, sample_stream(&law, 500, 17, 1).unwrap().records);
}

#[test]
fn sample_frequencies_pass_chi_square() {
    let (_, law) = scenario_ii_law();
    let n = 100_000;
    let d = sample(&law, n, 2024).unwrap();
    let cells: Vec<usize> = law.sources.iter().map(|p| p.space().len()).collect();
    let counts = d.counts(&cells).unwrap();
    let mut stat = 0.0;
    let mut df = 0usize;
    for (j, (p, c)) in law.sources.iter().zip(&counts).enumerate() {
        for (m, k) in p.mass().iter().zip(c) {
            let expected = n as f64 * law.lambda[j] * m;
            stat += (*k as f64 - expected).powi(2) / expected;
            df += 1;
        }
    }
    let p_value = 1.0 - ChiSquared::new((df - 1) as f64).unwrap().cdf(stat);
    assert!(p_value > 1e-6, "chi-square {stat} on {} df, p = {p_value}", df - 1);
}

#[test]
fn full_enumeration_gives_uniform_law() {
    let (_, law) = scenario_ii_law();
    let sp = spaces(&law);
    let records: Vec<Record> = sp
        .iter()
        .enumerate()
        .flat_map(|(source, s)| (0..s.len()).map(move |cell| Record { source, cell }))
        .collect();
    let total = records.len() as f64;
    let d = Dataset {
        records,
        seed: 0,
        stream: 0,
    };
    let emp = empirical_law(&d, &sp).unwrap();
    assert_eq!(emp.floored_cells, 0);
    for (j, (p, s)) in emp.law.sources.iter().zip(&sp).enumerate() {
        let u = 1.0 / s.len() as f64;
        assert!(p.mass().iter().all(|m| (m - u).abs() < 1e-15));
        assert!((emp.law.lambda[j] - s.len() as f64 / total).abs() < 1e-15);
    }
}

#[test]
fn empirical_law_matches_counting_and_floors_only_empty_cells() {
    let (_, law) = scenario_ii_law();
    let sp = spaces(&law);
    let d = sample(&law, 60, 5).unwrap();
    let emp = empirical_law(&d, &sp).unwrap();
    let mut zero = 0;
    for (j, p) in emp.law.sources.iter().enumerate() {
        let nj = d.records.iter().filter(|r| r.source == j).count() as f64;
        assert!((emp.law.lambda[j] - nj / 60.0).abs() < 1e-15);
        for (cell, m) in p.mass().iter().enumerate() {
            let k = d
                .records
                .iter()
                .filter(|r| r.source == j && r.cell == cell)
                .count();
            if k == 0 {
                zero += 1;
                assert!(*m > 0.0 && *m < 1e-11, "floored cell mass {m}");
            } else {
                assert!((m - k as f64 / nj).abs() < 1e-10);
            }
        }
    }
    assert!(zero > 0, "the sample is small enough to leave empty cells");
    assert_eq!(emp.floored_cells, zero);
}

#[test]
fn empirical_law_requires_every_source() {
    let (_, law) = scenario_ii_law();
    let d = Dataset {
        records: vec![Record { source: 0, cell: 0 }],
        seed: 0,
        stream: 0,
    };
    assert!(matches!(
        empirical_law(&d, &spaces(&law)),
        Err(Error::Positivity(_))
    ));
}

#[test]
fn out_of_range_records_are_rejected() {
    let (_, law) = scenario_ii_law();
    let d = Dataset {
        records: vec![Record { source: 0, cell: 10_000 }],
        seed: 0,
        stream: 0,
    };
    assert!(empirical_law(&d, &spaces(&law)).is_err());
}

#[test]
fn obedient_projection_is_aligned_for_every_framework() {
    let mut r = rng(11);
    for kind in FrameworkKind::ALL {
        let inst = random_instance(kind, &mut r).unwrap();
        let law = inst.law().unwrap();
        let d = sample(&law, 3000, 3).unwrap();
        let emp = empirical_law(&d, &spaces(&law)).unwrap();
        let proj = obedient_projection(&inst.framework, &emp.law).unwrap();
        let rep = check_alignment_tol(&proj.law, &proj.q, inst.framework.spec(), 1e-9).unwrap();
        assert!(rep.aligned, "{kind}: {rep:?}");
        assert_eq!(proj.law.lambda, emp.law.lambda);
    }
}

#[test]
fn obedient_projection_fixes_laws_in_the_model() {
    let mut r = rng(12);
    for kind in FrameworkKind::ALL {
        let inst = random_instance(kind, &mut r).unwrap();
        let law = inst.law().unwrap();
        let proj = obedient_projection(&inst.framework, &law).unwrap();
        assert!(
            max_diff(&proj.law.obs_mass(), &law.obs_mass()) < 1e-12,
            "{kind}"
        );
    }
}

/// Total-variation distance between two observed laws.
fn tv(a: &FusedLaw, b: &FusedLaw) -> f64 {
    a.obs_mass()
        .iter()
        .zip(b.obs_mass())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / 2.0
}

#[test]
fn obedient_projection_is_consistent() {
    let mut r = rng(13);
    let inst = random_instance(FrameworkKind::TransportIiia, &mut r).unwrap();
    let law = inst.law().unwrap();
    let mean_distance = |n: usize| {
        (0..50)
            .map(|rep| {
                let d = sample_stream(&law, n, 99, rep).unwrap();
                let emp = empirical_law(&d, &spaces(&law)).unwrap();
                tv(&obedient_projection(&inst.framework, &emp.law).unwrap().law, &law)
            })
            .sum::<f64>()
            / 50.0
    };
    let ratio = mean_distance(4000) / mean_distance(1000);
    assert!((0.4..=0.6).contains(&ratio), "distance ratio {ratio}");
}

#[test]
fn disobedient_one_step_reduces_to_plug_in() {
    let mut r = rng(14);
    let inst = random_instance(FrameworkKind::TransportIiia, &mut r).unwrap();
    let law = inst.law().unwrap();
    let d = sample(&law, 20_000, 4).unwrap();
    let est = one_step(&d, &inst.framework, false).unwrap();
    assert_eq!(est.floored_cells, 0);
    assert!(est.correction.abs() < 1e-12, "correction {}", est.correction);
    assert!((est.estimate - est.plug_in).abs() < 1e-12);
}

#[test]
fn one_step_at_the_true_law_is_centered_on_the_truth() {
    let (fw, law) = scenario_ii_law();
    let truth = fw.phi(&law).unwrap();
    let d = sample(&law, 8000, 8).unwrap();
    let est = one_step_from(&d, &fw, &law, false).unwrap();
    assert_eq!(est.plug_in, truth);
    assert!((est.estimate - truth).abs() < 4.0 * est.se);
}

/// Each source law shrunk towards the uniform law, a deliberately biased initial estimate.
fn shrink(p: &FusedLaw, alpha: f64) -> FusedLaw {
    let sources = p
        .sources
        .iter()
        .map(|s| {
            let u = 1.0 / s.space().len() as f64;
            let w = s.mass().iter().map(|m| (1.0 - alpha) * m + alpha * u).collect();
            Pmf::from_weights(s.space().clone(), w, PmfMode::Strict).unwrap()
        })
        .collect();
    FusedLaw::new(p.lambda.clone(), sources).unwrap()
}

#[test]
fn projected_one_step_removes_the_bias_of_a_disobedient_initial_estimate() {
    let mut r = rng(15);
    let inst = random_instance(FrameworkKind::TransportIiia, &mut r).unwrap();
    let fw = &inst.framework;
    let law = inst.law().unwrap();
    let truth = fw.phi(&law).unwrap();
    {
        let (mut plug, mut os) = (0.0, 0.0);
        let reps = 300;
        for rep in 0..reps {
            let d = sample_stream(&law, 4000, 77, rep).unwrap();
            let emp = empirical_law(&d, &spaces(&law)).unwrap();
            let est = one_step_from(&d, fw, &shrink(&emp.law, 0.4), true).unwrap();
            plug += est.plug_in;
            os += est.estimate;
        }
        let plug_bias = (plug / reps as f64 - truth).abs();
        let os_bias = (os / reps as f64 - truth).abs();
        println!("one-step bias {os_bias:.3e}, plug-in bias {plug_bias:.3e}");
        assert!(
            os_bias < plug_bias,
            "one-step bias {os_bias} vs plug-in bias {plug_bias}"
        );
    }
}

fn small_config(threads: usize) -> MonteCarloConfig {
    MonteCarloConfig {
        n_grid: vec![300, 1200],
        reps: 100,
        seed: 42,
        obedient: true,
        threads,
    }
}

#[test]
fn monte_carlo_is_deterministic_and_thread_independent() {
    let (fw, law) = scenario_ii_law();
    let a = monte_carlo(&fw, &law, &small_config(1)).unwrap();
    let b = monte_carlo(&fw, &law, &small_config(1)).unwrap();
    let c = monte_carlo(&fw, &law, &small_config(3)).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_csv(), c.to_csv());
}

#[test]
fn monte_carlo_report_is_well_formed() {
    let (fw, law) = scenario_ii_law();
    let report = monte_carlo(&fw, &law, &small_config(2)).unwrap();
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), MonteCarloRow::COLUMNS.join(","));
    assert_eq!(lines.count(), 2);
    for row in &report.rows {
        assert_eq!(row.reps + row.failures, 100);
        assert!((0.0..=1.0).contains(&row.coverage));
        assert!(row.emp_sd > 0.0 && row.mean_se > 0.0);
    }
    // sqrt(n) * bias stays within Monte Carlo error as n grows.
    let [a, b] = [&report.rows[0], &report.rows[1]];
    let tol = 3.0 * ((a.n as f64).sqrt() * a.bias_mc_se + (b.n as f64).sqrt() * b.bias_mc_se);
    assert!(b.sqrt_n_bias.abs() <= a.sqrt_n_bias.abs() + tol);
}

#[test]
fn monte_carlo_rejects_bad_configurations() {
    let (fw, law) = scenario_ii_law();
    let mut cfg = small_config(1);
    cfg.reps = 99;
    assert!(matches!(
        monte_carlo(&fw, &law, &cfg),
        Err(Error::InvalidArgument(_))
    ));
    let mut cfg = small_config(1);
    cfg.n_grid = vec![0];
    assert!(monte_carlo(&fw, &law, &cfg).is_err());
}
