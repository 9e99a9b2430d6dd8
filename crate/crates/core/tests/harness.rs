use std::f64::consts::FRAC_PI_2;
use std::fs::File;

use verk::harness::{
    convergence_study, csv_rows, efficiency_table, global_error, read_csv, reference_solution, run_studies,
    studies_against, write_csv, HarnessError, StudyConfig, TimingMode,
};
use verk::integrators::Method;
use verk::problems::{self, scalar_toy, ToyKind};
use verk::{matexp, Scheme, Vector};

fn quick() -> StudyConfig {
    StudyConfig {
        repetitions: 1,
        ..StudyConfig::default()
    }
}

fn named(methods: &[Method]) -> Vec<(String, Scheme)> {
    methods.iter().map(|m| (m.id().to_string(), m.scheme())).collect()
}

#[test]
fn reference_of_homogeneous_problem_is_the_exponential() {
    let p = problems::wind_oscillation(0.4, 3.0).unwrap().homogeneous().with_t_end(2.0);
    let y_ref = reference_solution(&p, 1.0 / 64.0, 32).unwrap();
    let exact = matexp(&p.m().scaled(-2.0)).unwrap().apply(p.y0());
    assert!((&y_ref - &exact).amax() < 1e-10);
}

#[test]
fn reference_of_scalar_decay() {
    let p = scalar_toy(1.0, ToyKind::Linear);
    let y_ref = reference_solution(&p, 1.0 / 16.0, 32).unwrap();
    assert!((y_ref[0] - (-1f64).exp()).abs() < 1e-12);
}

#[test]
fn wind_reference_passes_cross_check() {
    let p = problems::wind_oscillation(FRAC_PI_2, 20.0).unwrap().with_t_end(10.0);
    let y_ref = reference_solution(&p, 1.0 / 256.0, 32).unwrap();
    assert!(y_ref.iter().all(|x| x.is_finite()));
}

#[test]
fn under_resolved_reference_is_rejected() {
    // Allen-Cahn at h_ref = 2^-13 leaves the stiff modes under-resolved for
    // one of the two methods.
    let p = problems::allen_cahn(0.01, 32).unwrap();
    assert!(matches!(
        reference_solution(&p, 1.0 / 256.0, 32),
        Err(HarnessError::UnreliableReference { .. })
    ));
}

#[test]
fn global_error_matches_componentwise_loop() {
    let a = Vector::from_vec(vec![0.3, -1.7, 2.25, 1e-3]);
    let b = Vector::from_vec(vec![0.1, -1.2, 2.5, -4.0]);
    let mut brute: f64 = 0.0;
    for i in 0..4 {
        brute = brute.max((a[i] - b[i]).abs());
    }
    assert_eq!(global_error(&a, &b).unwrap(), brute);
}

#[test]
fn exact_method_rows_sit_at_floor() {
    let p = scalar_toy(1.0, ToyKind::Linear);
    let rep = convergence_study(&p, "mverk41", &Method::Mverk41.scheme(), 4..=8, &quick()).unwrap();
    assert!(rep.all_at_floor());
    assert!(rep.fitted_order.is_none());
    assert!(rep.rows.iter().all(|r| r.global_error > 0.0 && r.global_error.is_finite()));
}

#[test]
fn classical_rk4_is_fourth_order_on_quadratic_toy() {
    let p = scalar_toy(1.0, ToyKind::Quadratic);
    let rep = convergence_study(&p, "rk4", &Method::Rk4.scheme(), 3..=7, &quick()).unwrap();
    let order = rep.fitted_order.unwrap();
    assert!((3.7..=4.3).contains(&order), "{order}");
}

#[test]
fn mverk41_fourth_order_on_wind() {
    let p = problems::wind_oscillation(FRAC_PI_2, 20.0).unwrap().with_t_end(10.0);
    let rep = convergence_study(&p, "mverk41", &Method::Mverk41.scheme(), 4..=8, &quick()).unwrap();
    let order = rep.fitted_order.unwrap();
    assert!((3.7..=4.3).contains(&order), "{order}");
    // Asymptotic regime: the last halvings.
    for r in rep.error_ratios().into_iter().skip(2) {
        assert!((12.0..=20.0).contains(&r.unwrap()));
    }
}

#[test]
fn coarse_divergence_is_recorded_not_fatal() {
    // h·λ = 500 at k = 1 is far outside the RK4 stability region.
    let p = scalar_toy(1000.0, ToyKind::Quadratic).with_t_end(2.0);
    let rep = convergence_study(&p, "rk4", &Method::Rk4.scheme(), 1..=10, &quick()).unwrap();
    assert!(rep.rows[0].diverged, "{:?}", rep.rows[0]);
    assert_eq!(rep.rows[0].global_error, f64::INFINITY);
    assert!(!rep.rows.last().unwrap().diverged);
}

#[test]
fn timing_fields_are_consistent_and_linear_in_steps() {
    let p = problems::nls_pseudospectral(16).unwrap();
    let cfg = StudyConfig {
        repetitions: 5,
        ..StudyConfig::default()
    };
    let y_ref = p.y0().clone();
    let reps = studies_against(&p, &named(&[Method::Mverk41]), &[7, 8, 9], &y_ref, &cfg).unwrap();
    let rows = &reps[0].rows;
    for r in rows {
        assert!(r.wall_time_total >= r.wall_time_cache && r.wall_time_cache >= 0.0);
        assert!(r.steps >= 1000);
    }
    let per_step: Vec<f64> = rows.iter().map(|r| r.per_step_time()).collect();
    let mean = per_step.iter().sum::<f64>() / per_step.len() as f64;
    for t in &per_step {
        assert!((t / mean - 1.0).abs() <= 0.2, "{per_step:?}");
    }
}

#[test]
fn parallel_and_sequential_agree_on_errors() {
    let p = problems::wind_oscillation(FRAC_PI_2, 20.0).unwrap().with_t_end(10.0);
    let methods = named(&[Method::Mverk41, Method::Sverk42, Method::ErkKrogstad4]);
    let (_, seq) = run_studies(&p, &methods, 4..=6, &quick()).unwrap();
    let par_cfg = StudyConfig {
        timing: TimingMode::Parallel,
        ..quick()
    };
    let (_, par) = run_studies(&p, &methods, 4..=6, &par_cfg).unwrap();
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(a.method, b.method);
        let ea: Vec<f64> = a.rows.iter().map(|r| r.global_error).collect();
        let eb: Vec<f64> = b.rows.iter().map(|r| r.global_error).collect();
        assert_eq!(ea, eb);
    }
}

#[test]
fn efficiency_table_and_csv_round_trip_on_real_reports() {
    let p = problems::wind_oscillation(FRAC_PI_2, 20.0).unwrap().with_t_end(10.0);
    let (_, reports) = run_studies(&p, &named(&[Method::Sverk41, Method::Mverk41]), 4..=6, &quick()).unwrap();
    let table = efficiency_table(&reports).unwrap();
    let keys: Vec<(&str, i32)> = table.iter().map(|r| (r.method.as_str(), r.k)).collect();
    assert_eq!(
        keys,
        [("mverk41", 4), ("mverk41", 5), ("mverk41", 6), ("sverk41", 4), ("sverk41", 5), ("sverk41", 6)]
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wind.csv");
    write_csv(File::create(&path).unwrap(), &reports).unwrap();
    assert_eq!(read_csv(File::open(&path).unwrap()).unwrap(), csv_rows(&reports));
}

#[test]
fn bad_configurations() {
    let p = scalar_toy(1.0, ToyKind::Linear);
    #[allow(clippy::reversed_empty_ranges)]
    let empty = 5..=4;
    assert!(matches!(
        convergence_study(&p, "m", &Method::Mverk41.scheme(), empty, &quick()),
        Err(HarnessError::Config(_))
    ));
    assert!(matches!(run_studies(&p, &[], 4..=5, &quick()), Err(HarnessError::Config(_))));
    // t_end = 1 is not a multiple of 2^1 = 2.
    assert!(convergence_study(&p, "m", &Method::Mverk41.scheme(), -1..=2, &quick()).is_err());
}
