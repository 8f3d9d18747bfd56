use std::f64::consts::PI;

use she_core::convergence::{coupled_error_study, StudyConfig};
use she_core::covariance::{kappa, CovarianceModel, DEFAULT_KAPPA_GRID};
use she_core::galerkin::{l2_norm_sq, GalerkinSystem, InitialData, StateVector, SystemSpec};
use she_core::integrators::StepScheme;
use she_core::montecarlo::{decay_rate_fit, mean_square_curve, DecayFit, EnsembleConfig};
use she_core::stability::{check_exact, classify_curve};

const PI2: f64 = PI * PI;

fn a111_sq() -> f64 {
    let a = 8.0 * 2f64.sqrt() / (3.0 * PI);
    a * a
}

fn scalar(beta1: f64) -> GalerkinSystem {
    let model = CovarianceModel::weights(vec![1.0]).unwrap();
    GalerkinSystem::assemble(SystemSpec::new(1, 1, 0.0, beta1, model)).unwrap()
}

#[test]
fn scalar_per_step_ratio() {
    let tau = 0.01;
    let cfg = EnsembleConfig::new(10_000, 21, tau, 50, StepScheme::ImplicitEuler);
    let curve = mean_square_curve(&scalar(1.0), &cfg, &StateVector(vec![1.0])).unwrap();
    let fit = decay_rate_fit(&curve, 1.0).unwrap();
    let ratio = (fit.rate * tau).exp();
    let exact = (1.0 + tau * a111_sq()) / (1.0 + tau * PI2).powi(2);
    let se = ratio * tau * fit.combined_stderr();
    assert!(
        (ratio - exact).abs() <= 3.0 * se,
        "{ratio} vs {exact}, se {se}"
    );
}

#[test]
fn confidence_intervals_cover_the_true_moment() {
    let tau = 1e-3;
    let steps = 250;
    let r = (1.0 + tau * a111_sq()) / (1.0 + tau * PI2).powi(2);
    let sys = scalar(1.0);
    let (mut covered, mut total) = (0usize, 0usize);
    for rep in 0..50u64 {
        let cfg = EnsembleConfig::new(1000, 10_000 + rep, tau, steps, StepScheme::ImplicitEuler);
        let curve = mean_square_curve(&sys, &cfg, &StateVector(vec![1.0])).unwrap();
        for n in 1..=steps {
            let truth = r.powi(n as i32);
            total += 1;
            if (curve.mean_sq[n] - truth).abs() <= curve.ci_halfwidth[n] {
                covered += 1;
            }
        }
    }
    let frac = covered as f64 / total as f64;
    assert!(frac >= 0.9, "coverage {frac}");
}

#[test]
fn curve_respects_decay_envelope() {
    let model = CovarianceModel::power_law(1.001, 10).unwrap();
    let kap = kappa(&model, DEFAULT_KAPPA_GRID).unwrap();
    let sys = GalerkinSystem::assemble(SystemSpec::new(6, 6, 2.0, 1.0, model)).unwrap();
    let margin = check_exact(PI2, 2.0, 1.0, kap).unwrap().margin.unwrap();
    assert!(margin > 0.0);
    let u0 = InitialData::PolyX1mx.project(6).unwrap();
    let cfg = EnsembleConfig::new(500, 4, 1e-3, 1000, StepScheme::ImplicitEuler);
    let curve = mean_square_curve(&sys, &cfg, &u0).unwrap();
    let norm0 = l2_norm_sq(&u0);
    for n in 0..curve.len() {
        let rel = curve.ci_halfwidth[n] / curve.mean_sq[n];
        let bound = (-margin * curve.times[n]).exp() * norm0 * (1.0 + 5.0 * rel);
        assert!(curve.mean_sq[n] <= bound, "step {n}");
    }
    assert!(decay_rate_fit(&curve, 0.5).unwrap().rate < 0.0);
}

fn example_5_1_rate(nu: f64, lambda: f64, seed: u64) -> DecayFit {
    let model = CovarianceModel::power_law(1.001, 10).unwrap();
    let sys = GalerkinSystem::assemble(SystemSpec::new(8, 10, 0.0, lambda.sqrt(), model))
        .unwrap()
        .with_diffusivity(nu / 2.0);
    let u0 = InitialData::PolyX1mx.project(8).unwrap();
    let cfg = EnsembleConfig::new(4000, seed, 1e-3, 1000, StepScheme::ImplicitEuler);
    let curve = mean_square_curve(&sys, &cfg, &u0).unwrap();
    decay_rate_fit(&curve, 1.0).unwrap()
}

fn separated(faster: &DecayFit, slower: &DecayFit) -> bool {
    let se = (faster.combined_stderr().powi(2) + slower.combined_stderr().powi(2)).sqrt();
    slower.rate - faster.rate > 2.0 * se
}

#[test]
fn decay_rate_monotone_in_diffusion_and_noise() {
    let by_nu: Vec<DecayFit> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&nu| example_5_1_rate(nu, 0.25, 31))
        .collect();
    assert!(separated(&by_nu[1], &by_nu[0]));
    assert!(separated(&by_nu[2], &by_nu[1]));

    let by_lambda: Vec<DecayFit> = [0.25, 1.0, 3.0]
        .iter()
        .map(|&l| example_5_1_rate(2.0, l, 32))
        .collect();
    assert!(separated(&by_lambda[0], &by_lambda[1]));
    assert!(separated(&by_lambda[1], &by_lambda[2]));
    assert!(by_lambda.iter().all(|f| f.rate < 0.0));
}

#[test]
fn stiff_scheme_decays_under_exact_condition() {
    let model = CovarianceModel::power_law(1.001, 10).unwrap();
    let kap = kappa(&model, DEFAULT_KAPPA_GRID).unwrap();
    let sys = GalerkinSystem::assemble(SystemSpec::new(8, 10, 1.0, 1.0, model)).unwrap();
    assert!(check_exact(PI2, 1.0, 1.0, kap).unwrap().verdict.is_stable());
    let u0 = InitialData::PolyX1mx.project(8).unwrap();
    for tau in [0.01, 0.05] {
        let steps = (3.0 / tau) as usize;
        let cfg = EnsembleConfig::new(1000, 77, tau, steps, StepScheme::StiffImplicitEuler);
        let curve = mean_square_curve(&sys, &cfg, &u0).unwrap();
        assert!(classify_curve(&curve).0, "tau {tau}");
    }
}

#[test]
fn doubling_paths_shrinks_interval() {
    let model = CovarianceModel::power_law(2.0, 8).unwrap();
    let mut cfg = StudyConfig::new(model, vec![(2, 8)], (8, 8));
    cfg.horizon = 0.1;
    cfg.initial = InitialData::Mode(1);
    cfg.paths = 400;
    let small = coupled_error_study(&cfg).unwrap();
    cfg.paths = 800;
    cfg.seed = 1;
    let large = coupled_error_study(&cfg).unwrap();
    let ratio = small.levels[0].ci / large.levels[0].ci;
    let target = 2f64.sqrt();
    assert!((ratio / target - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn errors_decrease_along_both_ladders() {
    let model = CovarianceModel::power_law(2.0, 16).unwrap();
    let mut cfg = StudyConfig::new(
        model,
        vec![(2, 16), (4, 16), (16, 2), (16, 4), (16, 8)],
        (16, 16),
    );
    cfg.horizon = 0.1;
    cfg.paths = 200;
    let report = coupled_error_study(&cfg).unwrap();
    let e: Vec<f64> = report.levels.iter().map(|l| l.error).collect();
    let ci: Vec<f64> = report.levels.iter().map(|l| l.ci).collect();
    for (a, b) in [(0, 1), (2, 3), (3, 4)] {
        assert!(e[a] + 2.0 * (ci[a].powi(2) + ci[b].powi(2)).sqrt() >= e[b]);
        assert!(e[a] > e[b]);
    }
    assert!(report.slope_m.unwrap() < 0.0);
}
