mod common;

use approx::assert_relative_eq;
use common::{state, toy_cohort};
use jointsurv_core::diagnostics::{gradient_check, GRADIENT_REL_STEP, GRADIENT_TOLERANCE};
use jointsurv_core::model::*;
use jointsurv_core::quadrature::GaussLegendre;
use jointsurv_core::simulate::{reference_association, scenario, simulate_cohort};
use rand::{Rng, SeedableRng};

const CV: AssociationFunctional = AssociationFunctional::CurrentValue;
const COMMON: AssociationStructure = AssociationStructure::Common;

fn closed_form_unit_shape(phi0: f64, alpha: f64, beta0: f64, beta1: f64, t: f64) -> f64 {
    phi0.exp() * (alpha * beta0).exp() * ((alpha * beta1 * t).exp() - 1.0) / (alpha * beta1)
}

/// Unit shape, current-value link, zero random effects.
fn unit_shape_state(n: usize, groups: usize, alpha: f64) -> ParameterState {
    let mut s = state(COMMON, CV, n, groups, alpha);
    s.survival.shape = 1.0;
    s.longitudinal.random_effects = vec![[0.0, 0.0]; n];
    s
}

#[test]
fn trajectory_is_the_patient_line() {
    let c = toy_cohort();
    let mut s = state(COMMON, CV, c.len(), 2, 0.0);
    s.longitudinal.beta0 = vec![30.0];
    s.longitudinal.beta1 = 0.5;
    s.longitudinal.random_effects[0] = [2.0, -0.1];
    assert_relative_eq!(trajectory_mean(&s.longitudinal, &c, 0, 10.0).unwrap(), 36.0, epsilon = 1e-12);
    assert_relative_eq!(trajectory_slope(&s.longitudinal, 0).unwrap(), 0.4, epsilon = 1e-12);
    s.longitudinal.random_effects[1] = [0.0, 0.0];
    assert_eq!(trajectory_mean(&s.longitudinal, &c, 1, 0.0).unwrap(), 30.0);
    assert!(trajectory_mean(&s.longitudinal, &c, 99, 0.0).is_err());
}

#[test]
fn longitudinal_loglik_examples() {
    let c = toy_cohort();
    let mut s = state(COMMON, CV, c.len(), 2, 0.0);
    let n_obs = c.n_measurements() as f64;
    // Residuals of zero give the Gaussian normalising constant per record.
    let mut exact = c.clone();
    for (i, p) in exact.patients.iter_mut().enumerate() {
        for r in &mut p.measurements {
            r.sld = trajectory_mean(&s.longitudinal, &c, i, r.time).unwrap();
        }
    }
    s.longitudinal.sigma = 1.0;
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert_relative_eq!(
        longitudinal_loglik(&s.longitudinal, &exact).unwrap(),
        -n_obs * half_ln_2pi,
        max_relative = 1e-12
    );
    s.longitudinal.sigma = 2.0;
    assert_relative_eq!(
        longitudinal_loglik(&s.longitudinal, &exact).unwrap(),
        -n_obs * (half_ln_2pi + std::f64::consts::LN_2),
        max_relative = 1e-12
    );
    // Record-by-record and sufficient-statistic evaluations agree.
    let s = state(COMMON, CV, c.len(), 2, 0.0);
    let spec = common::spec(COMMON, &c);
    let m = JointModel::new(&spec, &c).unwrap();
    assert_relative_eq!(m.longitudinal_loglik(&s).unwrap(), m.longitudinal_loglik_fast(&s), max_relative = 1e-10);
}

#[test]
fn baseline_hazard_examples() {
    assert_relative_eq!(baseline_hazard(1.0, -3.0, 7.0).unwrap(), (-3.0f64).exp());
    assert_relative_eq!(baseline_hazard(2.0, 0.5f64.ln(), 3.0).unwrap(), 3.0, max_relative = 1e-14);
    assert!(baseline_hazard(0.8, 0.0, 0.0).is_err());
    assert!(baseline_hazard(0.0, 0.0, 1.0).is_err());
    assert!(baseline_hazard(1.0, 0.0, -1.0).is_err());
}

#[test]
fn association_hazard_ratio() {
    let a = reference_association();
    assert_relative_eq!(association_hr(a, 10.0), 1.09, max_relative = 1e-14);
    assert_relative_eq!(association_hr(a, -10.0), 1.0 / 1.09, max_relative = 1e-14);
    assert_eq!(association_hr(0.0, 123.0), 1.0);
}

#[test]
fn cumulative_hazard_matches_unit_shape_closed_form() {
    let c = toy_cohort();
    let quad = GaussLegendre::new(15).unwrap();
    for alpha in [reference_association(), -0.02, 0.05] {
        let s = unit_shape_state(c.len(), 2, alpha);
        let (b0, b1, phi0) = (s.longitudinal.beta0[0], s.longitudinal.beta1, s.survival.phi[0]);
        for t in [1.0, 6.0, 12.0, 60.0, 600.0] {
            let h = cumulative_hazard(&s, &c, 0, t, &quad).unwrap();
            let want = closed_form_unit_shape(phi0, alpha, b0, b1, t);
            assert!(((h - want) / want).abs() < 1e-8, "alpha {alpha} t {t}: {h} vs {want}");
        }
    }
}

#[test]
fn cumulative_hazard_without_association_is_weibull() {
    let c = toy_cohort();
    let quad = GaussLegendre::new(15).unwrap();
    let mut s = state(COMMON, CV, c.len(), 2, 0.0);
    s.survival.shape = 1.7;
    for i in 0..c.len() {
        let g = c.patients[i].group;
        let eta = s.survival.log_scale(g);
        for t in [0.5, 3.0, 40.0, 250.0] {
            let h = cumulative_hazard(&s, &c, i, t, &quad).unwrap();
            assert_relative_eq!(h, eta.exp() * t.powf(1.7), max_relative = 1e-12);
            // Homogeneous of degree kappa in t.
            let h2 = cumulative_hazard(&s, &c, i, 2.0 * t, &quad).unwrap();
            assert_relative_eq!(h2 / h, 2f64.powf(1.7), max_relative = 1e-12);
            let jh = joint_hazard(&s, &c, i, t).unwrap();
            assert_relative_eq!(jh, baseline_hazard(1.7, eta, t).unwrap(), max_relative = 1e-12);
        }
    }
}

#[test]
fn cumulative_hazard_is_additive_increasing_and_converged() {
    let c = toy_cohort();
    let q15 = GaussLegendre::new(15).unwrap();
    let q30 = GaussLegendre::new(30).unwrap();
    for functional in [CV, AssociationFunctional::Slope] {
        // For kappa != 1 the integrand carries a fractional power of
        // `u = t^kappa` at the origin, so convergence is algebraic rather
        // than spectral: 15 nodes give about 5e-6 at kappa = 1.6, t = 600.
        for (kappa, tol) in [(0.7, 1e-6), (1.0, 1e-8), (1.2, 1e-5), (1.6, 1e-5)] {
            let mut s = state(COMMON, functional, c.len(), 2, 0.012);
            s.survival.shape = kappa;
            for i in 0..c.len() {
                let mut prev = 0.0;
                for t in [1.0, 6.0, 12.0, 60.0, 600.0] {
                    let h = cumulative_hazard(&s, &c, i, t, &q15).unwrap();
                    let h30 = cumulative_hazard(&s, &c, i, t, &q30).unwrap();
                    assert!(((h - h30) / h30).abs() < tol, "kappa {kappa} t {t}: {h} vs {h30}");
                    assert!(h > prev);
                    prev = h;
                    let split = cumulative_hazard(&s, &c, i, 0.4 * t, &q15).unwrap()
                        + cumulative_hazard_between(&s, &c, i, 0.4 * t, t, &q15).unwrap();
                    assert_relative_eq!(split, h, max_relative = tol);
                }
            }
        }
    }
}

#[test]
fn more_nodes_reduce_quadrature_error() {
    let reference = GaussLegendre::new(400).unwrap();
    let h = PatientHazard::new(1.6, -4.0, 0.012, CV, 32.0, 0.35);
    let err = |n: usize| {
        let q = GaussLegendre::new(n).unwrap();
        let mut caps = CapCounter::default();
        let want = h.cumulative(600.0, &reference, &mut caps);
        ((h.cumulative(600.0, &q, &mut caps) - want) / want).abs()
    };
    let (e15, e30, e60) = (err(15), err(30), err(60));
    assert!(e15 > e30 && e30 > e60 && e60 < 1e-7, "{e15} {e30} {e60}");
}

#[test]
fn strongly_varying_hazard_is_integrated_in_panels() {
    // The linear predictor falls by about 12 over the range; a single
    // 15-node panel is non-monotone here.
    let h = PatientHazard::new(2.3, -2.0, 0.036, CV, 0.0, -0.78);
    let q15 = GaussLegendre::new(15).unwrap();
    let q200 = GaussLegendre::new(200).unwrap();
    let mut caps = CapCounter::default();
    let mut prev = 0.0;
    for t in [50.0, 100.0, 200.0, 281.0, 421.0, 800.0] {
        let a = h.cumulative(t, &q15, &mut caps);
        let b = h.cumulative(t, &q200, &mut caps);
        assert!(a > prev);
        assert!(((a - b) / b).abs() < 1e-4, "t {t}: {a} vs {b}");
        prev = a;
    }
}

#[test]
fn cumulative_hazard_rejects_bad_intervals_and_caps() {
    let c = toy_cohort();
    let q = GaussLegendre::new(15).unwrap();
    let s = state(COMMON, CV, c.len(), 2, 0.01);
    assert!(cumulative_hazard(&s, &c, 0, 0.0, &q).is_err());
    assert!(cumulative_hazard_between(&s, &c, 0, 5.0, 2.0, &q).is_err());
    let mut hot = s.clone();
    hot.survival.phi[0] = 800.0;
    assert!(cumulative_hazard(&hot, &c, 0, 5.0, &q).is_err());
    let h = PatientHazard::new(1.0, 800.0, 0.0, CV, 30.0, 0.0);
    let mut caps = CapCounter::default();
    let v = h.cumulative(2.0, &q, &mut caps);
    assert!(v.is_finite() && caps.0 > 0);
}

#[test]
fn exponential_survival_likelihood() {
    // Unit shape, no association, one group: d ln(lambda) - lambda * sum(t).
    let c = toy_cohort();
    let mut s = unit_shape_state(c.len(), 2, 0.0);
    s.survival.phi = vec![-3.0, 0.0];
    let q = GaussLegendre::new(15).unwrap();
    let total: f64 = c.patients.iter().map(|p| p.survival.os_time).sum();
    let d = c.n_events() as f64;
    let want = d * -3.0 - (-3.0f64).exp() * total;
    assert_relative_eq!(survival_loglik(&s, &c, &q).unwrap(), want, max_relative = 1e-12);
    let spec = common::spec(COMMON, &c);
    let m = JointModel::new(&spec, &c).unwrap();
    assert_relative_eq!(m.survival_loglik(&s).unwrap(), want, max_relative = 1e-10);
}

#[test]
fn priors() {
    let c = toy_cohort();
    let spec = common::spec(COMMON, &c);
    let s = state(COMMON, CV, c.len(), 2, 0.0);
    assert!(log_prior(&s, &spec).is_finite());
    let mut bad = s.clone();
    bad.longitudinal.beta0 = vec![70.0];
    assert_eq!(log_prior(&bad, &spec), f64::NEG_INFINITY);
    assert_eq!(log_posterior(&bad, &c, &spec).unwrap(), f64::NEG_INFINITY);
    let mut bad = s.clone();
    bad.longitudinal.beta1 = -0.1;
    assert_eq!(log_prior(&bad, &spec), f64::NEG_INFINITY);
    let mut wide = spec.clone();
    wide.wide_slope_prior = true;
    assert!(log_prior(&bad, &wide).is_finite());
    // Exponential shape prior: log density differs by -rate * delta.
    let mut k2 = s.clone();
    k2.survival.shape += 2.0;
    assert_relative_eq!(log_prior(&k2, &spec) - log_prior(&s, &spec), -0.003 * 2.0, max_relative = 1e-9);
    // A point mass at zero rejects any nonzero association.
    let mut fixed = spec.clone();
    fixed.priors.fix_association_zero = true;
    assert!(log_prior(&s, &fixed).is_finite());
    let nz = state(COMMON, CV, c.len(), 2, 0.01);
    assert_eq!(log_prior(&nz, &fixed), f64::NEG_INFINITY);
    // tau only matters under the exchangeable structure.
    let ex_spec = common::spec(AssociationStructure::Exchangeable, &c);
    let ex = state(AssociationStructure::Exchangeable, CV, c.len(), 2, 0.01);
    let mut ex_wide = ex.clone();
    ex_wide.association.tau = 0.05;
    assert!(log_prior(&ex, &ex_spec) != log_prior(&ex_wide, &ex_spec));
    let mut ex_zero = ex.clone();
    ex_zero.association.tau = 0.0;
    assert_eq!(log_prior(&ex_zero, &ex_spec), f64::NEG_INFINITY);
}

#[test]
fn posterior_adds_a_patients_contribution() {
    let c = toy_cohort();
    let spec = common::spec(COMMON, &c);
    let s = state(COMMON, CV, c.len(), 2, 0.01);
    let full = log_posterior(&s, &c, &spec).unwrap();
    let keep: Vec<usize> = (0..c.len() - 1).collect();
    let sub = c.subset(&keep);
    let mut s_sub = s.clone();
    s_sub.longitudinal.random_effects.pop();
    let part = log_posterior(&s_sub, &sub, &spec).unwrap();

    let last = c.subset(&[c.len() - 1]);
    let mut s_last = s.clone();
    s_last.longitudinal.random_effects = vec![*s.longitudinal.random_effects.last().unwrap()];
    let q = GaussLegendre::new(15).unwrap();
    let b = s_last.longitudinal.random_effects[0];
    let contribution = longitudinal_loglik(&s_last.longitudinal, &last).unwrap()
        + survival_loglik(&s_last, &last, &q).unwrap()
        + normal_logpdf(b[0], s.longitudinal.omega0)
        + normal_logpdf(b[1], s.longitudinal.omega1);
    assert_relative_eq!(full - part, contribution, max_relative = 1e-9);
}

fn normal_logpdf(x: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * (x / sd).powi(2)
}

#[test]
fn zero_association_separates_the_posterior() {
    // With alpha = 0 the cross difference of a longitudinal and a survival
    // perturbation vanishes.
    let c = toy_cohort();
    let spec = common::spec(COMMON, &c);
    let s = state(COMMON, CV, c.len(), 2, 0.0);
    let lp = |st: &ParameterState| log_posterior(st, &c, &spec).unwrap();
    let mut a = s.clone();
    a.longitudinal.beta0[0] += 1.5;
    let mut b = s.clone();
    b.survival.shape += 0.2;
    let mut ab = a.clone();
    ab.survival.shape += 0.2;
    assert!((lp(&ab) - lp(&a) - lp(&b) + lp(&s)).abs() < 1e-9);
    // With a nonzero association they interact.
    let s = state(COMMON, CV, c.len(), 2, 0.02);
    let mut a = s.clone();
    a.longitudinal.beta0[0] += 1.5;
    let mut b = s.clone();
    b.survival.shape += 0.2;
    let mut ab = a.clone();
    ab.survival.shape += 0.2;
    assert!((lp(&ab) - lp(&a) - lp(&b) + lp(&s)).abs() > 1e-6);
}

#[test]
fn finite_difference_gradient_is_consistent() {
    let design = scenario("S2").unwrap();
    let sim = simulate_cohort(&design).unwrap();
    let cohort = sim.cohort.subset(&(0..60).collect::<Vec<_>>());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let structures = [
        (COMMON, CV),
        (AssociationStructure::Exchangeable, CV),
        (AssociationStructure::Independent, CV),
        (COMMON, AssociationFunctional::Slope),
    ];
    for k in 0..10 {
        let (structure, functional) = structures[k % structures.len()];
        let mut spec = JointModelSpec::new(structure, cohort.group_labels());
        spec.functional = functional;
        let mut s = sim.truth.clone();
        s.longitudinal.random_effects.truncate(cohort.len());
        s.longitudinal.beta0[0] = rng.random_range(30.0..55.0);
        s.longitudinal.beta1 = rng.random_range(0.1..0.9);
        s.longitudinal.sigma = rng.random_range(3.0..8.0);
        s.longitudinal.omega0 = rng.random_range(8.0..18.0);
        s.longitudinal.omega1 = rng.random_range(0.2..1.0);
        s.survival.shape = rng.random_range(0.7..1.6);
        s.survival.phi[0] = rng.random_range(-7.0..-4.0);
        let a = rng.random_range(-0.02..0.02);
        s.association = AssociationParams {
            structure,
            functional,
            alpha: if structure == AssociationStructure::Independent { 0.0 } else { a },
            alpha_k: (0..5)
                .map(|_| if structure == COMMON { a } else { a + rng.random_range(-0.005..0.005) })
                .collect(),
            tau: if structure == AssociationStructure::Exchangeable { rng.random_range(0.005..0.05) } else { 0.0 },
        };
        let model = JointModel::new(&spec, &cohort).unwrap();
        let report = gradient_check(&model, &s, GRADIENT_REL_STEP).unwrap();
        let worst = report.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).unwrap();
        assert!(worst.rel_error < GRADIENT_TOLERANCE, "state {k}: {worst:?}");
    }
}
