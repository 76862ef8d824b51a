use jointsurv_core::diagnostics::mcse_ratio;
use jointsurv_core::model::*;
use jointsurv_core::rng::stream;
use jointsurv_core::sampler::*;
use jointsurv_core::simulate::{scenario, simulate_cohort};
use jointsurv_core::stats::{mean, variance};
use jointsurv_core::Error;
use rand::Rng;

fn s4() -> (JointModelSpec, jointsurv_core::data::CohortDataset) {
    let sim = simulate_cohort(&scenario("S4").unwrap()).unwrap();
    let spec = JointModelSpec::new(AssociationStructure::Common, sim.cohort.group_labels());
    (spec, sim.cohort)
}

#[test]
fn config_presets_and_validation() {
    let p = McmcConfig::paper(1);
    assert_eq!((p.n_chains, p.burn_in, p.iterations, p.thin), (3, 50_000, 150_000, 1));
    let s = McmcConfig::smoke(1).scaled(5);
    assert_eq!((s.burn_in, s.iterations), (10_000, 25_000));
    assert_eq!(McmcConfig::smoke(1).with_thin(7).n_draws(), 714);
    assert!(s.validate().is_ok());
    assert!(McmcConfig::new(0, 10, 10, 1).validate().is_err());
    assert!(McmcConfig::new(2, 10, 0, 1).validate().is_err());
    assert!(McmcConfig::new(2, 10, 10, 1).with_thin(0).validate().is_err());
    let mut dup = McmcConfig::new(2, 10, 10, 1);
    dup.seeds = vec![5, 5];
    assert!(dup.validate().is_err());
    let seeds = chain_seeds(9, 4);
    assert_eq!(seeds, chain_seeds(9, 4));
    assert_ne!(seeds, chain_seeds(10, 4));
}

#[test]
fn fits_are_deterministic_and_seed_dependent() {
    let (spec, cohort) = s4();
    let cfg = McmcConfig::new(2, 200, 300, 42).with_thin(3);
    let a = run_chains(&spec, &cohort, &cfg).unwrap();
    let b = run_chains(&spec, &cohort, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_draws(), 100);
    assert_eq!(a.chains[0].draws.len(), 100 * a.layout.len());
    assert_ne!(a.chains[0].draws, a.chains[1].draws);
    let c = run_chains(&spec, &cohort, &McmcConfig::new(2, 200, 300, 43).with_thin(3)).unwrap();
    assert_ne!(a.chains[0].draws, c.chains[0].draws);
    // Chains run one at a time reassemble into the same result.
    let model = JointModel::new(&spec, &cohort).unwrap();
    let chains = (0..2).map(|i| run_chain(&model, &cfg, i).unwrap()).collect();
    let d = PosteriorSamples::new(layout_for(&spec, &cohort, &cfg), chains, spec.clone(), cfg.clone()).unwrap();
    assert_eq!(a, d);
}

#[test]
fn adaptation_is_frozen_after_burn_in() {
    let (spec, cohort) = s4();
    let post = run_chains(&spec, &cohort, &McmcConfig::new(2, 500, 500, 3)).unwrap();
    for c in &post.chains {
        assert!(!c.proposals_at_burn_in.is_empty());
        assert_eq!(c.proposals_at_burn_in, c.proposals_final);
        assert!(c.acceptance.iter().all(|a| a.attempts > 0 && (0.0..=1.0).contains(&a.rate)));
    }
}

#[test]
fn every_draw_is_in_support() {
    for structure in [AssociationStructure::Common, AssociationStructure::Exchangeable, AssociationStructure::Independent] {
        let (mut spec, cohort) = s4();
        spec.structure = structure;
        let post = run_chains(&spec, &cohort, &McmcConfig::new(2, 300, 300, 8)).unwrap();
        for c in 0..post.n_chains() {
            for i in 0..post.n_draws() {
                let s = post.state(c, i).unwrap();
                assert!(log_prior(&s, &spec).is_finite(), "{structure:?} chain {c} draw {i}");
            }
        }
    }
}

#[test]
fn caches_track_the_exact_posterior_terms() {
    let sim = simulate_cohort(&scenario("S2").unwrap()).unwrap();
    for structure in [AssociationStructure::Common, AssociationStructure::Exchangeable] {
        for functional in [AssociationFunctional::CurrentValue, AssociationFunctional::Slope] {
            let mut spec = JointModelSpec::new(structure, sim.cohort.group_labels());
            spec.functional = functional;
            let model = JointModel::new(&spec, &sim.cohort).unwrap();
            let init = initialize_chain(&spec, &sim.cohort, 4).unwrap();
            let mut sampler = JointSampler::new(&model, init, 200).unwrap();
            let mut rng = stream(11, 0, 0);
            for _ in 0..300 {
                sampler.sweep(&mut rng).unwrap();
            }
            assert!(sampler.cache_drift() < 1e-6, "{}", sampler.cache_drift());
            assert!(model.log_posterior(sampler.state()).unwrap().is_finite());
            assert_eq!(sampler.sweeps(), 300);
            assert!(sampler.is_adapting());
            sampler.freeze();
            assert!(!sampler.is_adapting());
        }
    }
}

#[test]
fn initial_states_are_dispersed_and_in_support() {
    let (spec, cohort) = s4();
    let a = initialize_chain(&spec, &cohort, 1).unwrap();
    let b = initialize_chain(&spec, &cohort, 2).unwrap();
    assert_eq!(a, initialize_chain(&spec, &cohort, 1).unwrap());
    assert_ne!(a, b);
    for s in [&a, &b] {
        assert!(log_posterior(s, &cohort, &spec).unwrap().is_finite());
        assert!((24.0..36.0).contains(&s.longitudinal.beta0[0]));
        assert!(s.longitudinal.random_effects.iter().all(|r| *r == [0.0, 0.0]));
    }
}

#[test]
fn random_walk_samples_a_standard_normal() {
    let logp = |x: f64| -0.5 * x * x;
    let mut rng = stream(5, 1, 0);
    let mut scale = AdaptiveScale::new(0.1, TARGET_SCALAR);
    let (mut x, mut lx) = (3.0, logp(3.0));
    let burn = 5_000;
    let mut draws = Vec::new();
    for sweep in 1..=burn + 100_000 {
        let (nx, nl, ok) = rw_scalar(x, lx, scale.scale(), logp, &mut rng);
        (x, lx) = (nx, nl);
        scale.update(ok, sweep);
        if sweep == burn {
            scale.frozen = true;
        }
        if sweep > burn {
            draws.push(x);
        }
    }
    let m = mcse_ratio(&[draws.clone()]).unwrap();
    assert!(mean(&draws).abs() < 3.0 * m.mcse, "mean {} mcse {}", mean(&draws), m.mcse);
    assert!((variance(&draws) - 1.0).abs() < 0.05);
}

/// With the association fixed at zero the survival parameters' posterior is
/// that of a survival-only Weibull model; compare against a direct sampler.
#[test]
fn null_association_factorises() {
    let sim = simulate_cohort(&scenario("S1").unwrap()).unwrap();
    let cohort = &sim.cohort;
    let mut spec = JointModelSpec::new(AssociationStructure::Common, cohort.group_labels());
    spec.priors.fix_association_zero = true;
    let post = run_chains(&spec, cohort, &McmcConfig::new(3, 2_000, 5_000, 21)).unwrap();

    // Survival-only Metropolis over (ln kappa, phi) with the same priors.
    let records = cohort.survival_records();
    let labels = cohort.group_labels();
    let groups: Vec<usize> = cohort.patients.iter().map(|p| p.group).collect();
    let k = labels.len();
    let logp = |x: &[f64]| {
        let kappa = x[0].exp();
        let mut ll = -0.003 * kappa + x[0];
        for v in &x[1..] {
            ll -= 0.5 * (v / 1000.0).powi(2);
        }
        for (r, &g) in records.iter().zip(&groups) {
            let eta = x[1] + if g > 0 { x[1 + g] } else { 0.0 };
            if r.event {
                ll += kappa.ln() + (kappa - 1.0) * r.os_time.ln() + eta;
            }
            ll -= eta.exp() * r.os_time.powf(kappa);
        }
        ll
    };
    let fit = fit_weibull_mle(&records, &labels).unwrap();
    let chol = nalgebra::DMatrix::from_row_slice(k + 1, k + 1, &fit.covariance.concat())
        .cholesky()
        .unwrap()
        .l();
    let mut rng = stream(77, 0, 0);
    let mut x = fit.parameter_vector();
    let mut lx = logp(&x);
    let (mut kappa, mut phi0) = (Vec::new(), Vec::new());
    let step = 2.38 / ((k + 1) as f64).sqrt();
    for it in 0..120_000 {
        let z = nalgebra::DVector::from_fn(k + 1, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let d = &chol * z * step;
        let y: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
        let ly = logp(&y);
        if (ly - lx) > rng.random::<f64>().ln() {
            (x, lx) = (y, ly);
        }
        if it >= 20_000 {
            kappa.push(x[0].exp());
            phi0.push(x[1]);
        }
    }
    for (name, reference) in [("kappa", kappa), ("phi0", phi0)] {
        let joint = post.parameter(name).unwrap();
        let mj = mcse_ratio(&joint).unwrap();
        let mr = mcse_ratio(&[reference.clone()]).unwrap();
        let gap = (mean(&joint.concat()) - mean(&reference)).abs();
        let tol = 4.0 * (mj.mcse.powi(2) + mr.mcse.powi(2)).sqrt();
        assert!(gap < tol, "{name}: gap {gap} tolerance {tol}");
        assert!((mj.sd / mr.sd - 1.0).abs() < 0.15, "{name}: sd {} vs {}", mj.sd, mr.sd);
    }
    let alpha = post.pooled("alpha").unwrap();
    assert!(alpha.iter().all(|&a| a == 0.0));
}

#[test]
fn non_finite_initial_state_is_rejected() {
    let (spec, cohort) = s4();
    let model = JointModel::new(&spec, &cohort).unwrap();
    let mut s = initialize_chain(&spec, &cohort, 1).unwrap();
    s.longitudinal.sigma = -1.0;
    assert!(matches!(JointSampler::new(&model, s, 10), Err(Error::InvalidState(_))));
}
