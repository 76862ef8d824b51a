use jointsurv_core::data::join_cohort_with_groups;
use jointsurv_core::model::*;
use jointsurv_core::quadrature::GaussLegendre;
use jointsurv_core::simulate::*;
use jointsurv_core::stats::ks_statistic;
use jointsurv_core::Error;

fn single_group(n: usize, seed: u64) -> SimDesign {
    let mut d = scenario("S4").unwrap();
    d.n = n;
    d.seed = seed;
    d
}

#[test]
fn catalog() {
    let all = scenario_catalog();
    assert_eq!(all.iter().map(|d| d.name.as_str()).collect::<Vec<_>>(), SCENARIOS);
    let s1 = scenario("S1").unwrap();
    assert_eq!(s1.truth.association.alpha, 0.0);
    let s2 = scenario("S2").unwrap();
    assert_eq!(s2.group_sizes(), REFERENCE_MIX);
    assert_eq!(s2.group_sizes().iter().sum::<usize>(), 196);
    assert!((association_hr(s2.truth.association.alpha, 10.0) - 1.09).abs() < 1e-12);
    assert_eq!(scenario("S4").unwrap().n, 5);
    let s3 = scenario("S3").unwrap();
    assert_eq!(s3.truth.association.structure, AssociationStructure::Exchangeable);
    assert!(matches!(scenario("S9"), Err(Error::UnknownScenario(_))));
}

#[test]
fn every_scenario_round_trips_through_validation() {
    for d in scenario_catalog() {
        let sim = simulate_cohort(&d).unwrap();
        assert_eq!(sim.cohort.len(), d.n);
        let rejoined = join_cohort_with_groups(
            &sim.cohort.longitudinal_records(),
            &sim.cohort.survival_records(),
            &d.group_labels,
        )
        .unwrap();
        assert_eq!(rejoined, sim.cohort);
        assert_eq!(simulate_cohort(&d).unwrap(), sim);
        for (i, p) in sim.cohort.patients.iter().enumerate() {
            assert_eq!(p.measurements[0].time, 0.0);
            assert!(p.measurements.iter().all(|m| m.time < p.survival.os_time && m.sld >= 0.0));
            let end = sim.death_times[i].min(sim.censor_times[i]);
            assert_eq!(p.survival.os_time, end);
            assert_eq!(p.survival.event, sim.death_times[i] <= sim.censor_times[i]);
        }
    }
}

#[test]
fn different_seeds_give_different_cohorts() {
    let a = simulate_cohort(&single_group(20, 1)).unwrap();
    let b = simulate_cohort(&single_group(20, 2)).unwrap();
    assert_ne!(a.cohort, b.cohort);
}

#[test]
fn noiseless_design_lies_on_the_population_line() {
    let mut d = single_group(30, 3);
    d.truth.longitudinal.sigma = 0.0;
    d.truth.longitudinal.omega0 = 0.0;
    d.truth.longitudinal.omega1 = 0.0;
    let sim = simulate_cohort(&d).unwrap();
    let (b0, b1) = (d.truth.longitudinal.beta0[0], d.truth.longitudinal.beta1);
    for p in &sim.cohort.patients {
        for m in &p.measurements {
            assert!((m.sld - (b0 + b1 * m.time)).abs() < 1e-12);
        }
    }
    assert_eq!(sim.floored, 0);
}

#[test]
fn exponential_event_times() {
    let mut d = single_group(10_000, 4);
    d.truth.association = AssociationParams::common(AssociationFunctional::CurrentValue, 0.0, 1);
    d.truth.survival = SurvivalParams { shape: 1.0, phi: vec![(0.03f64).ln()] };
    let sim = simulate_cohort(&d).unwrap();
    let ks = ks_statistic(&sim.death_times, |t| 1.0 - (-0.03 * t).exp());
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn transformed_event_times_are_uniform() {
    // Probability-integral transform under the true cumulative hazard,
    // with a non-unit shape.
    let mut d = single_group(10_000, 5);
    d.truth.association = AssociationParams::common(AssociationFunctional::CurrentValue, 0.0, 1);
    d.truth.survival = SurvivalParams { shape: 1.4, phi: vec![-5.0] };
    let sim = simulate_cohort(&d).unwrap();
    let q = GaussLegendre::new(15).unwrap();
    let pit: Vec<f64> = (0..sim.cohort.len())
        .map(|i| {
            let h = cumulative_hazard(&sim.truth, &sim.cohort, i, sim.death_times[i], &q).unwrap();
            1.0 - (-h).exp()
        })
        .collect();
    let ks = ks_statistic(&pit, |u| u.clamp(0.0, 1.0));
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn early_censoring_leaves_one_baseline_visit() {
    let mut d = single_group(200, 6);
    d.censoring = UniformPrior::new(0.1, 0.1);
    let sim = simulate_cohort(&d).unwrap();
    let censored = sim.cohort.patients.iter().filter(|p| !p.survival.event).count();
    assert!(censored >= 198, "{censored}");
    assert!(sim.cohort.patients.iter().all(|p| p.measurements.len() == 1));
}

#[test]
fn visit_schedule() {
    let v = VisitSchedule::default();
    let step = 56.0 / DAYS_PER_MONTH;
    let t = v.times_before(20.0);
    assert_eq!(t[0], 0.0);
    assert!((t[1] - step).abs() < 1e-12);
    assert_eq!(t.iter().filter(|&&x| x < 12.0).count(), 7);
    assert_eq!(&t[7..], &[12.0, 15.0, 18.0]);
    assert_eq!(v.times_before(0.5), vec![0.0]);
}

#[test]
fn invalid_designs_are_rejected() {
    let mut d = single_group(10, 1);
    d.group_mix = vec![0.5];
    assert!(simulate_cohort(&d).is_err());
    let mut d = single_group(0, 1);
    d.n = 0;
    assert!(simulate_cohort(&d).is_err());
    let mut d = single_group(10, 1);
    d.censoring = UniformPrior::new(0.0, 5.0);
    assert!(simulate_cohort(&d).is_err());
}
