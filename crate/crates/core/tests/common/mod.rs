#![allow(dead_code)]

use jointsurv_core::data::{join_cohort, CohortDataset, LongitudinalRecord, SurvivalRecord};
use jointsurv_core::model::{
    AssociationFunctional, AssociationParams, AssociationStructure, JointModelSpec, LongitudinalParams,
    ParameterState, SurvivalParams,
};

pub fn surv(id: &str, t: f64, event: bool, group: &str) -> SurvivalRecord {
    SurvivalRecord {
        patient_id: id.into(),
        os_time: t,
        event,
        tumour_group: group.into(),
        covariates: Default::default(),
    }
}

pub fn sld(id: &str, t: f64, y: f64) -> LongitudinalRecord {
    LongitudinalRecord {
        patient_id: id.into(),
        time: t,
        sld: y,
    }
}

/// Six patients over two groups with a few measurements each.
pub fn toy_cohort() -> CohortDataset {
    let s = vec![
        surv("a", 14.0, true, "g0"),
        surv("b", 30.0, false, "g0"),
        surv("c", 7.5, true, "g1"),
        surv("d", 22.0, true, "g1"),
        surv("e", 40.0, false, "g0"),
        surv("f", 3.0, true, "g1"),
    ];
    let mut l = Vec::new();
    for (k, r) in s.iter().enumerate() {
        let mut t = 0.0;
        while t <= r.os_time {
            l.push(sld(&r.patient_id, t, 30.0 + 2.0 * k as f64 + 0.4 * t + ((k + 1) as f64 * t).sin()));
            t += 4.0;
        }
    }
    join_cohort(&l, &s).unwrap()
}

pub fn spec(structure: AssociationStructure, cohort: &CohortDataset) -> JointModelSpec {
    JointModelSpec::new(structure, cohort.group_labels())
}

/// An in-support state with random effects set by a simple pattern.
pub fn state(
    structure: AssociationStructure,
    functional: AssociationFunctional,
    n_patients: usize,
    n_groups: usize,
    alpha: f64,
) -> ParameterState {
    let alpha_k: Vec<f64> = match structure {
        AssociationStructure::Common => vec![alpha; n_groups],
        _ => (0..n_groups).map(|g| alpha + 0.001 * g as f64).collect(),
    };
    ParameterState {
        longitudinal: LongitudinalParams {
            beta0: vec![32.0],
            beta1: 0.35,
            sigma: 2.5,
            omega0: 6.0,
            omega1: 0.3,
            random_effects: (0..n_patients)
                .map(|i| [(i as f64 - 2.5) * 1.5, 0.05 * (i % 3) as f64 - 0.05])
                .collect(),
        },
        survival: SurvivalParams {
            shape: 1.15,
            phi: (0..n_groups).map(|g| if g == 0 { -4.2 } else { 0.3 }).collect(),
        },
        association: AssociationParams {
            structure,
            functional,
            alpha,
            alpha_k,
            tau: if structure == AssociationStructure::Exchangeable { 0.02 } else { 0.0 },
        },
    }
}

/// Posterior samples holding the given states, one inner vector per chain.
pub fn posterior_from_states(
    spec: &JointModelSpec,
    cohort: &CohortDataset,
    chains: Vec<Vec<ParameterState>>,
) -> jointsurv_core::sampler::PosteriorSamples {
    use jointsurv_core::sampler::{Chain, McmcConfig, ParamLayout, PosteriorSamples};
    let ids = cohort.patients.iter().map(|p| p.id().to_string()).collect();
    let layout = ParamLayout::new(spec, ids, true);
    let n_chains = chains.len();
    let chains: Vec<Chain> = chains
        .into_iter()
        .enumerate()
        .map(|(c, states)| Chain {
            seed: c as u64,
            n_draws: states.len(),
            draws: states.iter().flat_map(|s| layout.flatten(s)).collect(),
            acceptance: Vec::new(),
            cap_events: 0,
            initial: states[0].clone(),
            proposals_at_burn_in: Vec::new(),
            proposals_final: Vec::new(),
        })
        .collect();
    let n = chains[0].n_draws;
    PosteriorSamples::new(layout, chains, spec.clone(), McmcConfig::new(n_chains, 0, n, 0)).unwrap()
}
