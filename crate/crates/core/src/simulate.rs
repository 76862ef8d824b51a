//! Synthetic cohorts drawn from the joint model with a trial-like visit
//! schedule and administrative censoring.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use alloc::collections::BTreeMap;

#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{join_cohort_with_groups, CohortDataset, LongitudinalRecord, SurvivalRecord};
use crate::error::{Error, Result};
use crate::extrapolate::invert_cumulative;
use crate::model::{
    AssociationFunctional, AssociationParams, AssociationStructure, LongitudinalParams, ParameterState,
    PatientHazard, SurvivalParams, UniformPrior,
};
use crate::quadrature::{GaussLegendre, DEFAULT_NODES};
use crate::rng::stream;

/// Days per month (365.25 / 12).
pub const DAYS_PER_MONTH: f64 = 365.25 / 12.0;

/// Biomarker assessments every `first_year_interval_days` during the first
/// `first_year_months`, then every `later_interval_months`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitSchedule {
    pub first_year_interval_days: f64,
    pub first_year_months: f64,
    pub later_interval_months: f64,
}

impl Default for VisitSchedule {
    fn default() -> Self {
        Self {
            first_year_interval_days: 56.0,
            first_year_months: 12.0,
            later_interval_months: 3.0,
        }
    }
}

impl VisitSchedule {
    /// Visit times (months) strictly before `end`; the baseline visit at 0
    /// is always included.
    pub fn times_before(&self, end: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        let step = self.first_year_interval_days / DAYS_PER_MONTH;
        let mut k = 1.0;
        loop {
            let t = k * step;
            if t >= self.first_year_months || t >= end {
                break;
            }
            out.push(t);
            k += 1.0;
        }
        let mut t = self.first_year_months;
        while t < end {
            out.push(t);
            t += self.later_interval_months;
        }
        out
    }
}

/// A simulation design. Only the population-level parts of `truth` are
/// used; random effects are drawn per patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub name: String,
    pub n: usize,
    pub group_labels: Vec<String>,
    /// Proportions over groups, summing to 1.
    pub group_mix: Vec<f64>,
    pub truth: ParameterState,
    pub schedule: VisitSchedule,
    /// Administrative censoring times, months.
    pub censoring: UniformPrior,
    /// Latent death times beyond this are capped (months).
    pub horizon: f64,
    pub seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let k = self.group_labels.len();
        if self.n == 0 {
            return Err(Error::InvalidInput("design needs n >= 1".into()));
        }
        if k == 0 || self.group_mix.len() != k {
            return Err(Error::InvalidInput(format!(
                "{} proportions for {k} groups",
                self.group_mix.len()
            )));
        }
        if self.group_mix.iter().any(|&p| !(p >= 0.0)) || (self.group_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("group proportions must be >= 0 and sum to 1".into()));
        }
        if !(self.censoring.lower > 0.0) || !(self.censoring.upper >= self.censoring.lower) {
            return Err(Error::InvalidInput("censoring times must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        // Zero SDs are allowed here: they give noiseless or effect-free cohorts.
        let l = &self.truth.longitudinal;
        if !(l.sigma >= 0.0 && l.omega0 >= 0.0 && l.omega1 >= 0.0) {
            return Err(Error::InvalidInput("longitudinal SDs must be >= 0".into()));
        }
        self.truth.survival.validate()?;
        self.truth.association.validate(k)?;
        if self.truth.survival.phi.len() != k {
            return Err(Error::InvalidInput(format!("phi needs {k} entries")));
        }
        if self.truth.longitudinal.beta0.len() != 1 && self.truth.longitudinal.beta0.len() != k {
            return Err(Error::InvalidInput("beta0 needs 1 or K entries".into()));
        }
        Ok(())
    }

    /// Exact group sizes by largest remainder.
    pub fn group_sizes(&self) -> Vec<usize> {
        let raw: Vec<f64> = self.group_mix.iter().map(|p| p * self.n as f64).collect();
        let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
        let short = self.n - sizes.iter().sum::<usize>();
        for &g in order.iter().take(short) {
            sizes[g] += 1;
        }
        sizes
    }
}

/// A simulated cohort with everything needed to check recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCohort {
    pub cohort: CohortDataset,
    /// Truth including the drawn random effects, in cohort patient order.
    pub truth: ParameterState,
    /// Latent death times (months), before censoring.
    pub death_times: Vec<f64>,
    pub censor_times: Vec<f64>,
    /// Biomarker values floored at zero.
    pub floored: usize,
}

/// Draw a cohort from `design`. Each patient uses its own random stream.
pub fn simulate_cohort(design: &SimDesign) -> Result<SimulatedCohort> {
    design.validate()?;
    let quad = GaussLegendre::new(DEFAULT_NODES)?;
    let t = &design.truth;
    let width = format!("{}", design.n).len().max(3);

    let mut groups: Vec<usize> = design
        .group_sizes()
        .iter()
        .enumerate()
        .flat_map(|(g, &c)| core::iter::repeat(g).take(c))
        .collect();
    groups.shuffle(&mut stream(design.seed, 0x6E, 0));

    let mut long = Vec::new();
    let mut surv = Vec::with_capacity(design.n);
    let mut random_effects = Vec::with_capacity(design.n);
    let mut death_times = Vec::with_capacity(design.n);
    let mut censor_times = Vec::with_capacity(design.n);
    let mut floored = 0;
    for (i, &g) in groups.iter().enumerate() {
        let mut rng = stream(design.seed, 0x5A, i as u64);
        let id = format!("P{:0width$}", i + 1);
        let l = &t.longitudinal;
        let b0 = l.omega0 * rng.sample::<f64, _>(StandardNormal);
        let b1 = l.omega1 * rng.sample::<f64, _>(StandardNormal);
        let a0 = l.intercept(g) + b0;
        let a1 = l.beta1 + b1;
        let h = PatientHazard::new(
            t.survival.shape,
            t.survival.log_scale(g),
            t.association.coefficient(g),
            t.association.functional,
            a0,
            a1,
        );
        let u: f64 = rng.random();
        let death = invert_cumulative(&h, 0.0, -(1.0 - u).ln(), design.horizon, &quad)?.time;
        let censor = rng.random_range(design.censoring.lower..=design.censoring.upper);
        let event = death <= censor;
        let os = if event { death } else { censor };
        for time in design.schedule.times_before(os) {
            let mut sld = a0 + a1 * time + l.sigma * rng.sample::<f64, _>(StandardNormal);
            if sld < 0.0 {
                sld = 0.0;
                floored += 1;
            }
            long.push(LongitudinalRecord { patient_id: id.clone(), time, sld });
        }
        surv.push(SurvivalRecord {
            patient_id: id,
            os_time: os,
            event,
            tumour_group: design.group_labels[g].clone(),
            covariates: BTreeMap::new(),
        });
        random_effects.push([b0, b1]);
        death_times.push(death);
        censor_times.push(censor);
    }
    let cohort = join_cohort_with_groups(&long, &surv, &design.group_labels)?;
    // join keeps survival order, so indices line up with the draws above.
    let mut truth = t.clone();
    truth.longitudinal.random_effects = random_effects;
    Ok(SimulatedCohort {
        cohort,
        truth,
        death_times,
        censor_times,
        floored,
    })
}

/// Tumour-group labels used by the built-in scenarios; the first is the
/// survival reference group.
pub const GROUP_LABELS: [&str; 5] = ["soft_tissue_sarcoma", "thyroid", "salivary_gland", "lung", "other"];
/// Patients per group in the reference basket cohort.
pub const REFERENCE_MIX: [usize; 5] = [65, 30, 25, 23, 53];

fn labels() -> Vec<String> {
    GROUP_LABELS.iter().map(|s| String::from(*s)).collect()
}

fn reference_proportions() -> Vec<f64> {
    let n: usize = REFERENCE_MIX.iter().sum();
    REFERENCE_MIX.iter().map(|&c| c as f64 / n as f64).collect()
}

#[allow(clippy::too_many_arguments)]
fn truth(
    beta0: f64,
    beta1: f64,
    sigma: f64,
    omega: (f64, f64),
    shape: f64,
    phi: Vec<f64>,
    association: AssociationParams,
) -> ParameterState {
    ParameterState {
        longitudinal: LongitudinalParams {
            beta0: vec![beta0],
            beta1,
            sigma,
            omega0: omega.0,
            omega1: omega.1,
            random_effects: Vec::new(),
        },
        survival: SurvivalParams { shape, phi },
        association,
    }
}

/// Log hazard ratio per mm giving HR 1.09 per 10 mm.
pub fn reference_association() -> f64 {
    1.09f64.ln() / 10.0
}

fn design(name: &str, n: usize, mix: Vec<f64>, truth: ParameterState, seed: u64) -> SimDesign {
    SimDesign {
        name: name.into(),
        n,
        group_labels: if mix.len() == 1 { vec![String::from("all")] } else { labels() },
        group_mix: mix,
        truth,
        schedule: VisitSchedule::default(),
        censoring: UniformPrior::new(24.0, 72.0),
        horizon: 1200.0,
        seed,
    }
}

/// Names of the built-in scenarios.
pub const SCENARIOS: [&str; 4] = ["S1", "S2", "S3", "S4"];

/// The built-in scenarios:
///
/// * `S1` null association: `alpha = 0`, 200 patients in the reference mix.
/// * `S2` reference magnitude: HR 1.09 per 10 mm, `kappa = 1.2`, 196
///   patients split 65/30/25/23/53.
/// * `S3` heterogeneous group associations `0.009 + {-5, -2.5, 0, 2.5, 5}e-3`
///   (between-group SD 0.004), a larger cohort with more events and wider
///   between-patient biomarker spread so group differences are detectable.
/// * `S4` five patients in one group, small enough to check by hand.
pub fn scenario_catalog() -> Vec<SimDesign> {
    SCENARIOS.iter().map(|s| scenario(s).expect("built-in scenario")).collect()
}

pub fn scenario(name: &str) -> Result<SimDesign> {
    let cv = AssociationFunctional::CurrentValue;
    let contrasts = [0.2, 0.1, 0.3, 0.9];
    let phi = |phi0: f64| {
        let mut v = vec![phi0];
        v.extend_from_slice(&contrasts);
        v
    };
    let alpha = reference_association();
    Ok(match name {
        "S1" => design(
            "S1",
            200,
            reference_proportions(),
            truth(45.0, 0.3, 5.0, (15.0, 0.4), 1.2, phi(-5.7), AssociationParams::common(cv, 0.0, 5)),
            0x5EED_0001,
        ),
        "S2" => design(
            "S2",
            196,
            reference_proportions(),
            truth(45.0, 0.3, 5.0, (15.0, 0.4), 1.2, phi(-6.06), AssociationParams::common(cv, alpha, 5)),
            0x5EED_0002,
        ),
        "S3" => {
            let spread = [-0.005, -0.0025, 0.0, 0.0025, 0.005];
            let association = AssociationParams {
                structure: AssociationStructure::Exchangeable,
                functional: cv,
                alpha: 0.009,
                alpha_k: spread.iter().map(|d| 0.009 + d).collect(),
                tau: 0.004,
            };
            design(
                "S3",
                1500,
                vec![0.2; 5],
                truth(45.0, 0.5, 5.0, (18.0, 2.0), 1.2, vec![-4.6, 0.0, 0.0, 0.0, 0.0], association),
                0x5EED_0003,
            )
        }
        "S4" => design(
            "S4",
            5,
            vec![1.0],
            truth(40.0, 0.2, 4.0, (8.0, 0.2), 1.0, vec![-4.5], AssociationParams::common(cv, alpha, 1)),
            0x5EED_0004,
        ),
        other => return Err(Error::UnknownScenario(other.into())),
    })
}
