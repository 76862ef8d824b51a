use alloc::vec::Vec;
use core::f64::consts::LN_2;

#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;

use super::hazard::{CapCounter, PatientHazard, ShapeTable};
use super::params::{AssociationStructure, LongitudinalParams, ParameterState};
use super::spec::{JointModelSpec, UniformPrior};
use crate::data::CohortDataset;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub(crate) fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

#[inline]
fn uniform_logpdf(x: f64, u: UniformPrior) -> f64 {
    if u.contains(x) {
        -(u.upper - u.lower).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Gaussian log-likelihood of every SLD record around its patient's line.
pub fn longitudinal_loglik(params: &LongitudinalParams, cohort: &CohortDataset) -> Result<f64> {
    let mut ll = 0.0;
    let ln_sigma = params.sigma.ln();
    let inv_var = 1.0 / (params.sigma * params.sigma);
    for (i, p) in cohort.patients.iter().enumerate() {
        let (a, b) = params.patient_line(i, p.group)?;
        for r in &p.measurements {
            let e = r.sld - (a + b * r.time);
            ll += -HALF_LN_2PI - ln_sigma - 0.5 * e * e * inv_var;
        }
    }
    Ok(ll)
}

/// Value of the patient trajectory `m_i(t)`.
pub fn trajectory_mean(params: &LongitudinalParams, cohort: &CohortDataset, patient: usize, t: f64) -> Result<f64> {
    let g = cohort.patients.get(patient).ok_or(Error::UnknownPatient(patient))?.group;
    let (a, b) = params.patient_line(patient, g)?;
    Ok(a + b * t)
}

/// Slope of the patient trajectory, `beta1 + b1_i`.
pub fn trajectory_slope(params: &LongitudinalParams, patient: usize) -> Result<f64> {
    let b = params.random_effects.get(patient).ok_or(Error::UnknownPatient(patient))?;
    Ok(params.beta1 + b[1])
}

/// `sum_i [ d_i log h_i(T_i) - H_i(T_i) ]`.
pub fn survival_loglik(state: &ParameterState, cohort: &CohortDataset, quad: &GaussLegendre) -> Result<f64> {
    let mut ll = 0.0;
    for i in 0..cohort.len() {
        let h = PatientHazard::from_state(state, cohort, i)?;
        let p = &cohort.patients[i];
        let t = p.survival.os_time;
        let cum = super::hazard::cumulative_hazard(state, cohort, i, t, quad)?;
        if p.survival.event {
            let mut caps = CapCounter::default();
            ll += h.log_hazard(t, &mut caps);
        }
        ll -= cum;
    }
    Ok(ll)
}

/// Log prior density; `-inf` outside the support.
pub fn log_prior(state: &ParameterState, spec: &JointModelSpec) -> f64 {
    let p = &spec.priors;
    let lp = &state.longitudinal;
    let mut lpd = 0.0;

    if lp.beta0.len() != spec.n_intercepts() {
        return f64::NEG_INFINITY;
    }
    for &b in &lp.beta0 {
        lpd += uniform_logpdf(b, p.beta0);
    }
    lpd += uniform_logpdf(lp.beta1, spec.slope_prior());
    lpd += uniform_logpdf(lp.sigma, p.sigma);
    lpd += uniform_logpdf(lp.omega0, p.omega);
    if spec.random_slope {
        lpd += uniform_logpdf(lp.omega1, p.omega);
    } else if lp.omega1 != 0.0 || lp.random_effects.iter().any(|b| b[1] != 0.0) {
        return f64::NEG_INFINITY;
    }
    if !lpd.is_finite() {
        return f64::NEG_INFINITY;
    }
    for b in &lp.random_effects {
        lpd += normal_logpdf(b[0], 0.0, lp.omega0);
        if spec.random_slope {
            lpd += normal_logpdf(b[1], 0.0, lp.omega1);
        }
    }

    let sv = &state.survival;
    if !(sv.shape > 0.0) || sv.phi.len() != spec.n_groups() {
        return f64::NEG_INFINITY;
    }
    lpd += p.shape_rate.ln() - p.shape_rate * sv.shape;
    for &phi in &sv.phi {
        lpd += normal_logpdf(phi, 0.0, p.coefficient_sd);
    }

    let a = &state.association;
    if a.structure != spec.structure
        || a.functional != spec.functional
        || a.alpha_k.len() != spec.n_groups()
    {
        return f64::NEG_INFINITY;
    }
    if p.fix_association_zero {
        if a.alpha != 0.0 || a.alpha_k.iter().any(|&x| x != 0.0) {
            return f64::NEG_INFINITY;
        }
        if a.structure == AssociationStructure::Exchangeable {
            if !(a.tau > 0.0) {
                return f64::NEG_INFINITY;
            }
            lpd += half_normal_logpdf(a.tau, p.tau_scale);
        }
        return lpd;
    }
    match a.structure {
        AssociationStructure::Common => {
            if a.alpha_k.iter().any(|&x| x != a.alpha) {
                return f64::NEG_INFINITY;
            }
            lpd += normal_logpdf(a.alpha, 0.0, p.association_sd);
        }
        AssociationStructure::Exchangeable => {
            if !(a.tau > 0.0) {
                return f64::NEG_INFINITY;
            }
            lpd += normal_logpdf(a.alpha, 0.0, p.association_sd);
            lpd += half_normal_logpdf(a.tau, p.tau_scale);
            for &ak in &a.alpha_k {
                lpd += normal_logpdf(ak, a.alpha, a.tau);
            }
        }
        AssociationStructure::Independent => {
            for &ak in &a.alpha_k {
                lpd += normal_logpdf(ak, 0.0, p.association_sd);
            }
        }
    }
    lpd
}

pub(crate) fn half_normal_logpdf(x: f64, scale: f64) -> f64 {
    if x > 0.0 {
        LN_2 + normal_logpdf(x, 0.0, scale)
    } else {
        f64::NEG_INFINITY
    }
}

/// Joint log posterior (unnormalised).
pub fn log_posterior(state: &ParameterState, cohort: &CohortDataset, spec: &JointModelSpec) -> Result<f64> {
    JointModel::new(spec, cohort)?.log_posterior(state)
}

/// Per-patient sufficient statistics of the biomarker series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientData {
    pub group: usize,
    pub n_obs: f64,
    pub sum_t: f64,
    pub sum_tt: f64,
    pub sum_y: f64,
    pub sum_ty: f64,
    pub sum_yy: f64,
    pub os_time: f64,
    pub ln_os_time: f64,
    pub event: bool,
}

impl PatientData {
    /// Residual sum of squares around the line `a + b t`.
    #[inline]
    pub fn rss(&self, a: f64, b: f64) -> f64 {
        let v = self.sum_yy - 2.0 * (a * self.sum_y + b * self.sum_ty)
            + a * a * self.n_obs
            + 2.0 * a * b * self.sum_t
            + b * b * self.sum_tt;
        v.max(0.0)
    }
}

/// A cohort prepared for repeated posterior evaluation under one spec.
#[derive(Debug, Clone)]
pub struct JointModel<'a> {
    pub spec: &'a JointModelSpec,
    pub cohort: &'a CohortDataset,
    pub quad: GaussLegendre,
    pub patients: Vec<PatientData>,
    pub n_obs_total: f64,
}

impl<'a> JointModel<'a> {
    pub fn new(spec: &'a JointModelSpec, cohort: &'a CohortDataset) -> Result<Self> {
        spec.validate()?;
        if cohort.n_groups() != spec.n_groups() {
            return Err(Error::InvalidSpec(alloc::format!(
                "spec declares {} tumour groups, cohort has {}",
                spec.n_groups(),
                cohort.n_groups()
            )));
        }
        for (a, b) in spec.group_labels.iter().zip(&cohort.groups) {
            if *a != b.label {
                return Err(Error::InvalidSpec(alloc::format!(
                    "group label order mismatch: spec `{a}` vs cohort `{}`",
                    b.label
                )));
            }
        }
        let quad = GaussLegendre::new(spec.quadrature_nodes)?;
        let patients: Vec<PatientData> = cohort
            .patients
            .iter()
            .map(|p| {
                let mut d = PatientData {
                    group: p.group,
                    n_obs: p.measurements.len() as f64,
                    sum_t: 0.0,
                    sum_tt: 0.0,
                    sum_y: 0.0,
                    sum_ty: 0.0,
                    sum_yy: 0.0,
                    os_time: p.survival.os_time,
                    ln_os_time: p.survival.os_time.ln(),
                    event: p.survival.event,
                };
                for r in &p.measurements {
                    d.sum_t += r.time;
                    d.sum_tt += r.time * r.time;
                    d.sum_y += r.sld;
                    d.sum_ty += r.time * r.sld;
                    d.sum_yy += r.sld * r.sld;
                }
                d
            })
            .collect();
        let n_obs_total = patients.iter().map(|p| p.n_obs).sum();
        Ok(Self {
            spec,
            cohort,
            quad,
            patients,
            n_obs_total,
        })
    }

    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    /// Longitudinal log-likelihood of patient `i` given its line and sigma.
    #[inline]
    pub fn patient_longitudinal(&self, i: usize, a: f64, b: f64, sigma: f64) -> f64 {
        let d = &self.patients[i];
        -d.n_obs * (HALF_LN_2PI + sigma.ln()) - 0.5 * d.rss(a, b) / (sigma * sigma)
    }

    /// Survival log-likelihood contribution of patient `i`.
    #[inline]
    pub fn patient_survival(&self, i: usize, h: &PatientHazard, table: &ShapeTable, caps: &mut CapCounter) -> f64 {
        let d = &self.patients[i];
        let cum = h.cumulative_with_table(d.os_time, &self.quad, table, caps);
        let mut ll = -cum;
        if d.event {
            let mut lp = h.linear_predictor(d.os_time);
            if lp > super::hazard::LINEAR_PREDICTOR_CAP {
                caps.0 += 1;
                lp = super::hazard::LINEAR_PREDICTOR_CAP;
            }
            ll += table.ln_kappa + (table.kappa - 1.0) * d.ln_os_time + lp;
        }
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }

    pub fn patient_hazard(&self, state: &ParameterState, i: usize) -> PatientHazard {
        let g = self.patients[i].group;
        let b = state.longitudinal.random_effects[i];
        PatientHazard::new(
            state.survival.shape,
            state.survival.log_scale(g),
            state.association.coefficient(g),
            state.association.functional,
            state.longitudinal.intercept(g) + b[0],
            state.longitudinal.beta1 + b[1],
        )
    }

    fn check_shape(&self, state: &ParameterState) -> Result<()> {
        if state.longitudinal.random_effects.len() != self.n_patients() {
            return Err(Error::InvalidState(alloc::format!(
                "expected {} random-effect pairs, got {}",
                self.n_patients(),
                state.longitudinal.random_effects.len()
            )));
        }
        state.validate(self.spec.n_groups())
    }

    /// Longitudinal log-likelihood summed record by record.
    pub fn longitudinal_loglik(&self, state: &ParameterState) -> Result<f64> {
        self.check_shape(state)?;
        longitudinal_loglik(&state.longitudinal, self.cohort)
    }

    /// Same quantity through the per-patient sufficient statistics.
    pub fn longitudinal_loglik_fast(&self, state: &ParameterState) -> f64 {
        let l = &state.longitudinal;
        (0..self.n_patients())
            .map(|i| {
                let g = self.patients[i].group;
                let b = l.random_effects[i];
                self.patient_longitudinal(i, l.intercept(g) + b[0], l.beta1 + b[1], l.sigma)
            })
            .sum()
    }

    /// Survival log-likelihood; linear predictors are capped and cap events
    /// counted rather than raised.
    pub fn survival_loglik_capped(&self, state: &ParameterState, caps: &mut CapCounter) -> Result<f64> {
        self.check_shape(state)?;
        let table = ShapeTable::new(&self.quad, state.survival.shape);
        Ok((0..self.n_patients())
            .map(|i| self.patient_survival(i, &self.patient_hazard(state, i), &table, caps))
            .sum())
    }

    pub fn survival_loglik(&self, state: &ParameterState) -> Result<f64> {
        let mut caps = CapCounter::default();
        let v = self.survival_loglik_capped(state, &mut caps)?;
        if caps.0 > 0 || !v.is_finite() {
            // Report the first offending patient.
            for i in 0..self.n_patients() {
                let h = self.patient_hazard(state, i);
                let t = self.patients[i].os_time;
                let lp = h.linear_predictor(t).max(h.linear_predictor(0.0));
                if lp > super::hazard::LINEAR_PREDICTOR_CAP || !lp.is_finite() {
                    return Err(Error::NonFiniteHazard { t, linear_predictor: lp });
                }
            }
            return Err(Error::NonFiniteHazard {
                t: f64::NAN,
                linear_predictor: f64::NAN,
            });
        }
        Ok(v)
    }

    pub fn log_prior(&self, state: &ParameterState) -> f64 {
        log_prior(state, self.spec)
    }

    /// Deviance `-2 (longitudinal + survival log-likelihood)`.
    pub fn deviance(&self, state: &ParameterState) -> Result<f64> {
        Ok(-2.0 * (self.longitudinal_loglik(state)? + self.survival_loglik(state)?))
    }

    pub fn log_posterior(&self, state: &ParameterState) -> Result<f64> {
        self.check_shape(state)?;
        let prior = self.log_prior(state);
        if prior == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.longitudinal_loglik(state)? + self.survival_loglik(state)? + prior)
    }
}
