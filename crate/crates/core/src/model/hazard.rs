//! Weibull proportional hazards with a trajectory-dependent linear predictor.
//!
//! For patient `i` in group `g` the hazard is
//! `kappa t^(kappa-1) exp(eta_g + a_g L_i(t))` where `eta_g = phi0 + phi_g`
//! and `L_i` is the trajectory value `l0 + l1 t` (current value) or its slope.
//! The cumulative hazard is integrated after substituting `u = t^kappa`,
//! which absorbs the `t^(kappa-1)` factor so the quadrature integrand is
//! smooth at the origin and exact whenever the link is constant in time.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;

use super::params::{AssociationFunctional, ParameterState};
use crate::data::CohortDataset;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Linear predictors above this are capped before exponentiation.
pub const LINEAR_PREDICTOR_CAP: f64 = 700.0;

/// Largest change of the linear predictor integrated by one quadrature
/// panel. Fits to typical follow-up stay within one panel.
pub const MAX_PANEL_DRIFT: f64 = 1.0;
const MAX_PANELS: usize = 1024;

/// Counts linear-predictor cap events during an evaluation.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CapCounter(pub u64);

#[inline]
pub(crate) fn capped_exp(x: f64, caps: &mut CapCounter) -> f64 {
    if x > LINEAR_PREDICTOR_CAP {
        caps.0 += 1;
        LINEAR_PREDICTOR_CAP.exp()
    } else {
        x.exp()
    }
}

/// `kappa exp(phi0) t^(kappa - 1)`.
pub fn baseline_hazard(shape: f64, log_scale: f64, t: f64) -> Result<f64> {
    if !(shape > 0.0) {
        return Err(Error::InvalidState(alloc::format!("shape must be > 0, got {shape}")));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(alloc::format!("time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        if shape < 1.0 {
            return Err(Error::SingularHazard { shape });
        }
        return Ok(if shape == 1.0 { log_scale.exp() } else { 0.0 });
    }
    Ok(shape * log_scale.exp() * t.powf(shape - 1.0))
}

/// Hazard ratio `exp(alpha delta)` for a `delta` change in the linked quantity.
pub fn association_hr(alpha: f64, delta: f64) -> f64 {
    (alpha * delta).exp()
}

/// Powers `v_j^(1/kappa)` of the quadrature nodes, shared by every patient
/// for a given shape.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub kappa: f64,
    pub ln_kappa: f64,
    pub node_powers: Vec<f64>,
}

impl ShapeTable {
    pub fn new(quad: &GaussLegendre, kappa: f64) -> Self {
        let inv = 1.0 / kappa;
        Self {
            kappa,
            ln_kappa: kappa.ln(),
            node_powers: quad.nodes().iter().map(|&v| (v.ln() * inv).exp()).collect(),
        }
    }
}

/// One patient's hazard under one parameter state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientHazard {
    pub kappa: f64,
    /// `phi0 + phi_g`.
    pub log_scale: f64,
    /// Association coefficient acting on this patient.
    pub coef: f64,
    /// Link `L(t) = level + rate t`.
    pub level: f64,
    pub rate: f64,
}

impl PatientHazard {
    pub fn new(
        kappa: f64,
        log_scale: f64,
        coef: f64,
        functional: AssociationFunctional,
        intercept: f64,
        slope: f64,
    ) -> Self {
        let (level, rate) = match functional {
            AssociationFunctional::CurrentValue => (intercept, slope),
            AssociationFunctional::Slope => (slope, 0.0),
        };
        Self {
            kappa,
            log_scale,
            coef,
            level,
            rate,
        }
    }

    pub fn from_state(state: &ParameterState, cohort: &CohortDataset, patient: usize) -> Result<Self> {
        let p = cohort.patients.get(patient).ok_or(Error::UnknownPatient(patient))?;
        let g = p.group;
        let (intercept, slope) = state.longitudinal.patient_line(patient, g)?;
        Ok(Self::new(
            state.survival.shape,
            state.survival.log_scale(g),
            state.association.coefficient(g),
            state.association.functional,
            intercept,
            slope,
        ))
    }

    #[inline]
    pub fn linear_predictor(&self, t: f64) -> f64 {
        self.log_scale + self.coef * (self.level + self.rate * t)
    }

    /// `a * rate`: the time-coefficient of the linear predictor.
    #[inline]
    fn drift(&self) -> f64 {
        self.coef * self.rate
    }

    pub fn log_hazard(&self, t: f64, caps: &mut CapCounter) -> f64 {
        let lp = self.linear_predictor(t);
        let lp = if lp > LINEAR_PREDICTOR_CAP {
            caps.0 += 1;
            LINEAR_PREDICTOR_CAP
        } else {
            lp
        };
        self.kappa.ln() + (self.kappa - 1.0) * t.ln() + lp
    }

    pub fn hazard(&self, t: f64, caps: &mut CapCounter) -> f64 {
        self.log_hazard(t, caps).exp()
    }

    /// `H(t)` from 0, using precomputed node powers for this shape.
    pub fn cumulative_with_table(
        &self,
        t: f64,
        quad: &GaussLegendre,
        table: &ShapeTable,
        caps: &mut CapCounter,
    ) -> f64 {
        let drift_t = self.drift() * t;
        if drift_t.abs() > MAX_PANEL_DRIFT {
            return self.cumulative_between(0.0, t, quad, caps);
        }
        let t_pow = (self.kappa * t.ln()).exp();
        let base = self.log_scale + self.coef * self.level;
        if drift_t == 0.0 {
            return t_pow * capped_exp(base, caps);
        }
        let s: f64 = quad
            .weights()
            .iter()
            .zip(&table.node_powers)
            .map(|(&w, &p)| w * capped_exp(base + drift_t * p, caps))
            .sum();
        t_pow * s
    }

    /// `H(t)` from 0.
    pub fn cumulative(&self, t: f64, quad: &GaussLegendre, caps: &mut CapCounter) -> f64 {
        self.cumulative_between(0.0, t, quad, caps)
    }

    /// `H(to) - H(from)` integrated directly over `[from, to]`.
    ///
    /// The interval is split into equal panels in `t` so that the linear
    /// predictor moves by at most [`MAX_PANEL_DRIFT`] within each; every
    /// panel gets the Gauss–Legendre rule in `u = t^kappa`.
    pub fn cumulative_between(
        &self,
        from: f64,
        to: f64,
        quad: &GaussLegendre,
        caps: &mut CapCounter,
    ) -> f64 {
        let span = (self.drift() * (to - from)).abs();
        if span <= MAX_PANEL_DRIFT {
            return self.panel(from, to, quad, caps);
        }
        let panels = ((span / MAX_PANEL_DRIFT).ceil() as usize).min(MAX_PANELS);
        let step = (to - from) / panels as f64;
        (0..panels)
            .map(|j| {
                let a = from + j as f64 * step;
                let b = if j + 1 == panels { to } else { a + step };
                self.panel(a, b, quad, caps)
            })
            .sum()
    }

    fn panel(&self, from: f64, to: f64, quad: &GaussLegendre, caps: &mut CapCounter) -> f64 {
        let k = self.kappa;
        let u0 = if from > 0.0 { (k * from.ln()).exp() } else { 0.0 };
        let u1 = (k * to.ln()).exp();
        let base = self.log_scale + self.coef * self.level;
        let drift = self.drift();
        let width = u1 - u0;
        if drift == 0.0 {
            return width * capped_exp(base, caps);
        }
        let inv_k = 1.0 / k;
        let s: f64 = quad
            .nodes()
            .iter()
            .zip(quad.weights())
            .map(|(&v, &w)| {
                let u = u0 + width * v;
                let t = (u.ln() * inv_k).exp();
                w * capped_exp(base + drift * t, caps)
            })
            .sum();
        width * s
    }
}

/// Hazard of patient `patient` at time `t` under the joint model.
pub fn joint_hazard(
    state: &ParameterState,
    cohort: &CohortDataset,
    patient: usize,
    t: f64,
) -> Result<f64> {
    let h = PatientHazard::from_state(state, cohort, patient)?;
    let base = baseline_hazard(state.survival.shape, h.log_scale, t)?;
    let lp = h.coef * (h.level + h.rate * t);
    check_cap(t, h.linear_predictor(t))?;
    Ok(base * lp.exp())
}

/// Cumulative hazard `H_i(t)` of the joint model. Uses the closed form
/// `exp(phi0 + phi_g + a L) t^kappa` when the link is constant in time (in
/// particular when `a = 0`) and Gauss–Legendre quadrature otherwise.
pub fn cumulative_hazard(
    state: &ParameterState,
    cohort: &CohortDataset,
    patient: usize,
    t: f64,
    quad: &GaussLegendre,
) -> Result<f64> {
    cumulative_hazard_between(state, cohort, patient, 0.0, t, quad)
}

pub fn cumulative_hazard_between(
    state: &ParameterState,
    cohort: &CohortDataset,
    patient: usize,
    from: f64,
    to: f64,
    quad: &GaussLegendre,
) -> Result<f64> {
    if !(to > 0.0) || !(from >= 0.0) || from > to {
        return Err(Error::InvalidInput(alloc::format!(
            "invalid integration interval [{from}, {to}]"
        )));
    }
    let h = PatientHazard::from_state(state, cohort, patient)?;
    // The linear predictor is monotone in t, so its maximum is at an end.
    let worst = if h.linear_predictor(to) >= h.linear_predictor(from) { to } else { from };
    check_cap(worst, h.linear_predictor(worst))?;
    let mut caps = CapCounter::default();
    let v = h.cumulative_between(from, to, quad, &mut caps);
    if !v.is_finite() {
        return Err(Error::NonFiniteHazard {
            t: to,
            linear_predictor: h.linear_predictor(to),
        });
    }
    Ok(v)
}

fn check_cap(t: f64, lp: f64) -> Result<()> {
    if lp > LINEAR_PREDICTOR_CAP || !lp.is_finite() {
        Err(Error::NonFiniteHazard {
            t,
            linear_predictor: lp,
        })
    } else {
        Ok(())
    }
}
