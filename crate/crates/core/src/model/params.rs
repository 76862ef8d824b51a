use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the association between biomarker and hazard varies by tumour group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssociationStructure {
    /// One coefficient shared by every group.
    Common,
    /// Group coefficients drawn from `Normal(alpha, tau^2)`.
    Exchangeable,
    /// Unrelated group coefficients.
    Independent,
}

/// Which feature of the trajectory enters the hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationFunctional {
    /// The trajectory value `m_i(t)`.
    #[serde(alias = "current")]
    CurrentValue,
    /// The trajectory slope (constant in time for a linear trajectory).
    Slope,
}

impl core::str::FromStr for AssociationStructure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "common" => Ok(Self::Common),
            "exchangeable" => Ok(Self::Exchangeable),
            "independent" => Ok(Self::Independent),
            _ => Err(Error::InvalidSpec(format!("unknown association structure `{s}`"))),
        }
    }
}

impl core::str::FromStr for AssociationFunctional {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "current" | "current_value" => Ok(Self::CurrentValue),
            "slope" => Ok(Self::Slope),
            _ => Err(Error::InvalidSpec(format!("unknown association functional `{s}`"))),
        }
    }
}

impl AssociationStructure {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Common => "common",
            Self::Exchangeable => "exchangeable",
            Self::Independent => "independent",
        }
    }
}

impl AssociationFunctional {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CurrentValue => "current",
            Self::Slope => "slope",
        }
    }
}

/// Linear mixed model for SLD: `y_ij = (beta0 + b0_i) + (beta1 + b1_i) t_ij + e_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalParams {
    /// Population intercept (mm). One entry when shared, one per tumour
    /// group when group intercepts are enabled.
    pub beta0: Vec<f64>,
    /// Population slope (mm/month).
    pub beta1: f64,
    /// Residual SD (mm).
    pub sigma: f64,
    /// Between-patient intercept SD (mm).
    pub omega0: f64,
    /// Between-patient slope SD (mm/month); 0 when the random slope is off.
    pub omega1: f64,
    /// Per-patient `(b0_i, b1_i)`.
    pub random_effects: Vec<[f64; 2]>,
}

impl LongitudinalParams {
    pub fn intercept(&self, group: usize) -> f64 {
        if self.beta0.len() == 1 {
            self.beta0[0]
        } else {
            self.beta0[group]
        }
    }

    /// Patient-level intercept and slope `(beta0 + b0_i, beta1 + b1_i)`.
    pub fn patient_line(&self, patient: usize, group: usize) -> Result<(f64, f64)> {
        let b = self
            .random_effects
            .get(patient)
            .ok_or(Error::UnknownPatient(patient))?;
        Ok((self.intercept(group) + b[0], self.beta1 + b[1]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta0.is_empty() {
            return Err(Error::InvalidState("no intercept".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidState(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.omega0 > 0.0) {
            return Err(Error::InvalidState(format!("omega0 must be > 0, got {}", self.omega0)));
        }
        if !(self.omega1 >= 0.0) {
            return Err(Error::InvalidState(format!("omega1 must be >= 0, got {}", self.omega1)));
        }
        Ok(())
    }
}

/// Weibull proportional-hazards parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalParams {
    /// Weibull shape `kappa`.
    pub shape: f64,
    /// `phi[0]` is the log-scale intercept (reference group); `phi[g]` for
    /// `g >= 1` is the log hazard ratio of group `g` against the reference.
    pub phi: Vec<f64>,
}

impl SurvivalParams {
    /// Group linear predictor `phi0 + phi_g`.
    pub fn log_scale(&self, group: usize) -> f64 {
        if group == 0 {
            self.phi[0]
        } else {
            self.phi[0] + self.phi[group]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0) {
            return Err(Error::InvalidState(format!("shape must be > 0, got {}", self.shape)));
        }
        if self.phi.is_empty() {
            return Err(Error::InvalidState("no survival coefficients".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    pub structure: AssociationStructure,
    pub functional: AssociationFunctional,
    /// Overall association (per mm, or per mm/month for the slope).
    pub alpha: f64,
    /// Per-group association; mirrors `alpha` under the common structure.
    pub alpha_k: Vec<f64>,
    /// Between-group SD of the association (exchangeable only).
    pub tau: f64,
}

impl AssociationParams {
    pub fn common(functional: AssociationFunctional, alpha: f64, n_groups: usize) -> Self {
        Self {
            structure: AssociationStructure::Common,
            functional,
            alpha,
            alpha_k: alloc::vec![alpha; n_groups],
            tau: 0.0,
        }
    }

    /// Association coefficient acting on a patient in `group`.
    pub fn coefficient(&self, group: usize) -> f64 {
        match self.structure {
            AssociationStructure::Common => self.alpha,
            _ => self.alpha_k[group],
        }
    }

    pub fn validate(&self, n_groups: usize) -> Result<()> {
        if self.alpha_k.len() != n_groups {
            return Err(Error::InvalidState(format!(
                "expected {n_groups} group associations, got {}",
                self.alpha_k.len()
            )));
        }
        match self.structure {
            AssociationStructure::Common => {
                if self.alpha_k.iter().any(|&a| a != self.alpha) {
                    return Err(Error::InvalidState(
                        "common structure requires alpha_k == alpha".into(),
                    ));
                }
            }
            AssociationStructure::Exchangeable => {
                if !(self.tau > 0.0) {
                    return Err(Error::InvalidState(format!("tau must be > 0, got {}", self.tau)));
                }
            }
            AssociationStructure::Independent => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub longitudinal: LongitudinalParams,
    pub survival: SurvivalParams,
    pub association: AssociationParams,
}

impl ParameterState {
    pub fn validate(&self, n_groups: usize) -> Result<()> {
        self.longitudinal.validate()?;
        self.survival.validate()?;
        self.association.validate(n_groups)?;
        if self.survival.phi.len() != n_groups {
            return Err(Error::InvalidState(format!(
                "expected {n_groups} survival coefficients, got {}",
                self.survival.phi.len()
            )));
        }
        Ok(())
    }

    /// The quantity the association acts on for patient `i` at time `t`.
    pub fn link_value(&self, patient: usize, group: usize, t: f64) -> Result<f64> {
        let (a, b) = self.longitudinal.patient_line(patient, group)?;
        Ok(match self.association.functional {
            AssociationFunctional::CurrentValue => a + b * t,
            AssociationFunctional::Slope => b,
        })
    }
}
