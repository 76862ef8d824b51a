//! Flat, named view of a [`ParameterState`] used for draw storage.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AssociationFunctional, AssociationParams, AssociationStructure, JointModelSpec, LongitudinalParams,
    ParameterState, SurvivalParams,
};

/// Column layout of a stored draw.
///
/// Order: intercept(s), `beta1`, `sigma`, `omega0`, `omega1` (random slope
/// only), `kappa`, `phi0` then one `phi[<group>]` contrast per non-reference
/// group, `alpha` (common and exchangeable), `alpha[<group>]` (exchangeable
/// and independent), `tau` (exchangeable), then optionally every `b0[<id>]`
/// followed by every `b1[<id>]` (random slope only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub names: Vec<String>,
    pub structure: AssociationStructure,
    pub functional: AssociationFunctional,
    pub n_intercepts: usize,
    pub n_groups: usize,
    pub random_slope: bool,
    pub patient_ids: Vec<String>,
    pub random_effects: bool,
}

impl ParamLayout {
    pub fn new(spec: &JointModelSpec, patient_ids: Vec<String>, random_effects: bool) -> Self {
        let mut names = Vec::new();
        if spec.group_intercepts {
            names.extend(spec.group_labels.iter().map(|g| format!("beta0[{g}]")));
        } else {
            names.push("beta0".into());
        }
        names.push("beta1".into());
        names.push("sigma".into());
        names.push("omega0".into());
        if spec.random_slope {
            names.push("omega1".into());
        }
        names.push("kappa".into());
        names.push("phi0".into());
        names.extend(spec.group_labels.iter().skip(1).map(|g| format!("phi[{g}]")));
        if spec.structure != AssociationStructure::Independent {
            names.push("alpha".into());
        }
        if spec.structure != AssociationStructure::Common {
            names.extend(spec.group_labels.iter().map(|g| format!("alpha[{g}]")));
        }
        if spec.structure == AssociationStructure::Exchangeable {
            names.push("tau".into());
        }
        if random_effects {
            names.extend(patient_ids.iter().map(|p| format!("b0[{p}]")));
            if spec.random_slope {
                names.extend(patient_ids.iter().map(|p| format!("b1[{p}]")));
            }
        }
        Self {
            names,
            structure: spec.structure,
            functional: spec.functional,
            n_intercepts: spec.n_intercepts(),
            n_groups: spec.n_groups(),
            random_slope: spec.random_slope,
            patient_ids,
            random_effects,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Number of leading population-level columns (everything but `b0`/`b1`).
    pub fn n_population(&self) -> usize {
        let re = if self.random_effects {
            self.patient_ids.len() * if self.random_slope { 2 } else { 1 }
        } else {
            0
        };
        self.names.len() - re
    }

    pub fn flatten_into(&self, state: &ParameterState, out: &mut Vec<f64>) {
        let l = &state.longitudinal;
        out.extend_from_slice(&l.beta0);
        out.push(l.beta1);
        out.push(l.sigma);
        out.push(l.omega0);
        if self.random_slope {
            out.push(l.omega1);
        }
        let s = &state.survival;
        out.push(s.shape);
        out.extend_from_slice(&s.phi);
        let a = &state.association;
        if self.structure != AssociationStructure::Independent {
            out.push(a.alpha);
        }
        if self.structure != AssociationStructure::Common {
            out.extend_from_slice(&a.alpha_k);
        }
        if self.structure == AssociationStructure::Exchangeable {
            out.push(a.tau);
        }
        if self.random_effects {
            out.extend(l.random_effects.iter().map(|b| b[0]));
            if self.random_slope {
                out.extend(l.random_effects.iter().map(|b| b[1]));
            }
        }
    }

    pub fn flatten(&self, state: &ParameterState) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        self.flatten_into(state, &mut v);
        v
    }

    /// Rebuild a full state from one stored row.
    pub fn unflatten(&self, row: &[f64]) -> Result<ParameterState> {
        if row.len() != self.len() {
            return Err(Error::InvalidState(format!(
                "draw has {} values, layout expects {}",
                row.len(),
                self.len()
            )));
        }
        if !self.random_effects {
            return Err(Error::InvalidState(
                "draws were stored without patient random effects".into(),
            ));
        }
        let mut it = row.iter().copied();
        let mut next = || it.next().unwrap_or(f64::NAN);
        let beta0 = (0..self.n_intercepts).map(|_| next()).collect();
        let beta1 = next();
        let sigma = next();
        let omega0 = next();
        let omega1 = if self.random_slope { next() } else { 0.0 };
        let shape = next();
        let phi = (0..self.n_groups).map(|_| next()).collect();
        let k = self.n_groups;
        let (alpha, alpha_k, tau) = match self.structure {
            AssociationStructure::Common => {
                let a = next();
                (a, alloc::vec![a; k], 0.0)
            }
            AssociationStructure::Exchangeable => {
                let a = next();
                let ak: Vec<f64> = (0..k).map(|_| next()).collect();
                (a, ak, next())
            }
            AssociationStructure::Independent => (0.0, (0..k).map(|_| next()).collect(), 0.0),
        };
        let n = self.patient_ids.len();
        let b0: Vec<f64> = (0..n).map(|_| next()).collect();
        let b1: Vec<f64> = if self.random_slope {
            (0..n).map(|_| next()).collect()
        } else {
            alloc::vec![0.0; n]
        };
        Ok(ParameterState {
            longitudinal: LongitudinalParams {
                beta0,
                beta1,
                sigma,
                omega0,
                omega1,
                random_effects: b0.into_iter().zip(b1).map(|(a, b)| [a, b]).collect(),
            },
            survival: SurvivalParams { shape, phi },
            association: AssociationParams {
                structure: self.structure,
                functional: self.functional,
                alpha,
                alpha_k,
                tau,
            },
        })
    }
}
