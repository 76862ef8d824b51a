use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::{AssociationFunctional, AssociationStructure};
use crate::error::{Error, Result};
use crate::quadrature::{DEFAULT_NODES, MIN_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPrior {
    pub lower: f64,
    pub upper: f64,
}

impl UniformPrior {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Prior hyperparameters. Defaults are the published analysis settings; the
/// residual SD prior is not stated there and defaults to `Uniform(0, 100)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub beta0: UniformPrior,
    pub beta1: UniformPrior,
    pub sigma: UniformPrior,
    /// Shared by both between-patient SDs.
    pub omega: UniformPrior,
    /// SD of the Normal prior on every survival regression coefficient,
    /// including the log-scale intercept.
    pub coefficient_sd: f64,
    /// SD of the Normal prior on the overall (or independent) association.
    pub association_sd: f64,
    /// Rate of the Exponential prior on the Weibull shape.
    pub shape_rate: f64,
    /// Scale of the Half-Normal prior on `tau`.
    pub tau_scale: f64,
    /// Point mass at zero on every association coefficient.
    pub fix_association_zero: bool,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            beta0: UniformPrior::new(0.0, 60.0),
            beta1: UniformPrior::new(0.0, 1.0),
            sigma: UniformPrior::new(0.0, 100.0),
            omega: UniformPrior::new(0.0, 20.0),
            coefficient_sd: 1000.0,
            association_sd: 1000.0,
            shape_rate: 0.003,
            tau_scale: 0.5,
            fix_association_zero: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModelSpec {
    pub structure: AssociationStructure,
    pub functional: AssociationFunctional,
    pub priors: Priors,
    pub quadrature_nodes: usize,
    /// Patient-level random slope; when off `b1_i = 0` and `omega1 = 0`.
    pub random_slope: bool,
    /// One population intercept per tumour group instead of a shared one.
    pub group_intercepts: bool,
    /// Widens the population slope prior to `Uniform(-1, 1)`.
    pub wide_slope_prior: bool,
    /// Tumour-group labels; the first is the survival reference category.
    pub group_labels: Vec<String>,
}

impl JointModelSpec {
    pub fn new(structure: AssociationStructure, group_labels: Vec<String>) -> Self {
        Self {
            structure,
            functional: AssociationFunctional::CurrentValue,
            priors: Priors::default(),
            quadrature_nodes: DEFAULT_NODES,
            random_slope: true,
            group_intercepts: false,
            wide_slope_prior: false,
            group_labels,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn slope_prior(&self) -> UniformPrior {
        if self.wide_slope_prior {
            UniformPrior::new(-1.0, 1.0)
        } else {
            self.priors.beta1
        }
    }

    pub fn n_intercepts(&self) -> usize {
        if self.group_intercepts {
            self.n_groups()
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quadrature_nodes < MIN_NODES {
            return Err(Error::InvalidSpec(format!(
                "quadrature_nodes must be >= {MIN_NODES}, got {}",
                self.quadrature_nodes
            )));
        }
        if self.group_labels.is_empty() {
            return Err(Error::InvalidSpec("no tumour-group labels".into()));
        }
        let p = &self.priors;
        for (name, u) in [
            ("beta0", p.beta0),
            ("beta1", self.slope_prior()),
            ("sigma", p.sigma),
            ("omega", p.omega),
        ] {
            if !(u.lower < u.upper) || !u.lower.is_finite() || !u.upper.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} prior bounds are not ordered")));
            }
        }
        for (name, u) in [("sigma", p.sigma), ("omega", p.omega)] {
            if u.lower < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "{name} prior must lie within (0, inf), lower bound {}",
                    u.lower
                )));
            }
        }
        for (name, v) in [
            ("coefficient_sd", p.coefficient_sd),
            ("association_sd", p.association_sd),
            ("shape_rate", p.shape_rate),
            ("tau_scale", p.tau_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}
