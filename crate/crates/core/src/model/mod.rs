//! Parameters, priors and the exact joint log-posterior, plus the standalone
//! Weibull comparator.

pub mod hazard;
pub mod likelihood;
pub mod params;
pub mod spec;
pub mod weibull;

pub use hazard::{
    association_hr, baseline_hazard, cumulative_hazard, cumulative_hazard_between, joint_hazard,
    CapCounter, PatientHazard, ShapeTable, LINEAR_PREDICTOR_CAP,
};
pub use likelihood::{
    log_posterior, log_prior, longitudinal_loglik, survival_loglik, trajectory_mean,
    trajectory_slope, JointModel, PatientData,
};
pub use params::{
    AssociationFunctional, AssociationParams, AssociationStructure, LongitudinalParams,
    ParameterState, SurvivalParams,
};
pub use spec::{JointModelSpec, Priors, UniformPrior};
pub use weibull::{fit_weibull_mle, fit_weibull_mle_with, weibull_loglik, WeibullFit, WeibullOptions};
