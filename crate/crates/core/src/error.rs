use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("longitudinal record {row}: {reason}")]
    InvalidLongitudinal { row: usize, reason: String },

    #[error("survival record {row}: {reason}")]
    InvalidSurvival { row: usize, reason: String },

    #[error("longitudinal records reference unknown patient `{0}`")]
    OrphanPatient(String),

    #[error("patient `{0}` has no biomarker records")]
    NoBiomarkerRecords(String),

    #[error("patient `{patient}` has a biomarker record at {time} months after os_time {os_time}")]
    MeasurementAfterExit {
        patient: String,
        time: f64,
        os_time: f64,
    },

    #[error("unknown tumour group `{0}`")]
    UnknownGroup(String),

    #[error("unknown patient index {0}")]
    UnknownPatient(usize),

    #[error("hazard is singular at t = 0 for shape {shape} < 1")]
    SingularHazard { shape: f64 },

    #[error("non-finite cumulative hazard at t = {t} (linear predictor {linear_predictor})")]
    NonFiniteHazard { t: f64, linear_predictor: f64 },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter state: {0}")]
    InvalidState(String),

    #[error("no events observed; the Weibull scale is not identifiable")]
    NoEvents,

    #[error("group `{0}` has no events; its maximum-likelihood scale does not exist")]
    NoEventsInGroup(String),

    #[error("optimiser failed to converge after {0} iterations")]
    NonConvergence(usize),

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("failed to find a finite-posterior starting state after {0} attempts")]
    InitializationFailed(usize),

    #[error("non-finite log posterior at sweep {sweep} of chain {chain}: {state}")]
    NonFinitePosterior {
        chain: usize,
        sweep: usize,
        state: String,
    },

    #[error("insufficient draws: {got} available, at least {need} required")]
    TooFewDraws { got: usize, need: usize },

    #[error("root finder did not converge")]
    RootFinding,

    #[error("horizon {horizon} exceeds the curve grid maximum {grid_max}")]
    HorizonBeyondGrid { horizon: f64, grid_max: f64 },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}
