//! Schema-versioned JSON documents written by the commands.

use std::path::Path;

use jointsurv_core::data::RmstEstimate;
use jointsurv_core::diagnostics::{Dic, DiagnosticsReport};
use jointsurv_core::extrapolate::{Estimate, ExtrapolationSummary, LandmarkEstimate};
use jointsurv_core::model::ParameterState;
use jointsurv_core::simulate::SimDesign;
use jointsurv_core::MONTHS_PER_YEAR;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON Schema of [`ExtrapolationDocument`].
pub const EXTRAPOLATION_SCHEMA: &str = include_str!("../schema/extrapolation.schema.json");

/// DIC values closer than this are a tie.
pub const DIC_TIE_TOLERANCE: f64 = 1e-6;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("document serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsDocument {
    pub schema_version: u32,
    pub manifest_hash: String,
    /// Hash of the fitted cohort; runs are comparable only when it matches.
    pub cohort_hash: String,
    pub report: DiagnosticsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub scenario: String,
    pub design: SimDesign,
    /// True parameters including every patient's random effects.
    pub truth: ParameterState,
    pub patient_ids: Vec<String>,
    /// Latent death times before censoring, months.
    pub death_times: Vec<f64>,
    pub censor_times: Vec<f64>,
    pub floored_measurements: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedRmst {
    pub horizon_months: f64,
    pub units: Units,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// The horizon passes the last observation while survival is positive.
    pub truncated: bool,
}

impl From<RmstEstimate> for ObservedRmst {
    fn from(r: RmstEstimate) -> Self {
        let y = r.in_years();
        Self {
            horizon_months: r.horizon,
            units: Units::Years,
            point: y.estimate,
            lo: y.lower,
            hi: y.upper,
            truncated: r.truncated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmScope {
    pub scope: String,
    pub n_patients: usize,
    pub n_events: usize,
    pub curve_csv: String,
    pub rmst: Vec<ObservedRmst>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmDocument {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub scopes: Vec<KmScope>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Years,
    Percent,
}

/// RMST over `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmstField {
    pub units: Units,
    pub horizon_months: f64,
    pub point: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianField {
    pub units: Units,
    /// The summary curve stays above one half through the lifespan.
    pub not_reached: bool,
    pub point: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Share of draws whose curve never reaches one half.
    pub not_reached_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkField {
    pub units: Units,
    pub months: f64,
    pub point: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl LandmarkField {
    fn from_estimate(l: &LandmarkEstimate) -> Self {
        Self { units: Units::Percent, months: l.months, point: l.percent.point, lo: l.percent.lower, hi: l.percent.upper }
    }
}

fn rmst_field(e: &Estimate, horizon_months: f64) -> RmstField {
    RmstField { units: Units::Years, horizon_months, point: e.point, lo: e.lower, hi: e.upper }
}

/// Table-shaped summary of one scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeReport {
    pub scope: String,
    pub n_patients: usize,
    pub rmst_lifespan: RmstField,
    pub median: MedianField,
    pub landmark_10y: LandmarkField,
    pub rmst_5y: RmstField,
    /// Every configured landmark.
    pub landmarks: Vec<LandmarkField>,
    /// RMST at the configured short horizon.
    pub rmst_short: RmstField,
    pub capped_fraction: f64,
    pub cap_warning: bool,
}

impl ScopeReport {
    /// `five` must be summarised with a 60-month short horizon and a
    /// 120-month landmark; `short` supplies the configured short horizon.
    pub fn new(five: &ExtrapolationSummary, short: &ExtrapolationSummary) -> Result<Self> {
        let ten = 10.0 * MONTHS_PER_YEAR;
        let landmark_10y = five
            .landmarks
            .iter()
            .find(|l| l.months == ten)
            .map(LandmarkField::from_estimate)
            .ok_or_else(|| CliError::Usage("summary lacks the 10-year landmark".into()))?;
        let m = &five.median;
        Ok(Self {
            scope: five.scope.clone(),
            n_patients: five.n_patients,
            rmst_lifespan: rmst_field(&five.rmst_lifespan, five.lifespan_years * MONTHS_PER_YEAR),
            median: MedianField {
                units: Units::Years,
                not_reached: m.not_reached,
                point: m.estimate.map(|e| e.point),
                lo: m.estimate.and_then(|e| e.lower),
                hi: m.estimate.and_then(|e| e.upper),
                not_reached_fraction: m.not_reached_fraction,
            },
            landmark_10y,
            rmst_5y: rmst_field(&five.rmst_short, five.short_horizon_years * MONTHS_PER_YEAR),
            landmarks: short.landmarks.iter().map(LandmarkField::from_estimate).collect(),
            rmst_short: rmst_field(&short.rmst_short, short.short_horizon_years * MONTHS_PER_YEAR),
            capped_fraction: five.capped_fraction,
            cap_warning: five.cap_warning,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSection {
    pub n_predictive_draws: usize,
    pub curves_csv: String,
    pub scopes: Vec<ScopeReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullSection {
    pub n_bootstrap: usize,
    pub shape: f64,
    pub phi: Vec<f64>,
    pub loglik: f64,
    pub curves_csv: String,
    pub scopes: Vec<ScopeReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationDocument {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub cohort_hash: String,
    pub structure: String,
    pub functional: String,
    pub lifespan_months: f64,
    pub joint: JointSection,
    pub weibull: WeibullSection,
}

/// One fitted model in a DIC comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub structure: String,
    pub functional: String,
    pub dbar: f64,
    pub pd: f64,
    pub dic: f64,
    /// DIC minus the lowest DIC.
    pub delta: f64,
    /// Lowest DIC (within [`DIC_TIE_TOLERANCE`]).
    pub best: bool,
    /// Flagged together with at least one other model.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareDocument {
    pub schema_version: u32,
    pub cohort_hash: String,
    pub rows: Vec<CompareRow>,
}

/// Ranks fitted models by DIC and flags the lowest; ties are all flagged.
pub fn compare_dic(entries: Vec<(String, String, String, Dic)>) -> Result<Vec<CompareRow>> {
    if entries.len() < 2 {
        return Err(CliError::Usage(format!("compare needs at least 2 fits, got {}", entries.len())));
    }
    if let Some((label, ..)) = entries.iter().find(|e| !e.3.dic.is_finite()) {
        return Err(CliError::Usage(format!("`{label}` has a non-finite DIC")));
    }
    let best = entries.iter().map(|e| e.3.dic).fold(f64::INFINITY, f64::min);
    let is_best = |d: f64| d - best <= DIC_TIE_TOLERANCE;
    let n_best = entries.iter().filter(|e| is_best(e.3.dic)).count();
    Ok(entries
        .into_iter()
        .map(|(label, structure, functional, d)| CompareRow {
            label,
            structure,
            functional,
            dbar: d.dbar,
            pd: d.pd,
            dic: d.dic,
            delta: d.dic - best,
            best: is_best(d.dic),
            tie: is_best(d.dic) && n_best > 1,
        })
        .collect())
}
