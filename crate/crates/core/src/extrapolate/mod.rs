//! Survival extrapolation: posterior-predictive curves from the joint model,
//! plug-in curves from the Weibull comparator, and RMST / median / landmark
//! summaries with 95% intervals.

mod predict;
mod weibull;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use predict::{
    conditional_death_draw, invert_cumulative, predict_cohort, selected_draws, DeathTime, PredictOptions,
    PredictedSurvivalDraw, TIME_TOLERANCE,
};
pub use weibull::{weibull_extrapolation, WeibullExtrapolation};

use crate::data::CohortDataset;
use crate::error::{Error, Result};
use crate::sampler::PosteriorSamples;
use crate::stats::{mean, quantile_sorted, sorted};
use crate::MONTHS_PER_YEAR;

/// Fewest per-draw statistics accepted by [`summarize`].
pub const MIN_SUMMARY_DRAWS: usize = 40;
/// Share of horizon-capped draws above which summaries carry a warning.
pub const CAP_WARNING_FRACTION: f64 = 0.01;

/// Monthly points to 120 months, then quarterly to `horizon`.
pub fn default_grid(horizon: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=120).map(|m| m as f64).filter(|&t| t < horizon).collect();
    let mut t = 123.0;
    while t < horizon {
        g.push(t);
        t += 3.0;
    }
    g.push(horizon);
    g
}

/// Per-draw survival curves on a time grid with a pointwise summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveGrid {
    pub scope: String,
    /// Months.
    pub time: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CurveGrid {
    /// Build from per-draw curves: pointwise mean and 2.5/97.5 percentiles.
    pub fn from_draws(scope: String, time: Vec<f64>, draws: Vec<Vec<f64>>) -> Result<Self> {
        if time.is_empty() {
            return Err(Error::InvalidInput("empty time grid".into()));
        }
        if draws.is_empty() {
            return Err(Error::InvalidInput("no curve draws".into()));
        }
        let mut m = Vec::with_capacity(time.len());
        let mut lo = Vec::with_capacity(time.len());
        let mut hi = Vec::with_capacity(time.len());
        let mut col = Vec::with_capacity(draws.len());
        for j in 0..time.len() {
            col.clear();
            col.extend(draws.iter().map(|d| d[j]));
            m.push(mean(&col));
            let s = sorted(&col);
            lo.push(quantile_sorted(&s, 0.025));
            hi.push(quantile_sorted(&s, 0.975));
        }
        Ok(Self {
            scope,
            time,
            draws,
            mean: m,
            lower: lo,
            upper: hi,
        })
    }
}

/// Empirical survival fraction of the selected patients on `grid`. Capped
/// patients count as alive throughout.
pub fn empirical_curve(draw: &PredictedSurvivalDraw, patients: &[usize], grid: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = patients
        .iter()
        .map(|&p| if draw.capped[p] { f64::INFINITY } else { draw.times[p] })
        .collect();
    t.sort_by(f64::total_cmp);
    let n = t.len() as f64;
    let mut dead = 0;
    grid.iter()
        .map(|&g| {
            while dead < t.len() && t[dead] <= g {
                dead += 1;
            }
            (t.len() - dead) as f64 / n
        })
        .collect()
}

/// Survival curves of the given patients, one per predictive draw.
pub fn curve_from_draws(
    scope: impl Into<String>,
    draws: &[PredictedSurvivalDraw],
    patients: &[usize],
    grid: &[f64],
) -> Result<CurveGrid> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if patients.is_empty() {
        return Err(Error::InvalidInput("no patients in scope".into()));
    }
    let curves = draws.iter().map(|d| empirical_curve(d, patients, grid)).collect();
    CurveGrid::from_draws(scope.into(), grid.to_vec(), curves)
}

/// Linear interpolation of a curve at `t` (months).
pub fn interpolate(time: &[f64], surv: &[f64], t: f64) -> Result<f64> {
    let last = *time.last().ok_or_else(|| Error::InvalidInput("empty time grid".into()))?;
    if t > last {
        return Err(Error::HorizonBeyondGrid { horizon: t, grid_max: last });
    }
    if t <= time[0] {
        return Ok(surv[0]);
    }
    let j = time.partition_point(|&x| x < t);
    if time[j] == t {
        return Ok(surv[j]);
    }
    let (t0, t1) = (time[j - 1], time[j]);
    let w = (t - t0) / (t1 - t0);
    Ok(surv[j - 1] + w * (surv[j] - surv[j - 1]))
}

/// Trapezoid area under the curve on `[0, horizon]`, in years.
pub fn rmst(time: &[f64], surv: &[f64], horizon: f64) -> Result<f64> {
    let end = interpolate(time, surv, horizon)?;
    let mut area = 0.0;
    for j in 1..time.len() {
        if time[j] >= horizon {
            area += 0.5 * (surv[j - 1] + end) * (horizon - time[j - 1]);
            break;
        }
        area += 0.5 * (surv[j - 1] + surv[j]) * (time[j] - time[j - 1]);
    }
    Ok(area / MONTHS_PER_YEAR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Median {
    /// Years; `None` when the curve stays above one half.
    pub years: Option<f64>,
    pub not_reached: bool,
}

/// Smallest interpolated time with `S(t) <= 0.5`.
pub fn median_survival(time: &[f64], surv: &[f64]) -> Median {
    match surv.iter().position(|&s| s <= 0.5) {
        None => Median { years: None, not_reached: true },
        Some(0) => Median { years: Some(time[0] / MONTHS_PER_YEAR), not_reached: false },
        Some(j) => {
            let (s0, s1) = (surv[j - 1], surv[j]);
            let t = time[j - 1] + (s0 - 0.5) / (s0 - s1) * (time[j] - time[j - 1]);
            Median { years: Some(t / MONTHS_PER_YEAR), not_reached: false }
        }
    }
}

/// `100 S(t)` at `t` months.
pub fn landmark(time: &[f64], surv: &[f64], t: f64) -> Result<f64> {
    Ok(100.0 * interpolate(time, surv, t)?)
}

/// Point estimate with an optional 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Estimate {
    pub fn point_only(point: f64) -> Self {
        Self { point, lower: None, upper: None }
    }
}

/// Posterior mean with equal-tailed 2.5% / 97.5% percentiles (type 7).
pub fn summarize(values: &[f64]) -> Result<Estimate> {
    if values.len() < MIN_SUMMARY_DRAWS {
        return Err(Error::TooFewDraws { got: values.len(), need: MIN_SUMMARY_DRAWS });
    }
    let s = sorted(values);
    Ok(Estimate {
        point: mean(values),
        lower: Some(quantile_sorted(&s, 0.025)),
        upper: Some(quantile_sorted(&s, 0.975)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizons {
    /// Lifespan horizon in months.
    pub lifespan: f64,
    /// Landmark times in months.
    pub landmarks: Vec<f64>,
    /// Short-horizon RMST in months.
    pub short: f64,
}

impl Default for Horizons {
    fn default() -> Self {
        Self {
            lifespan: 1200.0,
            landmarks: alloc::vec![120.0],
            short: 60.0,
        }
    }
}

impl Horizons {
    pub fn validate(&self) -> Result<()> {
        if !(self.lifespan > 0.0) || !(self.short > 0.0) || self.short > self.lifespan {
            return Err(Error::InvalidInput(alloc::format!(
                "horizons must satisfy 0 < short ({}) <= lifespan ({})",
                self.short,
                self.lifespan
            )));
        }
        if let Some(&t) = self.landmarks.iter().find(|&&t| !(t > 0.0) || t > self.lifespan) {
            return Err(Error::InvalidInput(alloc::format!(
                "landmark {t} months lies outside (0, {}]",
                self.lifespan
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkEstimate {
    pub months: f64,
    /// Percent surviving.
    pub percent: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianEstimate {
    /// Years; `None` when not reached.
    pub estimate: Option<Estimate>,
    pub not_reached: bool,
    /// Share of draws whose curve never fell to one half; those draws enter
    /// the interval at the lifespan horizon.
    pub not_reached_fraction: f64,
}

/// Table-style summary for one scope (the whole cohort or one group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationSummary {
    pub scope: String,
    pub n_patients: usize,
    pub lifespan_years: f64,
    /// Years.
    pub rmst_lifespan: Estimate,
    pub median: MedianEstimate,
    pub landmarks: Vec<LandmarkEstimate>,
    pub short_horizon_years: f64,
    /// Years.
    pub rmst_short: Estimate,
    /// Share of predicted times capped at the lifespan horizon.
    pub capped_fraction: f64,
    pub cap_warning: bool,
}

/// Summaries of one scope from its per-draw curves (posterior or
/// bootstrap). With `point_curve`, point estimates come from that curve and
/// the draws only provide intervals; without draws, intervals are empty.
pub fn summarize_curves(
    curve: &CurveGrid,
    point_curve: Option<&[f64]>,
    n_patients: usize,
    horizons: &Horizons,
    capped_fraction: f64,
) -> Result<ExtrapolationSummary> {
    horizons.validate()?;
    let t = &curve.time;
    let stat = |f: &dyn Fn(&[f64]) -> Result<f64>| -> Result<Estimate> {
        let per: Vec<f64> = curve.draws.iter().map(|d| f(d)).collect::<Result<_>>()?;
        match point_curve {
            Some(p) => {
                let point = f(p)?;
                if per.is_empty() {
                    Ok(Estimate::point_only(point))
                } else {
                    let e = summarize(&per)?;
                    Ok(Estimate { point, ..e })
                }
            }
            None => summarize(&per),
        }
    };
    let rmst_lifespan = stat(&|s| rmst(t, s, horizons.lifespan))?;
    let rmst_short = stat(&|s| rmst(t, s, horizons.short))?;
    let landmarks = horizons
        .landmarks
        .iter()
        .map(|&m| Ok(LandmarkEstimate { months: m, percent: stat(&|s| landmark(t, s, m))? }))
        .collect::<Result<Vec<_>>>()?;

    let lifespan_years = horizons.lifespan / MONTHS_PER_YEAR;
    let center = point_curve.unwrap_or(&curve.mean);
    let not_reached = median_survival(t, center).not_reached;
    let medians: Vec<Median> = curve.draws.iter().map(|d| median_survival(t, d)).collect();
    let not_reached_fraction = if medians.is_empty() {
        0.0
    } else {
        medians.iter().filter(|m| m.not_reached).count() as f64 / medians.len() as f64
    };
    let median = if not_reached {
        MedianEstimate { estimate: None, not_reached, not_reached_fraction }
    } else {
        MedianEstimate {
            estimate: Some(stat(&|s| {
                Ok(median_survival(t, s).years.unwrap_or(lifespan_years))
            })?),
            not_reached,
            not_reached_fraction,
        }
    };
    Ok(ExtrapolationSummary {
        scope: curve.scope.clone(),
        n_patients,
        lifespan_years,
        rmst_lifespan,
        median,
        landmarks,
        short_horizon_years: horizons.short / MONTHS_PER_YEAR,
        rmst_short,
        capped_fraction,
        cap_warning: capped_fraction > CAP_WARNING_FRACTION,
    })
}

/// Scope name of the whole cohort.
pub const OVERALL: &str = "overall";

/// `(scope, patient indices)` for the cohort and each tumour group.
pub fn scopes(cohort: &CohortDataset) -> Vec<(String, Vec<usize>)> {
    let mut out = alloc::vec![(String::from(OVERALL), (0..cohort.len()).collect::<Vec<_>>())];
    for (g, grp) in cohort.groups.iter().enumerate() {
        let members = cohort
            .patients
            .iter()
            .enumerate()
            .filter(|(_, p)| p.group == g)
            .map(|(i, _)| i)
            .collect();
        out.push((grp.label.clone(), members));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointExtrapolation {
    pub summaries: Vec<ExtrapolationSummary>,
    pub curves: Vec<CurveGrid>,
    pub n_predictive_draws: usize,
}

/// Joint-model extrapolation from predictive draws for every scope.
pub fn summarize_predictions(
    draws: &[PredictedSurvivalDraw],
    cohort: &CohortDataset,
    horizons: &Horizons,
) -> Result<JointExtrapolation> {
    horizons.validate()?;
    let grid = default_grid(horizons.lifespan);
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for (scope, members) in scopes(cohort) {
        if members.is_empty() {
            continue;
        }
        let curve = curve_from_draws(scope, draws, &members, &grid)?;
        let censored: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&p| !cohort.patients[p].survival.event)
            .collect();
        let capped = draws
            .iter()
            .map(|d| censored.iter().filter(|&&p| d.capped[p]).count())
            .sum::<usize>();
        let denom = (draws.len() * censored.len()).max(1) as f64;
        summaries.push(summarize_curves(&curve, None, members.len(), horizons, capped as f64 / denom)?);
        curves.push(curve);
    }
    Ok(JointExtrapolation {
        summaries,
        curves,
        n_predictive_draws: draws.len(),
    })
}

/// Predict and summarise in one step.
pub fn extrapolate_joint(
    samples: &PosteriorSamples,
    cohort: &CohortDataset,
    options: &PredictOptions,
    horizons: &Horizons,
) -> Result<JointExtrapolation> {
    let opts = PredictOptions { horizon: horizons.lifespan, ..options.clone() };
    let draws = predict_cohort(samples, cohort, &opts)?;
    summarize_predictions(&draws, cohort, horizons)
}
