//! Posterior-predictive death times for censored patients.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::CohortDataset;
use crate::error::{Error, Result};
use crate::model::{CapCounter, ParameterState, PatientHazard};
use crate::quadrature::GaussLegendre;
use crate::rng::stream;
use crate::sampler::PosteriorSamples;

/// Root-finding tolerance on the death time, in months.
pub const TIME_TOLERANCE: f64 = 1e-6;
const MAX_ROOT_ITERATIONS: usize = 200;

/// A sampled death time; `capped` marks draws that reached the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathTime {
    pub time: f64,
    pub capped: bool,
}

/// Solve `H(c, T) = target` for `T > c`, where `H(c, T)` is the cumulative
/// hazard accrued between `c` and `T`. Returns `horizon` with the cap flag
/// when the hazard accrued by the horizon falls short of `target`.
///
/// A time-constant linear predictor is inverted in closed form; otherwise a
/// Newton iteration safeguarded by bisection runs on a bracket that always
/// contains the root.
pub fn invert_cumulative(
    h: &PatientHazard,
    c: f64,
    target: f64,
    horizon: f64,
    quad: &GaussLegendre,
) -> Result<DeathTime> {
    if !(c >= 0.0) || !(horizon > c) {
        return Err(Error::InvalidInput(alloc::format!(
            "need 0 <= c < horizon, got c = {c}, horizon = {horizon}"
        )));
    }
    if !(target > 0.0) {
        return Ok(DeathTime { time: c, capped: false });
    }
    let k = h.kappa;
    let u_c = if c > 0.0 { c.powf(k) } else { 0.0 };
    let mut caps = CapCounter::default();
    if h.coef * h.rate == 0.0 {
        let rate = h.linear_predictor(0.0).exp();
        let t = (u_c + target / rate).powf(1.0 / k);
        return Ok(if t.is_finite() && t < horizon {
            DeathTime { time: t, capped: false }
        } else {
            DeathTime { time: horizon, capped: true }
        });
    }
    let f = |t: f64, caps: &mut CapCounter| h.cumulative_between(c, t, quad, caps) - target;
    if f(horizon, &mut caps) < 0.0 {
        return Ok(DeathTime { time: horizon, capped: true });
    }
    let mut lo = c;
    let mut hi = horizon;
    // Start from the root with the linear predictor frozen at its value at c.
    let guess = (u_c + target / h.linear_predictor(c).exp()).powf(1.0 / k);
    let mut t = if guess.is_finite() && guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..MAX_ROOT_ITERATIONS {
        let ft = f(t, &mut caps);
        if ft > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo < TIME_TOLERANCE {
            return Ok(DeathTime { time: 0.5 * (lo + hi), capped: false });
        }
        let d = h.hazard(t, &mut caps);
        let newton = t - ft / d;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() < TIME_TOLERANCE {
            return Ok(DeathTime { time: next, capped: false });
        }
        t = next;
    }
    Err(Error::RootFinding)
}

/// Draw a death time for `patient`, censored at `censor_time`, under one
/// posterior state.
pub fn conditional_death_draw<R: Rng + ?Sized>(
    state: &ParameterState,
    cohort: &CohortDataset,
    patient: usize,
    censor_time: f64,
    horizon: f64,
    quad: &GaussLegendre,
    rng: &mut R,
) -> Result<DeathTime> {
    let h = PatientHazard::from_state(state, cohort, patient)?;
    let u: f64 = rng.random();
    // 1 - u lies in (0, 1], so the exponential variate is finite.
    let e = -(1.0 - u).ln();
    invert_cumulative(&h, censor_time, e, horizon, quad)
}

/// Predicted death times of every patient under one posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSurvivalDraw {
    pub chain: usize,
    pub draw: usize,
    pub replicate: usize,
    pub times: Vec<f64>,
    pub capped: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Months.
    pub horizon: f64,
    pub draws_per_sample: usize,
    /// Use at most this many posterior draws, evenly spaced over the pooled
    /// chains. `None` uses every retained draw.
    pub max_posterior_draws: Option<usize>,
    pub seed: u64,
    pub quadrature_nodes: usize,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            horizon: 1200.0,
            draws_per_sample: 1,
            max_posterior_draws: Some(1000),
            seed: 0,
            quadrature_nodes: crate::quadrature::DEFAULT_NODES,
        }
    }
}

/// `(chain, index)` of the posterior draws used for prediction.
pub fn selected_draws(samples: &PosteriorSamples, max: Option<usize>) -> Vec<(usize, usize)> {
    let per = samples.n_draws();
    let total = samples.total_draws();
    let m = max.map_or(total, |m| m.min(total));
    (0..m)
        .map(|j| {
            // Evenly spaced over [0, total), always including the first draw.
            let g = if m == total { j } else { j * total / m };
            (g / per, g % per)
        })
        .collect()
}

/// Posterior-predictive death times for the whole cohort. Deaths keep their
/// observed times; censored patients are drawn conditionally on survival to
/// their censoring time using each posterior draw's own random effects.
/// Every (draw, replicate, patient) triple has its own random stream, so the
/// output does not depend on evaluation order.
pub fn predict_cohort(
    samples: &PosteriorSamples,
    cohort: &CohortDataset,
    options: &PredictOptions,
) -> Result<Vec<PredictedSurvivalDraw>> {
    if samples.layout.patient_ids.len() != cohort.len() {
        return Err(Error::InvalidState(alloc::format!(
            "posterior covers {} patients, cohort has {}",
            samples.layout.patient_ids.len(),
            cohort.len()
        )));
    }
    if options.draws_per_sample == 0 {
        return Err(Error::InvalidInput("draws_per_sample must be >= 1".into()));
    }
    let quad = GaussLegendre::new(options.quadrature_nodes)?;
    let mut out = Vec::new();
    for (j, (chain, i)) in selected_draws(samples, options.max_posterior_draws).into_iter().enumerate() {
        let state = samples.state(chain, i)?;
        for r in 0..options.draws_per_sample {
            out.push(predict_one(&state, cohort, options, &quad, j, r, chain, i)?);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn predict_one(
    state: &ParameterState,
    cohort: &CohortDataset,
    options: &PredictOptions,
    quad: &GaussLegendre,
    ordinal: usize,
    replicate: usize,
    chain: usize,
    draw: usize,
) -> Result<PredictedSurvivalDraw> {
    let n = cohort.len();
    let mut times = Vec::with_capacity(n);
    let mut capped = Vec::with_capacity(n);
    let counter = (ordinal * options.draws_per_sample + replicate) as u64;
    for (p, patient) in cohort.patients.iter().enumerate() {
        let s = &patient.survival;
        if s.event {
            times.push(s.os_time);
            capped.push(false);
            continue;
        }
        if s.os_time >= options.horizon {
            times.push(options.horizon);
            capped.push(true);
            continue;
        }
        let mut rng = stream(options.seed, counter, p as u64);
        let d = conditional_death_draw(state, cohort, p, s.os_time, options.horizon, quad, &mut rng)?;
        times.push(d.time);
        capped.push(d.capped);
    }
    Ok(PredictedSurvivalDraw {
        chain,
        draw,
        replicate,
        times,
        capped,
    })
}
