//! Maximum-likelihood Weibull proportional-hazards fit with tumour-group
//! indicators, the standard parametric comparator for the joint model.
//!
//! Optimisation runs over `x = (ln kappa, phi0, phi_1, ..., phi_{K-1})`
//! so the shape constraint disappears.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub shape: f64,
    /// Intercept (reference group log-scale) then group contrasts.
    pub phi: Vec<f64>,
    pub loglik: f64,
    /// Covariance of `(ln kappa, phi...)`, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub group_labels: Vec<String>,
    pub iterations: usize,
    /// Patients per group in the fitted data.
    pub group_counts: Vec<usize>,
}

impl WeibullFit {
    pub fn log_scale(&self, group: usize) -> f64 {
        if group == 0 {
            self.phi[0]
        } else {
            self.phi[0] + self.phi[group]
        }
    }

    /// Plug-in survival `exp(-exp(phi0 + phi_g) t^kappa)`.
    pub fn survival(&self, group: usize, t: f64) -> f64 {
        (-(self.log_scale(group)).exp() * t.powf(self.shape)).exp()
    }

    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut x = vec![self.shape.ln()];
        x.extend_from_slice(&self.phi);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullOptions {
    /// Hold the shape at this value instead of estimating it.
    pub fixed_shape: Option<f64>,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for WeibullOptions {
    fn default() -> Self {
        Self {
            fixed_shape: None,
            max_iterations: 200,
            gradient_tolerance: 1e-9,
        }
    }
}

struct Obs {
    ln_t: f64,
    event: bool,
    group: usize,
}

fn observations(surv: &[SurvivalRecord], groups: &[String]) -> Result<Vec<Obs>> {
    surv.iter()
        .map(|r| {
            let group = groups
                .iter()
                .position(|g| *g == r.tumour_group)
                .ok_or_else(|| Error::UnknownGroup(r.tumour_group.clone()))?;
            if !(r.os_time > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "os_time must be positive for `{}`",
                    r.patient_id
                )));
            }
            Ok(Obs {
                ln_t: r.os_time.ln(),
                event: r.event,
                group,
            })
        })
        .collect()
}

/// Log-likelihood, score and Hessian at `x` (full parameterisation).
fn evaluate(obs: &[Obs], k: usize, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let dim = k + 1;
    let theta = x[0];
    let kappa = theta.exp();
    let mut ll = 0.0;
    let mut g = DVector::zeros(dim);
    let mut h = DMatrix::zeros(dim, dim);
    for o in obs {
        let eta = x[1] + if o.group > 0 { x[1 + o.group] } else { 0.0 };
        let a = (eta + kappa * o.ln_t).exp();
        let d = if o.event { 1.0 } else { 0.0 };
        let kl = kappa * o.ln_t;
        ll += d * (theta + eta + (kappa - 1.0) * o.ln_t) - a;

        let idx: [Option<usize>; 2] = [Some(1), if o.group > 0 { Some(1 + o.group) } else { None }];
        let d_theta = d * (1.0 + kl) - a * kl;
        let d_eta = d - a;
        g[0] += d_theta;
        h[(0, 0)] += d * kl - a * (kl + kl * kl);
        for j in idx.iter().flatten() {
            g[*j] += d_eta;
            h[(0, *j)] += -a * kl;
            h[(*j, 0)] += -a * kl;
            for l in idx.iter().flatten() {
                h[(*j, *l)] += -a;
            }
        }
    }
    (ll, g, h)
}

/// Fits shape and per-group log-scales by Newton's method with step halving.
pub fn fit_weibull_mle(surv: &[SurvivalRecord], groups: &[String]) -> Result<WeibullFit> {
    fit_weibull_mle_with(surv, groups, WeibullOptions::default())
}

pub fn fit_weibull_mle_with(
    surv: &[SurvivalRecord],
    groups: &[String],
    options: WeibullOptions,
) -> Result<WeibullFit> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("no tumour groups".into()));
    }
    let obs = observations(surv, groups)?;
    let k = groups.len();
    let events: usize = obs.iter().filter(|o| o.event).count();
    if events == 0 {
        return Err(Error::NoEvents);
    }
    let mut counts = vec![0usize; k];
    let mut group_events = vec![0usize; k];
    for o in &obs {
        counts[o.group] += 1;
        if o.event {
            group_events[o.group] += 1;
        }
    }
    for g in 0..k {
        if counts[g] > 0 && group_events[g] == 0 {
            return Err(Error::NoEventsInGroup(groups[g].clone()));
        }
    }
    // Groups without patients carry no information; pin their contrast at 0.
    let free: Vec<usize> = (0..=k)
        .filter(|&j| match j {
            0 => options.fixed_shape.is_none(),
            1 => true,
            _ => counts[j - 1] > 0,
        })
        .collect();

    let sum_t: f64 = obs.iter().map(|o| o.ln_t.exp()).sum();
    let mut x = vec![0.0; k + 1];
    x[0] = options.fixed_shape.map_or(0.0, |s| s.ln());
    x[1] = (events as f64 / sum_t).ln();

    let project = |g: &DVector<f64>, h: &DMatrix<f64>| {
        let n = free.len();
        let gs = DVector::from_iterator(n, free.iter().map(|&i| g[i]));
        let hs = DMatrix::from_fn(n, n, |a, b| h[(free[a], free[b])]);
        (gs, hs)
    };

    let (mut ll, mut g, mut h) = evaluate(&obs, k, &x);
    let mut iterations = 0;
    loop {
        let (gs, hs) = project(&g, &h);
        if gs.amax() < options.gradient_tolerance * (1.0 + events as f64) {
            break;
        }
        if iterations >= options.max_iterations {
            return Err(Error::NonConvergence(iterations));
        }
        iterations += 1;
        let neg_h = -hs;
        let step = match neg_h.clone().cholesky() {
            Some(c) => c.solve(&gs),
            // Fall back to gradient ascent when the Hessian is indefinite.
            None => gs.clone() * (1.0 / (1.0 + neg_h.amax())),
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = x.clone();
            for (s, &i) in free.iter().enumerate() {
                trial[i] += scale * step[s];
            }
            let (ll_t, g_t, h_t) = evaluate(&obs, k, &trial);
            if ll_t.is_finite() && ll_t >= ll - 1e-12 * ll.abs() {
                x = trial;
                ll = ll_t;
                g = g_t;
                h = h_t;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence(iterations));
        }
    }

    let covariance = numerical_covariance(&obs, k, &x, &free)?;
    Ok(WeibullFit {
        shape: x[0].exp(),
        phi: x[1..].to_vec(),
        loglik: ll,
        covariance,
        group_labels: groups.to_vec(),
        iterations,
        group_counts: counts,
    })
}

/// Inverse of the negative Hessian, the Hessian taken by central differences
/// of the analytic score. Pinned coordinates get zero rows and columns.
fn numerical_covariance(obs: &[Obs], k: usize, x: &[f64], free: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n = free.len();
    let mut hess = DMatrix::zeros(n, n);
    for (a, &i) in free.iter().enumerate() {
        let step = 1e-5 * (1.0 + x[i].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += step;
        xm[i] -= step;
        let (_, gp, _) = evaluate(obs, k, &xp);
        let (_, gm, _) = evaluate(obs, k, &xm);
        for (b, &j) in free.iter().enumerate() {
            hess[(b, a)] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    let info = -sym;
    let inv = info
        .cholesky()
        .ok_or(Error::SingularCovariance)?
        .inverse();
    let mut cov = vec![vec![0.0; k + 1]; k + 1];
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            cov[i][j] = inv[(a, b)];
        }
    }
    Ok(cov)
}

/// Log-likelihood of the Weibull PH model at `(ln kappa, phi)`.
pub fn weibull_loglik(surv: &[SurvivalRecord], groups: &[String], x: &[f64]) -> Result<f64> {
    let obs = observations(surv, groups)?;
    if x.len() != groups.len() + 1 {
        return Err(Error::InvalidInput("parameter vector has the wrong length".into()));
    }
    Ok(evaluate(&obs, groups.len(), x).0)
}
