//! Plug-in extrapolation from the Weibull maximum-likelihood comparator,
//! with parametric-bootstrap intervals.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    default_grid, summarize, CurveGrid, Estimate, ExtrapolationSummary, Horizons, LandmarkEstimate,
    MedianEstimate, OVERALL,
};
use crate::error::{Error, Result};
use crate::model::WeibullFit;
use crate::quadrature::GaussLegendre;
use crate::stats::{quantile_sorted, sorted};
use crate::MONTHS_PER_YEAR;

/// Mixture of group Weibull curves, `S(t) = sum_g w_g exp(-exp(eta_g) t^kappa)`.
struct Mixture {
    kappa: f64,
    rates: Vec<f64>,
    weights: Vec<f64>,
}

impl Mixture {
    /// `x = (ln kappa, phi)`; `weights` need not be normalised.
    fn new(x: &[f64], weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let rates = (0..weights.len())
            .map(|g| if g == 0 { x[1] } else { x[1] + x[1 + g] }.exp())
            .collect();
        Self {
            kappa: x[0].exp(),
            rates,
            weights: weights.iter().map(|w| w / total).collect(),
        }
    }

    fn survival(&self, t: f64) -> f64 {
        let tk = if t > 0.0 { t.powf(self.kappa) } else { 0.0 };
        self.rates
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&r, &w)| w * (-r * tk).exp())
            .sum()
    }

    /// Area under `S` on `[0, h]`, in months. Segments shrink geometrically
    /// toward the origin, where `t^kappa` is not smooth.
    fn rmst(&self, h: f64, quad: &GaussLegendre) -> f64 {
        let mut total = 0.0;
        let mut hi = h;
        for _ in 0..48 {
            let lo = 0.5 * hi;
            total += quad.integrate(lo, hi, |t| self.survival(t));
            hi = lo;
        }
        total + hi * self.survival(0.5 * hi)
    }

    /// Smallest `t` with `S(t) = 1/2`, or `None` if `S(h) > 1/2`.
    fn median(&self, h: f64) -> Option<f64> {
        if self.survival(h) > 0.5 {
            return None;
        }
        let (mut lo, mut hi) = (0.0, h);
        while hi - lo > 1e-9 * h.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullExtrapolation {
    pub summaries: Vec<ExtrapolationSummary>,
    pub curves: Vec<CurveGrid>,
    pub n_boot: usize,
}

/// Plug-in summaries for the cohort (weighted by `group_counts`) and each
/// group. Intervals come from `n_boot` draws of `(ln kappa, phi)` from the
/// asymptotic Normal of the estimate; `n_boot = 0` gives point estimates
/// only.
pub fn weibull_extrapolation<R: Rng + ?Sized>(
    fit: &WeibullFit,
    group_counts: &[usize],
    horizons: &Horizons,
    n_boot: usize,
    rng: &mut R,
) -> Result<WeibullExtrapolation> {
    horizons.validate()?;
    let k = fit.phi.len();
    if group_counts.len() != k {
        return Err(Error::InvalidInput(alloc::format!(
            "{} group counts for a fit with {k} groups",
            group_counts.len()
        )));
    }
    let x_hat = fit.parameter_vector();
    let d = x_hat.len();
    let boot: Vec<Vec<f64>> = if n_boot == 0 {
        Vec::new()
    } else {
        let cov = DMatrix::from_fn(d, d, |i, j| fit.covariance[i][j]);
        let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
        let l = chol.l();
        let mean = DVector::from_column_slice(&x_hat);
        (0..n_boot)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                (&mean + &l * z).as_slice().to_vec()
            })
            .collect()
    };

    let quad = GaussLegendre::new(15)?;
    let grid = default_grid(horizons.lifespan);
    let mut scopes: Vec<(String, Vec<f64>, usize)> = alloc::vec![(
        OVERALL.into(),
        group_counts.iter().map(|&c| c as f64).collect(),
        group_counts.iter().sum()
    )];
    for g in 0..k {
        let mut w = alloc::vec![0.0; k];
        w[g] = 1.0;
        scopes.push((fit.group_labels[g].clone(), w, group_counts[g]));
    }

    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for (scope, weights, n_patients) in scopes {
        if weights.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let point = Mixture::new(&x_hat, &weights);
        let reps: Vec<Mixture> = boot.iter().map(|x| Mixture::new(x, &weights)).collect();
        let estimate = |f: &dyn Fn(&Mixture) -> f64| -> Result<Estimate> {
            let p = f(&point);
            if reps.is_empty() {
                return Ok(Estimate::point_only(p));
            }
            let per: Vec<f64> = reps.iter().map(f).collect();
            Ok(Estimate { point: p, ..summarize(&per)? })
        };
        let years = |m: f64| m / MONTHS_PER_YEAR;
        let rmst_lifespan = estimate(&|m| years(m.rmst(horizons.lifespan, &quad)))?;
        let rmst_short = estimate(&|m| years(m.rmst(horizons.short, &quad)))?;
        let landmarks = horizons
            .landmarks
            .iter()
            .map(|&t| {
                Ok(LandmarkEstimate {
                    months: t,
                    percent: estimate(&|m| 100.0 * m.survival(t))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let lifespan_years = years(horizons.lifespan);
        let point_median = point.median(horizons.lifespan);
        let not_reached_fraction = if reps.is_empty() {
            0.0
        } else {
            reps.iter().filter(|m| m.median(horizons.lifespan).is_none()).count() as f64 / reps.len() as f64
        };
        let median = MedianEstimate {
            estimate: match point_median {
                None => None,
                Some(_) => Some(estimate(&|m| {
                    m.median(horizons.lifespan).map_or(lifespan_years, years)
                })?),
            },
            not_reached: point_median.is_none(),
            not_reached_fraction,
        };
        summaries.push(ExtrapolationSummary {
            scope: scope.clone(),
            n_patients,
            lifespan_years,
            rmst_lifespan,
            median,
            landmarks,
            short_horizon_years: years(horizons.short),
            rmst_short,
            capped_fraction: 0.0,
            cap_warning: false,
        });

        let mean: Vec<f64> = grid.iter().map(|&t| point.survival(t)).collect();
        let (lower, upper) = if reps.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let mut lo = Vec::with_capacity(grid.len());
            let mut hi = Vec::with_capacity(grid.len());
            for &t in &grid {
                let s = sorted(&reps.iter().map(|m| m.survival(t)).collect::<Vec<_>>());
                lo.push(quantile_sorted(&s, 0.025));
                hi.push(quantile_sorted(&s, 0.975));
            }
            (lo, hi)
        };
        curves.push(CurveGrid {
            scope,
            time: grid.clone(),
            draws: Vec::new(),
            mean,
            lower,
            upper,
        });
    }
    Ok(WeibullExtrapolation { summaries, curves, n_boot })
}
