//! Convergence diagnostics and the deviance information criterion.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::CohortDataset;
use crate::error::{Error, Result};
use crate::model::{JointModel, ParameterState};
use crate::sampler::{ParamLayout, PosteriorSamples};
use crate::stats::{mean, variance};

/// Reported, not enforced.
pub const DEFAULT_RHAT_THRESHOLD: f64 = 1.05;
pub const DEFAULT_MCSE_THRESHOLD: f64 = 0.05;
/// Fewest batches accepted by [`mcse_ratio`].
pub const MIN_BATCHES: usize = 10;
/// R-hat values below `1 - RHAT_UNDERSHOOT` are flagged as estimator noise.
pub const RHAT_UNDERSHOOT: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RHat {
    pub value: f64,
    /// Zero within-chain variance (value set to 1) or a value noticeably
    /// below 1.
    pub flagged: bool,
}

/// Split-chain potential scale reduction factor. Each chain is halved and
/// the halves are treated as separate chains.
pub fn rhat(chains: &[Vec<f64>]) -> Result<RHat> {
    if chains.len() < 2 {
        return Err(Error::InvalidInput("R-hat needs at least 2 chains".into()));
    }
    let n_full = chains[0].len();
    if chains.iter().any(|c| c.len() != n_full) {
        return Err(Error::InvalidInput("R-hat needs chains of equal length".into()));
    }
    let n = n_full / 2;
    if n < 2 {
        return Err(Error::TooFewDraws { got: n_full, need: 4 });
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[n_full - n..]])
        .collect();
    let m = halves.len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| variance(h)).sum::<f64>() / m;
    let grand = mean(&means);
    let b = n as f64 * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1.0);
    if !(w > 0.0) {
        return Ok(RHat { value: 1.0, flagged: true });
    }
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    let value = (var_plus / w).sqrt();
    Ok(RHat { value, flagged: value < 1.0 - RHAT_UNDERSHOOT })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McseRatio {
    /// `None` when the posterior SD is zero.
    pub value: Option<f64>,
    pub mcse: f64,
    pub sd: f64,
    pub batches: usize,
}

/// Batch-means Monte Carlo standard error divided by the pooled posterior
/// SD. Batches of `floor(sqrt(N))` draws are formed within each chain.
pub fn mcse_ratio(chains: &[Vec<f64>]) -> Result<McseRatio> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let size = (total as f64).sqrt().floor() as usize;
    let mut batch_means = Vec::new();
    if size > 0 {
        for c in chains {
            batch_means.extend(c.chunks_exact(size).map(mean));
        }
    }
    if batch_means.len() < MIN_BATCHES {
        return Err(Error::TooFewDraws { got: total, need: MIN_BATCHES * MIN_BATCHES });
    }
    let pooled: Vec<f64> = chains.concat();
    let sd = variance(&pooled).sqrt();
    let used = (batch_means.len() * size) as f64;
    let mcse = (size as f64 * variance(&batch_means) / used).sqrt();
    Ok(McseRatio {
        value: (sd > 0.0).then(|| mcse / sd),
        mcse,
        sd,
        batches: batch_means.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub dbar: f64,
    pub pd: f64,
    pub dic: f64,
}

/// DIC from per-draw deviances and the deviance at the posterior mean.
pub fn dic_from_deviances(deviances: &[f64], at_mean: f64) -> Result<Dic> {
    if deviances.is_empty() {
        return Err(Error::TooFewDraws { got: 0, need: 1 });
    }
    if !at_mean.is_finite() {
        return Err(Error::InvalidState(alloc::format!(
            "deviance at the posterior mean is {at_mean}"
        )));
    }
    let dbar = mean(deviances);
    let pd = dbar - at_mean;
    Ok(Dic { dbar, pd, dic: dbar + pd })
}

/// Conditional DIC: the deviance includes every patient's random effects,
/// and the plug-in point is the posterior mean of all parameters.
pub fn dic(samples: &PosteriorSamples, cohort: &CohortDataset) -> Result<Dic> {
    let model = JointModel::new(&samples.spec, cohort)?;
    let mut dev = Vec::with_capacity(samples.total_draws());
    for c in 0..samples.n_chains() {
        for i in 0..samples.n_draws() {
            dev.push(model.deviance(&samples.state(c, i)?)?);
        }
    }
    let at_mean = samples.layout.unflatten(&samples.means())?;
    dic_from_deviances(&dev, model.deviance(&at_mean)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: RHat,
    pub mcse: McseRatio,
    pub rhat_pass: bool,
    pub mcse_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainAcceptance {
    pub chain: usize,
    pub seed: u64,
    pub rates: Vec<crate::sampler::BlockAcceptance>,
    pub cap_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub structure: String,
    pub functional: String,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub rhat_threshold: f64,
    pub mcse_threshold: f64,
    pub parameters: Vec<ParameterDiagnostics>,
    pub acceptance: Vec<ChainAcceptance>,
    pub dic: Option<Dic>,
    pub all_rhat_pass: bool,
    pub all_mcse_pass: bool,
}

/// Diagnostics for every population-level parameter, plus DIC when the
/// cohort is supplied and random effects were stored.
pub fn diagnose(
    samples: &PosteriorSamples,
    cohort: Option<&CohortDataset>,
    rhat_threshold: f64,
    mcse_threshold: f64,
) -> Result<DiagnosticsReport> {
    let mut parameters = Vec::new();
    for j in 0..samples.layout.n_population() {
        let cols = samples.column(j);
        let pooled = cols.concat();
        let r = rhat(&cols)?;
        let m = mcse_ratio(&cols)?;
        parameters.push(ParameterDiagnostics {
            name: samples.layout.names[j].clone(),
            mean: mean(&pooled),
            sd: variance(&pooled).sqrt(),
            rhat_pass: r.value < rhat_threshold,
            mcse_pass: m.value.is_some_and(|v| v < mcse_threshold),
            rhat: r,
            mcse: m,
        });
    }
    let dic = match cohort {
        Some(c) if samples.layout.random_effects => Some(dic(samples, c)?),
        _ => None,
    };
    let acceptance = samples
        .chains
        .iter()
        .enumerate()
        .map(|(i, c)| ChainAcceptance {
            chain: i,
            seed: c.seed,
            rates: c.acceptance.clone(),
            cap_events: c.cap_events,
        })
        .collect();
    // Constant parameters (e.g. an association fixed at zero) have no
    // meaningful MCSE ratio and do not count against the pass flags.
    let varying = |p: &&ParameterDiagnostics| p.sd > 0.0;
    Ok(DiagnosticsReport {
        structure: samples.spec.structure.as_str().into(),
        functional: samples.spec.functional.as_str().into(),
        n_chains: samples.n_chains(),
        draws_per_chain: samples.n_draws(),
        rhat_threshold,
        mcse_threshold,
        all_rhat_pass: parameters.iter().filter(varying).all(|p| p.rhat_pass),
        all_mcse_pass: parameters.iter().filter(varying).all(|p| p.mcse_pass),
        parameters,
        acceptance,
        dic,
    })
}

/// Default relative step of [`gradient_check`].
pub const GRADIENT_REL_STEP: f64 = 1e-4;
/// Default tolerance of [`gradient_check`].
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Finite-difference derivative of the log posterior along one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientComponent {
    pub name: String,
    /// Central difference with step `h`.
    pub coarse: f64,
    /// Central difference with step `h / 2`.
    pub fine: f64,
    /// Richardson extrapolation `(4 fine - coarse) / 3`.
    pub extrapolated: f64,
    /// `|fine - extrapolated| / max(|extrapolated|, 1)`.
    pub rel_error: f64,
}

/// Consistency of the log posterior's finite-difference gradient at `state`.
///
/// Every scalar parameter (random effects included) is perturbed by
/// `h = rel_step * max(|x|, 1)`; the central differences at `h` and `h / 2`
/// must agree with their Richardson extrapolation. A smooth, correctly coded
/// density gives errors of order `h^2`; a coding slip (a term evaluated at the
/// wrong argument, a discontinuity, a non-finite value) shows up as a large
/// error or `Err`.
pub fn gradient_check(
    model: &JointModel<'_>,
    state: &ParameterState,
    rel_step: f64,
) -> Result<Vec<GradientComponent>> {
    let ids = model.cohort.patients.iter().map(|p| p.id().into()).collect();
    let layout = ParamLayout::new(model.spec, ids, true);
    let x = layout.flatten(state);
    let eval = |j: usize, dx: f64| -> Result<f64> {
        let mut y = x.clone();
        y[j] += dx;
        let lp = model.log_posterior(&layout.unflatten(&y)?)?;
        if lp.is_finite() {
            Ok(lp)
        } else {
            Err(Error::InvalidState(alloc::format!(
                "log posterior is {lp} after perturbing `{}`",
                layout.names[j]
            )))
        }
    };
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = rel_step * x[j].abs().max(1.0);
        let coarse = (eval(j, h)? - eval(j, -h)?) / (2.0 * h);
        let fine = (eval(j, 0.5 * h)? - eval(j, -0.5 * h)?) / h;
        let extrapolated = (4.0 * fine - coarse) / 3.0;
        out.push(GradientComponent {
            name: layout.names[j].clone(),
            coarse,
            fine,
            extrapolated,
            rel_error: (fine - extrapolated).abs() / extrapolated.abs().max(1.0),
        });
    }
    Ok(out)
}
