//! Data loading and multi-threaded sampling.

use std::path::Path;

use jointsurv_core::data::{join_cohort, join_cohort_with_groups, CohortDataset};
use jointsurv_core::model::{JointModel, JointModelSpec};
use jointsurv_core::sampler::{layout_for, run_chain, McmcConfig, PosteriorSamples};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;
use crate::manifest::sha256_hex;

/// Loads and joins both data files named by `cfg`.
pub fn load_cohort(cfg: &RunConfig) -> Result<CohortDataset> {
    let lp = cfg.longitudinal_path()?;
    let sp = cfg.survival_path()?;
    let long = io::load_longitudinal(lp)?;
    let surv = io::load_survival(sp)?;
    let joined = match &cfg.data.groups {
        Some(labels) => join_cohort_with_groups(&long, &surv, labels),
        None => join_cohort(&long, &surv),
    };
    joined.map_err(|e| CliError::format(sp, format!("joining with {}: {e}", lp.display())))
}

/// Content hash of a cohort, independent of file formatting and location.
pub fn cohort_hash(cohort: &CohortDataset) -> String {
    sha256_hex(&serde_json::to_vec(cohort).expect("cohort serialises"))
}

/// Runs every chain on the rayon pool. Each chain owns its random stream,
/// so the result equals the sequential [`jointsurv_core::sampler::run_chains`].
pub fn fit(spec: &JointModelSpec, cohort: &CohortDataset, config: &McmcConfig) -> Result<PosteriorSamples> {
    config.validate()?;
    let model = JointModel::new(spec, cohort)?;
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&model, config, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PosteriorSamples::new(
        layout_for(spec, cohort, config),
        chains,
        spec.clone(),
        config.clone(),
    )?)
}

/// Reads a posterior CSV produced for this configuration and cohort.
pub fn load_posterior(path: &Path, cfg: &RunConfig, cohort: &CohortDataset) -> Result<PosteriorSamples> {
    let spec = cfg.spec(cohort.group_labels())?;
    let mcmc = cfg.mcmc()?;
    let layout = layout_for(&spec, cohort, &mcmc);
    io::load_posterior(path, layout, spec, mcmc)
}
