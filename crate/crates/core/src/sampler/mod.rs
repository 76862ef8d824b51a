//! Adaptive Metropolis-within-Gibbs sampling of the joint posterior.

mod layout;
pub mod metropolis;
mod mwg;

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use layout::ParamLayout;
pub use metropolis::{adapt, rw_scalar, AdaptiveScale, ADAPT_BATCH, TARGET_BLOCK, TARGET_SCALAR};
pub use mwg::{Block, JointSampler, Tally, Tuning};

use crate::data::CohortDataset;
use crate::error::{Error, Result};
use crate::model::{
    AssociationParams, AssociationStructure, JointModel, JointModelSpec, LongitudinalParams, ParameterState,
    SurvivalParams,
};
use crate::rng::{derive_seed, StreamRng};

/// Attempts allowed to find a finite-posterior starting state.
pub const MAX_INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub iterations: usize,
    pub thin: usize,
    /// One seed per chain.
    pub seeds: Vec<u64>,
    /// Store every patient's random effects with each draw. Required for
    /// DIC and posterior-predictive extrapolation.
    pub store_random_effects: bool,
}

impl McmcConfig {
    pub fn new(n_chains: usize, burn_in: usize, iterations: usize, base_seed: u64) -> Self {
        Self {
            n_chains,
            burn_in,
            iterations,
            thin: 1,
            seeds: chain_seeds(base_seed, n_chains),
            store_random_effects: true,
        }
    }

    /// Three chains, 50,000 burn-in and 150,000 retained sweeps.
    pub fn paper(base_seed: u64) -> Self {
        Self::new(3, 50_000, 150_000, base_seed)
    }

    /// Three chains, 2,000 burn-in and 5,000 retained sweeps.
    pub fn smoke(base_seed: u64) -> Self {
        Self::new(3, 2_000, 5_000, base_seed)
    }

    /// Multiply burn-in and retained sweeps by `factor`.
    pub fn scaled(mut self, factor: usize) -> Self {
        self.burn_in *= factor;
        self.iterations *= factor;
        self
    }

    pub fn with_thin(mut self, thin: usize) -> Self {
        self.thin = thin;
        self
    }

    /// Retained draws per chain.
    pub fn n_draws(&self) -> usize {
        self.iterations / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::InvalidSpec("n_chains must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidSpec("iterations must be > 0".into()));
        }
        if self.thin == 0 || self.thin > self.iterations {
            return Err(Error::InvalidSpec(alloc::format!(
                "thin must lie in 1..={}, got {}",
                self.iterations,
                self.thin
            )));
        }
        if self.seeds.len() != self.n_chains {
            return Err(Error::InvalidSpec(alloc::format!(
                "{} seeds for {} chains",
                self.seeds.len(),
                self.n_chains
            )));
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("chain seeds must be distinct".into()));
        }
        Ok(())
    }
}

/// Distinct per-chain seeds derived from one base seed.
pub fn chain_seeds(base: u64, n_chains: usize) -> Vec<u64> {
    (0..n_chains as u64).map(|c| derive_seed(base, 0xC4A1, c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub rate: f64,
    pub attempts: u64,
}

/// Post-burn-in output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub seed: u64,
    /// Row-major draws, `n_draws x layout.len()`.
    pub draws: Vec<f64>,
    pub n_draws: usize,
    /// Post-burn-in acceptance rates per block.
    pub acceptance: Vec<BlockAcceptance>,
    /// Linear-predictor cap events over the whole run.
    pub cap_events: u64,
    pub initial: ParameterState,
    /// Proposal scales and survival-block factor when burn-in ended and
    /// when the run finished; equal because adaptation is frozen.
    pub proposals_at_burn_in: Vec<f64>,
    pub proposals_final: Vec<f64>,
}

/// Multi-chain posterior draws with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub layout: ParamLayout,
    pub chains: Vec<Chain>,
    pub spec: JointModelSpec,
    pub config: McmcConfig,
}

impl PosteriorSamples {
    pub fn new(layout: ParamLayout, chains: Vec<Chain>, spec: JointModelSpec, config: McmcConfig) -> Result<Self> {
        if let Some(first) = chains.first() {
            if chains.iter().any(|c| c.n_draws != first.n_draws) {
                return Err(Error::InvalidState("chains differ in length".into()));
            }
        }
        for c in &chains {
            if c.draws.len() != c.n_draws * layout.len() {
                return Err(Error::InvalidState("draw matrix does not match layout".into()));
            }
        }
        Ok(Self {
            layout,
            chains,
            spec,
            config,
        })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Draws per chain.
    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.n_draws)
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_draws()
    }

    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        let w = self.layout.len();
        &self.chains[chain].draws[i * w..(i + 1) * w]
    }

    pub fn state(&self, chain: usize, i: usize) -> Result<ParameterState> {
        self.layout.unflatten(self.draw(chain, i))
    }

    /// Per-chain trace of a column.
    pub fn column(&self, index: usize) -> Vec<Vec<f64>> {
        let w = self.layout.len();
        self.chains
            .iter()
            .map(|c| c.draws.iter().skip(index).step_by(w).copied().collect())
            .collect()
    }

    /// Per-chain trace of a named parameter.
    pub fn parameter(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let j = self
            .layout
            .index_of(name)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("unknown parameter `{name}`")))?;
        Ok(self.column(j))
    }

    /// All chains of a named parameter, concatenated.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.parameter(name)?.concat())
    }

    /// Posterior mean of every column.
    pub fn means(&self) -> Vec<f64> {
        let w = self.layout.len();
        let mut m = alloc::vec![0.0; w];
        for c in &self.chains {
            for row in c.draws.chunks_exact(w) {
                for (a, &x) in m.iter_mut().zip(row) {
                    *a += x;
                }
            }
        }
        let n = self.total_draws().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Draw an overdispersed, in-support starting state with a finite posterior.
///
/// Uniform-priored longitudinal parameters start at their prior midpoint
/// plus up to ±20% of the prior half-width; `kappa` at `exp(U(-0.2, 0.2))`;
/// the log-scale intercept at `-5 ± 0.5` and group contrasts at `0 ± 0.1`;
/// associations at `0 ± 0.01`; `tau` at `0.1 exp(U(-0.2, 0.2))`; random
/// effects at 0.
pub fn initialize_chain(spec: &JointModelSpec, cohort: &CohortDataset, seed: u64) -> Result<ParameterState> {
    let model = JointModel::new(spec, cohort)?;
    let mut rng = <StreamRng as rand::SeedableRng>::seed_from_u64(derive_seed(seed, 0x1417, 0));
    initialize_with(&model, &mut rng)
}

fn initialize_with<R: Rng + ?Sized>(model: &JointModel<'_>, rng: &mut R) -> Result<ParameterState> {
    let spec = model.spec;
    let k = spec.n_groups();
    let n = model.n_patients();
    for _ in 0..MAX_INIT_ATTEMPTS {
        let mut jitter = |u: crate::model::UniformPrior| {
            u.midpoint() + rng.random_range(-0.2..0.2) * 0.5 * (u.upper - u.lower)
        };
        let p = &spec.priors;
        let beta0 = (0..spec.n_intercepts()).map(|_| jitter(p.beta0)).collect();
        let beta1 = jitter(spec.slope_prior());
        let sigma = jitter(p.sigma);
        let omega0 = jitter(p.omega);
        let omega1 = if spec.random_slope { jitter(p.omega) } else { 0.0 };
        let shape = rng.random_range(-0.2f64..0.2).exp();
        let mut phi = alloc::vec![-5.0 + rng.random_range(-0.5..0.5)];
        phi.extend((1..k).map(|_| rng.random_range(-0.1..0.1)));
        let fixed = p.fix_association_zero;
        let assoc = |rng: &mut R| if fixed { 0.0 } else { rng.random_range(-0.01..0.01) };
        let alpha = match spec.structure {
            AssociationStructure::Independent => 0.0,
            _ => assoc(rng),
        };
        let alpha_k = match spec.structure {
            AssociationStructure::Common => alloc::vec![alpha; k],
            _ => (0..k).map(|_| assoc(rng)).collect(),
        };
        let tau = match spec.structure {
            AssociationStructure::Exchangeable => 0.1 * rng.random_range(-0.2f64..0.2).exp(),
            _ => 0.0,
        };
        let state = ParameterState {
            longitudinal: LongitudinalParams {
                beta0,
                beta1,
                sigma,
                omega0,
                omega1,
                random_effects: alloc::vec![[0.0, 0.0]; n],
            },
            survival: SurvivalParams { shape, phi },
            association: AssociationParams {
                structure: spec.structure,
                functional: spec.functional,
                alpha,
                alpha_k,
                tau,
            },
        };
        if matches!(model.log_posterior(&state), Ok(lp) if lp.is_finite()) {
            return Ok(state);
        }
    }
    Err(Error::InitializationFailed(MAX_INIT_ATTEMPTS))
}

/// Layout of the draws produced for this spec and cohort.
pub fn layout_for(spec: &JointModelSpec, cohort: &CohortDataset, config: &McmcConfig) -> ParamLayout {
    let ids = cohort.patients.iter().map(|p| p.id().into()).collect();
    ParamLayout::new(spec, ids, config.store_random_effects)
}

/// Run chain `index` of `config` to completion.
pub fn run_chain(model: &JointModel<'_>, config: &McmcConfig, index: usize) -> Result<Chain> {
    config.validate()?;
    let seed = *config
        .seeds
        .get(index)
        .ok_or_else(|| Error::InvalidSpec(alloc::format!("no seed for chain {index}")))?;
    let layout = layout_for(model.spec, model.cohort, config);
    let mut rng = <StreamRng as rand::SeedableRng>::seed_from_u64(derive_seed(seed, 0x1417, 0));
    let initial = initialize_with(model, &mut rng)?;
    let mut sampler = JointSampler::new(model, initial.clone(), config.burn_in)?;

    let n_draws = config.n_draws();
    let mut draws = Vec::with_capacity(n_draws * layout.len());
    let mut proposals_at_burn_in = Vec::new();
    if config.burn_in == 0 {
        sampler.freeze();
        proposals_at_burn_in = sampler.proposal_snapshot();
    }
    let total = config.burn_in + config.iterations;
    for sweep in 1..=total {
        sampler.sweep(&mut rng).map_err(|e| match e {
            Error::NonFinitePosterior { sweep, state, .. } => Error::NonFinitePosterior {
                chain: index,
                sweep,
                state,
            },
            other => other,
        })?;
        if sweep == config.burn_in {
            sampler.freeze();
            proposals_at_burn_in = sampler.proposal_snapshot();
        }
        if sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
            layout.flatten_into(sampler.state(), &mut draws);
        }
    }
    let tally = sampler.tally();
    let acceptance = Block::ALL
        .iter()
        .filter_map(|&b| {
            tally.rate(b).map(|rate| BlockAcceptance {
                block: b.name().into(),
                rate,
                attempts: tally.attempted[b as usize],
            })
        })
        .collect();
    Ok(Chain {
        seed,
        n_draws: draws.len() / layout.len(),
        draws,
        acceptance,
        cap_events: sampler.cap_events(),
        initial,
        proposals_at_burn_in,
        proposals_final: sampler.proposal_snapshot(),
    })
}

/// Run every chain sequentially. Chains are independent, so callers with
/// threads can run [`run_chain`] concurrently and assemble the result with
/// [`PosteriorSamples::new`]; the output is identical either way.
pub fn run_chains(spec: &JointModelSpec, cohort: &CohortDataset, config: &McmcConfig) -> Result<PosteriorSamples> {
    config.validate()?;
    let model = JointModel::new(spec, cohort)?;
    let chains = (0..config.n_chains)
        .map(|c| run_chain(&model, config, c))
        .collect::<Result<Vec<_>>>()?;
    PosteriorSamples::new(layout_for(spec, cohort, config), chains, spec.clone(), config.clone())
}
