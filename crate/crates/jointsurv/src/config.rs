//! Run configuration: one TOML document with every default pre-filled, so
//! a minimal file names only the data.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! longitudinal = "longitudinal.csv"
//! survival = "survival.csv"
//!
//! [model]
//! association = "exchangeable"
//!
//! [mcmc]
//! preset = "smoke"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use jointsurv_core::extrapolate::{Horizons, PredictOptions};
use jointsurv_core::model::{AssociationFunctional, AssociationStructure, JointModelSpec, Priors};
use jointsurv_core::quadrature::DEFAULT_NODES;
use jointsurv_core::rng::derive_seed;
use jointsurv_core::sampler::McmcConfig;
use jointsurv_core::MONTHS_PER_YEAR;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 20_240_601;
/// Weibull comparator bootstrap resamples.
pub const DEFAULT_BOOTSTRAP: usize = 2000;
/// Posterior draws used for prediction.
pub const DEFAULT_PREDICTIVE_DRAWS: usize = 1000;
/// Stream ids under the base seed.
pub const PREDICTION_STREAM: u64 = 0x9E_D1C7;
pub const BOOTSTRAP_STREAM: u64 = 0xB0_0757;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 3 chains, 2,000 burn-in, 5,000 retained sweeps.
    Smoke,
    /// 3 chains, 50,000 burn-in, 150,000 retained sweeps.
    Paper,
}

impl FromStr for Preset {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Self::Smoke),
            "paper" => Ok(Self::Paper),
            _ => Err(CliError::Usage(format!("unknown preset `{s}` (expected smoke or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub longitudinal: Option<PathBuf>,
    pub survival: Option<PathBuf>,
    /// Declared tumour-group labels; the first is the reference group.
    /// Defaults to order of first appearance in the survival file.
    pub groups: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub association: AssociationStructure,
    pub functional: AssociationFunctional,
    pub quadrature_nodes: usize,
    pub random_slope: bool,
    pub group_intercepts: bool,
    pub wide_slope_prior: bool,
    pub priors: Priors,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            association: AssociationStructure::Exchangeable,
            functional: AssociationFunctional::CurrentValue,
            quadrature_nodes: DEFAULT_NODES,
            random_slope: true,
            group_intercepts: false,
            wide_slope_prior: false,
            priors: Priors::default(),
        }
    }
}

/// Explicit counts override the preset; `scale` multiplies burn-in and
/// retained sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub preset: Preset,
    pub n_chains: Option<usize>,
    pub burn_in: Option<usize>,
    pub iterations: Option<usize>,
    pub thin: usize,
    pub scale: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            preset: Preset::Paper,
            n_chains: None,
            burn_in: None,
            iterations: None,
            thin: 1,
            scale: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonSettings {
    pub lifespan_months: f64,
    pub landmarks_months: Vec<f64>,
    pub short_months: f64,
}

impl Default for HorizonSettings {
    fn default() -> Self {
        let h = Horizons::default();
        Self {
            lifespan_months: h.lifespan,
            landmarks_months: h.landmarks,
            short_months: h.short,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtrapolationSettings {
    pub draws_per_sample: usize,
    /// Evenly spaced posterior draws used for prediction; 0 uses all.
    pub max_posterior_draws: usize,
    pub weibull_bootstrap: usize,
}

impl Default for ExtrapolationSettings {
    fn default() -> Self {
        Self {
            draws_per_sample: 1,
            max_posterior_draws: DEFAULT_PREDICTIVE_DRAWS,
            weibull_bootstrap: DEFAULT_BOOTSTRAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSettings {
    pub rhat_threshold: f64,
    pub mcse_threshold: f64,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        Self {
            rhat_threshold: jointsurv_core::diagnostics::DEFAULT_RHAT_THRESHOLD,
            mcse_threshold: jointsurv_core::diagnostics::DEFAULT_MCSE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; chain, prediction and bootstrap streams derive from it.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub mcmc: McmcSettings,
    pub horizons: HorizonSettings,
    pub extrapolation: ExtrapolationSettings,
    pub diagnostics: DiagnosticsSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            mcmc: McmcSettings::default(),
            horizons: HorizonSettings::default(),
            extrapolation: ExtrapolationSettings::default(),
            diagnostics: DiagnosticsSettings::default(),
        }
    }
}

/// Command-line overrides applied on top of a file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub association: Option<AssociationStructure>,
    pub functional: Option<AssociationFunctional>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }

    /// Parse a file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.longitudinal, &mut cfg.data.survival].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = o.preset {
            self.mcmc.preset = p;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(a) = o.association {
            self.model.association = a;
        }
        if let Some(f) = o.functional {
            self.model.functional = f;
        }
    }

    pub fn longitudinal_path(&self) -> Result<&Path> {
        self.data
            .longitudinal
            .as_deref()
            .ok_or_else(|| CliError::Usage("configuration lacks data.longitudinal".into()))
    }

    pub fn survival_path(&self) -> Result<&Path> {
        self.data
            .survival
            .as_deref()
            .ok_or_else(|| CliError::Usage("configuration lacks data.survival".into()))
    }

    pub fn spec(&self, group_labels: Vec<String>) -> Result<JointModelSpec> {
        let m = &self.model;
        let spec = JointModelSpec {
            structure: m.association,
            functional: m.functional,
            priors: m.priors.clone(),
            quadrature_nodes: m.quadrature_nodes,
            random_slope: m.random_slope,
            group_intercepts: m.group_intercepts,
            wide_slope_prior: m.wide_slope_prior,
            group_labels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mcmc(&self) -> Result<McmcConfig> {
        let s = &self.mcmc;
        let base = match s.preset {
            Preset::Smoke => McmcConfig::smoke(self.seed),
            Preset::Paper => McmcConfig::paper(self.seed),
        };
        let n_chains = s.n_chains.unwrap_or(base.n_chains);
        let cfg = McmcConfig::new(
            n_chains,
            s.burn_in.unwrap_or(base.burn_in),
            s.iterations.unwrap_or(base.iterations),
            self.seed,
        )
        .scaled(s.scale)
        .with_thin(s.thin);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Horizons in months, with the table fields (10-year landmark and
    /// 5-year RMST) always included.
    pub fn horizons(&self) -> Result<Horizons> {
        let h = &self.horizons;
        let mut landmarks = h.landmarks_months.clone();
        let ten = 10.0 * MONTHS_PER_YEAR;
        if !landmarks.contains(&ten) {
            landmarks.push(ten);
        }
        let out = Horizons {
            lifespan: h.lifespan_months,
            landmarks,
            short: h.short_months,
        };
        out.validate()?;
        if out.lifespan < ten {
            return Err(CliError::Usage(format!(
                "lifespan horizon must be at least {ten} months, got {}",
                out.lifespan
            )));
        }
        Ok(out)
    }

    pub fn predict_options(&self) -> PredictOptions {
        let e = &self.extrapolation;
        PredictOptions {
            horizon: self.horizons.lifespan_months,
            draws_per_sample: e.draws_per_sample,
            max_posterior_draws: (e.max_posterior_draws > 0).then_some(e.max_posterior_draws),
            seed: derive_seed(self.seed, PREDICTION_STREAM, 0),
            quadrature_nodes: self.model.quadrature_nodes,
        }
    }

    /// Seed of the Weibull bootstrap stream.
    pub fn bootstrap_seed(&self) -> u64 {
        derive_seed(self.seed, BOOTSTRAP_STREAM, 0)
    }
}
