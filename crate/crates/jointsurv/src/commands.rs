//! The command implementations. Each writes its artifacts into an output
//! directory and returns what it wrote.

use std::path::{Path, PathBuf};

use jointsurv_core::data::{kaplan_meier, observed_rmst, SurvivalRecord};
use jointsurv_core::diagnostics::{diagnose, Dic};
use jointsurv_core::extrapolate::{
    predict_cohort, summarize_curves, summarize_predictions, weibull_extrapolation, ExtrapolationSummary,
    Horizons, OVERALL,
};
use jointsurv_core::model::fit_weibull_mle;
use jointsurv_core::rng::stream;
use jointsurv_core::simulate::{scenario, simulate_cohort};
use jointsurv_core::MONTHS_PER_YEAR;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, RunConfig, BOOTSTRAP_STREAM};
use crate::error::{CliError, Result};
use crate::io;
use crate::manifest::{InputFile, Manifest, Seeds};
use crate::report::{
    compare_dic, read_json, write_json, CompareDocument, DiagnosticsDocument, ExtrapolationDocument,
    JointSection, KmDocument, KmScope, ScopeReport, TruthDocument, WeibullSection, SCHEMA_VERSION,
};
use crate::run::{self, cohort_hash, load_cohort};

pub const POSTERIOR_FILE: &str = "posterior.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const FIT_CONFIG_FILE: &str = "config.toml";
pub const EXTRAPOLATION_FILE: &str = "extrapolation.json";
pub const JOINT_CURVES_FILE: &str = "curves_joint.csv";
pub const WEIBULL_CURVES_FILE: &str = "curves_weibull.csv";
pub const KM_FILE: &str = "km.csv";
pub const OBSERVED_RMST_FILE: &str = "observed_rmst.json";
pub const COMPARE_FILE: &str = "compare.json";
pub const LONGITUDINAL_FILE: &str = "longitudinal.csv";
pub const SURVIVAL_FILE: &str = "survival.csv";
pub const TRUTH_FILE: &str = "truth.json";

/// What a command produced; printed as JSON on success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub command: String,
    pub manifest_hash: Option<String>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

fn output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn finish(command: &str, mut manifest: Manifest, dir: &Path, mut outputs: Vec<PathBuf>) -> Result<Outcome> {
    manifest.outputs = outputs
        .iter()
        .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()))
        .collect();
    outputs.push(manifest.write(dir)?);
    Ok(Outcome { command: command.into(), manifest_hash: Some(manifest.manifest_hash), outputs, summary: None })
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn data_inputs(cfg: &RunConfig) -> Result<Vec<InputFile>> {
    Ok(vec![
        InputFile::read("longitudinal", cfg.longitudinal_path()?)?,
        InputFile::read("survival", cfg.survival_path()?)?,
    ])
}

/// Writes a scenario's cohort CSVs, its truth, and a starter configuration
/// pointing at them.
pub fn cmd_simulate(name: &str, seed: Option<u64>, out: &Path) -> Result<Outcome> {
    let mut design = scenario(name)?;
    if let Some(s) = seed {
        design.seed = s;
    }
    let sim = simulate_cohort(&design)?;
    output_dir(out)?;
    let snapshot = serde_json::json!({ "scenario": design.name, "seed": design.seed });
    let seeds = Seeds { base: design.seed, chains: Vec::new(), prediction: None, bootstrap: None };
    let manifest = Manifest::with_snapshot("simulate", snapshot.clone(), &snapshot, seeds, Vec::new());
    let hash = &manifest.manifest_hash;

    let long_path = out.join(LONGITUDINAL_FILE);
    let surv_path = out.join(SURVIVAL_FILE);
    io::write_longitudinal(&long_path, &sim.cohort.longitudinal_records(), hash)?;
    io::write_survival(&surv_path, &sim.cohort.survival_records(), hash)?;

    let truth_path = out.join(TRUTH_FILE);
    write_json(
        &truth_path,
        &TruthDocument {
            schema_version: SCHEMA_VERSION,
            manifest_hash: hash.clone(),
            scenario: design.name.clone(),
            patient_ids: sim.cohort.patients.iter().map(|p| p.id().to_owned()).collect(),
            design,
            truth: sim.truth,
            death_times: sim.death_times,
            censor_times: sim.censor_times,
            floored_measurements: sim.floored,
        },
    )?;

    let cfg = RunConfig {
        data: DataConfig {
            longitudinal: Some(LONGITUDINAL_FILE.into()),
            survival: Some(SURVIVAL_FILE.into()),
            groups: Some(sim.cohort.group_labels()),
        },
        ..RunConfig::default()
    };
    let cfg_path = out.join(FIT_CONFIG_FILE);
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| CliError::io(&cfg_path, e))?;
    finish("simulate", manifest, out, vec![long_path, surv_path, truth_path, cfg_path])
}

/// Samples the posterior and writes draws, diagnostics (with DIC) and the
/// resolved configuration, whose data paths are absolute so later commands
/// can use it from anywhere.
pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let cohort = load_cohort(cfg)?;
    let spec = cfg.spec(cohort.group_labels())?;
    let mcmc = cfg.mcmc()?;
    let mut resolved = cfg.clone();
    resolved.data.groups = Some(cohort.group_labels());
    for p in [&mut resolved.data.longitudinal, &mut resolved.data.survival].into_iter().flatten() {
        *p = std::fs::canonicalize(&*p).map_err(|e| CliError::io(p, e))?;
    }
    let seeds = Seeds { base: cfg.seed, chains: mcmc.seeds.clone(), prediction: None, bootstrap: None };
    let manifest = Manifest::new("fit", &resolved, seeds, data_inputs(cfg)?);
    output_dir(out)?;

    let samples = run::fit(&spec, &cohort, &mcmc)?;
    let posterior = out.join(POSTERIOR_FILE);
    io::write_posterior(&posterior, &samples, &manifest.manifest_hash)?;
    let cfg_path = out.join(FIT_CONFIG_FILE);
    std::fs::write(&cfg_path, resolved.to_toml()).map_err(|e| CliError::io(&cfg_path, e))?;

    let d = &cfg.diagnostics;
    let report = diagnose(&samples, Some(&cohort), d.rhat_threshold, d.mcse_threshold)?;
    let diag = out.join(DIAGNOSTICS_FILE);
    write_json(
        &diag,
        &DiagnosticsDocument {
            schema_version: SCHEMA_VERSION,
            manifest_hash: manifest.manifest_hash.clone(),
            cohort_hash: cohort_hash(&cohort),
            report,
        },
    )?;
    finish("fit", manifest, out, vec![posterior, cfg_path, diag])
}

/// Recomputes diagnostics and DIC from a posterior CSV. Acceptance rates
/// are not stored in the CSV and are reported empty.
pub fn cmd_diagnose(cfg: &RunConfig, posterior: &Path, out: &Path) -> Result<Outcome> {
    let cohort = load_cohort(cfg)?;
    let samples = run::load_posterior(posterior, cfg, &cohort)?;
    let mut inputs = data_inputs(cfg)?;
    inputs.push(InputFile::read("posterior", posterior)?);
    let seeds = Seeds { base: cfg.seed, chains: Vec::new(), prediction: None, bootstrap: None };
    let manifest = Manifest::new("diagnose", cfg, seeds, inputs);
    output_dir(out)?;
    let d = &cfg.diagnostics;
    let report = diagnose(&samples, Some(&cohort), d.rhat_threshold, d.mcse_threshold)?;
    let diag = out.join(DIAGNOSTICS_FILE);
    write_json(
        &diag,
        &DiagnosticsDocument {
            schema_version: SCHEMA_VERSION,
            manifest_hash: manifest.manifest_hash.clone(),
            cohort_hash: cohort_hash(&cohort),
            report,
        },
    )?;
    finish("diagnose", manifest, out, vec![diag])
}

fn pair_reports(five: &[ExtrapolationSummary], short: &[ExtrapolationSummary]) -> Result<Vec<ScopeReport>> {
    five.iter().zip(short).map(|(f, s)| ScopeReport::new(f, s)).collect()
}

/// Joint-model and Weibull-comparator summaries and curves for the cohort
/// and each tumour group.
pub fn cmd_extrapolate(cfg: &RunConfig, posterior: &Path, out: &Path) -> Result<Outcome> {
    let cohort = load_cohort(cfg)?;
    let samples = run::load_posterior(posterior, cfg, &cohort)?;
    let horizons = cfg.horizons()?;
    let five_year = 5.0 * MONTHS_PER_YEAR;
    let table = Horizons { short: five_year, ..horizons.clone() };
    let options = cfg.predict_options();

    let mut inputs = data_inputs(cfg)?;
    inputs.push(InputFile::read("posterior", posterior)?);
    let seeds = Seeds {
        base: cfg.seed,
        chains: Vec::new(),
        prediction: Some(options.seed),
        bootstrap: Some(cfg.bootstrap_seed()),
    };
    let manifest = Manifest::new("extrapolate", cfg, seeds, inputs);
    output_dir(out)?;
    let hash = &manifest.manifest_hash;

    let draws = predict_cohort(&samples, &cohort, &options)?;
    let joint = summarize_predictions(&draws, &cohort, &table)?;
    let joint_short = if horizons.short == five_year {
        joint.summaries.clone()
    } else {
        joint
            .curves
            .iter()
            .zip(&joint.summaries)
            .map(|(c, s)| summarize_curves(c, None, s.n_patients, &horizons, s.capped_fraction))
            .collect::<Result<Vec<_>, _>>()?
    };

    let fit = fit_weibull_mle(&cohort.survival_records(), &cohort.group_labels())?;
    let counts: Vec<usize> = cohort.groups.iter().map(|g| g.patients).collect();
    let n_boot = cfg.extrapolation.weibull_bootstrap;
    let boot = |h: &Horizons| {
        let mut rng = stream(cfg.seed, BOOTSTRAP_STREAM, 0);
        weibull_extrapolation(&fit, &counts, h, n_boot, &mut rng)
    };
    let weibull = boot(&table)?;
    let weibull_short = if horizons.short == five_year { weibull.summaries.clone() } else { boot(&horizons)?.summaries };

    let joint_csv = out.join(JOINT_CURVES_FILE);
    let weibull_csv = out.join(WEIBULL_CURVES_FILE);
    io::write_curves(&joint_csv, &joint.curves, hash)?;
    io::write_curves(&weibull_csv, &weibull.curves, hash)?;

    let doc = ExtrapolationDocument {
        schema_version: SCHEMA_VERSION,
        manifest_hash: hash.clone(),
        cohort_hash: cohort_hash(&cohort),
        structure: samples.spec.structure.as_str().into(),
        functional: samples.spec.functional.as_str().into(),
        lifespan_months: horizons.lifespan,
        joint: JointSection {
            n_predictive_draws: joint.n_predictive_draws,
            curves_csv: JOINT_CURVES_FILE.into(),
            scopes: pair_reports(&joint.summaries, &joint_short)?,
        },
        weibull: WeibullSection {
            n_bootstrap: weibull.n_boot,
            shape: fit.shape,
            phi: fit.phi.clone(),
            loglik: fit.loglik,
            curves_csv: WEIBULL_CURVES_FILE.into(),
            scopes: pair_reports(&weibull.summaries, &weibull_short)?,
        },
    };
    let summary = out.join(EXTRAPOLATION_FILE);
    write_json(&summary, &doc)?;
    finish("extrapolate", manifest, out, vec![summary, joint_csv, weibull_csv])
}

/// Kaplan–Meier curves and observed RMST for the cohort and each group.
/// Only the survival file is read.
pub fn cmd_km(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let sp = cfg.survival_path()?;
    let surv = io::load_survival(sp)?;
    let horizons = cfg.horizons()?;
    let seeds = Seeds { base: cfg.seed, chains: Vec::new(), prediction: None, bootstrap: None };
    let manifest = Manifest::new("km", cfg, seeds, vec![InputFile::read("survival", sp)?]);

    let labels = cfg.data.groups.clone().unwrap_or_else(|| {
        let mut l: Vec<String> = Vec::new();
        for r in &surv {
            if !l.contains(&r.tumour_group) {
                l.push(r.tumour_group.clone());
            }
        }
        l
    });
    if let Some(r) = surv.iter().find(|r| !labels.contains(&r.tumour_group)) {
        return Err(CliError::format(sp, format!("unknown tumour group `{}`", r.tumour_group)));
    }
    let mut scopes: Vec<(String, String, Vec<SurvivalRecord>)> =
        vec![(OVERALL.into(), KM_FILE.into(), surv.clone())];
    for l in &labels {
        let members: Vec<SurvivalRecord> = surv.iter().filter(|r| &r.tumour_group == l).cloned().collect();
        if !members.is_empty() {
            scopes.push((l.clone(), format!("km_{}.csv", file_stem(l)), members));
        }
    }
    let curves = scopes
        .iter()
        .map(|(_, _, records)| kaplan_meier(records).map_err(|e| CliError::in_file(sp, e)))
        .collect::<Result<Vec<_>>>()?;

    output_dir(out)?;
    let mut outputs = Vec::new();
    let mut doc = KmDocument { schema_version: SCHEMA_VERSION, manifest_hash: manifest.manifest_hash.clone(), scopes: Vec::new() };
    for ((scope, file, records), curve) in scopes.into_iter().zip(curves) {
        let path = out.join(&file);
        io::write_km(&path, &curve, &manifest.manifest_hash)?;
        outputs.push(path);
        let rmst = [horizons.short, horizons.lifespan]
            .into_iter()
            .map(|h| observed_rmst(&curve, h).map(Into::into))
            .collect::<Result<Vec<_>, _>>()?;
        doc.scopes.push(KmScope {
            scope,
            n_patients: records.len(),
            n_events: records.iter().filter(|r| r.event).count(),
            curve_csv: file,
            rmst,
        });
    }
    let json = out.join(OBSERVED_RMST_FILE);
    write_json(&json, &doc)?;
    outputs.insert(0, json);
    finish("km", manifest, out, outputs)
}

/// The fields of a diagnostics document that a comparison needs.
#[derive(Deserialize)]
struct CompareInput {
    cohort_hash: String,
    report: CompareReport,
}

#[derive(Deserialize)]
struct CompareReport {
    structure: String,
    functional: String,
    dic: Option<Dic>,
}

/// DIC table across fits of the same cohort; the lowest is flagged.
pub fn cmd_compare(inputs: &[PathBuf], out: Option<&Path>) -> Result<Outcome> {
    if inputs.len() < 2 {
        return Err(CliError::Usage(format!("compare needs at least 2 diagnostics files, got {}", inputs.len())));
    }
    let mut entries = Vec::new();
    let mut cohort: Option<String> = None;
    for path in inputs {
        let doc: CompareInput = read_json(path)?;
        match &cohort {
            None => cohort = Some(doc.cohort_hash.clone()),
            Some(h) if *h != doc.cohort_hash => {
                return Err(CliError::format(path, "fitted to a different cohort than the first input"));
            }
            Some(_) => {}
        }
        let dic = doc.report.dic.ok_or_else(|| CliError::format(path, "no DIC in diagnostics"))?;
        entries.push((path.display().to_string(), doc.report.structure, doc.report.functional, dic));
    }
    let doc = CompareDocument {
        schema_version: SCHEMA_VERSION,
        cohort_hash: cohort.unwrap_or_default(),
        rows: compare_dic(entries)?,
    };
    let mut outputs = Vec::new();
    if let Some(dir) = out {
        output_dir(dir)?;
        let path = dir.join(COMPARE_FILE);
        write_json(&path, &doc)?;
        outputs.push(path);
    }
    Ok(Outcome {
        command: "compare".into(),
        manifest_hash: None,
        outputs,
        summary: Some(serde_json::to_value(&doc.rows).expect("rows serialise")),
    })
}
