//! CSV formats. Files may start with `#` comment lines; writers put the
//! producing run's manifest hash there.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use jointsurv_core::data::{
    validate_longitudinal, validate_survival, LongitudinalRecord, StepCurve, SurvivalRecord,
};
use jointsurv_core::extrapolate::CurveGrid;
use jointsurv_core::model::JointModelSpec;
use jointsurv_core::sampler::{Chain, McmcConfig, ParamLayout, PosteriorSamples};

use crate::error::{CliError, Result};

pub const LONGITUDINAL_HEADER: [&str; 3] = ["patient_id", "time_months", "sld_mm"];
pub const SURVIVAL_HEADER: [&str; 4] = ["patient_id", "os_time_months", "event", "tumour_group"];
/// Optional survival columns, carried as covariates.
pub const SURVIVAL_COVARIATES: [&str; 3] = ["age_group", "ecog", "metastatic"];
pub const KM_HEADER: [&str; 4] = ["time_months", "survival", "at_risk", "events"];
pub const CURVE_HEADER: [&str; 5] = ["scope", "time_months", "mean", "lo95", "hi95"];

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn headers(path: &Path, rdr: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| CliError::format(path, e.to_string()))?;
    Ok(h.iter().map(str::to_owned).collect())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn field<'r>(path: &Path, rec: &'r csv::StringRecord, i: usize, name: &str) -> Result<&'r str> {
    rec.get(i)
        .ok_or_else(|| CliError::format(path, format!("line {}: missing `{name}`", line_of(rec))))
}

fn number(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let s = field(path, rec, i, name)?;
    s.parse::<f64>()
        .map_err(|_| CliError::format(path, format!("line {}: `{name}` is not a number: `{s}`", line_of(rec))))
}

fn records(path: &Path, rdr: &mut csv::Reader<File>) -> Result<Vec<csv::StringRecord>> {
    rdr.records()
        .map(|r| r.map_err(|e| CliError::format(path, e.to_string())))
        .collect()
}

/// Reads `patient_id,time_months,sld_mm`. Row order is preserved.
pub fn load_longitudinal(path: &Path) -> Result<Vec<LongitudinalRecord>> {
    let mut rdr = reader(path)?;
    let h = headers(path, &mut rdr)?;
    if h != LONGITUDINAL_HEADER {
        return Err(CliError::format(
            path,
            format!("expected header `{}`, found `{}`", LONGITUDINAL_HEADER.join(","), h.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in records(path, &mut rdr)? {
        let r = LongitudinalRecord {
            patient_id: field(path, &rec, 0, "patient_id")?.to_owned(),
            time: number(path, &rec, 1, "time_months")?,
            sld: number(path, &rec, 2, "sld_mm")?,
        };
        if !(r.time >= 0.0) || !(r.sld >= 0.0) {
            return Err(CliError::format(
                path,
                format!("line {}: time and sld must be nonnegative", line_of(&rec)),
            ));
        }
        out.push(r);
    }
    validate_longitudinal(&out).map_err(|e| CliError::in_file(path, e))?;
    Ok(out)
}

/// Reads `patient_id,os_time_months,event,tumour_group` plus any of the
/// optional covariate columns.
pub fn load_survival(path: &Path) -> Result<Vec<SurvivalRecord>> {
    let mut rdr = reader(path)?;
    let h = headers(path, &mut rdr)?;
    let extra = h.get(SURVIVAL_HEADER.len()..).unwrap_or_default();
    if h.len() < SURVIVAL_HEADER.len()
        || h[..SURVIVAL_HEADER.len()] != SURVIVAL_HEADER
        || extra.iter().any(|c| !SURVIVAL_COVARIATES.contains(&c.as_str()))
    {
        return Err(CliError::format(
            path,
            format!(
                "expected header `{}[,{}]`, found `{}`",
                SURVIVAL_HEADER.join(","),
                SURVIVAL_COVARIATES.join(","),
                h.join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in records(path, &mut rdr)? {
        let event = match field(path, &rec, 2, "event")? {
            "0" => false,
            "1" => true,
            other => {
                return Err(CliError::format(
                    path,
                    format!("line {}: event must be 0 or 1, got `{other}`", line_of(&rec)),
                ))
            }
        };
        let mut covariates = BTreeMap::new();
        for (j, name) in extra.iter().enumerate() {
            let v = field(path, &rec, SURVIVAL_HEADER.len() + j, name)?;
            if !v.is_empty() {
                covariates.insert(name.clone(), v.to_owned());
            }
        }
        out.push(SurvivalRecord {
            patient_id: field(path, &rec, 0, "patient_id")?.to_owned(),
            os_time: number(path, &rec, 1, "os_time_months")?,
            event,
            tumour_group: field(path, &rec, 3, "tumour_group")?.to_owned(),
            covariates,
        });
    }
    validate_survival(&out).map_err(|e| CliError::in_file(path, e))?;
    Ok(out)
}

/// A CSV writer whose file starts with a `# manifest:` line.
pub fn writer(path: &Path, manifest_hash: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# manifest: {manifest_hash}").map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(w))
}

fn finish(path: &Path, mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn put<I, T>(path: &Path, w: &mut csv::Writer<BufWriter<File>>, row: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| CliError::io(path, e))
}

pub fn write_longitudinal(path: &Path, records: &[LongitudinalRecord], manifest_hash: &str) -> Result<()> {
    let mut w = writer(path, manifest_hash)?;
    put(path, &mut w, LONGITUDINAL_HEADER)?;
    for r in records {
        put(path, &mut w, [r.patient_id.clone(), fmt_f64(r.time), fmt_f64(r.sld)])?;
    }
    finish(path, w)
}

/// Covariate columns are written when any record carries them.
pub fn write_survival(path: &Path, records: &[SurvivalRecord], manifest_hash: &str) -> Result<()> {
    let cov: Vec<&str> = SURVIVAL_COVARIATES
        .iter()
        .copied()
        .filter(|c| records.iter().any(|r| r.covariates.contains_key(*c)))
        .collect();
    let mut w = writer(path, manifest_hash)?;
    put(path, &mut w, SURVIVAL_HEADER.iter().chain(&cov))?;
    for r in records {
        let mut row = vec![
            r.patient_id.clone(),
            fmt_f64(r.os_time),
            if r.event { "1" } else { "0" }.to_owned(),
            r.tumour_group.clone(),
        ];
        row.extend(cov.iter().map(|c| r.covariates.get(*c).cloned().unwrap_or_default()));
        put(path, &mut w, row)?;
    }
    finish(path, w)
}

pub fn write_km(path: &Path, curve: &StepCurve, manifest_hash: &str) -> Result<()> {
    let mut w = writer(path, manifest_hash)?;
    put(path, &mut w, KM_HEADER)?;
    for j in 0..curve.time.len() {
        put(
            path,
            &mut w,
            [
                fmt_f64(curve.time[j]),
                fmt_f64(curve.survival[j]),
                curve.at_risk[j].to_string(),
                curve.events[j].to_string(),
            ],
        )?;
    }
    finish(path, w)
}

/// One block of rows per scope.
pub fn write_curves(path: &Path, curves: &[CurveGrid], manifest_hash: &str) -> Result<()> {
    let mut w = writer(path, manifest_hash)?;
    put(path, &mut w, CURVE_HEADER)?;
    for c in curves {
        for j in 0..c.time.len() {
            put(
                path,
                &mut w,
                [
                    c.scope.clone(),
                    fmt_f64(c.time[j]),
                    fmt_f64(c.mean[j]),
                    fmt_f64(c.lower[j]),
                    fmt_f64(c.upper[j]),
                ],
            )?;
        }
    }
    finish(path, w)
}

/// `chain,iteration,<parameter names>`; chains are 0-based and `iteration`
/// counts post-burn-in sweeps.
pub fn write_posterior(path: &Path, samples: &PosteriorSamples, manifest_hash: &str) -> Result<()> {
    let mut w = writer(path, manifest_hash)?;
    put(
        path,
        &mut w,
        ["chain", "iteration"].into_iter().chain(samples.layout.names.iter().map(String::as_str)),
    )?;
    let thin = samples.config.thin.max(1);
    let mut row: Vec<String> = Vec::with_capacity(samples.layout.len() + 2);
    for c in 0..samples.n_chains() {
        for i in 0..samples.n_draws() {
            row.clear();
            row.push(c.to_string());
            row.push(((i + 1) * thin).to_string());
            row.extend(samples.draw(c, i).iter().map(|&x| fmt_f64(x)));
            put(path, &mut w, &row)?;
        }
    }
    finish(path, w)
}

/// Reads a posterior CSV against the layout the spec implies. Chain rows
/// must be contiguous and numbered `0, 1, ...`.
pub fn load_posterior(
    path: &Path,
    layout: ParamLayout,
    spec: JointModelSpec,
    config: McmcConfig,
) -> Result<PosteriorSamples> {
    let mut rdr = reader(path)?;
    let h = headers(path, &mut rdr)?;
    if h.len() < 2 || h[0] != "chain" || h[1] != "iteration" {
        return Err(CliError::format(path, "header must start with `chain,iteration`"));
    }
    if h[2..] != layout.names[..] {
        let missing = layout.names.iter().find(|n| !h[2..].contains(n));
        let unexpected = h[2..].iter().find(|n| !layout.names.contains(n));
        return Err(CliError::format(
            path,
            format!(
                "posterior columns do not match the model specification \
                 ({} columns, expected {}; first missing: {:?}; first unexpected: {:?})",
                h.len() - 2,
                layout.len(),
                missing,
                unexpected
            ),
        ));
    }
    let width = layout.len();
    let mut chains: Vec<Vec<f64>> = Vec::new();
    for rec in records(path, &mut rdr)? {
        let c: usize = field(path, &rec, 0, "chain")?
            .parse()
            .map_err(|_| CliError::format(path, format!("line {}: bad chain index", line_of(&rec))))?;
        if c == chains.len() {
            chains.push(Vec::new());
        } else if c + 1 != chains.len() {
            return Err(CliError::format(path, format!("line {}: chain rows are not contiguous", line_of(&rec))));
        }
        if rec.len() != width + 2 {
            return Err(CliError::format(path, format!("line {}: expected {} fields", line_of(&rec), width + 2)));
        }
        let draws = chains.last_mut().expect("pushed above");
        for j in 0..width {
            draws.push(number(path, &rec, j + 2, &layout.names[j])?);
        }
    }
    if chains.is_empty() {
        return Err(CliError::format(path, "no posterior draws"));
    }
    let chains = chains
        .into_iter()
        .enumerate()
        .map(|(c, draws)| {
            let n_draws = draws.len() / width;
            let initial = layout.unflatten(&draws[..width])?;
            Ok(Chain {
                seed: config.seeds.get(c).copied().unwrap_or_default(),
                draws,
                n_draws,
                acceptance: Vec::new(),
                cap_events: 0,
                initial,
                proposals_at_burn_in: Vec::new(),
                proposals_final: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>, jointsurv_core::Error>>()?;
    let config = McmcConfig { n_chains: chains.len(), ..config };
    Ok(PosteriorSamples::new(layout, chains, spec, config)?)
}
