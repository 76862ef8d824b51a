use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jointsurv::commands::{
    cmd_compare, cmd_extrapolate, cmd_fit, cmd_km, cmd_simulate, EXTRAPOLATION_FILE, POSTERIOR_FILE,
};
use jointsurv::core::diagnostics::Dic;
use jointsurv::io::{load_longitudinal, load_posterior, load_survival, write_longitudinal, write_survival};
use jointsurv::report::{compare_dic, ExtrapolationDocument};
use jointsurv::{Preset, RunConfig, EXIT_INPUT, EXIT_NUMERICAL};
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointsurv")).args(args).output().expect("binary runs")
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).expect("error output is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Simulates `scenario` into `dir/sim` and returns a short-chain config.
fn short_run(dir: &Path, scenario: &str, burn_in: usize, iterations: usize) -> RunConfig {
    cmd_simulate(scenario, None, &dir.join("sim")).unwrap();
    let mut cfg = RunConfig::load(&dir.join("sim/config.toml")).unwrap();
    cfg.mcmc.preset = Preset::Smoke;
    cfg.mcmc.burn_in = Some(burn_in);
    cfg.mcmc.iterations = Some(iterations);
    cfg.extrapolation.weibull_bootstrap = 200;
    cfg
}

#[test]
fn longitudinal_loader_examples() {
    let d = TempDir::new().unwrap();
    let p = write(d.path(), "l.csv", "patient_id,time_months,sld_mm\nP1,0,42\nP1,2,35\n");
    let r = load_longitudinal(&p).unwrap();
    assert_eq!(r.len(), 2);
    assert_eq!((r[0].time, r[0].sld, r[1].time, r[1].sld), (0.0, 42.0, 2.0, 35.0));

    let p = write(d.path(), "empty.csv", "patient_id,time_months,sld_mm\n");
    assert!(load_longitudinal(&p).unwrap().is_empty());

    let p = write(d.path(), "neg.csv", "patient_id,time_months,sld_mm\nP1,0,42\nP1,2,-1\n");
    let msg = load_longitudinal(&p).unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");
    assert!(msg.contains("neg.csv"), "{msg}");

    let p = write(d.path(), "dup.csv", "patient_id,time_months,sld_mm\nP1,0,42\nP1,0,40\n");
    assert!(load_longitudinal(&p).unwrap_err().to_string().contains("duplicate"));

    let p = write(d.path(), "bad.csv", "patient_id,time_months,sld_mm\nP1,zero,42\n");
    let e = load_longitudinal(&p).unwrap_err();
    assert!(e.to_string().contains("line 2"), "{e}");
    assert_eq!(e.exit_code(), EXIT_INPUT);

    let p = write(d.path(), "hdr.csv", "id,time,sld\nP1,0,42\n");
    assert!(load_longitudinal(&p).is_err());
}

#[test]
fn survival_loader_examples() {
    let d = TempDir::new().unwrap();
    let p = write(d.path(), "s.csv", "patient_id,os_time_months,event,tumour_group\nP1,32.4,0,lung\n");
    let r = load_survival(&p).unwrap();
    assert_eq!((r[0].os_time, r[0].event, r[0].tumour_group.as_str()), (32.4, false, "lung"));

    let p = write(d.path(), "e.csv", "patient_id,os_time_months,event,tumour_group\nP1,3,2,lung\n");
    assert!(load_survival(&p).unwrap_err().to_string().contains("event must be 0 or 1"));

    let p = write(d.path(), "z.csv", "patient_id,os_time_months,event,tumour_group\nP1,0,1,lung\n");
    assert!(load_survival(&p).unwrap_err().to_string().contains("positive"));

    let p = write(
        d.path(),
        "c.csv",
        "patient_id,os_time_months,event,tumour_group,age_group,ecog\nP1,5,1,lung,>=65,1\n",
    );
    let r = load_survival(&p).unwrap();
    assert_eq!(r[0].covariates.get("ecog").map(String::as_str), Some("1"));

    let p = write(d.path(), "x.csv", "patient_id,os_time_months,event,tumour_group,colour\nP1,5,1,lung,red\n");
    assert!(load_survival(&p).is_err());

    let missing = d.path().join("missing.csv");
    let e = load_survival(&missing).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_INPUT);
    assert_eq!(e.path(), Some(missing.as_path()));
}

#[test]
fn written_records_read_back_identically() {
    let d = TempDir::new().unwrap();
    let sim = jointsurv::core::simulate::simulate_cohort(&jointsurv::core::simulate::scenario("S2").unwrap())
        .unwrap();
    let (long, surv) = (sim.cohort.longitudinal_records(), sim.cohort.survival_records());
    write_longitudinal(&d.path().join("l.csv"), &long, "abc").unwrap();
    write_survival(&d.path().join("s.csv"), &surv, "abc").unwrap();
    assert_eq!(load_longitudinal(&d.path().join("l.csv")).unwrap(), long);
    assert_eq!(load_survival(&d.path().join("s.csv")).unwrap(), surv);
    let first = fs::read_to_string(d.path().join("l.csv")).unwrap();
    assert!(first.starts_with("# manifest: abc\npatient_id,time_months,sld_mm\n"));
}

#[test]
fn minimal_config_carries_defaults() {
    let d = TempDir::new().unwrap();
    let p = write(d.path(), "c.toml", "[data]\nlongitudinal = \"l.csv\"\nsurvival = \"/abs/s.csv\"\n");
    let cfg = RunConfig::load(&p).unwrap();
    assert_eq!(cfg.data.longitudinal.as_deref(), Some(d.path().join("l.csv").as_path()));
    assert_eq!(cfg.data.survival.as_deref(), Some(Path::new("/abs/s.csv")));
    let m = cfg.mcmc().unwrap();
    assert_eq!((m.n_chains, m.burn_in, m.iterations), (3, 50_000, 150_000));
    assert_eq!(cfg.extrapolation.weibull_bootstrap, 2000);
    let h = cfg.horizons().unwrap();
    assert_eq!((h.lifespan, h.short), (1200.0, 60.0));
    assert_eq!(h.landmarks, vec![120.0]);

    let mut smoke = cfg.clone();
    smoke.mcmc.preset = Preset::Smoke;
    smoke.mcmc.scale = 5;
    let m = smoke.mcmc().unwrap();
    assert_eq!((m.burn_in, m.iterations), (10_000, 25_000));

    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert!(RunConfig::from_toml("[model]\nassociation = \"partial\"\n").is_err());
    assert!(RunConfig::from_toml("[mcmc]\nchains = 3\n").is_err());
}

#[test]
fn simulate_writes_the_reference_cohort_deterministically() {
    let d = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        let o = bin(&["simulate", "--scenario", "S2", "--out", d.path().join(dir).to_str().unwrap()]);
        assert!(o.status.success());
    }
    let surv = load_survival(&d.path().join("a/survival.csv")).unwrap();
    assert_eq!(surv.len(), 196);
    for f in ["longitudinal.csv", "survival.csv", "truth.json", "config.toml"] {
        assert_eq!(fs::read(d.path().join("a").join(f)).unwrap(), fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
    }
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("a/truth.json")).unwrap()).unwrap();
    assert_eq!(truth["schema_version"], 1);
    assert_eq!(truth["patient_ids"].as_array().unwrap().len(), 196);

    let o = bin(&["simulate", "--scenario", "S9", "--out", d.path().join("c").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
    assert!(stderr_json(&o)["error"]["message"].as_str().unwrap().contains("S9"));
}

#[test]
fn fit_with_missing_survival_file_exits_2_naming_it() {
    let d = TempDir::new().unwrap();
    write(d.path(), "l.csv", "patient_id,time_months,sld_mm\nP1,0,42\n");
    let cfg = write(d.path(), "c.toml", "[data]\nlongitudinal = \"l.csv\"\nsurvival = \"nope.csv\"\n");
    let o = bin(&["fit", "--config", cfg.to_str().unwrap(), "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
    let err = stderr_json(&o);
    assert_eq!(err["schema_version"], 1);
    assert_eq!(err["error"]["exit_code"], 2);
    assert!(err["error"]["path"].as_str().unwrap().ends_with("nope.csv"));
}

#[test]
fn fit_artifacts_exist_parse_and_carry_the_manifest_hash() {
    let d = TempDir::new().unwrap();
    let cfg = short_run(d.path(), "S4", 100, 100);
    let out = d.path().join("fit");
    let outcome = cmd_fit(&cfg, &out).unwrap();
    let hash = outcome.manifest_hash.unwrap();
    for f in ["posterior.csv", "diagnostics.json", "manifest.json", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["manifest_hash"], hash.as_str());
    assert!(diag["report"]["dic"]["dic"].is_number());
    assert!(!diag["report"]["parameters"].as_array().unwrap().is_empty());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["manifest_hash"], hash.as_str());
    assert_eq!(manifest["seeds"]["chains"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(out.join(POSTERIOR_FILE)).unwrap();
    assert!(csv.starts_with(&format!("# manifest: {hash}\nchain,iteration,beta0,beta1,sigma,omega0,omega1,kappa,phi0,alpha,")));

    // The written configuration reproduces the run from anywhere.
    let again = RunConfig::load(&out.join("config.toml")).unwrap();
    let out2 = d.path().join("fit2");
    assert_eq!(cmd_fit(&again, &out2).unwrap().manifest_hash.unwrap(), hash);
    assert_eq!(fs::read(out.join(POSTERIOR_FILE)).unwrap(), fs::read(out2.join(POSTERIOR_FILE)).unwrap());
}

#[test]
fn posterior_csv_round_trips_and_rejects_mismatched_specs() {
    let d = TempDir::new().unwrap();
    let mut cfg = short_run(d.path(), "S4", 50, 60);
    cfg.model.association = jointsurv::core::model::AssociationStructure::Common;
    cfg.model.functional = jointsurv::core::model::AssociationFunctional::Slope;
    let out = d.path().join("fit");
    cmd_fit(&cfg, &out).unwrap();
    let cohort = jointsurv::run::load_cohort(&cfg).unwrap();
    let spec = cfg.spec(cohort.group_labels()).unwrap();
    let mcmc = cfg.mcmc().unwrap();
    let direct = jointsurv::run::fit(&spec, &cohort, &mcmc).unwrap();
    let layout = jointsurv::core::sampler::layout_for(&spec, &cohort, &mcmc);
    let read = load_posterior(&out.join(POSTERIOR_FILE), layout, spec, mcmc).unwrap();
    assert_eq!(read.n_chains(), 3);
    assert_eq!(read.n_draws(), 60);
    for c in 0..3 {
        assert_eq!(read.chains[c].draws, direct.chains[c].draws);
    }

    let mut other = cfg.clone();
    other.model.association = jointsurv::core::model::AssociationStructure::Independent;
    let e = jointsurv::run::load_posterior(&out.join(POSTERIOR_FILE), &other, &cohort).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_INPUT);
    assert!(e.to_string().contains("do not match"), "{e}");
}

#[test]
fn parallel_fit_matches_sequential_chains() {
    let sim = jointsurv::core::simulate::simulate_cohort(&jointsurv::core::simulate::scenario("S4").unwrap())
        .unwrap();
    let spec = jointsurv::core::model::JointModelSpec::new(
        jointsurv::core::model::AssociationStructure::Common,
        sim.cohort.group_labels(),
    );
    let mcmc = jointsurv::core::sampler::McmcConfig::new(4, 50, 50, 3);
    let par = jointsurv::run::fit(&spec, &sim.cohort, &mcmc).unwrap();
    let seq = jointsurv::core::sampler::run_chains(&spec, &sim.cohort, &mcmc).unwrap();
    assert_eq!(par, seq);
}

#[test]
fn extrapolate_reports_requested_landmarks_and_fails_numerically_on_short_posteriors() {
    let d = TempDir::new().unwrap();
    let mut cfg = short_run(d.path(), "S4", 100, 100);
    cfg.horizons.landmarks_months = vec![60.0, 120.0];
    let fit = d.path().join("fit");
    cmd_fit(&cfg, &fit).unwrap();
    let out = d.path().join("ex");
    let outcome = cmd_extrapolate(&cfg, &fit.join(POSTERIOR_FILE), &out).unwrap();
    let doc: ExtrapolationDocument =
        serde_json::from_str(&fs::read_to_string(out.join(EXTRAPOLATION_FILE)).unwrap()).unwrap();
    assert_eq!(doc.manifest_hash, outcome.manifest_hash.unwrap());
    for s in doc.joint.scopes.iter().chain(&doc.weibull.scopes) {
        let months: Vec<f64> = s.landmarks.iter().map(|l| l.months).collect();
        assert_eq!(months, vec![60.0, 120.0], "{}", s.scope);
        assert_eq!(s.landmark_10y.months, 120.0);
        assert_eq!(s.rmst_short.horizon_months, 60.0);
    }
    let curves = fs::read_to_string(out.join("curves_joint.csv")).unwrap();
    assert_eq!(curves.lines().nth(1), Some("scope,time_months,mean,lo95,hi95"));

    // Keep 30 draws (10 per chain): too few to summarise.
    let full = fs::read_to_string(fit.join(POSTERIOR_FILE)).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    let mut kept: Vec<&str> = lines[..2].to_vec();
    for c in 0..3 {
        kept.extend(lines[2..].iter().filter(|l| l.starts_with(&format!("{c},"))).take(10));
    }
    let short = write(d.path(), "short.csv", &(kept.join("\n") + "\n"));
    let e = cmd_extrapolate(&cfg, &short, &d.path().join("ex2")).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_NUMERICAL, "{e}");

    let cfg_path = write(d.path(), "run.toml", &cfg.to_toml());
    let o = bin(&[
        "extrapolate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--posterior",
        short.to_str().unwrap(),
        "--out",
        d.path().join("ex3").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_NUMERICAL));
    assert_eq!(stderr_json(&o)["error"]["kind"], "numerical");
}

#[test]
fn km_command_reproduces_the_hand_example() {
    let d = TempDir::new().unwrap();
    let s = write(
        d.path(),
        "s.csv",
        "patient_id,os_time_months,event,tumour_group\nA,1,0,g\nB,2,1,g\nC,3,1,g\nD,4,0,g\nE,5,1,g\n",
    );
    let mut cfg = RunConfig::default();
    cfg.data.survival = Some(s);
    cfg.horizons.short_months = 5.0;
    let out = d.path().join("km");
    cmd_km(&cfg, &out).unwrap();
    let csv = fs::read_to_string(out.join("km.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows, ["0.0,1.0,5,0", "1.0,1.0,5,0", "2.0,0.75,4,1", "3.0,0.5,3,1", "4.0,0.5,2,0", "5.0,0.0,1,1"]);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("observed_rmst.json")).unwrap()).unwrap();
    let overall = &doc["scopes"][0];
    assert_eq!(overall["scope"], "overall");
    assert_eq!(overall["rmst"][0]["horizon_months"], 5.0);
    assert_eq!(overall["rmst"][0]["point"].as_f64().unwrap() * 12.0, 3.75);
    assert_eq!(overall["rmst"][0]["units"], "years");

    let empty = write(d.path(), "e.csv", "patient_id,os_time_months,event,tumour_group\n");
    cfg.data.survival = Some(empty);
    assert_eq!(cmd_km(&cfg, &d.path().join("km2")).unwrap_err().exit_code(), EXIT_INPUT);
}

fn dic(d: f64) -> Dic {
    Dic { dbar: d - 100.0, pd: 50.0, dic: d }
}

#[test]
fn compare_flags_the_lowest_dic() {
    let rows = compare_dic(vec![
        ("a".into(), "common".into(), "current".into(), dic(16265.0)),
        ("b".into(), "exchangeable".into(), "current".into(), dic(15974.0)),
        ("c".into(), "independent".into(), "current".into(), dic(16018.0)),
    ])
    .unwrap();
    let best: Vec<&str> = rows.iter().filter(|r| r.best).map(|r| r.structure.as_str()).collect();
    assert_eq!(best, ["exchangeable"]);
    assert!(rows.iter().all(|r| !r.tie));
    assert_eq!(rows[0].delta, 291.0);

    let tied = compare_dic(vec![
        ("a".into(), "common".into(), "current".into(), dic(100.0)),
        ("b".into(), "exchangeable".into(), "current".into(), dic(100.0)),
        ("c".into(), "independent".into(), "current".into(), dic(101.0)),
    ])
    .unwrap();
    assert_eq!(tied.iter().map(|r| (r.best, r.tie)).collect::<Vec<_>>(), [(true, true), (true, true), (false, false)]);

    assert!(compare_dic(vec![("a".into(), "common".into(), "current".into(), dic(1.0))]).is_err());
}

#[test]
fn compare_command_checks_inputs() {
    let d = TempDir::new().unwrap();
    let doc = |hash: &str, structure: &str, v: f64| {
        serde_json::json!({
            "schema_version": 1, "manifest_hash": "m", "cohort_hash": hash,
            "report": { "structure": structure, "functional": "current",
                        "dic": { "dbar": v, "pd": 0.0, "dic": v } }
        })
        .to_string()
    };
    let a = write(d.path(), "a.json", &doc("h", "common", 16265.0));
    let b = write(d.path(), "b.json", &doc("h", "exchangeable", 15974.0));
    let c = write(d.path(), "c.json", &doc("h", "independent", 16018.0));
    let x = write(d.path(), "x.json", &doc("other", "independent", 1.0));

    let out = cmd_compare(&[a.clone(), b.clone(), c], Some(&d.path().join("cmp"))).unwrap();
    let rows = out.summary.unwrap();
    assert_eq!(rows[1]["best"], true);
    assert!(d.path().join("cmp/compare.json").exists());

    assert_eq!(cmd_compare(&[a.clone()], None).unwrap_err().exit_code(), EXIT_INPUT);
    let e = cmd_compare(&[a.clone(), x], None).unwrap_err();
    assert!(e.to_string().contains("different cohort"), "{e}");

    let o = bin(&["compare", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
    let o = bin(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed["summary"][1]["best"], true);
}
