//! Cohort records, validation, and nonparametric survival summaries.
//!
//! Times are in months throughout. A [`CohortDataset`] joins each patient's
//! survival record with their biomarker (SLD) series and assigns the patient
//! to a tumour group by index into an ordered label set; group 0 is the
//! reference category of the survival regression.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One biomarker measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalRecord {
    pub patient_id: String,
    /// Months since first dose.
    pub time: f64,
    /// Sum of lesion diameters in millimetres.
    pub sld: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub patient_id: String,
    /// Months since first dose to death or censoring.
    pub os_time: f64,
    /// `true` when death was observed.
    pub event: bool,
    pub tumour_group: String,
    /// Optional categorical covariates (age group, ECOG, metastatic status).
    #[serde(default)]
    pub covariates: BTreeMap<String, String>,
}

/// A patient's survival record with their time-ordered biomarker series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub survival: SurvivalRecord,
    /// Index into [`CohortDataset::groups`].
    pub group: usize,
    pub measurements: Vec<LongitudinalRecord>,
}

impl Patient {
    pub fn id(&self) -> &str {
        &self.survival.patient_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TumourGroup {
    pub label: String,
    pub patients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDataset {
    pub patients: Vec<Patient>,
    pub groups: Vec<TumourGroup>,
}

impl CohortDataset {
    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).collect()
    }

    pub fn survival_records(&self) -> Vec<SurvivalRecord> {
        self.patients.iter().map(|p| p.survival.clone()).collect()
    }

    pub fn longitudinal_records(&self) -> Vec<LongitudinalRecord> {
        self.patients
            .iter()
            .flat_map(|p| p.measurements.iter().cloned())
            .collect()
    }

    pub fn n_measurements(&self) -> usize {
        self.patients.iter().map(|p| p.measurements.len()).sum()
    }

    pub fn n_events(&self) -> usize {
        self.patients.iter().filter(|p| p.survival.event).count()
    }

    /// A cohort holding only the listed patients (in the given order), with
    /// the same group label set.
    pub fn subset(&self, indices: &[usize]) -> CohortDataset {
        let patients: Vec<Patient> = indices.iter().map(|&i| self.patients[i].clone()).collect();
        let groups = self
            .groups
            .iter()
            .enumerate()
            .map(|(g, grp)| TumourGroup {
                label: grp.label.clone(),
                patients: patients.iter().filter(|p| p.group == g).count(),
            })
            .collect();
        CohortDataset { patients, groups }
    }
}

/// Checks per-record invariants of a longitudinal table: finite nonnegative
/// time and SLD, and unique `(patient, time)` pairs. Rows are 1-based in
/// errors.
pub fn validate_longitudinal(records: &[LongitudinalRecord]) -> Result<()> {
    let mut seen: BTreeSet<(&str, u64)> = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        let row = i + 1;
        if !r.time.is_finite() || r.time < 0.0 {
            return Err(Error::InvalidLongitudinal {
                row,
                reason: format!("time must be finite and nonnegative, got {}", r.time),
            });
        }
        if !r.sld.is_finite() || r.sld < 0.0 {
            return Err(Error::InvalidLongitudinal {
                row,
                reason: format!("sld must be finite and nonnegative, got {}", r.sld),
            });
        }
        if !seen.insert((r.patient_id.as_str(), r.time.to_bits())) {
            return Err(Error::InvalidLongitudinal {
                row,
                reason: format!(
                    "duplicate measurement for patient `{}` at {} months",
                    r.patient_id, r.time
                ),
            });
        }
    }
    Ok(())
}

pub fn validate_survival(records: &[SurvivalRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        let row = i + 1;
        if !r.os_time.is_finite() || r.os_time <= 0.0 {
            return Err(Error::InvalidSurvival {
                row,
                reason: format!("os_time must be positive, got {}", r.os_time),
            });
        }
        if r.tumour_group.is_empty() {
            return Err(Error::InvalidSurvival {
                row,
                reason: "tumour_group is empty".to_string(),
            });
        }
        if !seen.insert(r.patient_id.as_str()) {
            return Err(Error::InvalidSurvival {
                row,
                reason: format!("duplicate patient `{}`", r.patient_id),
            });
        }
    }
    Ok(())
}

/// Joins biomarker and survival records, with groups ordered by first
/// appearance in the survival records.
pub fn join_cohort(
    long: &[LongitudinalRecord],
    surv: &[SurvivalRecord],
) -> Result<CohortDataset> {
    let mut labels: Vec<String> = Vec::new();
    for r in surv {
        if !labels.contains(&r.tumour_group) {
            labels.push(r.tumour_group.clone());
        }
    }
    join_cohort_with_groups(long, surv, &labels)
}

/// Joins records against a declared tumour-group label set. Every survival
/// record's group must be one of `labels`; groups with no patients are kept
/// with a zero count.
pub fn join_cohort_with_groups(
    long: &[LongitudinalRecord],
    surv: &[SurvivalRecord],
    labels: &[String],
) -> Result<CohortDataset> {
    validate_longitudinal(long)?;
    validate_survival(surv)?;
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty tumour-group label set".to_string()));
    }

    let index: BTreeMap<&str, usize> = surv
        .iter()
        .enumerate()
        .map(|(i, r)| (r.patient_id.as_str(), i))
        .collect();

    let mut series: Vec<Vec<LongitudinalRecord>> = alloc::vec![Vec::new(); surv.len()];
    for r in long {
        match index.get(r.patient_id.as_str()) {
            Some(&i) => series[i].push(r.clone()),
            None => return Err(Error::OrphanPatient(r.patient_id.clone())),
        }
    }

    let mut counts = alloc::vec![0usize; labels.len()];
    let mut patients = Vec::with_capacity(surv.len());
    for (rec, mut measurements) in surv.iter().zip(series) {
        let group = labels
            .iter()
            .position(|l| *l == rec.tumour_group)
            .ok_or_else(|| Error::UnknownGroup(rec.tumour_group.clone()))?;
        if measurements.is_empty() {
            return Err(Error::NoBiomarkerRecords(rec.patient_id.clone()));
        }
        measurements.sort_by(|a, b| a.time.total_cmp(&b.time));
        if let Some(last) = measurements.last() {
            if last.time > rec.os_time {
                return Err(Error::MeasurementAfterExit {
                    patient: rec.patient_id.clone(),
                    time: last.time,
                    os_time: rec.os_time,
                });
            }
        }
        counts[group] += 1;
        patients.push(Patient {
            survival: rec.clone(),
            group,
            measurements,
        });
    }

    let groups = labels
        .iter()
        .zip(counts)
        .map(|(label, patients)| TumourGroup {
            label: label.clone(),
            patients,
        })
        .collect();
    Ok(CohortDataset { patients, groups })
}

/// A right-continuous survival step function.
///
/// Row `j` gives the survival probability on `[time[j], time[j + 1])`. Row 0
/// is always `t = 0` with survival 1. For Kaplan–Meier curves, `at_risk` and
/// `events` are the counts at each distinct observed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    pub time: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Largest observed time (event or censoring) behind the curve.
    pub last_observed: f64,
}

impl StepCurve {
    /// Survival probability at `t` (right-continuous; constant beyond the
    /// last step).
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.time.partition_point(|&x| x <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }
}

/// Product-limit estimator. Deaths are processed before censorings at tied
/// times, so a patient censored at a death time counts as at risk there.
pub fn kaplan_meier(surv: &[SurvivalRecord]) -> Result<StepCurve> {
    if surv.is_empty() {
        return Err(Error::InvalidInput(
            "Kaplan-Meier needs at least one survival record".to_string(),
        ));
    }
    let mut obs: Vec<(f64, bool)> = surv.iter().map(|r| (r.os_time, r.event)).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = obs.len();
    let mut curve = StepCurve {
        time: alloc::vec![0.0],
        survival: alloc::vec![1.0],
        at_risk: alloc::vec![n],
        events: alloc::vec![0],
        last_observed: obs[n - 1].0,
    };

    let mut s = 1.0;
    let mut i = 0;
    while i < n {
        let t = obs[i].0;
        let at_risk = n - i;
        let mut deaths = 0;
        let mut j = i;
        while j < n && obs[j].0 == t {
            if obs[j].1 {
                deaths += 1;
            }
            j += 1;
        }
        s *= 1.0 - deaths as f64 / at_risk as f64;
        curve.time.push(t);
        curve.survival.push(s);
        curve.at_risk.push(at_risk);
        curve.events.push(deaths);
        i = j;
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmstEstimate {
    /// Restricted mean in the curve's time unit (months).
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub horizon: f64,
    /// The horizon lies beyond the last observed time while the curve is
    /// still above zero, so the tail was extrapolated as flat.
    pub truncated: bool,
}

impl RmstEstimate {
    pub fn in_years(&self) -> RmstEstimate {
        let y = crate::MONTHS_PER_YEAR;
        RmstEstimate {
            estimate: self.estimate / y,
            lower: self.lower / y,
            upper: self.upper / y,
            horizon: self.horizon / y,
            truncated: self.truncated,
        }
    }
}

/// Area under a step curve on `[0, horizon]`, with a normal-approximation 95%
/// interval from the Greenwood-based variance of the integrated curve,
/// truncated to `[0, horizon]`.
pub fn observed_rmst(curve: &StepCurve, horizon: f64) -> Result<RmstEstimate> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "RMST horizon must be positive, got {horizon}"
        )));
    }
    // Breakpoints inside (0, horizon].
    let mut knots: Vec<(f64, f64)> = Vec::new(); // (time, survival from that time)
    for (j, &t) in curve.time.iter().enumerate() {
        if t <= horizon {
            knots.push((t, curve.survival[j]));
        }
    }
    let area_from = |start: usize| -> f64 {
        let mut a = 0.0;
        for k in start..knots.len() {
            let end = if k + 1 < knots.len() { knots[k + 1].0 } else { horizon };
            a += knots[k].1 * (end - knots[k].0);
        }
        a
    };
    let estimate = area_from(0);

    let mut var = 0.0;
    for (k, &(t, _)) in knots.iter().enumerate().skip(1) {
        let d = curve.events[k] as f64;
        let n = curve.at_risk[k] as f64;
        if d > 0.0 && n > d && t <= horizon {
            let a = area_from(k);
            var += a * a * d / (n * (n - d));
        }
    }
    let half = 1.959_963_984_540_054 * var.sqrt();
    let s_end = curve.survival_at(horizon);
    Ok(RmstEstimate {
        estimate,
        lower: (estimate - half).max(0.0),
        upper: (estimate + half).min(horizon),
        horizon,
        truncated: horizon > curve.last_observed && s_end > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn srec(id: &str, t: f64, event: bool, group: &str) -> SurvivalRecord {
        SurvivalRecord {
            patient_id: id.to_string(),
            os_time: t,
            event,
            tumour_group: group.to_string(),
            covariates: BTreeMap::new(),
        }
    }

    fn lrec(id: &str, t: f64, y: f64) -> LongitudinalRecord {
        LongitudinalRecord {
            patient_id: id.to_string(),
            time: t,
            sld: y,
        }
    }

    pub(crate) fn five_patient_example() -> Vec<SurvivalRecord> {
        vec![
            srec("A", 1.0, false, "g"),
            srec("B", 2.0, true, "g"),
            srec("C", 3.0, true, "g"),
            srec("D", 4.0, false, "g"),
            srec("E", 5.0, true, "g"),
        ]
    }

    #[test]
    fn km_hand_example() {
        let km = kaplan_meier(&five_patient_example()).unwrap();
        assert_eq!(km.survival_at(0.0), 1.0);
        assert_eq!(km.survival_at(1.9), 1.0);
        assert_eq!(km.survival_at(2.0), 0.75);
        assert_eq!(km.survival_at(2.9), 0.75);
        assert_eq!(km.survival_at(3.0), 0.5);
        assert_eq!(km.survival_at(4.5), 0.5);
        assert_eq!(km.survival_at(5.0), 0.0);
        assert_eq!(km.at_risk, vec![5, 5, 4, 3, 2, 1]);
        assert_eq!(km.events, vec![0, 0, 1, 1, 0, 1]);
    }

    #[test]
    fn km_all_censored_is_flat() {
        let recs = vec![srec("A", 1.0, false, "g"), srec("B", 3.0, false, "g")];
        let km = kaplan_meier(&recs).unwrap();
        assert!(km.survival.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn km_single_death() {
        let km = kaplan_meier(&[srec("A", 1.0, true, "g")]).unwrap();
        assert_eq!(km.survival_at(0.99), 1.0);
        assert_eq!(km.survival_at(1.0), 0.0);
    }

    #[test]
    fn km_deaths_before_censorings_at_ties() {
        // Death and censoring both at t = 2: the censored subject is at risk.
        let recs = vec![
            srec("A", 2.0, true, "g"),
            srec("B", 2.0, false, "g"),
            srec("C", 3.0, true, "g"),
        ];
        let km = kaplan_meier(&recs).unwrap();
        assert!((km.survival_at(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.survival_at(3.0), 0.0);
    }

    #[test]
    fn km_empty_is_error() {
        assert!(kaplan_meier(&[]).is_err());
    }

    #[test]
    fn rmst_hand_example() {
        let km = kaplan_meier(&five_patient_example()).unwrap();
        let r = observed_rmst(&km, 5.0).unwrap();
        assert_eq!(r.estimate, 3.75);
        assert!(r.lower <= r.estimate && r.estimate <= r.upper);
        assert!(!r.truncated);
    }

    #[test]
    fn rmst_flat_curve_equals_horizon() {
        let recs = vec![srec("A", 70.0, false, "g"), srec("B", 80.0, false, "g")];
        let km = kaplan_meier(&recs).unwrap();
        let r = observed_rmst(&km, 60.0).unwrap();
        assert_eq!(r.estimate, 60.0);
        assert_eq!(r.in_years().estimate, 5.0);
    }

    #[test]
    fn rmst_flags_truncation() {
        let recs = vec![srec("A", 10.0, true, "g"), srec("B", 20.0, false, "g")];
        let km = kaplan_meier(&recs).unwrap();
        assert!(observed_rmst(&km, 30.0).unwrap().truncated);
        assert!(!observed_rmst(&km, 15.0).unwrap().truncated);
        assert!(observed_rmst(&km, 0.0).is_err());
    }

    #[test]
    fn join_two_patients() {
        let surv = vec![srec("P1", 10.0, true, "lung"), srec("P2", 12.0, false, "other")];
        let long = vec![lrec("P1", 0.0, 42.0), lrec("P1", 2.0, 35.0), lrec("P2", 0.0, 20.0)];
        let c = join_cohort(&long, &surv).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.patients[0].measurements.len(), 2);
        assert_eq!(c.group_labels(), vec!["lung".to_string(), "other".to_string()]);
    }

    #[test]
    fn join_rejects_orphans_missing_series_and_late_records() {
        let surv = vec![srec("P1", 10.0, true, "lung")];
        assert_eq!(
            join_cohort(&[lrec("P1", 0.0, 1.0), lrec("P9", 0.0, 1.0)], &surv),
            Err(Error::OrphanPatient("P9".to_string()))
        );
        assert_eq!(
            join_cohort(&[], &surv),
            Err(Error::NoBiomarkerRecords("P1".to_string()))
        );
        assert!(matches!(
            join_cohort(&[lrec("P1", 12.0, 1.0)], &surv),
            Err(Error::MeasurementAfterExit { .. })
        ));
    }

    #[test]
    fn join_rejects_undeclared_group() {
        let surv = vec![srec("P1", 10.0, true, "lung")];
        let labels = vec!["thyroid".to_string()];
        assert!(matches!(
            join_cohort_with_groups(&[lrec("P1", 0.0, 1.0)], &surv, &labels),
            Err(Error::UnknownGroup(_))
        ));
    }

    #[test]
    fn validation_errors_name_rows() {
        let recs = vec![lrec("P1", 0.0, 1.0), lrec("P1", 1.0, -1.0)];
        assert!(matches!(
            validate_longitudinal(&recs),
            Err(Error::InvalidLongitudinal { row: 2, .. })
        ));
        let dup = vec![lrec("P1", 1.0, 1.0), lrec("P1", 1.0, 2.0)];
        assert!(matches!(
            validate_longitudinal(&dup),
            Err(Error::InvalidLongitudinal { row: 2, .. })
        ));
        assert!(matches!(
            validate_survival(&[srec("P1", 0.0, true, "g")]),
            Err(Error::InvalidSurvival { row: 1, .. })
        ));
    }
}
