//! One Metropolis-within-Gibbs sweep over the joint posterior.
//!
//! Blocks, in sweep order:
//! 1. population intercept(s) and slope, moved jointly with the matching
//!    random effects so patient-level lines stay fixed (only prior terms
//!    change, O(1) per proposal);
//! 2. `ln sigma`, `ln omega0`, `ln omega1`;
//! 3. each patient's `(b0, b1)`, with a proposal shaped by the conditional
//!    longitudinal precision;
//! 4. the survival block `(ln kappa, phi, association)` with an adaptive
//!    covariance learned during burn-in;
//! 5. exchangeable hyperparameters `alpha` and `ln tau`.
//!
//! Per-patient residual sums of squares and survival contributions are
//! cached so each proposal only re-evaluates the terms it touches.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use super::metropolis::{accept, AdaptiveScale, TARGET_BLOCK, TARGET_SCALAR};
use crate::error::{Error, Result};
use crate::model::{
    AssociationFunctional, AssociationStructure, CapCounter, JointModel, ParameterState, PatientHazard,
    ShapeTable,
};
use crate::model::likelihood::{half_normal_logpdf, normal_logpdf};

/// Update blocks reported in acceptance summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Intercept,
    Slope,
    Sigma,
    Omega0,
    Omega1,
    RandomEffects,
    Survival,
    Alpha,
    Tau,
}

impl Block {
    pub const ALL: [Block; 9] = [
        Block::Intercept,
        Block::Slope,
        Block::Sigma,
        Block::Omega0,
        Block::Omega1,
        Block::RandomEffects,
        Block::Survival,
        Block::Alpha,
        Block::Tau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Intercept => "beta0",
            Block::Slope => "beta1",
            Block::Sigma => "sigma",
            Block::Omega0 => "omega0",
            Block::Omega1 => "omega1",
            Block::RandomEffects => "random_effects",
            Block::Survival => "survival",
            Block::Alpha => "alpha",
            Block::Tau => "tau",
        }
    }
}

/// Accepted / attempted proposal counts per block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub accepted: [u64; 9],
    pub attempted: [u64; 9],
}

impl Tally {
    #[inline]
    fn record(&mut self, b: Block, ok: bool) {
        self.attempted[b as usize] += 1;
        self.accepted[b as usize] += ok as u64;
    }

    pub fn rate(&self, b: Block) -> Option<f64> {
        let n = self.attempted[b as usize];
        (n > 0).then(|| self.accepted[b as usize] as f64 / n as f64)
    }
}

/// Proposal scales for every block.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub intercept: Vec<AdaptiveScale>,
    pub slope: AdaptiveScale,
    pub log_sigma: AdaptiveScale,
    pub log_omega0: AdaptiveScale,
    pub log_omega1: AdaptiveScale,
    pub patients: Vec<AdaptiveScale>,
    pub survival: AdaptiveScale,
    pub alpha: AdaptiveScale,
    pub log_tau: AdaptiveScale,
}

impl Tuning {
    fn for_each(&mut self, mut f: impl FnMut(&mut AdaptiveScale)) {
        self.intercept.iter_mut().for_each(&mut f);
        f(&mut self.slope);
        f(&mut self.log_sigma);
        f(&mut self.log_omega0);
        f(&mut self.log_omega1);
        self.patients.iter_mut().for_each(&mut f);
        f(&mut self.survival);
        f(&mut self.alpha);
        f(&mut self.log_tau);
    }

    /// Every proposal scale, in a fixed order.
    pub fn snapshot(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.intercept.iter().map(AdaptiveScale::scale).collect();
        v.extend([
            self.slope.scale(),
            self.log_sigma.scale(),
            self.log_omega0.scale(),
            self.log_omega1.scale(),
        ]);
        v.extend(self.patients.iter().map(AdaptiveScale::scale));
        v.extend([self.survival.scale(), self.alpha.scale(), self.log_tau.scale()]);
        v
    }
}

/// Running covariance of the survival block (adaptive Metropolis).
#[derive(Debug, Clone)]
struct AdaptiveCovariance {
    dim: usize,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    /// Lower-triangular proposal factor, row-major.
    factor: Vec<f64>,
    learned: bool,
}

impl AdaptiveCovariance {
    fn diagonal(sds: &[f64]) -> Self {
        let dim = sds.len();
        let mut factor = vec![0.0; dim * dim];
        for (i, &s) in sds.iter().enumerate() {
            factor[i * dim + i] = s;
        }
        Self {
            dim,
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
            factor,
            learned: false,
        }
    }

    fn reset_moments(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.m2.iter_mut().for_each(|m| *m = 0.0);
    }

    fn observe(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        let d = self.dim;
        let mut delta = [0.0; 64];
        for i in 0..d {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..d {
            let di_new = x[i] - self.mean[i];
            for j in 0..=i {
                self.m2[i * d + j] += di_new * delta[j];
            }
        }
    }

    /// Replace the proposal factor by the scaled Cholesky factor of the
    /// running covariance. Returns false (keeping the old factor) if there
    /// are too few samples or the estimate is not positive definite.
    fn refresh(&mut self) -> bool {
        let d = self.dim;
        if self.n < 10 * d + 10 {
            return false;
        }
        let scale = 2.38 * 2.38 / d as f64;
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let v = self.m2[i * d + j] / (self.n as f64 - 1.0) * scale;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        for i in 0..d {
            cov[(i, i)] += 1e-8 * cov[(i, i)] + 1e-16;
        }
        match cov.cholesky() {
            Some(c) => {
                let l = c.l();
                for i in 0..d {
                    for j in 0..d {
                        self.factor[i * d + j] = l[(i, j)];
                    }
                }
                self.learned = true;
                true
            }
            None => false,
        }
    }

    fn propose<R: Rng + ?Sized>(&self, x: &[f64], scale: f64, rng: &mut R, out: &mut [f64]) {
        let d = self.dim;
        let mut z = [0.0; 64];
        for zi in z.iter_mut().take(d) {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.factor[i * d + j] * z[j];
            }
            out[i] = x[i] + scale * s;
        }
    }
}

/// Largest survival block the fixed-size scratch arrays support.
const MAX_BLOCK: usize = 64;

/// Mutable sampler state for one chain.
#[derive(Debug, Clone)]
pub struct JointSampler<'m, 'a> {
    model: &'m JointModel<'a>,
    state: ParameterState,
    table: ShapeTable,
    rss: Vec<f64>,
    surv: Vec<f64>,
    rss_prop: Vec<f64>,
    surv_prop: Vec<f64>,
    group_members: Vec<Vec<usize>>,
    tuning: Tuning,
    am: AdaptiveCovariance,
    tally: Tally,
    caps: CapCounter,
    sweep: usize,
    adapting: bool,
    burn_in: usize,
}

impl<'m, 'a> JointSampler<'m, 'a> {
    /// `burn_in` sets the adaptation schedule of the survival-block
    /// covariance; adaptation stops at [`JointSampler::freeze`].
    pub fn new(model: &'m JointModel<'a>, state: ParameterState, burn_in: usize) -> Result<Self> {
        let spec = model.spec;
        let n = model.n_patients();
        let k = spec.n_groups();
        let lp = model.log_posterior(&state)?;
        if !lp.is_finite() {
            return Err(Error::InvalidState("initial state has non-finite log posterior".into()));
        }
        let table = ShapeTable::new(&model.quad, state.survival.shape);
        let mut caps = CapCounter::default();
        let mut rss = Vec::with_capacity(n);
        let mut surv = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = state.longitudinal.patient_line(i, model.patients[i].group)?;
            rss.push(model.patients[i].rss(a, b));
            surv.push(model.patient_survival(i, &model.patient_hazard(&state, i), &table, &mut caps));
        }
        let mut group_members = vec![Vec::new(); k];
        for (i, p) in model.patients.iter().enumerate() {
            group_members[p.group].push(i);
        }

        let alpha_sd = match spec.functional {
            AssociationFunctional::CurrentValue => 0.002,
            AssociationFunctional::Slope => 0.05,
        };
        let mut sds = vec![0.05, 0.1];
        sds.extend(core::iter::repeat(0.2).take(k - 1));
        if !spec.priors.fix_association_zero {
            match spec.structure {
                AssociationStructure::Common => sds.push(alpha_sd),
                _ => sds.extend(core::iter::repeat(1.5 * alpha_sd).take(k)),
            }
        }
        if sds.len() > MAX_BLOCK {
            return Err(Error::InvalidSpec(alloc::format!(
                "survival block of dimension {} exceeds the supported {MAX_BLOCK}",
                sds.len()
            )));
        }
        let patient_target = if spec.random_slope { TARGET_BLOCK } else { TARGET_SCALAR };
        let tuning = Tuning {
            intercept: vec![AdaptiveScale::new(1.0, TARGET_SCALAR); spec.n_intercepts()],
            slope: AdaptiveScale::new(0.05, TARGET_SCALAR),
            log_sigma: AdaptiveScale::new(0.05, TARGET_SCALAR),
            log_omega0: AdaptiveScale::new(0.1, TARGET_SCALAR),
            log_omega1: AdaptiveScale::new(0.1, TARGET_SCALAR),
            patients: vec![AdaptiveScale::new(1.5, patient_target); n],
            survival: AdaptiveScale::new(1.0, TARGET_BLOCK),
            alpha: AdaptiveScale::new(alpha_sd, TARGET_SCALAR),
            log_tau: AdaptiveScale::new(0.5, TARGET_SCALAR),
        };
        let s = Self {
            model,
            state,
            table,
            rss_prop: rss.clone(),
            surv_prop: surv.clone(),
            rss,
            surv,
            group_members,
            tuning,
            am: AdaptiveCovariance::diagonal(&sds),
            tally: Tally::default(),
            caps,
            sweep: 0,
            adapting: true,
            burn_in,
        };
        Ok(s)
    }

    pub fn state(&self) -> &ParameterState {
        &self.state
    }

    pub fn tuning(&self) -> &Tuning {
        &self.tuning
    }

    pub fn tally(&self) -> &Tally {
        &self.tally
    }

    pub fn cap_events(&self) -> u64 {
        self.caps.0
    }

    pub fn sweeps(&self) -> usize {
        self.sweep
    }

    pub fn is_adapting(&self) -> bool {
        self.adapting
    }

    /// Stop adapting: every proposal scale and the survival-block covariance
    /// are fixed from here on, and acceptance counts restart.
    pub fn freeze(&mut self) {
        self.adapting = false;
        self.tuning.for_each(|s| s.frozen = true);
        self.tally = Tally::default();
    }

    /// Proposal scales followed by the survival-block proposal factor.
    pub fn proposal_snapshot(&self) -> Vec<f64> {
        let mut v = self.tuning.snapshot();
        v.extend_from_slice(&self.am.factor);
        v
    }

    /// Run one full sweep.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.sweep += 1;
        for g in 0..self.state.longitudinal.beta0.len() {
            self.update_intercept(g, rng);
        }
        if self.model.spec.random_slope {
            self.update_slope_shift(rng);
        } else {
            self.update_slope_full(rng);
        }
        self.update_sigma(rng);
        self.update_omega(0, rng);
        if self.model.spec.random_slope {
            self.update_omega(1, rng);
        }
        for i in 0..self.model.n_patients() {
            self.update_patient(i, rng);
        }
        self.update_survival(rng);
        if self.model.spec.structure == AssociationStructure::Exchangeable {
            if !self.model.spec.priors.fix_association_zero {
                self.update_alpha_hyper(rng);
            }
            self.update_tau(rng);
        }
        let total: f64 = self.surv.iter().sum::<f64>() + self.rss.iter().sum::<f64>();
        if !total.is_finite() {
            return Err(Error::NonFinitePosterior {
                chain: 0,
                sweep: self.sweep,
                state: alloc::format!("{:?}", self.state),
            });
        }
        Ok(())
    }

    #[inline]
    fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn update_intercept<R: Rng + ?Sized>(&mut self, g: usize, rng: &mut R) {
        let spec = self.model.spec;
        let l = &self.state.longitudinal;
        let delta = self.tuning.intercept[g].scale() * Self::normal(rng);
        let proposed = l.beta0[g] + delta;
        let shared = l.beta0.len() == 1;
        let (sum, count) = if shared {
            (l.random_effects.iter().map(|b| b[0]).sum::<f64>(), l.random_effects.len())
        } else {
            let m = &self.group_members[g];
            (m.iter().map(|&i| l.random_effects[i][0]).sum::<f64>(), m.len())
        };
        let log_ratio = if spec.priors.beta0.contains(proposed) {
            -(count as f64 * delta * delta - 2.0 * delta * sum) / (2.0 * l.omega0 * l.omega0)
        } else {
            f64::NEG_INFINITY
        };
        let ok = accept(log_ratio, rng);
        if ok {
            let l = &mut self.state.longitudinal;
            l.beta0[g] = proposed;
            if shared {
                l.random_effects.iter_mut().for_each(|b| b[0] -= delta);
            } else {
                for &i in &self.group_members[g] {
                    l.random_effects[i][0] -= delta;
                }
            }
        }
        self.tuning.intercept[g].update(ok, self.sweep);
        self.tally.record(Block::Intercept, ok);
    }

    fn update_slope_shift<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let l = &self.state.longitudinal;
        let delta = self.tuning.slope.scale() * Self::normal(rng);
        let proposed = l.beta1 + delta;
        let sum: f64 = l.random_effects.iter().map(|b| b[1]).sum();
        let n = l.random_effects.len() as f64;
        let log_ratio = if self.model.spec.slope_prior().contains(proposed) {
            -(n * delta * delta - 2.0 * delta * sum) / (2.0 * l.omega1 * l.omega1)
        } else {
            f64::NEG_INFINITY
        };
        let ok = accept(log_ratio, rng);
        if ok {
            let l = &mut self.state.longitudinal;
            l.beta1 = proposed;
            l.random_effects.iter_mut().for_each(|b| b[1] -= delta);
        }
        self.tuning.slope.update(ok, self.sweep);
        self.tally.record(Block::Slope, ok);
    }

    /// Without a random slope the population slope moves every line.
    fn update_slope_full<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let m = self.model;
        let proposed = self.state.longitudinal.beta1 + self.tuning.slope.scale() * Self::normal(rng);
        let mut ok = false;
        if m.spec.slope_prior().contains(proposed) {
            let l = &self.state.longitudinal;
            let inv2s2 = 0.5 / (l.sigma * l.sigma);
            let mut cur = 0.0;
            let mut new = 0.0;
            for i in 0..m.n_patients() {
                let g = m.patients[i].group;
                let a = l.intercept(g) + l.random_effects[i][0];
                self.rss_prop[i] = m.patients[i].rss(a, proposed);
                let h = PatientHazard::new(
                    self.table.kappa,
                    self.state.survival.log_scale(g),
                    self.state.association.coefficient(g),
                    m.spec.functional,
                    a,
                    proposed,
                );
                self.surv_prop[i] = m.patient_survival(i, &h, &self.table, &mut self.caps);
                cur += -self.rss[i] * inv2s2 + self.surv[i];
                new += -self.rss_prop[i] * inv2s2 + self.surv_prop[i];
            }
            ok = accept(new - cur, rng);
            if ok {
                self.state.longitudinal.beta1 = proposed;
                core::mem::swap(&mut self.rss, &mut self.rss_prop);
                core::mem::swap(&mut self.surv, &mut self.surv_prop);
            }
        }
        self.tuning.slope.update(ok, self.sweep);
        self.tally.record(Block::Slope, ok);
    }

    fn update_sigma<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let prior = self.model.spec.priors.sigma;
        let n = self.model.n_obs_total;
        let rss: f64 = self.rss.iter().sum();
        let logp = |ls: f64| {
            let s = ls.exp();
            if !prior.contains(s) {
                return f64::NEG_INFINITY;
            }
            -n * ls - 0.5 * rss / (s * s) + ls
        };
        let cur = self.state.longitudinal.sigma.ln();
        let prop = cur + self.tuning.log_sigma.scale() * Self::normal(rng);
        let ok = accept(logp(prop) - logp(cur), rng);
        if ok {
            self.state.longitudinal.sigma = prop.exp();
        }
        self.tuning.log_sigma.update(ok, self.sweep);
        self.tally.record(Block::Sigma, ok);
    }

    fn update_omega<R: Rng + ?Sized>(&mut self, which: usize, rng: &mut R) {
        let prior = self.model.spec.priors.omega;
        let l = &self.state.longitudinal;
        let n = l.random_effects.len() as f64;
        let ss: f64 = l.random_effects.iter().map(|b| b[which] * b[which]).sum();
        let logp = |lw: f64| {
            let w = lw.exp();
            if !prior.contains(w) {
                return f64::NEG_INFINITY;
            }
            -n * lw - 0.5 * ss / (w * w) + lw
        };
        let (cur_w, tuning, block) = if which == 0 {
            (l.omega0, &mut self.tuning.log_omega0, Block::Omega0)
        } else {
            (l.omega1, &mut self.tuning.log_omega1, Block::Omega1)
        };
        let cur = cur_w.ln();
        let prop = cur + tuning.scale() * Self::normal(rng);
        let ok = accept(logp(prop) - logp(cur), rng);
        tuning.update(ok, self.sweep);
        if ok {
            let w = prop.exp();
            if which == 0 {
                self.state.longitudinal.omega0 = w;
            } else {
                self.state.longitudinal.omega1 = w;
            }
        }
        self.tally.record(block, ok);
    }

    fn update_patient<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let m = self.model;
        let d = &m.patients[i];
        let g = d.group;
        let l = &self.state.longitudinal;
        let inv_s2 = 1.0 / (l.sigma * l.sigma);
        let inv_w0 = 1.0 / (l.omega0 * l.omega0);
        let b = l.random_effects[i];
        let s = self.tuning.patients[i].scale();
        let random_slope = m.spec.random_slope;
        let proposed = if random_slope {
            let inv_w1 = 1.0 / (l.omega1 * l.omega1);
            // Proposal covariance: inverse of the conditional longitudinal
            // precision of (b0, b1).
            let p11 = d.n_obs * inv_s2 + inv_w0;
            let p12 = d.sum_t * inv_s2;
            let p22 = d.sum_tt * inv_s2 + inv_w1;
            let det = p11 * p22 - p12 * p12;
            let (c11, c12, c22) = (p22 / det, -p12 / det, p11 / det);
            let l11 = c11.sqrt();
            let l21 = c12 / l11;
            let l22 = (c22 - l21 * l21).max(0.0).sqrt();
            let z1 = Self::normal(rng);
            let z2 = Self::normal(rng);
            [b[0] + s * l11 * z1, b[1] + s * (l21 * z1 + l22 * z2)]
        } else {
            let sd = (1.0 / (d.n_obs * inv_s2 + inv_w0)).sqrt();
            [b[0] + s * sd * Self::normal(rng), 0.0]
        };
        let a0 = l.intercept(g);
        let a1 = l.beta1;
        let rss_new = d.rss(a0 + proposed[0], a1 + proposed[1]);
        let h = PatientHazard::new(
            self.table.kappa,
            self.state.survival.log_scale(g),
            self.state.association.coefficient(g),
            m.spec.functional,
            a0 + proposed[0],
            a1 + proposed[1],
        );
        let surv_new = m.patient_survival(i, &h, &self.table, &mut self.caps);
        let re_prior = |x: [f64; 2]| {
            let mut v = -0.5 * x[0] * x[0] * inv_w0;
            if random_slope {
                v -= 0.5 * x[1] * x[1] / (l.omega1 * l.omega1);
            }
            v
        };
        let cur = -0.5 * self.rss[i] * inv_s2 + self.surv[i] + re_prior(b);
        let new = -0.5 * rss_new * inv_s2 + surv_new + re_prior(proposed);
        let ok = accept(new - cur, rng);
        if ok {
            self.state.longitudinal.random_effects[i] = proposed;
            self.rss[i] = rss_new;
            self.surv[i] = surv_new;
        }
        self.tuning.patients[i].update(ok, self.sweep);
        self.tally.record(Block::RandomEffects, ok);
    }

    /// Pack `(ln kappa, phi, association)` into `x`; returns the dimension.
    fn pack_survival(&self, x: &mut [f64]) -> usize {
        let s = &self.state;
        let mut n = 0;
        x[n] = s.survival.shape.ln();
        n += 1;
        for &p in &s.survival.phi {
            x[n] = p;
            n += 1;
        }
        if !self.model.spec.priors.fix_association_zero {
            match s.association.structure {
                AssociationStructure::Common => {
                    x[n] = s.association.alpha;
                    n += 1;
                }
                _ => {
                    for &a in &s.association.alpha_k {
                        x[n] = a;
                        n += 1;
                    }
                }
            }
        }
        n
    }

    /// Log prior of the survival block (with the `ln kappa` Jacobian) at `x`.
    fn survival_prior(&self, x: &[f64]) -> f64 {
        let p = &self.model.spec.priors;
        let k = self.model.spec.n_groups();
        let ln_kappa = x[0];
        let kappa = ln_kappa.exp();
        if !(kappa > 0.0) || !kappa.is_finite() {
            return f64::NEG_INFINITY;
        }
        let mut v = -p.shape_rate * kappa + ln_kappa;
        for &phi in &x[1..1 + k] {
            v += normal_logpdf(phi, 0.0, p.coefficient_sd);
        }
        if p.fix_association_zero {
            return v;
        }
        let a = &self.state.association;
        match a.structure {
            AssociationStructure::Common => v += normal_logpdf(x[1 + k], 0.0, p.association_sd),
            AssociationStructure::Exchangeable => {
                for &ak in &x[1 + k..1 + 2 * k] {
                    v += normal_logpdf(ak, a.alpha, a.tau);
                }
            }
            AssociationStructure::Independent => {
                for &ak in &x[1 + k..1 + 2 * k] {
                    v += normal_logpdf(ak, 0.0, p.association_sd);
                }
            }
        }
        v
    }

    fn update_survival<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let m = self.model;
        let k = m.spec.n_groups();
        let mut x = [0.0; MAX_BLOCK];
        let dim = self.pack_survival(&mut x);
        let mut y = [0.0; MAX_BLOCK];
        self.am
            .propose(&x[..dim], self.tuning.survival.scale(), rng, &mut y[..dim]);

        let prior_new = self.survival_prior(&y[..dim]);
        let mut ok = false;
        if prior_new.is_finite() {
            let prior_cur = self.survival_prior(&x[..dim]);
            let kappa = y[0].exp();
            let table = ShapeTable::new(&m.quad, kappa);
            let fixed_zero = m.spec.priors.fix_association_zero;
            let coef = |g: usize| -> f64 {
                if fixed_zero {
                    0.0
                } else if m.spec.structure == AssociationStructure::Common {
                    y[1 + k]
                } else {
                    y[1 + k + g]
                }
            };
            let log_scale = |g: usize| if g == 0 { y[1] } else { y[1] + y[1 + g] };
            let l = &self.state.longitudinal;
            let mut new = 0.0;
            for i in 0..m.n_patients() {
                let g = m.patients[i].group;
                let b = l.random_effects[i];
                let h = PatientHazard::new(
                    kappa,
                    log_scale(g),
                    coef(g),
                    m.spec.functional,
                    l.intercept(g) + b[0],
                    l.beta1 + b[1],
                );
                let v = m.patient_survival(i, &h, &table, &mut self.caps);
                self.surv_prop[i] = v;
                new += v;
            }
            let cur: f64 = self.surv.iter().sum();
            ok = accept(new + prior_new - cur - prior_cur, rng);
            if ok {
                core::mem::swap(&mut self.surv, &mut self.surv_prop);
                self.table = table;
                let s = &mut self.state;
                s.survival.shape = kappa;
                s.survival.phi.copy_from_slice(&y[1..1 + k]);
                if !fixed_zero {
                    match s.association.structure {
                        AssociationStructure::Common => {
                            s.association.alpha = y[1 + k];
                            s.association.alpha_k.iter_mut().for_each(|a| *a = y[1 + k]);
                        }
                        _ => s.association.alpha_k.copy_from_slice(&y[1 + k..1 + 2 * k]),
                    }
                }
            }
        }
        self.tuning.survival.update(ok, self.sweep);
        self.tally.record(Block::Survival, ok);

        if self.adapting {
            let x_now = if ok { &y[..dim] } else { &x[..dim] };
            self.adapt_covariance(x_now);
        }
    }

    /// Survival-block covariance schedule: moments accumulate from a tenth
    /// of burn-in, restart at half-way to drop the transient, and the
    /// proposal factor is refreshed every 100 sweeps.
    fn adapt_covariance(&mut self, x: &[f64]) {
        let start = (self.burn_in / 10).max(1);
        let restart = self.burn_in / 2;
        if self.sweep < start {
            return;
        }
        if self.sweep == restart && self.am.n > 0 {
            self.am.reset_moments();
        }
        self.am.observe(x);
        if self.sweep % 100 == 0 {
            let first = !self.am.learned;
            if self.am.refresh() && first {
                self.tuning.survival.log_scale = 0.0;
            }
        }
    }

    fn update_alpha_hyper<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let p = &self.model.spec.priors;
        let a = &self.state.association;
        let logp = |alpha: f64| {
            normal_logpdf(alpha, 0.0, p.association_sd)
                + a.alpha_k.iter().map(|&ak| normal_logpdf(ak, alpha, a.tau)).sum::<f64>()
        };
        let prop = a.alpha + self.tuning.alpha.scale() * Self::normal(rng);
        let ok = accept(logp(prop) - logp(a.alpha), rng);
        if ok {
            self.state.association.alpha = prop;
        }
        self.tuning.alpha.update(ok, self.sweep);
        self.tally.record(Block::Alpha, ok);
    }

    fn update_tau<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let p = &self.model.spec.priors;
        let a = &self.state.association;
        let fixed_zero = p.fix_association_zero;
        let logp = |lt: f64| {
            let tau = lt.exp();
            let mut v = half_normal_logpdf(tau, p.tau_scale) + lt;
            if !fixed_zero {
                v += a.alpha_k.iter().map(|&ak| normal_logpdf(ak, a.alpha, tau)).sum::<f64>();
            }
            v
        };
        let cur = a.tau.ln();
        let prop = cur + self.tuning.log_tau.scale() * Self::normal(rng);
        let ok = accept(logp(prop) - logp(cur), rng);
        if ok {
            self.state.association.tau = prop.exp();
        }
        self.tuning.log_tau.update(ok, self.sweep);
        self.tally.record(Block::Tau, ok);
    }

    /// Recompute every cached term from scratch and compare with the caches.
    /// Returns the largest absolute discrepancy (for tests).
    pub fn cache_drift(&self) -> f64 {
        let m = self.model;
        let mut caps = CapCounter::default();
        let table = ShapeTable::new(&m.quad, self.state.survival.shape);
        let mut worst: f64 = 0.0;
        for i in 0..m.n_patients() {
            let g = m.patients[i].group;
            let b = self.state.longitudinal.random_effects[i];
            let a0 = self.state.longitudinal.intercept(g) + b[0];
            let a1 = self.state.longitudinal.beta1 + b[1];
            worst = worst.max((m.patients[i].rss(a0, a1) - self.rss[i]).abs());
            let s = m.patient_survival(i, &m.patient_hazard(&self.state, i), &table, &mut caps);
            worst = worst.max((s - self.surv[i]).abs());
        }
        worst
    }
}
