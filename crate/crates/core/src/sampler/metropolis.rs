//! Random-walk Metropolis building blocks and Robbins–Monro scale adaptation.

#[allow(unused_imports)] // shadowed by std's inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

/// Acceptance rate targeted by one-dimensional updates.
pub const TARGET_SCALAR: f64 = 0.44;
/// Acceptance rate targeted by multivariate block updates.
pub const TARGET_BLOCK: f64 = 0.23;
/// Adaptation gain at sweep `s` is `1 / ceil(s / ADAPT_BATCH)`.
pub const ADAPT_BATCH: usize = 50;

/// Metropolis acceptance test on log densities.
#[inline]
pub fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if !log_ratio.is_finite() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// One Gaussian random-walk update of a scalar. Returns the new value, its
/// log density, and whether the proposal was accepted.
pub fn rw_scalar<R, F>(x: f64, logp_x: f64, sd: f64, mut logp: F, rng: &mut R) -> (f64, f64, bool)
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let z: f64 = rng.sample(StandardNormal);
    let y = x + sd * z;
    let logp_y = logp(y);
    if accept(logp_y - logp_x, rng) {
        (y, logp_y, true)
    } else {
        (x, logp_x, false)
    }
}

/// Robbins–Monro step on a log proposal scale toward `target` acceptance.
/// `sweep` is 1-based.
pub fn adapt(acceptance: f64, log_scale: f64, target: f64, sweep: usize) -> f64 {
    let gain = 1.0 / ((sweep.max(1) + ADAPT_BATCH - 1) / ADAPT_BATCH) as f64;
    log_scale + gain * (acceptance - target)
}

/// A proposal scale that adapts during burn-in and is frozen afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveScale {
    pub log_scale: f64,
    pub target: f64,
    pub frozen: bool,
}

impl AdaptiveScale {
    pub fn new(scale: f64, target: f64) -> Self {
        Self {
            log_scale: scale.ln(),
            target,
            frozen: false,
        }
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    #[inline]
    pub fn update(&mut self, accepted: bool, sweep: usize) {
        if !self.frozen {
            let a = if accepted { 1.0 } else { 0.0 };
            self.log_scale = adapt(a, self.log_scale, self.target, sweep);
        }
    }
}
