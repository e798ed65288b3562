//! Generic transition kernels: closures for conjugate draws, adaptive scalar
//! random-walk Metropolis and discrete grid sampling.

use super::{Kernel, Phase};
use crate::dist::standard_normal;
use crate::error::{Error, Result};
use crate::random::RandomStream;

/// Scale on which a random-walk proposal is symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Real,
    /// Proposal on `log x`, with the Jacobian added to the target.
    Positive,
}

/// One random-walk Metropolis step.
pub fn metropolis_block<F: Fn(f64) -> f64>(
    log_target: F,
    scale: f64,
    state: f64,
    stream: &mut RandomStream,
    transform: Transform,
) -> Result<(f64, bool)> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("proposal scale must be positive, got {scale}")));
    }
    let current = log_target(state);
    if current == f64::NEG_INFINITY || current.is_nan() {
        return Err(Error::InvalidState(format!("scalar at {state}")));
    }
    metropolis_from(log_target, current, scale, state, stream, transform).map(|(x, _, a)| (x, a))
}

/// As [`metropolis_block`] with the current log-target supplied; returns the
/// log-target at the new state as well.
pub fn metropolis_from<F: Fn(f64) -> f64>(
    log_target: F,
    current: f64,
    scale: f64,
    state: f64,
    stream: &mut RandomStream,
    transform: Transform,
) -> Result<(f64, f64, bool)> {
    let z = standard_normal(stream);
    let (proposal, log_jac) = match transform {
        Transform::Real => (state + scale * z, 0.0),
        Transform::Positive => {
            let y = state * (scale * z).exp();
            (y, scale * z)
        }
    };
    if transform == Transform::Positive && !(proposal > 0.0 && proposal.is_finite()) {
        return Ok((state, current, false));
    }
    let lp = log_target(proposal);
    if lp.is_nan() {
        return Err(Error::InvalidState(format!("log-target is NaN at {proposal}")));
    }
    let log_r = lp - current + log_jac;
    if log_r >= 0.0 || stream.uniform().ln() < log_r {
        Ok((proposal, lp, true))
    } else {
        Ok((state, current, false))
    }
}

/// Robbins–Monro scale adaptation towards a target acceptance rate.
#[derive(Debug, Clone)]
pub struct AdaptiveScale {
    log_scale: f64,
    target: f64,
    warmup_steps: u64,
    proposed: u64,
    accepted: u64,
}

impl AdaptiveScale {
    pub const TARGET: f64 = 0.44;

    pub fn new(initial: f64) -> Self {
        Self {
            log_scale: initial.ln(),
            target: Self::TARGET,
            warmup_steps: 0,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = target;
        self
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Records an outcome; adapts during warmup and counts afterwards.
    pub fn record(&mut self, accepted: bool, phase: Phase) {
        match phase {
            Phase::Warmup => {
                self.warmup_steps += 1;
                let gain = (self.warmup_steps as f64 + 10.0).powf(-0.6);
                let a = if accepted { 1.0 } else { 0.0 };
                self.log_scale = (self.log_scale + gain * (a - self.target) * 2.0).clamp(-30.0, 10.0);
            }
            Phase::Sampling => {
                self.proposed += 1;
                self.accepted += accepted as u64;
            }
        }
    }

    /// Acceptance rate over the sampling phase.
    pub fn acceptance(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// A kernel from a closure that overwrites the parameters it declares.
pub struct FnKernel<F> {
    name: String,
    updates: Vec<usize>,
    f: F,
}

impl<F> FnKernel<F>
where
    F: FnMut(&mut [f64], &mut RandomStream) -> Result<()> + Send,
{
    pub fn new(name: impl Into<String>, updates: Vec<usize>, f: F) -> Self {
        Self {
            name: name.into(),
            updates,
            f,
        }
    }
}

impl<F> Kernel for FnKernel<F>
where
    F: FnMut(&mut [f64], &mut RandomStream) -> Result<()> + Send,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn updates(&self) -> Vec<usize> {
        self.updates.clone()
    }

    fn step(&mut self, state: &mut [f64], stream: &mut RandomStream, _phase: Phase) -> Result<()> {
        (self.f)(state, stream)
    }
}

/// Adaptive random-walk Metropolis on one coordinate; the closure returns the
/// log conditional density of that coordinate given the rest of the state.
pub struct MetropolisKernel<F> {
    name: String,
    index: usize,
    transform: Transform,
    scale: AdaptiveScale,
    log_target: F,
}

impl<F> MetropolisKernel<F>
where
    F: Fn(&[f64], f64) -> f64 + Send,
{
    pub fn new(name: impl Into<String>, index: usize, transform: Transform, initial_scale: f64, log_target: F) -> Self {
        Self {
            name: name.into(),
            index,
            transform,
            scale: AdaptiveScale::new(initial_scale),
            log_target,
        }
    }
}

impl<F> Kernel for MetropolisKernel<F>
where
    F: Fn(&[f64], f64) -> f64 + Send,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn updates(&self) -> Vec<usize> {
        vec![self.index]
    }

    fn step(&mut self, state: &mut [f64], stream: &mut RandomStream, phase: Phase) -> Result<()> {
        let x = state[self.index];
        let lt = &self.log_target;
        let current = lt(state, x);
        if current == f64::NEG_INFINITY || current.is_nan() {
            return Err(Error::InvalidState(self.name.clone()));
        }
        let snapshot: &[f64] = state;
        let (y, _, accepted) =
            metropolis_from(|v| lt(snapshot, v), current, self.scale.scale(), x, stream, self.transform)?;
        state[self.index] = y;
        self.scale.record(accepted, phase);
        Ok(())
    }

    fn acceptance(&self) -> Option<f64> {
        self.scale.acceptance()
    }
}

/// Index drawn with probability proportional to `exp(log_w)`.
pub fn sample_log_weights(log_w: &[f64], stream: &mut RandomStream) -> Option<usize> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let total: f64 = log_w.iter().map(|l| (l - max).exp()).sum();
    let u = stream.uniform() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, l) in log_w.iter().enumerate() {
        let w = (l - max).exp();
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    Some(last)
}

/// Draws a grid point with probability proportional to `exp(log_target)`.
pub fn grid_sample<F: Fn(f64) -> f64>(log_target: F, grid: &[f64], stream: &mut RandomStream) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::Config("grid needs at least 2 points".into()));
    }
    let lw: Vec<f64> = grid.iter().map(|&x| log_target(x)).collect();
    sample_log_weights(&lw, stream).map(|i| grid[i]).ok_or(Error::EmptyGrid {
        lo: grid[0],
        hi: grid[grid.len() - 1],
    })
}
