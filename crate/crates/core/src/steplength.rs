//! Steplength rules and the projected sufficient-decrease line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

const TINY: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BbSteps {
    pub bb1: Option<f64>,
    pub bb2: Option<f64>,
}

/// Barzilai-Borwein steps `‖s‖²/s'y` and `s'y/‖y‖²`. A step is `None` when
/// its denominator is negligible or its value is not positive.
pub fn bb_steps(s: &[f64], y: &[f64]) -> BbSteps {
    let sy = dot(s, y);
    let ss = dot(s, s);
    let yy = dot(y, y);
    let positive = |v: f64| if v.is_finite() && v > 0.0 { Some(v) } else { None };
    let bb1 = if sy.abs() <= TINY { None } else { positive(ss / sy) };
    let bb2 = if yy <= TINY { None } else { positive(sy / yy) };
    BbSteps { bb1, bb2 }
}

/// Window of recent BB2 values for the ABBmin rule.
#[derive(Clone, Debug)]
pub struct SteplengthMemory {
    memory: usize,
    bb2_history: VecDeque<f64>,
}

impl SteplengthMemory {
    /// `memory` is the look-back `q`; the window holds `q + 1` values.
    pub fn new(memory: usize) -> Self {
        Self { memory, bb2_history: VecDeque::with_capacity(memory + 1) }
    }

    /// Forget the window (start of a new identification phase).
    pub fn reset(&mut self) {
        self.bb2_history.clear();
    }

    pub fn push_bb2(&mut self, bb2: f64) {
        debug_assert!(bb2 > 0.0);
        if self.bb2_history.len() == self.memory + 1 {
            self.bb2_history.pop_front();
        }
        self.bb2_history.push_back(bb2);
    }

    pub fn min_bb2(&self) -> Option<f64> {
        self.bb2_history.iter().copied().reduce(f64::min)
    }

    pub fn len(&self) -> usize {
        self.bb2_history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bb2_history.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AbbminChoice {
    Bb1(f64),
    MinBb2(f64),
}

impl AbbminChoice {
    pub fn value(self) -> f64 {
        match self {
            AbbminChoice::Bb1(v) | AbbminChoice::MinBb2(v) => v,
        }
    }
}

/// ABBmin: records the current BB2 value, then returns the windowed minimum
/// of BB2 when `bb2/bb1 < tau`, else BB1. `None` if either step is undefined.
pub fn abbmin(mem: &mut SteplengthMemory, steps: BbSteps, tau: f64) -> Option<AbbminChoice> {
    let (bb1, bb2) = (steps.bb1?, steps.bb2?);
    mem.push_bb2(bb2);
    if bb2 / bb1 < tau {
        Some(AbbminChoice::MinBb2(mem.min_bb2().unwrap_or(bb2)))
    } else {
        Some(AbbminChoice::Bb1(bb1))
    }
}

/// `g'g / g'Hg`.
pub fn cauchy_step(g: &[f64], hg: &[f64]) -> Result<f64> {
    let curv = dot(g, hg);
    if !(curv > 0.0) {
        return Err(Error::NonpositiveCurvature(curv));
    }
    Ok(dot(g, g) / curv)
}

/// Yuan steplength from two consecutive Cauchy steps and gradient norms.
pub fn yuan_step(alpha_prev: f64, alpha_curr: f64, gnorm_prev: f64, gnorm_curr: f64) -> f64 {
    let inv_prev = 1.0 / alpha_prev;
    let inv_curr = 1.0 / alpha_curr;
    let ratio = gnorm_curr / (alpha_prev * gnorm_prev);
    let root = ((inv_prev - inv_curr).powi(2) + 4.0 * ratio * ratio).sqrt();
    2.0 / (root + inv_prev + inv_curr)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdcStep {
    Cauchy,
    /// Use the Yuan step computed at iteration `t` (computed now if `t == k`).
    Yuan { frozen_at: usize },
}

/// `kbar` Cauchy steps followed by `l` steps with a frozen Yuan steplength.
pub fn sdc_schedule(k: usize, kbar: usize, l: usize) -> Result<SdcStep> {
    if kbar < 2 || l < 1 {
        return Err(Error::InvalidConfig(format!("SDC needs kbar >= 2 and l >= 1, got {kbar}, {l}")));
    }
    let period = kbar + l;
    let r = k % period;
    if r < kbar {
        Ok(SdcStep::Cauchy)
    } else {
        Ok(SdcStep::Yuan { frozen_at: k - (r - kbar) })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchParams {
    pub mu1: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub gamma5: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            mu1: 1e-4,
            gamma1: 1e12,
            gamma2: 1e-12,
            gamma3: 1e-2,
            gamma4: 0.5,
            gamma5: 0.95,
            max_backtracks: 50,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu1 > 0.0
            && self.mu1 < 1.0
            && self.gamma2 > 0.0
            && self.gamma2 < self.gamma1
            && self.gamma3 > 0.0
            && self.gamma4 > 0.0
            && self.gamma4 < self.gamma5
            && self.gamma5 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("line search parameters out of range: {self:?}")))
        }
    }

    pub fn clamp_initial(&self, alpha0: f64) -> f64 {
        alpha0.clamp(self.gamma2, self.gamma1)
    }
}

/// Minimizer of the quadratic through `psi(0) = f0`, `psi'(0) = slope` and
/// `psi(1) = f1`, as a fraction of the segment; `None` when the fit is not convex.
pub fn quadratic_minimizer(f0: f64, slope: f64, f1: f64) -> Option<f64> {
    let curv = f1 - f0 - slope;
    if curv > 0.0 && slope < 0.0 {
        Some(-slope / (2.0 * curv))
    } else {
        None
    }
}

/// An evaluated trial point of a line search.
#[derive(Clone, Debug)]
pub struct Trial {
    pub x: Vec<f64>,
    /// `H x` at the trial point.
    pub hx: Vec<f64>,
    pub f: f64,
    /// `f - f0` relative to the start of the search.
    pub df: f64,
}

impl Trial {
    /// Trial point of a quadratic reached from `(x0, hx0, f0)` with gradient
    /// `g`; the change in `f` is `g's + s'(Hx - Hx0)/2` with `s = x - x0`,
    /// which avoids cancellation between nearly equal objective values.
    pub fn along(x0: &[f64], hx0: &[f64], f0: f64, g: &[f64], x: Vec<f64>, hx: Vec<f64>) -> Self {
        let mut lin = 0.0;
        let mut quad = 0.0;
        for i in 0..x.len() {
            let s = x[i] - x0[i];
            lin += g[i] * s;
            quad += s * (hx[i] - hx0[i]);
        }
        let df = lin + 0.5 * quad;
        Self { x, hx, f: f0 + df, df }
    }
}

#[derive(Clone, Debug)]
pub struct LineSearchOutcome {
    pub trial: Trial,
    pub alpha: f64,
    pub trials: usize,
    /// False when the backtrack limit was hit; `trial` is then the best
    /// point seen, which may not decrease `f`.
    pub accepted: bool,
}

/// Backtracking search accepting the first trial with
/// `f(x_a) - f0 <= mu1 g'(x_a - x)`, judged on `Trial::df`. `eval(alpha)` returns the trial point
/// for `alpha` (typically a projection of `x - alpha g` or `x + alpha d`).
/// Later trials come from safeguarded quadratic interpolation, always in
/// `[gamma4 alpha, gamma5 alpha]`.
pub fn sufficient_decrease_search<F>(
    x: &[f64],
    g: &[f64],
    alpha0: f64,
    params: &LineSearchParams,
    mut eval: F,
) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Result<Trial>,
{
    let mut alpha = alpha0;
    let mut best: Option<(Trial, f64)> = None;
    for k in 0..=params.max_backtracks {
        let trial = eval(alpha)?;
        let d: Vec<f64> = trial.x.iter().zip(x).map(|(a, b)| a - b).collect();
        let slope = dot(g, &d);
        if trial.df <= params.mu1 * slope {
            return Ok(LineSearchOutcome { trial, alpha, trials: k + 1, accepted: true });
        }
        let next = match quadratic_minimizer(0.0, slope, trial.df) {
            Some(t) => (t * alpha).clamp(params.gamma4 * alpha, params.gamma5 * alpha),
            None => params.gamma4 * alpha,
        };
        debug_assert!(next >= params.gamma4 * alpha * (1.0 - 1e-15) && next <= params.gamma5 * alpha);
        if best.as_ref().is_none_or(|(b, _)| trial.df < b.df) {
            best = Some((trial, alpha));
        }
        alpha = next;
    }
    let (trial, alpha) = best.expect("at least one trial is evaluated");
    Ok(LineSearchOutcome { trial, alpha, trials: params.max_backtracks + 1, accepted: false })
}
