//! Identification phase: projected-gradient steps with ABBmin trial
//! steplengths until the active set settles or progress stalls.

use crate::error::Result;
use crate::eval::{Evaluator, Limit, Point};
use crate::linalg::{add_scaled, dot, norm_inf, sub};
use crate::projection::breakpoints;
use crate::steplength::{
    abbmin, bb_steps, sufficient_decrease_search, AbbminChoice, LineSearchParams,
    SteplengthMemory, Trial,
};

/// Steplength state carried across iterations and phases.
#[derive(Clone, Debug)]
pub struct GpMemory {
    pub steps: SteplengthMemory,
    /// The most recent accepted step `s = x+ - x` and `y = H s`.
    pub last_sy: Option<(Vec<f64>, Vec<f64>)>,
}

impl GpMemory {
    pub fn new(memory: usize) -> Self {
        Self { steps: SteplengthMemory::new(memory), last_sy: None }
    }

    pub fn record(&mut self, old: &Point, new: &Point) {
        self.last_sy = Some((sub(&new.x, &old.x), sub(&new.hx, &old.hx)));
    }
}

#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum GpStep {
    /// A new iterate; `line_search_ok` is false when the backtrack limit was
    /// hit and the best trial (still a decrease) was taken.
    Moved { next: Point, decrease: f64, line_search_ok: bool, choice: Option<AbbminChoice> },
    /// The line search failed without decreasing `f`.
    NoProgress,
    /// `x + t d` is feasible for all `t >= 0` and `f` decreases without bound.
    Unbounded(Vec<f64>),
}

/// One projected-gradient iteration from `point`.
pub fn gp_step(
    ev: &mut Evaluator<'_>,
    point: &Point,
    mem: &mut GpMemory,
    tau: f64,
    ls: &LineSearchParams,
) -> Result<GpStep> {
    let g = point.grad();
    let mut choice = None;
    let alpha0 = match &mem.last_sy {
        Some((s, y)) => match abbmin(&mut mem.steps, bb_steps(s, y), tau) {
            Some(c) => {
                choice = Some(c);
                Some(c.value())
            }
            None => None,
        },
        None => {
            let gmax = norm_inf(g);
            if gmax > 0.0 {
                Some(1.0 / gmax)
            } else {
                None
            }
        }
    };
    let alpha0 = match alpha0 {
        Some(a) => a,
        None => {
            let pg = &point.split.proj_grad;
            let hpg = ev.hess_vec(pg);
            let curv = dot(pg, &hpg);
            if curv <= 0.0 {
                let bp = breakpoints(ev.problem(), &point.x, pg)?;
                match bp.max_finite {
                    _ if bp.min.is_infinite() => return Ok(GpStep::Unbounded(pg.clone())),
                    Some(w) => w,
                    None => unreachable!("a finite minimum breakpoint implies a finite maximum"),
                }
            } else {
                -dot(pg, g) / curv
            }
        }
    };
    let alpha0 = ls.clamp_initial(alpha0);
    // Trials stay on the hyperplane, so slopes use the gradient with its
    // q-component removed; rounding along q then cannot mask the decrease.
    let h = &point.split.h;
    let out = sufficient_decrease_search(&point.x, h, alpha0, ls, |alpha| {
        let x = ev.project(&add_scaled(&point.x, -alpha, g))?;
        let hx = ev.hess_vec(&x);
        Ok(Trial::along(&point.x, &point.hx, point.f, h, x, hx))
    })?;
    if !out.accepted && !(out.trial.df < 0.0) {
        return Ok(GpStep::NoProgress);
    }
    let decrease = -out.trial.df;
    let next = ev.point(out.trial.x, out.trial.hx)?;
    mem.record(point, &next);
    Ok(GpStep::Moved { next, decrease, line_search_ok: out.accepted, choice })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase1Params {
    pub line_search: LineSearchParams,
    pub tau: f64,
    pub eta: f64,
    pub max_iter: usize,
}

impl Default for Phase1Params {
    fn default() -> Self {
        Self { line_search: LineSearchParams::default(), tau: 0.2, eta: 0.1, max_iter: 50 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase1Status {
    ActiveSetSettled,
    ProgressStalled,
    Converged,
    Unbounded,
    IterCap,
    Limit(Limit),
    /// The line search hit its backtrack limit.
    LineSearchFailed,
}

#[derive(Debug)]
pub struct Phase1Outcome {
    pub status: Phase1Status,
    pub point: Point,
    pub iterations: usize,
    /// Objective decreases of the accepted steps, in order.
    pub decreases: Vec<f64>,
    pub certificate: Option<Vec<f64>>,
}

/// Runs one identification phase from `point`. The ABBmin window is reset on
/// entry; the last `(s, y)` pair in `mem` is kept.
pub fn run_phase1(
    ev: &mut Evaluator<'_>,
    mut point: Point,
    mem: &mut GpMemory,
    params: &Phase1Params,
    converged: &dyn Fn(&Point) -> bool,
) -> Result<Phase1Outcome> {
    mem.steps.reset();
    let mut decreases: Vec<f64> = Vec::new();
    let mut best_decrease = f64::NEG_INFINITY;
    let mut iterations = 0;
    let finish = |status, point, iterations, decreases, certificate| {
        Ok(Phase1Outcome { status, point, iterations, decreases, certificate })
    };
    loop {
        if converged(&point) {
            return finish(Phase1Status::Converged, point, iterations, decreases, None);
        }
        if let Some(limit) = ev.limit() {
            return finish(Phase1Status::Limit(limit), point, iterations, decreases, None);
        }
        if iterations >= params.max_iter {
            return finish(Phase1Status::IterCap, point, iterations, decreases, None);
        }
        let step = gp_step(ev, &point, mem, params.tau, &params.line_search)?;
        iterations += 1;
        let (next, decrease, ok) = match step {
            GpStep::Moved { next, decrease, line_search_ok, .. } => (next, decrease, line_search_ok),
            GpStep::NoProgress => {
                return finish(Phase1Status::LineSearchFailed, point, iterations, decreases, None)
            }
            GpStep::Unbounded(d) => {
                return finish(Phase1Status::Unbounded, point, iterations, decreases, Some(d))
            }
        };
        debug_assert!(decrease >= 0.0, "projected gradient step increased f by {}", -decrease);
        let settled = next.sets() == point.sets();
        let stalled = best_decrease.is_finite() && decrease <= params.eta * best_decrease;
        best_decrease = best_decrease.max(decrease);
        decreases.push(decrease);
        point = next;
        let status = if converged(&point) {
            Phase1Status::Converged
        } else if !ok {
            Phase1Status::LineSearchFailed
        } else if settled {
            Phase1Status::ActiveSetSettled
        } else if stalled {
            Phase1Status::ProgressStalled
        } else {
            continue;
        };
        return finish(status, point, iterations, decreases, None);
    }
}
