//! Outer solver loop: identification phases alternating with face
//! minimization phases, and the projected-gradient baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Evaluator, Limit, Point};
use crate::linalg::{add_scaled, norm2, norm_inf};
use crate::model::{Activity, ActiveSets, Counters, Problem};
use crate::phase1::{gp_step, run_phase1, GpMemory, GpStep, Phase1Params, Phase1Status};
use crate::projection::{breakpoints, ProjectionParams};
use crate::reduced::{cg_minimize, sdc_minimize, CgState, InnerStatus, ReducedProblem, SdcState};
use crate::stationarity::{all_active_binding, is_proportional, multiplier_estimates, MultiplierEstimate};
use crate::steplength::{sufficient_decrease_search, AbbminChoice, LineSearchParams, Trial};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Proportionality-driven phases, CG on the face.
    P2gpCg,
    /// Proportionality-driven phases, SDC gradient method on the face
    /// (strictly convex problems only).
    P2gpSdc,
    /// Phases switched by the binding-set test, CG on the face.
    GpcgLike,
    /// Projected gradient with ABBmin steplengths and adaptive `tau`.
    Pabbmin,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::P2gpCg, Mode::P2gpSdc, Mode::GpcgLike, Mode::Pabbmin];

    pub fn name(self) -> &'static str {
        match self {
            Mode::P2gpCg => "p2gp-cg",
            Mode::P2gpSdc => "p2gp-sdc",
            Mode::GpcgLike => "gpcg-like",
            Mode::Pabbmin => "pabbmin",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode '{s}'")))
    }
}

/// Relative tolerances never go below this multiple of `‖∇f(x0)‖`, the
/// level at which the measure is rounding noise.
pub const MEASURE_FLOOR: f64 = 64.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TolMode {
    /// Stop when `‖phi + beta‖ <= tol * ‖phi0 + beta0‖` (floored at [`MEASURE_FLOOR`]).
    RelativeSplitNorm,
    /// Stop when `‖phi + beta‖ <= tol`.
    AbsoluteSplitNorm,
    /// Stop when the projected gradient has infinity norm below `tol`.
    InfNormPg,
}

impl FromStr for TolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "relative-split-norm" => Ok(TolMode::RelativeSplitNorm),
            "absolute-split-norm" => Ok(TolMode::AbsoluteSplitNorm),
            "inf-norm-pg" => Ok(TolMode::InfNormPg),
            _ => Err(Error::InvalidConfig(format!("unknown tolerance mode '{s}'"))),
        }
    }
}

/// Adaptive switching parameter of the projected-gradient baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveTau {
    pub start: f64,
    pub shrink: f64,
    pub grow: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for AdaptiveTau {
    fn default() -> Self {
        Self { start: 0.5, shrink: 0.9, grow: 1.1, min: 0.02, max: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: Mode,
    pub tol_mode: TolMode,
    pub tol: f64,
    /// Identification phase ends when a decrease drops below `eta` times
    /// the best decrease of the phase.
    pub eta: f64,
    /// Same test for inner iterations.
    pub xi: f64,
    pub gamma0: f64,
    /// Lower bound kept by the adaptive `Gamma` update.
    pub gamma_floor: f64,
    pub line_search: LineSearchParams,
    pub abbmin_memory: usize,
    pub abbmin_tau: f64,
    pub sdc_kbar: usize,
    pub sdc_l: usize,
    pub max_matvecs: u64,
    pub max_projections: u64,
    /// Cap on consecutive projected-gradient or inner iterations.
    pub max_consecutive: usize,
    /// Consecutive failed line searches tolerated before giving up.
    pub max_stalls: usize,
    pub pabbmin_tau: AdaptiveTau,
    pub projection: ProjectionParams,
}

impl SolverConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            tol_mode: TolMode::RelativeSplitNorm,
            tol: 1e-6,
            eta: 0.1,
            xi: if mode == Mode::GpcgLike { 0.25 } else { 0.5 },
            gamma0: 1.0,
            gamma_floor: 1.0,
            line_search: LineSearchParams::default(),
            abbmin_memory: 3,
            abbmin_tau: 0.2,
            sdc_kbar: 6,
            sdc_l: 4,
            max_matvecs: 30_000,
            max_projections: 30_000,
            max_consecutive: 50,
            max_stalls: 2,
            pabbmin_tau: AdaptiveTau::default(),
            projection: ProjectionParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.line_search.validate()?;
        let t = &self.pabbmin_tau;
        let checks = [
            (self.tol >= 0.0, "tol must be nonnegative"),
            (self.eta > 0.0 && self.eta < 1.0, "eta must lie in (0, 1)"),
            (self.xi >= 0.0 && self.xi < 1.0, "xi must lie in [0, 1)"),
            (self.gamma0 > 0.0 && self.gamma_floor > 0.0, "Gamma must be positive"),
            (self.abbmin_tau > 0.0 && self.abbmin_tau < 1.0, "tau must lie in (0, 1)"),
            (self.sdc_kbar >= 2 && self.sdc_l >= 1, "SDC needs kbar >= 2 and l >= 1"),
            (self.max_consecutive >= 1 && self.max_stalls >= 1, "iteration caps must be positive"),
            (0.0 < t.min && t.min <= t.start && t.start <= t.max, "adaptive tau bounds are inconsistent"),
            (t.shrink > 0.0 && t.shrink < 1.0 && t.grow > 1.0, "adaptive tau factors out of range"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::InvalidConfig((*msg).into())),
            None => Ok(()),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(Mode::P2gpCg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Unbounded,
    LimitMatvecs,
    LimitProjections,
    Stalled,
}

impl Status {
    /// Whether the run failed to produce an answer (caps or stall).
    pub fn is_failure(self) -> bool {
        !matches!(self, Status::Converged | Status::Unbounded)
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Unbounded => "unbounded",
            Status::LimitMatvecs => "limit_matvecs",
            Status::LimitProjections => "limit_projections",
            Status::Stalled => "stalled",
        }
    }
}

impl From<Limit> for Status {
    fn from(l: Limit) -> Self {
        match l {
            Limit::Matvecs => Status::LimitMatvecs,
            Limit::Projections => Status::LimitProjections,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Identification,
    Minimization,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: PhaseKind,
    pub iters: usize,
    pub f_drop: f64,
    pub active_set_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: Mode,
    pub status: Status,
    pub x_final: Vec<f64>,
    pub f_final: f64,
    /// `‖phi + beta‖` at the final iterate.
    pub kkt_measure: f64,
    pub proj_grad_inf_norm: f64,
    /// Absolute tolerance the run was held to.
    pub tol: f64,
    pub counters: Counters,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub phase_trace: Vec<PhaseRecord>,
    pub multipliers: MultiplierEstimate,
    /// Feasible direction along which `f` is unbounded below.
    pub certificate: Option<Vec<f64>>,
    pub gamma_final: f64,
}

/// Adaptive update of the proportionality constant.
pub fn update_gamma(gamma: f64, proportional: bool, active_changed: bool, floor: f64) -> f64 {
    if !proportional {
        (1.1 * gamma).max(floor)
    } else if active_changed {
        (0.9 * gamma).max(floor)
    } else {
        gamma
    }
}

fn is_converged(mode: TolMode, tol: f64, pt: &Point) -> bool {
    match mode {
        TolMode::InfNormPg => pt.split.proj_grad_inf_norm() < tol,
        TolMode::RelativeSplitNorm | TolMode::AbsoluteSplitNorm => pt.split.measure <= tol,
    }
}

/// Solves `p` from `x0` (projected onto the feasible set first) with the
/// method selected by `cfg.mode`.
pub fn solve(p: &Problem, x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let mut ev = Evaluator::new(p, cfg.projection)?.with_limits(cfg.max_matvecs, cfg.max_projections);
    let start = ev.start(x0)?;
    let tol = match cfg.tol_mode {
        TolMode::RelativeSplitNorm => {
            (cfg.tol * start.split.measure).max(MEASURE_FLOOR * norm2(&start.split.grad))
        }
        TolMode::AbsoluteSplitNorm | TolMode::InfNormPg => cfg.tol,
    };
    let run = match cfg.mode {
        Mode::Pabbmin => run_pabbmin(&mut ev, start, cfg, tol)?,
        _ => run_two_phase(&mut ev, start, cfg, tol)?,
    };
    Ok(SolveReport {
        mode: cfg.mode,
        status: run.status,
        kkt_measure: run.point.split.measure,
        proj_grad_inf_norm: run.point.split.proj_grad_inf_norm(),
        multipliers: multiplier_estimates(&run.point.split),
        f_final: run.point.f,
        x_final: run.point.x,
        tol,
        counters: ev.counters,
        outer_iterations: run.outer,
        inner_iterations: run.inner,
        phase_trace: run.trace,
        certificate: run.certificate,
        gamma_final: run.gamma,
    })
}

pub fn solve_pabbmin(p: &Problem, x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport> {
    solve(p, x0, &SolverConfig { mode: Mode::Pabbmin, ..cfg.clone() })
}

pub fn solve_gpcg_like(p: &Problem, x0: &[f64], cfg: &SolverConfig) -> Result<SolveReport> {
    solve(p, x0, &SolverConfig { mode: Mode::GpcgLike, ..cfg.clone() })
}

struct Run {
    status: Status,
    point: Point,
    outer: usize,
    inner: usize,
    trace: Vec<PhaseRecord>,
    certificate: Option<Vec<f64>>,
    gamma: f64,
}

enum InnerState {
    Cg(CgState),
    Sdc(SdcState),
}

enum MinEnd {
    /// The phase ended normally (continuation test failed, empty face, ...).
    Done,
    Converged,
    Unbounded(Vec<f64>),
    Limit(Limit),
    SearchFailed,
}

struct MinOutcome {
    end: MinEnd,
    point: Point,
    iters: usize,
    inner: usize,
    /// Activity of the iterate before the last accepted step.
    prev_sets: Option<ActiveSets>,
}

fn run_two_phase(ev: &mut Evaluator<'_>, start: Point, cfg: &SolverConfig, tol: f64) -> Result<Run> {
    let conv = |pt: &Point| is_converged(cfg.tol_mode, tol, pt);
    let p1 = Phase1Params {
        line_search: cfg.line_search,
        tau: cfg.abbmin_tau,
        eta: cfg.eta,
        max_iter: cfg.max_consecutive,
    };
    let mut mem = GpMemory::new(cfg.abbmin_memory);
    let mut gamma = cfg.gamma0.max(cfg.gamma_floor);
    let mut point = start;
    let mut prev_sets = point.sets().clone();
    let (mut outer, mut inner, mut failures) = (0, 0, 0);
    let mut trace = Vec::new();
    let mut certificate = None;
    let status = loop {
        if conv(&point) {
            break Status::Converged;
        }
        if let Some(l) = ev.limit() {
            break l.into();
        }
        outer += 1;

        let f_before = point.f;
        let sets_before = point.sets().clone();
        let out = run_phase1(ev, point, &mut mem, &p1, &conv)?;
        point = out.point;
        trace.push(PhaseRecord {
            phase: PhaseKind::Identification,
            iters: out.iterations,
            f_drop: f_before - point.f,
            active_set_size: point.sets().num_active(),
        });
        if out.iterations > 0 {
            prev_sets = sets_before;
        }
        match out.status {
            Phase1Status::Converged => break Status::Converged,
            Phase1Status::Unbounded => {
                certificate = out.certificate;
                break Status::Unbounded;
            }
            Phase1Status::Limit(l) => break l.into(),
            Phase1Status::LineSearchFailed => {
                failures += 1;
                if failures >= cfg.max_stalls {
                    break Status::Stalled;
                }
            }
            _ => failures = 0,
        }

        let f_before = point.f;
        let out = minimization_phase(ev, point, cfg, gamma, &conv, &mut mem)?;
        point = out.point;
        inner += out.inner;
        trace.push(PhaseRecord {
            phase: PhaseKind::Minimization,
            iters: out.iters,
            f_drop: f_before - point.f,
            active_set_size: point.sets().num_active(),
        });
        if let Some(s) = out.prev_sets {
            prev_sets = s;
        }
        match out.end {
            MinEnd::Converged => break Status::Converged,
            MinEnd::Unbounded(d) => {
                certificate = Some(d);
                break Status::Unbounded;
            }
            MinEnd::Limit(l) => break l.into(),
            MinEnd::SearchFailed => {
                failures += 1;
                if failures >= cfg.max_stalls {
                    break Status::Stalled;
                }
            }
            MinEnd::Done => {}
        }
        let proportional = is_proportional(&point.split, gamma);
        gamma = update_gamma(gamma, proportional, &prev_sets != point.sets(), cfg.gamma_floor);
    };
    Ok(Run { status, point, outer, inner, trace, certificate, gamma })
}

fn minimization_phase(
    ev: &mut Evaluator<'_>,
    mut point: Point,
    cfg: &SolverConfig,
    gamma: f64,
    conv: &dyn Fn(&Point) -> bool,
    mem: &mut GpMemory,
) -> Result<MinOutcome> {
    let p = ev.problem();
    let mut resume: Option<(ReducedProblem, InnerState)> = None;
    let (mut iters, mut inner) = (0, 0);
    let mut prev_sets = None;
    let end = loop {
        if let Some(l) = ev.limit() {
            break MinEnd::Limit(l);
        }
        let resumed = resume.is_some();
        let (rp, mut state) = match resume.take() {
            Some(r) => r,
            None => {
                let rp = match ReducedProblem::build(p, point.sets(), point.grad()) {
                    Ok(rp) => rp,
                    Err(Error::EmptyFace) => break MinEnd::Done,
                    Err(e) => return Err(e),
                };
                let state = match cfg.mode {
                    Mode::P2gpSdc => InnerState::Sdc(SdcState::new(&rp)),
                    _ => InnerState::Cg(CgState::new(&rp).with_scale(ev.operator_norm)),
                };
                (rp, state)
            }
        };
        if rp.dim() == 0 {
            break MinEnd::Done;
        }
        let out = {
            let mut hess = |v: &[f64]| ev.hess_vec(v);
            match &mut state {
                InnerState::Cg(s) => cg_minimize(&rp, s, cfg.xi, cfg.max_consecutive, &mut hess),
                InnerState::Sdc(s) => {
                    sdc_minimize(&rp, s, cfg.xi, cfg.sdc_kbar, cfg.sdc_l, cfg.max_consecutive, &mut hess)?
                }
            }
        };
        inner += out.iterations;
        if norm_inf(&out.d) == 0.0 {
            if resumed && out.status == InnerStatus::ExactSolution {
                continue;
            }
            break MinEnd::Done;
        }
        let bp = breakpoints(p, &point.x, &out.d)?;

        if out.status == InnerStatus::NonpositiveCurvature {
            let Some(blocking) = bp.argmin else {
                break MinEnd::Unbounded(out.d);
            };
            let t = bp.min;
            let mut x = add_scaled(&point.x, t, &out.d);
            x[blocking] = if out.d[blocking] < 0.0 { p.lower()[blocking] } else { p.upper()[blocking] };
            clamp_to_box(p, &mut x);
            p.snap_to_bounds(&mut x);
            let hx = add_scaled(&point.hx, t, &out.hd);
            let next = ev.point(x, hx)?;
            debug_assert!(next.f <= point.f + 1e-12 * point.f.abs().max(1.0));
            mem.record(&point, &next);
            prev_sets = Some(point.sets().clone());
            point = next;
            iters += 1;
            break if conv(&point) { MinEnd::Converged } else { MinEnd::Done };
        }

        let mut full = None;
        if bp.min >= 1.0 {
            let mut x = add_scaled(&point.x, 1.0, &out.d);
            clamp_to_box(p, &mut x);
            p.snap_to_bounds(&mut x);
            let hx = add_scaled(&point.hx, 1.0, &out.hd);
            // Gradient iterations need not decrease f; those fall back to the search.
            let trial = Trial::along(&point.x, &point.hx, point.f, &point.split.h, x, hx);
            if trial.df <= 0.0 {
                full = Some((trial.x, trial.hx));
            }
        }
        let full_step = full.is_some();
        let (x, hx) = match full {
            Some(xh) => xh,
            None => {
                let sets = point.sets().clone();
                let (x0, d) = (&point.x, &out.d);
                let (hx0, f0, g) = (&point.hx, point.f, &point.split.h);
                let search = sufficient_decrease_search(x0, g, 1.0, &cfg.line_search, |a| {
                    let x = ev.project_face(x0, &sets, &add_scaled(x0, a, d))?;
                    let hx = ev.hess_vec(&x);
                    Ok(Trial::along(x0, hx0, f0, g, x, hx))
                })?;
                if !search.accepted && !(search.trial.df < 0.0) {
                    break MinEnd::SearchFailed;
                }
                (search.trial.x, search.trial.hx)
            }
        };
        let next = ev.point(x, hx)?;
        debug_assert!(next.f <= point.f + 1e-12 * point.f.abs().max(1.0));
        debug_assert!(next.sets().status().iter().zip(point.sets().status()).all(|(a, b)| *b == Activity::Free || a == b));
        mem.record(&point, &next);
        let same_face = next.sets() == point.sets();
        prev_sets = Some(point.sets().clone());
        point = next;
        iters += 1;
        if full_step && same_face {
            resume = Some((rp, state));
        }
        if conv(&point) {
            break MinEnd::Converged;
        }
        let keep_going = match cfg.mode {
            Mode::GpcgLike => all_active_binding(&point.split),
            _ => is_proportional(&point.split, gamma),
        };
        if !keep_going {
            break MinEnd::Done;
        }
    };
    Ok(MinOutcome { end, point, iters, inner, prev_sets })
}

fn clamp_to_box(p: &Problem, x: &mut [f64]) {
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = xi.clamp(p.lower()[i], p.upper()[i]);
    }
}

fn run_pabbmin(ev: &mut Evaluator<'_>, start: Point, cfg: &SolverConfig, tol: f64) -> Result<Run> {
    let mut mem = GpMemory::new(cfg.abbmin_memory);
    let at = cfg.pabbmin_tau;
    let mut tau = at.start;
    let mut point = start;
    let f_start = point.f;
    let (mut iters, mut failures) = (0, 0);
    let mut certificate = None;
    let status = loop {
        if is_converged(cfg.tol_mode, tol, &point) {
            break Status::Converged;
        }
        if let Some(l) = ev.limit() {
            break l.into();
        }
        match gp_step(ev, &point, &mut mem, tau, &cfg.line_search)? {
            GpStep::Moved { next, line_search_ok, choice, .. } => {
                iters += 1;
                point = next;
                tau = match choice {
                    Some(AbbminChoice::MinBb2(_)) => (at.shrink * tau).max(at.min),
                    Some(AbbminChoice::Bb1(_)) => (at.grow * tau).min(at.max),
                    None => tau,
                };
                if line_search_ok {
                    failures = 0;
                } else {
                    failures += 1;
                    if failures >= cfg.max_stalls {
                        break Status::Stalled;
                    }
                }
            }
            GpStep::NoProgress => {
                failures += 1;
                if failures >= cfg.max_stalls {
                    break Status::Stalled;
                }
            }
            GpStep::Unbounded(d) => {
                certificate = Some(d);
                break Status::Unbounded;
            }
        }
    };
    let trace = vec![PhaseRecord {
        phase: PhaseKind::Identification,
        iters,
        f_drop: f_start - point.f,
        active_set_size: point.sets().num_active(),
    }];
    Ok(Run { status, point, outer: iters, inner: 0, trace, certificate, gamma: cfg.gamma0 })
}
