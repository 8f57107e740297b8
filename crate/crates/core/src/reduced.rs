//! Minimization over the current face.
//!
//! With active variables fixed and `q_F != 0`, the constraint `q_F' d_F = 0`
//! is eliminated by a Householder reflection `P = I - w w'` with
//! `P q_F = sigma e_1`: writing `d_F = P (0, z)` turns the face problem into
//! the unconstrained quadratic `p(z) = r' z + 1/2 z' M z`, where `M` is
//! `P H_FF P` without its first row and column and `r` is `P ∇f_F` without its
//! first entry. `M` is applied implicitly, one Hessian product per use.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, norm2};
use crate::model::{ActiveSets, Problem};
use crate::steplength::{sdc_schedule, yuan_step, SdcStep};

/// Rayleigh quotients below this fraction of the operator norm estimate are
/// treated as zero curvature.
pub const ZERO_CURVATURE: f64 = 1e-12;

/// Relative residual below which an inner solve is treated as exact.
pub const EXACT_RESIDUAL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ReducedProblem {
    n: usize,
    free: Vec<usize>,
    /// Householder vector over the free indices, `‖w‖ = sqrt(2)`.
    w: Option<Vec<f64>>,
    sigma: f64,
    r: Vec<f64>,
}

impl ReducedProblem {
    /// Face problem at a point with activity `sets` and gradient `grad`.
    pub fn build(p: &Problem, sets: &ActiveSets, grad: &[f64]) -> Result<Self> {
        check_len(p.n(), grad.len())?;
        check_len(p.n(), sets.len())?;
        let free = sets.free();
        if free.is_empty() {
            return Err(Error::EmptyFace);
        }
        let qf: Option<Vec<f64>> = p.q().map(|q| free.iter().map(|&i| q[i]).collect());
        let (w, sigma) = match qf {
            Some(qf) if qf.iter().any(|v| *v != 0.0) => {
                let qnorm = norm2(&qf);
                let sigma = if qf[0] >= 0.0 { -qnorm } else { qnorm };
                let mut v = qf;
                v[0] -= sigma;
                let scale = std::f64::consts::SQRT_2 / norm2(&v);
                v.iter_mut().for_each(|vi| *vi *= scale);
                (Some(v), sigma)
            }
            _ => (None, 0.0),
        };
        let mut rp = Self { n: p.n(), free, w, sigma, r: Vec::new() };
        let gf: Vec<f64> = rp.free.iter().map(|&i| grad[i]).collect();
        rp.r = rp.restrict_local(gf);
        Ok(rp)
    }

    pub fn dim(&self) -> usize {
        if self.w.is_some() {
            self.free.len() - 1
        } else {
            self.free.len()
        }
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn householder(&self) -> Option<&[f64]> {
        self.w.as_deref()
    }

    /// `±‖q_F‖`, or 0 when no reflection is used.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Linear term of the reduced problem.
    pub fn linear_term(&self) -> &[f64] {
        &self.r
    }

    fn reflect(&self, v: &mut [f64]) {
        if let Some(w) = &self.w {
            let t = dot(w, v);
            axpy(-t, w, v);
        }
    }

    /// Free-space vector `P (0, z)`.
    fn lift_local(&self, z: &[f64]) -> Vec<f64> {
        match &self.w {
            Some(_) => {
                let mut v = Vec::with_capacity(z.len() + 1);
                v.push(0.0);
                v.extend_from_slice(z);
                self.reflect(&mut v);
                v
            }
            None => z.to_vec(),
        }
    }

    fn restrict_local(&self, mut v: Vec<f64>) -> Vec<f64> {
        if self.w.is_some() {
            self.reflect(&mut v);
            v.remove(0);
        }
        v
    }

    /// Full-space step for reduced coordinates `z`: zero on active indices
    /// and orthogonal to `q`.
    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.dim());
        let local = self.lift_local(z);
        let mut out = vec![0.0; self.n];
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = local[k];
        }
        out
    }

    /// Reduced coordinates of a full-space vector (gather, reflect, drop).
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.restrict_local(self.free.iter().map(|&i| full[i]).collect())
    }

    /// Returns `M z` and the full-space product `H lift(z)`; one call to `hess`.
    pub fn apply(&self, z: &[f64], hess: &mut dyn FnMut(&[f64]) -> Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let hv = hess(&self.lift(z));
        (self.restrict(&hv), hv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStatus {
    StoppedByProgress,
    NonpositiveCurvature,
    ExactSolution,
    IterCap,
}

#[derive(Clone, Debug)]
pub struct InnerOutcome {
    /// Step (or, on nonpositive curvature, direction) in full space.
    pub d: Vec<f64>,
    /// `H d`, assembled from the products the solver already made.
    pub hd: Vec<f64>,
    pub status: InnerStatus,
    /// `d' H d` when the status is nonpositive curvature.
    pub curvature: Option<f64>,
    pub iterations: usize,
    pub decreases: Vec<f64>,
}

/// Resumable conjugate gradient state for one reduced problem.
#[derive(Clone, Debug)]
pub struct CgState {
    z: Vec<f64>,
    res: Vec<f64>,
    dir: Vec<f64>,
    rs: f64,
    r_norm: f64,
    max_decrease: f64,
    z_returned: Vec<f64>,
    hz_pending: Vec<f64>,
    /// A direction of nonpositive curvature met after the last returned step.
    pending: Option<(f64, Vec<f64>)>,
    scale: f64,
}

impl CgState {
    pub fn new(rp: &ReducedProblem) -> Self {
        let m = rp.dim();
        let res = rp.r.clone();
        let rs = dot(&res, &res);
        Self {
            z: vec![0.0; m],
            dir: res.iter().map(|v| -v).collect(),
            r_norm: rs.sqrt(),
            res,
            rs,
            max_decrease: f64::NEG_INFINITY,
            z_returned: vec![0.0; m],
            hz_pending: vec![0.0; rp.n],
            pending: None,
            scale: 0.0,
        }
    }

    /// Seeds the operator norm estimate used by the zero-curvature test.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Current reduced iterate.
    pub fn z(&self) -> &[f64] {
        &self.z
    }
}

fn take_step(
    rp: &ReducedProblem,
    z: &[f64],
    z_returned: &mut [f64],
    hz_pending: &mut Vec<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let dz: Vec<f64> = z.iter().zip(z_returned.iter()).map(|(a, b)| a - b).collect();
    z_returned.copy_from_slice(z);
    let hd = std::mem::replace(hz_pending, vec![0.0; rp.n]);
    (rp.lift(&dz), hd)
}

/// Conjugate gradients on the reduced problem, continuing from `state`.
///
/// Stops when a step's decrease is at most `xi` times the largest earlier
/// decrease of this state, on an (almost) exact solution, after `max_iter`
/// steps, or on a direction of nonpositive curvature. In the last case any
/// progress made before it is returned first and the direction is reported
/// on the next call.
pub fn cg_minimize(
    rp: &ReducedProblem,
    state: &mut CgState,
    xi: f64,
    max_iter: usize,
    hess: &mut dyn FnMut(&[f64]) -> Vec<f64>,
) -> InnerOutcome {
    if let Some((curv, hp)) = state.pending.take() {
        return InnerOutcome {
            d: rp.lift(&state.dir),
            hd: hp,
            status: InnerStatus::NonpositiveCurvature,
            curvature: Some(curv),
            iterations: 0,
            decreases: Vec::new(),
        };
    }
    let mut iterations = 0;
    let mut decreases = Vec::new();
    let status = loop {
        if state.rs.sqrt() <= EXACT_RESIDUAL * state.r_norm {
            break InnerStatus::ExactSolution;
        }
        if iterations >= max_iter {
            break InnerStatus::IterCap;
        }
        let (mp, hp) = rp.apply(&state.dir, hess);
        let curv = dot(&state.dir, &mp);
        let pp = dot(&state.dir, &state.dir);
        state.scale = state.scale.max(norm2(&mp) / pp.sqrt());
        if curv <= ZERO_CURVATURE * state.scale * pp {
            if state.z == state.z_returned {
                return InnerOutcome {
                    d: rp.lift(&state.dir),
                    hd: hp,
                    status: InnerStatus::NonpositiveCurvature,
                    curvature: Some(curv),
                    iterations,
                    decreases,
                };
            }
            state.pending = Some((curv, hp));
            break InnerStatus::StoppedByProgress;
        }
        let alpha = state.rs / curv;
        axpy(alpha, &state.dir, &mut state.z);
        axpy(alpha, &mp, &mut state.res);
        axpy(alpha, &hp, &mut state.hz_pending);
        let decrease = 0.5 * alpha * state.rs;
        iterations += 1;
        decreases.push(decrease);
        let stop = state.max_decrease.is_finite() && decrease <= xi * state.max_decrease;
        state.max_decrease = state.max_decrease.max(decrease);
        let rs_new = dot(&state.res, &state.res);
        let beta = rs_new / state.rs;
        for (d, r) in state.dir.iter_mut().zip(&state.res) {
            *d = -r + beta * *d;
        }
        state.rs = rs_new;
        if stop {
            break InnerStatus::StoppedByProgress;
        }
    };
    let (d, hd) = take_step(rp, &state.z, &mut state.z_returned, &mut state.hz_pending);
    InnerOutcome { d, hd, status, curvature: None, iterations, decreases }
}

/// Resumable state of the SDC gradient method.
#[derive(Clone, Debug)]
pub struct SdcState {
    z: Vec<f64>,
    g: Vec<f64>,
    k: usize,
    r_norm: f64,
    prev_cauchy: Option<(f64, f64)>,
    frozen: Option<f64>,
    max_decrease: f64,
    z_returned: Vec<f64>,
    hz_pending: Vec<f64>,
    /// Steplengths used so far, in order.
    pub steps: Vec<f64>,
}

impl SdcState {
    pub fn new(rp: &ReducedProblem) -> Self {
        let m = rp.dim();
        Self {
            z: vec![0.0; m],
            g: rp.r.clone(),
            k: 0,
            r_norm: norm2(&rp.r),
            prev_cauchy: None,
            frozen: None,
            max_decrease: f64::NEG_INFINITY,
            z_returned: vec![0.0; m],
            hz_pending: vec![0.0; rp.n],
            steps: Vec::new(),
        }
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }
}

/// Steepest descent with `kbar` Cauchy steps alternating with `l` steps of a
/// frozen Yuan steplength. Requires a positive definite reduced operator.
pub fn sdc_minimize(
    rp: &ReducedProblem,
    state: &mut SdcState,
    xi: f64,
    kbar: usize,
    l: usize,
    max_iter: usize,
    hess: &mut dyn FnMut(&[f64]) -> Vec<f64>,
) -> Result<InnerOutcome> {
    sdc_schedule(0, kbar, l)?;
    let mut iterations = 0;
    let mut decreases = Vec::new();
    let status = loop {
        let gg = dot(&state.g, &state.g);
        if gg.sqrt() <= EXACT_RESIDUAL * state.r_norm {
            break InnerStatus::ExactSolution;
        }
        if iterations >= max_iter {
            break InnerStatus::IterCap;
        }
        let (mg, hg) = rp.apply(&state.g, hess);
        let curv = dot(&state.g, &mg);
        if curv <= 0.0 {
            return Err(Error::NonpositiveCurvature(curv));
        }
        let cauchy = gg / curv;
        let gnorm = gg.sqrt();
        let alpha = match sdc_schedule(state.k, kbar, l)? {
            SdcStep::Cauchy => cauchy,
            SdcStep::Yuan { frozen_at } => {
                if frozen_at == state.k {
                    let (a_prev, g_prev) = state.prev_cauchy.expect("kbar >= 2 Cauchy steps precede");
                    state.frozen = Some(yuan_step(a_prev, cauchy, g_prev, gnorm));
                }
                state.frozen.expect("frozen Yuan step")
            }
        };
        state.prev_cauchy = Some((cauchy, gnorm));
        axpy(-alpha, &state.g, &mut state.z);
        axpy(-alpha, &mg, &mut state.g);
        axpy(-alpha, &hg, &mut state.hz_pending);
        state.steps.push(alpha);
        state.k += 1;
        iterations += 1;
        let decrease = alpha * gg - 0.5 * alpha * alpha * curv;
        decreases.push(decrease);
        let stop = state.max_decrease.is_finite() && decrease <= xi * state.max_decrease;
        state.max_decrease = state.max_decrease.max(decrease);
        if stop {
            break InnerStatus::StoppedByProgress;
        }
    };
    let (d, hd) = take_step(rp, &state.z, &mut state.z_returned, &mut state.hz_pending);
    Ok(InnerOutcome { d, hd, status, curvature: None, iterations, decreases })
}
