//! Counted access to the problem: every Hessian application and every
//! projection a solver performs goes through an [`Evaluator`].

use crate::error::Result;
use crate::linalg::{norm2, sub};
use crate::model::{ActiveSets, Counters, Problem};
use crate::projection::{BoxLinearSet, ProjectionParams};
use crate::stationarity::{split_with_sets, GradientSplit};

/// A feasible iterate with its cached `H x`, objective and gradient split.
#[derive(Clone, Debug)]
pub struct Point {
    pub x: Vec<f64>,
    pub hx: Vec<f64>,
    pub f: f64,
    pub split: GradientSplit,
}

impl Point {
    pub fn grad(&self) -> &[f64] {
        &self.split.grad
    }

    pub fn sets(&self) -> &ActiveSets {
        &self.split.sets
    }
}

/// Which work cap was hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limit {
    Matvecs,
    Projections,
}

#[derive(Debug)]
pub struct Evaluator<'a> {
    p: &'a Problem,
    omega: BoxLinearSet<'a>,
    pub params: ProjectionParams,
    pub counters: Counters,
    pub max_matvecs: u64,
    pub max_projections: u64,
    /// Largest `‖Hv‖ / ‖v‖` seen so far; a lower estimate of `‖H‖`.
    pub operator_norm: f64,
}

impl<'a> Evaluator<'a> {
    /// Fails if the feasible set is empty.
    pub fn new(p: &'a Problem, params: ProjectionParams) -> Result<Self> {
        Ok(Self {
            p,
            omega: BoxLinearSet::omega(p)?,
            params,
            counters: Counters::default(),
            max_matvecs: u64::MAX,
            max_projections: u64::MAX,
            operator_norm: 0.0,
        })
    }

    pub fn with_limits(mut self, max_matvecs: u64, max_projections: u64) -> Self {
        self.max_matvecs = max_matvecs;
        self.max_projections = max_projections;
        self
    }

    pub fn limit(&self) -> Option<Limit> {
        if self.counters.matvecs >= self.max_matvecs {
            Some(Limit::Matvecs)
        } else if self.counters.projections >= self.max_projections {
            Some(Limit::Projections)
        } else {
            None
        }
    }

    pub fn problem(&self) -> &'a Problem {
        self.p
    }

    pub fn hess_vec(&mut self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.p.hess_vec(x, &mut out);
        self.counters.matvecs += 1;
        let xn = norm2(x);
        if xn > 0.0 {
            self.operator_norm = self.operator_norm.max(norm2(&out) / xn);
        }
        out
    }

    pub fn objective(&mut self, x: &[f64], hx: &[f64]) -> f64 {
        self.counters.objective_evals += 1;
        self.p.objective_from_hx(x, hx)
    }

    pub fn gradient(&self, hx: &[f64]) -> Vec<f64> {
        sub(hx, self.p.c())
    }

    pub fn project(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.counters.projections += 1;
        let mut v = self.omega.project(x, &self.params)?;
        self.p.snap_to_bounds(&mut v);
        Ok(v)
    }

    /// Projection onto the face of `x_ref` given by `sets`.
    pub fn project_face(&mut self, x_ref: &[f64], sets: &ActiveSets, v: &[f64]) -> Result<Vec<f64>> {
        self.counters.projections += 1;
        let face = BoxLinearSet::face(self.p, x_ref, sets)?;
        let mut w = face.project(v, &self.params)?;
        self.p.snap_to_bounds(&mut w);
        Ok(w)
    }

    /// Gradient split at `x` (one tangent-cone projection).
    pub fn split(&mut self, x: &[f64], grad: Vec<f64>) -> Result<GradientSplit> {
        let sets = self.p.active_sets(x)?;
        self.counters.projections += 1;
        split_with_sets(self.p, sets, grad, &self.params)
    }

    /// Builds a point from `x` and a known `H x`.
    pub fn point(&mut self, x: Vec<f64>, hx: Vec<f64>) -> Result<Point> {
        let f = self.objective(&x, &hx);
        let grad = self.gradient(&hx);
        let split = self.split(&x, grad)?;
        Ok(Point { x, hx, f, split })
    }

    /// Projects `x0` onto the feasible set and evaluates it.
    pub fn start(&mut self, x0: &[f64]) -> Result<Point> {
        crate::error::check_len(self.p.n(), x0.len())?;
        let x = self.project(x0)?;
        let hx = self.hess_vec(&x);
        self.point(x, hx)
    }
}
