//! Problem representation.
//!
//! A problem is
//!
//! ```text
//!     minimize    f(x) = 1/2 x' H x - c' x
//!     subject to  q' x = b          (optional)
//!                 l <= x <= u
//! ```
//!
//! with `H` symmetric and `l`, `u` possibly infinite. When the linear
//! constraint is absent the problem is a plain box-constrained QP.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::dot;

/// Relative tolerance used to decide whether a component sits on a bound.
pub const BOUND_ATTACH_TOL: f64 = 1e-12;

/// A symmetric linear operator `x -> H x`.
pub trait LinearOperator: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// `out = H x`; `out` has length `dim()` and is overwritten.
    fn apply(&self, x: &[f64], out: &mut [f64]);

    /// Row-major dense copy, built column by column from `apply`.
    fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut dense = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                dense[i * n + j] = col[i];
            }
        }
        dense
    }
}

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug)]
pub struct DenseSym {
    n: usize,
    data: Vec<f64>,
}

impl DenseSym {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        check_len(n * n, data.len())?;
        let scale = data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * scale {
                    return Err(Error::InvalidProblem(format!(
                        "dense hessian is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            check_len(n, row.len())?;
            data.extend_from_slice(row);
        }
        Self::new(n, data)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self { n, data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

impl LinearOperator for DenseSym {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[i * self.n..(i + 1) * self.n], x);
        }
    }

    fn to_dense(&self) -> Vec<f64> {
        self.data.clone()
    }
}

/// Sparse symmetric matrix given by its lower triangle in coordinate form.
#[derive(Clone, Debug)]
pub struct CooSym {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CooSym {
    /// Entries must satisfy `row >= col`; duplicates are summed on apply.
    pub fn new(n: usize, rows: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>) -> Result<Self> {
        check_len(rows.len(), cols.len())?;
        check_len(rows.len(), vals.len())?;
        for k in 0..rows.len() {
            let (i, j) = (rows[k], cols[k]);
            if i >= n || j >= n {
                return Err(Error::InvalidProblem(format!(
                    "coo entry ({i}, {j}) out of range for n = {n}"
                )));
            }
            if j > i {
                return Err(Error::InvalidProblem(format!(
                    "coo entry ({i}, {j}) lies above the diagonal; store the lower triangle only"
                )));
            }
            if !vals[k].is_finite() {
                return Err(Error::InvalidProblem(format!("coo entry ({i}, {j}) is not finite")));
            }
        }
        Ok(Self { n, rows, cols, vals })
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.vals.len()).map(move |k| (self.rows[k], self.cols[k], self.vals[k]))
    }
}

impl LinearOperator for CooSym {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..self.vals.len() {
            let (i, j, v) = (self.rows[k], self.cols[k], self.vals[k]);
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
    }
}

/// Hessian storage. Solvers only ever call [`Hessian::apply`].
#[derive(Clone, Debug)]
pub enum Hessian {
    Dense(DenseSym),
    Coo(CooSym),
    Operator(Arc<dyn LinearOperator>),
}

impl Hessian {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Dense(m) => m.dim(),
            Hessian::Coo(m) => m.dim(),
            Hessian::Operator(op) => op.dim(),
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Hessian::Dense(m) => m.apply(x, out),
            Hessian::Coo(m) => m.apply(x, out),
            Hessian::Operator(op) => op.apply(x, out),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Hessian::Dense(m) => m.to_dense(),
            Hessian::Coo(m) => m.to_dense(),
            Hessian::Operator(op) => op.to_dense(),
        }
    }
}

/// The single linear equality constraint `q' x = b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub q: Vec<f64>,
    pub b: f64,
}

#[derive(Clone, Debug)]
pub struct Problem {
    n: usize,
    hessian: Hessian,
    c: Vec<f64>,
    constraint: Option<LinearConstraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Problem {
    pub fn new(
        hessian: Hessian,
        c: Vec<f64>,
        constraint: Option<LinearConstraint>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let n = hessian.dim();
        if n == 0 {
            return Err(Error::InvalidProblem("problem has no variables".into()));
        }
        check_len(n, c.len())?;
        check_len(n, lower.len())?;
        check_len(n, upper.len())?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("linear term must be finite".into()));
        }
        for i in 0..n {
            let (l, u) = (lower[i], upper[i]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidProblem(format!("invalid bounds at {i}: [{l}, {u}]")));
            }
            if l >= u {
                return Err(Error::InvalidProblem(format!(
                    "lower bound must be strictly below upper bound at {i}: [{l}, {u}]"
                )));
            }
        }
        if let Some(lc) = &constraint {
            check_len(n, lc.q.len())?;
            if lc.q.iter().any(|v| !v.is_finite()) || !lc.b.is_finite() {
                return Err(Error::InvalidProblem("linear constraint must be finite".into()));
            }
            if lc.q.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidProblem("constraint vector q is zero".into()));
            }
        }
        Ok(Self { n, hessian, c, constraint, lower, upper })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hessian(&self) -> &Hessian {
        &self.hessian
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn constraint(&self) -> Option<&LinearConstraint> {
        self.constraint.as_ref()
    }

    pub fn q(&self) -> Option<&[f64]> {
        self.constraint.as_ref().map(|lc| lc.q.as_slice())
    }

    /// Right-hand side of the linear constraint, 0 when absent.
    pub fn b(&self) -> f64 {
        self.constraint.as_ref().map_or(0.0, |lc| lc.b)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `out = H x`, uncounted. Solvers go through [`crate::eval::Evaluator`].
    pub fn hess_vec(&self, x: &[f64], out: &mut [f64]) {
        self.hessian.apply(x, out);
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n, x.len())?;
        let mut hx = vec![0.0; self.n];
        self.hess_vec(x, &mut hx);
        Ok(self.objective_from_hx(x, &hx))
    }

    /// `f(x)` given a cached `H x`.
    pub fn objective_from_hx(&self, x: &[f64], hx: &[f64]) -> f64 {
        0.5 * dot(x, hx) - dot(&self.c, x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut g = vec![0.0; self.n];
        self.hess_vec(x, &mut g);
        for (gi, ci) in g.iter_mut().zip(&self.c) {
            *gi -= ci;
        }
        Ok(g)
    }

    /// Bound activity of component `i`.
    pub fn activity(&self, i: usize, xi: f64) -> Activity {
        let (l, u) = (self.lower[i], self.upper[i]);
        if l.is_finite() && (xi - l).abs() <= BOUND_ATTACH_TOL * l.abs().max(1.0) {
            Activity::Lower
        } else if u.is_finite() && (xi - u).abs() <= BOUND_ATTACH_TOL * u.abs().max(1.0) {
            Activity::Upper
        } else {
            Activity::Free
        }
    }

    pub fn active_sets(&self, x: &[f64]) -> Result<ActiveSets> {
        check_len(self.n, x.len())?;
        let mut status = Vec::with_capacity(self.n);
        for (i, &xi) in x.iter().enumerate() {
            let (l, u) = (self.lower[i], self.upper[i]);
            let below = l.is_finite() && xi < l - BOUND_ATTACH_TOL * l.abs().max(1.0);
            let above = u.is_finite() && xi > u + BOUND_ATTACH_TOL * u.abs().max(1.0);
            if below || above || xi.is_nan() {
                return Err(Error::Infeasible(format!(
                    "component {i} = {xi} outside [{l}, {u}]"
                )));
            }
            status.push(self.activity(i, xi));
        }
        Ok(ActiveSets { status })
    }

    /// Writes components that are within attachment tolerance of a bound
    /// exactly onto that bound.
    pub fn snap_to_bounds(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            match self.activity(i, *xi) {
                Activity::Lower => *xi = self.lower[i],
                Activity::Upper => *xi = self.upper[i],
                Activity::Free => {}
            }
        }
    }

    /// `|q'x - b|`, or 0 without a constraint.
    pub fn constraint_violation(&self, x: &[f64]) -> f64 {
        self.constraint.as_ref().map_or(0.0, |lc| (dot(&lc.q, x) - lc.b).abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Free,
    Lower,
    Upper,
}

/// Partition of the indices into lower-active, upper-active and free sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSets {
    status: Vec<Activity>,
}

impl ActiveSets {
    pub fn from_status(status: Vec<Activity>) -> Self {
        Self { status }
    }

    pub fn status(&self) -> &[Activity] {
        &self.status
    }

    pub fn get(&self, i: usize) -> Activity {
        self.status[i]
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.status[i] == Activity::Free
    }

    pub fn lower(&self) -> Vec<usize> {
        self.indices(Activity::Lower)
    }

    pub fn upper(&self) -> Vec<usize> {
        self.indices(Activity::Upper)
    }

    pub fn free(&self) -> Vec<usize> {
        self.indices(Activity::Free)
    }

    pub fn num_active(&self) -> usize {
        self.status.iter().filter(|s| **s != Activity::Free).count()
    }

    pub fn len(&self) -> usize {
        self.status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.status.is_empty()
    }

    /// `A_l(self) ⊆ A_l(other)` and `A_u(self) ⊆ A_u(other)`.
    pub fn is_subset_of(&self, other: &ActiveSets) -> bool {
        self.status
            .iter()
            .zip(&other.status)
            .all(|(a, b)| *a == Activity::Free || a == b)
    }

    fn indices(&self, which: Activity) -> Vec<usize> {
        self.status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == which)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Work counters for one solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub matvecs: u64,
    pub projections: u64,
    pub objective_evals: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_problem(d: &[f64], c: &[f64]) -> Problem {
        let n = d.len();
        Problem::new(
            Hessian::Dense(DenseSym::diagonal(d)),
            c.to_vec(),
            None,
            vec![f64::NEG_INFINITY; n],
            vec![f64::INFINITY; n],
        )
        .unwrap()
    }

    #[test]
    fn objective_and_gradient_small_cases() {
        let p = diag_problem(&[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(p.objective(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(p.gradient(&[0.3, -2.0]).unwrap(), vec![0.3, -2.0]);

        let p = diag_problem(&[2.0, 4.0], &[1.0, 0.0]);
        assert_eq!(p.objective(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(p.gradient(&[1.0, 1.0]).unwrap(), vec![1.0, 4.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = diag_problem(&[1.0, 1.0], &[0.0, 0.0]);
        assert!(matches!(p.objective(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(p.gradient(&[1.0, 2.0, 3.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn active_sets_partition() {
        let p = Problem::new(
            Hessian::Dense(DenseSym::identity(2)),
            vec![0.0; 2],
            None,
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let s = p.active_sets(&[0.0, 0.5]).unwrap();
        assert_eq!(s.lower(), vec![0]);
        assert_eq!(s.free(), vec![1]);
        assert!(s.upper().is_empty());

        let s = p.active_sets(&[1.0, 1.0]).unwrap();
        assert_eq!(s.upper(), vec![0, 1]);
        assert!(s.free().is_empty());

        assert!(matches!(p.active_sets(&[-0.1, 0.5]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn rejects_bad_problems() {
        let h = || Hessian::Dense(DenseSym::identity(2));
        assert!(Problem::new(h(), vec![0.0; 2], None, vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        let zero_q = Some(LinearConstraint { q: vec![0.0, 0.0], b: 0.0 });
        assert!(Problem::new(h(), vec![0.0; 2], zero_q, vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(DenseSym::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(CooSym::new(2, vec![0], vec![1], vec![1.0]).is_err());
    }

    #[test]
    fn coo_matches_dense() {
        let coo = CooSym::new(3, vec![0, 1, 2, 2], vec![0, 0, 1, 2], vec![2.0, -1.0, 0.5, 3.0]).unwrap();
        let dense = coo.to_dense();
        let expected = [2.0, -1.0, 0.0, -1.0, 0.0, 0.5, 0.0, 0.5, 3.0];
        assert_eq!(dense, expected);
    }
}
