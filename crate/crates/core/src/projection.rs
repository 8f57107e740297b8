//! Euclidean projections onto `{v : q'v = b, l <= v <= u}`.
//!
//! With the constraint present the projection is `mid(l, x + mu q, u)` where
//! the multiplier `mu` is the root of the monotone piecewise-linear function
//!
//! ```text
//!     r(mu) = q' mid(l, x + mu q, u) - b
//! ```
//!
//! found by a bracketing phase followed by secant steps with a bisection
//! fallback (Dai and Fletcher). The same routine projects onto the
//! face-restricted set (fixed variables get `l_i = u_i`) and onto the tangent
//! cone (bounds `0` / `±inf`).

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm_inf};
use crate::model::{Activity, ActiveSets, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    /// Stop when `|r(mu)| <= eps * (1 + |b|)`.
    pub eps: f64,
    pub max_bracket: usize,
    pub max_secant: usize,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self { eps: 1e-10, max_bracket: 200, max_secant: 200 }
    }
}

/// A box intersected with at most one hyperplane.
#[derive(Clone, Debug)]
pub struct BoxLinearSet<'a> {
    q: Option<&'a [f64]>,
    b: f64,
    lower: Cow<'a, [f64]>,
    upper: Cow<'a, [f64]>,
}

impl<'a> BoxLinearSet<'a> {
    /// Checks `l <= u` and that the hyperplane meets the box.
    pub fn new(
        q: Option<&'a [f64]>,
        b: f64,
        lower: Cow<'a, [f64]>,
        upper: Cow<'a, [f64]>,
    ) -> Result<Self> {
        let n = lower.len();
        check_len(n, upper.len())?;
        for i in 0..n {
            if !(lower[i] <= upper[i]) {
                return Err(Error::EmptySet(format!(
                    "bounds cross at {i}: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        if let Some(q) = q {
            check_len(n, q.len())?;
            let (lo, hi) = hyperplane_range(q, &lower, &upper);
            let tol = 1e-10 * (1.0 + b.abs());
            if b < lo - tol || b > hi + tol {
                return Err(Error::EmptySet(format!(
                    "q'v ranges over [{lo}, {hi}] on the box, cannot equal {b}"
                )));
            }
        }
        Ok(Self { q, b, lower, upper })
    }

    /// The feasible set of `p`.
    pub fn omega(p: &'a Problem) -> Result<Self> {
        Self::new(p.q(), p.b(), Cow::Borrowed(p.lower()), Cow::Borrowed(p.upper()))
    }

    /// `Ω ∩ Ω(x)`: active components of `x` are frozen at their values.
    pub fn face(p: &'a Problem, x: &[f64], sets: &ActiveSets) -> Result<Self> {
        let mut lower = p.lower().to_vec();
        let mut upper = p.upper().to_vec();
        for i in 0..p.n() {
            if !sets.is_free(i) {
                lower[i] = x[i];
                upper[i] = x[i];
            }
        }
        Self::new(p.q(), p.b(), Cow::Owned(lower), Cow::Owned(upper))
    }

    /// Tangent cone `T_Ω(x)` for the activity pattern `sets`.
    pub fn tangent_cone(p: &'a Problem, sets: &ActiveSets) -> Self {
        let n = p.n();
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        for i in 0..n {
            match sets.get(i) {
                Activity::Lower => lower[i] = 0.0,
                Activity::Upper => upper[i] = 0.0,
                Activity::Free => {}
            }
        }
        // 0 is always a member, so no emptiness check is needed.
        Self { q: p.q(), b: 0.0, lower: Cow::Owned(lower), upper: Cow::Owned(upper) }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn q(&self) -> Option<&[f64]> {
        self.q
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        let in_box = v
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(x, (l, u))| *x >= *l && *x <= *u);
        in_box && self.q.is_none_or(|q| (dot(q, v) - self.b).abs() <= tol * (1.0 + self.b.abs()))
    }

    /// Projects `x` onto the set.
    pub fn project(&self, x: &[f64], params: &ProjectionParams) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let Some(q) = self.q else {
            return Ok(self.mid(x, None, 0.0));
        };
        let mu = self.solve_multiplier(q, x, params)?;
        Ok(self.mid(x, Some(q), mu))
    }

    fn mid(&self, x: &[f64], q: Option<&[f64]>, mu: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let v = x[i] + q.map_or(0.0, |q| mu * q[i]);
                clamp(v, self.lower[i], self.upper[i])
            })
            .collect()
    }

    fn residual(&self, q: &[f64], x: &[f64], mu: f64) -> f64 {
        let mut r = -self.b;
        for i in 0..x.len() {
            if q[i] != 0.0 {
                r += q[i] * clamp(x[i] + mu * q[i], self.lower[i], self.upper[i]);
            }
        }
        r
    }

    /// Sum of `q_i^2` over components strictly inside their bounds at `mu`.
    fn slope(&self, q: &[f64], x: &[f64], mu: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..x.len() {
            let v = x[i] + mu * q[i];
            if q[i] != 0.0 && v > self.lower[i] && v < self.upper[i] {
                s += q[i] * q[i];
            }
        }
        s
    }

    fn solve_multiplier(&self, q: &[f64], x: &[f64], params: &ProjectionParams) -> Result<f64> {
        let tol = params.eps * (1.0 + self.b.abs());
        let r0 = self.residual(q, x, 0.0);
        if r0.abs() <= tol {
            return Ok(if r0.abs() <= self.rounding(q, x) { 0.0 } else { self.polish(q, x, 0.0, r0) });
        }
        let qq: f64 = (0..q.len())
            .filter(|&i| self.lower[i] < self.upper[i])
            .map(|i| q[i] * q[i])
            .sum();
        if qq == 0.0 {
            return Err(Error::EmptySet(format!("no movable component, residual {r0:e}")));
        }

        // Bracketing: walk away from 0 with doubling steps until r changes sign.
        let dir = if r0 < 0.0 { 1.0 } else { -1.0 };
        let mut step = (r0.abs() / qq).max(f64::MIN_POSITIVE);
        let (mut a, mut ra) = (0.0, r0);
        let mut b = dir * step;
        let mut rb = self.residual(q, x, b);
        let mut iterations = 0;
        while rb * dir < 0.0 && rb.abs() > tol {
            iterations += 1;
            if iterations > params.max_bracket || !b.is_finite() {
                return Err(Error::ProjectionNonconvergence { iterations, residual: rb });
            }
            a = b;
            ra = rb;
            step *= 2.0;
            b += dir * step;
            rb = self.residual(q, x, b);
        }
        if rb.abs() <= tol {
            return Ok(self.polish(q, x, b, rb));
        }
        // Order the bracket so that r(lo) < 0 < r(hi).
        let (mut lo, mut rlo, mut hi, mut rhi) = if dir > 0.0 { (a, ra, b, rb) } else { (b, rb, a, ra) };

        // Secant steps on the bracket, falling back to bisection when the
        // secant point leaves the bracket or the residual stagnates.
        // `same_side` counts consecutive updates of the same bracket end; two
        // in a row means the secant is stagnating against a fixed end.
        let mut same_side = 0usize;
        let mut last_low = false;
        for _ in 0..params.max_secant {
            let secant = hi - rhi * (hi - lo) / (rhi - rlo);
            let mu = if same_side < 2 && secant > lo && secant < hi { secant } else { 0.5 * (lo + hi) };
            let r = self.residual(q, x, mu);
            if r.abs() <= tol {
                return Ok(self.polish(q, x, mu, r));
            }
            let low = r < 0.0;
            if low {
                lo = mu;
                rlo = r;
            } else {
                hi = mu;
                rhi = r;
            }
            same_side = if low == last_low { same_side + 1 } else { 1 };
            last_low = low;
            if same_side > 2 {
                same_side = 0;
            }
            if hi - lo <= 1e-14 * (1.0 + mu.abs()) {
                let (m, rm) = if rlo.abs() < rhi.abs() { (lo, rlo) } else { (hi, rhi) };
                return Ok(self.polish(q, x, m, rm));
            }
        }
        Err(Error::ProjectionNonconvergence { iterations: params.max_secant, residual: rlo.abs().max(rhi.abs()) })
    }

    /// Size of the rounding error in `r(0)`.
    fn rounding(&self, q: &[f64], x: &[f64]) -> f64 {
        let mut s = self.b.abs();
        for i in 0..x.len() {
            s += (q[i] * clamp(x[i], self.lower[i], self.upper[i])).abs();
        }
        4.0 * f64::EPSILON * s
    }

    /// Newton steps on the linear pieces around `mu`, kept while they reduce
    /// the residual.
    fn polish(&self, q: &[f64], x: &[f64], mut mu: f64, mut r: f64) -> f64 {
        for _ in 0..4 {
            if r == 0.0 {
                break;
            }
            let s = self.slope(q, x, mu);
            if s <= 0.0 {
                break;
            }
            let candidate = mu - r / s;
            let rc = self.residual(q, x, candidate);
            if rc.abs() >= r.abs() {
                break;
            }
            mu = candidate;
            r = rc;
        }
        mu
    }
}

/// Range of `q'v` over the box: `[r(-inf) + b, r(+inf) + b]`.
fn hyperplane_range(q: &[f64], lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for i in 0..q.len() {
        if q[i] > 0.0 {
            lo += q[i] * lower[i];
            hi += q[i] * upper[i];
        } else if q[i] < 0.0 {
            lo += q[i] * upper[i];
            hi += q[i] * lower[i];
        }
    }
    (lo, hi)
}

#[inline]
fn clamp(v: f64, l: f64, u: f64) -> f64 {
    if v < l {
        l
    } else if v > u {
        u
    } else {
        v
    }
}

/// Projection of `x` onto the feasible set of `p`.
pub fn project(p: &Problem, x: &[f64], params: &ProjectionParams) -> Result<Vec<f64>> {
    BoxLinearSet::omega(p)?.project(x, params)
}

/// Projection of `v` onto the tangent cone of the feasible set at `x`.
pub fn project_tangent_cone(p: &Problem, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let sets = p.active_sets(x)?;
    project_tangent_cone_with(p, &sets, v, &ProjectionParams::default())
}

pub fn project_tangent_cone_with(
    p: &Problem,
    sets: &ActiveSets,
    v: &[f64],
    params: &ProjectionParams,
) -> Result<Vec<f64>> {
    BoxLinearSet::tangent_cone(p, sets).project(v, params)
}

/// Step bounds along a direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Breakpoints {
    /// `omega[i]` is `None` where the direction component is treated as zero.
    pub omega: Vec<Option<f64>>,
    /// Largest feasible step; `+inf` when no bound blocks the ray.
    pub min: f64,
    /// Index attaining `min`, if finite.
    pub argmin: Option<usize>,
    pub max_finite: Option<f64>,
}

/// Breakpoints of the ray `x + t d`, `t >= 0`, with respect to the bounds.
pub fn breakpoints(p: &Problem, x: &[f64], d: &[f64]) -> Result<Breakpoints> {
    check_len(p.n(), x.len())?;
    check_len(p.n(), d.len())?;
    let dmax = norm_inf(d);
    if dmax == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let thresh = 1e-14 * dmax;
    let (l, u) = (p.lower(), p.upper());
    let mut omega = Vec::with_capacity(d.len());
    let mut min = f64::INFINITY;
    let mut argmin = None;
    let mut max_finite: Option<f64> = None;
    for i in 0..d.len() {
        let di = d[i];
        let w = if di.abs() <= thresh {
            None
        } else if di < 0.0 {
            Some(if l[i] == f64::NEG_INFINITY { f64::INFINITY } else { ((l[i] - x[i]) / di).max(0.0) })
        } else {
            Some(if u[i] == f64::INFINITY { f64::INFINITY } else { ((u[i] - x[i]) / di).max(0.0) })
        };
        if let Some(w) = w {
            if w < min {
                min = w;
                argmin = Some(i);
            }
            if w.is_finite() {
                max_finite = Some(max_finite.map_or(w, |m| m.max(w)));
            }
        }
        omega.push(w);
    }
    if !min.is_finite() {
        argmin = None;
    }
    Ok(Breakpoints { omega, min, argmin, max_finite })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DenseSym, Hessian, LinearConstraint};

    fn set<'a>(q: Option<&'a [f64]>, b: f64, l: &'a [f64], u: &'a [f64]) -> BoxLinearSet<'a> {
        BoxLinearSet::new(q, b, Cow::Borrowed(l), Cow::Borrowed(u)).unwrap()
    }

    fn problem(q: Option<Vec<f64>>, b: f64, l: Vec<f64>, u: Vec<f64>) -> Problem {
        let n = l.len();
        Problem::new(
            Hessian::Dense(DenseSym::identity(n)),
            vec![0.0; n],
            q.map(|q| LinearConstraint { q, b }),
            l,
            u,
        )
        .unwrap()
    }

    #[test]
    fn hyperplane_interior_to_box() {
        let q = [1.0, 1.0];
        let s = set(Some(&q), 1.0, &[0.0, 0.0], &[1.0, 1.0]);
        let v = s.project(&[2.0, 2.0], &ProjectionParams::default()).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-14 && (v[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hits_a_vertex() {
        // Enumerating the 9 bound patterns by hand: the only feasible KKT
        // point is (1, 0) with multiplier -1 and both bounds binding.
        let q = [1.0, 1.0];
        let s = set(Some(&q), 1.0, &[0.0, 0.0], &[1.0, 1.0]);
        let v = s.project(&[2.0, 0.0], &ProjectionParams::default()).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
    }

    #[test]
    fn pure_box_is_a_clamp() {
        let s = set(None, 0.0, &[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(s.project(&[-1.0, 2.0], &ProjectionParams::default()).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn empty_set_is_rejected() {
        let q = [1.0, 1.0];
        let r = BoxLinearSet::new(Some(&q), 3.0, Cow::Borrowed(&[0.0, 0.0]), Cow::Borrowed(&[1.0, 1.0]));
        assert!(matches!(r, Err(Error::EmptySet(_))));
    }

    #[test]
    fn equal_bounds_are_fixed() {
        let q = [1.0, 2.0, 1.0];
        let s = set(Some(&q), 2.0, &[0.5, -1.0, -1.0], &[0.5, 1.0, 1.0]);
        let v = s.project(&[3.0, 3.0, 3.0], &ProjectionParams::default()).unwrap();
        assert_eq!(v[0], 0.5);
        assert!((dot(&q, &v) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_cone_hyperplane_case() {
        let p = problem(Some(vec![1.0, 1.0]), 1.0, vec![0.0, 0.0], vec![1.0, 1.0]);
        let v = project_tangent_cone(&p, &[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-14 && (v[1] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn tangent_cone_both_lower_active() {
        // x = (0, 0) with q = (1, -1), b = 0: the cone is {v >= 0, v1 = v2},
        // i.e. the ray t(1, 1). Projecting (-1, -1) gives the apex.
        let p = problem(Some(vec![1.0, -1.0]), 0.0, vec![0.0, 0.0], vec![1.0, 1.0]);
        let v = project_tangent_cone(&p, &[0.0, 0.0], &[-1.0, -1.0]).unwrap();
        assert!(v.iter().all(|c| c.abs() < 1e-14), "{v:?}");
        // and a point with positive diagonal component lands on the ray
        let v = project_tangent_cone(&p, &[0.0, 0.0], &[3.0, 1.0]).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn tangent_cone_member_unchanged() {
        let p = problem(Some(vec![1.0, 1.0, 1.0]), 1.0, vec![0.0; 3], vec![1.0; 3]);
        let x = [0.0, 0.5, 0.5];
        let v = [0.2, -0.3, 0.1];
        assert_eq!(project_tangent_cone(&p, &x, &v).unwrap(), v.to_vec());
    }

    #[test]
    fn breakpoint_formulas() {
        let p = problem(None, 0.0, vec![0.0, 0.0], vec![1.0, 1.0]);
        let bp = breakpoints(&p, &[0.5, 0.5], &[1.0, -1.0]).unwrap();
        assert_eq!(bp.omega, vec![Some(0.5), Some(0.5)]);
        assert_eq!(bp.min, 0.5);

        let p = problem(None, 0.0, vec![0.0, 0.0], vec![f64::INFINITY, 1.0]);
        let bp = breakpoints(&p, &[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert_eq!(bp.omega, vec![Some(f64::INFINITY), None]);
        assert!(bp.min.is_infinite());
        assert_eq!(bp.max_finite, None);

        assert!(matches!(breakpoints(&p, &[0.5, 0.5], &[0.0, 0.0]), Err(Error::ZeroDirection)));
    }
}
