//! Optimality measures at a feasible point: the multiplier estimate `rho`,
//! the shifted gradient `h = ∇f - rho q`, the projected gradient, and its
//! split into the free gradient `phi` and the chopped gradient `beta`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::linalg::{dot, norm2, norm_inf};
use crate::model::{Activity, ActiveSets, Problem};
use crate::projection::{project_tangent_cone_with, ProjectionParams};

#[derive(Clone, Debug)]
pub struct GradientSplit {
    pub sets: ActiveSets,
    pub grad: Vec<f64>,
    pub rho: f64,
    pub h: Vec<f64>,
    /// Projection of `-∇f` onto the tangent cone.
    pub proj_grad: Vec<f64>,
    pub phi: Vec<f64>,
    pub beta: Vec<f64>,
    /// `‖phi + beta‖`, equal to `‖proj_grad‖`.
    pub measure: f64,
}

impl GradientSplit {
    pub fn phi_norm(&self) -> f64 {
        norm2(&self.phi)
    }

    pub fn beta_inf_norm(&self) -> f64 {
        norm_inf(&self.beta)
    }

    pub fn proj_grad_inf_norm(&self) -> f64 {
        norm_inf(&self.proj_grad)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierEstimate {
    pub rho: f64,
    /// Full-length vector; zero on free indices.
    pub lambda: Vec<f64>,
}

/// `q_F' ∇f_F / q_F' q_F`, or 0 when `q_F = 0` (this includes an empty free
/// set and the bound-constrained case).
pub fn rho(p: &Problem, sets: &ActiveSets, grad: &[f64]) -> f64 {
    let Some(q) = p.q() else { return 0.0 };
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..p.n() {
        if sets.is_free(i) {
            num += q[i] * grad[i];
            den += q[i] * q[i];
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Computes the split at feasible `x` with a known gradient.
pub fn split(
    p: &Problem,
    x: &[f64],
    grad: Vec<f64>,
    params: &ProjectionParams,
) -> Result<GradientSplit> {
    let sets = p.active_sets(x)?;
    split_with_sets(p, sets, grad, params)
}

pub fn split_with_sets(
    p: &Problem,
    sets: ActiveSets,
    grad: Vec<f64>,
    params: &ProjectionParams,
) -> Result<GradientSplit> {
    check_len(p.n(), grad.len())?;
    let rho = rho(p, &sets, &grad);
    let h: Vec<f64> = match p.q() {
        Some(q) => grad.iter().zip(q).map(|(g, qi)| g - rho * qi).collect(),
        None => grad.clone(),
    };
    let phi: Vec<f64> = (0..p.n()).map(|i| if sets.is_free(i) { h[i] } else { 0.0 }).collect();
    let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
    let proj_grad = project_tangent_cone_with(p, &sets, &neg_grad, params)?;
    // With a linear constraint beta is a multiple of q on the free indices,
    // not zero: releasing a non-binding bound shifts the cone multiplier.
    let beta: Vec<f64> = proj_grad.iter().zip(&phi).map(|(pg, ph)| -pg - ph).collect();
    let measure = norm2(&proj_grad);
    Ok(GradientSplit { sets, grad, rho, h, proj_grad, phi, beta, measure })
}

/// `B(x)`: active indices whose `h_i` has the sign of a valid multiplier.
pub fn binding_set(split: &GradientSplit) -> Vec<usize> {
    (0..split.h.len())
        .filter(|&i| match split.sets.get(i) {
            Activity::Lower => split.h[i] >= 0.0,
            Activity::Upper => split.h[i] <= 0.0,
            Activity::Free => false,
        })
        .collect()
}

/// `A(x) = B(x)`.
pub fn all_active_binding(split: &GradientSplit) -> bool {
    (0..split.h.len()).all(|i| match split.sets.get(i) {
        Activity::Lower => split.h[i] >= 0.0,
        Activity::Upper => split.h[i] <= 0.0,
        Activity::Free => true,
    })
}

pub fn multiplier_estimates(split: &GradientSplit) -> MultiplierEstimate {
    let lambda = (0..split.h.len())
        .map(|i| match split.sets.get(i) {
            Activity::Lower => split.h[i].max(0.0),
            Activity::Upper => split.h[i].min(0.0),
            Activity::Free => 0.0,
        })
        .collect();
    MultiplierEstimate { rho: split.rho, lambda }
}

/// `‖beta‖_inf <= gamma ‖phi‖_2`. With `phi = 0` only `beta = 0` passes.
pub fn is_proportional(split: &GradientSplit, gamma: f64) -> bool {
    split.beta_inf_norm() <= gamma * split.phi_norm()
}

/// KKT residual of a candidate primal-dual triple `(x, lambda, rho)`:
/// `‖∇f - lambda - rho q‖_inf` plus sign and complementarity violations.
pub fn kkt_residual(p: &Problem, x: &[f64], lambda: &[f64], rho: f64) -> Result<f64> {
    let grad = p.gradient(x)?;
    let sets = p.active_sets(x)?;
    let q = p.q();
    let mut res = 0.0f64;
    for i in 0..p.n() {
        let qi = q.map_or(0.0, |q| q[i]);
        res = res.max((grad[i] - lambda[i] - rho * qi).abs());
        let sign_violation = match sets.get(i) {
            Activity::Lower => (-lambda[i]).max(0.0),
            Activity::Upper => lambda[i].max(0.0),
            Activity::Free => lambda[i].abs(),
        };
        res = res.max(sign_violation);
    }
    res = res.max(p.constraint_violation(x));
    Ok(res)
}

/// `‖phi‖^2 - (-proj_grad)' phi` and friends, used by the identity tests.
pub fn decomposition_defect(split: &GradientSplit) -> f64 {
    let phi_beta: Vec<f64> = split.phi.iter().zip(&split.beta).map(|(a, b)| a + b).collect();
    let neg_pg: Vec<f64> = split.proj_grad.iter().map(|v| -v).collect();
    let diff: f64 = phi_beta.iter().zip(&neg_pg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    diff.max(dot(&split.beta, &split.phi).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DenseSym, Hessian, LinearConstraint};

    fn unit_box(q: Option<Vec<f64>>, b: f64, n: usize) -> Problem {
        Problem::new(
            Hessian::Dense(DenseSym::identity(n)),
            vec![0.0; n],
            q.map(|q| LinearConstraint { q, b }),
            vec![0.0; n],
            vec![1.0; n],
        )
        .unwrap()
    }

    #[test]
    fn rho_cases() {
        let p = unit_box(None, 0.0, 2);
        let sets = p.active_sets(&[0.5, 0.5]).unwrap();
        assert_eq!(rho(&p, &sets, &[3.0, 1.0]), 0.0);

        let p = unit_box(Some(vec![1.0, 1.0]), 1.0, 2);
        let sets = p.active_sets(&[0.5, 0.5]).unwrap();
        assert_eq!(rho(&p, &sets, &[3.0, 1.0]), 2.0);

        // q_F = 0 with a free component
        let p = unit_box(Some(vec![0.0, 1.0]), 1.0, 2);
        let sets = p.active_sets(&[0.5, 1.0]).unwrap();
        assert_eq!(rho(&p, &sets, &[3.0, 1.0]), 0.0);
    }

    #[test]
    fn interior_point_without_constraint() {
        let p = Problem::new(
            Hessian::Dense(DenseSym::identity(2)),
            vec![0.0; 2],
            None,
            vec![-5.0; 2],
            vec![5.0; 2],
        )
        .unwrap();
        let s = split(&p, &[1.0, 2.0], vec![0.3, -0.7], &ProjectionParams::default()).unwrap();
        assert_eq!(s.phi, vec![0.3, -0.7]);
        assert_eq!(s.beta, vec![0.0, 0.0]);
        assert_eq!(s.proj_grad, vec![-0.3, 0.7]);
    }

    #[test]
    fn vertex_with_binding_bounds() {
        // x = (0, 1), grad = (1, -1): F empty so rho = 0, h = grad, both bounds
        // binding, hence beta = 0 and the projected gradient vanishes.
        let p = unit_box(Some(vec![1.0, 1.0]), 1.0, 2);
        let s = split(&p, &[0.0, 1.0], vec![1.0, -1.0], &ProjectionParams::default()).unwrap();
        assert_eq!(s.rho, 0.0);
        assert_eq!(s.h, vec![1.0, -1.0]);
        assert_eq!(s.phi, vec![0.0, 0.0]);
        assert!(s.beta.iter().all(|b| b.abs() < 1e-15));
        assert!(s.measure < 1e-15);
        assert_eq!(binding_set(&s), vec![0, 1]);
        assert!(all_active_binding(&s));
    }

    #[test]
    fn non_binding_lower_bound() {
        let p = unit_box(None, 0.0, 2);
        let s = split(&p, &[0.0, 0.5], vec![-2.0, 1.0], &ProjectionParams::default()).unwrap();
        assert!(binding_set(&s).is_empty());
        assert_eq!(s.beta, vec![-2.0, 0.0]);
        let m = multiplier_estimates(&s);
        assert_eq!(m.lambda, vec![0.0, 0.0]);
    }

    #[test]
    fn multiplier_signs() {
        let p = unit_box(None, 0.0, 3);
        let s = split(&p, &[0.0, 0.0, 1.0], vec![-0.3, 0.7, 0.4], &ProjectionParams::default()).unwrap();
        let m = multiplier_estimates(&s);
        assert_eq!(m.lambda, vec![0.0, 0.7, 0.0]);
    }

    #[test]
    fn proportionality_boundaries() {
        let p = unit_box(None, 0.0, 2);
        // beta = 0
        let s = split(&p, &[0.5, 0.5], vec![1.0, 0.0], &ProjectionParams::default()).unwrap();
        assert!(is_proportional(&s, 1e-8));
        // phi = 0, beta != 0
        let s = split(&p, &[0.0, 0.0], vec![-1.0, -1.0], &ProjectionParams::default()).unwrap();
        assert!(!is_proportional(&s, 1e8));
        // ‖beta‖_inf = 1 = ‖phi‖, Gamma = 1: tie counts as proportional
        let s = split(&p, &[0.0, 0.5], vec![-1.0, 1.0], &ProjectionParams::default()).unwrap();
        assert!(is_proportional(&s, 1.0));
        assert!(!is_proportional(&s, 0.999));
    }
}
