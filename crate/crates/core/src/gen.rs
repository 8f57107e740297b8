//! Random problems with a planted stationary point.
//!
//! The Hessian is `H = G D G'` with `G` a product of three Householder
//! reflections and `D` diagonal with entries spread geometrically over
//! `[1, 10^ncond]` (some zeroed or negated). Active bounds, multipliers and the
//! linear term are chosen so that `x*` satisfies the KKT conditions with
//! multipliers `lambda*` and `rho*`.
//!
//! All random draws come from one ChaCha8 stream seeded with `seed`, in this
//! order, each drawing a full length-`n` vector even if unused: `x*`, the
//! three reflection vectors, `xi` (eigenvalue kind), `chi` (active), `psi`
//! (degenerate), `mu` (multiplier size), `nu` (lower/upper), `q`, then `rho*`
//! and finally the starting point draws.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};
use crate::model::{Activity, Hessian, LinearConstraint, LinearOperator, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub ncond: f64,
    pub zeroeig: f64,
    pub negeig: f64,
    pub naxsol: f64,
    pub degvar: f64,
    pub ndeg: f64,
    /// Include the linear equality constraint.
    pub linear: bool,
    pub nax0: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n: 100,
            ncond: 4.0,
            zeroeig: 0.0,
            negeig: 0.0,
            naxsol: 0.5,
            degvar: 0.0,
            ndeg: 0.0,
            linear: true,
            nax0: 0.0,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        let checks = [
            (self.n >= 1, "n must be positive"),
            (self.ncond >= 0.0 && self.ncond.is_finite(), "ncond must be nonnegative"),
            (unit(self.zeroeig), "zeroeig must lie in [0, 1)"),
            (unit(self.negeig), "negeig must lie in [0, 1)"),
            (unit(self.naxsol), "naxsol must lie in [0, 1)"),
            (unit(self.degvar), "degvar must lie in [0, 1)"),
            (self.ndeg >= 0.0 && self.ndeg.is_finite(), "ndeg must be nonnegative"),
            (unit(self.nax0), "nax0 must lie in [0, 1)"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::InvalidConfig((*msg).into())),
            None => {
                if self.zeroeig + self.negeig >= 1.0 {
                    log::warn!("zeroeig + negeig >= 1: no positive eigenvalues will be drawn");
                }
                Ok(())
            }
        }
    }
}

/// `H = G D G'` applied through the reflections, never formed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectedDiagonal {
    pub d: Vec<f64>,
    /// Unit vectors `p1, p2, p3`; `G = R3 R2 R1` with `Rj = I - 2 pj pj'`.
    pub p: [Vec<f64>; 3],
}

impl ReflectedDiagonal {
    pub fn new(d: Vec<f64>, p: [Vec<f64>; 3]) -> Result<Self> {
        for v in &p {
            crate::error::check_len(d.len(), v.len())?;
            if (norm2(v) - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidProblem("reflection vectors must have unit norm".into()));
            }
        }
        Ok(Self { d, p })
    }

    fn reflect(p: &[f64], v: &mut [f64]) {
        let t = 2.0 * dot(p, v);
        for (vi, pi) in v.iter_mut().zip(p) {
            *vi -= t * pi;
        }
    }
}

impl LinearOperator for ReflectedDiagonal {
    fn dim(&self) -> usize {
        self.d.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        for p in self.p.iter().rev() {
            Self::reflect(p, out);
        }
        for (o, d) in out.iter_mut().zip(&self.d) {
            *o *= d;
        }
        for p in &self.p {
            Self::reflect(p, out);
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub params: GenParams,
    pub problem: Problem,
    pub hessian: Arc<ReflectedDiagonal>,
    pub x_star: Vec<f64>,
    /// Bound multipliers: nonnegative on lower-active, nonpositive on
    /// upper-active, zero elsewhere.
    pub lambda_star: Vec<f64>,
    /// Multiplier of the linear constraint (0 without one).
    pub rho_star: f64,
    /// Starting point for `params.nax0`; may be infeasible.
    pub x0: Vec<f64>,
    pub planted: Vec<Activity>,
    /// Active indices with a zero multiplier.
    pub degenerate: Vec<usize>,
}

impl GeneratedInstance {
    pub fn lower_active(&self) -> Vec<usize> {
        self.indices(Activity::Lower)
    }

    pub fn upper_active(&self) -> Vec<usize> {
        self.indices(Activity::Upper)
    }

    /// Active indices with a nonzero multiplier.
    pub fn nondegenerate_active(&self) -> Vec<usize> {
        (0..self.planted.len())
            .filter(|&i| self.planted[i] != Activity::Free && !self.degenerate.contains(&i))
            .collect()
    }

    fn indices(&self, a: Activity) -> Vec<usize> {
        (0..self.planted.len()).filter(|&i| self.planted[i] == a).collect()
    }
}

fn open01(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Open01)
}

fn draw(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| open01(rng)).collect()
}

fn draw_sym(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 2.0 * open01(rng) - 1.0).collect()
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = draw_sym(rng, n);
        let norm = norm2(&v);
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Diagonal magnitude `10^(i ncond / (n-1))` for the 0-based index `i`.
pub fn eigen_magnitude(i: usize, n: usize, ncond: f64) -> f64 {
    if n == 1 {
        1.0
    } else {
        10f64.powf(i as f64 * ncond / (n - 1) as f64)
    }
}

struct Planted {
    problem: Problem,
    hessian: Arc<ReflectedDiagonal>,
    x_star: Vec<f64>,
    lambda_star: Vec<f64>,
    rho_star: f64,
    planted: Vec<Activity>,
    degenerate: Vec<usize>,
}

fn plant(gp: &GenParams, rng: &mut ChaCha8Rng) -> Result<Planted> {
    let n = gp.n;
    let x_star = draw_sym(rng, n);
    let p = [unit_vector(rng, n), unit_vector(rng, n), unit_vector(rng, n)];
    let xi = draw(rng, n);
    let chi = draw(rng, n);
    let psi = draw(rng, n);
    let mu = draw(rng, n);
    let nu = draw(rng, n);
    let q = draw_sym(rng, n);
    let rho_star = if gp.linear {
        loop {
            let r = 2.0 * open01(rng) - 1.0;
            if r != 0.0 {
                break r;
            }
        }
    } else {
        0.0
    };

    let d: Vec<f64> = (0..n)
        .map(|i| {
            let mag = eigen_magnitude(i, n, gp.ncond);
            if xi[i] <= gp.zeroeig {
                0.0
            } else if xi[i] <= gp.zeroeig + gp.negeig {
                -mag
            } else {
                mag
            }
        })
        .collect();
    let hessian = Arc::new(ReflectedDiagonal::new(d, p)?);

    let mut planted = vec![Activity::Free; n];
    let mut degenerate = Vec::new();
    let mut lambda = vec![0.0; n];
    let mut lower = vec![-1.0; n];
    let mut upper = vec![1.0; n];
    for i in 0..n {
        if chi[i] > gp.naxsol {
            continue;
        }
        if psi[i] <= gp.degvar {
            degenerate.push(i);
        } else {
            lambda[i] = 10f64.powf(-mu[i] * gp.ndeg);
        }
        if nu[i] < 0.5 {
            planted[i] = Activity::Lower;
            lower[i] = x_star[i];
        } else {
            planted[i] = Activity::Upper;
            upper[i] = x_star[i];
            lambda[i] = -lambda[i];
        }
    }

    let mut hx = vec![0.0; n];
    hessian.apply(&x_star, &mut hx);
    let c: Vec<f64> = (0..n).map(|i| hx[i] - lambda[i] - rho_star * q[i]).collect();
    let constraint = gp.linear.then(|| LinearConstraint { b: dot(&q, &x_star), q });
    let problem = Problem::new(Hessian::Operator(hessian.clone()), c, constraint, lower, upper)?;
    Ok(Planted { problem, hessian, x_star, lambda_star: lambda, rho_star, planted, degenerate })
}

fn start_point(p: &Problem, nax0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = p.n();
    let theta = draw(rng, n);
    let side = draw(rng, n);
    (0..n)
        .map(|i| {
            let (l, u) = (p.lower()[i], p.upper()[i]);
            if theta[i] <= nax0 {
                if side[i] < 0.5 {
                    l
                } else {
                    u
                }
            } else {
                0.5 * (l + u)
            }
        })
        .collect()
}

/// Builds an instance; identical parameters give bit-identical output.
pub fn generate(gp: &GenParams) -> Result<GeneratedInstance> {
    let (inst, _) = generate_with_starts(gp, &[])?;
    Ok(inst)
}

/// Builds an instance plus starting points for other `nax0` values; each
/// start equals the `x0` that [`generate`] returns for that `nax0`.
pub fn generate_with_starts(gp: &GenParams, nax0: &[f64]) -> Result<(GeneratedInstance, Vec<Vec<f64>>)> {
    gp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(gp.seed);
    let pl = plant(gp, &mut rng)?;
    let starts = nax0.iter().map(|&a| start_point(&pl.problem, a, &mut rng.clone())).collect();
    let x0 = start_point(&pl.problem, gp.nax0, &mut rng);
    let inst = GeneratedInstance {
        params: *gp,
        problem: pl.problem,
        hessian: pl.hessian,
        x_star: pl.x_star,
        lambda_star: pl.lambda_star,
        rho_star: pl.rho_star,
        x0,
        planted: pl.planted,
        degenerate: pl.degenerate,
    };
    Ok((inst, starts))
}

/// `max_i |∇f(x*) - lambda* - rho* q|_i` plus bound and complementarity
/// violations of the planted triple.
pub fn planted_kkt_residual(inst: &GeneratedInstance) -> Result<f64> {
    crate::stationarity::kkt_residual(&inst.problem, &inst.x_star, &inst.lambda_star, inst.rho_star)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    SconvNondeg,
    SconvDeg,
    Convex,
    Nonconvex,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 4] =
        [SuiteKind::SconvNondeg, SuiteKind::SconvDeg, SuiteKind::Convex, SuiteKind::Nonconvex];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::SconvNondeg => "sconv_nondeg",
            SuiteKind::SconvDeg => "sconv_deg",
            SuiteKind::Convex => "convex",
            SuiteKind::Nonconvex => "nonconvex",
        }
    }

    /// Parameter grid `(ncond, naxsol, varying)` expanded into parameter sets.
    pub fn grid(self, n: usize, linear: bool) -> Vec<GenParams> {
        let base = GenParams { n, linear, ndeg: 1.0, ..GenParams::default() };
        let mut out = Vec::new();
        for ncond in [4.0, 5.0, 6.0] {
            for naxsol in [0.1, 0.5, 0.9] {
                let p = GenParams { ncond, naxsol, ..base };
                match self {
                    SuiteKind::SconvNondeg => {
                        out.extend([0.0, 1.0, 3.0].map(|ndeg| GenParams { ndeg, ..p }))
                    }
                    SuiteKind::SconvDeg => {
                        out.extend([0.2, 0.5].map(|degvar| GenParams { degvar, ..p }))
                    }
                    SuiteKind::Convex => {
                        out.extend([0.1, 0.2, 0.5].map(|zeroeig| GenParams { zeroeig, ..p }))
                    }
                    SuiteKind::Nonconvex => {
                        out.extend([0.1, 0.2, 0.5].map(|negeig| GenParams { negeig, ..p }))
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite '{s}'")))
    }
}

/// Fractions of active variables at the four standard starting points.
pub const SUITE_NAX0: [f64; 4] = [0.0, 0.1, 0.5, 0.9];

#[derive(Clone, Debug)]
pub struct SuiteProblem {
    pub id: String,
    pub instance: GeneratedInstance,
    /// `(nax0, x0)` pairs.
    pub starts: Vec<(f64, Vec<f64>)>,
}

/// The suite's instances; instance `k` uses seed `seed + k`.
pub fn suite(kind: SuiteKind, linear: bool, n: usize, seed: u64) -> Result<Vec<SuiteProblem>> {
    kind.grid(n, linear)
        .into_iter()
        .enumerate()
        .map(|(k, gp)| {
            let gp = GenParams { seed: seed.wrapping_add(k as u64), ..gp };
            let (instance, starts) = generate_with_starts(&gp, &SUITE_NAX0)?;
            Ok(SuiteProblem {
                id: format!("{}-{:02}", kind.name(), k),
                instance,
                starts: SUITE_NAX0.iter().copied().zip(starts).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(SuiteKind::SconvNondeg.grid(10, true).len(), 27);
        assert_eq!(SuiteKind::SconvDeg.grid(10, true).len(), 18);
        assert_eq!(SuiteKind::Convex.grid(10, true).len(), 27);
        assert_eq!(SuiteKind::Nonconvex.grid(10, true).len(), 27);
        assert!(SuiteKind::SconvNondeg.grid(10, true).iter().all(|g| g.degvar == 0.0 && g.zeroeig == 0.0));
    }

    #[test]
    fn deterministic() {
        let gp = GenParams { n: 30, seed: 7, nax0: 0.5, ..GenParams::default() };
        let a = generate(&gp).unwrap();
        let b = generate(&gp).unwrap();
        assert_eq!(a.x_star, b.x_star);
        assert_eq!(a.problem.c(), b.problem.c());
        assert_eq!(a.x0, b.x0);
        let c = generate(&GenParams { seed: 8, ..gp }).unwrap();
        assert_ne!(a.x_star, c.x_star);
    }

    #[test]
    fn starts_match_single_generation() {
        let gp = GenParams { n: 20, seed: 3, ..GenParams::default() };
        let (_, starts) = generate_with_starts(&gp, &SUITE_NAX0).unwrap();
        for (k, a) in SUITE_NAX0.iter().enumerate() {
            let inst = generate(&GenParams { nax0: *a, ..gp }).unwrap();
            assert_eq!(inst.x0, starts[k]);
        }
    }

    #[test]
    fn no_active_variables_when_naxsol_is_zero() {
        let gp = GenParams { n: 40, naxsol: 0.0, seed: 1, ..GenParams::default() };
        let inst = generate(&gp).unwrap();
        assert!(inst.planted.iter().all(|a| *a == Activity::Free));
        assert!(inst.lambda_star.iter().all(|l| *l == 0.0));
        assert!(inst.problem.lower().iter().all(|l| *l == -1.0));
        assert!(inst.problem.upper().iter().all(|u| *u == 1.0));
    }

    #[test]
    fn planted_point_is_stationary() {
        for seed in 0..5 {
            let gp = GenParams { n: 50, seed, ndeg: 1.0, degvar: 0.3, ..GenParams::default() };
            let inst = generate(&gp).unwrap();
            let g = inst.problem.gradient(&inst.x_star).unwrap();
            let r = planted_kkt_residual(&inst).unwrap();
            assert!(r <= 1e-10 * (1.0 + norm2(&g)), "residual {r}");
        }
    }

    #[test]
    fn eigen_magnitudes() {
        assert_eq!(eigen_magnitude(0, 5, 4.0), 1.0);
        assert!((eigen_magnitude(4, 5, 4.0) - 1e4).abs() < 1e-9);
        assert_eq!(eigen_magnitude(0, 1, 4.0), 1.0);
    }
}
