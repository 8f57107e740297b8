//! JSON problem files and generator sidecars.
//!
//! Infinite bounds are written as `null`. The Hessian is stored densely, as
//! lower-triangle coordinates, or (for generated problems) as the diagonal
//! and reflection vectors of `G D G'`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gen::{GeneratedInstance, ReflectedDiagonal};
use crate::model::{CooSym, DenseSym, Hessian, LinearConstraint, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HessianFormat {
    Dense,
    Coo,
    Reflections,
}

impl std::str::FromStr for HessianFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(HessianFormat::Dense),
            "coo" => Ok(HessianFormat::Coo),
            "reflections" => Ok(HessianFormat::Reflections),
            _ => Err(Error::InvalidConfig(format!("unknown Hessian format '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum HessianFile {
    Dense { rows: Vec<Vec<f64>> },
    Coo { i: Vec<usize>, j: Vec<usize>, v: Vec<f64> },
    Reflections { d: Vec<f64>, p: [Vec<f64>; 3] },
}

impl HessianFile {
    pub fn dense(h: &Hessian) -> Self {
        let n = h.dim();
        let data = h.to_dense();
        HessianFile::Dense { rows: data.chunks(n).map(<[f64]>::to_vec).collect() }
    }

    /// Nonzero lower-triangle entries.
    pub fn coo(h: &Hessian) -> Self {
        if let Hessian::Coo(m) = h {
            let (mut i, mut j, mut v) = (Vec::new(), Vec::new(), Vec::new());
            for (r, c, x) in m.triplets() {
                i.push(r);
                j.push(c);
                v.push(x);
            }
            return HessianFile::Coo { i, j, v };
        }
        let n = h.dim();
        let data = h.to_dense();
        let (mut i, mut j, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for r in 0..n {
            for c in 0..=r {
                let x = data[r * n + c];
                if x != 0.0 {
                    i.push(r);
                    j.push(c);
                    v.push(x);
                }
            }
        }
        HessianFile::Coo { i, j, v }
    }

    pub fn reflections(h: &ReflectedDiagonal) -> Self {
        HessianFile::Reflections { d: h.d.clone(), p: h.p.clone() }
    }

    fn into_hessian(self, n: usize) -> Result<Hessian> {
        match self {
            HessianFile::Dense { rows } => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidProblem(format!("dense Hessian must be {n} x {n}")));
                }
                Ok(Hessian::Dense(DenseSym::from_rows(&rows)?))
            }
            HessianFile::Coo { i, j, v } => Ok(Hessian::Coo(CooSym::new(n, i, j, v)?)),
            HessianFile::Reflections { d, p } => {
                crate::error::check_len(n, d.len())?;
                Ok(Hessian::Operator(Arc::new(ReflectedDiagonal::new(d, p)?)))
            }
        }
    }
}

/// On-disk form of a [`Problem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    pub c: Vec<f64>,
    pub q: Option<Vec<f64>>,
    pub b: Option<f64>,
    pub l: Vec<Option<f64>>,
    pub u: Vec<Option<f64>>,
    #[serde(rename = "H")]
    pub h: HessianFile,
}

impl ProblemFile {
    pub fn new(p: &Problem, h: HessianFile) -> Self {
        let finite = |v: &f64| v.is_finite().then_some(*v);
        Self {
            n: p.n(),
            c: p.c().to_vec(),
            q: p.q().map(<[f64]>::to_vec),
            b: p.constraint().map(|lc| lc.b),
            l: p.lower().iter().map(finite).collect(),
            u: p.upper().iter().map(finite).collect(),
            h,
        }
    }

    /// Uses the requested format; `Reflections` needs the generator operator.
    pub fn from_problem(p: &Problem, format: HessianFormat, refl: Option<&ReflectedDiagonal>) -> Result<Self> {
        let h = match format {
            HessianFormat::Dense => HessianFile::dense(p.hessian()),
            HessianFormat::Coo => HessianFile::coo(p.hessian()),
            HessianFormat::Reflections => HessianFile::reflections(refl.ok_or_else(|| {
                Error::InvalidConfig("reflection format is only available for generated problems".into())
            })?),
        };
        Ok(Self::new(p, h))
    }

    pub fn into_problem(self) -> Result<Problem> {
        let n = self.n;
        let constraint = match (self.q, self.b) {
            (Some(q), Some(b)) => Some(LinearConstraint { q, b }),
            (None, None) => None,
            (Some(q), None) => Some(LinearConstraint { q, b: 0.0 }),
            (None, Some(_)) => return Err(Error::InvalidProblem("b given without q".into())),
        };
        let lower = self.l.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let upper = self.u.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        let h = self.h.into_hessian(n)?;
        Problem::new(h, self.c, constraint, lower, upper)
    }
}

pub fn problem_to_json(file: &ProblemFile) -> Result<String> {
    Ok(serde_json::to_string(file)?)
}

pub fn problem_from_json(text: &str) -> Result<Problem> {
    let file: ProblemFile = serde_json::from_str(text)?;
    file.into_problem()
}

pub fn read_problem(path: impl AsRef<Path>) -> Result<Problem> {
    problem_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_problem(path: impl AsRef<Path>, file: &ProblemFile) -> Result<()> {
    std::fs::write(path, problem_to_json(file)?)?;
    Ok(())
}

/// Planted solution data written next to a generated problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub x_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub rho_star: f64,
    pub seed: u64,
    pub x0: Vec<f64>,
}

impl Sidecar {
    pub fn from_instance(inst: &GeneratedInstance) -> Self {
        Self {
            x_star: inst.x_star.clone(),
            lambda_star: inst.lambda_star.clone(),
            rho_star: inst.rho_star,
            seed: inst.params.seed,
            x0: inst.x0.clone(),
        }
    }
}
