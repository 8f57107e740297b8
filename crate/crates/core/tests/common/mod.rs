#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slbqp::{DenseSym, Hessian, LinearConstraint, Problem};

pub fn dense_matrix(p: &Problem) -> DMatrix<f64> {
    let n = p.n();
    DMatrix::from_row_slice(n, n, &p.hessian().to_dense())
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ratio of the largest to the smallest eigenvalue magnitude.
pub fn condition(m: &DMatrix<f64>) -> f64 {
    let ev = eigenvalues(m);
    let abs: Vec<f64> = ev.iter().map(|v| v.abs()).collect();
    abs.iter().copied().fold(0.0, f64::max) / abs.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis of the complement of `q`, as columns.
pub fn complement_basis(q: &[f64]) -> DMatrix<f64> {
    let n = q.len();
    let qv = DVector::from_column_slice(q);
    let proj = DMatrix::identity(n, n) - &qv * qv.transpose() / qv.norm_squared();
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&k| eig.eigenvalues[k] > 0.5)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// `V' H V` for an orthonormal basis `V` of the complement of `q`.
pub fn restricted_hessian(h: &DMatrix<f64>, q: &[f64]) -> DMatrix<f64> {
    let v = complement_basis(q);
    v.transpose() * h * v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pattern {
    Lower,
    Upper,
    Free,
}

fn patterns(n: usize) -> impl Iterator<Item = Vec<Pattern>> {
    (0..3usize.pow(n as u32)).map(move |mut code| {
        (0..n)
            .map(|_| {
                let p = match code % 3 {
                    0 => Pattern::Free,
                    1 => Pattern::Lower,
                    _ => Pattern::Upper,
                };
                code /= 3;
                p
            })
            .collect()
    })
}

fn fixed_value(pat: Pattern, l: f64, u: f64) -> Option<f64> {
    match pat {
        Pattern::Lower if l.is_finite() => Some(l),
        Pattern::Upper if u.is_finite() => Some(u),
        Pattern::Free => None,
        _ => Some(f64::NAN),
    }
}

/// Minimizer of `1/2 x'Hx - c'x` over `{x : q'x = b, l <= x <= u}` by
/// enumerating every lower/upper/free pattern, solving the face KKT system
/// and keeping the best feasible candidate. Requires `H` positive definite.
pub fn qp_oracle(
    h: &DMatrix<f64>,
    c: &[f64],
    con: Option<(&[f64], f64)>,
    l: &[f64],
    u: &[f64],
) -> Option<Vec<f64>> {
    let n = c.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    'outer: for pat in patterns(n) {
        let mut x = vec![0.0; n];
        let mut free = Vec::new();
        for i in 0..n {
            match fixed_value(pat[i], l[i], u[i]) {
                Some(v) if v.is_nan() => continue 'outer,
                Some(v) => x[i] = v,
                None => free.push(i),
            }
        }
        let nf = free.len();
        let with_q = con.map(|(q, _)| free.iter().any(|&i| q[i] != 0.0)).unwrap_or(false);
        let dim = nf + usize::from(with_q);
        let mut k = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                k[(a, b)] = h[(i, j)];
            }
            let fixed_part: f64 = (0..n).filter(|j| !free.contains(j)).map(|j| h[(i, j)] * x[j]).sum();
            rhs[a] = c[i] - fixed_part;
        }
        if let Some((q, b)) = con {
            let fixed_q: f64 = (0..n).filter(|j| !free.contains(j)).map(|j| q[j] * x[j]).sum();
            if with_q {
                for (a, &i) in free.iter().enumerate() {
                    k[(a, nf)] = q[i];
                    k[(nf, a)] = q[i];
                }
                rhs[nf] = b - fixed_q;
            } else if (fixed_q - b).abs() > 1e-9 * (1.0 + b.abs()) {
                continue;
            }
        }
        if dim > 0 {
            let Some(sol) = k.lu().solve(&rhs) else { continue };
            for (a, &i) in free.iter().enumerate() {
                x[i] = sol[a];
            }
        }
        let feasible = (0..n).all(|i| x[i] >= l[i] - 1e-9 && x[i] <= u[i] + 1e-9);
        if !feasible {
            continue;
        }
        let xv = DVector::from_column_slice(&x);
        let f = 0.5 * xv.dot(&(h * &xv)) - xv.dot(&DVector::from_column_slice(c));
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Euclidean projection by the same enumeration (`H = I`, `c = y`).
pub fn projection_oracle(y: &[f64], con: Option<(&[f64], f64)>, l: &[f64], u: &[f64]) -> Option<Vec<f64>> {
    qp_oracle(&DMatrix::identity(y.len(), y.len()), y, con, l, u)
}

/// Minimizer of `1/2 d'Hd + g'd` with `d_i = 0` off `free` and `q'd = 0`.
pub fn face_step_oracle(h: &DMatrix<f64>, g: &[f64], q: Option<&[f64]>, free: &[usize]) -> Vec<f64> {
    let n = g.len();
    let nf = free.len();
    let with_q = q.map(|q| free.iter().any(|&i| q[i] != 0.0)).unwrap_or(false);
    let dim = nf + usize::from(with_q);
    let mut k = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            k[(a, b)] = h[(i, j)];
        }
        rhs[a] = -g[i];
        if with_q {
            let q = q.unwrap();
            k[(a, nf)] = q[i];
            k[(nf, a)] = q[i];
        }
    }
    let sol = k.lu().solve(&rhs).expect("nonsingular face KKT system");
    let mut d = vec![0.0; n];
    for (a, &i) in free.iter().enumerate() {
        d[i] = sol[a];
    }
    d
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let qr = a.qr();
    let q = qr.q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(lo..hi)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn to_hessian(m: &DMatrix<f64>) -> Hessian {
    let n = m.nrows();
    let data: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
    Hessian::Dense(DenseSym::new(n, data).unwrap())
}

/// Random bounds: finite, one-sided or absent, always with `l < u`.
pub fn random_bounds(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut l = vec![f64::NEG_INFINITY; n];
    let mut u = vec![f64::INFINITY; n];
    for i in 0..n {
        let a = rng.gen_range(-2.0..0.0);
        let b = rng.gen_range(0.1..2.0);
        match rng.gen_range(0..6) {
            0 => {}
            1 => l[i] = a,
            2 => u[i] = b,
            _ => {
                l[i] = a;
                u[i] = b;
            }
        }
    }
    (l, u)
}

/// A random point inside the box with some coordinates pushed onto bounds.
pub fn random_box_point(rng: &mut ChaCha8Rng, l: &[f64], u: &[f64], p_bound: f64) -> Vec<f64> {
    (0..l.len())
        .map(|i| {
            let lo = if l[i].is_finite() { l[i] } else { -3.0 };
            let hi = if u[i].is_finite() { u[i] } else { 3.0 };
            if rng.gen_bool(p_bound) {
                if rng.gen_bool(0.5) && l[i].is_finite() {
                    return l[i];
                }
                if u[i].is_finite() {
                    return u[i];
                }
            }
            rng.gen_range(lo..hi)
        })
        .collect()
}

/// Random problem of size `n` with a feasible point `x` on the constraint.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, linear: bool, h: &DMatrix<f64>) -> (Problem, Vec<f64>) {
    let (l, u) = random_bounds(rng, n);
    let x = random_box_point(rng, &l, &u, 0.4);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let con = linear.then(|| {
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = q.iter().zip(&x).map(|(a, b)| a * b).sum();
        LinearConstraint { q, b }
    });
    (Problem::new(to_hessian(h), c, con, l, u).unwrap(), x)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
