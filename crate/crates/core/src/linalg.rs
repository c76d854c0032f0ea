//! Complex linear-algebra kernels used by the master-equation solver.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iterations: usize,
    /// Target for `|b - A x| / |b|`.
    pub tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 60, max_iterations: 5000, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: DVector<C>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn givens(a: C, b: C) -> (f64, C) {
    let nu = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if nu == 0.0 {
        return (1.0, C::new(0.0, 0.0));
    }
    if a.norm() == 0.0 {
        return (0.0, C::new(1.0, 0.0));
    }
    let phase = a / a.norm();
    (a.norm() / nu, phase * b.conj() / nu)
}

fn rotate(c: f64, s: C, x: C, y: C) -> (C, C) {
    (x * c + s * y, -s.conj() * x + y * c)
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from zero.
/// `apply` computes `A v`, `precond` an approximation of `A^-1 v`.
pub fn gmres(
    mut apply: impl FnMut(&DVector<C>) -> DVector<C>,
    mut precond: impl FnMut(&DVector<C>) -> DVector<C>,
    b: &DVector<C>,
    options: &GmresOptions,
) -> Result<GmresOutcome> {
    let n = b.len();
    let b_norm = b.norm();
    let mut x = DVector::zeros(n);
    if b_norm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let m = options.restart.max(1);
    let mut r = b.clone();
    let mut beta = b_norm;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        let mut basis: Vec<DVector<C>> = vec![&r / C::new(beta, 0.0)];
        let mut h = DMatrix::<C>::zeros(m + 1, m);
        let mut rotations: Vec<(f64, C)> = Vec::with_capacity(m);
        let mut g = DVector::<C>::zeros(m + 1);
        g[0] = C::new(beta, 0.0);
        let mut used = 0;
        for j in 0..m {
            iterations += 1;
            used = j + 1;
            let mut w = apply(&precond(&basis[j]));
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let coef = v.dotc(&w);
                    h[(i, j)] += coef;
                    w.axpy(-coef, v, C::new(1.0, 0.0));
                }
            }
            let w_norm = w.norm();
            h[(j + 1, j)] = C::new(w_norm, 0.0);
            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (p, q) = rotate(c, s, h[(i, j)], h[(i + 1, j)]);
                h[(i, j)] = p;
                h[(i + 1, j)] = q;
            }
            let (c, s) = givens(h[(j, j)], h[(j + 1, j)]);
            let (p, _) = rotate(c, s, h[(j, j)], h[(j + 1, j)]);
            h[(j, j)] = p;
            h[(j + 1, j)] = C::new(0.0, 0.0);
            let (gj, gj1) = rotate(c, s, g[j], g[j + 1]);
            g[j] = gj;
            g[j + 1] = gj1;
            rotations.push((c, s));
            let breakdown = w_norm <= 1e-14 * beta;
            if g[j + 1].norm() <= options.tol * b_norm || breakdown || iterations >= options.max_iterations {
                break;
            }
            basis.push(w / C::new(w_norm, 0.0));
        }
        let mut y = DVector::<C>::zeros(used);
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= h[(i, k)] * y[k];
            }
            if h[(i, i)].norm() == 0.0 {
                return Err(Error::NotConverged { method: "gmres", residual: beta / b_norm });
            }
            y[i] = acc / h[(i, i)];
        }
        let mut update = DVector::<C>::zeros(n);
        for (i, v) in basis.iter().take(used).enumerate() {
            update.axpy(y[i], v, C::new(1.0, 0.0));
        }
        x += precond(&update);
        r = b - apply(&x);
        beta = r.norm();
        if beta <= options.tol * b_norm {
            return Ok(GmresOutcome { x, iterations, relative_residual: beta / b_norm });
        }
    }
    Err(Error::NotConverged { method: "gmres", residual: beta / b_norm })
}

/// Complex Schur form `A = Q T Q^H` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct SchurFactor {
    pub q: DMatrix<C>,
    pub t: DMatrix<C>,
}

impl SchurFactor {
    pub fn new(a: DMatrix<C>) -> Self {
        let (q, t) = Schur::new(a).unpack();
        Self { q, t }
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }
}

/// Solves `A X + X B^H = F` by Bartels-Stewart on precomputed Schur forms.
/// A pair of eigenvalues with `|a_i + conj(b_j)| <= tol` is reported as a
/// degenerate steady state.
pub fn solve_sylvester(a: &SchurFactor, b: &SchurFactor, f: &DMatrix<C>, tol: f64) -> Result<DMatrix<C>> {
    let (m, n) = (a.dim(), b.dim());
    let rhs = a.q.adjoint() * f * &b.q;
    let mut y = DMatrix::<C>::zeros(m, n);
    // Y S^H, S upper triangular: column j needs columns l > j
    for j in (0..n).rev() {
        let mut col = rhs.column(j).clone_owned();
        for l in j + 1..n {
            let coef = b.t[(j, l)].conj();
            if coef != C::new(0.0, 0.0) {
                col.axpy(-coef, &y.column(l), C::new(1.0, 0.0));
            }
        }
        let shift = b.t[(j, j)].conj();
        for i in (0..m).rev() {
            let mut acc = col[i];
            for k in i + 1..m {
                acc -= a.t[(i, k)] * y[(k, j)];
            }
            let diag = a.t[(i, i)] + shift;
            if diag.norm() <= tol {
                return Err(Error::DegenerateSteadyState);
            }
            y[(i, j)] = acc / diag;
        }
    }
    Ok(&a.q * y * b.q.adjoint())
}
