//! Exact steady state of the driven cavity and emitters from the full master
//! equation, for checking the low-excitation theory on small systems.
//!
//! The Hilbert space is `|n> (x) |bits>` with photon number `n <= n_max`
//! and bit `i` set when emitter `i` is excited; state index
//! `n * 2^N + bits`. The generator is
//!
//! ```text
//! L(rho) = K rho + rho K^H + J(rho) + eta [a^H - a, rho]
//! K      = -i H0 - kappa a^H a - sum_ij gamma_ij s_i^+ s_j
//! J(rho) = 2 kappa a rho a^H + sum_ij 2 gamma_ij s_j rho s_i^+
//! ```
//!
//! which gives `d<a>/dt = -kappa <a>` and `d<s_i>/dt = -gamma <s_i>` for the
//! free decay, matching the mean-field equations. Flattened density
//! matrices use the row-major vec layout: `|r><c|` sits at `r * D + c`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gmres, solve_sylvester, GmresOptions, SchurFactor};
use crate::steady_state::{transmission_point, ScanMode, SystemModel};

type C = Complex64;

const ZERO: C = C { re: 0.0, im: 0.0 };
const ONE: C = C { re: 1.0, im: 0.0 };

pub const MAX_EMITTERS: usize = 5;
pub const MAX_PHOTONS: usize = 8;
/// Largest Hilbert-space dimension `2^N (n_max + 1)` accepted.
pub const MAX_DIM: usize = (1 << MAX_EMITTERS) * (MAX_PHOTONS + 1);
/// `to_dense` refuses generators larger than `DENSE_DIM^2` squared.
pub const DENSE_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    /// Preconditioned Krylov solve for the kernel of the generator.
    #[default]
    NullSpace,
    /// Adaptive Runge-Kutta from the vacuum until `|d rho/dt| < tol`.
    TimeIntegration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub n_max: usize,
    pub method: OracleMethod,
    /// Integration horizon in units of `1/kappa`.
    pub t_final: f64,
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n_max: 3, method: OracleMethod::NullSpace, t_final: 1e6, tol: 1e-11 }
    }
}

impl OracleConfig {
    /// `n_max = 3` up to `eta = 0.01 kappa`; beyond that the cutoff covers
    /// the bare coherent state `|alpha|^2 + 6|alpha| + 2` photons, at most 8.
    pub fn for_drive(eta: f64, kappa: f64) -> Self {
        let alpha = (eta / kappa).abs();
        let n_max = if alpha <= 1e-2 {
            3
        } else {
            ((alpha * alpha + 6.0 * alpha + 2.0).ceil() as usize).clamp(3, MAX_PHOTONS)
        };
        Self { n_max, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol and t_final must be positive, got {} and {}",
                self.tol, self.t_final
            )));
        }
        Ok(())
    }
}

fn add_scaled(y: &mut DMatrix<C>, w: C, x: &DMatrix<C>) {
    y.zip_apply(x, |a, b| *a += w * b);
}

fn max_abs(m: &DMatrix<C>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Sparse operator as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
struct Sparse {
    entries: Vec<(usize, usize, C)>,
}

impl Sparse {
    fn from_dense(m: &DMatrix<C>) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != ZERO {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self { entries }
    }

    /// `out += alpha * S rho`.
    fn left_acc(&self, rho: &DMatrix<C>, alpha: C, out: &mut DMatrix<C>) {
        let d = rho.ncols();
        for &(r, s, v) in &self.entries {
            let w = alpha * v;
            for c in 0..d {
                out[(r, c)] += w * rho[(s, c)];
            }
        }
    }

    /// `out += alpha * rho S^H`.
    fn right_adj_acc(&self, rho: &DMatrix<C>, alpha: C, out: &mut DMatrix<C>) {
        for &(c, s, v) in &self.entries {
            let w = alpha * v.conj();
            let (src, dst) = (rho.column(s), &mut out.column_mut(c));
            dst.axpy(w, &src, ONE);
        }
    }

    /// `out += alpha * S^H rho`.
    fn left_adj_acc(&self, rho: &DMatrix<C>, alpha: C, out: &mut DMatrix<C>) {
        let d = rho.ncols();
        for &(r, s, v) in &self.entries {
            let w = alpha * v.conj();
            for c in 0..d {
                out[(s, c)] += w * rho[(r, c)];
            }
        }
    }

    /// `out += alpha * rho S`.
    fn right_acc(&self, rho: &DMatrix<C>, alpha: C, out: &mut DMatrix<C>) {
        for &(r, s, v) in &self.entries {
            let (src, dst) = (rho.column(r), &mut out.column_mut(s));
            dst.axpy(alpha * v, &src, ONE);
        }
    }

    fn to_dense(&self, dim: usize) -> DMatrix<C> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// Basis bookkeeping for `N` emitters and `n_max` photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    pub emitters: usize,
    pub n_max: usize,
}

impl Basis {
    pub fn new(emitters: usize, n_max: usize) -> Result<Self> {
        let dim = (n_max + 1) << emitters.min(usize::BITS as usize - 1);
        if emitters > MAX_EMITTERS || n_max > MAX_PHOTONS || dim > MAX_DIM {
            return Err(Error::DimensionCap { dim, cap: MAX_DIM, emitters, n_max });
        }
        Ok(Self { emitters, n_max })
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1) << self.emitters
    }

    pub fn index(&self, photons: usize, bits: usize) -> usize {
        (photons << self.emitters) | bits
    }

    /// `(photons, bits)` of a state index.
    pub fn split(&self, s: usize) -> (usize, usize) {
        (s >> self.emitters, s & ((1 << self.emitters) - 1))
    }

    pub fn excitations(&self, s: usize) -> usize {
        let (n, bits) = self.split(s);
        n + bits.count_ones() as usize
    }
}

/// Block of basis states sharing one excitation number, with the Schur
/// form of `K` restricted to it and the jump operators into the level below.
#[derive(Debug, Clone)]
struct Block {
    states: Vec<usize>,
    schur: SchurFactor,
    /// `(rate, L)` with `J(rho) = sum rate L rho L^H`; `L` maps this level's
    /// states onto the previous block's.
    lowering: Vec<(f64, DMatrix<C>)>,
}

/// Liouvillian of the driven system.
#[derive(Debug, Clone)]
pub struct Generator {
    basis: Basis,
    kappa: f64,
    eta: f64,
    k: Sparse,
    a: Sparse,
    sigma: Vec<Sparse>,
    gamma: DMatrix<f64>,
}

/// Builds the generator for the model's detunings and drive.
pub fn build_generator(model: &SystemModel, cfg: &OracleConfig) -> Result<Generator> {
    cfg.validate()?;
    let basis = Basis::new(model.len(), cfg.n_max)?;
    let dim = basis.dim();
    let n = model.len();
    let kappa = model.kappa();
    let cav = model.cavity();
    let omega = model.couplings().omega();
    let gamma = model.couplings().gamma_matrix().clone();
    let g = model.g_vec().as_slice();
    let i = C::new(0.0, 1.0);

    let mut k = DMatrix::<C>::zeros(dim, dim);
    let mut a = DMatrix::<C>::zeros(dim, dim);
    let mut sigma = vec![DMatrix::<C>::zeros(dim, dim); n];
    for s in 0..dim {
        let (photons, bits) = basis.split(s);
        let pf = photons as f64;
        let excited = bits.count_ones() as f64;
        let decay: f64 = (0..n).filter(|&e| bits >> e & 1 == 1).map(|e| gamma[(e, e)]).sum();
        k[(s, s)] = -i * (cav.delta_c * pf + model.delta_e() * excited) - kappa * pf - decay;
        if photons > 0 {
            a[(basis.index(photons - 1, bits), s)] = C::new(pf.sqrt(), 0.0);
        }
        for e in 0..n {
            let mask = 1 << e;
            if bits & mask != 0 {
                sigma[e][(s ^ mask, s)] = ONE;
                if photons < cfg.n_max {
                    k[(basis.index(photons + 1, bits ^ mask), s)] += -i * g[e] * (pf + 1.0).sqrt();
                }
                for f in (0..n).filter(|&f| f != e && bits & (1 << f) == 0) {
                    let t = (bits ^ mask) | (1 << f);
                    k[(basis.index(photons, t), s)] += -i * omega[(f, e)] - gamma[(f, e)];
                }
            } else if photons > 0 {
                k[(basis.index(photons - 1, bits | mask), s)] += -i * g[e] * pf.sqrt();
            }
        }
    }
    Ok(Generator {
        basis,
        kappa,
        eta: cav.eta,
        k: Sparse::from_dense(&k),
        a: Sparse::from_dense(&a),
        sigma: sigma.iter().map(Sparse::from_dense).collect(),
        gamma,
    })
}

impl Generator {
    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `K = -i H0 - kappa a^H a - sum gamma_ij s_i^+ s_j` as a dense matrix.
    pub fn no_jump_part(&self) -> DMatrix<C> {
        self.k.to_dense(self.dim())
    }

    pub fn annihilation(&self) -> DMatrix<C> {
        self.a.to_dense(self.dim())
    }

    pub fn lowering(&self, emitter: usize) -> DMatrix<C> {
        self.sigma[emitter].to_dense(self.dim())
    }

    fn jumps_acc(&self, rho: &DMatrix<C>, out: &mut DMatrix<C>) {
        let dim = self.dim();
        let mut tmp = DMatrix::zeros(dim, dim);
        self.a.left_acc(rho, ONE, &mut tmp);
        self.a.right_adj_acc(&tmp, C::new(2.0 * self.kappa, 0.0), out);
        let n = self.sigma.len();
        let lowered: Vec<DMatrix<C>> = self
            .sigma
            .iter()
            .map(|s| {
                let mut m = DMatrix::zeros(dim, dim);
                s.left_acc(rho, ONE, &mut m);
                m
            })
            .collect();
        for (e, s) in self.sigma.iter().enumerate() {
            let mut w = DMatrix::<C>::zeros(dim, dim);
            for (f, l) in lowered.iter().enumerate().take(n) {
                let coef = self.gamma[(e, f)];
                if coef != 0.0 {
                    add_scaled(&mut w, C::new(2.0 * coef, 0.0), l);
                }
            }
            s.right_adj_acc(&w, ONE, out);
        }
    }

    /// `out += eta [a^H - a, rho]`.
    fn drive_acc(&self, rho: &DMatrix<C>, out: &mut DMatrix<C>) {
        if self.eta == 0.0 {
            return;
        }
        let eta = C::new(self.eta, 0.0);
        self.a.left_adj_acc(rho, eta, out);
        self.a.left_acc(rho, -eta, out);
        self.a.right_adj_acc(rho, -eta, out);
        self.a.right_acc(rho, eta, out);
    }

    /// `L(rho)`.
    pub fn apply(&self, rho: &DMatrix<C>) -> DMatrix<C> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        self.k.left_acc(rho, ONE, &mut out);
        self.k.right_adj_acc(rho, ONE, &mut out);
        self.jumps_acc(rho, &mut out);
        self.drive_acc(rho, &mut out);
        out
    }

    /// Dense superoperator in the row-major vec layout.
    pub fn to_dense(&self) -> Result<DMatrix<C>> {
        let dim = self.dim();
        if dim > DENSE_DIM {
            return Err(Error::DimensionCap {
                dim,
                cap: DENSE_DIM,
                emitters: self.basis.emitters,
                n_max: self.basis.n_max,
            });
        }
        let mut out = DMatrix::zeros(dim * dim, dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                let mut unit = DMatrix::zeros(dim, dim);
                unit[(r, c)] = ONE;
                let image = self.apply(&unit);
                for rr in 0..dim {
                    for cc in 0..dim {
                        out[(rr * dim + cc, r * dim + c)] = image[(rr, cc)];
                    }
                }
            }
        }
        Ok(out)
    }

    fn blocks(&self) -> Vec<Block> {
        let dim = self.dim();
        let top = self.basis.n_max + self.basis.emitters;
        let dense_k = self.k.to_dense(dim);
        // J = 2 kappa a . a^H + sum_j 2 lambda_j c_j . c_j^H, c_j = sum_f U_fj s_f
        let sigma: Vec<DMatrix<C>> = self.sigma.iter().map(|s| s.to_dense(dim)).collect();
        let mut channels = vec![(2.0 * self.kappa, self.a.to_dense(dim))];
        if !sigma.is_empty() {
            let eig = nalgebra::SymmetricEigen::new(self.gamma.clone());
            for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
                let mut c = DMatrix::<C>::zeros(dim, dim);
                for (f, s) in sigma.iter().enumerate() {
                    add_scaled(&mut c, C::new(eig.eigenvectors[(f, j)], 0.0), s);
                }
                channels.push((2.0 * lambda, c));
            }
        }
        let levels: Vec<Vec<usize>> =
            (0..=top).map(|level| (0..dim).filter(|&s| self.basis.excitations(s) == level).collect()).collect();
        levels
            .iter()
            .enumerate()
            .map(|(level, states)| {
                let sub = DMatrix::from_fn(states.len(), states.len(), |r, c| dense_k[(states[r], states[c])]);
                let lowering = if level == 0 {
                    Vec::new()
                } else {
                    let below = &levels[level - 1];
                    channels
                        .iter()
                        .map(|(rate, op)| {
                            (*rate, DMatrix::from_fn(below.len(), states.len(), |r, c| op[(below[r], states[c])]))
                        })
                        .collect()
                };
                Block { states: states.clone(), schur: SchurFactor::new(sub), lowering }
            })
            .collect()
    }

}

/// Steady state of a generator: trace one, Hermitian, positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: DMatrix<C>,
    basis: Basis,
}

const TRACE_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;

impl DensityMatrix {
    pub fn new(rho: DMatrix<C>, basis: Basis) -> Result<Self> {
        let dim = basis.dim();
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::LengthMismatch { expected: dim, found: rho.nrows() });
        }
        let trace = rho.trace();
        if (trace - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {trace}")));
        }
        let skew = max_abs(&(&rho - rho.adjoint()));
        if skew > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {skew:e})")));
        }
        let min_eig = rho.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self { rho, basis })
    }

    pub fn matrix(&self) -> &DMatrix<C> {
        &self.rho
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// `<a>`.
    pub fn field(&self) -> C {
        let (e, n_max) = (self.basis.emitters, self.basis.n_max);
        let mut acc = ZERO;
        for photons in 1..=n_max {
            for bits in 0..1usize << e {
                let (lo, hi) = (self.basis.index(photons - 1, bits), self.basis.index(photons, bits));
                acc += self.rho[(hi, lo)] * (photons as f64).sqrt();
            }
        }
        acc
    }

    pub fn photon_number(&self) -> f64 {
        (0..self.basis.dim()).map(|s| self.basis.split(s).0 as f64 * self.rho[(s, s)].re).sum()
    }

    /// Occupation of the highest Fock state, a truncation witness.
    pub fn top_fock_population(&self) -> f64 {
        (0..self.basis.dim()).filter(|&s| self.basis.split(s).0 == self.basis.n_max).map(|s| self.rho[(s, s)].re).sum()
    }

    /// `<s_i^+ s_i>`.
    pub fn excitation(&self, emitter: usize) -> f64 {
        (0..self.basis.dim())
            .filter(|&s| self.basis.split(s).1 >> emitter & 1 == 1)
            .map(|s| self.rho[(s, s)].re)
            .sum()
    }

    pub fn max_excitation(&self) -> f64 {
        (0..self.basis.emitters).map(|e| self.excitation(e)).fold(0.0, f64::max)
    }
}

fn vacuum(basis: Basis) -> DMatrix<C> {
    let mut rho = DMatrix::zeros(basis.dim(), basis.dim());
    rho[(0, 0)] = ONE;
    rho
}

fn as_vector(m: DMatrix<C>) -> DVector<C> {
    let len = m.len();
    DVector::from_vec(m.reshape_generic(nalgebra::Dyn(len), nalgebra::Const::<1>).as_slice().to_vec())
}

fn as_matrix(v: &DVector<C>, dim: usize) -> DMatrix<C> {
    DMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Inverse of the undriven generator on traceless input, fixing the
/// vacuum-vacuum element to zero. The undriven generator only couples the
/// excitation block `(k, k')` to itself and to `(k+1, k'+1)` through the
/// jumps, so blocks are solved from the top level down, each by a Sylvester
/// equation in `K`.
struct Preconditioner<'a> {
    generator: &'a Generator,
    blocks: Vec<Block>,
    tol: f64,
}

impl<'a> Preconditioner<'a> {
    fn new(generator: &'a Generator) -> Self {
        let blocks = generator.blocks();
        let scale = generator.k.entries.iter().map(|e| e.2.norm()).fold(generator.kappa, f64::max);
        Self { generator, blocks, tol: 1e-13 * scale }
    }

    fn solve(&self, rhs: &DMatrix<C>) -> Result<DMatrix<C>> {
        let dim = self.generator.dim();
        let top = self.blocks.len() - 1;
        let mut x = DMatrix::<C>::zeros(dim, dim);
        let mut solved: Vec<Vec<Option<DMatrix<C>>>> = vec![vec![None; top + 1]; top + 1];
        for level in (1..=2 * top).rev() {
            for k in level.saturating_sub(top)..=level.min(top) {
                let l = level - k;
                let (bk, bl) = (&self.blocks[k], &self.blocks[l]);
                let mut f = DMatrix::from_fn(bk.states.len(), bl.states.len(), |r, c| rhs[(bk.states[r], bl.states[c])]);
                if k < top && l < top {
                    if let Some(above) = &solved[k + 1][l + 1] {
                        let (ak, al) = (&self.blocks[k + 1], &self.blocks[l + 1]);
                        for ((rate, lk), (_, ll)) in ak.lowering.iter().zip(&al.lowering) {
                            f -= (lk * above * ll.adjoint()) * C::new(*rate, 0.0);
                        }
                    }
                }
                let y = solve_sylvester(&bk.schur, &bl.schur, &f, self.tol)?;
                for (r, &sr) in bk.states.iter().enumerate() {
                    for (c, &sc) in bl.states.iter().enumerate() {
                        x[(sr, sc)] = y[(r, c)];
                    }
                }
                solved[k][l] = Some(y);
            }
        }
        Ok(x)
    }

}

fn null_space_solve(generator: &Generator, cfg: &OracleConfig) -> Result<DMatrix<C>> {
    let dim = generator.dim();
    let rho0 = vacuum(generator.basis);
    let pre = Preconditioner::new(generator);
    // the undriven vacuum is stationary; solve L delta = -L rho0 for the rest
    let b = as_vector(-generator.apply(&rho0));
    let mut failure = None;
    let options = GmresOptions { tol: cfg.tol, ..GmresOptions::default() };
    let out = gmres(
        |v| as_vector(generator.apply(&as_matrix(v, dim))),
        |v| match pre.solve(&as_matrix(v, dim)) {
            Ok(m) => as_vector(m),
            Err(e) => {
                failure.get_or_insert(e);
                DVector::zeros(v.len())
            }
        },
        &b,
        &options,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let out = out?;
    log::debug!("gmres converged in {} iterations (residual {:e})", out.iterations, out.relative_residual);
    Ok(rho0 + as_matrix(&out.x, dim))
}

// Dormand-Prince 5(4); the last row of A is also the fifth-order weights.
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the fifth- and fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const STEP_RTOL: f64 = 1e-10;
const STEP_ATOL: f64 = 1e-13;

fn time_integration(generator: &Generator, cfg: &OracleConfig) -> Result<DMatrix<C>> {
    let dim = generator.dim();
    let mut rho = vacuum(generator.basis);
    let mut deriv = generator.apply(&rho);
    let mut residual = deriv.norm();
    let mut t = 0.0;
    let mut h = 1e-3 / generator.kappa;
    while residual >= cfg.tol {
        if t >= cfg.t_final {
            return Err(Error::NotConverged { method: "time integration", residual });
        }
        let mut stages = vec![deriv.clone()];
        let mut y = rho.clone();
        for row in &DP_A[1..] {
            y = rho.clone();
            for (k, &w) in stages.iter().zip(row) {
                if w != 0.0 {
                    add_scaled(&mut y, C::new(h * w, 0.0), k);
                }
            }
            stages.push(generator.apply(&y));
        }
        let mut err = DMatrix::<C>::zeros(dim, dim);
        for (k, &w) in stages.iter().zip(&DP_E) {
            add_scaled(&mut err, C::new(h * w, 0.0), k);
        }
        let scale = err
            .iter()
            .zip(y.iter())
            .map(|(e, v)| e.norm() / (STEP_ATOL + STEP_RTOL * v.norm()))
            .fold(0.0, f64::max);
        if scale <= 1.0 {
            t += h;
            rho = y;
            deriv = stages.pop().unwrap_or(deriv);
            residual = deriv.norm();
        }
        h *= if scale == 0.0 { 5.0 } else { (0.9 * scale.powf(-0.2)).clamp(0.2, 5.0) };
    }
    Ok(rho)
}

/// Steady state of the generator by the configured method.
pub fn steady_state_rho(generator: &Generator, cfg: &OracleConfig) -> Result<DensityMatrix> {
    cfg.validate()?;
    let raw = match cfg.method {
        OracleMethod::NullSpace => null_space_solve(generator, cfg)?,
        OracleMethod::TimeIntegration => time_integration(generator, cfg)?,
    };
    let trace = raw.trace();
    if trace.norm() == 0.0 || !trace.is_finite() {
        return Err(Error::DegenerateSteadyState);
    }
    let rho = raw / trace;
    let skew = max_abs(&(&rho - rho.adjoint()));
    if skew > HERMITIAN_TOL {
        return Err(Error::InvalidState(format!("solver returned a non-Hermitian state (deviation {skew:e})")));
    }
    let rho = (&rho + rho.adjoint()) * C::new(0.5, 0.0);
    DensityMatrix::new(rho, generator.basis)
}

/// Exact steady-state transmission `|kappa <a> / eta|^2` and the state.
pub fn exact_transmission(model: &SystemModel, cfg: &OracleConfig) -> Result<(f64, DensityMatrix)> {
    let eta = model.cavity().eta;
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter("transmission needs a nonzero drive".into()));
    }
    let state = steady_state_rho(&build_generator(model, cfg)?, cfg)?;
    let t = (state.field() * model.kappa() / eta).norm_sqr();
    Ok((t, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub delta: f64,
    pub eta: f64,
    pub t_exact: f64,
    pub t_linear: f64,
    pub abs_diff: f64,
    /// Largest `<s_i^+ s_i>`; the linear theory needs this small.
    pub max_excitation: f64,
}

/// Exact versus linearised transmission for every `(eta, delta)` pair,
/// rows ordered by `eta` then `delta`.
pub fn compare_linearization(
    model: &SystemModel,
    grid: &[f64],
    mode: ScanMode,
    etas: &[f64],
    cfg: &OracleConfig,
) -> Result<Vec<ComparisonRow>> {
    crate::steady_state::check_grid(grid)?;
    let jobs: Vec<(f64, f64)> = etas.iter().flat_map(|&eta| grid.iter().map(move |&d| (eta, d))).collect();
    jobs.par_iter()
        .map(|&(eta, delta)| {
            let (delta_c, delta_e) = mode.detunings(delta);
            let local = model.with_detunings(delta_c, delta_e).with_eta(eta)?;
            let (t_exact, state) = exact_transmission(&local, cfg)?;
            let t_linear = transmission_point(&local)?.transmission;
            Ok(ComparisonRow {
                delta,
                eta,
                t_exact,
                t_linear,
                abs_diff: (t_exact - t_linear).abs(),
                max_excitation: state.max_excitation(),
            })
        })
        .collect()
}

/// `|T(n_max + 1) - T(n_max)|` at the model's detunings.
pub fn truncation_sensitivity(model: &SystemModel, cfg: &OracleConfig) -> Result<f64> {
    let (t0, _) = exact_transmission(model, cfg)?;
    let finer = OracleConfig { n_max: cfg.n_max + 1, ..*cfg };
    let (t1, _) = exact_transmission(model, &finer)?;
    Ok((t1 - t0).abs())
}
