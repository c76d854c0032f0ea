//! Emitter geometries and the vacuum-mediated dipole-dipole couplings.
//!
//! Positions are in units of the transition wavelength, so the
//! dimensionless phase between two emitters is `x = 2 pi |r_ij|`.
//! The collective decay rates and coherent shifts are
//!
//! ```text
//! gamma_ij =  (3 gamma / 2) F(x_ij, cos theta_ij)
//! Omega_ij = -(3 gamma / 4) G(x_ij, cos theta_ij)
//! ```
//!
//! with `theta_ij` the angle between the dipole orientation and `r_ij`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Emitters closer than this (in wavelengths) are rejected.
pub const MIN_SEPARATION: f64 = 1e-6;

const ORIENTATION_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// Below this phase the near-field bracket of `F` is evaluated by its Taylor
/// series; the closed form loses ~`1/x^2` digits to cancellation.
const SERIES_CUTOFF: f64 = 0.5;

/// Which form of the coherent-coupling kernel `G` to use.
///
/// `Standard` is the Lehmberg result, whose near-field term is
/// `cos(x)/x^3`. `AsPrinted` replaces that term by `sin(x)/x^3`, which
/// removes the `1/x^3` divergence; it exists for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipoleKernel {
    #[default]
    Standard,
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitterArray {
    positions: Vec<Vec3>,
    dipole: Vec3,
    gamma: f64,
}

impl EmitterArray {
    /// Builds an array, checking that `dipole` is a unit vector, `gamma > 0`
    /// and that no two emitters are closer than [`MIN_SEPARATION`].
    pub fn new(positions: Vec<Vec3>, dipole: Vec3, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        if (dipole.norm() - 1.0).abs() > ORIENTATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "dipole orientation must be a unit vector, |d| = {}",
                dipole.norm()
            )));
        }
        if let Some(p) = positions.iter().find(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidParameter(format!("non-finite position {p:?}")));
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let separation = (positions[i] - positions[j]).norm();
                if separation <= MIN_SEPARATION {
                    return Err(Error::CoincidentEmitters { i, j, separation });
                }
            }
        }
        Ok(Self { positions, dipole, gamma })
    }

    /// Same as [`EmitterArray::new`] with the dipoles along `y`.
    pub fn with_default_dipole(positions: Vec<Vec3>, gamma: f64) -> Result<Self> {
        Self::new(positions, Vec3::y(), gamma)
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn dipole(&self) -> Vec3 {
        self.dipole
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Rigid translation of every emitter.
    pub fn translated(&self, shift: Vec3) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p + shift).collect(),
            ..self.clone()
        }
    }

    pub fn with_dipole(&self, dipole: Vec3) -> Result<Self> {
        Self::new(self.positions.clone(), dipole, self.gamma)
    }
}

/// `(x cos x - sin x) / x^3`, the near-field bracket shared by `F`.
fn near_field_bracket(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        // sum_k (-1)^(k+1) 2(k+1)/(2k+3)! x^(2k)
        let x2 = x * x;
        let mut term_factorial = 6.0; // (2k+3)! for k = 0
        let mut power = 1.0;
        let mut sum = 0.0;
        for k in 0..10 {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            sum += sign * 2.0 * (k as f64 + 1.0) / term_factorial * power;
            power *= x2;
            let next = 2.0 * k as f64 + 4.0;
            term_factorial *= next * (next + 1.0);
        }
        sum
    } else {
        x.cos() / (x * x) - x.sin() / (x * x * x)
    }
}

/// Angular factor of the dissipative coupling.
///
/// `F = (1 - c^2) sin x / x + (1 - 3 c^2) (cos x / x^2 - sin x / x^3)`.
/// The limit `x -> 0` is `2/3`, but `x = 0` itself is a domain error.
pub fn angular_factor_f(x: f64, cos_theta: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain { function: "F", x });
    }
    let c2 = cos_theta * cos_theta;
    let sinc = if x < 1e-4 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    Ok((1.0 - c2) * sinc + (1.0 - 3.0 * c2) * near_field_bracket(x))
}

/// Angular factor of the coherent coupling. Diverges as
/// `(1 - 3 c^2) / x^3` for the standard kernel.
pub fn angular_factor_g(x: f64, cos_theta: f64, kernel: DipoleKernel) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain { function: "G", x });
    }
    let c2 = cos_theta * cos_theta;
    let (s, c) = x.sin_cos();
    let last = match kernel {
        DipoleKernel::Standard => c,
        DipoleKernel::AsPrinted => s,
    };
    Ok(-(1.0 - c2) * c / x + (1.0 - 3.0 * c2) * (s / (x * x) + last / (x * x * x)))
}

/// Coherent (`omega`) and dissipative (`gamma_matrix`) coupling matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    omega: DMatrix<f64>,
    gamma_matrix: DMatrix<f64>,
}

impl CouplingMatrices {
    /// Wraps externally supplied matrices after checking shape, symmetry
    /// and diagonals (`omega_ii = 0`, `gamma_ii` all equal and positive).
    pub fn from_parts(omega: DMatrix<f64>, gamma_matrix: DMatrix<f64>) -> Result<Self> {
        let n = gamma_matrix.nrows();
        if gamma_matrix.ncols() != n || omega.nrows() != n || omega.ncols() != n {
            return Err(Error::InvalidParameter(format!(
                "coupling matrices must both be {n}x{n}, got omega {}x{} and gamma {}x{}",
                omega.nrows(),
                omega.ncols(),
                gamma_matrix.nrows(),
                gamma_matrix.ncols()
            )));
        }
        for (name, m) in [("omega", &omega), ("gamma", &gamma_matrix)] {
            let scale = m.amax().max(1.0);
            for i in 0..n {
                for j in (i + 1)..n {
                    if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                        return Err(Error::InvalidParameter(format!(
                            "{name} matrix is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        if (0..n).any(|i| omega[(i, i)] != 0.0) {
            return Err(Error::InvalidParameter("omega must have a zero diagonal".into()));
        }
        if n > 0 {
            let gamma = gamma_matrix[(0, 0)];
            if !(gamma > 0.0) || (0..n).any(|i| gamma_matrix[(i, i)] != gamma) {
                return Err(Error::InvalidParameter(
                    "gamma matrix diagonal must be a single positive rate".into(),
                ));
            }
        }
        Ok(Self { omega, gamma_matrix })
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn gamma_matrix(&self) -> &DMatrix<f64> {
        &self.gamma_matrix
    }

    pub fn len(&self) -> usize {
        self.gamma_matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Single-emitter decay rate (the common diagonal of `gamma_matrix`).
    pub fn gamma(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.gamma_matrix[(0, 0)])
    }

    /// Copy with the coherent dipole-dipole shifts switched off.
    pub fn without_coherent(&self) -> Self {
        let n = self.len();
        Self { omega: DMatrix::zeros(n, n), gamma_matrix: self.gamma_matrix.clone() }
    }

    /// Relabels emitters: entry `(i, j)` of the result is `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.len())?;
        let n = self.len();
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(perm[i], perm[j])]);
        Ok(Self { omega: pick(&self.omega), gamma_matrix: pick(&self.gamma_matrix) })
    }

    /// Smallest eigenvalue of `gamma_matrix` (the most subradiant rate).
    pub fn min_decay_rate(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let eig = SymmetricEigen::new(self.gamma_matrix.clone());
        eig.eigenvalues.iter().copied().reduce(f64::min)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: perm.len() });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}

pub fn build_coupling_matrices(array: &EmitterArray) -> Result<CouplingMatrices> {
    build_coupling_matrices_with(array, DipoleKernel::Standard)
}

pub fn build_coupling_matrices_with(
    array: &EmitterArray,
    kernel: DipoleKernel,
) -> Result<CouplingMatrices> {
    let n = array.len();
    let gamma = array.gamma();
    let mut omega = DMatrix::zeros(n, n);
    let mut gamma_matrix = DMatrix::from_diagonal_element(n, n, gamma);
    let positions = array.positions();
    for i in 0..n {
        for j in (i + 1)..n {
            let r = positions[i] - positions[j];
            let separation = r.norm();
            if separation <= MIN_SEPARATION {
                return Err(Error::CoincidentEmitters { i, j, separation });
            }
            let x = TAU * separation;
            let cos_theta = array.dipole().dot(&r) / separation;
            let g_ij = 1.5 * gamma * angular_factor_f(x, cos_theta)?;
            let o_ij = -0.75 * gamma * angular_factor_g(x, cos_theta, kernel)?;
            gamma_matrix[(i, j)] = g_ij;
            gamma_matrix[(j, i)] = g_ij;
            omega[(i, j)] = o_ij;
            omega[(j, i)] = o_ij;
        }
    }
    Ok(CouplingMatrices { omega, gamma_matrix })
}

fn transverse_axis(axis: Vec3) -> Result<Vec3> {
    let norm = axis.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidParameter("chain axis must be a nonzero vector".into()));
    }
    if axis.z.abs() > ORIENTATION_TOL * norm {
        return Err(Error::InvalidParameter(
            "chain axis must lie in the transverse (z = 0) plane".into(),
        ));
    }
    Ok(axis / norm)
}

/// `n` emitters spaced by `spacing` along `axis`, centred on the origin.
pub fn make_chain(n: usize, spacing: f64, axis: Vec3, gamma: f64) -> Result<EmitterArray> {
    if n == 0 {
        return Err(Error::InvalidParameter("a chain needs at least one emitter".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing}")));
    }
    let axis = transverse_axis(axis)?;
    let centre = (n as f64 - 1.0) / 2.0;
    let positions = (0..n).map(|i| axis * ((i as f64 - centre) * spacing)).collect();
    EmitterArray::with_default_dipole(positions, gamma)
}

/// `rows x cols` square lattice in the `xy` plane, centred on the origin.
/// Emitters are ordered row by row.
pub fn make_grid(rows: usize, cols: usize, spacing: f64, gamma: f64) -> Result<EmitterArray> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("a grid needs at least one row and column".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing}")));
    }
    let (cr, cc) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let positions = (0..rows)
        .flat_map(|r| {
            (0..cols).map(move |c| {
                Vec3::new((c as f64 - cc) * spacing, (r as f64 - cr) * spacing, 0.0)
            })
        })
        .collect();
    EmitterArray::with_default_dipole(positions, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use proptest::prelude::*;

    #[test]
    fn f_reference_values() {
        let f = angular_factor_f(2.0 * PI, 0.0).unwrap();
        assert!((f - 1.0 / (4.0 * PI * PI)).abs() < 1e-14);
        assert!((f - 0.025330).abs() < 1e-6);
        let f = angular_factor_f(PI, 1.0).unwrap();
        assert!((f - 2.0 / (PI * PI)).abs() < 1e-14);
        for c in [0.0, 0.3, 1.0] {
            assert!((angular_factor_f(1e-7, c).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn g_reference_values() {
        let g = angular_factor_g(2.0 * PI, 0.0, DipoleKernel::Standard).unwrap();
        let expected = -1.0 / (2.0 * PI) + 1.0 / (8.0 * PI.powi(3));
        assert!((g - expected).abs() < 1e-14);
        assert!((g + 0.155124).abs() < 1e-6);
        let g = angular_factor_g(PI / 2.0, 0.0, DipoleKernel::Standard).unwrap();
        assert!((g - 4.0 / (PI * PI)).abs() < 1e-14);
        assert!((g - 0.405285).abs() < 1e-6);
    }

    #[test]
    fn g_near_field_divergence() {
        for c in [0.0, 1.0] {
            let x: f64 = 1e-3;
            let g = angular_factor_g(x, c, DipoleKernel::Standard).unwrap();
            let lead = (1.0 - 3.0 * c * c) / x.powi(3);
            assert!(((g - lead) / lead).abs() < 1e-5);
        }
        // the printed variant only diverges as 1/x^2
        let g = angular_factor_g(1e-3, 0.0, DipoleKernel::AsPrinted).unwrap();
        assert!(g.abs() < 3e6);
    }

    #[test]
    fn zero_phase_is_a_domain_error() {
        assert!(matches!(angular_factor_f(0.0, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(
            angular_factor_g(0.0, 0.0, DipoleKernel::Standard),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        for c in [0.0, 0.5, 1.0] {
            let below = angular_factor_f(SERIES_CUTOFF * (1.0 - 1e-12), c).unwrap();
            let c2 = c * c;
            let x = SERIES_CUTOFF;
            let closed = (1.0 - c2) * x.sin() / x
                + (1.0 - 3.0 * c2) * (x.cos() / (x * x) - x.sin() / (x * x * x));
            assert!((below - closed).abs() < 1e-13);
        }
    }

    #[test]
    fn single_emitter_matrices() {
        let array = make_chain(1, 0.3, Vec3::x(), 0.025).unwrap();
        let m = build_coupling_matrices(&array).unwrap();
        assert_eq!(m.omega()[(0, 0)], 0.0);
        assert_eq!(m.gamma_matrix()[(0, 0)], 0.025);
    }

    #[test]
    fn close_pair_collective_rate_matches_series() {
        let gamma = 0.025;
        let array = make_chain(2, 0.001, Vec3::x(), gamma).unwrap();
        let m = build_coupling_matrices(&array).unwrap();
        let x = TAU * 0.001;
        // (3/2)F = 1 - x^2/5 + 3x^4/280 for perpendicular dipoles
        let series = 1.0 - 0.2 * x * x + 3.0 * x.powi(4) / 280.0;
        let ratio = m.gamma_matrix()[(0, 1)] / gamma;
        assert!((ratio - series).abs() < 1e-12, "{ratio} vs {series}");
        assert!((1.0 - ratio - 7.90e-6).abs() < 1e-8);
        assert!((gamma - m.gamma_matrix()[(0, 1)]).abs() < 1e-3 * gamma);
    }

    #[test]
    fn one_wavelength_pair() {
        let array = make_chain(2, 1.0, Vec3::x(), 1.0).unwrap();
        let m = build_coupling_matrices(&array).unwrap();
        assert!((m.gamma_matrix()[(0, 1)] - 1.5 / (4.0 * PI * PI)).abs() < 1e-12);
        assert!((m.gamma_matrix()[(0, 1)] - 0.03800).abs() < 1e-5);
    }

    #[test]
    fn coincident_emitters_are_reported() {
        let p = vec![Vec3::zeros(), Vec3::x(), Vec3::new(1e-7, 0.0, 0.0)];
        match EmitterArray::with_default_dipole(p, 1.0) {
            Err(Error::CoincidentEmitters { i: 0, j: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_arrays_rejected() {
        assert!(EmitterArray::new(vec![Vec3::zeros()], Vec3::new(0.0, 2.0, 0.0), 1.0).is_err());
        assert!(EmitterArray::with_default_dipole(vec![Vec3::zeros()], 0.0).is_err());
        assert!(make_chain(3, 0.1, Vec3::z(), 1.0).is_err());
        assert!(make_chain(0, 0.1, Vec3::x(), 1.0).is_err());
        assert!(make_grid(2, 2, -0.1, 1.0).is_err());
    }

    #[test]
    fn chain_and_grid_layouts() {
        let chain = make_chain(2, 0.5, Vec3::x(), 1.0).unwrap();
        assert_eq!(chain.positions(), &[Vec3::new(-0.25, 0.0, 0.0), Vec3::new(0.25, 0.0, 0.0)]);
        let single = make_chain(1, 0.7, Vec3::y(), 1.0).unwrap();
        assert_eq!(single.positions(), &[Vec3::zeros()]);
        let grid = make_grid(3, 3, 0.2, 1.0).unwrap();
        assert_eq!(grid.len(), 9);
        let centroid: Vec3 = grid.positions().iter().sum::<Vec3>() / 9.0;
        assert!(centroid.norm() < 1e-15);
        assert!((grid.positions()[1] - grid.positions()[0]).norm() - 0.2 < 1e-15);
        assert!((grid.positions()[3] - grid.positions()[0] - Vec3::new(0.0, 0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn from_parts_validation() {
        let omega = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]);
        let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(CouplingMatrices::from_parts(omega, gamma.clone()).is_err());
        let omega = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.0]);
        assert!(CouplingMatrices::from_parts(omega, gamma.clone()).is_err());
        let omega = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 0.0]);
        assert!(CouplingMatrices::from_parts(omega, gamma).is_ok());
    }

    fn chain_or_grid() -> impl Strategy<Value = EmitterArray> {
        prop_oneof![
            (1usize..8, 0.01f64..2.0).prop_map(|(n, d)| make_chain(n, d, Vec3::x(), 0.025).unwrap()),
            (1usize..4, 1usize..4, 0.01f64..2.0)
                .prop_map(|(r, c, d)| make_grid(r, c, d, 0.025).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn matrices_symmetric_with_exact_diagonals(array in chain_or_grid()) {
            let m = build_coupling_matrices(&array).unwrap();
            let n = array.len();
            for i in 0..n {
                prop_assert_eq!(m.omega()[(i, i)], 0.0);
                prop_assert_eq!(m.gamma_matrix()[(i, i)], array.gamma());
                for j in 0..n {
                    prop_assert_eq!(m.omega()[(i, j)], m.omega()[(j, i)]);
                    prop_assert_eq!(m.gamma_matrix()[(i, j)], m.gamma_matrix()[(j, i)]);
                    prop_assert!(m.gamma_matrix()[(i, j)].abs() <= array.gamma() * (1.0 + 1e-12));
                }
            }
        }

        #[test]
        fn gamma_matrix_positive_semidefinite(array in chain_or_grid()) {
            let m = build_coupling_matrices(&array).unwrap();
            prop_assert!(m.min_decay_rate().unwrap() >= -1e-10 * array.gamma());
        }

        #[test]
        fn translation_invariance(
            array in chain_or_grid(),
            sx in -5.0f64..5.0, sy in -5.0f64..5.0, sz in -5.0f64..5.0,
        ) {
            let a = build_coupling_matrices(&array).unwrap();
            let b = build_coupling_matrices(&array.translated(Vec3::new(sx, sy, sz))).unwrap();
            prop_assert!((a.omega() - b.omega()).amax() < 1e-9 * a.omega().amax().max(1.0));
            prop_assert!((a.gamma_matrix() - b.gamma_matrix()).amax() < 1e-12);
        }
    }
}
