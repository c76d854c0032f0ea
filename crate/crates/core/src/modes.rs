//! Transverse cavity mode profiles and per-emitter coupling vectors.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CouplingMatrices, EmitterArray};

pub const MAX_HERMITE_ORDER: u32 = 64;

/// Couplings with a norm below this are accepted but logged.
const WEAK_COUPLING_NORM: f64 = 1e-12;
const AMBIGUITY_TOL: f64 = 1e-10;

/// Physicists' Hermite polynomial `H_n(x)` by upward recurrence.
pub fn hermite(n: u32, x: f64) -> Result<f64> {
    if n > MAX_HERMITE_ORDER {
        return Err(Error::UnsupportedHermiteOrder(n));
    }
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if n == 0 {
        return Ok(prev);
    }
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * f64::from(k) * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Hermite-Gaussian mode `TEM_mn` with waist `waist` (wavelengths), centred
/// at `offset` in the emitter plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemMode {
    pub m: u32,
    pub n: u32,
    pub waist: f64,
    #[serde(default)]
    pub offset: [f64; 2],
}

impl TemMode {
    pub fn new(m: u32, n: u32, waist: f64, offset: [f64; 2]) -> Result<Self> {
        let mode = Self { m, n, waist, offset };
        mode.validate()?;
        Ok(mode)
    }

    pub fn centred(m: u32, n: u32, waist: f64) -> Result<Self> {
        Self::new(m, n, waist, [0.0, 0.0])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.waist > 0.0) || !self.waist.is_finite() {
            return Err(Error::InvalidParameter(format!("waist must be positive, got {}", self.waist)));
        }
        for order in [self.m, self.n] {
            if order > MAX_HERMITE_ORDER {
                return Err(Error::UnsupportedHermiteOrder(order));
            }
        }
        Ok(())
    }

    /// `A_mn = sqrt(2 / (pi 2^(m+n) m! n!))`, dimensionless.
    pub fn amplitude(&self) -> f64 {
        let factorial = |k: u32| (1..=k).map(f64::from).product::<f64>();
        let denom = PI * 2f64.powi((self.m + self.n) as i32) * factorial(self.m) * factorial(self.n);
        (2.0 / denom).sqrt()
    }

    /// Signed field profile at `(x, y)`.
    pub fn profile(&self, x: f64, y: f64) -> f64 {
        tem_profile(self, x, y)
    }
}

/// `f(x, y) = A_mn H_m(sqrt2 x/w) H_n(sqrt2 y/w) exp(-(x^2 + y^2)/w^2)`,
/// with `(x, y)` measured from the mode centre.
pub fn tem_profile(mode: &TemMode, x: f64, y: f64) -> f64 {
    let (u, v) = ((x - mode.offset[0]) / mode.waist, (y - mode.offset[1]) / mode.waist);
    // orders are checked on construction; an unchecked mode degrades to NaN
    let hm = hermite(mode.m, SQRT_2 * u).unwrap_or(f64::NAN);
    let hn = hermite(mode.n, SQRT_2 * v).unwrap_or(f64::NAN);
    mode.amplitude() * hm * hn * (-(u * u + v * v)).exp()
}

/// Cavity coupling amplitudes `g_i`, one per emitter, in units of `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CouplingVector(Vec<f64>);

impl CouplingVector {
    /// Rejects non-finite entries. A vanishing vector is allowed.
    pub fn new(g: Vec<f64>) -> Result<Self> {
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("coupling entry {bad} is not finite")));
        }
        let out = Self(g);
        if !out.0.is_empty() && out.norm() < WEAK_COUPLING_NORM {
            log::warn!("coupling vector norm {:e} is effectively zero", out.norm());
        }
        Ok(out)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `G^T G`.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|g| -g).collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|g| g * factor).collect())
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        crate::geometry::check_permutation(perm, self.len())?;
        Ok(Self(perm.iter().map(|&p| self.0[p]).collect()))
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingPattern {
    /// `g_i = g`.
    Uniform,
    /// `g_i = (-1)^i g` with `i = 1..N`, so the first entry is `-g`.
    Alternating,
    /// Entries given explicitly; `g` is ignored.
    Custom(Vec<f64>),
}

pub fn coupling_vector_pattern(n: usize, g: f64, pattern: &CouplingPattern) -> Result<CouplingVector> {
    let entries = match pattern {
        CouplingPattern::Uniform => vec![g; n],
        CouplingPattern::Alternating => {
            (1..=n).map(|i| if i % 2 == 0 { g } else { -g }).collect()
        }
        CouplingPattern::Custom(values) => {
            if values.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: values.len() });
            }
            values.clone()
        }
    };
    CouplingVector::new(entries)
}

/// Couplings sampled from a transverse mode, normalised so that an emitter
/// at the centre of a `TEM00` mode couples with exactly `g_ref`.
pub fn coupling_vector_tem(array: &EmitterArray, mode: &TemMode, g_ref: f64) -> Result<CouplingVector> {
    mode.validate()?;
    let f00 = (2.0 / PI).sqrt();
    let entries = array
        .positions()
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if p.z != 0.0 {
                return Err(Error::OutOfPlane { index, z: p.z });
            }
            Ok(g_ref * tem_profile(mode, p.x, p.y) / f00)
        })
        .collect::<Result<Vec<_>>>()?;
    CouplingVector::new(entries)
}

/// Picks the eigenvector of `Omega` with the largest overlap with the
/// slowest-decaying eigenvector of `Gamma`, scaled to `|G| = sqrt(N) g` and
/// signed so the first nonzero entry is positive.
pub fn coupling_vector_eigenmode(couplings: &CouplingMatrices, g: f64) -> Result<CouplingVector> {
    let n = couplings.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "eigenmode matching needs at least two emitters, got {n}"
        )));
    }
    let decay = SymmetricEigen::new(couplings.gamma_matrix().clone());
    let slowest = decay.eigenvalues.imin();
    let target = decay.eigenvectors.column(slowest);

    let coherent = SymmetricEigen::new(couplings.omega().clone());
    let mut overlaps: Vec<(f64, usize)> = coherent
        .eigenvectors
        .column_iter()
        .enumerate()
        .map(|(k, v)| (v.dot(&target).abs(), k))
        .collect();
    overlaps.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (best, k) = overlaps[0];
    let runner_up = overlaps[1].0;
    if best - runner_up < AMBIGUITY_TOL {
        return Err(Error::AmbiguousEigenmode { best, runner_up });
    }

    let v = coherent.eigenvectors.column(k);
    let lead = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
    let scale = (n as f64).sqrt() * g / v.norm() * lead.signum();
    CouplingVector::new(v.iter().map(|x| x * scale).collect())
}
