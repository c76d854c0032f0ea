//! Linearised (low-excitation) steady state of the driven cavity and the
//! resulting transmission spectra.
//!
//! In the weak-drive limit the mean fields obey
//!
//! ```text
//! d<a>/dt     = -(i delta_c + kappa) <a> + eta - i G^T <sigma>
//! d<sigma>/dt = -M(delta_e) <sigma> - i G <a>,   M = i delta_e + i Omega + Gamma
//! ```
//!
//! so `<a> = eta / (i delta_c + kappa + G^T M^-1 G)` and the amplitude
//! transmission is `t = kappa <a> / eta`. The emitters enter only through
//! `G^T M^-1 G`, which is obtained from a single LU solve `M y = G`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CouplingMatrices;
use crate::modes::CouplingVector;

/// Points whose interaction matrix is worse conditioned than this are flagged.
pub const CONDITION_FLAG_THRESHOLD: f64 = 1e12;
const DECOUPLED_TOL: f64 = 1e-14;
const GAMMA_EFF_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Amplitude decay rate; the unit of every other rate.
    pub kappa: f64,
    /// `omega_c - omega_laser`.
    pub delta_c: f64,
    /// Drive amplitude `sqrt(2 P kappa / omega_laser)`.
    pub eta: f64,
}

impl CavityParams {
    pub fn new(kappa: f64, delta_c: f64, eta: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        if !(eta >= 0.0) || !eta.is_finite() || !delta_c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need finite delta_c and eta >= 0, got delta_c = {delta_c}, eta = {eta}"
            )));
        }
        Ok(Self { kappa, delta_c, eta })
    }
}

impl Default for CavityParams {
    fn default() -> Self {
        Self { kappa: 1.0, delta_c: 0.0, eta: 1.0 }
    }
}

/// Cavity, emitters and their couplings at one pair of detunings.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    cavity: CavityParams,
    couplings: CouplingMatrices,
    g_vec: CouplingVector,
    delta_e: f64,
}

impl SystemModel {
    pub fn new(
        cavity: CavityParams,
        couplings: CouplingMatrices,
        g_vec: CouplingVector,
        delta_e: f64,
    ) -> Result<Self> {
        if couplings.len() != g_vec.len() {
            return Err(Error::LengthMismatch { expected: couplings.len(), found: g_vec.len() });
        }
        Ok(Self { cavity, couplings, g_vec, delta_e })
    }

    /// Model on resonance (`delta_c = delta_e = 0`, `kappa = eta = 1`).
    pub fn resonant(couplings: CouplingMatrices, g_vec: CouplingVector) -> Result<Self> {
        Self::new(CavityParams::default(), couplings, g_vec, 0.0)
    }

    pub fn cavity(&self) -> &CavityParams {
        &self.cavity
    }

    pub fn couplings(&self) -> &CouplingMatrices {
        &self.couplings
    }

    pub fn g_vec(&self) -> &CouplingVector {
        &self.g_vec
    }

    pub fn delta_e(&self) -> f64 {
        self.delta_e
    }

    pub fn kappa(&self) -> f64 {
        self.cavity.kappa
    }

    pub fn len(&self) -> usize {
        self.g_vec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_vec.is_empty()
    }

    pub fn with_detunings(&self, delta_c: f64, delta_e: f64) -> Self {
        let mut out = self.clone();
        out.cavity.delta_c = delta_c;
        out.delta_e = delta_e;
        out
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        let cavity = CavityParams::new(self.cavity.kappa, self.cavity.delta_c, eta)?;
        Ok(Self { cavity, ..self.clone() })
    }

    pub fn with_g_vec(&self, g_vec: CouplingVector) -> Result<Self> {
        Self::new(self.cavity, self.couplings.clone(), g_vec, self.delta_e)
    }

    pub fn with_couplings(&self, couplings: CouplingMatrices) -> Result<Self> {
        Self::new(self.cavity, couplings, self.g_vec.clone(), self.delta_e)
    }

    /// Same physical system with the emitters relabelled.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(self.cavity, self.couplings.permuted(perm)?, self.g_vec.permuted(perm)?, self.delta_e)
    }
}

/// `M(delta_e) = i delta_e 1 + i Omega + Gamma`.
pub fn interaction_matrix(model: &SystemModel, delta_e: f64) -> DMatrix<Complex64> {
    let omega = model.couplings.omega();
    let gamma = model.couplings.gamma_matrix();
    let n = model.len();
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { delta_e } else { 0.0 };
        Complex64::new(gamma[(i, j)], omega[(i, j)] + diag)
    })
}

/// Emitter response seen by the cavity at one emitter detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterResponse {
    /// `G^T M^-1 G`.
    pub susceptibility: Complex64,
    /// 1-norm condition number of `M`.
    pub condition: f64,
}

impl EmitterResponse {
    /// `G^T G / (G^T M^-1 G)` split into `(delta_eff, gamma_eff)`.
    pub fn effective(&self, g_norm_sq: f64) -> (f64, f64) {
        let ratio = g_norm_sq / self.susceptibility;
        (ratio.im, ratio.re)
    }
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves `M y = G` by partial-pivot LU and returns `G^T y` with a
/// conditioning diagnostic. Fails only when `M` is singular.
pub fn emitter_response(model: &SystemModel, delta_e: f64) -> Result<EmitterResponse> {
    if model.is_empty() {
        return Ok(EmitterResponse { susceptibility: Complex64::new(0.0, 0.0), condition: 1.0 });
    }
    let m = interaction_matrix(model, delta_e);
    let g = model.g_vec.to_dvector().map(|x| Complex64::new(x, 0.0));
    let lu = m.clone().lu();
    let y = lu.solve(&g).ok_or(Error::Singular { delta_e })?;
    let susceptibility = g.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<Complex64>();
    let condition = lu.try_inverse().map_or(f64::INFINITY, |inv| one_norm(&m) * one_norm(&inv));
    if !susceptibility.is_finite() {
        return Err(Error::Singular { delta_e });
    }
    Ok(EmitterResponse { susceptibility, condition })
}

fn is_decoupled(susceptibility: Complex64, g_norm_sq: f64) -> bool {
    susceptibility.norm() <= DECOUPLED_TOL * g_norm_sq
}

/// Collective shift and linewidth `(delta_eff, gamma_eff)` at `delta_e`.
pub fn effective_response(model: &SystemModel, delta_e: f64) -> Result<(f64, f64)> {
    let response = emitter_response(model, delta_e)?;
    let g_norm_sq = model.g_vec.norm_sq();
    if is_decoupled(response.susceptibility, g_norm_sq) {
        return Err(Error::Decoupled { delta_e });
    }
    Ok(response.effective(g_norm_sq))
}

/// Steady-state intracavity amplitude `<a>` at the model's detunings. A
/// decoupled ensemble yields the bare-cavity value.
pub fn cavity_field(model: &SystemModel) -> Result<Complex64> {
    let response = emitter_response(model, model.delta_e)?;
    Ok(field_from_susceptibility(model, response.susceptibility))
}

fn field_from_susceptibility(model: &SystemModel, susceptibility: Complex64) -> Complex64 {
    let CavityParams { kappa, delta_c, eta } = model.cavity;
    let coupled = if is_decoupled(susceptibility, model.g_vec.norm_sq()) {
        Complex64::new(0.0, 0.0)
    } else {
        susceptibility
    };
    eta / (Complex64::new(kappa, delta_c) + coupled)
}

/// Why a spectrum point may need a second look.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    #[default]
    Ok,
    IllConditioned,
    Decoupled,
    Failed,
}

impl PointFlag {
    pub fn code(self) -> u8 {
        match self {
            PointFlag::Ok => 0,
            PointFlag::IllConditioned => 1,
            PointFlag::Decoupled => 2,
            PointFlag::Failed => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// Scanned laser detuning.
    pub delta: f64,
    pub delta_c: f64,
    pub delta_e: f64,
    pub a_ss: Complex64,
    pub t: Complex64,
    /// `|t|^2`.
    pub transmission: f64,
    /// `Arg(t)` in `(-pi, pi]`.
    pub phase: f64,
    /// Phase relative to the bare cavity, `Arg(t) + atan(delta_c / kappa)`.
    pub phase_rel: f64,
    pub delta_eff: f64,
    pub gamma_eff: f64,
    pub c_eff: f64,
    pub condition: f64,
    pub flag: PointFlag,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut out = phi.rem_euclid(2.0 * PI);
    if out > PI {
        out -= 2.0 * PI;
    }
    if out <= -PI {
        out += 2.0 * PI;
    }
    out
}

fn failed_point(model: &SystemModel) -> SpectrumPoint {
    SpectrumPoint {
        delta: model.delta_e,
        delta_c: model.cavity.delta_c,
        delta_e: model.delta_e,
        a_ss: Complex64::new(f64::NAN, f64::NAN),
        t: Complex64::new(f64::NAN, f64::NAN),
        transmission: f64::NAN,
        phase: f64::NAN,
        phase_rel: f64::NAN,
        delta_eff: f64::NAN,
        gamma_eff: f64::NAN,
        c_eff: f64::NAN,
        condition: f64::INFINITY,
        flag: PointFlag::Failed,
    }
}

/// Full spectrum point at the model's detunings. The transmission does not
/// depend on `eta`; `a_ss` is reported for the model's drive.
pub fn transmission_point(model: &SystemModel) -> Result<SpectrumPoint> {
    let response = emitter_response(model, model.delta_e)?;
    let CavityParams { kappa, delta_c, eta } = model.cavity;
    let g_norm_sq = model.g_vec.norm_sq();
    let unit_drive = model.with_eta(1.0)?;
    let t = kappa * field_from_susceptibility(&unit_drive, response.susceptibility);
    let phase = wrap_phase(t.arg());

    let decoupled = model.is_empty() || is_decoupled(response.susceptibility, g_norm_sq);
    let (delta_eff, gamma_eff, c_eff) = if decoupled {
        (f64::NAN, f64::NAN, 0.0)
    } else {
        let (d, g) = response.effective(g_norm_sq);
        (d, g, cooperativity_from(g_norm_sq, kappa, g))
    };
    let flag = if decoupled && !model.is_empty() {
        PointFlag::Decoupled
    } else if response.condition > CONDITION_FLAG_THRESHOLD {
        PointFlag::IllConditioned
    } else {
        PointFlag::Ok
    };
    Ok(SpectrumPoint {
        delta: model.delta_e,
        delta_c,
        delta_e: model.delta_e,
        a_ss: t * eta / kappa,
        t,
        transmission: t.norm_sqr(),
        phase,
        phase_rel: wrap_phase(phase + (delta_c / kappa).atan()),
        delta_eff,
        gamma_eff,
        c_eff,
        condition: response.condition,
        flag,
    })
}

/// How the laser scan maps onto the two detunings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScanMode {
    /// Cavity resonant with the bare emitters: `delta_c = delta_e = delta`.
    #[default]
    SweepBoth,
    /// Fixed cavity offset `omega_e - omega_c`: `delta_e = delta`,
    /// `delta_c = delta - offset`.
    SweepLaser { offset: f64 },
}

impl ScanMode {
    /// `(delta_c, delta_e)` for a scanned laser detuning.
    pub fn detunings(self, delta: f64) -> (f64, f64) {
        match self {
            ScanMode::SweepBoth => (delta, delta),
            ScanMode::SweepLaser { offset } => (delta - offset, delta),
        }
    }

    pub fn offset(self) -> f64 {
        match self {
            ScanMode::SweepBoth => 0.0,
            ScanMode::SweepLaser { offset } => offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub emitters: usize,
    pub kappa: f64,
    pub gamma: Option<f64>,
    pub eta: f64,
    pub g_norm_sq: f64,
}

impl ModelSummary {
    pub fn of(model: &SystemModel) -> Self {
        Self {
            emitters: model.len(),
            kappa: model.kappa(),
            gamma: model.couplings.gamma(),
            eta: model.cavity.eta,
            g_norm_sq: model.g_vec.norm_sq(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<SpectrumPoint>,
    pub mode: ScanMode,
    pub summary: ModelSummary,
}

impl ScanResult {
    pub fn deltas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.delta)
    }

    /// Point of minimum transmission, ignoring failed points.
    pub fn min_transmission(&self) -> Option<&SpectrumPoint> {
        self.points
            .iter()
            .filter(|p| p.transmission.is_finite())
            .min_by(|a, b| a.transmission.total_cmp(&b.transmission))
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("scan grid is empty".into()));
    }
    if grid.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter("scan grid has non-finite entries".into()));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "scan grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points).map(|i| if i == points - 1 { hi } else { lo + step * i as f64 }).collect()
        }
    }
}

/// Scans the laser detuning over `grid`. Points are independent and are
/// evaluated in parallel; a failing point is flagged, never fatal.
pub fn scan_spectrum(model: &SystemModel, grid: &[f64], mode: ScanMode) -> Result<ScanResult> {
    check_grid(grid)?;
    let points = grid
        .par_iter()
        .map(|&delta| {
            let (delta_c, delta_e) = mode.detunings(delta);
            let local = model.with_detunings(delta_c, delta_e);
            let mut point = transmission_point(&local).unwrap_or_else(|_| failed_point(&local));
            point.delta = delta;
            point
        })
        .collect();
    Ok(ScanResult { points, mode, summary: ModelSummary::of(model) })
}

fn cooperativity_from(g_norm_sq: f64, kappa: f64, gamma_eff: f64) -> f64 {
    if gamma_eff <= GAMMA_EFF_FLOOR * kappa {
        log::warn!("gamma_eff = {gamma_eff:e} is below the floor; cooperativity reported as infinite");
        f64::INFINITY
    } else {
        g_norm_sq / (kappa * gamma_eff)
    }
}

/// `C_eff = G^T G / (kappa gamma_eff)`; `+inf` once `gamma_eff` is below
/// `1e-14 kappa`.
pub fn effective_cooperativity(model: &SystemModel, delta_e: f64) -> Result<f64> {
    let (_, gamma_eff) = effective_response(model, delta_e)?;
    Ok(cooperativity_from(model.g_vec.norm_sq(), model.kappa(), gamma_eff))
}

/// Closed-form single-emitter transmission
/// `t = kappa / (i delta + kappa + g^2 / (i delta + gamma))`.
pub fn single_emitter_transmission(g: f64, gamma: f64, kappa: f64, delta: f64) -> Complex64 {
    let i_delta = Complex64::new(0.0, delta);
    kappa / (i_delta + kappa + g * g / (i_delta + gamma))
}
