//! Quantifying antiresonances: depth and width, Lorentzian fits, phase
//! switches, collective band structure, decay eigenmodes and cavity tuning.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CouplingMatrices;
use crate::modes::CouplingVector;
use crate::steady_state::{effective_response, ScanResult, SystemModel};

/// Bare-cavity transmission `kappa^2 / (delta_c^2 + kappa^2)`.
pub fn bare_transmission(kappa: f64, delta_c: f64) -> f64 {
    kappa * kappa / (delta_c * delta_c + kappa * kappa)
}

/// `B(delta) = T_bare - T` for every finite point of a scan.
pub fn background_subtracted(scan: &ScanResult) -> Vec<(f64, f64)> {
    let kappa = scan.summary.kappa;
    scan.points
        .iter()
        .filter(|p| p.transmission.is_finite())
        .map(|p| (p.delta, bare_transmission(kappa, p.delta_c) - p.transmission))
        .collect()
}

/// `s = 1 - 1/(1+C)^2 = C(C+2)/(C+1)^2`.
pub fn antiresonance_depth(c: f64) -> f64 {
    if c.is_infinite() {
        return 1.0;
    }
    c * (c + 2.0) / ((c + 1.0) * (c + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthForm {
    /// Curvature width of `B` at the dip, in closed form.
    Exact,
    /// `gamma (1 + C)`.
    Approx,
}

/// Width `beta` of the single-emitter antiresonance.
pub fn antiresonance_width(g: f64, gamma: f64, kappa: f64, form: WidthForm) -> f64 {
    let g2 = g * g;
    if g2 == 0.0 || form == WidthForm::Approx {
        return gamma + g2 / kappa;
    }
    let kg = kappa * gamma;
    let num = kappa * kappa * (g2 + kg).powi(2) * (g2 + 2.0 * kg);
    let den = g2.powi(3)
        + 4.0 * g2 * g2 * kg
        + 2.0 * kappa.powi(3) * gamma * (kappa * kappa + kg + 2.0 * gamma * gamma)
        + g2 * (kappa.powi(4) + 6.0 * kappa * kappa * gamma * gamma);
    (num / den).sqrt()
}

/// `sqrt(-2 B(c) / B''(c))` from a centred second difference of step `h`.
pub fn curvature_width(b: impl Fn(f64) -> f64, center: f64, h: f64) -> f64 {
    let b0 = b(center);
    let second = (b(center + h) - 2.0 * b0 + b(center - h)) / (h * h);
    (-2.0 * b0 / second).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    /// Depth of `s beta^2 / ((delta - center)^2 + beta^2)`.
    pub s: f64,
    /// Least-squares half-width.
    pub beta: f64,
    pub center: f64,
    /// RMS residual over the fit window.
    pub residual: f64,
    /// Curvature width from the samples around the dip, if resolvable.
    pub beta_curvature: Option<f64>,
    pub iterations: usize,
    pub window_points: usize,
}

impl LorentzianFit {
    pub fn eval(&self, delta: f64) -> f64 {
        lorentzian(self.s, self.beta, self.center, delta)
    }
}

fn lorentzian(s: f64, beta: f64, center: f64, delta: f64) -> f64 {
    let u = delta - center;
    s * beta * beta / (u * u + beta * beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Points within `window_factor * beta_initial` of the dip are fitted.
    pub window_factor: f64,
    /// Fewer points than this inside the window widens it to the nearest ones.
    pub min_points: usize,
    pub max_iterations: usize,
    pub rel_step_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { window_factor: 0.5, min_points: 5, max_iterations: 200, rel_step_tol: 1e-10 }
    }
}

/// Fits a Lorentzian dip to background-subtracted `(delta, B)` samples.
pub fn fit_lorentzian(points: &[(f64, f64)]) -> Result<LorentzianFit> {
    fit_lorentzian_with(points, &FitOptions::default())
}

fn half_max_crossing(points: &[(f64, f64)], peak: usize, half: f64, step: isize) -> Option<f64> {
    let mut i = peak as isize;
    loop {
        let j = i + step;
        if j < 0 || j as usize >= points.len() {
            return None;
        }
        let (a, b) = (points[i as usize], points[j as usize]);
        if b.1 <= half {
            let frac = (a.1 - half) / (a.1 - b.1);
            return Some(a.0 + frac * (b.0 - a.0));
        }
        i = j;
    }
}

/// Three-point curvature width at sample `i` on a possibly uneven grid.
fn sampled_curvature_width(points: &[(f64, f64)], i: usize) -> Option<f64> {
    if i == 0 || i + 1 >= points.len() {
        return None;
    }
    let ((x0, y0), (x1, y1), (x2, y2)) = (points[i - 1], points[i], points[i + 1]);
    let (h0, h1) = (x1 - x0, x2 - x1);
    let second = 2.0 * (y0 * h1 - y1 * (h0 + h1) + y2 * h0) / (h0 * h1 * (h0 + h1));
    let beta = (-2.0 * y1 / second).sqrt();
    beta.is_finite().then_some(beta)
}

pub fn fit_lorentzian_with(points: &[(f64, f64)], options: &FitOptions) -> Result<LorentzianFit> {
    if points.len() < 5 {
        return Err(Error::NotBracketed(format!("need at least 5 points, got {}", points.len())));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::InvalidParameter("fit points must be finite with increasing delta".into()));
    }
    let peak = (0..points.len()).max_by(|&a, &b| points[a].1.total_cmp(&points[b].1)).unwrap_or(0);
    let s0 = points[peak].1;
    if !(s0 > 0.0) {
        return Err(Error::NotBracketed("no dip above the background".into()));
    }
    let half = 0.5 * s0;
    let (left, right) = match (
        half_max_crossing(points, peak, half, -1),
        half_max_crossing(points, peak, half, 1),
    ) {
        (Some(l), Some(r)) => (l, r),
        _ => {
            return Err(Error::NotBracketed(format!(
                "B does not fall to half of its maximum {s0:e} on both sides of delta = {}",
                points[peak].0
            )))
        }
    };
    let beta0 = 0.5 * (right - left);
    let center0 = points[peak].0;

    let mut by_distance: Vec<usize> = (0..points.len()).collect();
    by_distance.sort_by(|&a, &b| (points[a].0 - center0).abs().total_cmp(&(points[b].0 - center0).abs()));
    let inside = by_distance
        .iter()
        .take_while(|&&i| (points[i].0 - center0).abs() <= options.window_factor * beta0)
        .count();
    let mut window: Vec<(f64, f64)> =
        by_distance[..inside.max(options.min_points).min(points.len())].iter().map(|&i| points[i]).collect();
    window.sort_by(|a, b| a.0.total_cmp(&b.0));

    let cost = |p: &Vector3<f64>| -> f64 {
        window.iter().map(|&(x, y)| (y - lorentzian(p[0], p[1], p[2], x)).powi(2)).sum()
    };
    let mut params = Vector3::new(s0, beta0, center0);
    let mut current = cost(&params);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        let (s, beta, center) = (params[0], params[1], params[2]);
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for &(x, y) in &window {
            let u = x - center;
            let d = u * u + beta * beta;
            let jac = Vector3::new(
                beta * beta / d,
                2.0 * s * beta * u * u / (d * d),
                2.0 * s * beta * beta * u / (d * d),
            );
            jtj += jac * jac.transpose();
            jtr += jac * (y - s * beta * beta / d);
        }
        if current == 0.0 {
            converged = true;
            break;
        }
        let mut damped = jtj;
        for k in 0..3 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let candidate = params + step;
        let scales = [params[0].abs(), params[1].abs(), params[1].abs()];
        let rel = (0..3).map(|k| step[k].abs() / scales[k].max(1e-300)).fold(0.0, f64::max);
        let trial = if candidate[1] > 0.0 { cost(&candidate) } else { f64::INFINITY };
        if trial < current {
            params = candidate;
            current = trial;
            lambda = (lambda / 10.0).max(1e-15);
        } else {
            lambda *= 10.0;
        }
        if rel < options.rel_step_tol {
            converged = true;
            break;
        }
    }
    let residual = (current / window.len() as f64).sqrt();
    if !converged {
        return Err(Error::FitNotConverged { iterations, s: params[0], beta: params[1], residual });
    }
    Ok(LorentzianFit {
        s: params[0],
        beta: params[1].abs(),
        center: params[2],
        residual,
        beta_curvature: sampled_curvature_width(points, peak),
        iterations,
        window_points: window.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseExtrema {
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub phi_max: f64,
}

/// Positions `+-gamma sqrt(1+C)` and size `atan(C / (2 sqrt(1+C)))` of the
/// relative-phase extrema around a resonance of width `gamma_scale`.
pub fn phase_extrema(c: f64, gamma_scale: f64) -> PhaseExtrema {
    let root = (1.0 + c).sqrt();
    PhaseExtrema {
        delta_plus: gamma_scale * root,
        delta_minus: -gamma_scale * root,
        phi_max: (c / (2.0 * root)).atan(),
    }
}

/// Extrema of `phase_rel` found in a scan: `(delta at max, max, delta at min, min)`.
pub fn scanned_phase_extrema(scan: &ScanResult) -> Option<(f64, f64, f64, f64)> {
    let finite = scan.points.iter().filter(|p| p.phase_rel.is_finite());
    let max = finite.clone().max_by(|a, b| a.phase_rel.total_cmp(&b.phase_rel))?;
    let min = finite.min_by(|a, b| a.phase_rel.total_cmp(&b.phase_rel))?;
    Some((max.delta, max.phase_rel, min.delta, min.phase_rel))
}

/// `max - min` of the relative phase over a scan.
pub fn phase_swing(scan: &ScanResult) -> f64 {
    scanned_phase_extrema(scan).map_or(0.0, |(_, hi, _, lo)| hi - lo)
}

/// Zero crossing of the relative phase nearest the transmission minimum,
/// as `(delta, slope)`.
pub fn phase_crossing(scan: &ScanResult) -> Result<(f64, f64)> {
    let pts: Vec<_> = scan.points.iter().filter(|p| p.phase_rel.is_finite()).collect();
    let dip = scan.min_transmission().map_or(0.0, |p| p.delta);
    pts.windows(2)
        .filter(|w| {
            let (a, b) = (w[0].phase_rel, w[1].phase_rel);
            (a <= 0.0 && b > 0.0 || a >= 0.0 && b < 0.0) && (b - a).abs() < PI / 2.0
        })
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let slope = (b.phase_rel - a.phase_rel) / (b.delta - a.delta);
            (a.delta - a.phase_rel / slope, slope)
        })
        .min_by(|x, y| (x.0 - dip).abs().total_cmp(&(y.0 - dip).abs()))
        .ok_or(Error::NoPhaseCrossing)
}

/// Slope of the relative phase at the resonance crossing; about
/// `1/gamma_eff + 1/kappa` for a well-resolved antiresonance.
pub fn phase_slope_at_resonance(scan: &ScanResult) -> Result<f64> {
    phase_crossing(scan).map(|(_, slope)| slope)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    /// `omega_m - omega_e` for `m = 1..=N`.
    pub energies: Vec<f64>,
    /// Column `m - 1` holds state `|m>`.
    pub states: DMatrix<f64>,
}

/// Analytic bands of a chain with nearest-neighbour exchange `omega_nn`.
pub fn band_structure(n: usize, omega_nn: f64) -> Result<BandStructure> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("band structure needs N >= 2, got {n}")));
    }
    let k = PI / (n + 1) as f64;
    let energies = (1..=n).map(|m| 2.0 * omega_nn * (m as f64 * k).cos()).collect();
    let norm = (2.0 / (n + 1) as f64).sqrt();
    let states = DMatrix::from_fn(n, n, |j, m| norm * (((m + 1) * (j + 1)) as f64 * k).sin());
    Ok(BandStructure { energies, states })
}

/// Tridiagonal coherent coupling of a nearest-neighbour chain.
pub fn nearest_neighbour_omega(n: usize, omega_nn: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { omega_nn } else { 0.0 })
}

/// Laser detuning `delta_e` at which the top band state `m = N` is driven;
/// a starting point for [`solve_cavity_tuning`].
pub fn top_band_detuning(n: usize, omega_nn: f64) -> f64 {
    -2.0 * omega_nn * (n as f64 * PI / (n + 1) as f64).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaEigen {
    /// Collective decay rates, ascending.
    pub lambdas: Vec<f64>,
    /// Orthogonal matrix whose columns are the decay eigenmodes.
    pub transform: DMatrix<f64>,
}

/// Sorted, sign-fixed eigen-decomposition of the dissipative matrix.
pub fn gamma_eigenmodes(couplings: &CouplingMatrices) -> GammaEigen {
    let eig = SymmetricEigen::new(couplings.gamma_matrix().clone());
    let n = couplings.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut transform = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let lead = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        transform.set_column(col, &(v * lead.signum()));
    }
    GammaEigen { lambdas: order.iter().map(|&k| eig.eigenvalues[k]).collect(), transform }
}

/// Decay rates below this fraction of the largest are treated as dark.
const DARK_FRACTION: f64 = 1e-13;

/// `C_opt = G^T G / (kappa lambda_min)`, `+inf` when the darkest collective
/// mode does not decay.
pub fn optimal_cooperativity(g_vec: &CouplingVector, couplings: &CouplingMatrices, kappa: f64) -> Result<f64> {
    if g_vec.len() != couplings.len() {
        return Err(Error::LengthMismatch { expected: couplings.len(), found: g_vec.len() });
    }
    let lambdas = gamma_eigenmodes(couplings).lambdas;
    let (Some(&lo), Some(&hi)) = (lambdas.first(), lambdas.last()) else {
        return Ok(0.0);
    };
    if lo <= DARK_FRACTION * hi.abs() {
        return Ok(f64::INFINITY);
    }
    Ok(g_vec.norm_sq() / (kappa * lo))
}

const TUNING_TOL: f64 = 1e-10;
const TUNING_MAX_ITER: usize = 200;

/// Detuning `delta` with `delta_eff(delta) = 0` inside `bracket`, by
/// bisection safeguarded secant steps. The cavity is then placed at
/// `omega_c = omega_e - delta`, i.e. a laser-sweep offset of `delta`.
pub fn solve_cavity_tuning(model: &SystemModel, bracket: (f64, f64)) -> Result<f64> {
    let f = |x: f64| effective_response(model, x).map(|(d, _)| d);
    let tol = TUNING_TOL * model.kappa();
    let (mut a, mut b) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa.abs() < tol {
        return Ok(a);
    }
    if fb.abs() < tol {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }
    let mut force_bisect = false;
    for _ in 0..TUNING_MAX_ITER {
        let width = b - a;
        let secant = b - fb * (b - a) / (fb - fa);
        let c = if force_bisect || !(secant > a && secant < b) { 0.5 * (a + b) } else { secant };
        let fc = f(c)?;
        if fc.abs() < tol {
            return Ok(c);
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
        } else {
            b = c;
            fb = fc;
        }
        force_bisect = b - a > 0.5 * width;
        if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1e-300) {
            let (at, residual) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
            return Err(Error::Discontinuity { at, residual: residual.abs() });
        }
    }
    let (at, residual) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    Err(Error::Discontinuity { at, residual: residual.abs() })
}

/// All roots of `delta_eff` on `[lo, hi]`, located by sampling for sign
/// changes and refined with [`solve_cavity_tuning`]. Poles are skipped.
pub fn find_resonances(model: &SystemModel, lo: f64, hi: f64, samples: usize) -> Result<Vec<f64>> {
    let grid = crate::steady_state::linspace(lo, hi, samples.max(2));
    let values: Vec<Option<f64>> =
        grid.iter().map(|&x| effective_response(model, x).ok().map(|(d, _)| d)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len() - 1 {
        let (Some(fa), Some(fb)) = (values[i], values[i + 1]) else { continue };
        if fa == 0.0 {
            roots.push(grid[i]);
            continue;
        }
        if fa.signum() == fb.signum() || fb == 0.0 {
            continue;
        }
        match solve_cavity_tuning(model, (grid[i], grid[i + 1])) {
            Ok(root) => roots.push(root),
            Err(Error::Discontinuity { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if let Some(&Some(last)) = values.last() {
        if last == 0.0 {
            roots.push(hi);
        }
    }
    Ok(roots)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub delta: f64,
    pub gamma_eff: f64,
    pub c_eff: f64,
}

/// Collective resonance with the largest effective cooperativity in
/// `[lo, hi]`.
pub fn peak_cooperativity(model: &SystemModel, lo: f64, hi: f64, samples: usize) -> Result<Option<Resonance>> {
    let mut best: Option<Resonance> = None;
    for delta in find_resonances(model, lo, hi, samples)? {
        let (_, gamma_eff) = effective_response(model, delta)?;
        let c_eff = crate::steady_state::effective_cooperativity(model, delta)?;
        if best.is_none_or(|b| c_eff > b.c_eff) {
            best = Some(Resonance { delta, gamma_eff, c_eff });
        }
    }
    Ok(best)
}

/// Symmetric search window covering every collective line shift.
pub fn resonance_window(couplings: &CouplingMatrices, margin: f64) -> f64 {
    let spread = SymmetricEigen::new(couplings.omega().clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    1.2 * spread + margin
}
