//! Acceptance criteria, one test per criterion. Each prints a single
//! `[PASS]` / `[FAIL]` line; run with `--nocapture` to see them.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use antiresonance::analysis::{
    antiresonance_depth, antiresonance_width, background_subtracted, band_structure, fit_lorentzian,
    nearest_neighbour_omega, optimal_cooperativity, peak_cooperativity, phase_extrema, phase_slope_at_resonance,
    phase_swing, resonance_window, scanned_phase_extrema, solve_cavity_tuning, top_band_detuning, WidthForm,
};
use antiresonance::geometry::{build_coupling_matrices, make_chain, make_grid, Vec3};
use antiresonance::modes::{
    coupling_vector_eigenmode, coupling_vector_pattern, coupling_vector_tem, CouplingPattern, CouplingVector,
    TemMode,
};
use antiresonance::oracle::{compare_linearization, exact_transmission, OracleConfig};
use antiresonance::steady_state::{
    cavity_field, effective_cooperativity, effective_response, linspace, scan_spectrum, transmission_point,
    ScanMode,
};
use antiresonance::{CouplingMatrices, SystemModel};

fn report(criterion: u32, pass: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let ok = pass && elapsed <= limit;
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {criterion}: {detail} ({:.2} s, limit {} s)", elapsed.as_secs_f64(), limit.as_secs());
    assert!(pass, "criterion {criterion} failed: {detail}");
    assert!(elapsed <= limit, "criterion {criterion} exceeded its runtime budget");
}

fn chain_model(n: usize, d: f64, gamma: f64, g: CouplingVector, coherent: bool) -> SystemModel {
    let array = make_chain(n, d, Vec3::x(), gamma).unwrap();
    let mut m = build_coupling_matrices(&array).unwrap();
    if !coherent {
        m = m.without_coherent();
    }
    SystemModel::resonant(m, g).unwrap()
}

fn single(g: f64, gamma: f64) -> SystemModel {
    let m = CouplingMatrices::from_parts(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, gamma)).unwrap();
    SystemModel::resonant(m, CouplingVector::new(vec![g]).unwrap()).unwrap()
}

#[test]
fn criterion_1_matched_chain() {
    let start = Instant::now();
    let gamma = 1.0 / 40.0;
    let array = make_chain(10, 0.08, Vec3::x(), gamma).unwrap();
    let m = build_coupling_matrices(&array).unwrap();
    let g = coupling_vector_eigenmode(&m, 1.0 / 50.0).unwrap();
    let printed: [f64; 10] = [0.72, -1.44, 2.03, -2.46, 2.68, -2.68, 2.46, -2.03, 1.44, -0.72];
    let sign = g.as_slice()[0].signum() * printed[0].signum();
    let worst_g = g
        .as_slice()
        .iter()
        .zip(printed)
        .map(|(a, b)| (sign * a * 100.0 - b).abs() / b.abs())
        .fold(0.0, f64::max);
    let model = SystemModel::resonant(m.clone(), g).unwrap();
    let hint = top_band_detuning(10, m.omega()[(0, 1)]);
    let delta = solve_cavity_tuning(&model, (hint - 0.05, hint + 0.05)).unwrap();
    // the offset's sign follows the sign convention of the coherent coupling
    let delta_err = (delta.abs() / 0.234 - 1.0).abs();
    let pass = worst_g < 0.05 && delta_err < 0.02;
    report(
        1,
        pass,
        start.elapsed(),
        Duration::from_secs(1),
        &format!("delta = {delta:.5} (|delta| off by {:.2}%), worst G entry off by {:.2}%", 100.0 * delta_err, 100.0 * worst_g),
    );
}

#[test]
fn criterion_2_square_array() {
    let start = Instant::now();
    let (d, w, g_ref, gamma) = (0.2, 0.2, 1.0 / 20.0, 1.0 / 40.0);
    let array = make_grid(3, 3, d, gamma).unwrap();
    let m = build_coupling_matrices(&array).unwrap();
    let reference = 9.0 * g_ref * g_ref / gamma;
    let window = resonance_window(&m, 0.05);
    let offsets = linspace(-d / 2.0, d / 2.0, 5);
    let mut best = (0.0, String::new());
    for mode_m in 0..=4 {
        for mode_n in 0..=4 {
            for &ox in &offsets {
                for &oy in &offsets {
                    let mode = TemMode::new(mode_m, mode_n, w, [ox, oy]).unwrap();
                    let g = coupling_vector_tem(&array, &mode, g_ref).unwrap();
                    if g.norm() < 1e-9 {
                        continue;
                    }
                    let model = SystemModel::resonant(m.clone(), g).unwrap();
                    if let Ok(Some(peak)) = peak_cooperativity(&model, -window, window, 2001) {
                        if peak.c_eff.is_finite() && peak.c_eff > best.0 {
                            best = (
                                peak.c_eff,
                                format!("TEM{mode_m}{mode_n} offset ({ox:+.3}, {oy:+.3}) at delta_e = {:.5}", peak.delta),
                            );
                        }
                    }
                }
            }
        }
    }
    let pass = (reference - 0.9).abs() < 1e-12 && best.0 >= 40.0 && best.0 >= 80.1 / 2.0 && best.0 <= 80.1 * 2.0;
    report(
        2,
        pass,
        start.elapsed(),
        Duration::from_secs(30),
        &format!("independent reference {reference:.3}, best C_eff = {:.2} (reference 80.1) for {}", best.0, best.1),
    );
}

#[test]
fn criterion_3_single_emitter_closed_forms() {
    let start = Instant::now();
    let mut worst_depth: f64 = 0.0;
    let mut worst_width: f64 = 0.0;
    for (g, gamma) in [(0.01, 0.005), (0.02, 0.025), (0.1, 0.05)] {
        let c = g * g / gamma;
        let beta = antiresonance_width(g, gamma, 1.0, WidthForm::Exact);
        let grid = linspace(-10.0 * beta, 10.0 * beta, 4001);
        let scan = scan_spectrum(&single(g, gamma), &grid, ScanMode::SweepBoth).unwrap();
        let b = background_subtracted(&scan);
        let depth = b.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        worst_depth = worst_depth.max((depth - antiresonance_depth(c)).abs());
        let fit = fit_lorentzian(&b).unwrap();
        worst_width = worst_width.max((fit.beta / beta - 1.0).abs());
    }
    let pass = worst_depth < 1e-6 && worst_width < 0.01;
    report(
        3,
        pass,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("depth error {worst_depth:.2e}, width error {:.3}%", 100.0 * worst_width),
    );
}

#[test]
fn criterion_4_two_emitter_limits() {
    let start = Instant::now();
    let (gamma, g) = (1.0 / 40.0, 1.0 / 50.0);
    let single_c = g * g / gamma;
    let opposite = coupling_vector_pattern(2, g, &CouplingPattern::Alternating).unwrap();
    let dark = chain_model(2, 0.001, gamma, opposite, false);
    let (_, gamma_dark) = effective_response(&dark, 0.0).unwrap();
    let c_dark = effective_cooperativity(&dark, 0.0).unwrap();

    let uniform = coupling_vector_pattern(2, g, &CouplingPattern::Uniform).unwrap();
    let bright = chain_model(2, 0.001, gamma, uniform, true);
    let shift = bright.couplings().omega()[(0, 1)];
    let resonance = solve_cavity_tuning(&bright, (-shift - 1.0, -shift + 1.0)).unwrap();
    let (_, gamma_bright) = effective_response(&bright, resonance).unwrap();
    let ratio = gamma_bright / gamma;

    let pass = gamma_dark / gamma < 1e-4 && c_dark > 1e4 * single_c && (1.99..=2.00).contains(&ratio);
    report(
        4,
        pass,
        start.elapsed(),
        Duration::from_secs(1),
        &format!(
            "opposite: gamma_eff/gamma = {:.3e}, C_eff/C = {:.3e}; uniform: gamma_eff/gamma = {ratio:.6}",
            gamma_dark / gamma,
            c_dark / single_c
        ),
    );
}

#[test]
fn criterion_5_phase_analytics() {
    let start = Instant::now();
    let mut worst_pos: f64 = 0.0;
    let mut worst_mag: f64 = 0.0;
    for (g, gamma) in [(0.05, 0.0125), (0.05, 0.0025), (0.1, 0.001)] {
        let c = g * g / gamma;
        let e = phase_extrema(c, gamma);
        let grid = linspace(-5.0 * e.delta_plus, 5.0 * e.delta_plus, 20001);
        let scan = scan_spectrum(&single(g, gamma), &grid, ScanMode::SweepBoth).unwrap();
        let (at_max, max, at_min, min) = scanned_phase_extrema(&scan).unwrap();
        worst_pos = worst_pos.max((at_max / e.delta_plus - 1.0).abs()).max((at_min / e.delta_minus - 1.0).abs());
        worst_mag = worst_mag.max((max / e.phi_max - 1.0).abs()).max((-min / e.phi_max - 1.0).abs());
    }

    let (gamma, g) = (1.0 / 40.0, 1.0 / 20.0);
    let opposite = coupling_vector_pattern(2, g, &CouplingPattern::Alternating).unwrap();
    let dark = chain_model(2, 0.005, gamma, opposite, false);
    let (_, gamma_eff) = effective_response(&dark, 0.0).unwrap();
    let c_eff = effective_cooperativity(&dark, 0.0).unwrap();
    let e = phase_extrema(c_eff, gamma_eff);
    let grid = linspace(-10.0 * e.delta_plus, 10.0 * e.delta_plus, 4000);
    let scan = scan_spectrum(&dark, &grid, ScanMode::SweepBoth).unwrap();
    let swing = phase_swing(&scan);
    let slope = phase_slope_at_resonance(&scan).unwrap() * gamma_eff;
    let single_ratio = g * g / gamma_eff;

    let pass = worst_pos < 0.02 && worst_mag < 0.02 && swing >= 0.95 * PI && single_ratio > 100.0 && (0.9..=1.1).contains(&slope);
    report(
        5,
        pass,
        start.elapsed(),
        Duration::from_secs(5),
        &format!(
            "extrema position error {:.3}%, magnitude error {:.3}%; subradiant pair: swing {:.4} pi, slope*gamma_eff {slope:.4} (g^2/gamma_eff = {single_ratio:.0})",
            100.0 * worst_pos,
            100.0 * worst_mag,
            swing / PI
        ),
    );
}

#[test]
fn criterion_6_oracle_equivalence() {
    let start = Instant::now();
    let (gamma, g) = (1.0 / 40.0, 1.0 / 20.0);
    let opposite = coupling_vector_pattern(4, g, &CouplingPattern::Alternating).unwrap();
    let model = chain_model(4, 0.02, gamma, opposite, false);
    let (_, gamma_eff) = effective_response(&model, 0.0).unwrap();
    let c_eff = effective_cooperativity(&model, 0.0).unwrap();
    let width = gamma_eff * (1.0 + c_eff);
    let grid = linspace(-5.0 * width, 5.0 * width, 201);
    let weak = OracleConfig { n_max: 3, ..OracleConfig::default() };
    let rows = compare_linearization(&model, &grid, ScanMode::SweepBoth, &[1e-3], &weak).unwrap();
    let max_diff = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);

    // strong drive, at the subradiant resonance against the bare cavity
    let strong_eta = 0.5;
    let strong = OracleConfig::for_drive(strong_eta, model.kappa());
    let at_resonance = model.with_eta(strong_eta).unwrap();
    let (t_strong, state) = exact_transmission(&at_resonance, &strong).unwrap();
    let background = 1.0;
    let dip_persists = t_strong < 0.5 * background;

    let pass = max_diff < 1e-4 && dip_persists;
    report(
        6,
        pass,
        start.elapsed(),
        Duration::from_secs(300),
        &format!(
            "eta = 1e-3: max |T_exact - T_linear| = {max_diff:.2e} over 201 points; eta = 0.5 (n_max = {}): T = {t_strong:.4} vs 0.5 x background, max excitation {:.3}",
            strong.n_max,
            state.max_excitation()
        ),
    );
}

#[test]
fn criterion_7_band_structure() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 2..=20 {
        let omega_nn = -0.132;
        let bands = band_structure(n, omega_nn).unwrap();
        let h = nearest_neighbour_omega(n, omega_nn);
        let eig = SymmetricEigen::new(h.clone());
        let mut numeric: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let mut analytic = bands.energies.clone();
        numeric.sort_by(f64::total_cmp);
        analytic.sort_by(f64::total_cmp);
        for (a, b) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - b).abs());
        }
        for m in 0..n {
            let v = bands.states.column(m);
            // the numerical eigenvector of the same level, up to sign
            let k = (0..n)
                .min_by(|&i, &j| {
                    (eig.eigenvalues[i] - bands.energies[m]).abs().total_cmp(&(eig.eigenvalues[j] - bands.energies[m]).abs())
                })
                .unwrap();
            let u = eig.eigenvectors.column(k);
            let sign = u.dot(&v).signum();
            worst = worst.max((u * sign - v).amax());
        }
    }
    report(7, worst < 1e-10, start.elapsed(), Duration::from_secs(1), &format!("max deviation {worst:.2e} for N = 2..20"));
}

#[test]
fn criterion_8_cooperativity_trends() {
    let start = Instant::now();
    let (gamma, g) = (1.0 / 40.0, 1.0 / 30.0);
    let independent = 10.0 * g * g / gamma;
    let mut min_ratio = f64::INFINITY;
    let mut opt_ok = true;
    for d in linspace(0.05, 1.0, 39) {
        let array = make_chain(10, d, Vec3::x(), gamma).unwrap();
        let m = build_coupling_matrices(&array).unwrap();
        let gv = coupling_vector_eigenmode(&m, g).unwrap();
        let c_opt = optimal_cooperativity(&gv, &m, 1.0).unwrap();
        let model = SystemModel::resonant(m.clone(), gv).unwrap();
        let window = resonance_window(&m, 0.05);
        let peak = peak_cooperativity(&model, -window, window, 4001).unwrap().map_or(0.0, |p| p.c_eff);
        if d < 0.5 {
            min_ratio = min_ratio.min(peak / independent);
        }
        opt_ok &= c_opt >= peak * (1.0 - 1e-9);
    }

    let array = make_chain(10, 0.2, Vec3::x(), gamma).unwrap();
    let m = build_coupling_matrices(&array).unwrap();
    let window = resonance_window(&m, 0.05);
    let mut c_by_order = Vec::new();
    let mut norms = Vec::new();
    for order in 0..=25u32 {
        let gv = coupling_vector_tem(&array, &TemMode::centred(order, 0, 1.0).unwrap(), g).unwrap();
        norms.push(gv.norm());
        let model = SystemModel::resonant(m.clone(), gv).unwrap();
        let peak = peak_cooperativity(&model, -window, window, 4001).unwrap().map_or(0.0, |p| p.c_eff);
        c_by_order.push(peak);
    }
    let (best_order, best) = (15..=25).map(|k| (k, c_by_order[k])).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let enhancement = best / c_by_order[0];
    let even: Vec<f64> = (0..=20).step_by(2).map(|k| norms[k]).collect();
    let rises: Vec<String> = even
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] >= w[0])
        .map(|(i, w)| format!("m={}->{}: {:.6} -> {:.6}", 2 * i, 2 * i + 2, w[0], w[1]))
        .collect();

    let pass = min_ratio > 1.0 && opt_ok && enhancement >= 10.0 && rises.is_empty();
    report(
        8,
        pass,
        start.elapsed(),
        Duration::from_secs(60),
        &format!(
            "min C_eff / independent over d < 0.5: {min_ratio:.3}; C_opt >= C_eff: {opt_ok}; TEM m = {best_order}: C_eff = {best:.2} vs m = 0: {:.3} ({enhancement:.0}x); |G| increases at [{}]",
            c_by_order[0],
            rises.join(", ")
        ),
    );
}

#[test]
fn criterion_9_property_suites() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_509);
    let mut failures = Vec::new();
    for trial in 0..100 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(0.05..1.5);
        let angle = rng.random_range(0.0..PI);
        let gamma = rng.random_range(0.005..0.1);
        let array = make_chain(n, d, Vec3::new(angle.cos(), angle.sin(), 0.0), gamma).unwrap();
        let m = build_coupling_matrices(&array).unwrap();
        let g = CouplingVector::new((0..n).map(|_| rng.random_range(-0.1..0.1)).collect()).unwrap();
        let model = SystemModel::resonant(m.clone(), g.clone()).unwrap();

        let min_eig = m.gamma_matrix().clone().symmetric_eigenvalues().min();
        if min_eig < -1e-12 * gamma {
            failures.push(format!("trial {trial}: Gamma eigenvalue {min_eig:e}"));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted = model.permuted(&perm).unwrap();
        let flipped = model.with_g_vec(g.negated()).unwrap();
        for _ in 0..5 {
            let delta = rng.random_range(-1.0..1.0);
            let offset = rng.random_range(-0.5..0.5);
            let local = |x: &SystemModel| x.with_detunings(delta - offset, delta);
            let p = transmission_point(&local(&model)).unwrap();
            if p.transmission > 1.0 + 1e-9 {
                failures.push(format!("trial {trial}: T = {}", p.transmission));
            }
            let q = transmission_point(&local(&permuted)).unwrap();
            if (q.t - p.t).norm() > 1e-10 {
                failures.push(format!("trial {trial}: permutation changed t by {:e}", (q.t - p.t).norm()));
            }
            let r = transmission_point(&local(&flipped)).unwrap();
            if (r.t - p.t).norm() > 1e-10 {
                failures.push(format!("trial {trial}: sign flip changed t by {:e}", (r.t - p.t).norm()));
            }
            let eta = rng.random_range(0.0..5.0);
            let base = cavity_field(&local(&model)).unwrap();
            let driven = cavity_field(&local(&model).with_eta(eta).unwrap()).unwrap();
            if (driven - base * eta).norm() > 1e-12 * base.norm() * eta.max(1.0) {
                failures.push(format!("trial {trial}: field not linear in drive"));
            }
        }
    }
    report(
        9,
        failures.is_empty(),
        start.elapsed(),
        Duration::from_secs(60),
        &format!("100 random geometries, {} violations {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    );
}
