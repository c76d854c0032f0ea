use std::fmt::Write as _;
use std::path::Path;

use antiresonance::analysis::{
    background_subtracted, fit_lorentzian, optimal_cooperativity, peak_cooperativity, resonance_window,
    solve_cavity_tuning, LorentzianFit,
};
use antiresonance::oracle::{compare_linearization, OracleConfig};
use antiresonance::steady_state::{effective_cooperativity, effective_response, linspace, scan_spectrum};
use antiresonance::{ScanMode, ScanResult, SystemModel};
use log::{info, warn};
use serde::Serialize;

use crate::config::{CooperativityBlock, LoadedConfig, RunConfig};
use crate::output::{dat, header, num, read_spectrum, spectrum_csv, write_atomic, write_json};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Tuning {
    pub delta: f64,
    pub bracket: [f64; 2],
    pub gamma_eff: f64,
    pub c_eff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Dip {
    pub delta: f64,
    pub transmission: f64,
    /// Largest background-subtracted dip `T_bare - T` on the grid.
    pub depth: f64,
    pub delta_eff: f64,
    pub gamma_eff: f64,
    pub c_eff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub schema: u32,
    pub config_sha256: String,
    pub emitters: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub g_norm_sq: f64,
    pub lambda_min: Option<f64>,
    pub c_independent: f64,
    pub c_opt: Option<f64>,
    pub mode: ScanMode,
    pub delta_tuned: Option<f64>,
    pub points: usize,
    pub flagged_points: usize,
    pub dip: Option<Dip>,
    pub fit: Option<LorentzianFit>,
    pub fit_error: Option<String>,
}

/// Emitter detuning of the collective resonance selected by `auto_tune`.
pub fn tune(cfg: &RunConfig, model: &SystemModel) -> Result<Option<Tuning>, CliError> {
    let Some(auto) = &cfg.cavity.auto_tune else { return Ok(None) };
    let bracket = (auto.bracket[0], auto.bracket[1]);
    let delta = solve_cavity_tuning(model, bracket)?;
    let (_, gamma_eff) = effective_response(model, delta)?;
    let c_eff = effective_cooperativity(model, delta)?;
    info!("tuned to delta_e = {delta:.10}");
    Ok(Some(Tuning { delta, bracket: auto.bracket, gamma_eff, c_eff }))
}

/// Cavity tuned to the resonance when `auto_tune` is set, otherwise offset
/// from the bare emitters by `delta_c`.
pub fn scan_mode(cfg: &RunConfig, tuning: Option<&Tuning>) -> ScanMode {
    let offset = match tuning {
        Some(t) => t.delta,
        None => -cfg.cavity.delta_c.unwrap_or(0.0),
    };
    if offset == 0.0 {
        ScanMode::SweepBoth
    } else {
        ScanMode::SweepLaser { offset }
    }
}

pub fn summarize(loaded: &LoadedConfig, model: &SystemModel, scan: &ScanResult, tuning: Option<&Tuning>) -> SpectrumSummary {
    let cfg = &loaded.config;
    let b = background_subtracted(scan);
    let deepest = b.iter().copied().enumerate().max_by(|x, y| x.1 .1.total_cmp(&y.1 .1));
    let dip = deepest.map(|(_, (delta, depth))| {
        let p = scan.points.iter().find(|p| p.delta == delta).expect("subtracted points come from the scan");
        Dip {
            delta,
            transmission: p.transmission,
            depth,
            delta_eff: p.delta_eff,
            gamma_eff: p.gamma_eff,
            c_eff: p.c_eff,
        }
    });
    let (fit, fit_error) = match fit_lorentzian(&b) {
        Ok(f) => (Some(f), None),
        Err(e) => {
            warn!("lorentzian fit failed: {e}");
            (None, Some(e.to_string()))
        }
    };
    let g_norm_sq = model.g_vec().norm_sq();
    SpectrumSummary {
        schema: crate::config::SCHEMA_VERSION,
        config_sha256: loaded.sha256.clone(),
        emitters: model.len(),
        kappa: model.kappa(),
        gamma: cfg.gamma,
        g_norm_sq,
        lambda_min: model.couplings().min_decay_rate(),
        c_independent: g_norm_sq / (model.kappa() * cfg.gamma),
        c_opt: optimal_cooperativity(model.g_vec(), model.couplings(), model.kappa()).ok(),
        mode: scan.mode,
        delta_tuned: tuning.map(|t| t.delta),
        points: scan.points.len(),
        flagged_points: scan.points.iter().filter(|p| p.flag.code() != 0).count(),
        dip,
        fit,
        fit_error,
    }
}

pub fn spectrum(loaded: &LoadedConfig, out: &Path) -> Result<SpectrumSummary, CliError> {
    let cfg = &loaded.config;
    let scan_block = cfg.scan.as_ref().ok_or_else(|| CliError::Config("missing `scan` block".into()))?;
    let model = cfg.model(None, None)?;
    let tuning = tune(cfg, &model)?;
    let mode = scan_mode(cfg, tuning.as_ref());
    let grid = linspace(scan_block.min, scan_block.max, scan_block.points);
    let scan = scan_spectrum(&model, &grid, mode)?;
    let summary = summarize(loaded, &model, &scan, tuning.as_ref());
    let stem = &cfg.output.stem;
    write_atomic(&out.join(format!("{stem}.csv")), spectrum_csv(&scan, model.kappa(), &loaded.sha256).as_bytes())?;
    write_json(&out.join(format!("{stem}_summary.json")), &summary)?;
    if cfg.output.dat {
        let t = dat(scan.points.iter().map(|p| (p.delta, p.transmission)));
        write_atomic(&out.join(format!("{stem}_T.dat")), t.as_bytes())?;
        let phase = dat(scan.points.iter().map(|p| (p.delta, p.phase_rel)));
        write_atomic(&out.join(format!("{stem}_phase.dat")), phase.as_bytes())?;
    }
    Ok(summary)
}

pub fn tune_only(loaded: &LoadedConfig, out: &Path) -> Result<Tuning, CliError> {
    let cfg = &loaded.config;
    let model = cfg.model(None, None)?;
    let tuning = tune(cfg, &model)?.ok_or_else(|| CliError::Config("`tune` needs `cavity.auto_tune`".into()))?;
    write_json(&out.join(format!("{}_tune.json", cfg.output.stem)), &tuning)?;
    Ok(tuning)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub config_sha256: String,
    pub etas: Vec<OracleDrive>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleDrive {
    pub eta: f64,
    pub n_max: usize,
    pub max_abs_diff: f64,
    pub min_t_exact: f64,
    pub min_t_linear: f64,
    pub max_excitation: f64,
}

pub fn oracle(loaded: &LoadedConfig, out: &Path) -> Result<OracleSummary, CliError> {
    let cfg = &loaded.config;
    let block = cfg.oracle.as_ref().ok_or_else(|| CliError::Config("missing `oracle` block".into()))?;
    let scan_block = cfg.scan.as_ref().ok_or_else(|| CliError::Config("missing `scan` block".into()))?;
    let model = cfg.model(None, None)?;
    let tuning = tune(cfg, &model)?;
    let mode = scan_mode(cfg, tuning.as_ref());
    let grid = linspace(scan_block.min, scan_block.max, block.points.unwrap_or(scan_block.points));

    let mut table = header(
        "oracle",
        &loaded.sha256,
        &[("kappa", num(model.kappa())), ("offset", num(mode.offset()))],
    );
    table.push_str("delta_over_kappa,eta,n_max,t_exact,t_linear,abs_diff,max_excitation\n");
    let mut drives = Vec::new();
    for &eta in &block.etas {
        let mut oc = OracleConfig::for_drive(eta, model.kappa());
        if let Some(n) = block.n_max {
            oc.n_max = n;
        }
        oc.method = block.method;
        info!("oracle: eta = {eta}, n_max = {}", oc.n_max);
        let rows = compare_linearization(&model, &grid, mode, &[eta], &oc)?;
        for r in &rows {
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{}",
                num(r.delta),
                num(r.eta),
                oc.n_max,
                num(r.t_exact),
                num(r.t_linear),
                num(r.abs_diff),
                num(r.max_excitation)
            );
        }
        let fold = |f: fn(&antiresonance::oracle::ComparisonRow) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
            rows.iter().map(f).fold(init, pick)
        };
        drives.push(OracleDrive {
            eta,
            n_max: oc.n_max,
            max_abs_diff: fold(|r| r.abs_diff, 0.0, f64::max),
            min_t_exact: fold(|r| r.t_exact, f64::INFINITY, f64::min),
            min_t_linear: fold(|r| r.t_linear, f64::INFINITY, f64::min),
            max_excitation: fold(|r| r.max_excitation, 0.0, f64::max),
        });
    }
    let stem = &cfg.output.stem;
    write_atomic(&out.join(format!("{stem}_oracle.csv")), table.as_bytes())?;
    let summary = OracleSummary { config_sha256: loaded.sha256.clone(), etas: drives };
    write_json(&out.join(format!("{stem}_oracle.json")), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct CooperativityRow {
    pub x: f64,
    pub c_eff: f64,
    pub delta_res: f64,
    pub gamma_eff: f64,
    pub c_opt: f64,
    pub g_norm: f64,
    pub c_independent: f64,
}

fn cooperativity_row(cfg: &RunConfig, x: f64, model: &SystemModel, samples: usize) -> Result<CooperativityRow, CliError> {
    let window = resonance_window(model.couplings(), 0.05);
    let peak = peak_cooperativity(model, -window, window, samples)?;
    let g_norm_sq = model.g_vec().norm_sq();
    Ok(CooperativityRow {
        x,
        c_eff: peak.map_or(f64::NAN, |p| p.c_eff),
        delta_res: peak.map_or(f64::NAN, |p| p.delta),
        gamma_eff: peak.map_or(f64::NAN, |p| p.gamma_eff),
        c_opt: optimal_cooperativity(model.g_vec(), model.couplings(), model.kappa())?,
        g_norm: g_norm_sq.sqrt(),
        c_independent: g_norm_sq / (model.kappa() * cfg.gamma),
    })
}

pub fn cooperativity(loaded: &LoadedConfig, out: &Path) -> Result<Vec<CooperativityRow>, CliError> {
    let cfg = &loaded.config;
    let block = cfg.cooperativity.as_ref().ok_or_else(|| CliError::Config("missing `cooperativity` block".into()))?;
    // (abscissa, spacing override, TEM order override)
    type Job = (f64, Option<f64>, Option<u32>);
    let (label, jobs): (&str, Vec<Job>) = match block {
        CooperativityBlock::Spacing { min, max, points, .. } => {
            let xs = if *points == 1 { vec![*min] } else { linspace(*min, *max, *points) };
            ("spacing", xs.into_iter().map(|d| (d, Some(d), None)).collect())
        }
        CooperativityBlock::TemOrder { orders, .. } => {
            ("tem_order", orders.iter().map(|&m| (f64::from(m), None, Some(m))).collect())
        }
    };
    let samples = match block {
        CooperativityBlock::Spacing { samples, .. } | CooperativityBlock::TemOrder { samples, .. } => *samples,
    };
    let mut rows = Vec::with_capacity(jobs.len());
    for (x, spacing, order) in jobs {
        let row = cfg.model(spacing, order).and_then(|m| cooperativity_row(cfg, x, &m, samples));
        match row {
            Ok(r) => rows.push(r),
            // a single bad sample (ambiguous eigenmode, dark coupling) does not end the sweep
            Err(CliError::Numerical(e)) => {
                warn!("{label} = {x}: {e}");
                rows.push(CooperativityRow {
                    x,
                    c_eff: f64::NAN,
                    delta_res: f64::NAN,
                    gamma_eff: f64::NAN,
                    c_opt: f64::NAN,
                    g_norm: f64::NAN,
                    c_independent: f64::NAN,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let mut table = header("cooperativity", &loaded.sha256, &[("sweep", label.into())]);
    table.push_str(&format!("{label},c_eff,delta_res,gamma_eff,c_opt,g_norm,c_independent\n"));
    for r in &rows {
        let fields = [r.x, r.c_eff, r.delta_res, r.gamma_eff, r.c_opt, r.g_norm, r.c_independent];
        let _ = writeln!(table, "{}", fields.iter().map(|&v| num(v)).collect::<Vec<_>>().join(","));
    }
    let stem = &cfg.output.stem;
    write_atomic(&out.join(format!("{stem}_cooperativity.csv")), table.as_bytes())?;
    if cfg.output.dat {
        let d = dat(rows.iter().map(|r| (r.x, r.c_eff)));
        write_atomic(&out.join(format!("{stem}_cooperativity.dat")), d.as_bytes())?;
    }
    Ok(rows)
}

/// Every stage the configuration has a block for.
pub fn run(loaded: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let mut did = false;
    if cfg.scan.is_some() {
        let s = spectrum(loaded, out)?;
        if let Some(d) = &s.dip {
            println!("{}: dip at {:.6} with depth {:.6}, C_eff {:.4}", cfg.output.stem, d.delta, d.depth, d.c_eff);
        }
        if let Some(t) = s.delta_tuned {
            println!("{}: tuned to delta_e = {t:.6}", cfg.output.stem);
        }
        did = true;
    }
    if cfg.oracle.is_some() {
        for d in oracle(loaded, out)?.etas {
            println!("{}: eta = {}: max |T_exact - T_linear| = {:.3e}", cfg.output.stem, d.eta, d.max_abs_diff);
        }
    }
    if cfg.cooperativity.is_some() {
        let rows = cooperativity(loaded, out)?;
        let best = rows.iter().filter(|r| r.c_eff.is_finite()).max_by(|a, b| a.c_eff.total_cmp(&b.c_eff));
        if let Some(b) = best {
            println!("{}: largest C_eff {:.4} at {}", cfg.output.stem, b.c_eff, b.x);
        }
        did = true;
    }
    if !did && cfg.cavity.auto_tune.is_some() {
        let t = tune_only(loaded, out)?;
        println!("{}: tuned to delta_e = {:.6}", cfg.output.stem, t.delta);
    }
    Ok(())
}

pub fn fit_table(path: &std::path::PathBuf, out: Option<&Path>) -> Result<LorentzianFit, CliError> {
    let table = read_spectrum(path)?;
    let fit = table.fit()?;
    if let Some(dir) = out {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("spectrum");
        write_json(&dir.join(format!("{stem}_fit.json")), &fit)?;
    }
    Ok(fit)
}

pub const RECIPES: [(&str, &[(&str, &str)]); 5] = [
    ("1", &[("fig1", include_str!("../recipes/fig1.json"))]),
    (
        "2",
        &[("fig2ab", include_str!("../recipes/fig2ab.json")), ("fig2cd", include_str!("../recipes/fig2cd.json"))],
    ),
    ("3", &[("fig3", include_str!("../recipes/fig3.json"))]),
    ("4", &[("fig4", include_str!("../recipes/fig4.json"))]),
    ("a1", &[("figA1", include_str!("../recipes/figA1.json"))]),
];

pub fn figure(id: &str, out: &Path) -> Result<(), CliError> {
    let key = id.to_ascii_lowercase();
    let (_, recipes) = RECIPES
        .iter()
        .find(|(k, _)| *k == key)
        .ok_or_else(|| CliError::Config(format!("unknown figure `{id}` (expected 1, 2, 3, 4 or a1)")))?;
    for (name, text) in recipes.iter() {
        let loaded = crate::config::parse(text).map_err(|e| CliError::Config(format!("recipe {name}: {e}")))?;
        run(&loaded, out)?;
    }
    Ok(())
}
