use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use antiresonance::analysis::{bare_transmission, fit_lorentzian, LorentzianFit};
use antiresonance::{ScanMode, ScanResult};
use serde::Serialize;

use crate::CliError;

pub const SPECTRUM_COLUMNS: [&str; 10] = [
    "delta_over_kappa",
    "re_t",
    "im_t",
    "T",
    "phase",
    "phase_rel",
    "delta_eff",
    "gamma_eff",
    "c_eff",
    "condition_flag",
];

/// Twelve significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

/// Writes next to the target and renames into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("summary types serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn header(kind: &str, sha256: &str, extra: &[(&str, String)]) -> String {
    let mut out = format!("# antires {kind}\n# config_sha256 = {sha256}\n");
    for (k, v) in extra {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out
}

pub fn spectrum_csv(scan: &ScanResult, kappa: f64, sha256: &str) -> String {
    let mode = match scan.mode {
        ScanMode::SweepBoth => "sweep_both",
        ScanMode::SweepLaser { .. } => "sweep_laser",
    };
    let mut out = header(
        "spectrum",
        sha256,
        &[
            ("emitters", scan.summary.emitters.to_string()),
            ("kappa", num(kappa)),
            ("mode", mode.into()),
            ("offset", num(scan.mode.offset())),
        ],
    );
    out.push_str(&SPECTRUM_COLUMNS.join(","));
    out.push('\n');
    for p in &scan.points {
        let row = [p.delta, p.t.re, p.t.im, p.transmission, p.phase, p.phase_rel, p.delta_eff, p.gamma_eff, p.c_eff];
        let fields: Vec<String> = row.iter().map(|&x| num(x)).collect();
        let _ = writeln!(out, "{},{}", fields.join(","), p.flag.code());
    }
    out
}

pub fn dat(rows: impl Iterator<Item = (f64, f64)>) -> String {
    rows.map(|(x, y)| format!("{} {}\n", num(x), num(y))).collect()
}

/// `(delta, T)` samples and the metadata needed to rebuild the background.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub kappa: f64,
    pub offset: f64,
    pub rows: Vec<(f64, f64)>,
}

impl SpectrumTable {
    pub fn background_subtracted(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|&(d, t)| (d, bare_transmission(self.kappa, d - self.offset) - t)).collect()
    }

    pub fn fit(&self) -> Result<LorentzianFit, CliError> {
        Ok(fit_lorentzian(&self.background_subtracted())?)
    }
}

pub fn read_spectrum(path: &PathBuf) -> Result<SpectrumTable, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_spectrum(&text)
}

pub fn parse_spectrum(text: &str) -> Result<SpectrumTable, CliError> {
    let bad = |line: usize, msg: &str| CliError::Config(format!("spectrum table line {line}: {msg}"));
    let mut kappa = None;
    let mut offset = None;
    let mut columns: Option<(usize, usize)> = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                let value = || v.trim().parse::<f64>().map_err(|_| bad(line_no, "unreadable metadata value"));
                match k.trim() {
                    "kappa" => kappa = Some(value()?),
                    "offset" => offset = Some(value()?),
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some((d_col, t_col)) = columns else {
            let find = |name: &str| fields.iter().position(|f| *f == name);
            match (find("delta_over_kappa"), find("T")) {
                (Some(d), Some(t)) => columns = Some((d, t)),
                _ => return Err(bad(line_no, "header lacks `delta_over_kappa` or `T`")),
            }
            continue;
        };
        let get = |c: usize| {
            fields.get(c).and_then(|f| f.parse::<f64>().ok()).ok_or_else(|| bad(line_no, "unreadable number"))
        };
        let t = get(t_col)?;
        if t.is_finite() {
            rows.push((get(d_col)?, t));
        }
    }
    let kappa = kappa.ok_or_else(|| CliError::Config("spectrum table has no `# kappa` metadata".into()))?;
    let offset = offset.ok_or_else(|| CliError::Config("spectrum table has no `# offset` metadata".into()))?;
    Ok(SpectrumTable { kappa, offset, rows })
}
