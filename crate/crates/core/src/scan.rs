//! Parameter grids, sweep configuration and CSV output.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuations::MechanicalState;
use crate::params::{ModelParams, Tolerances};
use crate::stability::{classify, BoundaryPoint, Classification};
use crate::steady::{reconstruct_amplitudes, trivial_solution, Branch};

/// Name of the intracavity signal intensity axis.
pub const INTENSITY_AXIS: &str = "I_s";

/// Formats a number with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Axis {
    pub fn linear(name: &str, min: f64, max: f64, n_points: usize) -> Self {
        Self { name: name.to_string(), min, max, n_points, spacing: Spacing::Linear }
    }

    pub fn check(&self) -> Result<()> {
        if self.name != INTENSITY_AXIS && !ModelParams::FIELD_NAMES.contains(&self.name.as_str()) {
            return Err(Error::Validation(format!(
                "unknown axis '{}'; expected one of {:?} or {INTENSITY_AXIS}",
                self.name,
                ModelParams::FIELD_NAMES
            )));
        }
        if self.n_points < 2 {
            return Err(Error::Validation(format!("axis '{}' needs n_points >= 2", self.name)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::Validation(format!("axis '{}' needs finite min < max", self.name)));
        }
        if self.spacing == Spacing::Log && self.min <= 0.0 {
            return Err(Error::Validation(format!("log axis '{}' needs min > 0", self.name)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => {
                        if k == n - 1 {
                            self.max
                        } else {
                            self.min + s * (self.max - self.min)
                        }
                    }
                    Spacing::Log => (self.min.ln() + s * (self.max.ln() - self.min.ln())).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum System {
    #[default]
    Dompo,
    Sideband,
}

impl System {
    pub fn as_str(&self) -> &'static str {
        match self {
            System::Dompo => "dompo",
            System::Sideband => "sideband",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Stability,
    NEff,
    Squeeze,
    Theta,
    Sigma,
}

fn all_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Stability, OutputKind::NEff, OutputKind::Squeeze, OutputKind::Theta, OutputKind::Sigma]
}

/// JSON sweep description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub base: ModelParams,
    pub axis1: Axis,
    pub axis2: Axis,
    #[serde(default)]
    pub system: System,
    #[serde(default = "all_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ScanConfig {
    pub fn check(&self) -> Result<()> {
        self.base.check()?;
        self.axis1.check()?;
        self.axis2.check()?;
        if self.axis1.name == self.axis2.name {
            return Err(Error::Validation(format!("both axes are '{}'", self.axis1.name)));
        }
        if self.threads == Some(0) {
            return Err(Error::Validation("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ScanConfig = serde_json::from_str(s).map_err(|e| Error::Validation(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Validation(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)
    }

    /// Whether a column group is requested.
    pub fn wants(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }
}

/// Parameters of one grid cell and the intensity, if an axis sets it.
pub fn cell_params(base: &ModelParams, axis1: &Axis, v1: f64, axis2: &Axis, v2: f64) -> Result<(ModelParams, Option<f64>)> {
    let mut p = *base;
    let mut i_s = None;
    for (axis, v) in [(axis1, v1), (axis2, v2)] {
        if axis.name == INTENSITY_AXIS {
            i_s = Some(v);
        } else {
            p.set(&axis.name, v)?;
        }
    }
    Ok((p, i_s))
}

/// Row-major list of grid points, first axis outermost.
pub fn grid_points(axis1: &Axis, axis2: &Axis) -> Vec<(f64, f64)> {
    let v2 = axis2.values();
    axis1.values().into_iter().flat_map(|a| v2.iter().map(move |&b| (a, b))).collect()
}

/// One cell of an effective-parameter map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCell {
    pub param1: f64,
    pub param2: f64,
    /// Drive: `sigma` for the DOMPO, `E` for the sideband system.
    pub sigma: Option<f64>,
    pub branch: Option<Branch>,
    pub stable: bool,
    pub instability: Option<Classification>,
    pub state: Option<MechanicalState>,
    pub margin: Option<f64>,
    pub system: System,
}

/// Evaluates every cell of a map in parallel; output is in grid order.
pub fn map_cells<F>(axis1: &Axis, axis2: &Axis, eval: F) -> Result<Vec<MapCell>>
where
    F: Fn(f64, f64) -> Result<MapCell> + Sync,
{
    axis1.check()?;
    axis2.check()?;
    if axis1.name != INTENSITY_AXIS && axis2.name != INTENSITY_AXIS {
        return Err(Error::Validation(format!("effective maps need an '{INTENSITY_AXIS}' axis")));
    }
    grid_points(axis1, axis2).into_par_iter().map(|(a, b)| eval(a, b)).collect()
}

pub fn run_effective_map(cfg: &ScanConfig, tol: &Tolerances) -> Result<Vec<MapCell>> {
    cfg.check()?;
    match cfg.system {
        System::Dompo => crate::fluctuations::effective_map(&cfg.base, &cfg.axis1, &cfg.axis2, tol),
        System::Sideband => crate::sideband::sideband_map(&cfg.base, &cfg.axis1, &cfg.axis2, tol),
    }
}

pub fn write_map_csv<W: Write>(cells: &[MapCell], outputs: &[OutputKind], mut w: W) -> Result<()> {
    let has = |k: OutputKind| outputs.contains(&k);
    let mut header = vec!["param1", "param2"];
    if has(OutputKind::Sigma) {
        header.push("sigma");
    }
    header.push("branch");
    if has(OutputKind::Stability) {
        header.extend(["stable", "instability"]);
    }
    if has(OutputKind::NEff) {
        header.push("n_eff");
    }
    if has(OutputKind::Squeeze) {
        header.push("squeeze_factor");
    }
    if has(OutputKind::Theta) {
        header.push("theta");
    }
    if has(OutputKind::Stability) {
        header.push("margin");
    }
    header.push("system");
    writeln!(w, "{}", header.join(","))?;

    for c in cells {
        let mut row = vec![fmt_num(c.param1), fmt_num(c.param2)];
        if has(OutputKind::Sigma) {
            row.push(fmt_opt(c.sigma));
        }
        row.push(c.branch.map(|b| b.as_str().to_string()).unwrap_or_default());
        if has(OutputKind::Stability) {
            row.push(c.stable.to_string());
            row.push(c.instability.map(|i| i.as_str().to_string()).unwrap_or_default());
        }
        if has(OutputKind::NEff) {
            row.push(fmt_opt(c.state.map(|s| s.n_eff)));
        }
        if has(OutputKind::Squeeze) {
            row.push(fmt_opt(c.state.map(|s| s.squeeze_factor)));
        }
        if has(OutputKind::Theta) {
            row.push(fmt_opt(c.state.map(|s| s.theta)));
        }
        if has(OutputKind::Stability) {
            row.push(fmt_opt(c.margin));
        }
        row.push(c.system.as_str().to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Stability verdict of the DOMPO state at one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub param1: f64,
    pub param2: f64,
    pub branch: Branch,
    pub classification: Classification,
    pub margin: f64,
}

/// Classification of the state selected by each cell (upper branch at the
/// given `I_s`, or the trivial state when no intensity axis is present).
pub fn classification_grid(cfg: &ScanConfig, tol: &Tolerances) -> Result<Vec<GridCell>> {
    cfg.check()?;
    grid_points(&cfg.axis1, &cfg.axis2)
        .into_par_iter()
        .map(|(a, b)| {
            let (p, i_s) = cell_params(&cfg.base, &cfg.axis1, a, &cfg.axis2, b)?;
            let (p, ss) = match i_s {
                Some(i) if i > 0.0 => {
                    let ss = reconstruct_amplitudes(&p, i, 1)?;
                    (p.with_sigma(ss.sigma), ss)
                }
                _ => (p, trivial_solution(&p)),
            };
            let rep = classify(&p, &ss, tol)?;
            Ok(GridCell { param1: a, param2: b, branch: ss.branch, classification: rep.classification, margin: rep.margin })
        })
        .collect()
}

pub fn write_grid_csv<W: Write>(cells: &[GridCell], mut w: W) -> Result<()> {
    writeln!(w, "param1,param2,branch,classification,margin")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_num(c.param1),
            fmt_num(c.param2),
            c.branch.as_str(),
            c.classification.as_str(),
            fmt_num(c.margin)
        )?;
    }
    Ok(())
}

pub fn write_boundary_csv<W: Write>(points: &[BoundaryPoint], mut w: W) -> Result<()> {
    writeln!(w, "g,I_s,kind,omega")?;
    for b in points {
        writeln!(w, "{},{},{},{}", fmt_num(b.g), fmt_num(b.i_s), b.kind.as_str(), fmt_opt(b.omega))?;
    }
    Ok(())
}
