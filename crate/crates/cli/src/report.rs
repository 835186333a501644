//! Versioned JSON reports and CSV point tables.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use berwald_core::classify::PointDiagnostics;
use serde::Serialize;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo { name: "berwald", version: env!("CARGO_PKG_VERSION") }
    }
}

/// Envelope shared by all commands; `body` is flattened into the top level.
#[derive(Clone, Debug, Serialize)]
pub struct Report<'a, B: Serialize> {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub command: &'a str,
    pub metric: String,
    pub exit_code: i32,
    pub config: &'a RunConfig,
    #[serde(flatten)]
    pub body: B,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("cannot serialize report")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

const POINT_COLUMNS: [&str; 22] = [
    "x",
    "y",
    "z",
    "gamma_11",
    "gamma_12",
    "gamma_13",
    "gamma_22",
    "gamma_23",
    "gamma_33",
    "area",
    "sigma",
    "sigma_relative",
    "degenerate",
    "f",
    "consistency",
    "connection_curvature",
    "levi_civita_curvature",
    "symbol_scale",
    "comparison_defect",
    "lie_derivative",
    "covariant_residual",
    "f_killing",
];

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// One row per sample point; empty cells where a stage did not run.
pub fn write_points_csv(path: &Path, points: &[PointDiagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(POINT_COLUMNS)?;
    for d in points {
        let r = &d.recovery;
        let g = r.gamma;
        let curvature = d.curvature.as_ref();
        let killing = d.killing.as_ref();
        let row = [
            num(r.point[0]),
            num(r.point[1]),
            num(r.point[2]),
            num(g[0][0]),
            num(g[0][1]),
            num(g[0][2]),
            num(g[1][1]),
            num(g[1][2]),
            num(g[2][2]),
            num(r.recovery.area),
            num(r.recovery.denominator),
            num(r.recovery.sigma_relative),
            r.recovery.degenerate.to_string(),
            opt(r.recovery.f),
            num(r.consistency),
            opt(curvature.map(|c| c.connection_norm)),
            opt(curvature.map(|c| c.levi_civita_norm)),
            opt(curvature.map(|c| c.symbol_scale)),
            opt(curvature.map(|c| c.comparison_defect)),
            opt(killing.map(|k| k.lie_derivative)),
            opt(killing.map(|k| k.covariant_residual)),
            opt(killing.and_then(|k| k.extraction).map(|e| e.f)),
        ];
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
