use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunReport, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Series and coefficient CSV tables.
    Csv,
    /// `summary.json` only.
    Summary,
    /// Both.
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedFile {
    /// Relative to the output directory.
    pub path: String,
    pub contents: String,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// All output files in a fixed order; byte-identical for identical reports.
pub fn render_tables(report: &RunReport, format: OutputFormat) -> Vec<RenderedFile> {
    let mut files = Vec::new();
    if format != OutputFormat::Summary {
        for sc in &report.scenarios {
            for series in &sc.series {
                let stem = format!("{}/b{}_x{}", sc.name, series.b, series.point_index);
                if !series.samples.is_empty() {
                    let mut csv = String::from("m,sigma_b,err_bound\n");
                    for row in &series.samples {
                        let _ =
                            writeln!(csv, "{},{},{}", row.m, num(row.sigma_b), num(row.err_bound));
                    }
                    files.push(RenderedFile {
                        path: format!("{stem}_series.csv"),
                        contents: csv,
                    });
                }
                let mut csv = String::from("k,a_fit,a_unc,a_pred,verdict\n");
                for row in &series.coefficients {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{}",
                        row.k,
                        opt(row.a_fit),
                        opt(row.a_unc),
                        opt(row.a_pred),
                        row.verdict
                    );
                }
                files.push(RenderedFile {
                    path: format!("{stem}_coefficients.csv"),
                    contents: csv,
                });
            }
        }
    }
    if format != OutputFormat::Csv {
        let mut json = serde_json::to_string_pretty(report).expect("report serializes");
        json.push('\n');
        files.push(RenderedFile {
            path: "summary.json".into(),
            contents: json,
        });
    }
    files
}

pub fn emit_tables(
    report: &RunReport,
    format: OutputFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ScenarioError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ScenarioError::IoFailure { path, source }
    };
    let mut written = Vec::new();
    for file in render_tables(report, format) {
        let path = out_dir.join(&file.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&path, file.contents.as_bytes()).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
