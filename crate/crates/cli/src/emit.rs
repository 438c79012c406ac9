//! Writing bundles, tables, and plots to disk.

use std::fs;
use std::path::{Path, PathBuf};

use enscore::{Error, Result};

use crate::report::ReportBundle;
use crate::svg;
use crate::table::{Cell, Table};

/// Output format for rendered tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Md,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" => Ok(Format::Md),
            other => Err(Error::InvalidInput(format!("unknown format '{other}' (csv|json|md)"))),
        }
    }
}

/// Render one table in the requested format.
pub fn render_table(table: &Table, format: Format) -> String {
    match format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
        Format::Md => table.to_markdown(),
    }
}

/// Write the bundle: `bundle.json` always, plus one file per table in the
/// requested format, plus SVG plots when the config asks for them.
/// Returns the written paths in a deterministic order.
pub fn emit_bundle(bundle: &ReportBundle, out: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let bundle_path = out.join("bundle.json");
    let json = serde_json::to_string_pretty(bundle)
        .map_err(|e| Error::InvalidInput(format!("bundle serialization failed: {e}")))?;
    fs::write(&bundle_path, json + "\n")?;
    written.push(bundle_path);

    match format {
        Format::Md => {
            let mut doc = String::new();
            doc.push_str(&format!(
                "# enscore report\n\ntool version {} | config hash {}\n\n",
                bundle.metadata.tool_version, bundle.metadata.config_hash
            ));
            for gap in &bundle.metadata.gaps {
                doc.push_str(&format!(
                    "- gap [{}]: {}\n",
                    gap.stage, gap.reason
                ));
            }
            if !bundle.metadata.gaps.is_empty() {
                doc.push('\n');
            }
            for table in &bundle.tables {
                doc.push_str(&table.to_markdown());
            }
            let path = out.join("report.md");
            fs::write(&path, doc)?;
            written.push(path);
        }
        _ => {
            let ext = if format == Format::Csv { "csv" } else { "json" };
            for table in &bundle.tables {
                let path = out.join(format!("{}.{ext}", table.name));
                fs::write(&path, render_table(table, format))?;
                written.push(path);
            }
        }
    }

    if bundle.metadata.config.svg {
        written.extend(emit_svgs(bundle, out)?);
    }
    Ok(written)
}

/// (conf, freq, mass) triples for one reliability series.
type BinSeries = Vec<(f64, f64, f64)>;
/// (coverage, risk) points for one coverage series.
type CurveSeries = Vec<(f64, f64)>;

fn cell_str(c: &Cell) -> String {
    c.render()
}

fn cell_f64(c: &Cell) -> f64 {
    match c {
        Cell::Float(f) => *f,
        Cell::Int(i) => *i as f64,
        _ => f64::NAN,
    }
}

fn emit_svgs(bundle: &ReportBundle, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let models: Vec<String> = bundle.metadata.inputs.iter().map(|i| i.model.clone()).collect();

    if let Some(rel) = bundle.table("reliability_bins") {
        let col = |name: &str| rel.columns.iter().position(|c| c == name).unwrap();
        let (c_model, c_method) = (col("model"), col("method"));
        let (c_conf, c_freq, c_mass) = (col("conf"), col("freq"), col("mass"));
        for model in &models {
            let mut series: Vec<(String, BinSeries)> = Vec::new();
            for method in ["selected", "mean_prob"] {
                let bins: Vec<(f64, f64, f64)> = rel
                    .rows
                    .iter()
                    .filter(|r| cell_str(&r[c_model]) == *model && cell_str(&r[c_method]) == method)
                    .map(|r| (cell_f64(&r[c_conf]), cell_f64(&r[c_freq]), cell_f64(&r[c_mass])))
                    .collect();
                if !bins.is_empty() {
                    series.push((method.to_string(), bins));
                }
            }
            if series.is_empty() {
                continue;
            }
            let refs: Vec<svg::BinSeries<'_>> =
                series.iter().map(|(n, b)| (n.as_str(), b.as_slice())).collect();
            let path = out.join(format!("reliability_{model}.svg"));
            fs::write(&path, svg::reliability_diagram(&format!("reliability: {model}"), &refs))?;
            written.push(path);
        }
    }

    if let Some(cov) = bundle.table("coverage_curves") {
        let col = |name: &str| cov.columns.iter().position(|c| c == name).unwrap();
        let (c_model, c_signal, c_cov, c_err) = (col("model"), col("signal"), col("coverage"), col("err"));
        for model in &models {
            let mut series: Vec<(String, CurveSeries)> = Vec::new();
            for signal in ["std_pu", "entropy_mean", "margin_single"] {
                let pts: Vec<(f64, f64)> = cov
                    .rows
                    .iter()
                    .filter(|r| cell_str(&r[c_model]) == *model && cell_str(&r[c_signal]) == signal)
                    .map(|r| (cell_f64(&r[c_cov]), cell_f64(&r[c_err])))
                    .collect();
                if !pts.is_empty() {
                    series.push((signal.to_string(), pts));
                }
            }
            if series.is_empty() {
                continue;
            }
            let refs: Vec<svg::PointSeries<'_>> =
                series.iter().map(|(n, b)| (n.as_str(), b.as_slice())).collect();
            let path = out.join(format!("coverage_{model}.svg"));
            fs::write(&path, svg::coverage_curves(&format!("retained error: {model}"), &refs))?;
            written.push(path);
        }
    }
    Ok(written)
}
