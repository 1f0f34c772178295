//! Metrics CSV / text tables and the run manifest.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::metrics::{MetricsRow, MetricsTable, Summary};
use super::ExperimentError;

fn check_non_empty(table: &MetricsTable) -> Result<(), ExperimentError> {
    if table.rows.is_empty() {
        return Err(ExperimentError::Input("metrics table has no rows".into()));
    }
    Ok(())
}

/// Writes a header line and one line per velocity; floats use shortest
/// round-trip formatting.
pub fn write_csv<W: Write>(table: &MetricsTable, mut w: W) -> Result<(), ExperimentError> {
    check_non_empty(table)?;
    writeln!(w, "{}", table.columns().join(","))?;
    for row in &table.rows {
        let line: Vec<String> = table.values(row).iter().map(f64::to_string).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Fixed-width rendering carrying exactly the CSV's values.
pub fn render_text(table: &MetricsTable) -> Result<String, ExperimentError> {
    check_non_empty(table)?;
    let header = table.columns();
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| table.values(r).iter().map(f64::to_string).collect())
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |items: &[String]| {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("  "),
    );
    out.push('\n');
    for r in &cells {
        out.push_str(&line(r));
        out.push('\n');
    }
    Ok(out)
}

/// Parses a table written by [`write_csv`].
pub fn parse_csv(text: &str) -> Result<MetricsTable, ExperimentError> {
    let bad = |m: String| ExperimentError::Input(m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty metrics file".into()))?
        .split(',')
        .collect();
    if header.first() != Some(&"velocity") {
        return Err(bad("first column must be `velocity`".into()));
    }
    let mut methods = Vec::new();
    let mut i = 1;
    while i + 1 < header.len() && header[i].starts_with("rmse_") {
        let m = header[i]
            .strip_prefix("rmse_")
            .and_then(|s| s.strip_suffix("_mean"))
            .ok_or_else(|| bad(format!("unexpected column `{}`", header[i])))?;
        if header[i + 1] != format!("rmse_{m}_std") {
            return Err(bad(format!("missing `rmse_{m}_std` column")));
        }
        methods.push(m.to_string());
        i += 2;
    }
    let mut comparisons = Vec::new();
    for col in &header[i..] {
        let (c, b) = col
            .strip_prefix("eta_")
            .and_then(|s| s.split_once("_vs_"))
            .ok_or_else(|| bad(format!("unexpected column `{col}`")))?;
        let find = |name: &str| {
            methods
                .iter()
                .position(|m| m == name)
                .ok_or_else(|| bad(format!("eta column `{col}` names an unknown method")))
        };
        comparisons.push((find(b)?, find(c)?));
    }

    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let v = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {}: bad number `{c}`: {e}", n + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if v.len() != header.len() {
            return Err(bad(format!(
                "row {} has {} values, expected {}",
                n + 1,
                v.len(),
                header.len()
            )));
        }
        let rmse = (0..methods.len())
            .map(|m| Summary {
                mean: v[1 + 2 * m],
                std: v[2 + 2 * m],
            })
            .collect();
        rows.push(MetricsRow {
            velocity: v[0],
            rmse,
            eta: v[1 + 2 * methods.len()..].to_vec(),
        });
    }
    let table = MetricsTable {
        methods,
        comparisons,
        rows,
    };
    check_non_empty(&table)?;
    Ok(table)
}

pub fn read_csv(path: &Path) -> Result<MetricsTable, ExperimentError> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// SHA-256 of the canonical TOML rendering of `cfg`, hex encoded.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub package_version: String,
    pub model_format_version: u32,
    pub data_schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub threads: usize,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, seed: u64, threads: usize) -> Self {
        Self {
            package_version: env!("CARGO_PKG_VERSION").into(),
            model_format_version: crate::model::MODEL_FORMAT_VERSION,
            data_schema_version: crate::data::DATA_SCHEMA_VERSION,
            seed,
            config_hash: config_hash(cfg),
            threads,
            outputs: Vec::new(),
        }
    }
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<(), ExperimentError> {
    let text = toml::to_string(manifest).map_err(|e| ExperimentError::Input(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: usize) -> MetricsTable {
        MetricsTable::from_samples(
            &["DFC", "ORACLE", "VAICAM"],
            &[(0, 2), (1, 2)],
            &(0..rows)
                .map(|i| 0.01 + 0.05 * i as f64)
                .collect::<Vec<_>>(),
            &(0..rows)
                .map(|i| {
                    let b = 1.0 + i as f64 / 7.0;
                    vec![
                        vec![b, b * 1.1],
                        vec![b * 1.3, b / 3.0],
                        vec![b * 0.9, b * 0.7],
                    ]
                })
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn empty_table_is_rejected() {
        let mut t = table(1);
        t.rows.clear();
        assert!(matches!(
            write_csv(&t, Vec::new()),
            Err(ExperimentError::Input(_))
        ));
        assert!(matches!(render_text(&t), Err(ExperimentError::Input(_))));
    }

    #[test]
    fn one_row_gives_header_plus_line() {
        let mut buf = Vec::new();
        write_csv(&table(1), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = table(11);
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        assert_eq!(parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), t);
    }

    #[test]
    fn text_table_matches_csv_cells() {
        let t = table(4);
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        let text = render_text(&t).unwrap();
        for (c, l) in csv.lines().skip(1).zip(text.lines().skip(2)) {
            let from_text: Vec<&str> = l.split_whitespace().collect();
            let from_csv: Vec<&str> = c.split(',').collect();
            assert_eq!(from_text, from_csv);
        }
    }

    #[test]
    fn hash_tracks_config_changes() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.environment.c_v = 0.0;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
