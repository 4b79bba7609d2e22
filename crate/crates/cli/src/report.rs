//! Evaluation report schema: one row per evaluated configuration, CSV and
//! JSON serializations, and the best-per-level summary view.

use std::path::Path;

use anyhow::{bail, Context, Result};
use debias_core::{DebiasConfig, Level};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "config,S,D,SS,parity,accuracy,eta,benchmark_acc,viable";

/// One evaluated configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: String,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "SS")]
    pub ss: f64,
    pub parity: f64,
    pub accuracy: f64,
    pub eta: f64,
    pub benchmark_acc: f64,
    pub viable: bool,
}

impl ReportRow {
    pub fn level(&self) -> Result<Level> {
        let cfg: DebiasConfig = self.config.parse()?;
        Ok(cfg.level)
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            self.config,
            self.s,
            self.d,
            self.ss,
            self.parity,
            self.accuracy,
            self.eta,
            self.benchmark_acc,
            self.viable
        )
    }
}

/// The full grid (or single-config) report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub seed: u64,
    pub top_frac: f64,
    pub viability_ratio: f64,
    pub rows: Vec<ReportRow>,
}

pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.csv_line());
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, report: &Report) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads a report back, accepting either the JSON or the CSV form.
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let report: Report = serde_json::from_str(&text)
            .with_context(|| format!("malformed report {}", path.display()))?;
        return Ok(report.rows);
    }
    parse_csv(&text, &path.display().to_string())
}

fn parse_csv(text: &str, origin: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == CSV_HEADER => {}
        other => bail!("malformed report {origin}: expected header \"{CSV_HEADER}\", got {other:?}"),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            bail!(
                "malformed report {origin}:{}: expected 9 fields, got {}",
                i + 2,
                fields.len()
            );
        }
        let num = |idx: usize| -> Result<f64> {
            fields[idx]
                .trim()
                .parse::<f64>()
                .with_context(|| format!("malformed report {origin}:{}: field {}", i + 2, idx + 1))
        };
        rows.push(ReportRow {
            config: fields[0].trim().to_string(),
            s: num(1)?,
            d: num(2)?,
            ss: num(3)?,
            parity: num(4)?,
            accuracy: num(5)?,
            eta: num(6)?,
            benchmark_acc: num(7)?,
            viable: fields[8].trim() == "true",
        });
    }
    if rows.is_empty() {
        bail!("malformed report {origin}: no data rows");
    }
    Ok(rows)
}

/// Best rows for one intervention level: minimum strength, minimum distance,
/// and maximum fairness among viable rows.
#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: String,
    pub best_strength: ReportRow,
    pub best_distance: ReportRow,
    pub best_fairness_viable: Option<ReportRow>,
}

/// Per-level argmin/argmax extraction. Rows whose config does not parse are
/// skipped.
pub fn best_per_level(rows: &[ReportRow]) -> Vec<LevelSummary> {
    let levels = [
        Level::Sent,
        Level::FinalLayer,
        Level::PenultLayer,
        Level::PenultAttn,
    ];
    let mut out = Vec::new();
    for level in levels {
        let members: Vec<&ReportRow> = rows
            .iter()
            .filter(|r| r.level().map(|l| l == level).unwrap_or(false))
            .collect();
        if members.is_empty() {
            continue;
        }
        let best_strength = members
            .iter()
            .min_by(|a, b| a.s.partial_cmp(&b.s).unwrap())
            .unwrap();
        let best_distance = members
            .iter()
            .min_by(|a, b| a.d.partial_cmp(&b.d).unwrap())
            .unwrap();
        let best_fairness_viable = members
            .iter()
            .filter(|r| r.viable)
            .max_by(|a, b| a.eta.partial_cmp(&b.eta).unwrap())
            .map(|r| (*r).clone());
        out.push(LevelSummary {
            level: level.as_str().to_string(),
            best_strength: (*best_strength).clone(),
            best_distance: (*best_distance).clone(),
            best_fairness_viable,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(config: &str, s: f64, d: f64, eta: f64, viable: bool) -> ReportRow {
        ReportRow {
            config: config.to_string(),
            s,
            d,
            ss: 0.5,
            parity: 0.5,
            accuracy: 0.5,
            eta,
            benchmark_acc: 0.5,
            viable,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let rows = vec![
            row("level=none", 0.3, 0.7, 0.04, true),
            row("level=sent n_p=0", 0.31, 0.6, 0.12, true),
        ];
        write_csv(&path, &rows).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].config, "level=sent n_p=0");
        assert!((back[0].s - 0.3).abs() < 1e-9);
    }

    #[test]
    fn best_per_level_matches_exhaustive_scan() {
        // Synthetic report with known argmin/argmax per level.
        let rows = vec![
            row("level=none", 0.30, 0.70, 0.04, true),
            row("level=sent n_p=0", 0.31, 0.60, 0.12, true),
            row("level=sent n_p=1", 0.32, 0.65, 0.13, false),
            row("level=final_layer n_fin=0 c_fin=0 n_p=0", 0.29, 0.54, 0.14, true),
            row("level=final_layer n_fin=0 c_fin=0 n_p=1", 0.31, 0.62, 0.18, false),
            row("level=final_layer n_fin=1 c_fin=1 n_p=0", 0.28, 0.55, 0.11, true),
        ];
        let summary = best_per_level(&rows);

        // Exhaustive scan oracle over the same rows.
        for level in ["sent", "final_layer"] {
            let members: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| {
                    r.config
                        .starts_with(&format!("level={level}"))
                })
                .collect();
            let min_s = members
                .iter()
                .fold(f64::INFINITY, |acc, r| acc.min(r.s));
            let min_d = members
                .iter()
                .fold(f64::INFINITY, |acc, r| acc.min(r.d));
            let max_eta_viable = members
                .iter()
                .filter(|r| r.viable)
                .fold(f64::NEG_INFINITY, |acc, r| acc.max(r.eta));
            let got = summary.iter().find(|s| s.level == level).unwrap();
            assert_eq!(got.best_strength.s, min_s);
            assert_eq!(got.best_distance.d, min_d);
            assert_eq!(got.best_fairness_viable.as_ref().unwrap().eta, max_eta_viable);
        }
        // The baseline row belongs to no level bucket.
        assert!(summary.iter().all(|s| s.level != "none"));
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        std::fs::write(&path, "bogus header\n1,2,3\n").unwrap();
        assert!(read_report(&path).is_err());
    }
}
