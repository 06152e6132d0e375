//! Metrics JSON and plain-text tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use scamsweeper_core::graph::Label;
use scamsweeper_core::metrics::MetricsReport;
use scamsweeper_core::train::{Ablation, AblationReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub per_class: BTreeMap<String, ClassEntry>,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<u64>>,
    pub config_hash: String,
    pub dataset_hash: String,
    pub seed: u64,
    pub manifest_hash: String,
}

pub fn class_name(i: usize) -> String {
    Label::from_class_index(i).map_or_else(|| format!("class{i}"), |l| l.as_str().to_string())
}

impl MetricsJson {
    pub fn new(report: &MetricsReport, config_hash: String, dataset_hash: String, seed: u64, manifest_hash: String) -> Self {
        let per_class = report
            .per_class
            .iter()
            .enumerate()
            .map(|(i, s)| (class_name(i), ClassEntry { precision: s.precision, recall: s.recall, f1: s.f1, support: s.support }))
            .collect();
        Self {
            per_class,
            weighted_f1: report.weighted_f1,
            macro_f1: report.macro_f1,
            confusion: report.confusion.clone(),
            config_hash,
            dataset_hash,
            seed,
            manifest_hash,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

pub fn metrics_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
    for (i, s) in report.per_class.iter().enumerate() {
        let _ = writeln!(out, "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}", class_name(i), s.precision, s.recall, s.f1, s.support);
    }
    let _ = writeln!(out, "weighted f1 {:.4}  macro f1 {:.4}", report.weighted_f1, report.macro_f1);
    let _ = writeln!(out, "confusion (rows true, columns predicted):");
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        let _ = writeln!(out, "{}", cells.join(""));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    /// Full model minus this variant.
    pub delta_vs_full: f64,
    pub config_hash: String,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationJson {
    pub rows: Vec<AblationRow>,
    pub dataset_hash: String,
    pub seed: u64,
    pub manifest_hash: String,
}

pub fn ablation_rows(report: &AblationReport, config_hash: impl Fn(Ablation) -> String) -> Vec<AblationRow> {
    report
        .runs
        .iter()
        .map(|r| AblationRow {
            variant: if r.ablation == Ablation::None { "full".into() } else { r.ablation.as_str().into() },
            weighted_f1: r.outcome.report.weighted_f1,
            macro_f1: r.outcome.report.macro_f1,
            delta_vs_full: report.delta(r.ablation).unwrap_or(0.0),
            config_hash: config_hash(r.ablation),
            best_epoch: r.outcome.best_epoch,
        })
        .collect()
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<26} {:>11} {:>9} {:>13}", "variant", "weighted f1", "macro f1", "full - variant");
    for r in rows {
        let _ = writeln!(out, "{:<26} {:>11.4} {:>9.4} {:>+13.4}", r.variant, r.weighted_f1, r.macro_f1, r.delta_vs_full);
    }
    out
}
