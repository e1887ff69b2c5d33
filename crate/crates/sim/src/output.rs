//! Output files: `rounds.csv`, `reliability.csv`, `summary.json`,
//! `table.csv`. Numbers are written with six decimals.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Result, SimError};
use crate::simulator::RunResult;
use crate::suite::SuiteTable;

pub const ROUNDS_HEADER: [&str; 14] = [
    "round",
    "selected",
    "malicious",
    "accuracy",
    "loss",
    "delta_norm",
    "num_candidates",
    "pruned",
    "benign_mean_reliability",
    "malicious_mean_reliability",
    "malicious_max_reliability",
    "truth_iterations",
    "truth_converged",
    "empty_band_fallback",
];

pub const TABLE_HEADER: [&str; 5] = ["dataset", "attack", "aggregator", "final_acc", "best_acc"];

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn ids(ids: &[robustfed_core::ClientId]) -> String {
    ids.iter()
        .map(|c| c.0.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn rounds_csv(run: &RunResult) -> Vec<u8> {
    let rows = run
        .records
        .iter()
        .map(|r| {
            let d = |k: &str| r.diagnostics.get(k).copied();
            vec![
                r.round.to_string(),
                ids(&r.selected),
                ids(&r.malicious),
                num(r.accuracy),
                num(r.loss),
                num(r.delta_norm),
                r.num_candidates()
                    .map(|n| n.to_string())
                    .unwrap_or_default(),
                d("pruned")
                    .map(|p| (p as usize).to_string())
                    .unwrap_or_default(),
                opt(r.benign_mean_reliability()),
                opt(r.malicious_mean_reliability()),
                r.malicious_has_max_reliability()
                    .map(|b| u8::from(b).to_string())
                    .unwrap_or_default(),
                d("truth_iterations")
                    .map(|n| (n as usize).to_string())
                    .unwrap_or_default(),
                d("truth_converged")
                    .map(|n| (n as usize).to_string())
                    .unwrap_or_default(),
                d("empty_band_fallback")
                    .map(|n| (n as usize).to_string())
                    .unwrap_or_default(),
            ]
        })
        .collect();
    csv_bytes(&ROUNDS_HEADER, rows)
}

/// Round x client reliability matrix over the whole pool; clients that were
/// not selected (or aggregators without reliabilities) leave cells empty.
pub fn reliability_csv(run: &RunResult) -> Vec<u8> {
    let mut header = vec!["round".to_string()];
    header.extend((0..run.pool_size).map(|c| format!("client_{c}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = run
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.round.to_string()];
            row.extend((0..run.pool_size as u32).map(|c| {
                opt(r
                    .reliabilities
                    .as_ref()
                    .and_then(|m| m.get(&robustfed_core::ClientId(c)).copied()))
            }));
            row
        })
        .collect();
    csv_bytes(&header_refs, rows)
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub seed: u64,
    pub rounds: usize,
    pub aggregator: String,
    pub attack: String,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub best_accuracy: f64,
    pub best_round: u32,
    pub adversaries: Vec<u32>,
    pub wall_time_secs: f64,
    pub config: &'a ExperimentConfig,
}

pub fn summary_json(cfg: &ExperimentConfig, run: &RunResult) -> Vec<u8> {
    let (best_round, best_accuracy) = run.best();
    let s = Summary {
        seed: cfg.seed,
        rounds: run.records.len(),
        aggregator: cfg.aggregator.name.to_string(),
        attack: cfg.attack.kind.to_string(),
        initial_accuracy: run.initial_accuracy,
        final_accuracy: run.final_accuracy(),
        final_loss: run.records.last().map_or(f64::NAN, |r| r.loss),
        best_accuracy,
        best_round,
        adversaries: run.adversaries.iter().map(|c| c.0).collect(),
        wall_time_secs: run.records.iter().map(|r| r.wall_time).sum(),
        config: cfg,
    };
    let mut out = serde_json::to_vec_pretty(&s).expect("summary serializes");
    out.push(b'\n');
    out
}

/// Rows in attack-major order, then one `average` row per aggregator.
pub fn table_csv(table: &SuiteTable) -> Vec<u8> {
    let mut rows: Vec<Vec<String>> = table
        .cells
        .iter()
        .map(|c| {
            let (f, b) = match &c.outcome {
                Ok((f, b)) => (num(*f), num(*b)),
                Err(_) => ("FAILED".to_string(), "FAILED".to_string()),
            };
            vec![
                table.dataset.clone(),
                c.attack.to_string(),
                c.aggregator.to_string(),
                f,
                b,
            ]
        })
        .collect();
    rows.extend(table.averages.iter().map(|a| {
        let (f, b) = match a.outcome {
            Some((f, b)) => (num(f), num(b)),
            None => ("FAILED".to_string(), "FAILED".to_string()),
        };
        vec![
            table.dataset.clone(),
            "average".into(),
            a.aggregator.to_string(),
            f,
            b,
        ]
    }));
    csv_bytes(&TABLE_HEADER, rows)
}

/// Single-row table for one run.
pub fn run_table_csv(cfg: &ExperimentConfig, run: &RunResult) -> Vec<u8> {
    let row = vec![
        cfg.data.name.clone(),
        cfg.attack.kind.to_string(),
        cfg.aggregator.name.to_string(),
        num(run.final_accuracy()),
        num(run.best().1),
    ];
    csv_bytes(&TABLE_HEADER, vec![row])
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| SimError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

/// Writes all four files of a single run.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, run: &RunResult) -> Result<()> {
    ensure_dir(dir)?;
    write(dir, "rounds.csv", &rounds_csv(run))?;
    write(dir, "reliability.csv", &reliability_csv(run))?;
    write(dir, "summary.json", &summary_json(cfg, run))?;
    write(dir, "table.csv", &run_table_csv(cfg, run))
}

pub fn write_suite(dir: &Path, table: &SuiteTable) -> Result<()> {
    ensure_dir(dir)?;
    write(dir, "table.csv", &table_csv(table))
}
