//! Aggregator x attack comparison tables.

use robustfed_core::{AggregatorKind, AttackKind};

use crate::config::{ExperimentConfig, SuiteConfig};
use crate::error::Result;
use crate::simulator::{load_data, run_with_data, Data};

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub aggregator: AggregatorKind,
    pub attack: AttackKind,
    /// `(final accuracy, best accuracy)`, or the failure message.
    pub outcome: Result<(f64, f64), String>,
}

/// Mean final/best accuracy of one aggregator across attack settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Average {
    pub aggregator: AggregatorKind,
    pub outcome: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTable {
    pub dataset: String,
    pub cells: Vec<Cell>,
    pub averages: Vec<Average>,
}

impl SuiteTable {
    pub fn succeeded(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_ok()).count()
    }
}

/// Runs every (aggregator, attack) pair of `cfg.suite` (or the full
/// cross-product) on one copy of the data. A failing cell is recorded and the
/// suite moves on.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteTable> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    Ok(run_suite_with_data(cfg, &data))
}

pub fn run_suite_with_data(cfg: &ExperimentConfig, data: &Data) -> SuiteTable {
    let suite = cfg.suite.clone().unwrap_or_default();
    let mut cells = Vec::new();
    for &attack in &suite.attacks {
        for &aggregator in &suite.aggregators {
            let cell_cfg = cfg.cell(aggregator, attack);
            let outcome = run_with_data(&cell_cfg, data, &mut ())
                .map(|r| (r.final_accuracy(), r.best().1))
                .map_err(|e| format!("{}: {e}", e.category()));
            match &outcome {
                Ok((f, _)) => log::info!("{attack} / {aggregator}: final accuracy {f:.4}"),
                Err(e) => log::warn!("{attack} / {aggregator} failed: {e}"),
            }
            cells.push(Cell {
                aggregator,
                attack,
                outcome,
            });
        }
    }
    let averages = averages(&suite, &cells);
    SuiteTable {
        dataset: cfg.data.name.clone(),
        cells,
        averages,
    }
}

/// Per-aggregator mean over the attacked settings. The clean (`none`) column
/// is left out unless it is the only one; failed cells are skipped.
fn averages(suite: &SuiteConfig, cells: &[Cell]) -> Vec<Average> {
    let attacked = suite.attacks.iter().any(|&a| a != AttackKind::None);
    suite
        .aggregators
        .iter()
        .map(|&aggregator| {
            let ok: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| {
                    c.aggregator == aggregator && (!attacked || c.attack != AttackKind::None)
                })
                .filter_map(|c| c.outcome.clone().ok())
                .collect();
            let n = ok.len() as f64;
            let outcome = (!ok.is_empty()).then(|| {
                (
                    ok.iter().map(|p| p.0).sum::<f64>() / n,
                    ok.iter().map(|p| p.1).sum::<f64>() / n,
                )
            });
            Average {
                aggregator,
                outcome,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(aggregator: AggregatorKind, attack: AttackKind, v: Option<f64>) -> Cell {
        Cell {
            aggregator,
            attack,
            outcome: v.map(|x| (x, x + 0.1)).ok_or_else(|| "numeric".to_string()),
        }
    }

    #[test]
    fn averages_skip_clean_and_failed_cells() {
        use AggregatorKind::*;
        use AttackKind::*;
        let suite = SuiteConfig {
            aggregators: vec![FedAvg, Median],
            attacks: vec![None, Byzantine, FlipLabel],
        };
        let cells = vec![
            cell(FedAvg, None, Some(0.9)),
            cell(Median, None, Some(0.9)),
            cell(FedAvg, Byzantine, Some(0.1)),
            cell(Median, Byzantine, Option::None),
            cell(FedAvg, FlipLabel, Some(0.5)),
            cell(Median, FlipLabel, Some(0.8)),
        ];
        let avg = averages(&suite, &cells);
        let (f, b) = avg[0].outcome.unwrap();
        assert!((f - 0.3).abs() < 1e-12 && (b - 0.4).abs() < 1e-12);
        assert_eq!(avg[1].outcome, Some((0.8, 0.8 + 0.1)));
    }

    #[test]
    fn clean_only_suite_averages_clean() {
        let suite = SuiteConfig {
            aggregators: vec![AggregatorKind::FedAvg],
            attacks: vec![AttackKind::None],
        };
        let avg = averages(
            &suite,
            &[cell(AggregatorKind::FedAvg, AttackKind::None, Some(0.7))],
        );
        assert_eq!(avg[0].outcome.map(|p| p.0), Some(0.7));
    }
}
