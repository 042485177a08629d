//! Grid runner. Cells are independent. A cell's generator depends only on
//! the grid seed and the direction, so every cell of one grid sees the same
//! holdout, halves and folds, and only the swept quantity changes. Results
//! do not depend on `--jobs` or on which other cells are in the grid.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crossaug_core::data::Side;
use crossaug_core::eval::{run_image_cell, run_tabular_cell, Arm, ArmScores, CellConfig};
use crossaug_core::RngState;

use crate::config::{Direction, RunConfig};
use crate::error::Result;
use crate::workload::Workload;

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    /// Common columns (images) or donor rows, 0 meaning all (tables).
    pub value: usize,
    /// The recipient: side A/B for images, the first/second table otherwise.
    pub recipient: Side,
    pub seed: u64,
}

impl Cell {
    pub fn id(&self, images: bool) -> String {
        let d = if self.recipient == Side::A { "A" } else { "B" };
        if images {
            format!("n={}/{d}", self.value)
        } else {
            format!("donors={}/{d}", self.value)
        }
    }

    pub fn rng(&self) -> RngState {
        RngState::new(self.seed).fork(u64::from(self.recipient == Side::B))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub id: String,
    /// One entry per arm; empty fold lists when the cell failed.
    pub scores: Vec<ArmScores>,
    pub error: Option<String>,
    pub seconds: f64,
}

pub fn grid(cfg: &RunConfig) -> Vec<Cell> {
    let sides: &[Side] = match cfg.experiment.direction {
        Direction::AugmentA => &[Side::A],
        Direction::AugmentB => &[Side::B],
        Direction::Both => &[Side::A, Side::B],
    };
    let mut cells = Vec::new();
    for &seed in &cfg.experiment.seeds {
        for &recipient in sides {
            for &value in &cfg.experiment.values {
                cells.push(Cell { value, recipient, seed });
            }
        }
    }
    cells
}

fn run_cell(cell: &Cell, work: &Workload, base: &CellConfig) -> crossaug_core::Result<Vec<ArmScores>> {
    let rng = cell.rng();
    match work {
        Workload::Images(images) => run_image_cell(images, cell.value, cell.recipient, base, &rng),
        Workload::Tabular(pair) => {
            let oriented = if cell.recipient == Side::A { pair.clone() } else { pair.clone().swapped() };
            let count = (cell.value > 0).then_some(cell.value);
            run_tabular_cell(&oriented, count, base, &rng)
        }
    }
}

pub fn cell_config(cfg: &RunConfig) -> Result<CellConfig> {
    Ok(CellConfig {
        arms: cfg.arms()?,
        folds: cfg.experiment.folds,
        test_fraction: cfg.experiment.test_fraction,
        classifier: cfg.classifier_config()?,
        plan: cfg.plan()?,
        averaging: cfg.averaging()?,
    })
}

/// Runs every cell with up to `jobs` worker threads. Results come back in
/// grid order whatever the thread count.
pub fn run_grid(cfg: &RunConfig, work: &Workload, jobs: usize) -> Result<Vec<CellResult>> {
    let base = cell_config(cfg)?;
    let cells = grid(cfg);
    let images = matches!(work, Workload::Images(_));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; cells.len()]);
    log::info!("event=grid_start cells={} jobs={}", cells.len(), jobs.max(1));

    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(cell) = cells.get(i) else { break };
        let id = cell.id(images);
        log::info!("event=cell_start cell={id} seed={}", cell.seed);
        let t0 = Instant::now();
        let outcome = run_cell(cell, work, &base);
        let seconds = t0.elapsed().as_secs_f64();
        let result = match outcome {
            Ok(scores) => {
                let means: Vec<String> = scores.iter().map(|s| format!("{}={}", s.arm.name(), s.mean())).collect();
                log::info!("event=cell_done cell={id} seconds={seconds:.1} {}", means.join(" "));
                CellResult { cell: cell.clone(), id, scores, error: None, seconds }
            }
            Err(e) => {
                log::error!("event=cell_failed cell={id} error={:?}", e.to_string());
                let scores = base.arms.iter().map(|&arm: &Arm| ArmScores { arm, fold_f1: Vec::new() }).collect();
                CellResult { cell: cell.clone(), id, scores, error: Some(e.to_string()), seconds }
            }
        };
        slots.lock().expect("result lock")[i] = Some(result);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.max(1).min(cells.len().max(1)) {
            s.spawn(worker);
        }
        worker();
    });
    Ok(slots.into_inner().expect("result lock").into_iter().map(|r| r.expect("every cell ran")).collect())
}
