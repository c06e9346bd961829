//! Per-run result records and their per-cell aggregation.

use serde::{Deserialize, Serialize};

use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellMode {
    Tuned,
    FixedK { k: f64 },
    /// k fixed at `factor` times the same trial's tuned k.
    TunedKTimes { factor: f64 },
}

/// One point of an experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// `None` for images.
    pub rho: Option<f64>,
    pub h: usize,
    pub sigma: f64,
    pub mode: CellMode,
}

impl Cell {
    pub fn label(&self) -> String {
        let mut s = String::new();
        if let Some(rho) = self.rho {
            s.push_str(&format!("rho{rho}_"));
        }
        s.push_str(&format!("h{}_sigma{}", self.h, self.sigma));
        match self.mode {
            CellMode::Tuned => s.push_str("_tuned"),
            CellMode::FixedK { k } => s.push_str(&format!("_k{k:e}")),
            CellMode::TunedKTimes { factor } => s.push_str(&format!("_kx{factor}")),
        }
        s
    }

    fn words(&self) -> Vec<u64> {
        let (tag, value) = match self.mode {
            CellMode::Tuned => (0, 0),
            CellMode::FixedK { k } => (1, k.to_bits()),
            CellMode::TunedKTimes { factor } => (2, factor.to_bits()),
        };
        vec![
            self.rho.map_or(u64::MAX, f64::to_bits),
            self.h as u64,
            self.sigma.to_bits(),
            tag,
            value,
        ]
    }

    /// Seed for this cell's solver initialization.
    pub fn seed(&self, base: u64, trial: u32) -> u64 {
        derive_seed(base, &self.words(), trial)
    }

    /// Seed for the ground truth and noise. It ignores σ and the solver mode so
    /// that every cell of a σ sweep or a k ablation sees the same factors.
    pub fn data_seed(&self, base: u64, trial: u32) -> u64 {
        derive_seed(base, &[u64::MAX - 1, self.rho.map_or(u64::MAX, f64::to_bits), self.h as u64], trial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub cell: Cell,
    pub trial: u32,
    pub seed: u64,
    pub data_seed: Option<u64>,
    pub rmse_a: Option<f64>,
    pub rmse_b: Option<f64>,
    pub rmse_v: Option<f64>,
    pub sparsity_b: Option<f64>,
    pub truth_zero_fraction: Option<f64>,
    pub termination: Option<String>,
    pub iterations: u64,
    pub final_k: Option<f64>,
    pub final_z_b: Option<f64>,
    pub clamped_variances: u64,
    /// Left out in serial mode so reruns are byte-identical.
    pub wall_clock_s: Option<f64>,
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn failed(cell: Cell, trial: u32, seed: u64, error: String) -> Self {
        Self {
            cell,
            trial,
            seed,
            data_seed: None,
            rmse_a: None,
            rmse_b: None,
            rmse_v: None,
            sparsity_b: None,
            truth_zero_fraction: None,
            termination: None,
            iterations: 0,
            final_k: None,
            final_z_b: None,
            clamped_variances: 0,
            wall_clock_s: None,
            error: Some(error),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Stat {
    pub count: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 for a single value.
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            count: v.len(),
            mean: Some(mean),
            std: Some(std),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub cell: Cell,
    pub runs: usize,
    pub failed: usize,
    pub rmse_a: Stat,
    pub rmse_b: Stat,
    pub rmse_v: Stat,
    pub sparsity_b: Stat,
    pub truth_zero_fraction: Stat,
    pub iterations: Stat,
    pub final_k: Stat,
}

/// Groups records by cell in order of first appearance.
pub fn aggregate(records: &[ResultRecord]) -> Vec<AggregateRow> {
    let mut cells: Vec<Cell> = Vec::new();
    for r in records {
        if !cells.contains(&r.cell) {
            cells.push(r.cell);
        }
    }
    cells
        .into_iter()
        .map(|cell| {
            let rs: Vec<&ResultRecord> = records.iter().filter(|r| r.cell == cell).collect();
            let ok: Vec<&&ResultRecord> = rs.iter().filter(|r| r.succeeded()).collect();
            let stat = |f: fn(&ResultRecord) -> Option<f64>| Stat::of(ok.iter().filter_map(|r| f(r)));
            AggregateRow {
                cell,
                runs: rs.len(),
                failed: rs.len() - ok.len(),
                rmse_a: stat(|r| r.rmse_a),
                rmse_b: stat(|r| r.rmse_b),
                rmse_v: stat(|r| r.rmse_v),
                sparsity_b: stat(|r| r.sparsity_b),
                truth_zero_fraction: stat(|r| r.truth_zero_fraction),
                iterations: stat(|r| Some(r.iterations as f64)),
                final_k: stat(|r| r.final_k),
            }
        })
        .collect()
}
