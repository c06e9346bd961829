//! Turns a spec into solver runs and collects their records.

use std::time::Instant;

use rayon::prelude::*;
use sparsemf::{
    evaluate, observe, rmse_v, run, sample_ground_truth, sparsity_b, DenseMatrix, FactorState, Mode, Noise,
    RunTrace, SolverConfig, TraceMetrics, Truth,
};

use crate::config::{ExperimentSpec, Kind};
use crate::error::{HarnessError, Result};
use crate::output::export_results;
use crate::pgm::{add_noise, ingest_image};
use crate::record::{Cell, CellMode, ResultRecord};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
    /// One worker and no wall-clock fields, so outputs are byte-reproducible.
    pub serial: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            serial: false,
        }
    }
}

impl RunOptions {
    pub fn serial() -> Self {
        Self {
            workers: 1,
            serial: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub records: Vec<ResultRecord>,
    /// `(file stem, trace)` for every run whose trace is kept.
    pub traces: Vec<(String, RunTrace)>,
}

impl Outcome {
    pub fn all_succeeded(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(ResultRecord::succeeded)
    }
}

enum Job {
    Plain { cell: Cell, trial: u32 },
    /// A tuned run followed by fixed-k runs at multiples of its final k.
    Ablation { base: Cell, factors: Vec<f64>, trial: u32 },
}

fn cells(spec: &ExperimentSpec) -> Vec<(Cell, Option<Vec<f64>>)> {
    let mut out = Vec::new();
    let rhos: Vec<Option<f64>> = if spec.kind.is_image() {
        vec![None]
    } else {
        spec.rho_grid.iter().copied().map(Some).collect()
    };
    for &rho in &rhos {
        for &h in &spec.h_grid {
            for &sigma in &spec.sigma_grid {
                let cell = |mode| Cell { rho, h, sigma, mode };
                match spec.kind {
                    Kind::FixedKAblation => match &spec.k_grid {
                        Some(ks) => out.extend(ks.iter().map(|&k| (cell(CellMode::FixedK { k }), None))),
                        None => out.push((cell(CellMode::Tuned), Some(spec.k_factors.clone()))),
                    },
                    _ => {
                        out.push((cell(CellMode::Tuned), None));
                        if let Some(k) = spec.baseline_k {
                            out.push((cell(CellMode::FixedK { k }), None));
                        }
                    }
                }
            }
        }
    }
    out
}

fn jobs(spec: &ExperimentSpec) -> Vec<Job> {
    let mut out = Vec::new();
    for (cell, factors) in cells(spec) {
        for trial in 0..spec.trials {
            out.push(match &factors {
                Some(f) => Job::Ablation {
                    base: cell,
                    factors: f.clone(),
                    trial,
                },
                None => Job::Plain { cell, trial },
            });
        }
    }
    out
}

fn measure(
    truth: Option<&Truth>,
    v: &DenseMatrix<f64>,
    s: &FactorState<f64>,
    threshold: f64,
) -> TraceMetrics {
    if let Some(gt) = truth {
        if let Ok(r) = evaluate(&gt.a_star, &gt.b_star, v, &s.a_bar, &s.b_bar, threshold) {
            return TraceMetrics {
                rmse_a: Some(r.rmse_a),
                rmse_b: Some(r.rmse_b),
                rmse_v: Some(r.rmse_v),
                sparsity_b: Some(r.sparsity_b),
            };
        }
    }
    TraceMetrics {
        rmse_v: rmse_v(v, &s.a_bar, &s.b_bar).ok(),
        sparsity_b: sparsity_b(&s.a_bar, &s.b_bar, threshold).ok(),
        ..Default::default()
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

struct Data {
    v: DenseMatrix<f64>,
    truth: Option<Truth>,
    data_seed: Option<u64>,
}

struct Runner<'a> {
    spec: &'a ExperimentSpec,
    opts: RunOptions,
    image: Option<&'a DenseMatrix<f64>>,
}

impl Runner<'_> {
    fn data(&self, cell: &Cell, trial: u32) -> Result<Data> {
        let spec = self.spec;
        if let Some(img) = self.image {
            return Ok(match spec.image_noise {
                Some(s) if s > 0.0 => {
                    let seed = derive_seed(spec.base_seed, &[s.to_bits()], trial);
                    Data {
                        v: add_noise(img, s, seed),
                        truth: None,
                        data_seed: Some(seed),
                    }
                }
                _ => Data {
                    v: img.clone(),
                    truth: None,
                    data_seed: None,
                },
            });
        }
        let seed = cell.data_seed(spec.base_seed, trial);
        let noise = if spec.zero_noise {
            Noise::None
        } else {
            Noise::Gaussian { sigma: cell.sigma }
        };
        let rho = cell.rho.expect("synthetic cells carry rho");
        let gt = sample_ground_truth::<f64>(spec.l, spec.m, cell.h, rho, noise, seed)?;
        let v = observe(&gt)?.into_matrix();
        Ok(Data {
            v,
            truth: Some(gt),
            data_seed: Some(seed),
        })
    }

    fn solve(&self, cell: Cell, trial: u32, data: &Data, mode: Mode) -> (ResultRecord, Option<RunTrace>) {
        let spec = self.spec;
        let seed = cell.seed(spec.base_seed, trial);
        let cfg = SolverConfig {
            sigma: cell.sigma,
            mode,
            init_seed: seed,
            stride: spec.stride,
            max_iters: match mode {
                Mode::Tuned => spec.solver.max_iters,
                Mode::FixedK { .. } => spec.fixed_k_iters,
            },
            ..spec.solver.clone()
        };
        let thr = spec.sparsity_threshold;
        let truth = data.truth.as_ref();
        let mut hook = |s: &FactorState<f64>| measure(truth, &data.v, s, thr);
        let start = Instant::now();
        let out = match run(&data.v, cell.h, &cfg, Some(&mut hook)) {
            Ok(out) => out,
            Err(e) => {
                let mut r = ResultRecord::failed(cell, trial, seed, e.to_string());
                r.data_seed = data.data_seed;
                return (r, None);
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        let m = measure(truth, &data.v, &out.state, thr);
        let error = match truth {
            Some(gt) if m.rmse_a.is_none() => evaluate(&gt.a_star, &gt.b_star, &data.v, &out.state.a_bar, &out.state.b_bar, thr)
                .err()
                .map(|e| format!("final metrics: {e}")),
            _ => None,
        };
        let record = ResultRecord {
            cell,
            trial,
            seed,
            data_seed: data.data_seed,
            rmse_a: m.rmse_a,
            rmse_b: m.rmse_b,
            rmse_v: m.rmse_v,
            sparsity_b: m.sparsity_b,
            truth_zero_fraction: truth.map(|gt| gt.zero_fraction()),
            termination: Some(out.trace.termination.label().to_string()),
            iterations: out.state.iter,
            final_k: finite(out.state.k),
            final_z_b: finite(out.state.z_b),
            clamped_variances: out.trace.total_clamped_variances,
            wall_clock_s: (!self.opts.serial).then_some(elapsed),
            error,
        };
        (record, Some(out.trace))
    }

    fn job(&self, job: &Job) -> Vec<(ResultRecord, Option<RunTrace>)> {
        let (first, trial) = match job {
            Job::Plain { cell, trial } | Job::Ablation { base: cell, trial, .. } => (*cell, *trial),
        };
        let data = match self.data(&first, trial) {
            Ok(d) => d,
            Err(e) => {
                let seed = first.seed(self.spec.base_seed, trial);
                return vec![(ResultRecord::failed(first, trial, seed, e.to_string()), None)];
            }
        };
        let mode = |c: &Cell| match c.mode {
            CellMode::FixedK { k } => Mode::FixedK { k },
            _ => Mode::Tuned,
        };
        match job {
            Job::Plain { cell, trial } => vec![self.solve(*cell, *trial, &data, mode(cell))],
            Job::Ablation { base, factors, trial } => {
                let tuned = self.solve(*base, *trial, &data, Mode::Tuned);
                let k_ref = tuned.0.final_k.filter(|_| tuned.0.succeeded());
                let mut out = vec![tuned];
                for &factor in factors {
                    let cell = Cell {
                        mode: CellMode::TunedKTimes { factor },
                        ..*base
                    };
                    out.push(match k_ref {
                        Some(k) => self.solve(cell, *trial, &data, Mode::FixedK { k: k * factor }),
                        None => {
                            let seed = cell.seed(self.spec.base_seed, *trial);
                            (ResultRecord::failed(cell, *trial, seed, "tuned reference run failed".into()), None)
                        }
                    });
                }
                out
            }
        }
    }
}

/// Runs every (cell, trial) of `spec`. Individual failures become records
/// with `error` set; only setup problems (bad spec, unreadable image) are `Err`.
pub fn run_spec(spec: &ExperimentSpec, opts: RunOptions) -> Result<Outcome> {
    spec.validate()?;
    let image = match (&spec.image, spec.kind) {
        (Some(path), Kind::ImageRun) => Some(ingest_image(path, spec.normalization)?.into_matrix()),
        _ => None,
    };
    let runner = Runner {
        spec,
        opts,
        image: image.as_ref(),
    };
    let jobs = jobs(spec);
    let workers = if opts.serial { 1 } else { opts.workers.max(1) };
    let results: Vec<Vec<(ResultRecord, Option<RunTrace>)>> = if workers == 1 {
        jobs.iter().map(|j| runner.job(j)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(|j| runner.job(j)).collect())
    };
    let mut outcome = Outcome::default();
    for (record, trace) in results.into_iter().flatten() {
        if let (true, Some(t)) = (spec.traces, trace) {
            outcome
                .traces
                .push((format!("{}_t{}", record.cell.label(), record.trial), t));
        }
        outcome.records.push(record);
    }
    Ok(outcome)
}

fn expect_kind(spec: &ExperimentSpec, allowed: &[Kind]) -> Result<()> {
    if allowed.contains(&spec.kind) {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("{:?} cannot be run here", spec.kind)))
    }
}

pub fn run_single(spec: &ExperimentSpec, opts: RunOptions) -> Result<Outcome> {
    expect_kind(spec, &[Kind::SingleRun])?;
    run_spec(spec, opts)
}

pub fn run_sweep(spec: &ExperimentSpec, opts: RunOptions) -> Result<Outcome> {
    expect_kind(spec, &[Kind::RhoHSweep, Kind::SigmaSweep, Kind::FixedKAblation])?;
    run_spec(spec, opts)
}

pub fn run_image(spec: &ExperimentSpec, opts: RunOptions) -> Result<Outcome> {
    expect_kind(spec, &[Kind::ImageRun])?;
    run_spec(spec, opts)
}

/// [`run_spec`], then everything written under `spec.output_dir`.
pub fn run_and_export(spec: &ExperimentSpec, opts: RunOptions) -> Result<Outcome> {
    let outcome = run_spec(spec, opts)?;
    export_results(&spec.output_dir, spec, &outcome.records, &outcome.traces)?;
    Ok(outcome)
}
