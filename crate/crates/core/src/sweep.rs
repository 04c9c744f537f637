//! Benchmark sweeps: train across a grid of sparsity levels, norm exponents,
//! and ridge strengths, replicated over seeds, and report mean test error
//! per cell.
//!
//! Cells are independent, so they run in parallel; aggregation happens in a
//! fixed order afterwards, which keeps the output byte-identical across runs
//! regardless of thread count. A failed replicate (degenerate draw,
//! non-converged solve) is counted and skipped rather than aborting the
//! whole sweep.

use rayon::prelude::*;

use crate::model::{accuracy, predict_scores, train};
use crate::objective::{LabeledProblem, Loss, MklConfig};
use crate::solver::SolverConfig;
use crate::synth::{generate, Scenario};
use crate::{Error, Result};

/// The data-generation half of a sweep: everything in [`Scenario`] except
/// the swept sparsity and the per-replicate seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepScenario {
    pub m: usize,
    pub block_dim: usize,
    pub bayes_target: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub scenario: SweepScenario,
    pub nus: Vec<f64>,
    pub ps: Vec<f64>,
    pub mus: Vec<f64>,
    pub seeds: Vec<u64>,
    pub c: f64,
    pub loss: Loss,
    pub solver: SolverConfig,
}

/// One grid cell, aggregated over seeds. `mean_error` and `stderr` are NaN
/// when every replicate failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub nu: f64,
    pub p: f64,
    pub mu: f64,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub mean_error: f64,
    pub stderr: f64,
}

/// Train on one generated replicate and return its test error.
pub fn run_cell(grid: &SweepGrid, nu: f64, p: f64, mu: f64, seed: u64) -> Result<f64> {
    let s = &grid.scenario;
    let scn = Scenario::new(s.m, s.block_dim, nu, s.bayes_target, s.n_train, s.n_test, seed)?;
    let data = generate(&scn)?;
    let config = MklConfig::new(p, mu, grid.c, grid.loss)?;
    let problem = LabeledProblem::new(data.kernels, data.y_train, config)?;
    let model = train(&problem, &grid.solver)?;
    let scores = predict_scores(&model, &data.cross)?;
    Ok(1.0 - accuracy(scores.as_slice(), &data.y_test)?)
}

pub fn run_sweep(grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    if grid.nus.is_empty() || grid.ps.is_empty() || grid.mus.is_empty() {
        return Err(Error::param("grid", "nus, ps, and mus must be nonempty"));
    }
    if grid.seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one replicate"));
    }
    grid.solver.validate()?;

    let mut cells = Vec::new();
    for &nu in &grid.nus {
        for &p in &grid.ps {
            for &mu in &grid.mus {
                cells.push((nu, p, mu));
            }
        }
    }

    let errors: Vec<Vec<std::result::Result<f64, Error>>> = cells
        .par_iter()
        .map(|&(nu, p, mu)| {
            grid.seeds
                .iter()
                .map(|&seed| run_cell(grid, nu, p, mu, seed))
                .collect()
        })
        .collect();

    let rows = cells
        .iter()
        .zip(errors)
        .map(|(&(nu, p, mu), outcomes)| {
            let ok: Vec<f64> = outcomes.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
            let failed = outcomes.len() - ok.len();
            let (mean, stderr) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (mean_of(&ok), stderr_of(&ok))
            };
            SweepRow {
                nu,
                p,
                mu,
                seeds_ok: ok.len(),
                seeds_failed: failed,
                mean_error: mean,
                stderr,
            }
        })
        .collect();
    Ok(rows)
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample standard deviation over sqrt k);
/// zero for a single replicate.
fn stderr_of(xs: &[f64]) -> f64 {
    let k = xs.len();
    if k <= 1 {
        return 0.0;
    }
    let mean = mean_of(xs);
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

/// Render rows as CSV. Floats use the shortest exact decimal form, so equal
/// runs produce byte-identical files.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("nu,p,mu,seeds_ok,seeds_failed,mean_error,stderr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.nu, r.p, r.mu, r.seeds_ok, r.seeds_failed, r.mean_error, r.stderr
        ));
    }
    out
}
