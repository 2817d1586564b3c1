//! Iterative redesign: deploy a machine, observe where the human adopts it,
//! re-optimize the machine for exactly those categories, repeat.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::generators::{random_linear_setting, random_uniform_grid, GeneratorError};
use crate::model::{CellGrid, MachineAction};
use crate::rowset::RowSet;
use crate::solvers::{solve_auto, Exactness};

/// Default tolerance for calling an iterated machine optimal.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStep {
    pub delegation_set: RowSet,
    pub machine: MachineAction,
    pub team_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Deployed machines in order, starting with the initial one.
    pub steps: Vec<IterationStep>,
    pub converged: bool,
    /// Last machine of the trace.
    pub fixed_point: MachineAction,
    /// Number of redesigns that changed the machine.
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dynamics cycle detected after {} steps", .trace.steps.len())]
    Cycle { trace: Box<IterationTrace> },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

/// Default step budget `2^h + 1`, saturating.
pub fn default_max_iters(h: usize) -> usize {
    1usize.checked_shl(h as u32).map_or(usize::MAX, |n| n.saturating_add(1))
}

/// Runs the dynamics from the oblivious machine.
pub fn iterate(grid: &CellGrid) -> Result<IterationTrace, DynamicsError> {
    iterate_from(grid, grid.oblivious_machine(), default_max_iters(grid.h()))
}

/// Runs the dynamics from `start` for at most `max_iters` redesigns.
///
/// Converges once a redesign leaves the delegation set unchanged. Revisiting
/// an earlier, non-consecutive delegation set is reported as an error.
pub fn iterate_from(
    grid: &CellGrid,
    start: MachineAction,
    max_iters: usize,
) -> Result<IterationTrace, DynamicsError> {
    let mut delegation = grid.delegation_set(&start);
    let mut seen: HashSet<RowSet> = HashSet::from([delegation.clone()]);
    let mut steps = vec![IterationStep {
        delegation_set: delegation.clone(),
        team_loss: grid.team_loss(&start),
        machine: start,
    }];
    let mut converged = false;
    while steps.len() <= max_iters {
        let next = grid.machine_for(&delegation);
        let next_delegation = grid.delegation_set(&next);
        let step = IterationStep {
            delegation_set: next_delegation.clone(),
            team_loss: grid.team_loss(&next),
            machine: next,
        };
        if next_delegation == delegation {
            if step.machine != steps.last().expect("non-empty").machine {
                steps.push(step);
            }
            converged = true;
            break;
        }
        steps.push(step);
        if !seen.insert(next_delegation.clone()) {
            return Err(DynamicsError::Cycle {
                trace: Box::new(finish(steps, false)),
            });
        }
        delegation = next_delegation;
    }
    Ok(finish(steps, converged))
}

fn finish(steps: Vec<IterationStep>, converged: bool) -> IterationTrace {
    IterationTrace {
        fixed_point: steps.last().expect("non-empty").machine.clone(),
        iterations: steps.len() - 1,
        steps,
        converged,
    }
}

/// Iterated, optimal and oblivious losses of one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub loss_opt: f64,
    pub loss_iter: f64,
    /// Team loss when the oblivious machine is deployed.
    pub loss_obliv: f64,
    pub gap: f64,
    pub gap_obliv: f64,
    pub is_optimal: bool,
    /// Whether `loss_opt` comes from an exact solver.
    pub exact: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// `(loss − opt)/opt`; when `opt` is zero the gap is 0 if `loss ≤ tol` and
/// infinite otherwise.
pub fn relative_gap(loss: f64, opt: f64, tol: f64) -> f64 {
    if opt > 0.0 {
        (loss - opt) / opt
    } else if loss <= tol {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn compare_to_optimal(grid: &CellGrid, tol: f64) -> Result<Comparison, DynamicsError> {
    let trace = iterate(grid)?;
    let opt = solve_auto(grid);
    let loss_opt = opt.team_loss;
    let loss_iter = trace.steps.last().expect("non-empty").team_loss;
    let loss_obliv = trace.steps[0].team_loss;
    Ok(Comparison {
        loss_opt,
        loss_iter,
        loss_obliv,
        gap: relative_gap(loss_iter, loss_opt, tol),
        gap_obliv: relative_gap(loss_obliv, loss_opt, tol),
        is_optimal: loss_iter - loss_opt <= tol,
        exact: opt.exactness == Exactness::Exact,
        iterations: trace.iterations,
        converged: trace.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dh: usize,
    pub dm: usize,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
}

/// Largest `dH` or `dM` accepted by [`run_experiment`].
pub const MAX_EXPERIMENT_FEATURES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub sample_id: usize,
    pub seed: u64,
    pub dh: usize,
    pub dm: usize,
    pub loss_opt: f64,
    pub loss_iter: f64,
    pub loss_obliv: f64,
    pub gap: f64,
    pub gap_obliv: f64,
    pub is_optimal: bool,
    pub iterations: usize,
    pub converged: bool,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub dh: usize,
    pub dm: usize,
    pub samples: usize,
    /// Share of exactly solved samples where the iterated machine is optimal.
    pub prop_optimal: f64,
    pub median_gap_iter: f64,
    pub median_gap_obliv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub rows: Vec<ExperimentRow>,
    pub summary: ExperimentSummary,
}

/// Random linear settings, one per sample, sample `i` seeded with
/// `seed + i`. Rows come back in sample order whatever the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment, DynamicsError> {
    let range = 1..=MAX_EXPERIMENT_FEATURES;
    if !range.contains(&config.dh) || !range.contains(&config.dm) {
        return Err(GeneratorError::FeatureRange {
            dh: config.dh,
            dm: config.dm,
            max: 2 * MAX_EXPERIMENT_FEATURES,
        }
        .into());
    }
    let rows: Vec<ExperimentRow> = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = random_linear_setting(config.dh, config.dm, &mut rng)?.marginalize();
            let c = compare_to_optimal(&grid, config.tolerance)?;
            Ok(ExperimentRow {
                sample_id: i,
                seed,
                dh: config.dh,
                dm: config.dm,
                loss_opt: c.loss_opt,
                loss_iter: c.loss_iter,
                loss_obliv: c.loss_obliv,
                gap: c.gap,
                gap_obliv: c.gap_obliv,
                is_optimal: c.is_optimal,
                iterations: c.iterations,
                converged: c.converged,
                exact: c.exact,
            })
        })
        .collect::<Result<_, DynamicsError>>()?;
    let summary = summarize(config, &rows);
    Ok(Experiment { rows, summary })
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn summarize(config: &ExperimentConfig, rows: &[ExperimentRow]) -> ExperimentSummary {
    let exact: Vec<&ExperimentRow> = rows.iter().filter(|r| r.exact).collect();
    let prop_optimal = if exact.is_empty() {
        f64::NAN
    } else {
        exact.iter().filter(|r| r.is_optimal).count() as f64 / exact.len() as f64
    };
    ExperimentSummary {
        dh: config.dh,
        dm: config.dm,
        samples: rows.len(),
        prop_optimal,
        median_gap_iter: median(exact.iter().map(|r| r.gap).collect()),
        median_gap_obliv: median(exact.iter().map(|r| r.gap_obliv).collect()),
    }
}

/// An instance where the dynamics settle on a suboptimal machine.
#[derive(Debug, Clone, PartialEq)]
pub struct SuboptimalWitness {
    pub seed: u64,
    pub grid: CellGrid,
    pub comparison: Comparison,
}

/// Tries seeds `seed, seed + 1, …` on `h × m` grids with uniform masses and
/// normal values until the iterated loss exceeds the optimum by `margin`.
pub fn search_suboptimal(
    h: usize,
    m: usize,
    seed: u64,
    attempts: usize,
    margin: f64,
) -> Result<Option<SuboptimalWitness>, DynamicsError> {
    for k in 0..attempts {
        let s = seed.wrapping_add(k as u64);
        let grid = random_uniform_grid(h, m, &mut ChaCha8Rng::seed_from_u64(s));
        let comparison = compare_to_optimal(&grid, DEFAULT_TOLERANCE)?;
        if comparison.exact && comparison.loss_iter > comparison.loss_opt + margin {
            return Ok(Some(SuboptimalWitness {
                seed: s,
                grid,
                comparison,
            }));
        }
    }
    Ok(None)
}
