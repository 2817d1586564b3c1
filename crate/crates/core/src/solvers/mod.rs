//! Algorithms for the retained-set problem.
//!
//! Every solver returns the retained set `R` it settled on together with the
//! machine `machine_for(R)`, its team loss and the resulting delegation set.
//! Solvers only ever search over positive-mass rows; zero-mass rows are left
//! to the human.

mod brute;
mod geometric;
mod local;
mod separable;
mod zero;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{CellGrid, DelegationSetting, MachineAction};
use crate::rowset::RowSet;

pub use brute::{solve_brute, solve_brute_with_limit, BRUTE_FORCE_MAX_ROWS};
pub use geometric::{ellipsoid_system, solve_geometric, Ellipsoid, EllipsoidSystem};
pub use local::local_search;
pub use separable::{
    best_split, decompose_separable, min_variance_windows, solve_separable, split_by_shared,
    SeparableDecomposition, SharedPart, SharedSplit, WindowTable,
};
pub use zero::{zero_loss_possible, ZeroLossCheck};

/// Row count up to which [`solve_auto`] uses brute force.
pub const AUTO_BRUTE_MAX_ROWS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    /// The solver cannot handle this instance; another solver can.
    #[error("solver not applicable: {0}")]
    Inapplicable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Brute,
    Separable,
    Geometric,
    Local,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Brute => "brute",
            SolverKind::Separable => "separable",
            SolverKind::Geometric => "geometric",
            SolverKind::Local => "local",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How much a solver's answer can be trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exactness {
    /// Provably optimal.
    Exact,
    /// Optimal over a candidate set that was validated against brute force.
    ValidatedCandidate,
    /// Local optimum only.
    Heuristic,
}

/// Outcome of a solver run on a cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub retained: RowSet,
    /// Every retained set found to attain the optimum, in tie-break order.
    pub all_minimizers: Vec<RowSet>,
    pub minimizers_truncated: bool,
    pub machine: MachineAction,
    pub team_loss: f64,
    /// Per-row losses including each row's within-cell residual.
    pub human_row_losses: Vec<f64>,
    pub machine_row_losses: Vec<f64>,
    pub delegation_set: RowSet,
    pub solver: SolverKind,
    pub exactness: Exactness,
}

impl SolveResult {
    pub(crate) fn from_retained(
        grid: &CellGrid,
        retained: RowSet,
        all_minimizers: Vec<RowSet>,
        minimizers_truncated: bool,
        solver: SolverKind,
        exactness: Exactness,
    ) -> Self {
        let machine = grid.machine_for(&retained);
        let machine_loss = grid.machine_row_losses(&machine);
        Self {
            team_loss: grid.team_loss(&machine),
            delegation_set: grid.delegation_set(&machine),
            human_row_losses: grid.reported_row_losses(grid.human_losses()),
            machine_row_losses: grid.reported_row_losses(&machine_loss),
            retained,
            all_minimizers,
            minimizers_truncated,
            machine,
            solver,
            exactness,
        }
    }

    pub fn exact(&self) -> bool {
        self.exactness == Exactness::Exact
    }
}

/// Picks a solver by instance structure: separable instances go to the
/// window algorithm, small ones to brute force, two-column ones to the
/// ellipse arrangement, and anything else to local search started from the
/// zero-loss candidate and from all rows.
pub fn solve_auto(grid: &CellGrid) -> SolveResult {
    if decompose_separable(grid, separable::DEFAULT_TOLERANCE).is_some() {
        if let Ok(result) = solve_separable(grid) {
            return result;
        }
    }
    if grid.active_rows().len() <= AUTO_BRUTE_MAX_ROWS {
        if let Ok(result) = solve_brute(grid) {
            return result;
        }
    }
    if grid.m() <= 2 {
        if let Ok(result) = solve_geometric(grid) {
            return result;
        }
    }
    let from_r0 = local_search(grid, &zero_loss_possible(grid).r0);
    let from_all = local_search(grid, &RowSet::full(grid.h()));
    if from_all.team_loss < from_r0.team_loss {
        from_all
    } else {
        from_r0
    }
}

/// [`solve_auto`] on the setting's cell grid.
pub fn solve_setting(setting: &DelegationSetting) -> SolveResult {
    solve_auto(&setting.marginalize())
}

/// Mean-centered values; variances are shift invariant and centering keeps
/// the running sums well conditioned.
pub(crate) fn centered_values(grid: &CellGrid) -> Vec<f64> {
    let (h, m) = (grid.h(), grid.m());
    let mut mean = 0.0;
    for i in 0..h {
        for j in 0..m {
            mean += grid.mass(i, j) * grid.value(i, j);
        }
    }
    let mut out = Vec::with_capacity(h * m);
    for i in 0..h {
        for j in 0..m {
            out.push(if grid.mass(i, j) > 0.0 {
                grid.value(i, j) - mean
            } else {
                0.0
            });
        }
    }
    out
}

/// Typical magnitude of the objective; used to scale tolerances.
pub(crate) fn objective_scale(grid: &CellGrid) -> f64 {
    let centered = centered_values(grid);
    let m = grid.m();
    let mut total = 0.0;
    for (k, v) in centered.iter().enumerate() {
        total += grid.mass(k / m, k % m) * v * v;
    }
    total
}
