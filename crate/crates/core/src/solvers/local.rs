use super::{objective_scale, Exactness, SolveResult, SolverKind};
use crate::model::CellGrid;
use crate::rowset::RowSet;

/// Steepest descent on the retained-set objective over single-row flips.
///
/// Zero-mass rows are dropped from `start`. Stops when no flip improves the
/// objective by more than a relative `1e-12`; deterministic given `start`.
pub fn local_search(grid: &CellGrid, start: &RowSet) -> SolveResult {
    let active = grid.active_rows();
    let mut current = RowSet::from_indices(grid.h(), start.iter().filter(|&i| grid.row_mass(i) > 0.0));
    let mut objective = grid.retained_objective(&current);
    let threshold = 1e-12 * objective_scale(grid);
    loop {
        let mut best: Option<(f64, usize)> = None;
        for &i in &active {
            current.toggle(i);
            let value = grid.retained_objective(&current);
            current.toggle(i);
            if best.is_none_or(|(b, _)| value < b) {
                best = Some((value, i));
            }
        }
        match best {
            Some((value, i)) if value < objective - threshold => {
                current.toggle(i);
                objective = value;
            }
            _ => break,
        }
    }
    SolveResult::from_retained(
        grid,
        current.clone(),
        vec![current],
        false,
        SolverKind::Local,
        Exactness::Heuristic,
    )
}
