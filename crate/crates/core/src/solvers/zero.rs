use crate::model::CellGrid;
use crate::rowset::RowSet;

/// Result of the perfect-team check.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroLossCheck {
    pub possible: bool,
    /// Rows whose cell values are not constant; the human makes mistakes
    /// there, so the machine has to be perfect on them.
    pub r0: RowSet,
}

/// Decides in one pass over the grid whether some machine makes the team
/// loss zero.
///
/// A perfect team needs a zero base loss and a machine that is exact on
/// every row in `r0`; the machine optimized for `r0` is the only candidate.
pub fn zero_loss_possible(grid: &CellGrid) -> ZeroLossCheck {
    let (h, m) = (grid.h(), grid.m());
    let mut r0 = RowSet::empty(h);
    let mut value_scale = 1.0f64;
    for i in 0..h {
        let mut first: Option<f64> = None;
        for j in 0..m {
            if grid.mass(i, j) <= 0.0 {
                continue;
            }
            let v = grid.value(i, j);
            value_scale = value_scale.max(v.abs());
            match first {
                None => first = Some(v),
                Some(f) if (v - f).abs() > 1e-12 * f.abs().max(v.abs()).max(1.0) => {
                    r0.insert(i);
                }
                Some(_) => {}
            }
        }
    }
    let tol = 1e-12 * value_scale * value_scale;
    let possible = grid.base_loss() <= tol && grid.team_loss(&grid.machine_for(&r0)) <= tol;
    ZeroLossCheck { possible, r0 }
}
