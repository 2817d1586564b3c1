use rayon::prelude::*;

use super::{centered_values, objective_scale, Exactness, SolveResult, SolverError, SolverKind};
use crate::model::CellGrid;
use crate::rowset::RowSet;

/// Default row limit for exhaustive enumeration (`2^24` subsets).
pub const BRUTE_FORCE_MAX_ROWS: usize = 24;
const MAX_REPORTED_MINIMIZERS: usize = 64;
const MAX_CANDIDATES: usize = 4096;
/// Width of the band of near-optimal subsets that get re-evaluated exactly,
/// relative to the objective scale. Far above the drift of the running sums.
const CANDIDATE_SLACK: f64 = 1e-9;
/// Minimizers are the subsets within this relative distance of the minimum.
const TIE_TOLERANCE: f64 = 1e-12;
const CHUNK_BITS: usize = 6;

/// Exhaustive search over every retained set with the default row limit.
pub fn solve_brute(grid: &CellGrid) -> Result<SolveResult, SolverError> {
    solve_brute_with_limit(grid, BRUTE_FORCE_MAX_ROWS)
}

/// Exhaustive search over every subset of the positive-mass rows.
///
/// Subsets are walked in Gray-code order so each step updates per-column
/// running sums in `O(m)`. The range is split into chunks that run in
/// parallel; subsets whose running objective lands near the best are then
/// re-evaluated exactly, so the answer does not depend on the schedule.
pub fn solve_brute_with_limit(grid: &CellGrid, max_rows: usize) -> Result<SolveResult, SolverError> {
    let active = grid.active_rows();
    let k = active.len();
    if k > max_rows || k > 63 {
        return Err(SolverError::Inapplicable(format!(
            "{k} positive-mass rows exceed the brute-force limit of {max_rows}; \
             use the geometric solver or local search"
        )));
    }
    let scale = objective_scale(grid);
    let slack = CANDIDATE_SLACK * scale;
    let table = Table::new(grid, &active);

    let chunk_bits = CHUNK_BITS.min(k);
    let low_bits = k - chunk_bits;
    let chunks: Vec<Vec<(f64, u64)>> = (0..1u64 << chunk_bits)
        .into_par_iter()
        .map(|chunk| table.enumerate_chunk(chunk << low_bits, low_bits, slack))
        .collect();

    let mut candidates: Vec<(f64, u64)> = chunks.into_iter().flatten().collect();
    let best = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    candidates.retain(|c| c.0 <= best + slack);
    let mut truncated = false;
    let mut sets: Vec<(f64, RowSet)> = candidates
        .iter()
        .map(|&(approx, mask)| (approx, RowSet::from_mask(grid.h(), &active, mask)))
        .collect();
    if sets.len() > MAX_CANDIDATES {
        truncated = true;
        let best_idx = sets
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let keep = sets.swap_remove(best_idx);
        sets.sort_by(|a, b| a.1.cmp(&b.1));
        sets.truncate(MAX_CANDIDATES - 1);
        sets.push(keep);
    }

    let mut exact: Vec<(f64, RowSet)> = sets
        .into_iter()
        .map(|(_, set)| (grid.retained_objective(&set), set))
        .collect();
    let min = exact.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let tie = TIE_TOLERANCE * scale;
    exact.retain(|e| e.0 <= min + tie);
    exact.sort_by(|a, b| a.1.cmp(&b.1));
    dedup_sorted(&mut exact);
    if exact.len() > MAX_REPORTED_MINIMIZERS {
        exact.truncate(MAX_REPORTED_MINIMIZERS);
        truncated = true;
    }
    let minimizers: Vec<RowSet> = exact.into_iter().map(|e| e.1).collect();
    let retained = minimizers[0].clone();
    Ok(SolveResult::from_retained(
        grid,
        retained,
        minimizers,
        truncated,
        SolverKind::Brute,
        Exactness::Exact,
    ))
}

fn dedup_sorted(v: &mut Vec<(f64, RowSet)>) {
    v.dedup_by(|a, b| a.1 == b.1);
}

/// Active-row data laid out for the enumeration inner loop.
struct Table {
    k: usize,
    m: usize,
    /// `k × m` masses and centered values of the active rows.
    mass: Vec<f64>,
    value: Vec<f64>,
    /// Cost of yielding each active row to the human.
    yield_cost: Vec<f64>,
}

impl Table {
    fn new(grid: &CellGrid, active: &[usize]) -> Self {
        let m = grid.m();
        let centered = centered_values(grid);
        let mut mass = Vec::with_capacity(active.len() * m);
        let mut value = Vec::with_capacity(active.len() * m);
        for &i in active {
            for j in 0..m {
                mass.push(grid.mass(i, j));
                value.push(centered[i * m + j]);
            }
        }
        let yield_cost = active
            .iter()
            .map(|&i| grid.row_mass(i) * grid.human_losses()[i])
            .collect();
        Self {
            k: active.len(),
            m,
            mass,
            value,
            yield_cost,
        }
    }

    /// Walks the `2^low_bits` subsets sharing the high bits of `base` and
    /// returns those whose objective is within `slack` of the chunk best.
    fn enumerate_chunk(&self, base: u64, low_bits: usize, slack: f64) -> Vec<(f64, u64)> {
        let m = self.m;
        let mut s0 = vec![0.0; m];
        let mut s1 = vec![0.0; m];
        let mut s2 = vec![0.0; m];
        let mut count = vec![0u32; m];
        let mut yielded = 0.0;
        for r in 0..self.k {
            if base >> r & 1 == 1 {
                self.add_row(r, 1.0, &mut s0, &mut s1, &mut s2, &mut count);
            } else {
                yielded += self.yield_cost[r];
            }
        }

        let mut best = f64::INFINITY;
        let mut kept: Vec<(f64, u64)> = Vec::new();
        let mut mask = base;
        let mut visit = |mask: u64, objective: f64, kept: &mut Vec<(f64, u64)>| {
            if objective < best {
                best = objective;
            }
            if objective <= best + slack {
                kept.push((objective, mask));
                if kept.len() > 4 * MAX_CANDIDATES {
                    kept.retain(|c| c.0 <= best + slack);
                }
            }
        };
        visit(mask, yielded + column_cost(&s0, &s1, &s2, &count), &mut kept);
        for step in 1u64..(1u64 << low_bits) {
            let r = step.trailing_zeros() as usize;
            if mask >> r & 1 == 1 {
                self.add_row(r, -1.0, &mut s0, &mut s1, &mut s2, &mut count);
                yielded += self.yield_cost[r];
            } else {
                self.add_row(r, 1.0, &mut s0, &mut s1, &mut s2, &mut count);
                yielded -= self.yield_cost[r];
            }
            mask ^= 1 << r;
            visit(mask, yielded + column_cost(&s0, &s1, &s2, &count), &mut kept);
        }
        kept.retain(|c| c.0 <= best + slack);
        kept
    }

    fn add_row(
        &self,
        r: usize,
        sign: f64,
        s0: &mut [f64],
        s1: &mut [f64],
        s2: &mut [f64],
        count: &mut [u32],
    ) {
        let m = self.m;
        for j in 0..m {
            let w = self.mass[r * m + j];
            if w > 0.0 {
                let v = self.value[r * m + j];
                if sign > 0.0 {
                    count[j] += 1;
                    s0[j] += w;
                    s1[j] += w * v;
                    s2[j] += w * v * v;
                } else {
                    count[j] -= 1;
                    if count[j] == 0 {
                        s0[j] = 0.0;
                        s1[j] = 0.0;
                        s2[j] = 0.0;
                    } else {
                        s0[j] -= w;
                        s1[j] -= w * v;
                        s2[j] -= w * v * v;
                    }
                }
            }
        }
    }
}

fn column_cost(s0: &[f64], s1: &[f64], s2: &[f64], count: &[u32]) -> f64 {
    let mut total = 0.0;
    for j in 0..s0.len() {
        if count[j] > 0 {
            total += (s2[j] - s1[j] * s1[j] / s0[j]).max(0.0);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DelegationSetting;

    fn two_feature(a: f64, b: f64) -> CellGrid {
        DelegationSetting::new(2, &[1], &[2], vec![0.25; 4], vec![0.0, a, 1.0, b])
            .unwrap()
            .marginalize()
    }

    #[test]
    fn perfect_machine_retains_everything() {
        let r = solve_brute(&two_feature(0.0, 1.0)).unwrap();
        assert!(r.team_loss.abs() < 1e-15);
        assert_eq!(r.retained.indices(), vec![0, 1]);
        assert!(r.exact());
    }

    #[test]
    fn equal_second_row_retains_first() {
        let r = solve_brute(&two_feature(2.0, 2.0)).unwrap();
        assert!(r.team_loss.abs() < 1e-15);
        assert_eq!(r.retained.indices(), vec![0]);
    }

    #[test]
    fn specializes_to_second_row() {
        // Closed forms give (0.15625, 0.28125, 0.125, 0.40625) for full, {0}, {1}, none.
        let r = solve_brute(&two_feature(0.5, 2.0)).unwrap();
        assert!((r.team_loss - 0.125).abs() < 1e-15);
        assert_eq!(r.retained.indices(), vec![1]);
        assert_eq!(r.all_minimizers.len(), 1);
    }

    #[test]
    fn ties_report_every_minimizer_smallest_first() {
        // Constant grid: every subset is optimal.
        let g = CellGrid::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]], vec![vec![1.0; 2]; 2], 0.0)
            .unwrap();
        let r = solve_brute(&g).unwrap();
        assert!(r.retained.is_empty());
        assert_eq!(r.all_minimizers.len(), 4);
        assert_eq!(r.team_loss, 0.0);
    }

    #[test]
    fn guard_rejects_large_instances() {
        let g = CellGrid::new(vec![vec![1.0 / 5.0]; 5], vec![vec![0.0]; 5], 0.0).unwrap();
        assert!(matches!(
            solve_brute_with_limit(&g, 4),
            Err(SolverError::Inapplicable(_))
        ));
    }

    #[test]
    fn zero_mass_rows_never_retained() {
        let g = CellGrid::new(
            vec![vec![0.25, 0.25], vec![0.0, 0.0], vec![0.25, 0.25]],
            vec![vec![0.0, 1.0], vec![9.0, -9.0], vec![0.0, 1.0]],
            0.0,
        )
        .unwrap();
        let r = solve_brute(&g).unwrap();
        assert!(!r.retained.contains(1));
        assert!(r.team_loss.abs() < 1e-15);
    }
}
