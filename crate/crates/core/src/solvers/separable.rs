//! Separable settings: `value[i][j] = u_i + w_j` with product-form masses
//! inside every block of mutually consistent categories.
//!
//! For such a block the objective of a retained set `R` collapses to
//!
//! ```text
//! M · [ (1 − P(R))·σ²_q(w) + P(R)·σ²_p(u | R) ]
//! ```
//!
//! where `M` is the block mass and `p`, `q` its conditional row and column
//! marginals. The minimizing `R` is a contiguous run of the sorted distinct
//! `u` values (rows sharing a `u` value are never split), so scanning all
//! `O(h²)` windows with prefix sums is exact.

use super::{Exactness, SolveResult, SolverError, SolverKind};
use crate::model::{CellGrid, DelegationSetting};
use crate::rowset::RowSet;

pub(crate) const DEFAULT_TOLERANCE: f64 = 1e-9;

/// One block of mutually consistent rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub mass: f64,
}

/// Additive and product-form decomposition of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableDecomposition {
    /// Row offsets `u_i` (zero for zero-mass rows).
    pub u: Vec<f64>,
    /// Column offsets `w_j`; the first column of every block is pinned to 0.
    pub w: Vec<f64>,
    /// Row marginals.
    pub p: Vec<f64>,
    /// Column marginals.
    pub q: Vec<f64>,
    pub tolerance: f64,
    /// `consistent_pairs[i][j]` is true when cell `(i, j)` has positive mass.
    pub consistent_pairs: Vec<Vec<bool>>,
    pub blocks: Vec<Block>,
}

/// Returns the decomposition when one exists within `tolerance`.
pub fn decompose_separable(grid: &CellGrid, tolerance: f64) -> Option<SeparableDecomposition> {
    try_decompose(grid, tolerance).ok()
}

fn try_decompose(grid: &CellGrid, tolerance: f64) -> Result<SeparableDecomposition, String> {
    let (h, m) = (grid.h(), grid.m());
    let consistent: Vec<Vec<bool>> = (0..h)
        .map(|i| (0..m).map(|j| grid.mass(i, j) > 0.0).collect())
        .collect();
    let value_scale = (0..h)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| consistent[i][j])
        .map(|(i, j)| grid.value(i, j).abs())
        .fold(1.0f64, f64::max);
    let value_tol = tolerance * value_scale;

    let mut u = vec![0.0; h];
    let mut w = vec![0.0; m];
    let mut row_seen = vec![false; h];
    let mut col_seen = vec![false; m];
    let mut blocks = Vec::new();

    for start in 0..m {
        if col_seen[start] || grid.col_mass(start) <= 0.0 {
            continue;
        }
        // Breadth-first walk over positive-mass cells, alternating sides.
        let mut rows = Vec::new();
        let mut cols = vec![start];
        col_seen[start] = true;
        w[start] = 0.0;
        let (mut next_col, mut next_row) = (0, 0);
        while next_col < cols.len() || next_row < rows.len() {
            while next_col < cols.len() {
                let j = cols[next_col];
                next_col += 1;
                for i in 0..h {
                    if consistent[i][j] && !row_seen[i] {
                        row_seen[i] = true;
                        u[i] = grid.value(i, j) - w[j];
                        rows.push(i);
                    }
                }
            }
            while next_row < rows.len() {
                let i = rows[next_row];
                next_row += 1;
                for j in 0..m {
                    if consistent[i][j] && !col_seen[j] {
                        col_seen[j] = true;
                        w[j] = grid.value(i, j) - u[i];
                        cols.push(j);
                    }
                }
            }
        }
        rows.sort_unstable();
        cols.sort_unstable();
        let mass: f64 = rows.iter().map(|&i| grid.row_mass(i)).sum();
        for &i in &rows {
            for &j in &cols {
                if consistent[i][j] {
                    let residual = grid.value(i, j) - (u[i] + w[j]);
                    if residual.abs() > value_tol {
                        return Err(format!(
                            "cell ({i}, {j}) has value {} but the additive fit gives {}",
                            grid.value(i, j),
                            u[i] + w[j]
                        ));
                    }
                }
                let product = grid.row_mass(i) * grid.col_mass(j) / mass;
                if (grid.mass(i, j) - product).abs() > tolerance {
                    return Err(format!(
                        "cell ({i}, {j}) has mass {} but the product of its marginals is {product}",
                        grid.mass(i, j)
                    ));
                }
            }
        }
        blocks.push(Block { rows, cols, mass });
    }

    Ok(SeparableDecomposition {
        u,
        w,
        p: (0..h).map(|i| grid.row_mass(i)).collect(),
        q: (0..m).map(|j| grid.col_mass(j)).collect(),
        tolerance,
        consistent_pairs: consistent,
        blocks,
    })
}

/// Best contiguous window of each size over the values sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTable {
    /// Input indices in ascending value order (stable).
    pub order: Vec<usize>,
    /// Entry `k - 1` holds the best window with `k` elements.
    pub best: Vec<Window>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Position of the first element in `order`.
    pub start: usize,
    pub len: usize,
    /// Weighted variance of the window.
    pub variance: f64,
}

impl WindowTable {
    /// Input indices of the best window of size `k`.
    pub fn indices(&self, k: usize) -> Vec<usize> {
        let win = &self.best[k - 1];
        self.order[win.start..win.start + win.len].to_vec()
    }
}

/// Prefix sums of weight, weighted value and weighted square over a sorted
/// sequence, centered at the weighted mean.
struct Prefix {
    w: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Prefix {
    fn new(values: &[f64], weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let center = if total > 0.0 {
            values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
        } else {
            0.0
        };
        let n = values.len();
        let mut w = vec![0.0; n + 1];
        let mut s1 = vec![0.0; n + 1];
        let mut s2 = vec![0.0; n + 1];
        for k in 0..n {
            let x = values[k] - center;
            w[k + 1] = w[k] + weights[k];
            s1[k + 1] = s1[k] + weights[k] * x;
            s2[k + 1] = s2[k] + weights[k] * x * x;
        }
        Self { w, s1, s2 }
    }

    /// `(weight, variance)` of positions `start..end`. Zero-weight windows
    /// have variance 0.
    fn window(&self, start: usize, end: usize) -> (f64, f64) {
        let w = self.w[end] - self.w[start];
        if w <= 0.0 {
            return (0.0, 0.0);
        }
        let s1 = self.s1[end] - self.s1[start];
        let s2 = self.s2[end] - self.s2[start];
        (w, ((s2 - s1 * s1 / w) / w).max(0.0))
    }
}

/// For every size `k`, the contiguous window of the sorted values with the
/// smallest weighted variance.
///
/// Panics if the lengths differ, a weight is negative, or no weight is
/// positive.
pub fn min_variance_windows(values: &[f64], weights: &[f64]) -> WindowTable {
    assert_eq!(values.len(), weights.len(), "values and weights differ in length");
    assert!(weights.iter().all(|&w| w >= 0.0), "weights must be non-negative");
    assert!(weights.iter().any(|&w| w > 0.0), "at least one weight must be positive");
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let sorted_w: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    let prefix = Prefix::new(&sorted, &sorted_w);
    let best = (1..=n)
        .map(|len| {
            (0..=n - len)
                .map(|start| Window {
                    start,
                    len,
                    variance: prefix.window(start, start + len).1,
                })
                .min_by(|a, b| a.variance.total_cmp(&b.variance))
                .expect("non-empty range")
        })
        .collect();
    WindowTable { order, best }
}

/// Window algorithm on a separable grid. Fails with the offending cell when
/// the grid is not separable.
pub fn solve_separable(grid: &CellGrid) -> Result<SolveResult, SolverError> {
    let dec = try_decompose(grid, DEFAULT_TOLERANCE)
        .map_err(|reason| SolverError::Inapplicable(format!("grid is not separable: {reason}")))?;
    let mut retained = RowSet::empty(grid.h());
    for block in &dec.blocks {
        for i in best_block_rows(&dec, block) {
            retained.insert(i);
        }
    }
    Ok(SolveResult::from_retained(
        grid,
        retained.clone(),
        vec![retained],
        false,
        SolverKind::Separable,
        Exactness::Exact,
    ))
}

/// Rows of the objective-minimizing window of one block.
fn best_block_rows(dec: &SeparableDecomposition, block: &Block) -> Vec<usize> {
    let q: Vec<f64> = block.cols.iter().map(|&j| dec.q[j] / block.mass).collect();
    let w: Vec<f64> = block.cols.iter().map(|&j| dec.w[j]).collect();
    let w_var = Prefix::new(&w, &q).window(0, w.len()).1;
    let u: Vec<f64> = block.rows.iter().map(|&i| dec.u[i]).collect();
    let p: Vec<f64> = block.rows.iter().map(|&i| dec.p[i] / block.mass).collect();
    let (_, picked) = best_split(&u, &p, w_var, dec.tolerance);
    picked.into_iter().map(|k| block.rows[k]).collect()
}

/// Minimizes `(1 − P(R))·outside + P(R)·σ²(values | R)` over subsets `R`,
/// where `weights` sum to 1 and `P(R)` is the weight of `R`. Entries whose
/// values agree within `tolerance` (relative) are kept or dropped together.
///
/// For a fixed center `c` the best `R` is `{i : (values_i − c)² < outside}`,
/// an interval of the sorted values, so scanning every window of the sorted
/// distinct values (and the empty set) finds the minimum. Returns the
/// objective and the chosen indices; ties prefer fewer entries.
pub fn best_split(values: &[f64], weights: &[f64], outside: f64, tolerance: f64) -> (f64, Vec<usize>) {
    assert_eq!(values.len(), weights.len(), "values and weights differ in length");
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let scale = values.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
    let same = tolerance * scale;

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if (values[i] - values[g[0]]).abs() <= same => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let group_weight: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&i| weights[i]).sum())
        .collect();
    let group_value: Vec<f64> = groups
        .iter()
        .zip(&group_weight)
        .map(|(g, &gw)| {
            if gw > 0.0 {
                g.iter().map(|&i| weights[i] * values[i]).sum::<f64>() / gw
            } else {
                values[g[0]]
            }
        })
        .collect();
    let prefix = Prefix::new(&group_value, &group_weight);

    let tie = 1e-12 * outside.max(prefix.window(0, groups.len()).1);
    // (objective, entry count, start, end); the empty set is the fallback.
    let mut best = (outside, 0usize, 0usize, 0usize);
    for start in 0..groups.len() {
        let mut count = 0;
        for end in start + 1..=groups.len() {
            count += groups[end - 1].len();
            let (p, var) = prefix.window(start, end);
            let objective = (1.0 - p) * outside + p * var;
            let better = objective < best.0 - tie || (objective <= best.0 + tie && count < best.1);
            if better {
                best = (objective, count, start, end);
            }
        }
    }
    let mut picked: Vec<usize> = groups[best.2..best.3].iter().flatten().copied().collect();
    picked.sort_unstable();
    (best.0, picked)
}

/// One shared-feature sub-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedPart {
    /// Values of the shared features, bit `t` for the `t`-th shared feature.
    pub key: usize,
    /// Probability of the shared-feature value.
    pub mass: f64,
    /// Conditional setting on the non-shared features.
    pub setting: DelegationSetting,
}

/// A setting split by the values of the features both agents observe.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedSplit {
    pub shared: Vec<usize>,
    pub parts: Vec<SharedPart>,
    machine_features: Vec<usize>,
}

/// Splits a setting into independent sub-problems, one per value of the
/// shared features with positive probability.
pub fn split_by_shared(setting: &DelegationSetting) -> SharedSplit {
    let shared = setting.shared_features();
    let d = setting.d();
    let rest: Vec<usize> = (1..=d).filter(|f| !shared.contains(f)).collect();
    let renumber = |features: &[usize]| -> Vec<usize> {
        features
            .iter()
            .filter(|f| !shared.contains(f))
            .map(|f| rest.iter().position(|r| r == f).expect("feature in rest") + 1)
            .collect()
    };
    let human = renumber(setting.human_features());
    let machine = renumber(setting.machine_features());
    // With every feature shared a single placeholder feature keeps d ≥ 1.
    let sub_d = rest.len().max(1);

    let mut parts = Vec::new();
    for key in 0..1usize << shared.len() {
        let mut probs = vec![0.0; 1 << sub_d];
        let mut actions = vec![0.0; 1 << sub_d];
        let mut mass = 0.0;
        for state in 0..setting.state_count() {
            let matches = shared
                .iter()
                .enumerate()
                .all(|(t, &f)| (state >> (f - 1)) & 1 == (key >> t) & 1);
            if !matches {
                continue;
            }
            let sub_state = rest
                .iter()
                .enumerate()
                .fold(0, |acc, (t, &f)| acc | ((state >> (f - 1)) & 1) << t);
            probs[sub_state] = setting.probabilities()[state];
            actions[sub_state] = setting.optimal_actions()[state];
            mass += setting.probabilities()[state];
        }
        if mass <= 0.0 {
            continue;
        }
        for p in probs.iter_mut() {
            *p /= mass;
        }
        let sub = DelegationSetting::new(sub_d, &human, &machine, probs, actions)
            .expect("conditional distribution of a valid setting is valid");
        parts.push(SharedPart {
            key,
            mass,
            setting: sub,
        });
    }
    SharedSplit {
        shared,
        parts,
        machine_features: setting.machine_features().to_vec(),
    }
}

impl SharedSplit {
    /// Assembles a machine for the original setting from one machine per
    /// part. Columns whose shared value has no mass get action 0.
    pub fn glue(&self, machines: &[crate::model::MachineAction]) -> crate::model::MachineAction {
        assert_eq!(machines.len(), self.parts.len(), "one machine per part");
        let m = 1usize << self.machine_features.len();
        let mut actions = vec![0.0; m];
        for (j, action) in actions.iter_mut().enumerate() {
            let (mut key, mut sub_col) = (0usize, 0usize);
            let mut cbit = 0;
            for (t, f) in self.machine_features.iter().enumerate() {
                let bit = (j >> t) & 1;
                if let Some(pos) = self.shared.iter().position(|s| s == f) {
                    key |= bit << pos;
                } else {
                    sub_col |= bit << cbit;
                    cbit += 1;
                }
            }
            if let Some(p) = self.parts.iter().position(|part| part.key == key) {
                *action = machines[p].actions()[sub_col];
            }
        }
        crate::model::MachineAction::new(actions).expect("finite actions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::solve_brute;

    fn brute_min_variance(values: &[f64], weights: &[f64], k: usize) -> f64 {
        let n = values.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..1 << n {
            if mask.count_ones() as usize != k {
                continue;
            }
            let idx: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            let w: f64 = idx.iter().map(|&i| weights[i]).sum();
            let mean = idx.iter().map(|&i| weights[i] * values[i]).sum::<f64>() / w;
            let var = idx.iter().map(|&i| weights[i] * (values[i] - mean).powi(2)).sum::<f64>() / w;
            best = best.min(var);
        }
        best
    }

    #[test]
    fn window_example_against_enumeration() {
        let values = [1.0, 2.0, 3.0, 100.0];
        let weights = [1.0; 4];
        let t = min_variance_windows(&values, &weights);
        let mut idx = t.indices(2);
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1]);
        assert!((t.best[1].variance - 0.25).abs() < 1e-15);
        assert!((t.best[1].variance - brute_min_variance(&values, &weights, 2)).abs() < 1e-15);
        assert_eq!(t.best[3].len, 4);
    }

    #[test]
    fn constant_values_have_zero_variance() {
        let t = min_variance_windows(&[5.0, 5.0, 5.0], &[0.2, 0.5, 0.3]);
        assert!(t.best.iter().all(|w| w.variance == 0.0));
    }

    #[test]
    fn decomposition_of_additive_grid() {
        let g = CellGrid::new(vec![vec![0.25; 2]; 2], vec![vec![0.0, 1.0], vec![0.0, 1.0]], 0.0)
            .unwrap();
        let d = decompose_separable(&g, 1e-9).unwrap();
        assert_eq!(d.u, vec![0.0, 0.0]);
        assert_eq!(d.w, vec![0.0, 1.0]);
        assert_eq!(d.blocks.len(), 1);
    }

    #[test]
    fn non_additive_grid_is_rejected() {
        let g = CellGrid::new(vec![vec![0.25; 2]; 2], vec![vec![0.0, 1.0], vec![0.0, 5.0]], 0.0)
            .unwrap();
        assert!(decompose_separable(&g, 1e-9).is_none());
        match solve_separable(&g) {
            Err(SolverError::Inapplicable(msg)) => assert!(msg.contains("cell (1, 1)"), "{msg}"),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn non_product_masses_are_rejected() {
        let g = CellGrid::new(vec![vec![0.4, 0.1], vec![0.1, 0.4]], vec![vec![0.0, 1.0], vec![2.0, 3.0]], 0.0)
            .unwrap();
        assert!(decompose_separable(&g, 1e-9).is_none());
    }

    #[test]
    fn separable_two_row_example() {
        let g = CellGrid::new(vec![vec![0.25; 2]; 2], vec![vec![0.0, 1.0], vec![10.0, 11.0]], 0.0)
            .unwrap();
        let r = solve_separable(&g).unwrap();
        assert!((r.team_loss - 0.125).abs() < 1e-14);
        assert_eq!(r.retained.count(), 1);
        assert!((solve_brute(&g).unwrap().team_loss - r.team_loss).abs() < 1e-14);
    }

    #[test]
    fn perfect_information_retains_all() {
        let g = CellGrid::new(vec![vec![0.25; 2]; 2], vec![vec![0.0, 1.0], vec![0.0, 1.0]], 0.0)
            .unwrap();
        let r = solve_separable(&g).unwrap();
        assert!(r.team_loss.abs() < 1e-15);
        assert_eq!(r.retained.indices(), vec![0, 1]);
    }

    #[test]
    fn duplicate_offsets_are_kept_together() {
        // u = (0, 0, 3, 7), w = (0, 1, 2).
        let u = [0.0, 0.0, 3.0, 7.0];
        let w = [0.0, 1.0, 2.0];
        let mass = vec![vec![1.0 / 12.0; 3]; 4];
        let value = u.iter().map(|ui| w.iter().map(|wj| ui + wj).collect()).collect();
        let g = CellGrid::new(mass, value, 0.0).unwrap();
        let r = solve_separable(&g).unwrap();
        assert_eq!(r.retained.contains(0), r.retained.contains(1));
        assert!((r.team_loss - solve_brute(&g).unwrap().team_loss).abs() < 1e-12);
    }

    #[test]
    fn split_without_shared_features_is_identity() {
        let s = DelegationSetting::new(2, &[1], &[2], vec![0.1, 0.2, 0.3, 0.4], vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        let split = split_by_shared(&s);
        assert_eq!(split.parts.len(), 1);
        assert_eq!(split.parts[0].setting, s);
        assert_eq!(split.parts[0].mass, 1.0);
    }

    #[test]
    fn split_drops_zero_mass_values() {
        // Feature 2 is shared and always 0.
        let s = DelegationSetting::new(
            2,
            &[1, 2],
            &[2],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let split = split_by_shared(&s);
        assert_eq!(split.parts.len(), 1);
        assert_eq!(split.parts[0].key, 0);
    }
}
