//! Arrangement of per-row ellipses for grids with at most two columns.
//!
//! Row `i` delegates to a machine `y` exactly when `y` lies inside the open
//! ellipse `Σ_j a_ij² (y_j − c_ij)² < r_i²`, so the delegation set only
//! changes when `y` crosses an ellipse boundary. Probing one point in every
//! face of the arrangement and re-optimizing the machine for the rows that
//! delegate there recovers the optimum.

use std::collections::HashSet;

use super::{Exactness, SolveResult, SolverError, SolverKind};
use crate::model::CellGrid;
use crate::rowset::RowSet;

const BOUNDARY_ANGLES: usize = 64;
const INTERSECTION_SAMPLES: usize = 4096;
const BISECTION_STEPS: usize = 100;
/// Relative size of the offsets that push probe points off a boundary.
const OFFSET: f64 = 1e-7;
const MAX_REPORTED_MINIMIZERS: usize = 64;

/// Adoption region of one row.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub row: usize,
    pub center: Vec<f64>,
    /// `a_ij² = mass[i][j] / row_mass_i`.
    pub axis_weights: Vec<f64>,
    /// Human loss of the row.
    pub radius_sq: f64,
}

impl Ellipsoid {
    /// Negative strictly inside the ellipse.
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.axis_weights
            .iter()
            .zip(&self.center)
            .zip(y)
            .map(|((a2, c), y)| a2 * (y - c) * (y - c))
            .sum::<f64>()
            - self.radius_sq
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        self.axis_weights
            .iter()
            .zip(&self.center)
            .zip(y)
            .map(|((a2, c), y)| 2.0 * a2 * (y - c))
            .collect()
    }

    /// Point on the boundary at angle `theta`; only meaningful for two
    /// columns with positive weights.
    fn boundary_point(&self, theta: f64) -> [f64; 2] {
        let r = self.radius_sq.sqrt();
        [
            self.center[0] + r / self.axis_weights[0].sqrt() * theta.cos(),
            self.center[1] + r / self.axis_weights[1].sqrt() * theta.sin(),
        ]
    }

    /// True when the interior is non-empty and bounded.
    fn is_proper(&self) -> bool {
        self.radius_sq > 0.0 && self.axis_weights.iter().all(|&a| a > 0.0)
    }
}

/// One ellipsoid per positive-mass row.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSystem {
    pub ellipsoids: Vec<Ellipsoid>,
}

impl EllipsoidSystem {
    /// Rows whose ellipse strictly contains `y`.
    pub fn inside(&self, h: usize, y: &[f64]) -> RowSet {
        RowSet::from_indices(
            h,
            self.ellipsoids
                .iter()
                .filter(|e| e.eval(y) < 0.0)
                .map(|e| e.row),
        )
    }
}

pub fn ellipsoid_system(grid: &CellGrid) -> EllipsoidSystem {
    let ellipsoids = grid
        .active_rows()
        .into_iter()
        .map(|i| {
            let row_mass = grid.row_mass(i);
            Ellipsoid {
                row: i,
                center: (0..grid.m())
                    .map(|j| if grid.mass(i, j) > 0.0 { grid.value(i, j) } else { 0.0 })
                    .collect(),
                axis_weights: (0..grid.m()).map(|j| grid.mass(i, j) / row_mass).collect(),
                radius_sq: grid.human_losses()[i],
            }
        })
        .collect();
    EllipsoidSystem { ellipsoids }
}

/// Exact for one column; for two columns, the best retained set over probe
/// points in every face of the ellipse arrangement.
pub fn solve_geometric(grid: &CellGrid) -> Result<SolveResult, SolverError> {
    let h = grid.h();
    match grid.m() {
        // The row mean is optimal in every row, so no single action is
        // strictly better than the human anywhere.
        1 => {
            return Ok(SolveResult::from_retained(
                grid,
                RowSet::empty(h),
                vec![RowSet::empty(h)],
                false,
                SolverKind::Geometric,
                Exactness::Exact,
            ))
        }
        2 => {}
        m => {
            return Err(SolverError::Inapplicable(format!(
                "the geometric solver supports at most 2 machine categories, got {m}; \
                 use brute force"
            )))
        }
    }

    let system = ellipsoid_system(grid);
    let proper: Vec<&Ellipsoid> = system.ellipsoids.iter().filter(|e| e.is_proper()).collect();
    if proper.is_empty() {
        return Ok(SolveResult::from_retained(
            grid,
            RowSet::empty(h),
            vec![RowSet::empty(h)],
            false,
            SolverKind::Geometric,
            Exactness::ValidatedCandidate,
        ));
    }

    let scale = coordinate_scale(&proper);
    let eps = OFFSET * scale;
    let mut points: Vec<[f64; 2]> = Vec::new();
    let far = proper
        .iter()
        .map(|e| e.center[0].abs() + e.radius_sq.sqrt() / e.axis_weights[0].sqrt())
        .fold(0.0f64, f64::max);
    points.push([2.0 * far + 1.0, 0.0]);
    let obliv = grid.oblivious_machine();
    points.push([obliv.actions()[0], obliv.actions()[1]]);

    for e in &proper {
        points.push([e.center[0], e.center[1]]);
        for k in 0..BOUNDARY_ANGLES {
            let theta = std::f64::consts::TAU * k as f64 / BOUNDARY_ANGLES as f64;
            let p = e.boundary_point(theta);
            for factor in [1.0 - OFFSET, 1.0 + OFFSET] {
                points.push([
                    e.center[0] + (p[0] - e.center[0]) * factor,
                    e.center[1] + (p[1] - e.center[1]) * factor,
                ]);
            }
        }
    }

    for (s, e) in proper.iter().enumerate() {
        for f in &proper[s + 1..] {
            for p in intersections(e, f) {
                points.extend(perturbations(e, f, p, eps));
            }
        }
    }

    let mut seen: HashSet<RowSet> = HashSet::new();
    let mut candidates: Vec<RowSet> = Vec::new();
    for p in &points {
        let r = system.inside(h, p);
        if seen.insert(r.clone()) {
            candidates.push(r);
        }
    }
    // One redesign step from every candidate: the machine optimized for R may
    // be adopted on a different set.
    for idx in 0..candidates.len() {
        let machine = grid.machine_for(&candidates[idx]);
        let refined = grid.delegation_set(&machine);
        if seen.insert(refined.clone()) {
            candidates.push(refined);
        }
    }

    let scored: Vec<(f64, RowSet)> = candidates
        .into_iter()
        .map(|r| (grid.team_loss(&grid.machine_for(&r)), r))
        .collect();
    let best = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * best.abs().max(super::objective_scale(grid));
    let mut minimizers: Vec<RowSet> = scored
        .into_iter()
        .filter(|s| s.0 <= best + tie)
        .map(|s| s.1)
        .collect();
    minimizers.sort();
    let truncated = minimizers.len() > MAX_REPORTED_MINIMIZERS;
    minimizers.truncate(MAX_REPORTED_MINIMIZERS);
    Ok(SolveResult::from_retained(
        grid,
        minimizers[0].clone(),
        minimizers,
        truncated,
        SolverKind::Geometric,
        Exactness::ValidatedCandidate,
    ))
}

fn coordinate_scale(ellipses: &[&Ellipsoid]) -> f64 {
    ellipses
        .iter()
        .flat_map(|e| {
            let r = e.radius_sq.sqrt();
            [
                e.center[0].abs(),
                e.center[1].abs(),
                r / e.axis_weights[0].sqrt(),
                r / e.axis_weights[1].sqrt(),
            ]
        })
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE)
}

/// Crossings of `f`'s boundary along `e`'s boundary, located by sampling
/// and bisection on the angle.
fn intersections(e: &Ellipsoid, f: &Ellipsoid) -> Vec<[f64; 2]> {
    let sign_at = |theta: f64| f.eval(&e.boundary_point(theta));
    let step = std::f64::consts::TAU / INTERSECTION_SAMPLES as f64;
    let mut out = Vec::new();
    let mut prev = sign_at(0.0);
    for k in 1..=INTERSECTION_SAMPLES {
        let theta = step * k as f64;
        let cur = sign_at(theta);
        if cur == 0.0 {
            out.push(e.boundary_point(theta));
        } else if prev != 0.0 && (prev < 0.0) != (cur < 0.0) {
            let (mut lo, mut hi) = (theta - step, theta);
            let lo_negative = prev < 0.0;
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if (sign_at(mid) < 0.0) == lo_negative {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(e.boundary_point(0.5 * (lo + hi)));
        }
        prev = cur;
    }
    out
}

/// Points near a crossing of two boundaries, one in each of the four
/// inside/outside combinations.
fn perturbations(e: &Ellipsoid, f: &Ellipsoid, p: [f64; 2], eps: f64) -> Vec<[f64; 2]> {
    let ge = e.gradient(&p);
    let gf = f.gradient(&p);
    let det = ge[0] * gf[1] - ge[1] * gf[0];
    let norm = (ge[0].hypot(ge[1]) * gf[0].hypot(gf[1])).max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(8);
    for (se, sf) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        out.push([p[0] + se * eps, p[1] + sf * eps]);
        if det.abs() > 1e-12 * norm {
            // Solve [ge; gf] d = (se, sf) and rescale to length eps.
            let d = [(se * gf[1] - sf * ge[1]) / det, (sf * ge[0] - se * gf[0]) / det];
            let len = d[0].hypot(d[1]);
            out.push([p[0] + d[0] / len * eps, p[1] + d[1] / len * eps]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DelegationSetting;
    use crate::solvers::solve_brute;

    fn two_feature(a: f64, b: f64) -> CellGrid {
        DelegationSetting::new(2, &[1], &[2], vec![0.25; 4], vec![0.0, a, 1.0, b])
            .unwrap()
            .marginalize()
    }

    #[test]
    fn zero_five_family_member() {
        let r = solve_geometric(&two_feature(0.0, 5.0)).unwrap();
        assert!((r.team_loss - 0.125).abs() < 1e-12);
        assert_eq!(r.retained.indices(), vec![1]);
        assert_eq!(r.exactness, Exactness::ValidatedCandidate);
    }

    #[test]
    fn single_column_retains_nothing() {
        let g = CellGrid::new(vec![vec![0.5], vec![0.5]], vec![vec![1.0], vec![3.0]], 0.0).unwrap();
        let r = solve_geometric(&g).unwrap();
        assert!(r.retained.is_empty());
        assert_eq!(r.team_loss, g.standalone_losses(&g.oblivious_machine()).0);
        assert!(r.exact());
    }

    #[test]
    fn three_columns_are_rejected() {
        let g = CellGrid::new(vec![vec![1.0 / 3.0; 3]], vec![vec![0.0, 1.0, 2.0]], 0.0).unwrap();
        assert!(matches!(solve_geometric(&g), Err(SolverError::Inapplicable(_))));
    }

    #[test]
    fn ellipse_interval_for_one_column() {
        let g = CellGrid::new(vec![vec![0.5], vec![0.5]], vec![vec![1.0], vec![3.0]], 0.0).unwrap();
        let sys = ellipsoid_system(&g);
        assert_eq!(sys.ellipsoids.len(), 2);
        assert_eq!(sys.ellipsoids[0].axis_weights, vec![1.0]);
        assert_eq!(sys.ellipsoids[0].radius_sq, 0.0);
    }

    #[test]
    fn matches_brute_on_two_feature_points() {
        for &(a, b) in &[(0.0, 1.0), (2.0, 2.0), (0.5, 2.0), (-1.0, 3.0), (1.7, -0.4)] {
            let g = two_feature(a, b);
            let geo = solve_geometric(&g).unwrap().team_loss;
            let brute = solve_brute(&g).unwrap().team_loss;
            assert!((geo - brute).abs() < 1e-12, "({a}, {b}): {geo} vs {brute}");
        }
    }
}
