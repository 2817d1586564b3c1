//! The two-feature family `f*_{a,b}`: the human sees feature 1, the machine
//! feature 2, states are uniform and the grid is `[[0, 1], [a, b]]`.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::generators::two_feature_setting;
use crate::model::{CellGrid, MachineAction};
use crate::rowset::RowSet;
use crate::solvers::solve_brute;

/// Which human categories the optimal machine is designed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Region {
    #[serde(rename = "FULL")]
    Full,
    #[serde(rename = "C1_ONLY")]
    C1Only,
    #[serde(rename = "C2_ONLY")]
    C2Only,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Full, Region::C1Only, Region::C2Only];

    pub fn label(self) -> &'static str {
        match self {
            Region::Full => "FULL",
            Region::C1Only => "C1_ONLY",
            Region::C2Only => "C2_ONLY",
        }
    }

    /// The retained rows this region stands for.
    pub fn retained(self) -> RowSet {
        match self {
            Region::Full => RowSet::from_indices(2, [0, 1]),
            Region::C1Only => RowSet::from_indices(2, [0]),
            Region::C2Only => RowSet::from_indices(2, [1]),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoFeatureAnalysis {
    pub a: f64,
    pub b: f64,
    pub loss_full: f64,
    pub loss_c1: f64,
    pub loss_c2: f64,
    pub loss_none: f64,
    pub optimal_loss: f64,
    /// Every minimizing region, in the order of [`Region::ALL`].
    pub regions: Vec<Region>,
    pub full_adoption_possible: bool,
    /// A machine adopted in both rows, when one exists.
    pub witness: Option<(f64, f64)>,
}

/// Closed-form losses of the four retained sets.
pub fn analyze(a: f64, b: f64) -> TwoFeatureAnalysis {
    let loss_full = (a * a + (b - 1.0) * (b - 1.0)) / 8.0;
    let loss_c1 = (a - b) * (a - b) / 8.0;
    let loss_c2 = 1.0 / 8.0;
    let loss_none = 1.0 / 8.0 + (a - b) * (a - b) / 8.0;
    let optimal_loss = loss_full.min(loss_c1).min(loss_c2);
    let tie = 1e-12 * loss_none;
    let regions = Region::ALL
        .into_iter()
        .zip([loss_full, loss_c1, loss_c2])
        .filter(|&(_, loss)| loss <= optimal_loss + tie)
        .map(|(r, _)| r)
        .collect();
    let (full_adoption_possible, witness) = full_adoption_possible(a, b);
    TwoFeatureAnalysis {
        a,
        b,
        loss_full,
        loss_c1,
        loss_c2,
        loss_none,
        optimal_loss,
        regions,
        full_adoption_possible,
        witness,
    }
}

/// Whether some machine is adopted by the human in both categories.
///
/// Row 1 delegates to `y` inside the open disk of radius `1/√2` around
/// `(0, 1)`, row 2 inside the disk of radius `|a − b|/√2` around `(a, b)`.
/// The witness is the midpoint of the overlap along the line through both
/// centers, checked against the delegation rule.
pub fn full_adoption_possible(a: f64, b: f64) -> (bool, Option<(f64, f64)>) {
    let dist = a.hypot(b - 1.0);
    let r1 = std::f64::consts::FRAC_1_SQRT_2;
    let r2 = (a - b).abs() * std::f64::consts::FRAC_1_SQRT_2;
    if dist >= r1 + r2 {
        return (false, None);
    }
    let point = if dist == 0.0 {
        (0.0, 1.0)
    } else {
        let lo = (-r1).max(dist - r2);
        let hi = r1.min(dist + r2);
        let t = 0.5 * (lo + hi) / dist;
        (t * a, 1.0 + t * (b - 1.0))
    };
    let grid = two_feature_grid(a, b);
    let machine = MachineAction::new(vec![point.0, point.1]).expect("finite witness");
    let adopted = grid.delegation_set(&machine).count() == 2;
    (true, adopted.then_some(point))
}

pub fn two_feature_grid(a: f64, b: f64) -> CellGrid {
    two_feature_setting(a, b).marginalize()
}

/// Team loss of the oblivious machine and of the optimal machine on the
/// instance `(a, b) = (0, n)`.
pub fn oblivious_family_losses(n: f64) -> (f64, f64) {
    let grid = two_feature_grid(0.0, n);
    let oblivious = grid.team_loss(&grid.oblivious_machine());
    let optimal = solve_brute(&grid).expect("two rows").team_loss;
    (oblivious, optimal)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("step must be positive and finite, got {0}")]
    Step(f64),
    #[error("invalid {axis} range [{min}, {max}]")]
    Range { axis: &'static str, min: f64, max: f64 },
}

/// Lattice of `(a, b)` points with their analyses, `a`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub rows: Vec<TwoFeatureAnalysis>,
}

fn lattice(axis: &'static str, min: f64, max: f64, step: f64) -> Result<Vec<f64>, SweepError> {
    if !(min.is_finite() && max.is_finite()) || max < min {
        return Err(SweepError::Range { axis, min, max });
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| min + k as f64 * step).collect())
}

/// Analyzes every point `(a_min + k·step, b_min + l·step)` inside the ranges.
pub fn sweep(a_range: (f64, f64), b_range: (f64, f64), step: f64) -> Result<Sweep, SweepError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(SweepError::Step(step));
    }
    let a_values = lattice("a", a_range.0, a_range.1, step)?;
    let b_values = lattice("b", b_range.0, b_range.1, step)?;
    let points: Vec<(f64, f64)> = a_values
        .iter()
        .flat_map(|&a| b_values.iter().map(move |&b| (a, b)))
        .collect();
    let rows = points.par_iter().map(|&(a, b)| analyze(a, b)).collect();
    Ok(Sweep {
        a_values,
        b_values,
        rows,
    })
}

impl Sweep {
    /// Number of 4-connected lattice components whose first-listed region
    /// is `region`.
    pub fn region_components(&self, region: Region) -> usize {
        let (na, nb) = (self.a_values.len(), self.b_values.len());
        let hit: Vec<bool> = self.rows.iter().map(|r| r.regions.first() == Some(&region)).collect();
        let mut seen = vec![false; hit.len()];
        let mut components = 0;
        for start in 0..hit.len() {
            if !hit[start] || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(k) = stack.pop() {
                let (ia, ib) = (k / nb, k % nb);
                let mut neighbors = Vec::with_capacity(4);
                if ia > 0 {
                    neighbors.push(k - nb);
                }
                if ia + 1 < na {
                    neighbors.push(k + nb);
                }
                if ib > 0 {
                    neighbors.push(k - 1);
                }
                if ib + 1 < nb {
                    neighbors.push(k + 1);
                }
                for n in neighbors {
                    if hit[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        components
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        let p = analyze(0.0, 1.0);
        assert_eq!(p.optimal_loss, 0.0);
        assert_eq!(p.regions, vec![Region::Full]);
        let q = analyze(2.0, 2.0);
        assert_eq!(q.optimal_loss, 0.0);
        assert_eq!(q.regions, vec![Region::C1Only]);
        let r = analyze(0.5, 2.0);
        assert_eq!(
            (r.loss_full, r.loss_c1, r.loss_c2, r.loss_none),
            (0.15625, 0.28125, 0.125, 0.40625)
        );
        assert_eq!(r.regions, vec![Region::C2Only]);
    }

    #[test]
    fn adoption_examples() {
        assert_eq!(full_adoption_possible(0.0, 1.0), (true, Some((0.0, 1.0))));
        let (ok, witness) = full_adoption_possible(0.0, 5.0);
        assert!(ok && witness.is_some());
        assert_eq!(full_adoption_possible(3.0, 3.0), (false, None));
    }

    #[test]
    fn family_losses() {
        let (obliv, opt) = oblivious_family_losses(5.0);
        assert!((obliv - 1.125).abs() < 1e-14);
        assert!((opt - 0.125).abs() < 1e-14);
        let (obliv, _) = oblivious_family_losses(3.0);
        assert!((obliv - 0.375).abs() < 1e-14);
    }

    #[test]
    fn sweep_shapes() {
        let s = sweep((0.0, 0.0), (1.0, 1.0), 0.1).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].regions, vec![Region::Full]);
        assert_eq!(sweep((-2.0, 3.0), (-2.0, 3.0), 0.5).unwrap().rows.len(), 121);
        assert_eq!(sweep((0.0, 1.0), (0.0, 1.0), 5.0).unwrap().rows.len(), 1);
        assert!(sweep((0.0, 1.0), (0.0, 1.0), 0.0).is_err());
        assert!(sweep((1.0, 0.0), (0.0, 1.0), 0.1).is_err());
    }
}
