//! Delegation settings, cell grids and the losses of the team model.
//!
//! States are bit vectors `x ∈ {0,1}^d` with index `Σ_k x_k·2^(k-1)`, so
//! feature 1 is the least-significant bit. A human category is the set of
//! states sharing the values of the human-observable features, and a
//! machine category likewise for the machine features. [`CellGrid`] is the
//! canonical solver input: one row per human category, one column per
//! machine category, and for every cell its probability mass and mean
//! ground-truth action. The squared-loss residual inside each cell does not
//! depend on the machine and is carried separately as the base loss.
//!
//! Every comparison between agents uses grid-level losses (cell means only).
//! The per-row residual adds equally to the human and the machine loss of a
//! row, so it is only added back for reporting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rowset::RowSet;

/// Upper bound on the feature count; `2^24` states is the memory guard.
pub const MAX_FEATURES: usize = 24;
/// Allowed deviation of total probability mass from one.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("feature count {0} is outside 1..={MAX_FEATURES}")]
    FeatureCount(usize),
    #[error("expected {expected} probabilities and actions, got {probabilities} and {actions}")]
    LengthMismatch {
        expected: usize,
        probabilities: usize,
        actions: usize,
    },
    #[error("feature {feature} is not in 1..={d}")]
    FeatureOutOfRange { feature: usize, d: usize },
    #[error("feature {0} is listed twice")]
    DuplicateFeature(usize),
    #[error("probability at index {index} is negative ({value})")]
    NegativeProbability { index: usize, value: f64 },
    #[error("{what} at index {index} is not finite")]
    NonFinite { what: &'static str, index: usize },
    #[error("probabilities sum to {0}, not 1")]
    ProbabilitySum(f64),
    #[error("grid shape: {0}")]
    Shape(String),
    #[error("base loss must be a finite non-negative number, got {0}")]
    BaseLoss(f64),
    #[error("machine has {got} actions but the grid has {expected} columns")]
    MachineLength { expected: usize, got: usize },
}

/// Feature-level description of a delegation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DelegationSetting {
    d: usize,
    human_features: Vec<usize>,
    machine_features: Vec<usize>,
    probabilities: Vec<f64>,
    optimal_actions: Vec<f64>,
}

fn check_features(d: usize, features: &[usize]) -> Result<Vec<usize>, ModelError> {
    let mut sorted = features.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(ModelError::DuplicateFeature(w[0]));
        }
    }
    if let Some(&bad) = sorted.iter().find(|&&f| f == 0 || f > d) {
        return Err(ModelError::FeatureOutOfRange { feature: bad, d });
    }
    Ok(sorted)
}

/// Normalizes a mass vector in place; fails on negative, non-finite or
/// badly-summing entries.
fn normalize_masses(masses: &mut [f64]) -> Result<(), ModelError> {
    for (index, &p) in masses.iter().enumerate() {
        if !p.is_finite() {
            return Err(ModelError::NonFinite {
                what: "probability",
                index,
            });
        }
        if p < 0.0 {
            return Err(ModelError::NegativeProbability { index, value: p });
        }
    }
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(ModelError::ProbabilitySum(total));
    }
    for p in masses.iter_mut() {
        *p /= total;
    }
    Ok(())
}

impl DelegationSetting {
    /// Feature indices are 1-based. Probabilities within `1e-9` of summing
    /// to one are renormalized.
    pub fn new(
        d: usize,
        human_features: &[usize],
        machine_features: &[usize],
        probabilities: Vec<f64>,
        optimal_actions: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if d == 0 || d > MAX_FEATURES {
            return Err(ModelError::FeatureCount(d));
        }
        let n = 1usize << d;
        if probabilities.len() != n || optimal_actions.len() != n {
            return Err(ModelError::LengthMismatch {
                expected: n,
                probabilities: probabilities.len(),
                actions: optimal_actions.len(),
            });
        }
        let human_features = check_features(d, human_features)?;
        let machine_features = check_features(d, machine_features)?;
        let mut probabilities = probabilities;
        normalize_masses(&mut probabilities)?;
        if let Some(index) = optimal_actions.iter().position(|a| !a.is_finite()) {
            return Err(ModelError::NonFinite {
                what: "optimal action",
                index,
            });
        }
        Ok(Self {
            d,
            human_features,
            machine_features,
            probabilities,
            optimal_actions,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn state_count(&self) -> usize {
        1 << self.d
    }

    pub fn human_features(&self) -> &[usize] {
        &self.human_features
    }

    pub fn machine_features(&self) -> &[usize] {
        &self.machine_features
    }

    /// Features observed by both agents, ascending.
    pub fn shared_features(&self) -> Vec<usize> {
        self.human_features
            .iter()
            .copied()
            .filter(|f| self.machine_features.contains(f))
            .collect()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn optimal_actions(&self) -> &[f64] {
        &self.optimal_actions
    }

    /// Human category index of a state.
    pub fn human_category(&self, state: usize) -> usize {
        pattern(state, &self.human_features)
    }

    /// Machine category index of a state.
    pub fn machine_category(&self, state: usize) -> usize {
        pattern(state, &self.machine_features)
    }

    /// Collapses the setting onto its human × machine cell grid.
    pub fn marginalize(&self) -> CellGrid {
        let h = 1usize << self.human_features.len();
        let m = 1usize << self.machine_features.len();
        let mut mass = vec![0.0; h * m];
        let mut weighted = vec![0.0; h * m];
        for (state, (&p, &f)) in self
            .probabilities
            .iter()
            .zip(&self.optimal_actions)
            .enumerate()
        {
            let cell = self.human_category(state) * m + self.machine_category(state);
            mass[cell] += p;
            weighted[cell] += p * f;
        }
        let value: Vec<f64> = mass
            .iter()
            .zip(&weighted)
            .map(|(&w, &s)| if w > 0.0 { s / w } else { 0.0 })
            .collect();

        // Within-cell residual, accumulated per row.
        let mut row_residual = vec![0.0; h];
        for (state, (&p, &f)) in self
            .probabilities
            .iter()
            .zip(&self.optimal_actions)
            .enumerate()
        {
            if p > 0.0 {
                let i = self.human_category(state);
                let cell = i * m + self.machine_category(state);
                row_residual[i] += p * (f - value[cell]).powi(2);
            }
        }
        let base_loss = row_residual.iter().sum();
        let row_mass: Vec<f64> = (0..h).map(|i| mass[i * m..(i + 1) * m].iter().sum()).collect();
        let row_base = row_residual
            .iter()
            .zip(&row_mass)
            .map(|(&r, &w)| if w > 0.0 { r / w } else { 0.0 })
            .collect();
        CellGrid::from_parts(
            h,
            m,
            (0..h as u64).collect(),
            (0..m as u64).collect(),
            mass,
            value,
            base_loss,
            row_base,
        )
    }
}

fn pattern(state: usize, features: &[usize]) -> usize {
    features
        .iter()
        .enumerate()
        .fold(0, |acc, (t, &f)| acc | ((state >> (f - 1)) & 1) << t)
}

/// Per-column action vector of a machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MachineAction(Vec<f64>);

impl MachineAction {
    pub fn new(actions: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(index) = actions.iter().position(|a| !a.is_finite()) {
            return Err(ModelError::NonFinite {
                what: "machine action",
                index,
            });
        }
        Ok(Self(actions))
    }

    pub fn actions(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Human-row × machine-column grid of cell masses and mean actions.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    h: usize,
    m: usize,
    row_keys: Vec<u64>,
    col_keys: Vec<u64>,
    mass: Vec<f64>,
    value: Vec<f64>,
    base_loss: f64,
    row_base: Vec<f64>,
    row_mass: Vec<f64>,
    col_mass: Vec<f64>,
    human_action: Vec<f64>,
    human_loss: Vec<f64>,
}

impl CellGrid {
    /// Builds a grid from explicit matrices. The base loss is spread evenly
    /// over positive-mass rows for reporting, since a bare grid does not say
    /// which row it came from.
    pub fn new(mass: Vec<Vec<f64>>, value: Vec<Vec<f64>>, base_loss: f64) -> Result<Self, ModelError> {
        let h = mass.len();
        if h == 0 {
            return Err(ModelError::Shape("grid has no rows".into()));
        }
        let m = mass[0].len();
        if m == 0 {
            return Err(ModelError::Shape("grid has no columns".into()));
        }
        if value.len() != h {
            return Err(ModelError::Shape(format!(
                "mass has {h} rows but value has {}",
                value.len()
            )));
        }
        for (i, (mr, vr)) in mass.iter().zip(&value).enumerate() {
            if mr.len() != m || vr.len() != m {
                return Err(ModelError::Shape(format!("row {i} does not have {m} entries")));
            }
        }
        if !base_loss.is_finite() || base_loss < 0.0 {
            return Err(ModelError::BaseLoss(base_loss));
        }
        let mut flat_mass: Vec<f64> = mass.into_iter().flatten().collect();
        normalize_masses(&mut flat_mass)?;
        let mut flat_value: Vec<f64> = value.into_iter().flatten().collect();
        for (index, (v, &w)) in flat_value.iter_mut().zip(&flat_mass).enumerate() {
            if w > 0.0 {
                if !v.is_finite() {
                    return Err(ModelError::NonFinite {
                        what: "cell value",
                        index,
                    });
                }
            } else {
                *v = 0.0;
            }
        }
        let row_positive: Vec<bool> = (0..h)
            .map(|i| flat_mass[i * m..(i + 1) * m].iter().any(|&w| w > 0.0))
            .collect();
        let row_base = row_positive
            .iter()
            .map(|&p| if p { base_loss } else { 0.0 })
            .collect();
        Ok(Self::from_parts(
            h,
            m,
            (0..h as u64).collect(),
            (0..m as u64).collect(),
            flat_mass,
            flat_value,
            base_loss,
            row_base,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        h: usize,
        m: usize,
        row_keys: Vec<u64>,
        col_keys: Vec<u64>,
        mass: Vec<f64>,
        value: Vec<f64>,
        base_loss: f64,
        row_base: Vec<f64>,
    ) -> Self {
        let row_mass: Vec<f64> = (0..h).map(|i| mass[i * m..(i + 1) * m].iter().sum()).collect();
        let col_mass: Vec<f64> = (0..m).map(|j| (0..h).map(|i| mass[i * m + j]).sum()).collect();
        let mut human_action = vec![0.0; h];
        let mut human_loss = vec![0.0; h];
        for i in 0..h {
            if row_mass[i] > 0.0 {
                let row = i * m..(i + 1) * m;
                let mean = mass[row.clone()]
                    .iter()
                    .zip(&value[row.clone()])
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    / row_mass[i];
                human_action[i] = mean;
                human_loss[i] = mass[row.clone()]
                    .iter()
                    .zip(&value[row])
                    .map(|(w, v)| w * (v - mean).powi(2))
                    .sum::<f64>()
                    / row_mass[i];
            }
        }
        Self {
            h,
            m,
            row_keys,
            col_keys,
            mass,
            value,
            base_loss,
            row_base,
            row_mass,
            col_mass,
            human_action,
            human_loss,
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row_keys(&self) -> &[u64] {
        &self.row_keys
    }

    pub fn col_keys(&self) -> &[u64] {
        &self.col_keys
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.m + j]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.value[i * self.m + j]
    }

    pub fn mass_matrix(&self) -> Vec<Vec<f64>> {
        self.mass.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn value_matrix(&self) -> Vec<Vec<f64>> {
        self.value.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn base_loss(&self) -> f64 {
        self.base_loss
    }

    /// Conditional within-cell residual of each row; `Σ row_mass·row_base`
    /// equals the base loss.
    pub fn row_base_losses(&self) -> &[f64] {
        &self.row_base
    }

    pub fn row_mass(&self, i: usize) -> f64 {
        self.row_mass[i]
    }

    pub fn col_mass(&self, j: usize) -> f64 {
        self.col_mass[j]
    }

    /// Rows with positive mass; the only rows the solvers consider.
    pub fn active_rows(&self) -> Vec<usize> {
        (0..self.h).filter(|&i| self.row_mass[i] > 0.0).collect()
    }

    pub fn zero_mass_rows(&self) -> Vec<usize> {
        (0..self.h).filter(|&i| self.row_mass[i] <= 0.0).collect()
    }

    /// Row means and row variances: the human's optimal action and loss in
    /// every category. Zero-mass rows report `(0, 0)`.
    pub fn human_optimum(&self) -> (Vec<f64>, Vec<f64>) {
        (self.human_action.clone(), self.human_loss.clone())
    }

    pub fn human_losses(&self) -> &[f64] {
        &self.human_loss
    }

    /// Mean of each column over the retained rows. Columns with no retained
    /// mass fall back to the mean over all rows, and empty columns to zero.
    pub fn machine_for(&self, retained: &RowSet) -> MachineAction {
        let m = self.m;
        let mut actions = vec![0.0; m];
        for (j, action) in actions.iter_mut().enumerate() {
            let (mut w, mut s) = (0.0, 0.0);
            for i in retained.iter().filter(|&i| i < self.h) {
                w += self.mass[i * m + j];
                s += self.mass[i * m + j] * self.value[i * m + j];
            }
            if w > 0.0 {
                *action = s / w;
            } else if self.col_mass[j] > 0.0 {
                *action = (0..self.h)
                    .map(|i| self.mass[i * m + j] * self.value[i * m + j])
                    .sum::<f64>()
                    / self.col_mass[j];
            }
        }
        MachineAction(actions)
    }

    /// The machine that ignores delegation: column means over all rows.
    pub fn oblivious_machine(&self) -> MachineAction {
        self.machine_for(&RowSet::full(self.h))
    }

    fn check_machine(&self, machine: &MachineAction) {
        assert_eq!(
            machine.len(),
            self.m,
            "machine has {} actions but the grid has {} columns",
            machine.len(),
            self.m
        );
    }

    /// Expected grid-level loss of the machine in every row. Zero-mass rows
    /// report 0.
    pub fn machine_row_losses(&self, machine: &MachineAction) -> Vec<f64> {
        self.check_machine(machine);
        let m = self.m;
        (0..self.h)
            .map(|i| {
                if self.row_mass[i] <= 0.0 {
                    return 0.0;
                }
                (0..m)
                    .map(|j| self.mass[i * m + j] * (machine.0[j] - self.value[i * m + j]).powi(2))
                    .sum::<f64>()
                    / self.row_mass[i]
            })
            .collect()
    }

    /// Rows where the machine is strictly better than the human. Ties stay
    /// with the human.
    pub fn delegation_set(&self, machine: &MachineAction) -> RowSet {
        let machine_loss = self.machine_row_losses(machine);
        RowSet::from_indices(
            self.h,
            (0..self.h).filter(|&i| machine_loss[i] < self.human_loss[i]),
        )
    }

    pub fn team_loss(&self, machine: &MachineAction) -> f64 {
        let machine_loss = self.machine_row_losses(machine);
        self.base_loss
            + (0..self.h)
                .map(|i| self.row_mass[i] * machine_loss[i].min(self.human_loss[i]))
                .sum::<f64>()
    }

    /// Losses of the human and of the machine acting alone.
    pub fn standalone_losses(&self, machine: &MachineAction) -> (f64, f64) {
        let machine_loss = self.machine_row_losses(machine);
        let human = self.base_loss + self.weighted_sum(&self.human_loss);
        let machine_alone = self.base_loss + self.weighted_sum(&machine_loss);
        (human, machine_alone)
    }

    fn weighted_sum(&self, per_row: &[f64]) -> f64 {
        self.row_mass.iter().zip(per_row).map(|(w, l)| w * l).sum()
    }

    /// Cost of yielding the rows outside `retained` to the human and letting
    /// `machine_for(retained)` handle the rest, excluding the base loss:
    /// row variance mass of unretained rows plus, for every column, the
    /// variance mass of its retained cells.
    pub fn retained_objective(&self, retained: &RowSet) -> f64 {
        let m = self.m;
        let yielded: f64 = (0..self.h)
            .filter(|&i| !retained.contains(i))
            .map(|i| self.row_mass[i] * self.human_loss[i])
            .sum();
        let mut columns = 0.0;
        for j in 0..m {
            let (mut w, mut s) = (0.0, 0.0);
            for i in retained.iter() {
                w += self.mass[i * m + j];
                s += self.mass[i * m + j] * self.value[i * m + j];
            }
            if w > 0.0 {
                let mean = s / w;
                columns += retained
                    .iter()
                    .map(|i| self.mass[i * m + j] * (self.value[i * m + j] - mean).powi(2))
                    .sum::<f64>();
            }
        }
        let objective = yielded + columns;
        debug_assert!({
            let machine = self.machine_for(retained);
            let machine_loss = self.machine_row_losses(&machine);
            let direct: f64 = (0..self.h)
                .map(|i| {
                    let l = if retained.contains(i) {
                        machine_loss[i]
                    } else {
                        self.human_loss[i]
                    };
                    self.row_mass[i] * l
                })
                .sum();
            (direct - objective).abs() <= 1e-9 * direct.abs().max(objective.abs()).max(1e-300)
        });
        objective
    }

    /// Row losses with the per-row within-cell residual added back.
    pub fn reported_row_losses(&self, grid_level: &[f64]) -> Vec<f64> {
        grid_level
            .iter()
            .zip(&self.row_base)
            .map(|(l, b)| l + b)
            .collect()
    }

    /// Applies `v ↦ scale·v + shift` to every cell value.
    pub fn affine(&self, scale: f64, shift: f64) -> CellGrid {
        let value = self
            .value
            .iter()
            .zip(&self.mass)
            .map(|(&v, &w)| if w > 0.0 { scale * v + shift } else { 0.0 })
            .collect();
        let s2 = scale * scale;
        CellGrid::from_parts(
            self.h,
            self.m,
            self.row_keys.clone(),
            self.col_keys.clone(),
            self.mass.clone(),
            value,
            self.base_loss * s2,
            self.row_base.iter().map(|b| b * s2).collect(),
        )
    }

    /// Sub-grid restricted to the given rows and columns, with masses
    /// renormalized. Keys are carried over from the parent.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> CellGrid {
        let total: f64 = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.mass(i, j))
            .sum();
        let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
        let mut mass = Vec::with_capacity(rows.len() * cols.len());
        let mut value = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                mass.push(self.mass(i, j) * scale);
                value.push(self.value(i, j));
            }
        }
        let row_base: Vec<f64> = rows.iter().map(|&i| self.row_base[i]).collect();
        let sub_rows_mass: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(r, _)| mass[r * cols.len()..(r + 1) * cols.len()].iter().sum())
            .collect();
        let base = sub_rows_mass.iter().zip(&row_base).map(|(w, b)| w * b).sum();
        CellGrid::from_parts(
            rows.len(),
            cols.len(),
            rows.iter().map(|&i| self.row_keys[i]).collect(),
            cols.iter().map(|&j| self.col_keys[j]).collect(),
            mass,
            value,
            base,
            row_base,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_feature(a: f64, b: f64) -> CellGrid {
        DelegationSetting::new(2, &[1], &[2], vec![0.25; 4], vec![0.0, a, 1.0, b])
            .unwrap()
            .marginalize()
    }

    #[test]
    fn build_setting_validates() {
        let ok = DelegationSetting::new(1, &[], &[], vec![0.5, 0.5], vec![3.0, 3.0]).unwrap();
        assert_eq!(ok.state_count(), 2);
        let bad_sum = DelegationSetting::new(2, &[1], &[2], vec![0.3, 0.2, 0.2, 0.2], vec![0.0; 4]);
        assert!(matches!(bad_sum, Err(ModelError::ProbabilitySum(_))));
        let short = DelegationSetting::new(2, &[1], &[2], vec![0.5, 0.5], vec![0.0; 4]);
        assert!(matches!(short, Err(ModelError::LengthMismatch { .. })));
        let negative = DelegationSetting::new(1, &[1], &[], vec![1.5, -0.5], vec![0.0; 2]);
        assert!(matches!(negative, Err(ModelError::NegativeProbability { index: 1, .. })));
        let range = DelegationSetting::new(2, &[3], &[], vec![0.25; 4], vec![0.0; 4]);
        assert!(matches!(range, Err(ModelError::FeatureOutOfRange { feature: 3, .. })));
        assert!(DelegationSetting::new(25, &[], &[], vec![], vec![]).is_err());
    }

    #[test]
    fn nearly_normalized_probabilities_are_rescaled() {
        let s = DelegationSetting::new(1, &[1], &[], vec![0.5, 0.5 + 5e-10], vec![0.0, 1.0]).unwrap();
        assert!((s.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn marginalize_two_feature_grid() {
        let g = two_feature(3.0, 7.0);
        assert_eq!((g.h(), g.m()), (2, 2));
        assert_eq!(g.value_matrix(), vec![vec![0.0, 1.0], vec![3.0, 7.0]]);
        assert!(g.mass_matrix().iter().flatten().all(|&w| w == 0.25));
        assert_eq!(g.base_loss(), 0.0);
    }

    #[test]
    fn marginalize_unobserved_feature() {
        let g = DelegationSetting::new(1, &[], &[], vec![0.5, 0.5], vec![0.0, 2.0])
            .unwrap()
            .marginalize();
        assert_eq!((g.h(), g.m()), (1, 1));
        assert_eq!(g.value(0, 0), 1.0);
        assert!((g.base_loss() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_observation_has_no_base_loss() {
        let probs = vec![0.1, 0.2, 0.3, 0.15, 0.05, 0.05, 0.1, 0.05];
        let actions = vec![1.0, -2.0, 0.5, 4.0, 3.0, 0.0, 1.5, 2.5];
        let g = DelegationSetting::new(3, &[1, 2], &[3], probs, actions).unwrap().marginalize();
        assert_eq!(g.base_loss(), 0.0);
        assert_eq!((g.h(), g.m()), (4, 2));
    }

    #[test]
    fn human_optimum_closed_form() {
        let (a, b) = (0.7, -1.3);
        let (act, loss) = two_feature(a, b).human_optimum();
        assert!((act[0] - 0.5).abs() < 1e-15 && (act[1] - (a + b) / 2.0).abs() < 1e-15);
        assert!((loss[0] - 0.25).abs() < 1e-15);
        assert!((loss[1] - (a - b) * (a - b) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn human_optimum_weighted_row() {
        let g = CellGrid::new(vec![vec![0.75, 0.25]], vec![vec![0.0, 4.0]], 0.0).unwrap();
        let (act, loss) = g.human_optimum();
        assert_eq!(act[0], 1.0);
        assert_eq!(loss[0], 3.0);
    }

    #[test]
    fn machine_for_retained_rows() {
        let (a, b) = (2.5, -4.0);
        let g = two_feature(a, b);
        assert_eq!(g.oblivious_machine().actions(), &[a / 2.0, (b + 1.0) / 2.0]);
        assert_eq!(g.machine_for(&RowSet::from_indices(2, [1])).actions(), &[a, b]);
        // Empty retained set falls back to column means.
        assert_eq!(g.machine_for(&RowSet::empty(2)), g.oblivious_machine());
    }

    #[test]
    fn machine_row_losses_examples() {
        let (a, b) = (1.5, 3.0);
        let g = two_feature(a, b);
        let l = g.machine_row_losses(&g.oblivious_machine());
        let expected = (a * a + (b - 1.0) * (b - 1.0)) / 8.0;
        assert!((l[0] - expected).abs() < 1e-14 && (l[1] - expected).abs() < 1e-14);

        let g = two_feature(0.0, 5.0);
        let l = g.machine_row_losses(&MachineAction::new(vec![0.0, 5.0]).unwrap());
        assert_eq!(l, vec![8.0, 0.0]);
    }

    #[test]
    fn delegation_and_team_loss_family_instance() {
        let g = two_feature(0.0, 5.0);
        let obliv = g.oblivious_machine();
        assert_eq!(g.machine_row_losses(&obliv), vec![2.0, 2.0]);
        assert_eq!(g.delegation_set(&obliv).indices(), vec![1]);
        let tuned = MachineAction::new(vec![0.0, 5.0]).unwrap();
        assert!((g.team_loss(&tuned) - 0.125).abs() < 1e-15);
        let (human, machine) = g.standalone_losses(&obliv);
        // ½·¼ + ½·25/4
        assert!((human - 13.0 / 4.0).abs() < 1e-15);
        assert!((machine - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ties_stay_with_the_human() {
        let g = CellGrid::new(vec![vec![0.5, 0.5]], vec![vec![0.0, 2.0]], 0.0).unwrap();
        // Human loss 1; machine (0, 0) also has loss 2, machine (1,1) ties at 1.
        let tie = MachineAction::new(vec![1.0, 1.0]).unwrap();
        assert!(g.delegation_set(&tie).is_empty());
        let perfect = MachineAction::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(g.delegation_set(&perfect).indices(), vec![0]);
    }

    #[test]
    fn retained_objective_examples() {
        let (a, b) = (0.3, 2.2);
        let g = two_feature(a, b);
        let none = g.retained_objective(&RowSet::empty(2));
        assert!((none - (0.125 + (a - b) * (a - b) / 8.0)).abs() < 1e-14);
        let first = g.retained_objective(&RowSet::from_indices(2, [0]));
        assert!((first - (a - b) * (a - b) / 8.0).abs() < 1e-14);
        let second = g.retained_objective(&RowSet::from_indices(2, [1]));
        assert!((second - 0.125).abs() < 1e-15);
        let full = g.retained_objective(&RowSet::full(2));
        assert!((full - (a * a + (b - 1.0) * (b - 1.0)) / 8.0).abs() < 1e-14);
    }

    #[test]
    fn zero_mass_rows_are_inert() {
        let g = CellGrid::new(
            vec![vec![0.5, 0.5], vec![0.0, 0.0]],
            vec![vec![0.0, 2.0], vec![7.0, 9.0]],
            0.0,
        )
        .unwrap();
        assert_eq!(g.zero_mass_rows(), vec![1]);
        assert_eq!(g.value(1, 0), 0.0);
        let machine = MachineAction::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(g.machine_row_losses(&machine)[1], 0.0);
        assert!(!g.delegation_set(&machine).contains(1));
    }

    #[test]
    fn grid_constructor_rejects_bad_input() {
        assert!(CellGrid::new(vec![], vec![], 0.0).is_err());
        assert!(CellGrid::new(vec![vec![1.0]], vec![vec![0.0]], -1.0).is_err());
        assert!(CellGrid::new(vec![vec![0.5, 0.4]], vec![vec![0.0, 0.0]], 0.0).is_err());
        assert!(CellGrid::new(vec![vec![0.5, 0.5]], vec![vec![0.0]], 0.0).is_err());
        assert!(CellGrid::new(vec![vec![1.0]], vec![vec![f64::NAN]], 0.0).is_err());
    }
}
