//! Optimal algorithmic delegates for human-machine teams.
//!
//! A human and a machine each observe a subset of the binary features that
//! describe a decision-making instance. The human sees a *human category*
//! (a row of the cell grid), the machine a *machine category* (a column).
//! In every human category the human either acts on their own, taking the
//! row mean of the ground-truth action, or delegates to the machine when the
//! machine's expected squared loss in that category is strictly lower.
//!
//! Designing the loss-minimizing machine reduces to choosing a set of
//! *retained* rows `R` and averaging the ground truth over those rows in
//! every column ([`CellGrid::machine_for`]). The crate provides:
//!
//! * [`model`]: settings, cell grids and every loss of the team model,
//! * [`solvers`]: brute force, the separable window algorithm, the
//!   ellipse-arrangement solver for two machine categories, the zero-loss
//!   check and local search,
//! * [`twofeature`]: closed forms for the single human / single machine
//!   feature family,
//! * [`dynamics`]: the iterative redesign loop and its experiments,
//! * [`generators`]: instance families and the clique hardness construction,
//! * [`io`]: the JSON and CSV file formats.

pub mod dynamics;
pub mod generators;
pub mod io;
pub mod model;
pub mod rowset;
pub mod solvers;
pub mod twofeature;

pub use model::{CellGrid, DelegationSetting, MachineAction, ModelError};
pub use rowset::RowSet;
pub use solvers::{Exactness, SolveResult, SolverError, SolverKind};
