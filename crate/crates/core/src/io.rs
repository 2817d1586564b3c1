//! File formats: instance, grid and graph JSON, solver output JSON and the
//! experiment CSV tables.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dynamics::{ExperimentRow, ExperimentSummary};
use crate::generators::{GeneratorError, WeightedGraph};
use crate::model::{CellGrid, DelegationSetting, ModelError};
use crate::rowset::RowSet;
use crate::solvers::SolveResult;
use crate::twofeature::Sweep;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingFile {
    pub d: usize,
    pub human_features: Vec<usize>,
    pub machine_features: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub optimal_actions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub h: usize,
    pub m: usize,
    pub mass: Vec<Vec<f64>>,
    pub value: Vec<Vec<f64>>,
    #[serde(default)]
    pub base_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regular_degree: Option<usize>,
}

/// Either input form accepted by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Setting(DelegationSetting),
    Grid(CellGrid),
}

impl Problem {
    pub fn to_grid(&self) -> CellGrid {
        match self {
            Problem::Setting(s) => s.marginalize(),
            Problem::Grid(g) => g.clone(),
        }
    }
}

/// Parses setting JSON (has `"d"`) or grid JSON (has `"mass"`).
pub fn parse_problem(text: &str) -> Result<Problem, IoError> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| IoError::Schema("expected a JSON object".into()))?;
    if obj.contains_key("d") {
        let f: SettingFile = serde_json::from_value(value)?;
        Ok(Problem::Setting(DelegationSetting::new(
            f.d,
            &f.human_features,
            &f.machine_features,
            f.probabilities,
            f.optimal_actions,
        )?))
    } else if obj.contains_key("mass") {
        let f: GridFile = serde_json::from_value(value)?;
        if f.mass.len() != f.h || f.mass.iter().any(|r| r.len() != f.m) {
            return Err(IoError::Schema(format!("mass is not {}×{}", f.h, f.m)));
        }
        if f.value.len() != f.h || f.value.iter().any(|r| r.len() != f.m) {
            return Err(IoError::Schema(format!("value is not {}×{}", f.h, f.m)));
        }
        Ok(Problem::Grid(CellGrid::new(f.mass, f.value, f.base_loss)?))
    } else {
        Err(IoError::Schema(
            "neither a setting (missing \"d\") nor a grid (missing \"mass\")".into(),
        ))
    }
}

pub fn setting_file(setting: &DelegationSetting) -> SettingFile {
    SettingFile {
        d: setting.d(),
        human_features: setting.human_features().to_vec(),
        machine_features: setting.machine_features().to_vec(),
        probabilities: setting.probabilities().to_vec(),
        optimal_actions: setting.optimal_actions().to_vec(),
        meta: None,
    }
}

pub fn grid_file(grid: &CellGrid) -> GridFile {
    GridFile {
        h: grid.h(),
        m: grid.m(),
        mass: grid.mass_matrix(),
        value: grid.value_matrix(),
        base_loss: grid.base_loss(),
        meta: None,
    }
}

pub fn parse_graph(text: &str) -> Result<WeightedGraph, IoError> {
    let f: GraphFile = serde_json::from_str(text)?;
    let graph = WeightedGraph::new(f.n, &f.edges)?;
    if let Some(d) = f.regular_degree {
        if graph.regular_degree() != Some(d) {
            return Err(GeneratorError::NotRegular(format!(
                "declared degree {d}, actual degrees {:?}",
                graph.degrees()
            ))
            .into());
        }
    }
    Ok(graph)
}

fn indices(set: &RowSet) -> Vec<usize> {
    set.indices()
}

/// Solver output as JSON; `meta` is attached when given.
pub fn solve_result_json(result: &SolveResult, meta: Option<Value>) -> Value {
    let mut out = json!({
        "retained": indices(&result.retained),
        "machine": result.machine.actions(),
        "team_loss": result.team_loss,
        "delegation_set": indices(&result.delegation_set),
        "solver": result.solver.name(),
        "exact": result.exact(),
        "exactness": result.exactness,
        "all_minimizers": result.all_minimizers.iter().map(indices).collect::<Vec<_>>(),
        "minimizers_truncated": result.minimizers_truncated,
        "human_row_losses": result.human_row_losses,
        "machine_row_losses": result.machine_row_losses,
    });
    if let Some(meta) = meta {
        out["meta"] = meta;
    }
    out
}

/// Run metadata written as `#` lines in CSV files and as a `meta` object in
/// JSON files.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Meta {
    pub command: String,
    pub flags: Vec<(String, String)>,
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn flag(mut self, name: &str, value: impl ToString) -> Self {
        self.flags.push((name.into(), value.to_string()));
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_json(&self) -> Value {
        let flags: serde_json::Map<String, Value> = self
            .flags
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        let mut out = json!({
            "tool": "delegate-lab",
            "version": VERSION,
            "command": self.command,
            "flags": flags,
        });
        if let Some(seed) = self.seed {
            out["seed"] = json!(seed);
        }
        out
    }

    pub fn write_comments<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# delegate-lab {VERSION}")?;
        writeln!(w, "# command: {}", self.command)?;
        let flags: Vec<String> = self.flags.iter().map(|(k, v)| format!("--{k}={v}")).collect();
        writeln!(w, "# flags: {}", flags.join(" "))?;
        if let Some(seed) = self.seed {
            writeln!(w, "# seed: {seed}")?;
        }
        Ok(())
    }
}

/// Formats a real with 17 significant digits like C's `%.17g`.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (16 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_sweep_csv<W: Write>(w: &mut W, meta: &Meta, sweep: &Sweep) -> std::io::Result<()> {
    meta.write_comments(w)?;
    writeln!(w, "a,b,loss_full,loss_c1,loss_c2,loss_none,loss_opt,region,full_adoption")?;
    for r in &sweep.rows {
        let region: Vec<&str> = r.regions.iter().map(|g| g.label()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            format_real(r.a),
            format_real(r.b),
            format_real(r.loss_full),
            format_real(r.loss_c1),
            format_real(r.loss_c2),
            format_real(r.loss_none),
            format_real(r.optimal_loss),
            region.join("|"),
            r.full_adoption_possible
        )?;
    }
    Ok(())
}

pub fn write_experiment_csv<W: Write>(
    w: &mut W,
    meta: &Meta,
    rows: &[ExperimentRow],
) -> std::io::Result<()> {
    meta.write_comments(w)?;
    writeln!(
        w,
        "sample_id,seed,dH,dM,loss_opt,loss_iter,loss_obliv,gap,is_optimal,iterations,converged"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.sample_id,
            r.seed,
            r.dh,
            r.dm,
            format_real(r.loss_opt),
            format_real(r.loss_iter),
            format_real(r.loss_obliv),
            format_real(r.gap),
            r.is_optimal,
            r.iterations,
            r.converged
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(
    w: &mut W,
    meta: &Meta,
    summary: &ExperimentSummary,
) -> std::io::Result<()> {
    meta.write_comments(w)?;
    writeln!(w, "dH,dM,samples,prop_optimal,median_gap_iter,median_gap_obliv")?;
    writeln!(
        w,
        "{},{},{},{},{},{}",
        summary.dh,
        summary.dm,
        summary.samples,
        format_real(summary.prop_optimal),
        format_real(summary.median_gap_iter),
        format_real(summary.median_gap_obliv)
    )
}
