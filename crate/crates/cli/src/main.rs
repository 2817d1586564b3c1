use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use delegate_lab::dynamics::{run_experiment, search_suboptimal, ExperimentConfig, DEFAULT_TOLERANCE};
use delegate_lab::generators::{graph_to_instance, neg_regular_dsd_weights, GeneratorError};
use delegate_lab::io::{
    grid_file, parse_graph, parse_problem, solve_result_json, write_experiment_csv,
    write_summary_csv, write_sweep_csv, Meta,
};
use delegate_lab::solvers::{
    local_search, solve_auto, solve_brute, solve_geometric, solve_separable, zero_loss_possible,
    SolverError,
};
use delegate_lab::twofeature::sweep;
use serde_json::json;

#[derive(Parser)]
#[command(name = "delegate-lab", version, about = "Optimal delegates for human-machine teams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Auto,
    Brute,
    Separable,
    Geometric,
    Local,
}

impl Solver {
    fn name(self) -> &'static str {
        match self {
            Solver::Auto => "auto",
            Solver::Brute => "brute",
            Solver::Separable => "separable",
            Solver::Geometric => "geometric",
            Solver::Local => "local",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a setting or grid JSON file for the optimal machine
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Solver::Auto)]
        solver: Solver,
        /// Output JSON; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep the two-feature family over a lattice of (a, b)
    Sweep2f {
        #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
        a_min: f64,
        #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
        a_max: f64,
        #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
        b_min: f64,
        #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
        b_max: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare iterated redesign with the optimum on random linear settings
    ExpIter {
        #[arg(long)]
        dh: usize,
        #[arg(long)]
        dm: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Summary CSV; defaults to `<out>_summary.csv`
        #[arg(long)]
        summary_out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
    },
    /// Build the grid instance for a regular graph
    ReduceGraph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report whether some machine gives zero team loss
    CheckZero {
        #[arg(long)]
        input: PathBuf,
    },
    /// Look for a random grid where iterated redesign ends suboptimal
    SearchSuboptimal {
        #[arg(long, default_value_t = 4)]
        rows: usize,
        #[arg(long, default_value_t = 2)]
        cols: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        attempts: usize,
        #[arg(long, default_value_t = 1e-6)]
        margin: f64,
        /// Grid JSON of the witness; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure that maps to exit code 2.
#[derive(Debug)]
struct Inapplicable(String);

impl std::fmt::Display for Inapplicable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Inapplicable {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Inapplicable>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DELEGATE_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("DELEGATE_LAB_THREADS={raw:?} is not a count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve { input, solver, output } => cmd_solve(&input, solver, output.as_deref()),
        Command::Sweep2f {
            a_min,
            a_max,
            b_min,
            b_max,
            step,
            out,
        } => {
            let s = sweep((a_min, a_max), (b_min, b_max), step)?;
            let meta = Meta::new("sweep2f")
                .flag("a-min", a_min)
                .flag("a-max", a_max)
                .flag("b-min", b_min)
                .flag("b-max", b_max)
                .flag("step", step);
            write_csv(&out, |w| write_sweep_csv(w, &meta, &s))
        }
        Command::ExpIter {
            dh,
            dm,
            samples,
            seed,
            out,
            summary_out,
            tol,
        } => {
            let config = ExperimentConfig {
                dh,
                dm,
                samples,
                seed,
                tolerance: tol,
            };
            let exp = run_experiment(&config)?;
            let meta = Meta::new("exp-iter")
                .flag("dh", dh)
                .flag("dm", dm)
                .flag("samples", samples)
                .flag("tol", tol)
                .seed(seed);
            write_csv(&out, |w| write_experiment_csv(w, &meta, &exp.rows))?;
            let summary_path = summary_out.unwrap_or_else(|| summary_path(&out));
            write_csv(&summary_path, |w| write_summary_csv(w, &meta, &exp.summary))
        }
        Command::ReduceGraph { input, out } => {
            let graph = parse_graph(&read(&input)?)?;
            let weighted = neg_regular_dsd_weights(&graph).map_err(|e| match e {
                GeneratorError::NotRegular(_) => anyhow!(Inapplicable(e.to_string())),
                e => e.into(),
            })?;
            let grid = graph_to_instance(&weighted)?;
            let mut file = grid_file(&grid);
            file.meta = Some(Meta::new("reduce-graph").flag("input", input.display()).to_json());
            write_json(Some(&out), &serde_json::to_value(file)?)
        }
        Command::CheckZero { input } => {
            let grid = parse_problem(&read(&input)?)?.to_grid();
            let z = zero_loss_possible(&grid);
            println!("{}", json!({"possible": z.possible, "r0": z.r0.indices()}));
            Ok(())
        }
        Command::SearchSuboptimal {
            rows,
            cols,
            seed,
            attempts,
            margin,
            out,
        } => {
            let Some(w) = search_suboptimal(rows, cols, seed, attempts, margin)? else {
                bail!("no suboptimal instance within {attempts} attempts");
            };
            let meta = Meta::new("search-suboptimal")
                .flag("rows", rows)
                .flag("cols", cols)
                .flag("attempts", attempts)
                .flag("margin", margin)
                .seed(w.seed);
            let mut file = serde_json::to_value(grid_file(&w.grid))?;
            file["meta"] = meta.to_json();
            file["meta"]["comparison"] = serde_json::to_value(&w.comparison)?;
            write_json(out.as_deref(), &file)
        }
    }
}

fn cmd_solve(input: &Path, solver: Solver, output: Option<&Path>) -> Result<()> {
    let grid = parse_problem(&read(input)?)?.to_grid();
    let result = match solver {
        Solver::Auto => Ok(solve_auto(&grid)),
        Solver::Brute => solve_brute(&grid),
        Solver::Separable => solve_separable(&grid),
        Solver::Geometric => solve_geometric(&grid),
        Solver::Local => Ok(local_search(&grid, &zero_loss_possible(&grid).r0)),
    }
    .map_err(|SolverError::Inapplicable(msg)| Inapplicable(format!("{} solver: {msg}", solver.name())))?;
    let meta = Meta::new("solve")
        .flag("input", input.display())
        .flag("solver", solver.name());
    write_json(output, &solve_result_json(&result, Some(meta.to_json())))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_summary.csv"))
}

fn write_csv(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
