//! `fairalloc` command-line driver.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairalloc::analysis::{self, group_allocation_summary, solution_path};
use fairalloc::bnb::branch_and_bound_observed;
use fairalloc::io::{
    self, load_config, load_solution_file, load_units, parse_tau, path_csv, summary_json, write_instance, write_text,
    FitReport, ModelFile, ModelSpec, RunConfig, RunInputs, SolutionFile,
};
use fairalloc::outcome::{MaxInterferenceModel, OutcomeModel};
use fairalloc::synth::{self, NycOptions};
use fairalloc::{build_knn_graph, encode, fit_max_interference, Error, Problem, SolveStatus};

#[derive(Parser)]
#[command(name = "fairalloc", version, about = "Budgeted allocation under interference with privilege constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the max-interference model to observed outcomes.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Where to write the fitted model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one allocation problem with branch and bound.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Write the encoded program as text.
        #[arg(long)]
        export_milp: Option<PathBuf>,
        /// Write one line per explored node.
        #[arg(long)]
        node_log: Option<PathBuf>,
    },
    /// Solve one allocation problem by enumeration (small instances only).
    Oracle {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve at every tau of the config's tau_list.
    Path {
        #[command(flatten)]
        inputs: InputArgs,
        /// Directory receiving path.csv and one solution file per point.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a synthetic instance (units.csv, model.json, config.toml).
    Synth {
        /// housing, housing_interference, additive_infeasible, nyc_like or random.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// nyc_like: number of units.
        #[arg(long)]
        n: Option<usize>,
        /// nyc_like: intervention budget.
        #[arg(long)]
        budget: Option<usize>,
        /// nyc_like: place each group in its own region.
        #[arg(long)]
        segregated: bool,
        /// nyc_like: label of a group whose intervention effect dominates.
        #[arg(long)]
        dominant: Option<String>,
    },
    /// Describe who a solution treats, by group.
    Summarize {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Units and config; explicit paths override `--instance`.
#[derive(Args)]
struct DataArgs {
    /// Directory holding units.csv, model.json and config.toml.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    units: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct InputArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: InputArgs,
    /// Privilege bound; a number or "inf". Defaults to the last tau_list entry.
    #[arg(long)]
    tau: Option<String>,
    /// Where to write the solution file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn pick(explicit: &Option<PathBuf>, instance: &Option<PathBuf>, file: &str, flag: &str) -> CliResult<PathBuf> {
    explicit
        .clone()
        .or_else(|| instance.as_ref().map(|d| d.join(file)))
        .ok_or_else(|| CliError::Usage(format!("--{flag} or --instance is required")))
}

impl DataArgs {
    fn units(&self) -> CliResult<PathBuf> {
        pick(&self.units, &self.instance, "units.csv", "units")
    }

    fn config(&self) -> CliResult<PathBuf> {
        pick(&self.config, &self.instance, "config.toml", "config")
    }
}

impl InputArgs {
    fn load(&self) -> CliResult<RunInputs> {
        let model = pick(&self.model, &self.data.instance, "model.json", "model")?;
        Ok(RunInputs::load(&self.data.units()?, &model, &self.data.config()?)?)
    }
}

impl RunArgs {
    fn problem(&self) -> CliResult<(Problem, RunConfig)> {
        let inputs = self.inputs.load()?;
        let problem = match &self.tau {
            Some(text) => inputs.problem.with_tau(parse_tau(text)?)?,
            None => inputs.problem,
        };
        Ok((problem, inputs.config))
    }
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::LimitReached => 3,
    }
}

fn fit(data: &DataArgs, out: &Path) -> CliResult<u8> {
    let config = load_config(&data.config()?)?;
    let table = load_units(&data.units()?, &config.group_column, config.group_labels.as_deref())?;
    let units = table.units(&config.prec_feature_list)?;
    let graph = build_knn_graph(&units, config.knn())?;
    let result = fit_max_interference(&table.fit_dataset(graph))?;
    let model: OutcomeModel<f64> = MaxInterferenceModel::new(
        result.params.clone(),
        Some(synth::AP_IB),
        Some(synth::COUNSELORS),
    )?
    .into();
    let ids: Vec<String> = table.records.iter().map(|r| r.id.clone()).collect();
    let file = ModelFile {
        objective: ModelSpec::from_model(&model, &table.feature_names(), &table.groups, &ids)?,
        privilege: None,
        fit: Some(FitReport::new(&result, &table.groups)),
    };
    write_text(out, &file.to_json()?)?;
    Ok(0)
}

fn solve(run: &RunArgs, export_milp: Option<&Path>, node_log: Option<&Path>) -> CliResult<u8> {
    let (problem, config) = run.problem()?;
    let program = encode(&problem)?;
    if let Some(path) = export_milp {
        let mut text = Vec::new();
        program.write_text(&mut text).map_err(|e| Error::Io(e.to_string()))?;
        io::write_bytes(path, &text)?;
    }
    let mut log = String::new();
    let solution = branch_and_bound_observed(&program, &config.solver, &mut |event| {
        if node_log.is_some() {
            let _ = writeln!(log, "{}", event.log_line());
        }
    })?;
    if let Some(path) = node_log {
        write_text(path, &log)?;
    }
    let file = SolutionFile::new(&problem, &solution)?;
    write_text(&run.out, &file.to_json()?)?;
    Ok(status_code(solution.status))
}

fn oracle(run: &RunArgs) -> CliResult<u8> {
    let (problem, _) = run.problem()?;
    let solution = analysis::brute_force(&problem)?;
    write_text(&run.out, &SolutionFile::new(&problem, &solution)?.to_json()?)?;
    Ok(status_code(solution.status))
}

fn path(inputs: &InputArgs, out_dir: &Path) -> CliResult<u8> {
    let inputs = inputs.load()?;
    let taus = inputs.config.taus();
    let result = solution_path(&inputs.problem, &taus, &inputs.config.solver)?;
    io::create_dir(out_dir)?;
    write_text(&out_dir.join("path.csv"), &path_csv(&inputs.problem, &result)?)?;
    for (index, point) in result.points.iter().enumerate() {
        let problem = inputs.problem.with_tau(point.tau)?;
        let file = SolutionFile::new(&problem, &point.solution)?;
        write_text(&out_dir.join(format!("solution_{index:03}.json")), &file.to_json()?)?;
    }
    Ok(0)
}

fn synthesize(
    kind: &str,
    seed: u64,
    out_dir: &Path,
    n: Option<usize>,
    budget: Option<usize>,
    segregated: bool,
    dominant: Option<&str>,
) -> CliResult<u8> {
    let tuned = n.is_some() || budget.is_some() || segregated || dominant.is_some();
    let instance = if kind == "nyc_like" {
        let defaults = NycOptions::default();
        let dominant = match dominant {
            Some(label) => Some(
                synth::NYC_GROUPS
                    .iter()
                    .position(|g| *g == label)
                    .ok_or_else(|| CliError::Usage(format!("unknown group {label:?}; expected one of {:?}", synth::NYC_GROUPS)))?,
            ),
            None => None,
        };
        let opts = NycOptions {
            n: n.unwrap_or(defaults.n),
            budget: budget.unwrap_or(defaults.budget),
            segregated,
            dominant,
            ..defaults
        };
        synth::nyc_like(seed, &opts)?
    } else if tuned {
        return Err(CliError::Usage("--n, --budget, --segregated and --dominant apply to nyc_like only".into()));
    } else {
        synth::generate(kind, seed)?
    };
    write_instance(&instance, out_dir)?;
    Ok(0)
}

fn summarize(inputs: &InputArgs, solution: &Path, out: &Path) -> CliResult<u8> {
    let inputs = inputs.load()?;
    let file = load_solution_file(solution)?;
    let problem = inputs.problem.with_tau(file.tau.value())?;
    let summary = group_allocation_summary(&problem, &file.to_solution(&problem)?)?;
    write_text(out, &summary_json(&summary)?)?;
    Ok(0)
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Fit { data, out } => fit(&data, &out),
        Command::Solve { run, export_milp, node_log } => solve(&run, export_milp.as_deref(), node_log.as_deref()),
        Command::Oracle { run } => oracle(&run),
        Command::Path { inputs, out_dir } => path(&inputs, &out_dir),
        Command::Synth { kind, seed, out_dir, n, budget, segregated, dominant } => {
            synthesize(&kind, seed, &out_dir, n, budget, segregated, dominant.as_deref())
        }
        Command::Summarize { inputs, solution, out } => summarize(&inputs, &solution, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
