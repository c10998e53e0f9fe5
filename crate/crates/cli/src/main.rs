use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use colearn::data::{DataError, FashionMnistFiles};
use colearn::graph::{build_weight_matrix, AgentId};
use colearn::harness::{
    emit_plot, montecarlo, read_csv, run_single, traces, write_artifacts, ExperimentConfig, HarnessError, MonteCarloOptions, Series,
};

/// Collective learning experiments: agents self-train on private labels, then
/// learn together from consensus proxy labels on a shared unlabeled pool.
#[derive(Debug, Parser)]
#[command(name = "colearn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single replica (run index 0 unless --run is given).
    Run {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        run: usize,
        /// Override a config value, e.g. `--set mode=st` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Directory for metrics.csv, summary, plot and partition manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all Monte Carlo replicas of a config and print the summary table.
    Montecarlo {
        config: PathBuf,
        /// Override the number of runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Run replicas in parallel.
        #[arg(long)]
        parallel: bool,
        /// Override a config value, e.g. `--set mode=st` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the Monte Carlo set once per value of one config parameter.
    Sweep {
        config: PathBuf,
        /// Dotted config path (`schedule.gamma`) or short alias (`gamma`).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        parallel: bool,
        /// Override a config value, e.g. `--set mode=st` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the communication graph and equal-score weights used at an iteration.
    GraphDump {
        config: PathBuf,
        /// Collective iteration, counted from 1.
        #[arg(long)]
        iter: u64,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Validate the Fashion-MNIST IDX files in a directory.
    DataCheck { dir: PathBuf },
    /// Render a metrics CSV as an SVG accuracy plot.
    Plot { csv: PathBuf, out: PathBuf },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(format!("config file not found: {}", path.display())));
    }
    Ok(ExperimentConfig::load(path)?)
}

fn apply_sets(mut cfg: ExperimentConfig, sets: &[String]) -> Result<ExperimentConfig, Failure> {
    for kv in sets {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg = cfg.set_param(key.trim(), value.trim())?;
    }
    Ok(cfg)
}

fn with_overrides(cfg: ExperimentConfig, sets: &[String], runs: Option<usize>, parallel: bool) -> Result<ExperimentConfig, Failure> {
    let mut cfg = apply_sets(cfg, sets)?;
    if let Some(r) = runs {
        cfg = cfg.set_param("runs", &r.to_string())?;
    }
    cfg.parallel |= parallel;
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<colearn::harness::MonteCarloResult, Failure> {
    let result = montecarlo(cfg, &MonteCarloOptions { progress: true })?;
    print!("{}", result.summary);
    if let Some(dir) = out {
        write_artifacts(&result, dir)?;
        eprintln!("wrote {}", dir.display());
    }
    Ok(result)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, run, set, out } => {
            let cfg = apply_sets(load(&config)?, &set)?;
            let result = run_single(&cfg, run, &MonteCarloOptions { progress: true })?;
            print!("{}", result.summary);
            if let Some(dir) = out {
                write_artifacts(&result, &dir)?;
                eprintln!("wrote {}", dir.display());
            }
        }
        Command::Montecarlo { config, runs, parallel, set, out } => {
            let cfg = with_overrides(load(&config)?, &set, runs, parallel)?;
            execute(&cfg, out.as_deref())?;
        }
        Command::Sweep { config, param, values, runs, parallel, set, out } => {
            let base = with_overrides(load(&config)?, &set, runs, parallel)?;
            let configs: Vec<(String, ExperimentConfig)> = values
                .iter()
                .map(|v| Ok((v.clone(), base.set_param(&param, v)?)))
                .collect::<Result<_, Failure>>()?;
            let mut all: Vec<Series> = Vec::new();
            for (value, cfg) in &configs {
                println!("== {param} = {value} ==");
                let dir = out.as_ref().map(|d| d.join(format!("{param}={value}")));
                let result = execute(cfg, dir.as_deref())?;
                let records: Vec<_> = result.records().cloned().collect();
                all.extend(traces(&records, &format!("{param}={value}")));
            }
            if let Some(dir) = out {
                emit_plot(&all, dir.join("sweep.svg"))?;
            }
        }
        Command::GraphDump { config, iter, run } => {
            let cfg = load(&config)?;
            if iter == 0 {
                return Err(Failure::Usage("--iter counts collective iterations from 1".into()));
            }
            let n = cfg.n_agents();
            let schedule = cfg.graph.schedule(n, cfg.run_seed(run))?;
            let g = schedule.graph_at(iter - 1);
            let w = build_weight_matrix(&g, &vec![1.0f64; n]).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!(
                "iteration {iter} (graph round {}): {n} agents, {} edges, strongly connected: {}",
                schedule.round_of(iter - 1),
                g.edge_count(),
                if g.is_strongly_connected() { "yes" } else { "no" }
            );
            for i in 0..n {
                let inn = g.in_neighbors(AgentId(i)).map_err(|e| Failure::Runtime(e.to_string()))?;
                let ids: Vec<String> = inn.iter().map(|a| a.to_string()).collect();
                let row: Vec<String> = w.row(i).iter().map(|v| format!("{v:.4}")).collect();
                println!("{i:>3} <- [{}]  w = [{}]", ids.join(", "), row.join(" "));
            }
        }
        Command::DataCheck { dir } => {
            let files = FashionMnistFiles::in_dir(&dir);
            if !files.exist() {
                return Err(Failure::Usage(format!(
                    "{} does not contain train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte",
                    dir.display()
                )));
            }
            let (train, test) = files.load::<f32>().map_err(|e: DataError| Failure::Runtime(e.to_string()))?;
            println!("{} train / {} test", train.len(), test.len());
        }
        Command::Plot { csv, out } => {
            if !csv.is_file() {
                return Err(Failure::Usage(format!("metrics file not found: {}", csv.display())));
            }
            let records = read_csv(&csv)?;
            let label = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Failure::Runtime(format!("{}: {e}", parent.display())))?;
            }
            emit_plot(&traces(&records, &label), &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
