use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use cvprofile_core::baseline::{build_baseline, detect_anomalies, format_report, BaselineProfile};
use cvprofile_core::config::RunConfig;
use cvprofile_core::heatmap::HeatmapGrid;
use cvprofile_core::indices::index_all;
use cvprofile_core::pipeline::{profile, PipelineError};
use cvprofile_core::route::{parse_route, Corridor, Direction};
use cvprofile_core::synth::{generate, ground_truth, route_text, waypoints_csv, ScenarioSpec};
use cvprofile_core::table::CellTable;

/// Connected-vehicle corridor profiling.
#[derive(Parser, Debug)]
#[command(name = "cvprofile", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Waypoints + route -> per-cell metrics table.
    Profile {
        #[arg(long)]
        waypoints: PathBuf,
        #[arg(long)]
        route: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics table -> metrics plus safety, comfort and stability indices.
    Indices {
        #[arg(long)]
        metrics: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a baseline or flag anomalies against one.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Heatmap of one column: matrix CSV and PGM image.
    Render {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        direction: Direction,
        /// Writes <prefix>.csv and <prefix>.pgm.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Scenario spec -> waypoints.csv, route.csv, truth.csv.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum BaselineCommand {
    /// One table per observed day -> baseline file.
    Build {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        tables: Vec<PathBuf>,
    },
    /// Table + baseline -> anomaly report.
    Detect {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Run config (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    Ok(fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?)
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig> {
    let env = |k: &str| std::env::var(k).ok();
    let cfg = match &arg.config {
        Some(p) => RunConfig::from_text_with_env(&read_text(p)?, &p.display().to_string(), &env),
        None => RunConfig::from_text_with_env("", "<defaults>", &env),
    };
    Ok(cfg?)
}

fn load_table(path: &Path) -> Result<CellTable> {
    Ok(CellTable::from_csv(&read_text(path)?).with_context(|| path.display().to_string())?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Profile {
            waypoints,
            route,
            config,
            out,
        } => {
            let cfg = load_config(&config)?;
            let lines = parse_route(&read_text(&route)?).with_context(|| route.display().to_string())?;
            let corridor = Corridor::new(lines, cfg.segment_length_mi).with_context(|| route.display().to_string())?;
            let bytes = fs::read(&waypoints).with_context(|| format!("reading {}", waypoints.display()))?;
            let result = profile(&bytes, &corridor, &cfg).map_err(|e| match e {
                PipelineError::Ingest(e) => Failure::Input(anyhow!(e).context(waypoints.display().to_string())),
                e @ PipelineError::Aggregate(_) => Failure::Internal(e.into()),
            })?;
            for r in result.rejections.iter().take(10) {
                eprintln!("{}:{}: rejected: {}", waypoints.display(), r.line, r.reason);
            }
            if result.rejections.len() > 10 {
                eprintln!("... {} more rejected lines", result.rejections.len() - 10);
            }
            write(&out, result.table().to_csv())?;
            println!("{}", result.summary);
        }
        Command::Indices { metrics, config, out } => {
            let cfg = load_config(&config)?;
            let table = load_table(&metrics)?;
            let cells = table.metrics().with_context(|| metrics.display().to_string())?;
            let indexed = index_all(&cells, &cfg.speed_limits, table.grid.segment_length_mi, &cfg.index_options())?;
            let unscored = indexed.iter().filter(|c| c.safety.is_none()).count();
            write(&out, CellTable::from_indexed(table.grid, &indexed, cfg.stability_per_waypoint).to_csv())?;
            println!("cells: {}\nunscored safety (zero mean speed): {unscored}", indexed.len());
        }
        Command::Baseline(BaselineCommand::Build { config, out, tables }) => {
            let cfg = load_config(&config)?;
            let tables = tables.iter().map(|p| load_table(p)).collect::<Result<Vec<_>>>()?;
            let b = build_baseline(&tables, cfg.baseline_min_days)?;
            let low = b
                .slots
                .values()
                .filter(|s| s.iter().flatten().all(|c| (c.days as usize) < b.min_days))
                .count();
            write(&out, b.to_csv())?;
            println!("days: {}\nslots: {}\nlow-confidence slots: {low}", tables.len(), b.slots.len());
        }
        Command::Baseline(BaselineCommand::Detect {
            baseline,
            table,
            config,
            out,
        }) => {
            let cfg = load_config(&config)?;
            let b = BaselineProfile::from_csv(&read_text(&baseline)?).with_context(|| baseline.display().to_string())?;
            let t = load_table(&table)?;
            let flags = detect_anomalies(&t, &b, &cfg.detect)?;
            write(&out, format_report(&flags))?;
            let count = |s: &str| flags.iter().filter(|f| f.severity.to_string() == s).count();
            println!("flags: {}\nalert: {}\nwarn: {}\ninfo: {}", flags.len(), count("alert"), count("warn"), count("info"));
        }
        Command::Render {
            table,
            metric,
            direction,
            out_prefix,
        } => {
            let t = load_table(&table)?;
            let grid = HeatmapGrid::from_table(&t, &metric, direction)?;
            let with_ext = |ext: &str| {
                let mut p = out_prefix.clone().into_os_string();
                p.push(ext);
                PathBuf::from(p)
            };
            write(&with_ext(".csv"), grid.to_matrix_csv())?;
            write(&with_ext(".pgm"), grid.to_pgm())?;
            match grid.range() {
                Some((lo, hi)) => println!("{metric} {direction}: {}x{} min={lo} max={hi}", grid.segments, grid.intervals),
                None => println!("{metric} {direction}: {}x{} no values", grid.segments, grid.intervals),
            }
        }
        Command::Synth {
            scenario,
            config,
            out_dir,
        } => {
            let cfg = load_config(&config)?;
            let spec = ScenarioSpec::from_text(&read_text(&scenario)?, &scenario.display().to_string())?;
            let records = generate(&spec)?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            write(&out_dir.join("waypoints.csv"), waypoints_csv(&records))?;
            write(&out_dir.join("route.csv"), route_text(&spec)?)?;
            write(&out_dir.join("truth.csv"), ground_truth(&spec, &cfg)?.to_csv())?;
            println!("waypoints: {}\njourneys: {}", records.len(), spec.vehicles as usize * spec.directions.len());
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
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}
