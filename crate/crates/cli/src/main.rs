use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use wesample::experiment::{
    audit_experiment, emit_results, preset, presets, run_experiment, ExperimentConfig, OutputFormat, RunOptions,
};
use wesample::Error;

#[derive(Parser)]
#[command(name = "wesample", version, about = "Weighted ensemble sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a preset and write result tables.
    Run(RunArgs),
    /// List presets, or print one preset's configs as JSON.
    Presets {
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
    /// Check the Doob decomposition of Var(θ_T) on a finite chain.
    Audit {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long, value_name = "M")]
        replicates: usize,
        #[arg(long, value_name = "K")]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "FILE", conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Use paper-scale replicate counts.
    #[arg(long)]
    full: bool,
    #[arg(long, value_name = "K")]
    threads: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override the output format of every config (csv, json, gnuplot-dat).
    #[arg(long, value_name = "FORMAT")]
    format: Option<OutputFormat>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. }
        | Error::Argument(_)
        | Error::Usage(_)
        | Error::Unsupported(_)
        | Error::InfeasibleAllocation { .. } => 2,
        Error::Invariant(_) | Error::Domain(_) | Error::PotentialDomain { .. } | Error::Mixing(_) => 3,
        Error::Io { .. } => 1,
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(k) = threads {
        if k == 0 {
            return Err(Error::Argument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    set_threads(args.threads)?;
    let configs = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load_many(path)?,
        (None, Some(name)) => preset(name)
            .ok_or_else(|| Error::Argument(format!("unknown preset {name:?}; see `wesample presets`")))?
            .configs,
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let opts = RunOptions { full: args.full };
    let mut manifest = Vec::new();
    for cfg in &configs {
        let started = Instant::now();
        let table = run_experiment(cfg, &opts)?;
        let seconds = started.elapsed().as_secs_f64();
        let format = args.format.unwrap_or(cfg.output.format);
        let file = cfg
            .output
            .file
            .clone()
            .unwrap_or_else(|| format!("{}.{}", cfg.name, format.extension()));
        let path = args.out.join(&file);
        emit_results(&table, format, &path)?;
        eprintln!("{}: {} rows -> {} ({seconds:.1} s)", cfg.name, table.rows.len(), path.display());
        manifest.push(serde_json::json!({
            "name": cfg.name,
            "file": file,
            "config_hash": table.metadata.config_hash,
            "replicates": cfg.replicates_for(args.full),
            "wall_time_seconds": seconds,
        }));
    }
    let path = args.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "threads": rayon::current_num_threads(),
        "runs": manifest,
    }))
    .expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))
}

fn list_presets(show: Option<String>) -> Result<(), Error> {
    match show {
        None => {
            for p in presets() {
                println!("{:<20} {:<8} {}", p.name, p.budget, p.description);
            }
            Ok(())
        }
        Some(name) => {
            let p = preset(&name).ok_or_else(|| Error::Argument(format!("unknown preset {name:?}")))?;
            println!("{}", serde_json::to_string_pretty(&p.configs).expect("configs serialize"));
            Ok(())
        }
    }
}

fn audit(config: &Path, replicates: usize, threads: Option<usize>) -> Result<(), Error> {
    set_threads(threads)?;
    let cfg = ExperimentConfig::load_many(config)?;
    let [cfg] = cfg.as_slice() else {
        return Err(Error::config("$", "the audit takes a single config object"));
    };
    let report = audit_experiment(cfg, replicates)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("audit serializes"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Presets { show } => list_presets(show),
        Command::Audit {
            config,
            replicates,
            threads,
        } => audit(&config, replicates, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wesample: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
