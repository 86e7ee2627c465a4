use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use starnoma::compare::{compare_files, render, COMPARISON_HEADER};
use starnoma::dump::write_channels;
use starnoma::tables::{write_atomic, write_table};
use starnoma::{run, Algo, ExperimentSpec, Settings, SimError, SimResult};
use starnoma_core::channel::draw_channels;
use starnoma_core::scenario::{build_topology, derive_adjacency};
use starnoma_core::seeded_rng;

/// Multi-STAR-RIS NOMA indoor network simulator.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train or solve, evaluate, and write result CSVs.
    Run(RunArgs),
    /// Align summary CSVs by (algorithm, P_max).
    Compare(CompareArgs),
    /// Print or write the resolved scenario file.
    DumpScenario(DumpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Preset name (tiny, default) or scenario file path.
    #[arg(long)]
    scenario: String,
    #[arg(long, value_enum)]
    algo: Algo,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    /// Comma-separated P_max values in watts.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    power_sweep: Vec<f64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overwrite existing results.
    #[arg(long)]
    force: bool,
    /// Training budget in environment steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Also write each instance's channels as CSV.
    #[arg(long)]
    dump_channels: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Two or more summary CSVs; deltas are against the first.
    #[arg(required = true, num_args = 2..)]
    summaries: Vec<PathBuf>,
    /// Write the table as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    scenario: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the TOML here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the instance's channels as CSV to this path.
    #[arg(long)]
    dump_channels: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

fn refuse_existing(path: &Path, force: bool) -> SimResult<()> {
    if path.exists() && !force {
        return Err(SimError::OutputExists(path.to_path_buf()));
    }
    Ok(())
}

fn execute(cli: Cli) -> SimResult<()> {
    match cli.command {
        Command::Run(a) => {
            let settings = Settings::load(&a.scenario)?;
            let spec = ExperimentSpec {
                scenario: a.scenario,
                algorithm: a.algo,
                seeds: a.seeds,
                power_sweep: a.power_sweep,
                out: a.out,
                force: a.force,
                train_steps: a.steps,
                dump_channels: a.dump_channels,
            };
            let rows = run(&spec, &settings)?;
            for r in &rows {
                println!(
                    "{} P_max={} seed={} mean={:.4} min={:.4} steps_to_threshold={} wall={:.2}s inference={:.3e}s",
                    r.algorithm, r.p_max_w, r.seed, r.mean_throughput, r.min_throughput, r.steps_to_threshold, r.wall_clock_s, r.inference_s
                );
            }
        }
        Command::Compare(a) => {
            if let Some(out) = &a.out {
                refuse_existing(out, a.force)?;
            }
            let rows = compare_files(&a.summaries)?;
            print!("{}", render(&rows, &a.summaries));
            if let Some(out) = &a.out {
                write_table(out, &rows, &COMPARISON_HEADER)?;
            }
        }
        Command::DumpScenario(a) => {
            let mut settings = Settings::load(&a.scenario)?;
            if let Some(seed) = a.seed {
                settings = settings.with_seed(seed);
            }
            let text = settings.to_toml()?;
            match &a.out {
                Some(path) => {
                    refuse_existing(path, a.force)?;
                    write_atomic(path, text.as_bytes())?;
                }
                None => print!("{text}"),
            }
            if let Some(path) = &a.dump_channels {
                refuse_existing(path, a.force)?;
                let cfg = &settings.scenario;
                let topology = build_topology(cfg)?;
                let adjacency = derive_adjacency(&topology);
                let channels = draw_channels(&topology, &adjacency, cfg, &mut seeded_rng(cfg.seed).substream("channels", 0));
                write_channels(path, &channels)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for refusing to overwrite results, so usage
    // errors map to 1 instead of clap's default.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
