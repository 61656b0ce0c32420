//! `urbanwave`: dynamic simulations, coverage heatmaps and benchmarks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use urbanwave::config::SimulationConfig;
use urbanwave::geometry::Scene;
use urbanwave::io;
use urbanwave::sim::{self, BenchMode};
use urbanwave::Error;

#[derive(Parser)]
#[command(name = "urbanwave", version, about = "Ray-traced radio propagation for urban scenes with moving receivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SceneArgs {
    /// key = value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Wavefront OBJ scene
    #[arg(long)]
    scene: PathBuf,
    /// TOML material sidecar
    #[arg(long)]
    materials: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Trace receivers along their trajectories and write a power trace.
    Simulate {
        #[command(flatten)]
        scene: SceneArgs,
        /// SUMO FCD (.xml) or trajectory CSV
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Received power over a grid of static receivers at one instant.
    Heatmap {
        #[command(flatten)]
        scene: SceneArgs,
        /// Scene time, s
        #[arg(long)]
        time: f64,
        /// x0,y0,x1,y1 in metres
        #[arg(long, value_parser = parse_region)]
        region: [f64; 4],
        /// Cell size, m
        #[arg(long, default_value_t = 5.0)]
        cell: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scaling and static-versus-dynamic benchmarks.
    Bench {
        #[command(flatten)]
        scene: SceneArgs,
        /// area, objects or staticdynamic
        #[arg(long, value_parser = parse_mode)]
        mode: BenchMode,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_region(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected x0,y0,x1,y1, got `{s}`"));
    }
    let mut r = [0.0; 4];
    for (slot, p) in r.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
    }
    Ok(r)
}

fn parse_mode(s: &str) -> Result<BenchMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Why a command stopped, which decides the exit code.
enum Failure {
    Input(Error),
    Runtime(Error),
}

impl Failure {
    fn classify(e: Error) -> Failure {
        if e.is_input_error() {
            Failure::Input(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

/// Loading inputs can only fail on bad input.
fn input<T>(r: urbanwave::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Input)
}

/// Writing results fails for reasons outside the inputs.
fn output<T>(r: urbanwave::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn load(args: &SceneArgs) -> Result<(SimulationConfig, Scene), Failure> {
    let mut config = input(SimulationConfig::load(&args.config))?;
    input(config.apply_env())?;
    let scene = input(io::load_scene(&args.scene, &args.materials))?;
    info!(
        "scene {}: {} objects, {} triangles",
        args.scene.display(),
        scene.objects().len(),
        scene.triangle_count()
    );
    Ok((config, scene))
}

fn simulate(args: &SceneArgs, trajectories: &Path, out: &Path) -> Result<(), Failure> {
    let (config, base) = load(args)?;
    let receivers = input(io::load_trajectories(trajectories, config.rx_height_m))?;
    let world = input(sim::world_from_config(&base, &config))?;
    let run = sim::simulate(&config, world, receivers).map_err(Failure::classify)?;
    output(io::write_power_trace(&run.rows, out))?;
    output(io::write_json(&run.summary, &io::summary_path(out)))?;
    info!(
        "{} rows, {} segments, cache hit rate {:.3}, {:.3} s",
        run.summary.rows, run.summary.segments, run.summary.cache_hit_rate, run.summary.wall_time_s
    );
    Ok(())
}

fn heatmap(args: &SceneArgs, t: f64, region: [f64; 4], cell: f64, out: &Path) -> Result<(), Failure> {
    let (config, base) = load(args)?;
    let world = input(sim::world_from_config(&base, &config))?;
    let grid = sim::heatmap(&config, world, t, region, cell).map_err(Failure::classify)?;
    output(io::write_heatmap(&grid, out))?;
    info!("{} x {} cells at t = {t} s", grid.nx, grid.ny);
    Ok(())
}

fn bench(args: &SceneArgs, mode: BenchMode, out: &Path) -> Result<(), Failure> {
    let (config, base) = load(args)?;
    let (rows, summary) = sim::bench(&config, &base, mode).map_err(Failure::classify)?;
    output(io::write_bench_report(&rows, out))?;
    output(io::write_json(&summary, &io::summary_path(out)))?;
    info!("{} runs in {:.3} s", summary.runs, summary.total_wall_time_s);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate { scene, trajectories, out } => simulate(scene, trajectories, out),
        Command::Heatmap {
            scene,
            time,
            region,
            cell,
            out,
        } => heatmap(scene, *time, *region, *cell, out),
        Command::Bench { scene, mode, out } => bench(scene, *mode, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("urbanwave: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("urbanwave: {e}");
            ExitCode::from(2)
        }
    }
}
