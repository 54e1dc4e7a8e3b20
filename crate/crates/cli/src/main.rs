//! `wqed`: disorder-averaged photon transport experiments from the command line.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};
use wqed_core::model::{has_errors, validate};
use wqed_core::{Config, Error};

use wqed_cli::run::{self, Basis, Ctx, GridSpec, Outcome, Vary};
use wqed_cli::plot;

#[derive(Parser, Debug)]
#[command(name = "wqed", version, about = "Photon transport through Lambda-type atoms randomly placed along a 1D waveguide")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file; the reference parameter set when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed for placement and shift sampling.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Disorder samples (each subcommand has its own default).
    #[arg(long)]
    samples: Option<usize>,
    /// Detuning grid "start:stop:step" (for `pulse`, the center-frequency scan).
    #[arg(long, value_parser = run::parse_grid)]
    grid: Option<GridSpec>,
    /// Also write an SVG plot next to every CSV.
    #[arg(long)]
    plot: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Disorder-averaged T, R spectrum.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Gaussian single-photon pulse transport.
    Pulse {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        omega0: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        length: f64,
        /// Also scan pulse loss over gamma_1d "start:stop:step".
        #[arg(long, value_parser = run::parse_grid)]
        coupling_grid: Option<GridSpec>,
    },
    /// Lindblad master equation: steady-state spectrum and trajectory from the ground state.
    Master {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Basis::Full)]
        basis: Basis,
        /// Time grid "start:stop:step" for the trajectory.
        #[arg(long, value_parser = run::parse_grid)]
        times: Option<GridSpec>,
    },
    /// Transmission variance over placements per detuning.
    Variance {
        #[command(flatten)]
        common: Common,
    },
    /// Second-order correlations of both output channels at a T = R detuning.
    G2 {
        #[command(flatten)]
        common: Common,
        /// Probe detuning; when omitted, a T = R crossing of the averaged spectrum on --grid.
        #[arg(long, allow_negative_numbers = true)]
        delta_star: Option<f64>,
        /// Which positive crossing to use, counting from the smallest.
        #[arg(long, default_value_t = 1)]
        crossing: usize,
        /// Average numerators and denominators separately instead of averaging g2.
        #[arg(long)]
        ratio_of_means: bool,
        /// Delay grid "start:stop:step" (default: 400 points on [0, 20]).
        #[arg(long, value_parser = run::parse_grid)]
        tau_grid: Option<GridSpec>,
    },
    /// Optical depth -ln T(0) versus atom number.
    DepthScan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40, 60])]
        n_list: Vec<usize>,
    },
    /// EIT window width versus drive strength or atom number.
    WidthScan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Vary::OmegaC)]
        vary: Vary,
        /// Values of the varied parameter (default: 1,1.5,2,2.5,3 or 5,10,20,40).
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum { .. } => "spectrum",
            Command::Pulse { .. } => "pulse",
            Command::Master { .. } => "master",
            Command::Variance { .. } => "variance",
            Command::G2 { .. } => "g2",
            Command::DepthScan { .. } => "depth-scan",
            Command::WidthScan { .. } => "width-scan",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Spectrum { common }
            | Command::Pulse { common, .. }
            | Command::Master { common, .. }
            | Command::Variance { common }
            | Command::G2 { common, .. }
            | Command::DepthScan { common, .. }
            | Command::WidthScan { common, .. } => common,
        }
    }
}

enum Failure {
    Usage(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::TooLarge(_) | Error::Parse(_) | Error::Grid(_) => Failure::Usage(e.to_string()),
            e => Failure::Solver(e),
        }
    }
}

fn load_config(common: &Common) -> Result<Config, Failure> {
    let config = match &common.config {
        Some(path) => Config::from_file(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => Config::reference(),
    };
    let diagnostics = validate(&config);
    for d in &diagnostics {
        eprintln!("{d}");
    }
    if has_errors(&diagnostics) {
        return Err(Failure::Usage("configuration rejected".into()));
    }
    Ok(config)
}

fn dispatch(command: &Command, ctx: &Ctx) -> Result<Outcome, Error> {
    let m = command.common().samples;
    let grid = command.common().grid;
    match command {
        Command::Spectrum { .. } => run::spectrum(ctx, grid, m),
        Command::Variance { .. } => run::variance(ctx, grid, m),
        Command::Pulse {
            omega0,
            sigma,
            length,
            coupling_grid,
            ..
        } => run::pulse(ctx, [*omega0, *sigma, *length], grid, *coupling_grid, m),
        Command::Master { basis, times, .. } => run::master(ctx, *basis, grid, *times, m),
        Command::G2 {
            delta_star,
            crossing,
            ratio_of_means,
            tau_grid,
            ..
        } => run::g2(ctx, grid, *tau_grid, *delta_star, *crossing, *ratio_of_means, m),
        Command::DepthScan { n_list, .. } => run::depth_scan(ctx, n_list, m),
        Command::WidthScan { vary, values, .. } => run::width_scan(ctx, *vary, values, m),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let common = cli.command.common();
    if let Some(k) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    let config = load_config(common)?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", common.out.display())))?;
    let ctx = Ctx {
        config: config.clone(),
        seed: common.seed,
        out: common.out.clone(),
    };

    let start = Instant::now();
    let outcome = dispatch(&cli.command, &ctx)?;
    let compute_seconds = start.elapsed().as_secs_f64();

    let mut outputs = Vec::new();
    for artifact in &outcome.artifacts {
        let csv_path = common.out.join(&artifact.file);
        let bytes = std::fs::read(&csv_path).map_err(Error::from)?;
        outputs.push(json!({ "file": artifact.file, "sha256": sha256_hex(&bytes) }));
        if common.plot {
            let svg = artifact.file.replace(".csv", ".svg");
            let p = &artifact.plot;
            plot::plot_csv(&csv_path, &common.out.join(&svg), p.x, &p.ys, &p.title)
                .map_err(|e| Failure::Solver(Error::Parse(format!("plotting {}: {e}", artifact.file))))?;
            outputs.push(json!({ "file": svg }));
        }
    }
    let manifest = json!({
        "command": cli.command.name(),
        "config": config,
        "seed": common.seed,
        "samples": outcome.samples,
        "versions": {
            "wqed": env!("CARGO_PKG_VERSION"),
            "manifest": 1,
        },
        "timings": {
            "compute_seconds": compute_seconds,
            "wall_seconds": start.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
        },
        "outputs": outputs,
        "results": outcome.results,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    std::fs::write(common.out.join("manifest.json"), text + "\n").map_err(Error::from)?;
    println!("{}", serde_json::to_string(&outcome.results).map_err(Error::from)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            if let Error::Sample { index, seed, .. } = &e {
                eprintln!("replay: --seed {seed} reproduces sample {index} (stream {index} of that seed)");
            }
            ExitCode::from(1)
        }
    }
}
