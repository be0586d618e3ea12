use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use netflow_cli::commands::{self, CliError, Mode, RunConfig};
use netflow_cli::svg::SvgOptions;
use netflow_core::Vec2;

#[derive(Parser)]
#[command(
    name = "netflow",
    version,
    about = "Curvature flow of planar networks with triple junctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Smooth,
    Crystalline,
}

#[derive(clap::Args)]
struct RenderArgs {
    /// Length at which half-lines are drawn.
    #[arg(long, default_value_t = 1.0)]
    render_radius: f64,
    #[arg(long, default_value_t = 600.0)]
    width: f64,
    /// Draw the Wulff shapes in a corner.
    #[arg(long)]
    wulff: bool,
    /// Draw minimizing Cahn-Hoffman vectors (crystalline networks).
    #[arg(long)]
    arrows: bool,
}

impl RenderArgs {
    fn options(&self) -> SvgOptions {
        SvgOptions {
            halfline_length: self.render_radius,
            width: self.width,
            wulff_inset: self.wulff,
            arrows: self.arrows,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check topology and geometry; exit 0 iff valid.
    Validate { path: String },
    /// Crystalline curvature, Cahn-Hoffman values and stability.
    Curvature { path: String },
    /// Anisotropic length.
    Energy {
        path: String,
        /// Radius of the disc for unbounded networks.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
        center: Option<Vec<f64>>,
    },
    /// Render a network as SVG.
    Svg {
        path: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Evolve a network and write a JSON-lines trajectory.
    Evolve {
        path: String,
        #[arg(long, value_enum, default_value = "smooth")]
        mode: ModeArg,
        /// Final time.
        #[arg(long = "T", default_value_t = 0.1)]
        t_end: f64,
        /// Time step of the crystalline flow.
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 0.25)]
        dt_safety: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol_herring: f64,
        /// Largest Herring residual accepted at t = 0.
        #[arg(long, default_value_t = 1e-6)]
        tol_herring0: f64,
        /// Arclength resampling period in steps; 0 disables.
        #[arg(long, default_value_t = 10)]
        resample_every: usize,
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
        /// Compare the final heights with the Picard fixed point.
        #[arg(long)]
        picard_check: bool,
        /// Exit with status 3 when an event stops the run.
        #[arg(long)]
        fail_on_event: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Write one SVG per snapshot into this directory.
        #[arg(long)]
        svg_dir: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
}

fn open(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| {
            CliError::Write {
                path: p.display().to_string(),
                source,
            }
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = BufWriter::new(io::stdout().lock());
    let result = match cli.command {
        Command::Validate { path } => commands::validate(&path, &mut stdout),
        Command::Curvature { path } => commands::curvature(&path, &mut stdout),
        Command::Energy {
            path,
            radius,
            center,
        } => {
            let c = center.map_or(Vec2::ZERO, |v| Vec2::new(v[0], v[1]));
            commands::energy(&path, radius, c, &mut stdout)
        }
        Command::Svg { path, out, render } => {
            drop(stdout);
            let mut sink = open(&out)?;
            let r = commands::svg(&path, &render.options(), &mut *sink);
            sink.flush().map_err(|source| CliError::Write {
                path: "<output>".into(),
                source,
            })?;
            return r;
        }
        Command::Evolve {
            path,
            mode,
            t_end,
            dt,
            dt_safety,
            tol_herring,
            tol_herring0,
            resample_every,
            snapshot_every,
            picard_check,
            fail_on_event,
            out,
            svg_dir,
            render,
        } => {
            let config = RunConfig {
                mode: match mode {
                    ModeArg::Smooth => Mode::Smooth,
                    ModeArg::Crystalline => Mode::Crystalline,
                },
                t_end,
                dt,
                dt_safety,
                tol_herring,
                tol_herring0,
                resample_every,
                snapshot_every,
                picard_check,
                fail_on_event,
                svg_dir,
                svg: render.options(),
            };
            drop(stdout);
            let mut sink = open(&out)?;
            let r = commands::evolve(&path, &config, &mut *sink);
            sink.flush().map_err(|source| CliError::Write {
                path: "<output>".into(),
                source,
            })?;
            return r;
        }
    };
    stdout.flush().map_err(|source| CliError::Write {
        path: "<stdout>".into(),
        source,
    })?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(n) = std::env::var("NETFLOW_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    log::warn!("cannot size the thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring NETFLOW_THREADS={n}"),
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::Invalid) {
                println!("{}", e.to_json());
                eprintln!("netflow: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
