use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lattice_eit_cli::{stages, CliError, Context, RunConfig};

#[derive(Parser)]
#[command(name = "lattice-eit", version, about = "Voronoi lattice EIT toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "lattice-eit.toml")]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Design file -> region file and design report
    Generate,
    /// Region -> mesh with electrodes
    Mesh,
    /// Baseline frame at uniform conductivity
    Forward,
    /// Jacobian column-norm sensitivity map
    Sensitivity,
    /// Difference images of frames/ against the first frame
    Reconstruct,
    /// Damage scenario -> frames, images, indicators, summary
    Simulate,
    /// SVG renders of images and the sensitivity map
    Render,
    /// Rank the designs listed under [compare]
    CompareDesigns,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Mesh => "mesh",
            Command::Forward => "forward",
            Command::Sensitivity => "sensitivity",
            Command::Reconstruct => "reconstruct",
            Command::Simulate => "simulate",
            Command::Render => "render",
            Command::CompareDesigns => "compare-designs",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(&cli.config)?;
    let ctx = Context::new(cfg, cli.out.clone(), cli.seed, cli.quiet);
    match cli.command {
        Command::Generate => stages::generate(&ctx),
        Command::Mesh => stages::mesh(&ctx),
        Command::Forward => stages::forward(&ctx),
        Command::Sensitivity => stages::sensitivity(&ctx),
        Command::Reconstruct => stages::reconstruct(&ctx),
        Command::Simulate => stages::simulate(&ctx),
        Command::Render => stages::render(&ctx),
        Command::CompareDesigns => stages::compare(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = e.in_stage(cli.command.name());
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
