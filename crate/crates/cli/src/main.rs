use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dynamo_forge_cli::commands::{self, Outcome};
use dynamo_forge_cli::config::RunConfig;
use dynamo_forge_cli::output::OutputDir;
use dynamo_forge_cli::{exit_code, UsageError, EXIT_FAILURE, EXIT_OK};

#[derive(Parser, Debug)]
#[command(name = "dynamo-forge", version, about = "Kinematic dynamo simulation, verification and growth control on the 3-torus")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON configuration file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (default: all available cores).
    #[arg(long, global = true, env = "DYNAMO_FORGE_THREADS")]
    threads: Option<usize>,
    /// Run diffusivities above the certified kappa0.
    #[arg(long, global = true)]
    allow_uncertified: bool,
    /// Fourier resolution N.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Translation grid points per axis (default 2N+1).
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Control amplitude R.
    #[arg(long, global = true)]
    r: Option<f64>,
    /// Comma-separated diffusivities.
    #[arg(long, global = true, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    budget: Option<f64>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// certificate.json from scan-kappa0.
    #[arg(long, global = true)]
    certificate: Option<PathBuf>,
    /// Initial field as field JSON (default sin(2πx) e_z).
    #[arg(long, global = true)]
    initial_field: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the verification suite (JSON and JUnit XML reports).
    Verify {
        /// Replace alpha in the closed-form matrices (fault injection).
        #[arg(long, hide = true)]
        corrupt_alpha: Option<f64>,
    },
    /// Single-diffusivity growth run.
    Grow {
        #[arg(long)]
        kappa: f64,
    },
    /// Multi-diffusivity schedule under one flow.
    Schedule {
        /// Re-simulate the exported flow and compare the final fields.
        #[arg(long)]
        replay_check: bool,
    },
    /// Certify the diffusivity range of the controls.
    #[command(name = "scan-kappa0")]
    ScanKappa0 {
        /// Comma-separated κ grid (overrides the config's kappa0_grid).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Re-simulate an exported flow.
    Replay {
        #[arg(long)]
        flow: PathBuf,
        /// final_fields.json to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Verify { .. } => "verify",
            Command::Grow { .. } => "grow",
            Command::Schedule { .. } => "schedule",
            Command::ScanKappa0 { .. } => "scan-kappa0",
            Command::Replay { .. } => "replay",
        }
    }
}

fn build_config(g: &Global, cmd: &Command) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = g.n {
        cfg.n = v;
    }
    if let Some(v) = g.dt {
        cfg.dt = v;
    }
    if g.m.is_some() {
        cfg.m = g.m;
    }
    if let Some(v) = g.r {
        cfg.r = v;
    }
    if let Some(v) = &g.kappas {
        cfg.kappas = v.clone();
    }
    if let Some(v) = g.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = g.budget {
        cfg.budget = v;
    }
    if let Some(v) = g.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if g.certificate.is_some() {
        cfg.certificate = g.certificate.clone();
    }
    if g.initial_field.is_some() {
        cfg.initial_field = g.initial_field.clone();
    }
    match cmd {
        Command::Verify { corrupt_alpha: Some(a) } => cfg.verify.corrupt_alpha = Some(*a),
        Command::ScanKappa0 { grid: Some(grid) } => cfg.kappa0_grid = grid.clone(),
        _ => {}
    }
    cfg.output = Some(g.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(cmd.name())));
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if threads == Some(0) {
        return Err(UsageError("--threads must be at least 1".into()).into());
    }
    #[cfg(feature = "parallel")]
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    if threads.is_some_and(|t| t > 1) {
        eprintln!("note: built without the `parallel` feature; running sequentially");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    configure_threads(cli.global.threads)?;
    let cfg = build_config(&cli.global, &cli.command)?;
    let out = OutputDir::prepare(cfg.output.as_deref().expect("set by build_config"), cli.global.force)?;
    let allow = cli.global.allow_uncertified;
    match &cli.command {
        Command::Verify { .. } => commands::verify(&cfg, &out, |c| eprintln!("{}", c.line())),
        Command::Grow { kappa } => commands::grow(&cfg, *kappa, allow, &out),
        Command::Schedule { replay_check } => {
            let (outcome, report) = commands::schedule(&cfg, allow, *replay_check, &out)?;
            print!("{}", commands::crossing_table(&report));
            Ok(outcome)
        }
        Command::ScanKappa0 { .. } => {
            let (outcome, cert) = commands::scan_kappa0(&cfg, &out)?;
            println!("{:>12}  {:>12}  {:>12}  {:>12}  pass", "kappa", "gap", "lambda1", "margin");
            for r in &cert.rows {
                println!("{:>12e}  {:>12.6e}  {:>12.6}  {:>12.6e}  {}", r.kappa, r.gap, r.lambda1, r.margin, r.pass);
            }
            Ok(outcome)
        }
        Command::Replay { flow, compare } => commands::replay(&cfg, flow, compare.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let started = Instant::now();
    let code = match run(cli) {
        Ok(o) => {
            println!("{name}: {} ({:.1} s)", o.summary, started.elapsed().as_secs_f64());
            if o.ok {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
