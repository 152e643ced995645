use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gp_passivity::config::RunConfig;
use gp_passivity::dynamics::FieldMode;
use gp_passivity::pipeline::{self, RunDir};
use gp_passivity::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_CERTIFICATION: u8 = 2;
const EXIT_AUDIT: u8 = 3;
const EXIT_MISSING: u8 = 4;

#[derive(Parser)]
#[command(name = "gp-passivity", version, about = "Passivation of unknown second-order systems with learned feed-forward")]
struct Cli {
    /// TOML configuration; defaults reproduce the Duffing benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory holding all artifacts.
    #[arg(long, global = true, default_value = "run")]
    dir: PathBuf,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of training points, overriding the config.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Certify with this Δ̄ instead of the configured value.
    #[arg(long, global = true)]
    delta_bar_override: Option<f64>,
    /// Certify with the Δ̄ computed by the `bound` step.
    #[arg(long, global = true)]
    computed_delta_bar: bool,
    /// Audit a stub model whose mean is shifted by this multiple of Δ̄.
    #[arg(long, global = true)]
    stub_offset_factor: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Open,
    Closed,
}

#[derive(Subcommand)]
enum Command {
    /// Sample noisy training pairs on a lattice over Dẋ × Dx.
    GenData,
    /// Fit the GP (hyperparameters optimized or fixed).
    Train,
    /// Information gain, Δ and the grid supremum Δ̄.
    Bound,
    /// Report the configured or synthesized gains.
    SynthGains,
    /// Build the semi-passivity certificate.
    Certify,
    /// Closed-loop runs from the configured initial states.
    Simulate,
    /// Dissipation audit of trajectories and a state grid.
    Verify,
    /// Vector field on a square grid.
    Field {
        #[arg(long, value_enum, default_value = "open")]
        mode: Mode,
        #[arg(long, default_value_t = 4.0)]
        half_width: f64,
        #[arg(long, default_value_t = 41)]
        per_axis: usize,
    },
    /// Every step in order.
    Run,
}

enum Failure {
    Error(Error),
    Certification(String),
    Audit,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.m {
        cfg.data.m = m;
    }
    if let Some(d) = cli.delta_bar_override {
        cfg.bound.delta_bar_override = d;
        cfg.bound.use_computed_delta_bar = false;
    }
    if cli.computed_delta_bar {
        cfg.bound.use_computed_delta_bar = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn certify(cfg: &RunConfig, dir: &RunDir) -> Result<(), Failure> {
    let cert = pipeline::certify(cfg, dir)?;
    println!(
        "certificate: Δ̄ = {} λ_min(Λ) = {:.6} radius = {:.6} verdict = {}",
        cert.delta_bar,
        cert.lambda_min,
        cert.radius,
        if cert.verdict { "pass" } else { "fail" }
    );
    if cert.verdict {
        Ok(())
    } else {
        Err(Failure::Certification(cert.reasons.join("; ")))
    }
}

fn verify(cfg: &RunConfig, dir: &RunDir, stub: Option<f64>) -> Result<(), Failure> {
    let v = pipeline::verify(cfg, dir, stub)?;
    println!(
        "audit: trajectories {}/{} violations, grid {}/{} violations, containment {:.6}, verdict {}",
        v.trajectories.violations,
        v.trajectories.checked,
        v.grid.violations,
        v.grid.checked,
        v.containment,
        if v.verdict { "pass" } else { "fail" }
    );
    if v.verdict {
        Ok(())
    } else {
        Err(Failure::Audit)
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let dir = RunDir::new(&cli.dir)?;
    match &cli.command {
        Command::GenData => {
            let g = pipeline::gen_data(&cfg, &dir)?;
            println!("data: {} points, lattice {:?}, thinned {}", g.data.len(), g.lattice, g.thinned);
        }
        Command::Train => {
            let (_, s) = pipeline::train(&cfg, &dir)?;
            println!("train: log marginal likelihood {:?}, residual rms {:?}", s.log_likelihood, s.residual_rms);
        }
        Command::Bound => {
            let b = pipeline::bound(&cfg, &dir)?;
            println!("bound: γ {:?} Δ {:?} Δ̄ {}", b.gammas, b.delta_vec, b.delta_bar);
        }
        Command::SynthGains => {
            let g = pipeline::synth_gains(&cfg, &dir)?;
            println!("gains: Kd {:?} Kp {:?} c {}", g.kd.as_slice(), g.kp.as_slice(), g.c);
        }
        Command::Certify => certify(&cfg, &dir)?,
        Command::Simulate => {
            let t = pipeline::simulate_all(&cfg, &dir)?;
            let exited = t.iter().filter(|t| t.exited).count();
            println!("simulate: {} trajectories, {} left the safety box", t.len(), exited);
        }
        Command::Verify => verify(&cfg, &dir, cli.stub_offset_factor)?,
        Command::Field { mode, half_width, per_axis } => {
            let mode = match mode {
                Mode::Open => FieldMode::OpenLoop,
                Mode::Closed => FieldMode::ClosedLoop,
            };
            let t = pipeline::field(&cfg, &dir, mode, *half_width, *per_axis)?;
            println!("field: {} nodes", t.rows.len());
        }
        Command::Run => {
            pipeline::gen_data(&cfg, &dir)?;
            pipeline::train(&cfg, &dir)?;
            pipeline::bound(&cfg, &dir)?;
            pipeline::synth_gains(&cfg, &dir)?;
            certify(&cfg, &dir)?;
            pipeline::simulate_all(&cfg, &dir)?;
            pipeline::field(&cfg, &dir, FieldMode::OpenLoop, 4.0, 41)?;
            pipeline::field(&cfg, &dir, FieldMode::ClosedLoop, 2.0, 41)?;
            verify(&cfg, &dir, cli.stub_offset_factor)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Certification(reason)) => {
            eprintln!("certification failed: {reason}");
            ExitCode::from(EXIT_CERTIFICATION)
        }
        Err(Failure::Audit) => {
            eprintln!("audit failed");
            ExitCode::from(EXIT_AUDIT)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::MissingArtifact(_) => EXIT_MISSING,
                _ => EXIT_CONFIG,
            })
        }
    }
}
