use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cbf_invert::coordinator::MethodKind;
use cbf_invert::harness::{
    find_sweep_case, generate_scenario, newton_region_sweep, run_certification, run_monte_carlo, run_rollout,
    write_monte_carlo_csv, write_sweep_csv, write_trace, HarnessConfig, MethodConfig, Outcome,
};

#[derive(Parser)]
#[command(name = "cbf-invert", version, about = "Safety-filtered team rollouts and hidden-obstacle inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded rollout and write a line-delimited trace.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run seeded rollouts for each method configuration and write per-rollout metrics.
    Montecarlo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        rollouts: Option<usize>,
        /// Comma-separated list, e.g. cbf-kkt,cbf-im,circle-kkt,circle-im
        #[arg(long)]
        matrix: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep Newton and Input Matching initial guesses over a grid.
    SweepNewton {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Lower corner `x,y`; defaults to the learner position minus the configured half-width.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        grid_min: Option<[f64; 2]>,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        grid_max: Option<[f64; 2]>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the decentralized safety premises and margins on seeded rollouts.
    Certify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
    },
}

fn parse_point(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{s}`"));
    }
    let x = parts[0].parse::<f64>().map_err(|e| format!("bad x in `{s}`: {e}"))?;
    let y = parts[1].parse::<f64>().map_err(|e| format!("bad y in `{s}`: {e}"))?;
    Ok([x, y])
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig> {
    match path {
        Some(p) => HarnessConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(HarnessConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn simulate(config: Option<&Path>, seed: u64, trace: &Path) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let spec = generate_scenario(seed, &cfg.scenario)?;
    let world = run_rollout(&spec)?;
    let mut out = create(trace)?;
    write_trace(&world, &mut out)?;
    out.flush()?;
    match world.halted() {
        Some(reason) => eprintln!("rollout halted at t = {}: {reason}", world.time()),
        None => eprintln!("rollout finished after {} steps (arrived: {})", world.time(), spec.arrived(&world)),
    }
    Ok(ExitCode::SUCCESS)
}

fn montecarlo(config: Option<&Path>, rollouts: Option<usize>, matrix: Option<&str>, out: &Path) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let matrix = match matrix {
        Some(m) => MethodConfig::parse_list(m)?,
        None => cfg.matrix()?,
    };
    let rollouts = rollouts.unwrap_or(cfg.montecarlo.rollouts);
    let reports = run_monte_carlo(&cfg, rollouts, &matrix)?;
    let mut w = create(out)?;
    write_monte_carlo_csv(&reports, &mut w)?;
    w.flush()?;
    for r in &reports {
        eprintln!(
            "{:<11} collisions {:.2} ± {:.2}  ghosts {:.2} ± {:.2}  error {:.4} m  discovery {:.2}  failed {}",
            r.label,
            r.collisions.mean,
            r.collisions.std,
            r.ghosts.mean,
            r.ghosts.std,
            r.inference_error.mean,
            r.discovery_rate,
            r.failed_rollouts
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(
    config: Option<&Path>,
    grid_min: Option<[f64; 2]>,
    grid_max: Option<[f64; 2]>,
    resolution: Option<usize>,
    out: &Path,
) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let case = find_sweep_case(&cfg.scenario, cfg.sweep.seed, 50)?;
    let half = cfg.sweep.half_width_factor * cfg.scenario.r;
    let lo = grid_min.unwrap_or([case.learner[0] - half, case.learner[1] - half]);
    let hi = grid_max.unwrap_or([case.learner[0] + half, case.learner[1] + half]);
    if !(lo[0] < hi[0] && lo[1] < hi[1]) {
        bail!("grid-min must be below grid-max in both coordinates");
    }
    let n = resolution.unwrap_or(cfg.sweep.resolution);
    if n == 0 {
        bail!("resolution must be positive");
    }
    let report = newton_region_sweep(&case, lo, hi, n)?;
    let mut w = create(out)?;
    write_sweep_csv(&report, &mut w)?;
    w.flush()?;
    eprintln!("case: seed {} step {} obstacle {:?}", case.seed, case.t, case.theta.as_slice());
    for (name, m) in [("newton", MethodKind::Kkt), ("input_matching", MethodKind::InputMatching)] {
        eprintln!(
            "{name:<15} true {:.3}  wrong {:.3}  diverged {:.3}",
            report.fraction(m, Outcome::ConvergedTrue),
            report.fraction(m, Outcome::ConvergedWrong),
            report.fraction(m, Outcome::Diverged)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn certify(config: Option<&Path>, seeds: Option<usize>) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let seeds = seeds.unwrap_or(cfg.certificate.seeds);
    let reports = run_certification(&cfg, seeds)?;
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for (seed, rep) in &reports {
        worst = worst.min(rep.min_margin);
        if !rep.premises_hold() {
            println!("seed {seed}: premises violated ({rep:?}); no safety claim");
        }
        if rep.min_margin < 0.0 || rep.halted {
            ok = false;
            println!("seed {seed}: margin {:.6} halted {}", rep.min_margin, rep.halted);
        }
    }
    println!("{} seeds, minimum margin {worst:.6} m: {}", reports.len(), if ok { "PASS" } else { "FAIL" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, seed, trace } => simulate(config.as_deref(), *seed, trace),
        Command::Montecarlo { config, rollouts, matrix, out } => {
            montecarlo(config.as_deref(), *rollouts, matrix.as_deref(), out)
        }
        Command::SweepNewton { config, grid_min, grid_max, resolution, out } => {
            sweep(config.as_deref(), *grid_min, *grid_max, *resolution, out)
        }
        Command::Certify { config, seeds } => certify(config.as_deref(), *seeds),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
