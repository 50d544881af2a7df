use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmimo::harness::{
    drop_statistics, emit_outputs, oracle_comparison, run_campaign, write_oracle_csv, AssignerKind, ExperimentConfig,
};
use mmimo::montecarlo::{estimation_check, mc_validate_sinr_terms, TermKind};
use mmimo::{Error, PilotAssignment, PowerAllocation, Result};

/// Exit code when a check ran to completion but did not hold.
const CHECK_FAILED: u8 = 1;

#[derive(Parser)]
#[command(
    version,
    about = "Multi-cell Massive MIMO pilot assignment and power control campaigns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write CSV/JSON outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        drops: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of random,greedy,ul_only,dl_only,joint,exhaustive.
        #[arg(long, value_delimiter = ',')]
        assigners: Option<Vec<String>>,
        #[arg(long)]
        power_control: bool,
        /// Validate closed-form terms with this many Monte Carlo draws per drop.
        #[arg(long, value_name = "N")]
        mc_validate: Option<usize>,
    },
    /// Compare closed-form SINR terms and estimation statistics with Monte Carlo.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.03)]
        rel_tol: f64,
    },
    /// Compare the joint assigner with exhaustive search on tiny instances.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(
    config: PathBuf,
    drops: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    assigners: Option<Vec<String>>,
    power_control: bool,
    mc_validate: Option<usize>,
) -> Result<u8> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(n) = drops {
        cfg.n_drops = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    if let Some(list) = assigners {
        cfg.assigners = list.iter().map(|s| AssignerKind::parse(s)).collect::<Result<_>>()?;
    }
    cfg.power_control |= power_control;
    if mc_validate.is_some() {
        cfg.mc_validation = mc_validate;
    }
    let result = run_campaign(&cfg)?;
    let files = emit_outputs(&result, &cfg.output_dir)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    for &assigner in &cfg.assigners {
        let fixed = mmimo::harness::mean_min_f(&result.drops, assigner, false);
        let pc = mmimo::harness::mean_min_f(&result.drops, assigner, true);
        match (fixed, pc) {
            (Some(f), Some(p)) => println!(
                "{:>10}: mean min_f {f:.4} fixed, {p:.4} power control",
                assigner.label()
            ),
            (Some(f), None) => println!("{:>10}: mean min_f {f:.4}", assigner.label()),
            _ => println!("{:>10}: no successful drops", assigner.label()),
        }
    }
    if let Some(first) = result.failures().next() {
        let failure = first.failure.as_ref().expect("failed drop");
        eprintln!(
            "{} of {} drops failed; first: drop {}: {}",
            result.failures().count(),
            result.drops.len(),
            first.drop,
            failure.message
        );
        return Ok(failure.exit_code as u8);
    }
    Ok(0)
}

fn validate(config: PathBuf, rel_tol: f64) -> Result<u8> {
    let cfg = ExperimentConfig::load(&config)?;
    cfg.validate()?;
    let draws = cfg.mc_validation.unwrap_or(100_000);
    let system = cfg.effective_system();
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::Io {
        path: cfg.output_dir.clone(),
        source: e,
    })?;
    let mut ok = true;
    for drop in 0..cfg.n_drops {
        let stats = drop_statistics(&cfg, drop)?;
        let assignment = PilotAssignment::identity(system.cells, system.users_per_cell, system.tau_p)?;
        let powers = PowerAllocation::fixed(&system);
        let seed = mmimo::harness::derive_seed(cfg.seed, drop, 3);
        let report = mc_validate_sinr_terms(&system, &stats, &assignment, &powers, seed, draws)?;
        let path = cfg.output_dir.join(format!("mc_validation_{drop}.csv"));
        let mut buf = Vec::new();
        report.write_csv(&mut buf).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        std::fs::write(&path, buf).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let disagree = report
            .terms
            .iter()
            .filter(|t| t.kind != TermKind::SpectralEfficiency && !t.agrees(rel_tol))
            .count();
        let se_err = report.max_rel_err(&[TermKind::SpectralEfficiency]);
        let est = estimation_check(&stats, &assignment, seed ^ 1, draws)?;
        let worst_phi = est.users.iter().map(|u| u.phi_rel_frobenius).fold(0.0, f64::max);
        let worst_nmse = est.users.iter().map(|u| u.nmse_rel_err()).fold(0.0, f64::max);
        let worst_orth = est.users.iter().map(|u| u.orthogonality).fold(0.0, f64::max);
        println!(
            "drop {drop}: {disagree} of {} terms outside tolerance, max SE error {se_err:.4}, Phi {worst_phi:.4}, NMSE {worst_nmse:.4}, orthogonality {worst_orth:.4} ({})",
            report.terms.len(),
            path.display()
        );
        ok &= disagree == 0 && se_err <= 0.02 && worst_phi <= 0.02 && worst_nmse <= 0.02 && worst_orth < 0.02;
    }
    Ok(if ok { 0 } else { CHECK_FAILED })
}

fn oracle(config: PathBuf) -> Result<u8> {
    let cfg = ExperimentConfig::load(&config)?;
    let rows = oracle_comparison(&cfg)?;
    let mut buf = Vec::new();
    write_oracle_csv(&rows, &mut buf).expect("write to memory");
    print!("{}", String::from_utf8_lossy(&buf));
    let violations = rows
        .iter()
        .filter(|r| r.exhaustive < r.joint || r.joint < r.random)
        .count();
    println!(
        "{violations} of {} drops violate exhaustive >= joint >= random",
        rows.len()
    );
    Ok(if violations == 0 { 0 } else { CHECK_FAILED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            drops,
            seed,
            out,
            assigners,
            power_control,
            mc_validate,
        } => run(config, drops, seed, out, assigners, power_control, mc_validate),
        Command::Validate { config, rel_tol } => validate(config, rel_tol),
        Command::Oracle { config } => oracle(config),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
