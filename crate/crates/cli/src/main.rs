use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use cpreduce::harness::{self, Command, FamilyKind, GroupKind, RunConfig};

#[derive(Parser)]
#[command(name = "cpreduce", version, about = "Complete-positivity checks for reduced system dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a family and Haar unitaries, check the reduced dynamics is CP
    VerifyFamily(Common),
    /// Report dim V, dim V₀ and consistency of V under the chosen unitary set
    Consistency(Common),
    /// Check the CP implication for consistent subspaces with perturbed assignments
    Theorem1(Common),
    /// Data-processing sweep over Markov states, plus a GHZ counterexample search
    Dpi(Common),
    /// Worked examples: 1 (swap) or 2 (local unitaries)
    Demo {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
        #[command(flatten)]
        common: Common,
    },
    /// Search for unitaries exposing a non-CP Hermitian assignment
    Witness(Common),
}

#[derive(Args)]
struct Common {
    /// factorized, classical-quantum, direct-sum, mixed-direct-sum, markov-blocks, steered, kernel-extended
    #[arg(long, value_parser = parse_family)]
    family: Option<FamilyKind>,
    /// System dimension; defaults to the block layout, else 2
    #[arg(long)]
    ds: Option<usize>,
    /// Environment dimension
    #[arg(long, default_value_t = 2)]
    de: usize,
    /// Ancilla dimension (steered family and dpi)
    #[arg(long, default_value_t = 2)]
    da: usize,
    /// Block layout of H_S, e.g. "1x2,2x1"
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, env = "CPREDUCE_SEED", default_value_t = 0)]
    seed: u64,
    /// Equality tolerance for residuals and channel distances
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Relative tolerance on the smallest Choi eigenvalue
    #[arg(long, default_value_t = 1e-9)]
    psd_tol: f64,
    /// all, local, swap or file
    #[arg(long, default_value = "all", value_parser = parse_group)]
    g: GroupKind,
    /// JSON list of unitaries for --g file
    #[arg(long)]
    g_file: Option<PathBuf>,
    /// Draws from G per trial for infinite sets
    #[arg(long, default_value_t = 10)]
    g_samples: usize,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include unitaries and Choi matrices in trial records
    #[arg(long)]
    verbose: bool,
    /// Record wall time in the summary (makes reports non-reproducible)
    #[arg(long)]
    timing: bool,
}

fn parse_family(s: &str) -> Result<FamilyKind, String> {
    s.parse().map_err(|e: cpreduce::Error| e.to_string())
}

fn parse_group(s: &str) -> Result<GroupKind, String> {
    s.parse().map_err(|e: cpreduce::Error| e.to_string())
}

fn build_config(command: Command, example: Option<u8>, c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::new(command);
    cfg.family = c.family;
    cfg.example = example;
    cfg.d_a = c.da;
    cfg.d_s = c.ds;
    cfg.d_e = c.de;
    cfg.blocks = c.blocks.clone();
    cfg.trials = c.trials;
    cfg.seed = c.seed;
    cfg.eq_tol = c.tol;
    cfg.psd_tol = c.psd_tol;
    cfg.g = c.g;
    cfg.g_samples = c.g_samples;
    cfg.out = c.out.as_ref().map(|p| p.display().to_string());
    cfg.verbose = c.verbose;
    cfg.timing = c.timing;
    if let Some(path) = &c.g_file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.g_list = Some(harness::parse_unitary_file(&text)?);
        cfg.g_file = Some(path.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, example, common) = match &cli.command {
        Cmd::VerifyFamily(c) => (Command::VerifyFamily, None, c),
        Cmd::Consistency(c) => (Command::Consistency, None, c),
        Cmd::Theorem1(c) => (Command::Theorem1, None, c),
        Cmd::Dpi(c) => (Command::Dpi, None, c),
        Cmd::Demo { example, common } => (Command::Demo, Some(*example), common),
        Cmd::Witness(c) => (Command::Witness, None, c),
    };
    let cfg = match build_config(command, example, common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg, common.out.as_ref()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn execute(cfg: &RunConfig, out: Option<&PathBuf>) -> anyhow::Result<bool> {
    let report = harness::run(cfg)?;
    let text = report.to_jsonl()?;
    match out {
        Some(path) => fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    let s = &report.summary;
    eprintln!(
        "{}: {}/{} trials passed, worst eigenvalue {}, worst residual {:.3e} -> {}",
        report.command,
        s.pass_count,
        s.trials,
        s.worst_eigenvalue.map_or("n/a".to_string(), |v| format!("{v:.3e}")),
        s.worst_residual,
        if s.pass { "PASS" } else { "FAIL" }
    );
    Ok(s.pass)
}
