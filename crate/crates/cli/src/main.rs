//! `heis-kakeya`: runs the registered experiments.
//!
//! Exit status: 0 when every criterion passes, 1 when a criterion fails,
//! 2 on invalid input or a runtime error.

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use heis_kakeya::experiments::{
    csv_schemas, parse_deltas, registry_listing, run, ExperimentConfig, ExperimentResult, Overrides,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "heis-kakeya", version, about = "Heisenberg Kakeya experiments: tube overlaps, maximal functions, dimension estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scales: comma-separated numbers, `2^-k`, or a range `2^-a..2^-b`
    #[arg(long, global = true)]
    deltas: Option<String>,

    /// Base seed of every random stream
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Grid refinement factor (1 = coarsest admissible grid)
    #[arg(long, global = true, default_value_t = 1)]
    refine: u32,

    /// Directory receiving <scenario>.csv and <scenario>.json
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// One-sided slack on the exponent of upper-bound scenarios
    #[arg(long = "epsilon-slack", global = true)]
    epsilon_slack: Option<f64>,

    /// Worker threads (0 = all cores); outputs do not depend on it
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Lebesgue exponent of maxop-pnorm
    #[arg(long, global = true)]
    p: Option<f64>,

    /// key = value file; its settings override the flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario
    Run { scenario: String },
    /// Run the lemma-level verification suite
    Verify,
    /// List the registered scenarios
    List,
}

fn help_footer() -> String {
    format!(
        "Config file grammar: one `key = value` per line; `#` starts a comment line.\n\
         Keys: scenario, deltas, seed, refine, out, epsilon_slack, threads, p, cell_budget.\n\
         File settings override command-line flags.\n\n\
         CSV columns per scenario (<out>/<scenario>.csv):\n{}\n\
         The JSON summary <out>/<scenario>.json holds {{scenario, fit, pass, citations, criterion, criterion_text, checks, config}}.\n\
         Exit status: 0 if every criterion passes, 1 if one fails, 2 on error.",
        csv_schemas()
    )
}

fn build_config(cli: &Cli, scenario: &str) -> Result<(ExperimentConfig, usize), String> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            Overrides::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => Overrides::default(),
    };
    let scenario = file.scenario.clone().unwrap_or_else(|| scenario.to_string());
    let mut cfg = ExperimentConfig::new(&scenario).map_err(|e| e.to_string())?;
    if let Some(d) = &cli.deltas {
        cfg.delta_list = parse_deltas(d).map_err(|e| e.to_string())?;
    }
    cfg.seed = cli.seed;
    cfg.grid_refinement = cli.refine;
    cfg.output_path = Some(cli.out.clone());
    cfg.epsilon_slack = cli.epsilon_slack;
    if let Some(p) = cli.p {
        cfg.p = p;
    }
    file.apply(&mut cfg);
    cfg.validate().map_err(|e| e.to_string())?;
    Ok((cfg, file.threads.unwrap_or(cli.threads)))
}

fn report(result: &ExperimentResult) {
    for r in &result.records {
        eprintln!(
            "  delta = {:<12} value = {:.6e}  card = {:<8} ({:.2} s)",
            r.delta, r.value, r.card, r.runtime
        );
    }
    if let Some(f) = &result.fit {
        eprintln!("  slope = {:.4}, R^2 = {:.5}", f.slope, f.r_squared);
    }
    for c in result.checks.iter().filter(|c| !c.holds()) {
        eprintln!("  failed check {}: {} vs bound {}", c.name, c.value, c.bound);
    }
    eprintln!(
        "  {}: {} ({})",
        result.scenario,
        if result.pass { "PASS" } else { "FAIL" },
        result.criterion.describe()
    );
    println!("{}", result.summary_json());
}

fn execute(cli: &Cli, scenario: &str) -> Result<bool, String> {
    let (cfg, threads) = build_config(cli, scenario)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    eprintln!("running {} ...", cfg.scenario);
    let result = pool.install(|| run(&cfg)).map_err(|e| e.to_string())?;
    report(&result);
    Ok(result.pass)
}

fn main() -> ExitCode {
    let cmd = Cli::command().after_help(help_footer());
    let matches = cmd.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let outcome = match &cli.command {
        Command::List => {
            print!("{}", registry_listing());
            Ok(true)
        }
        Command::Verify => execute(&cli, "verify-suite"),
        Command::Run { scenario } => execute(&cli, scenario),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
