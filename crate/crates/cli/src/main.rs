use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use palign_core::align::BUDGET_ENV;
use palign_core::harness::{
    emit_to_string, phase_transition_experiment, sweep, verify_all, verify_cumulants, OutputFormat, PhaseSpec,
    SweepConfig, VerifyConfig, DEFAULT_VERIFY_SEED,
};
use palign_core::thresholds::{
    phase_diagram_exponent, threshold_report, LogFactor, RecoveryCriterion, ThresholdInputs, DEFAULT_C0,
};
use palign_core::{
    branch_and_bound_align, brute_force_align, penalized_align, sample_instance, Error, ModelKind, ModelParams,
    PlantedInstance, ScoreKind,
};

/// Exact alignment of partially correlated random graphs.
#[derive(Parser)]
#[command(name = "palign", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (standard output when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (verification commands default to a fixed passing seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the configured parallelism.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
            Format::Svg => OutputFormat::Svg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a planted instance as JSON.
    Sample(SampleArgs),
    /// Align the two graphs of an instance.
    Align(AlignArgs),
    /// Run a recovery sweep from a JSON sweep configuration.
    Sweep,
    /// Run a phase-transition experiment from a JSON specification.
    Phase,
    /// Evaluate thresholds and bounds at one parameter point.
    Thresholds(ThresholdArgs),
    /// Tabulate the ER threshold exponents over p = n^-a1, rho = n^-a2.
    PhaseDiagram(DiagramArgs),
    /// Compare closed-form cumulants against their oracles.
    VerifyCumulants(VerifyArgs),
    /// Run the whole verification suite.
    VerifyAll(VerifyArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// `er` or `gaussian`.
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    /// Vertices per graph.
    #[arg(long)]
    n: usize,
    /// Planted domain size.
    #[arg(long)]
    m: usize,
    /// Edge probability (ER only).
    #[arg(long)]
    p: Option<f64>,
    /// Correlation on the planted pairs.
    #[arg(long)]
    rho: f64,
}

#[derive(Args)]
struct AlignArgs {
    /// Instance JSON written by `sample`.
    #[arg(long)]
    instance: PathBuf,
    /// `product`, `sqdiff` or `mle` (defaults by model and rho).
    #[arg(long, value_parser = parse_score)]
    score: Option<ScoreKind>,
    /// Domain size (defaults to the planted size).
    #[arg(long)]
    m: Option<usize>,
    /// Use the size-penalized estimator with this penalty.
    #[arg(long, conflicts_with = "m")]
    penalty: Option<f64>,
    /// Enumerate every injection instead of branch and bound.
    #[arg(long)]
    brute_force: bool,
}

#[derive(Args)]
struct ThresholdArgs {
    /// `er` or `gaussian`.
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    /// Vertices per graph (real, so 1e6 is accepted).
    #[arg(long)]
    n: f64,
    /// Planted domain size.
    #[arg(long)]
    m: f64,
    /// Edge probability (ER only).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    rho: f64,
    /// Partial-recovery fraction.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Hanson-Wright constant.
    #[arg(long, default_value_t = DEFAULT_C0)]
    c0: f64,
    /// Gaussian threshold constant (defaults to the stitched regime constant).
    #[arg(long)]
    c2: Option<f64>,
}

#[derive(Args)]
struct DiagramArgs {
    /// Grid points per axis, strictly inside (0, 1).
    #[arg(long, default_value_t = 19)]
    steps: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Smaller sample sizes.
    #[arg(long)]
    quick: bool,
    /// Perturbation added to the two-cycle cumulant (fault injection).
    #[arg(long, allow_hyphen_values = true)]
    perturb_c2: Option<f64>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_score(s: &str) -> Result<ScoreKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source }.into())
}

fn write_out(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })?,
        None => std::io::stdout().write_all(text.as_bytes()).context("writing to standard output")?,
    }
    Ok(())
}

fn require_config(g: &Global) -> anyhow::Result<String> {
    let path = g.config.as_deref().ok_or_else(|| Usage("this command needs --config FILE".into()))?;
    read_file(path)
}

/// A usage problem detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Outcome of a command that completed: success, or a failed verification.
enum Status {
    Ok,
    VerificationFailed,
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    let g = &cli.global;
    let seed = g.seed.unwrap_or(0);
    let format = g.format.map(OutputFormat::from);
    match cli.cmd {
        Command::Sample(a) => {
            let params = ModelParams { n: a.n, m: a.m, p: a.p, rho: a.rho, model: a.model };
            let inst = sample_instance(&params, seed)?;
            write_out(g.out.as_deref(), &(inst.to_json() + "\n"))?;
        }
        Command::Align(a) => {
            let inst = PlantedInstance::from_json(&read_file(&a.instance)?)?;
            let score = a.score.unwrap_or_else(|| palign_core::harness::default_score(inst.params.model, inst.params.rho));
            let rho = Some(inst.params.rho);
            let budget = palign_core::align::budget_from_env();
            let res = match (a.penalty, a.brute_force) {
                (Some(l), _) => penalized_align(&inst.g1, &inst.g2, l, score, rho, inst.params.n, budget)?,
                (None, bf) => {
                    let m = a.m.unwrap_or(inst.params.m);
                    let f = if bf { brute_force_align } else { branch_and_bound_align };
                    f(&inst.g1, &inst.g2, m, score, rho, budget)?
                }
            };
            let res = res.with_truth(&inst.truth)?;
            write_out(g.out.as_deref(), &(serde_json::to_string_pretty(&res)? + "\n"))?;
        }
        Command::Sweep => {
            let mut cfg = SweepConfig::from_json(&require_config(g)?)?;
            if let Some(j) = g.jobs {
                cfg.parallelism = Some(j as usize);
            }
            if let Some(s) = g.seed {
                cfg.master_seed = s;
            }
            let rows = sweep(&cfg)?;
            write_out(g.out.as_deref(), &emit_to_string(&rows, format.unwrap_or(OutputFormat::Csv))?)?;
        }
        Command::Phase => {
            let mut spec: PhaseSpec = serde_json::from_str(&require_config(g)?)?;
            if let Some(j) = g.jobs {
                spec.parallelism = Some(j as usize);
            }
            if let Some(s) = g.seed {
                spec.seed = s;
            }
            spec.to_sweep().validate()?;
            let res = phase_transition_experiment(&spec)?;
            write_out(g.out.as_deref(), &emit_to_string(&res.rows, format.unwrap_or(OutputFormat::Csv))?)?;
            for c in &res.crossings {
                eprintln!(
                    "rho={} exact 50% crossing m={} partial 50% crossing m={}",
                    c.rho,
                    c.exact_m.map_or("none".into(), |m| format!("{m:.3}")),
                    c.partial_m.map_or("none".into(), |m| format!("{m:.3}")),
                );
            }
            eprintln!(
                "exact crossing nonincreasing in rho: {}; partial: {}",
                res.exact_crossing_nonincreasing(),
                res.partial_crossing_nonincreasing()
            );
        }
        Command::Thresholds(a) => {
            let rep = threshold_report(&ThresholdInputs {
                model: a.model,
                n: a.n,
                m: a.m,
                p: a.p,
                rho: a.rho,
                delta: a.delta,
                c0: a.c0,
                c2: a.c2,
            })?;
            write_out(g.out.as_deref(), &(serde_json::to_string_pretty(&rep)? + "\n"))?;
        }
        Command::PhaseDiagram(a) => {
            if a.steps == 0 {
                return Err(Usage("--steps must be at least 1".into()).into());
            }
            let fr = palign_core::harness::fmt_real;
            let log_n = |lf| matches!(lf, LogFactor::LogN);
            let mut text = String::from("a1,a2,a3_partial,a3_exact,partial_log_n,exact_log_n\r\n");
            for i in 1..=a.steps {
                for j in 1..=a.steps {
                    let (a1, a2) = (i as f64 / (a.steps + 1) as f64, j as f64 / (a.steps + 1) as f64);
                    let (ap, lp) = phase_diagram_exponent(a1, a2, RecoveryCriterion::Partial)?;
                    let (ae, le) = phase_diagram_exponent(a1, a2, RecoveryCriterion::Exact)?;
                    text.push_str(&format!(
                        "{},{},{},{},{},{}\r\n",
                        fr(a1),
                        fr(a2),
                        fr(ap),
                        fr(ae),
                        log_n(lp),
                        log_n(le)
                    ));
                }
            }
            write_out(g.out.as_deref(), &text)?;
        }
        Command::VerifyCumulants(a) => {
            let cfg = verify_config(g, &a)?;
            let (csv, ok) = verify_cumulants(&cfg, g.seed.unwrap_or(DEFAULT_VERIFY_SEED))?;
            write_out(g.out.as_deref(), &csv)?;
            if !ok {
                eprintln!("cumulant oracle comparison failed");
                return Ok(Status::VerificationFailed);
            }
        }
        Command::VerifyAll(a) => {
            let cfg = verify_config(g, &a)?;
            let rep = verify_all(g.seed.unwrap_or(DEFAULT_VERIFY_SEED), &cfg)?;
            for w in &rep.warnings {
                warn!("{w}");
            }
            for o in &rep.outcomes {
                eprintln!("{:<34} {:>8} checks  {}", o.name, o.checks, if o.passed { "pass" } else { "FAIL" });
                for f in &o.failures {
                    eprintln!("    {f}");
                }
            }
            write_out(g.out.as_deref(), &(serde_json::to_string_pretty(&rep)? + "\n"))?;
            if !rep.passed() {
                eprintln!("failed checks: {}", rep.failed_names().join(", "));
                return Ok(Status::VerificationFailed);
            }
        }
    }
    Ok(Status::Ok)
}

fn verify_config(g: &Global, a: &VerifyArgs) -> anyhow::Result<VerifyConfig> {
    let mut cfg = match (&g.config, a.quick) {
        (Some(_), _) => serde_json::from_str(&require_config(g)?).map_err(Error::from)?,
        (None, true) => VerifyConfig::quick(),
        (None, false) => VerifyConfig::default(),
    };
    if let Some(d) = a.perturb_c2 {
        cfg.perturb_c2 = d;
    }
    Ok(cfg)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Verification(_)) => 1,
        Some(Error::Domain(_) | Error::Parameter(_) | Error::Json(_) | Error::Csv(_)) => 2,
        Some(Error::Budget { .. } | Error::Resource(_) | Error::Io { .. }) => 3,
        None => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(b) = std::env::var(BUDGET_ENV) {
        if b.trim().parse::<f64>().map_or(true, |x| x < 1.0) {
            let e = anyhow!(Usage(format!("{BUDGET_ENV}={b} is not a positive number")));
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::VerificationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
