//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::bench::{self, BenchConfig, BenchError, PremiumRow};
use crate::bound::{self, robust_bound, BoundError, BoundOptions, BoundResult, Variant, VariantChoice};
use crate::certify::{
    mc_price, seed_model, verify_superreplication, CertifyError, McEstimate, ModelReport, VerificationMode, VerificationReport,
    VerifySpec, MAX_LATTICE_PATHS,
};
use crate::instances::{self, Instance};
use crate::lpcore::check_point;
use crate::market::{self, CallSurface, MarketError, Mode, ValidationReport, ValidationStatus};
use crate::payoff::{PayoffError, PayoffSpec, PreparedPayoff};
use crate::report::{emit_report, premium_csv, premium_text, to_value, Format, TableLayout};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "RA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "robust-american", version, about = "Model-free upper bounds for American options from call prices")]
#[command(after_help = "Exit codes: 0 success, 1 output not writable, 2 parse error, 3 validation error, 4 solver error, 5 certification failure.\nThreads: set RA_THREADS to fix the worker count.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output format; the default is json, csv for bench-table and text for demo.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Include wall-clock times in reports.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a call surface for static arbitrage.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ValidationMode::Weak)]
        mode: ValidationMode,
        #[arg(long, default_value_t = market::DEFAULT_TOL)]
        tol_feas: f64,
    },
    /// Solve the pricing and hedging LPs.
    Bound(ProblemArgs),
    /// Bound, then check the model and the hedge.
    Certify {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Random paths per verification mode.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Monte Carlo paths under the extracted model; 0 skips it.
        #[arg(long, default_value_t = 1_000_000)]
        paths: usize,
        /// Verification modes; all applicable ones when absent.
        #[arg(long = "mode", value_enum)]
        modes: Vec<VerificationMode>,
    },
    /// Monte Carlo price under the extracted model.
    Simulate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 1_000_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Premium tables for discounted puts under Black-Scholes calls.
    BenchTable {
        #[arg(long, value_enum, default_value_t = TableLayout::Mesh)]
        table: TableLayout,
        /// Binomial tree steps.
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// Largest maturity count to include in the mesh table.
        #[arg(long, default_value_t = 26)]
        max_maturities: usize,
    },
    /// Run a built-in worked instance end to end.
    Demo {
        #[arg(value_enum)]
        name: DemoName,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Call surface, JSON or CSV. Not used with an example payoff.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Payoff as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub payoff: String,
    #[arg(long, value_enum, default_value_t = VariantChoice::Auto)]
    pub variant: VariantChoice,
    /// Largest accepted |Φ − Ψ|; default 1e-6·(1+|Φ|).
    #[arg(long)]
    pub tol_gap: Option<f64>,
    /// Tolerance for the arbitrage checks on the input surface.
    #[arg(long, default_value_t = market::DEFAULT_TOL)]
    pub tol_feas: f64,
    /// Directory for text dumps of the two LPs.
    #[arg(long)]
    pub dump_lp: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValidationMode {
    Weak,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoName {
    Sec26,
    Sec52,
    Eg11,
}

impl DemoName {
    fn key(self) -> &'static str {
        match self {
            DemoName::Sec26 => "sec26",
            DemoName::Sec52 => "sec52",
            DemoName::Eg11 => "eg11",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Solver(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Certification(_) => 5,
        }
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::Parse(_) | MarketError::Io(_) => CliError::Parse(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PayoffError> for CliError {
    fn from(e: PayoffError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        CliError::Certification(e.to_string())
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        match e {
            BoundError::Market(m) => m.into(),
            BoundError::Dimension(_) | BoundError::NeedsZeroTail(_) => CliError::Validation(e.to_string()),
            BoundError::Certificate(c) => c.into(),
            BoundError::Solver(_) | BoundError::NotOptimal { .. } | BoundError::GapExceeded { .. } => CliError::Solver(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(_) => CliError::Validation(e.to_string()),
            BenchError::Market(m) => m.into(),
            BenchError::Payoff(p) => p.into(),
            BenchError::Bound(b) => b.into(),
        }
    }
}

/// Surface, payoff and, for built-in instances, the known answers.
struct Problem {
    surface: CallSurface,
    payoff: PreparedPayoff,
    instance: Option<Instance>,
}

fn read_payoff_spec(arg: &str) -> Result<PayoffSpec, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::Parse(format!("payoff file {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("payoff spec, line {} column {}: {e}", e.line(), e.column())))
}

fn load_problem(args: &ProblemArgs) -> Result<Problem, CliError> {
    let spec = read_payoff_spec(&args.payoff)?;
    if let PayoffSpec::Example { name } = &spec {
        if args.input.is_some() {
            return Err(CliError::Parse("an example payoff brings its own surface; drop --input".into()));
        }
        let inst = instances::by_name(name).ok_or_else(|| CliError::Parse(format!("unknown example '{name}' (expected one of {:?})", instances::NAMES)))?;
        let payoff = PreparedPayoff { grid: inst.payoff.clone(), lattice: inst.lattice.clone() };
        return Ok(Problem { surface: inst.surface.clone(), payoff, instance: Some(inst) });
    }
    let input = args.input.as_ref().ok_or_else(|| CliError::Parse("--input is required".into()))?;
    let surface = market::load_surface(input)?;
    let report = market::validate(&surface, Mode::Weak, args.tol_feas);
    if report.status == ValidationStatus::Invalid {
        let first = &report.violations[0];
        return Err(CliError::Validation(format!(
            "surface admits static arbitrage: {} violations, first {:?} at {:?} by {:e}",
            report.violations.len(),
            first.constraint,
            first.indices,
            first.magnitude
        )));
    }
    let payoff = spec.prepare(&surface.states(), surface.maturities())?;
    Ok(Problem { surface, payoff, instance: None })
}

fn solve_problem(p: &Problem, args: &ProblemArgs) -> Result<BoundResult, CliError> {
    let opts = BoundOptions { variant: args.variant, gap_tol: args.tol_gap, zero_tail_tol: Some(args.tol_feas) };
    let r = robust_bound(&p.surface, &p.payoff.grid, opts)?;
    if let Some(dir) = &args.dump_lp {
        dump_lps(dir, &p.surface, &p.payoff, r.variant)?;
    }
    Ok(r)
}

fn dump_lps(dir: &Path, surface: &CallSurface, payoff: &PreparedPayoff, variant: Variant) -> Result<(), CliError> {
    let (primal, dual) = match variant {
        Variant::Bounded => {
            let m = market::implied_marginals(surface)?;
            (bound::build_primal_bounded(&m, &payoff.grid)?.0, bound::build_dual_bounded(&m, &payoff.grid)?.0)
        }
        Variant::Extended => {
            let m = market::extended_marginals(surface)?;
            (bound::build_primal_extended(&m, &payoff.grid)?.0, bound::build_dual_extended(&m, &payoff.grid)?.0)
        }
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("pricing.lp"), primal.to_text())?;
    fs::write(dir.join("hedging.lp"), dual.to_text())?;
    Ok(())
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn emit<T: Serialize>(cli: &Cli, value: &T) -> Result<(), CliError> {
    write_out(cli.out.as_deref(), &emit_report(value, cli.format.unwrap_or_default()))
}

#[derive(Debug, Serialize)]
pub struct ModelCheck {
    pub report: ModelReport,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct MonteCarloCheck {
    #[serde(flatten)]
    pub estimate: McEstimate,
    /// |estimate − Φ| in standard errors.
    pub deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct CertificationReport {
    pub variant: Variant,
    pub phi: f64,
    pub psi: f64,
    pub gap: f64,
    pub model: ModelCheck,
    pub verification: Vec<VerificationReport>,
    pub skipped: Vec<String>,
    pub monte_carlo: Option<MonteCarloCheck>,
    pub passed: bool,
}

pub fn model_check(r: &BoundResult, payoff: &PreparedPayoff) -> ModelCheck {
    let report = r.model.check(Some(&payoff.grid));
    let tolerance = 1e-7;
    let scale = 1.0 + r.model.states.last().copied().unwrap_or(0.0);
    ModelCheck { report, tolerance, passed: report.within(tolerance, scale) && r.model.q.iter().flatten().all(|q| (0.0..=1.0).contains(q)) }
}

pub fn monte_carlo_check(r: &BoundResult, payoff: &PreparedPayoff, paths: usize, seed: u64) -> Result<MonteCarloCheck, CliError> {
    let estimate = mc_price(&r.model, &payoff.grid, paths, seed)?;
    let deviation = if estimate.stderr > 0.0 { (estimate.estimate - r.phi).abs() / estimate.stderr } else { 0.0 };
    let close = (estimate.estimate - r.phi).abs() <= 3.0 * estimate.stderr + 1e-9 * (1.0 + r.phi.abs());
    Ok(MonteCarloCheck { estimate, deviation, passed: close })
}

fn default_modes(payoff: &PreparedPayoff) -> Vec<VerificationMode> {
    let mut modes = vec![VerificationMode::LatticeExhaustive, VerificationMode::IntervalRandom, VerificationMode::FullLineRandom];
    if payoff.lattice.continuous().is_some() {
        modes.push(VerificationMode::ContinuousExerciseRandom);
    }
    modes
}

/// Runs `modes` against the hedge; oversized lattices are listed as skipped.
pub fn certify_bound(
    r: &BoundResult,
    payoff: &PreparedPayoff,
    s0: f64,
    modes: &[VerificationMode],
    trials: usize,
    seed: u64,
    paths: usize,
    timing: bool,
) -> Result<CertificationReport, CliError> {
    let model = model_check(r, payoff);
    let mut verification = Vec::new();
    let mut skipped = Vec::new();
    for (i, &mode) in modes.iter().enumerate() {
        let spec = VerifySpec { mode, trials, seed: seed.wrapping_add(i as u64), s0: Some(s0) };
        match verify_superreplication(&r.hedge, &payoff.lattice, &spec) {
            Ok(mut rep) => {
                if !timing {
                    rep.elapsed = None;
                }
                verification.push(rep);
            }
            Err(CertifyError::TooLarge(n)) => skipped.push(format!("lattice-exhaustive: {n} paths exceed {MAX_LATTICE_PATHS}")),
            Err(e) => return Err(e.into()),
        }
    }
    let monte_carlo = if paths > 0 { Some(monte_carlo_check(r, payoff, paths, seed)?) } else { None };
    let passed = model.passed && verification.iter().all(|v| v.passed) && monte_carlo.as_ref().is_none_or(|m| m.passed);
    Ok(CertificationReport { variant: r.variant, phi: r.phi, psi: r.psi, gap: r.gap, model, verification, skipped, monte_carlo, passed })
}

#[derive(Debug, Serialize)]
pub struct SimulationReport {
    pub phi: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub estimate: McEstimate,
}

#[derive(Debug, Serialize)]
pub struct PublishedHedgeCheck {
    pub feasible: bool,
    pub cost: f64,
    pub binding_rows: usize,
}

#[derive(Debug, Serialize)]
pub struct DemoReport {
    pub instance: String,
    pub phi: f64,
    pub psi: f64,
    pub gap: f64,
    pub expected: f64,
    pub matches: bool,
    pub published_hedge: Option<PublishedHedgeCheck>,
    pub seed_model_value: Option<f64>,
    pub certification: CertificationReport,
    pub passed: bool,
}

pub fn run_demo(name: &str, timing: bool) -> Result<DemoReport, CliError> {
    let inst = instances::by_name(name).ok_or_else(|| CliError::Parse(format!("unknown instance '{name}'")))?;
    let r = robust_bound(&inst.surface, &inst.payoff, BoundOptions::default())?;
    let matches = (r.phi - inst.reference).abs() <= 1e-8 && (r.psi - inst.reference).abs() <= 1e-8;
    let published_hedge = match &inst.hedge {
        Some(h) => {
            let (lp, ix) = bound::build_dual_bounded(&inst.marginals, &inst.payoff)?;
            let rep = check_point(&lp, &h.lp_point(&ix), 1e-9);
            Some(PublishedHedgeCheck { feasible: rep.feasible, cost: rep.objective, binding_rows: rep.binding_rows.len() })
        }
        None => None,
    };
    let seed_model_value = match name {
        "eg11" => Some(seed_model(&inst.marginals)?.value(&inst.payoff)),
        _ => None,
    };
    let payoff = PreparedPayoff { grid: inst.payoff.clone(), lattice: inst.lattice.clone() };
    let modes = [VerificationMode::LatticeExhaustive, VerificationMode::FullLineRandom];
    let certification = certify_bound(&r, &payoff, inst.surface.s0(), &modes, 20_000, 7, 100_000, timing)?;
    let hedge_ok = published_hedge.as_ref().is_none_or(|h| h.feasible && (h.cost - inst.reference).abs() <= 1e-8);
    let passed = matches && hedge_ok && certification.passed;
    Ok(DemoReport {
        instance: name.to_string(),
        phi: r.phi,
        psi: r.psi,
        gap: r.gap,
        expected: inst.reference,
        matches,
        published_hedge,
        seed_model_value,
        certification,
        passed,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISMATCH"
    }
}

pub fn demo_text(d: &DemoReport) -> String {
    let mut s = format!("instance {}\n", d.instance);
    if (d.phi - d.psi).abs() <= 1e-8 {
        s += &format!("Phi = Psi = {:.6}\n", d.phi);
    } else {
        s += &format!("Phi = {:.6}  Psi = {:.6}\n", d.phi, d.psi);
    }
    s += &format!("expected {:.6}: {}\n", d.expected, verdict(d.matches));
    if let Some(h) = &d.published_hedge {
        let ok = h.feasible && (h.cost - d.expected).abs() <= 1e-8;
        s += &format!("published hedge: feasible = {}, cost = {:.6}, binding rows = {}: {}\n", h.feasible, h.cost, h.binding_rows, verdict(ok));
    }
    if let Some(v) = d.seed_model_value {
        s += &format!("exercise at the first maturity (seed model): {v:.6}\n");
    }
    let c = &d.certification;
    s += &format!("model check: {}\n", verdict(c.model.passed));
    for v in &c.verification {
        s += &format!("{}: {} cases, min slack {:.3e}: {}\n", to_value(&v.mode).as_str().unwrap_or(""), v.trials, v.min_slack, verdict(v.passed));
    }
    if let Some(m) = &c.monte_carlo {
        s += &format!("monte carlo: {:.6} +- {:.6} ({} paths): {}\n", m.estimate.estimate, m.estimate.stderr, m.estimate.paths, verdict(m.passed));
    }
    s += &format!("{}\n", if d.passed { "PASS" } else { "FAIL" });
    s
}

#[derive(Debug, Serialize)]
pub struct BenchSidecar {
    pub table: String,
    pub configs: Vec<BenchConfig>,
    pub rows: Vec<PremiumRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed: Option<f64>,
}

pub fn bench_configs(table: TableLayout, steps: usize, max_maturities: usize) -> Vec<BenchConfig> {
    let configs = match table {
        TableLayout::Mesh => bench::mesh_configs().into_iter().filter(|c| c.maturities <= max_maturities).collect(),
        TableLayout::Moneyness => bench::moneyness_configs(),
    };
    configs.into_iter().map(|c| BenchConfig { steps, ..c }).collect()
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate { input, mode, tol_feas } => {
            let surface = market::load_surface(input)?;
            let mode = match mode {
                ValidationMode::Weak => Mode::Weak,
                ValidationMode::Strict => Mode::Strict,
            };
            let report: ValidationReport = market::validate(&surface, mode, *tol_feas);
            emit(cli, &report)?;
            if report.status == ValidationStatus::Invalid {
                return Err(CliError::Validation(format!("{} violations", report.violations.len())));
            }
            Ok(())
        }
        Command::Bound(args) => {
            let p = load_problem(args)?;
            let r = solve_problem(&p, args)?;
            emit(cli, &r)
        }
        Command::Certify { problem, trials, seed, paths, modes } => {
            let p = load_problem(problem)?;
            let r = solve_problem(&p, problem)?;
            let modes = if modes.is_empty() { default_modes(&p.payoff) } else { modes.clone() };
            let rep = certify_bound(&r, &p.payoff, p.surface.s0(), &modes, *trials, *seed, *paths, cli.timing)?;
            emit(cli, &rep)?;
            if !rep.passed {
                return Err(CliError::Certification("see the report for the failing check".into()));
            }
            if let Some(inst) = &p.instance {
                if (r.phi - inst.reference).abs() > 1e-8 {
                    return Err(CliError::Certification(format!("bound {} differs from the known value {}", r.phi, inst.reference)));
                }
            }
            Ok(())
        }
        Command::Simulate { problem, trials, seed } => {
            let p = load_problem(problem)?;
            let r = solve_problem(&p, problem)?;
            let estimate = mc_price(&r.model, &p.payoff.grid, *trials, *seed)?;
            emit(cli, &SimulationReport { phi: r.phi, seed: *seed, estimate })
        }
        Command::BenchTable { table, steps, max_maturities } => {
            let started = Instant::now();
            let configs = bench_configs(*table, *steps, *max_maturities);
            let rows = bench::premium_table(&configs)?;
            let text = match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => premium_csv(&rows, *table),
                Format::Pretty => premium_text(&rows, *table),
                Format::Json => emit_report(&rows, Format::Json),
            };
            write_out(cli.out.as_deref(), &text)?;
            if let Some(out) = &cli.out {
                let name = match table {
                    TableLayout::Mesh => "mesh",
                    TableLayout::Moneyness => "moneyness",
                }
                .to_string();
                let elapsed = cli.timing.then(|| started.elapsed().as_secs_f64());
                let sidecar = BenchSidecar { table: name, configs, rows, elapsed };
                fs::write(sidecar_path(out), emit_report(&sidecar, Format::Json))?;
            }
            Ok(())
        }
        Command::Demo { name } => {
            let d = run_demo(name.key(), cli.timing)?;
            let text = match cli.format {
                None | Some(Format::Pretty) => demo_text(&d),
                Some(f) => emit_report(&d, f),
            };
            write_out(cli.out.as_deref(), &text)?;
            if !d.passed {
                return Err(CliError::Certification(format!("demo {} did not reproduce its known results", d.instance)));
            }
            Ok(())
        }
    }
}

/// Sets the global thread pool size from `RA_THREADS` when it is set.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| CliError::Parse(format!("{THREADS_ENV}='{v}' is not a thread count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Parse(e.to_string()))?;
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|_| run(&cli));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
