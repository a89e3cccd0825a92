//! Command-line front end. Every command is deterministic given `--seed`;
//! `--workers` only changes how fast results arrive.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::circuit::{Circuit, Gate, PauliObservable};
use crate::cutfinder::{self, CutError, CutMode, CutPlan, EdaConfig};
use crate::market::{self, BruteForceMaxCut, EdaMaxCut, MarketError, MarketGraph, MaxCutSolver, QaoaMaxCut, RandomMaxCut, SyntheticMarket};
use crate::qaoa::{self, CutStrategy, OptimizerConfig, QaoaError, WeightedGraph};
use crate::qpd::DEFAULT_COMBINATION_CAP;
use crate::reconstruct::{self, ExecutionBackend, ReconstructError};
use crate::sim::{ReadoutNoise, SimError, Simulator};

pub const COMBO_CAP_ENV: &str = "QUANTCUT_COMBO_CAP";

pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NO_CUT_NEEDED: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "quantcut", version, about = "Automatic gate cutting and QAOA portfolio bisection")]
pub struct Cli {
    /// Worker threads for subcircuit execution (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find gate cuts so every subcircuit fits in --max-qubits.
    Cut(CutArgs),
    /// Expectation of an observable, uncut or through a cut plan.
    Run(RunArgs),
    /// Optimize a QAOA Max-Cut ansatz on a graph.
    Qaoa(QaoaArgs),
    /// Build the thresholded market graph from a price CSV.
    Market(MarketArgs),
    /// Split a graph into sub-portfolios by repeated Max-Cut.
    Bisect(BisectArgs),
    /// Write a seeded Erdős–Rényi graph.
    GenGraph(GenGraphArgs),
    /// Write a seeded synthetic price CSV.
    GenMarket(GenMarketArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Shots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Clock {
    /// Record elapsed seconds per evaluation.
    Wall,
    /// Write 0 seconds so output depends only on the inputs.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Brute,
    Eda,
    Qaoa,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct ExecArgs {
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: Mode,
    /// Total shot budget in shots mode.
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    /// Symmetric readout flip probability.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CutArgs {
    pub circuit: PathBuf,
    #[arg(long)]
    pub max_qubits: usize,
    /// Comma-separated subcircuit label per qubit, e.g. `0,0,1,1`.
    #[arg(long)]
    pub manual: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the plan here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub circuit: PathBuf,
    pub observable: PathBuf,
    pub cutplan: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct QaoaArgs {
    /// Graph as JSON (`{"n","edges"}` or a market graph) or an `i j w` edge list.
    pub graph: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Cut the ansatz so subcircuits fit in this many qubits.
    #[arg(long)]
    pub max_qubits: Option<usize>,
    #[command(flatten)]
    pub exec: ExecArgs,
    #[arg(long, default_value_t = qaoa::DEFAULT_MAX_EVALS)]
    pub max_evals: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "off")]
    pub clock: Clock,
}

#[derive(Debug, Args)]
pub struct MarketArgs {
    pub prices: PathBuf,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Graph JSON destination; the weight histogram goes next to it.
    #[arg(long, default_value = "market_graph.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BisectArgs {
    pub graph: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    #[arg(long, value_enum, default_value = "brute")]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenGraphArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0.5)]
    pub prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenMarketArgs {
    #[arg(long, default_value_t = 16)]
    pub assets: usize,
    #[arg(long, default_value_t = 250)]
    pub days: usize,
    #[arg(long, default_value_t = 4)]
    pub sectors: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INVALID, message: message.into() }
    }
}

impl From<CutError> for CliError {
    fn from(e: CutError) -> Self {
        let code = match e {
            CutError::NoCutNeeded { .. } => EXIT_NO_CUT_NEEDED,
            CutError::TooLargeForOracle(_) => EXIT_BUDGET,
            _ => EXIT_INVALID,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<ReconstructError> for CliError {
    fn from(e: ReconstructError) -> Self {
        match e {
            ReconstructError::Cut(c) => c.into(),
            e if e.is_resource_limit() => CliError { code: EXIT_BUDGET, message: e.to_string() },
            e => CliError::invalid(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        ReconstructError::from(e).into()
    }
}

impl From<QaoaError> for CliError {
    fn from(e: QaoaError) -> Self {
        match e {
            QaoaError::Reconstruct(r) => r.into(),
            QaoaError::Sim(s) => s.into(),
            QaoaError::Cut(c) => c.into(),
            e => CliError::invalid(e.to_string()),
        }
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::Solver(q) => q.into(),
            e => CliError::invalid(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::invalid(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))
}

fn require_inputs(paths: &[&Path]) -> CliResult {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::invalid(format!("input file not found: {}", p.display())));
        }
    }
    Ok(())
}

fn out_line(out: &mut dyn Write, s: &str) -> CliResult {
    writeln!(out, "{s}").map_err(|e| CliError::invalid(format!("write failed: {e}")))
}

/// Combination budget, overridable through the environment.
pub fn combination_cap() -> CliResult<u64> {
    match std::env::var(COMBO_CAP_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::invalid(format!("{COMBO_CAP_ENV}={v:?} is not an integer"))),
        Err(_) => Ok(DEFAULT_COMBINATION_CAP),
    }
}

fn backend(exec: &ExecArgs, workers: Option<usize>) -> CliResult<ExecutionBackend> {
    let mut b = match exec.mode {
        Mode::Exact => ExecutionBackend::exact(),
        Mode::Shots => {
            if exec.shots == 0 {
                return Err(CliError::invalid("--shots must be positive"));
            }
            ExecutionBackend::shots(exec.shots, exec.seed)
        }
    };
    if let Some(eps) = exec.noise {
        b = b.with_noise(Some(ReadoutNoise::symmetric(eps).map_err(|e| CliError::invalid(e.to_string()))?));
    }
    b = b.with_combination_cap(combination_cap()?);
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::invalid("--workers must be positive"));
        }
        b = b.with_workers(w);
    }
    Ok(b)
}

fn load_circuit(path: &Path) -> CliResult<Circuit> {
    Circuit::from_json(&read(path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Graph from weighted-graph JSON, market-graph JSON or an edge list.
pub fn load_graph(path: &Path) -> CliResult<(WeightedGraph, Option<Vec<String>>)> {
    let text = read(path)?;
    let bad = |e: String| CliError::invalid(format!("{}: {e}", path.display()));
    match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(v) if v.get("tickers").is_some() => {
            let m = MarketGraph::from_json(&text).map_err(|e| bad(e.to_string()))?;
            Ok((m.graph, Some(m.tickers)))
        }
        Ok(_) => Ok((WeightedGraph::from_json(&text).map_err(|e| bad(e.to_string()))?, None)),
        Err(_) => Ok((WeightedGraph::from_edge_list(&text).map_err(|e| bad(e.to_string()))?, None)),
    }
}

fn parse_manual(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CutError::ManualInvalid(format!("{s:?} is not a comma-separated list of labels")).into())
}

fn gate_label(g: &Gate, q: usize) -> String {
    let angle = |t: f64| format!("{t:.3}");
    match g {
        Gate::CX { control, .. } => if q == *control { "*".into() } else { "X".into() },
        Gate::CRZ { theta, control, .. } => {
            if q == *control { "*".into() } else { format!("RZ({})", angle(*theta)) }
        }
        Gate::Interaction { theta, a1, a2, .. } => format!("{}{}({})", a1.as_char(), a2.as_char(), angle(*theta)),
        g => match g.theta() {
            Some(t) => format!("{}({})", g.name(), angle(t)),
            None => g.name().to_string(),
        },
    }
}

/// One text line per qubit, one column per gate; cut gates show as
/// `[cut_i]` on both of their qubits. Returns the lines in qubit order.
pub fn render_lines(c: &Circuit, plan: Option<&CutPlan>) -> Vec<String> {
    let n = c.n_qubits();
    let width = format!("q{}", n.saturating_sub(1)).len();
    let mut lines: Vec<String> = (0..n).map(|q| format!("{:<width$}: -", format!("q{q}"))).collect();
    let cut_index = |i: usize| plan.and_then(|p| p.cut_gates.iter().position(|&g| g == i));
    for (i, g) in c.gates().iter().enumerate() {
        let qs = g.qubits();
        let labels: Vec<(usize, String)> = match cut_index(i) {
            Some(k) => qs.iter().map(|&q| (q, format!("[cut_{k}]"))).collect(),
            None => qs.iter().map(|&q| (q, gate_label(g, q))).collect(),
        };
        let w = labels.iter().map(|(_, l)| l.chars().count()).max().unwrap_or(1);
        for (q, line) in lines.iter_mut().enumerate() {
            let cell = labels.iter().find(|(lq, _)| *lq == q).map(|(_, l)| l.as_str()).unwrap_or("");
            line.push_str(cell);
            line.push_str(&"-".repeat(w - cell.chars().count() + 1));
        }
    }
    lines
}

/// Full diagram, then each subcircuit on its own with columns kept in place.
pub fn render_diagram(c: &Circuit, plan: &CutPlan) -> String {
    let lines = render_lines(c, Some(plan));
    let mut s = String::from("circuit\n");
    for l in &lines {
        s.push_str(l.trim_end_matches('-'));
        s.push('\n');
    }
    for (k, part) in plan.parts().iter().enumerate() {
        s.push_str(&format!("\nsubcircuit {k}\n"));
        for &q in part {
            s.push_str(lines[q].trim_end_matches('-'));
            s.push('\n');
        }
    }
    s
}

/// Runs one parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Cut(a) => cmd_cut(a, out),
        Command::Run(a) => cmd_run(a, cli.workers, out),
        Command::Qaoa(a) => cmd_qaoa(a, cli.workers, out),
        Command::Market(a) => cmd_market(a, out),
        Command::Bisect(a) => cmd_bisect(a, cli.workers, out),
        Command::GenGraph(a) => {
            if !(0.0..=1.0).contains(&a.prob) {
                return Err(CliError::invalid("--prob must lie in [0, 1]"));
            }
            let g = qaoa::erdos_renyi(a.nodes, a.prob, a.seed);
            write(&a.out, &(g.to_json() + "\n"))?;
            out_line(out, &format!("wrote {} nodes, {} edges to {}", g.n(), g.edges().len(), a.out.display()))
        }
        Command::GenMarket(a) => {
            let m = SyntheticMarket { n_assets: a.assets, n_days: a.days, sectors: a.sectors, seed: a.seed };
            write(&a.out, &m.to_csv())?;
            out_line(out, &format!("wrote {} assets x {} days to {}", a.assets, a.days, a.out.display()))
        }
    }
}

pub fn cmd_cut(a: CutArgs, out: &mut dyn Write) -> CliResult {
    require_inputs(&[&a.circuit])?;
    let c = load_circuit(&a.circuit)?;
    let mode = match &a.manual {
        Some(s) => CutMode::Manual(parse_manual(s)?),
        None => CutMode::Auto,
    };
    let cfg = EdaConfig { seed: a.seed, ..EdaConfig::default() };
    let plan = cutfinder::find_cuts(&c, a.max_qubits, &cfg, mode)?;
    match &a.out {
        Some(p) => write(p, &(plan.to_json() + "\n"))?,
        None => out_line(out, &plan.to_json())?,
    }
    out_line(out, &render_diagram(&c, &plan))
}

pub fn cmd_run(a: RunArgs, workers: Option<usize>, out: &mut dyn Write) -> CliResult {
    let mut inputs: Vec<&Path> = vec![&a.circuit, &a.observable];
    if let Some(p) = &a.cutplan {
        inputs.push(p);
    }
    require_inputs(&inputs)?;
    let c = load_circuit(&a.circuit)?;
    let obs = PauliObservable::from_json(&read(&a.observable)?)
        .map_err(|e| CliError::invalid(format!("{}: {e}", a.observable.display())))?;
    let plan = match &a.cutplan {
        Some(p) => Some(CutPlan::from_json(&read(p)?)?),
        None => None,
    };
    let b = backend(&a.exec, workers)?;
    let r = reconstruct::expectation_with(&c, &obs, plan.as_ref(), &b)?;
    out_line(out, &r.to_json())
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    graph: String,
    seed: u64,
    mode: &'static str,
    shots: Option<u64>,
    noise: Option<f64>,
    max_qubits: Option<usize>,
    p: usize,
    max_evals: usize,
}

#[derive(Serialize)]
struct ParamsOut<'a> {
    p: usize,
    gamma: &'a [f64],
    beta: &'a [f64],
    best_expectation: f64,
    evaluations: usize,
    max_evals_reached: bool,
    plan: Option<&'a CutPlan>,
}

#[derive(Serialize)]
struct SolutionOut<'a> {
    bitstring: String,
    cut_value: f64,
    total_weight: f64,
    acum: [f64; 2],
    parts: [Vec<usize>; 2],
    tickers: Option<[Vec<&'a str>; 2]>,
}

pub fn cmd_qaoa(a: QaoaArgs, workers: Option<usize>, out: &mut dyn Write) -> CliResult {
    require_inputs(&[&a.graph])?;
    if a.p == 0 {
        return Err(CliError::invalid("--p must be at least 1"));
    }
    let (g, tickers) = load_graph(&a.graph)?;
    if g.n() == 0 {
        return Err(CliError::invalid("graph has no nodes"));
    }
    let b = backend(&a.exec, workers)?;
    let cut = match a.max_qubits {
        Some(m) => CutStrategy::Auto { max_qubits: m, eda: EdaConfig { seed: a.exec.seed, ..EdaConfig::default() } },
        None => CutStrategy::Uncut,
    };
    let cfg = OptimizerConfig { max_evals: a.max_evals, seed: a.exec.seed, ..OptimizerConfig::default() };
    let run = qaoa::optimize(&g, a.p, &b, &cut, &cfg)?;

    let x = qaoa::extract_solution(&g, &run.params, &Simulator::with_cap(b.qubit_cap))?;
    let parts = [
        (0..g.n()).filter(|&v| !x[v]).collect::<Vec<_>>(),
        (0..g.n()).filter(|&v| x[v]).collect::<Vec<_>>(),
    ];
    let solution = SolutionOut {
        bitstring: qaoa::format_bits(&x),
        cut_value: qaoa::cut_value(&g, &x)?,
        total_weight: g.total_weight(),
        acum: [market::acum(&g, &parts[0])?, market::acum(&g, &parts[1])?],
        tickers: tickers.as_ref().map(|t| [0, 1].map(|k| parts[k].iter().map(|&v| t[v].as_str()).collect())),
        parts,
    };
    let params = ParamsOut {
        p: a.p,
        gamma: &run.params.gamma,
        beta: &run.params.beta,
        best_expectation: run.best_expectation,
        evaluations: run.log.entries().len(),
        max_evals_reached: run.max_evals_reached,
        plan: run.plan.as_ref(),
    };
    let manifest = RunManifest {
        command: "qaoa",
        graph: a.graph.display().to_string(),
        seed: a.exec.seed,
        mode: match a.exec.mode {
            Mode::Exact => "exact",
            Mode::Shots => "shots",
        },
        shots: (a.exec.mode == Mode::Shots).then_some(a.exec.shots),
        noise: a.exec.noise,
        max_qubits: a.max_qubits,
        p: a.p,
        max_evals: a.max_evals,
    };
    write(&a.out_dir.join("convergence.csv"), &run.log.to_csv(a.clock == Clock::Wall))?;
    write(&a.out_dir.join("params.json"), &json(&params))?;
    write(&a.out_dir.join("solution.json"), &json(&solution))?;
    write(&a.out_dir.join("manifest.json"), &json(&manifest))?;
    out_line(
        out,
        &format!(
            "best <H_C> = {:.6} after {} evaluations; solution {} cuts {} of {}",
            run.best_expectation,
            run.log.entries().len(),
            solution.bitstring,
            solution.cut_value,
            solution.total_weight
        ),
    )?;
    if let Some(plan) = &run.plan {
        out_line(out, &format!("cut plan: {}", plan.to_json()))?;
    }
    out_line(out, &format!("wrote convergence.csv, params.json, solution.json, manifest.json to {}", a.out_dir.display()))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

/// Bin edges of the weight histogram: 20 equal bins over [−1, 1].
const HISTOGRAM_BINS: usize = 20;

fn weight_histogram(g: &WeightedGraph) -> String {
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &(_, _, w) in g.edges() {
        let k = (((w + 1.0) / 2.0) * HISTOGRAM_BINS as f64).floor() as isize;
        counts[k.clamp(0, HISTOGRAM_BINS as isize - 1) as usize] += 1;
    }
    let mut s = String::from("bin_low,bin_high,count\n");
    for (k, c) in counts.iter().enumerate() {
        let lo = -1.0 + 2.0 * k as f64 / HISTOGRAM_BINS as f64;
        let hi = lo + 2.0 / HISTOGRAM_BINS as f64;
        s.push_str(&format!("{lo:.2},{hi:.2},{c}\n"));
    }
    s
}

#[derive(Serialize)]
struct MarketSummary {
    assets: usize,
    dates: usize,
    dropped_rows: usize,
    alpha: f64,
    edges: usize,
    /// Σ weights with standardized covariance (= correlation) weights.
    total_correlation: f64,
    /// Σ of plain covariances of the min–max normalized prices on the same edges.
    total_covariance: f64,
}

pub fn cmd_market(a: MarketArgs, out: &mut dyn Write) -> CliResult {
    require_inputs(&[&a.prices])?;
    if a.alpha.is_nan() {
        return Err(CliError::invalid("--alpha must be a number"));
    }
    let ingested = market::ingest_csv(&a.prices)?;
    let g = market::market_graph_from_series(&ingested.series, a.alpha)?;
    let normalized: Vec<Vec<f64>> =
        ingested.series.iter().map(|s| market::normalize(&s.values)).collect::<Result<_, _>>()?;
    let raw = market::covariance_matrix(&normalized, false)?;
    let summary = MarketSummary {
        assets: ingested.series.len(),
        dates: ingested.series.first().map_or(0, |s| s.values.len()),
        dropped_rows: ingested.dropped_rows,
        alpha: a.alpha,
        edges: g.graph.edges().len(),
        total_correlation: g.graph.total_weight(),
        total_covariance: g.graph.edges().iter().map(|&(i, j, _)| raw[i][j]).fold(0.0, |acc, w| acc + w),
    };
    write(&a.out, &(g.to_json() + "\n"))?;
    let hist = a.out.with_extension("hist.csv");
    write(&hist, &weight_histogram(&g.graph))?;
    out_line(out, &serde_json::to_string(&summary).expect("summary serializes"))?;
    out_line(out, &format!("wrote {} and {}", a.out.display(), hist.display()))
}

pub fn cmd_bisect(a: BisectArgs, workers: Option<usize>, out: &mut dyn Write) -> CliResult {
    require_inputs(&[&a.graph])?;
    let (g, _) = load_graph(&a.graph)?;
    let solver: Box<dyn MaxCutSolver> = match a.solver {
        SolverKind::Brute => Box::new(BruteForceMaxCut),
        SolverKind::Eda => Box::new(EdaMaxCut { cfg: EdaConfig { seed: a.seed, ..EdaConfig::default() } }),
        SolverKind::Random => Box::new(RandomMaxCut { samples: 10_000, seed: a.seed }),
        SolverKind::Qaoa => {
            let exec = ExecArgs { mode: Mode::Exact, shots: 0, noise: None, seed: a.seed };
            Box::new(QaoaMaxCut {
                p: a.p,
                backend: backend(&exec, workers)?,
                cut: CutStrategy::Uncut,
                cfg: OptimizerConfig { seed: a.seed, ..OptimizerConfig::default() },
            })
        }
    };
    let tree = market::repeated_bisection(&g, a.depth, solver.as_ref())?;
    out_line(out, &serde_json::to_string_pretty(&tree).expect("tree serializes"))
}
