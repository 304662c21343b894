use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gausstree::exact_rate::CrossoverProblem;
use gausstree::{
    approx_exponent_full, approx_exponent_linear, approx_exponent_triangle, approx_rate_closed_form,
    approx_rate_snr, empirical_covariance, error_curve, exact_error_exponent, fig5_experiment, learn_structure,
    make_chain, make_hybrid, make_star, sample, verify_extremal, ApproxRateInputs, Error, GaussianTreeModel,
    Placements, SampleBatch, SolverOptions, TreeEnumeration, TreeStructure, RHO_CRIT,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gausstree", version, about = "Learning and error exponents for Gaussian tree models")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "GAUSSTREE_THREADS")]
    threads: Option<usize>,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a tree from samples with Chow-Liu.
    Learn(LearnArgs),
    /// Exact error exponent by solving every crossover problem.
    ExactExponent(ExactArgs),
    /// Approximate error exponent.
    ApproxExponent(ApproxArgs),
    /// Crossover rate of a single edge/non-edge pair.
    Crossover(CrossoverArgs),
    /// Enumerate all trees and check the star/chain extremes.
    ExtremalScan(ScanArgs),
    /// Monte Carlo error probability over a grid of sample sizes (CSV).
    Simulate(SimulateArgs),
    /// Exact and approximate rates on the symmetric four-node star (CSV).
    Fig5(Fig5Args),
    /// Build a model and print it as JSON.
    Make(MakeArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["samples", "model"]))]
struct LearnArgs {
    /// CSV of samples, one row per sample, no header.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Draw samples from this model instead.
    #[arg(long, requires = "n")]
    model: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Also write the drawn samples here.
    #[arg(long, requires = "model")]
    dump_samples: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Random starts per crossover problem.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    /// Gradient-norm tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions { starts: self.starts, grad_tol: self.tol, ..SolverOptions::default() }
    }
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproxMethod {
    Full,
    Triangle,
    Linear,
    All,
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = ApproxMethod::Linear)]
    method: ApproxMethod,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum RateMethod {
    Closed,
    Snr,
    Exact,
}

#[derive(Args)]
struct CrossoverArgs {
    #[arg(long, allow_hyphen_values = true)]
    rho_e: f64,
    #[arg(long, allow_hyphen_values = true)]
    rho_ep: f64,
    /// Rates to compute; repeat or separate with commas (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    method: Vec<RateMethod>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    rho: Vec<f64>,
    /// Sample this many placements per tree instead of all (d-1)!.
    #[arg(long)]
    perms: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Accept |rho| above the critical value; the chain claim is then skipped.
    #[arg(long)]
    allow_large_rho: bool,
    /// Check the chain claim even above the critical value.
    #[arg(long, requires = "allow_large_rho")]
    probe_chain: bool,
    /// Permit d = 8 (262144 trees).
    #[arg(long)]
    allow_d8: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sample sizes as start:stop:step (inclusive).
    #[arg(long, value_parser = parse_grid)]
    n_grid: Grid,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Leave the K_p column empty instead of running the exact solver.
    #[arg(long)]
    no_exact: bool,
}

#[derive(Args)]
struct Fig5Args {
    /// Comma-separated gamma values (default 0.05, 0.10, ..., 0.55).
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Star,
    Chain,
    Hybrid,
}

#[derive(Args)]
struct MakeArgs {
    #[arg(value_enum)]
    shape: Shape,
    /// Node count; inferred from --rho when omitted.
    #[arg(long)]
    d: Option<usize>,
    /// Edge correlations in edge order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    rho: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct Grid(Vec<usize>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err("expected start:stop:step".into());
    };
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if a == 0 || step == 0 || b < a {
        return Err("need 0 < start <= stop and step > 0".into());
    }
    Ok(Grid((a..=b).step_by(step).collect()))
}

fn read_model(path: &Path) -> Result<GaussianTreeModel, Error> {
    GaussianTreeModel::from_json(&fs::read_to_string(path)?)
}

fn read_samples(path: &Path) -> Result<SampleBatch, Error> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(csv_error)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::InvalidInput(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>, Error>>()?;
        rows.push(row);
    }
    SampleBatch::from_rows(&rows, 0)
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

fn edge_list(tree: &TreeStructure) -> Value {
    json!({ "d": tree.d(), "edges": tree.edges() })
}

fn learn(args: &LearnArgs) -> Result<Value, Error> {
    let batch = match (&args.samples, &args.model) {
        (Some(path), _) => read_samples(path)?,
        (None, Some(path)) => {
            let model = read_model(path)?;
            let batch = sample(&model, args.n.unwrap_or_default(), args.seed)?;
            if let Some(dump) = &args.dump_samples {
                let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dump).map_err(csv_error)?;
                for row in batch.data.row_iter() {
                    w.write_record(row.iter().map(|x| x.to_string())).map_err(csv_error)?;
                }
                w.flush()?;
            }
            batch
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let tree = learn_structure(&empirical_covariance(&batch))?;
    let mut out = edge_list(&tree);
    out["n"] = json!(batch.n());
    Ok(out)
}

fn exponent_value(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("NoErrorEvents")
    }
}

fn exact(args: &ExactArgs) -> Result<Value, Error> {
    let model = read_model(&args.model)?;
    let k = exact_error_exponent(&model, &args.solver.options())?;
    Ok(json!({
        "K_p": exponent_value(k.value),
        "argmin": k.argmin.map(|(e, ep)| json!({ "edge": e, "non_edge": ep })),
        "diagnostics": {
            "pairs_solved": k.pairs_solved,
            "max_spread": k.max_spread,
            "max_violation": k.max_violation,
        },
    }))
}

fn approx(args: &ApproxArgs) -> Result<Value, Error> {
    let model = read_model(&args.model)?;
    Ok(match args.method {
        ApproxMethod::Full => serde_json::to_value(approx_exponent_full(&model)?)?,
        ApproxMethod::Triangle => serde_json::to_value(approx_exponent_triangle(&model)?)?,
        ApproxMethod::Linear => serde_json::to_value(approx_exponent_linear(&model)?)?,
        ApproxMethod::All => json!({
            "full": approx_exponent_full(&model)?,
            "triangle": approx_exponent_triangle(&model)?,
            "linear": approx_exponent_linear(&model)?,
        }),
    })
}

/// Chain 1 - 2 - 3 in which the edge (1, 2) carries `rho_e` and the non-edge
/// (1, 3) ends up with `rho_ep`.
fn induced_problem(rho_e: f64, rho_ep: f64) -> Result<CrossoverProblem, Error> {
    if !(rho_ep.abs() < rho_e.abs()) {
        return Err(Error::NonDominantPair { rho_e, rho_ep });
    }
    let tree = TreeStructure::chain(3)?;
    let model = GaussianTreeModel::from_edge_values(tree, &[rho_e, rho_ep / rho_e])?;
    CrossoverProblem::from_model(&model, gausstree::Edge::new(0, 1), gausstree::Edge::new(0, 2))
}

fn crossover(args: &CrossoverArgs) -> Result<Value, Error> {
    let methods =
        if args.method.is_empty() { vec![RateMethod::Closed, RateMethod::Snr, RateMethod::Exact] } else { args.method.clone() };
    let mut out = json!({ "rho_e": args.rho_e, "rho_ep": args.rho_ep });
    for m in methods {
        match m {
            RateMethod::Closed => {
                out["closed"] = json!(approx_rate_closed_form(ApproxRateInputs::new(args.rho_e, args.rho_ep)?)?);
            }
            RateMethod::Snr => out["snr"] = json!(approx_rate_snr(&induced_problem(args.rho_e, args.rho_ep)?)?),
            RateMethod::Exact => {
                let r = gausstree::solve_crossover_rate(&induced_problem(args.rho_e, args.rho_ep)?, &args.solver.options())?;
                out["exact"] = json!(r.rate);
                out["exact_spread"] = json!(r.spread);
            }
        }
    }
    Ok(out)
}

fn scan(args: &ScanArgs) -> Result<Value, Error> {
    if args.rho.len() + 1 != args.d {
        return Err(Error::DimensionMismatch { expected: args.d - 1, found: args.rho.len() });
    }
    let limit = if args.allow_d8 { 8 } else { 7 };
    if args.d > limit {
        return Err(Error::InvalidInput(format!("enumeration is capped at d = {limit}")));
    }
    if !args.allow_large_rho {
        if let Some(r) = args.rho.iter().find(|r| r.abs() >= RHO_CRIT) {
            return Err(Error::InvalidInput(format!("|rho| = {} is not below {RHO_CRIT}; pass --allow-large-rho", r.abs())));
        }
    }
    let which = match args.perms {
        Some(count) => Placements::Sampled { count, seed: args.seed },
        None => Placements::All,
    };
    let report = verify_extremal(&args.rho, which, args.probe_chain)?;
    let mut out = serde_json::to_value(&report)?;
    out["holds"] = json!(report.holds());
    out["expected_trees"] = json!(TreeEnumeration::count(args.d));
    out["min_tree"] = edge_list(make_star(&args.rho)?.tree());
    out["max_tree"] = edge_list(gausstree::make_sorted_chain(&args.rho)?.tree());
    Ok(out)
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), Error> {
    let model = read_model(&args.model)?;
    let opts = SolverOptions::default();
    let curve = error_curve(&model, &args.n_grid.0, args.trials, args.seed, (!args.no_exact).then_some(&opts))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "trials", "errors", "p_hat", "ci_lo", "ci_hi", "sim_exponent", "K_p", "K_tilde"])
        .map_err(csv_error)?;
    let k_p = curve.k_exact.map(|k| k.to_string()).unwrap_or_default();
    for p in &curve.points {
        let e = &p.estimate;
        w.write_record([
            e.n.to_string(),
            e.trials.to_string(),
            e.errors.to_string(),
            e.p_hat.to_string(),
            e.ci_lo.to_string(),
            e.ci_hi.to_string(),
            p.sim_exponent.to_string(),
            k_p.clone(),
            curve.k_tilde.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn fig5(args: &Fig5Args, out: &mut dyn Write) -> Result<(), Error> {
    let gammas = if args.gamma.is_empty() { (1..=11).map(|k| k as f64 * 0.05).collect() } else { args.gamma.clone() };
    let rows = fig5_experiment(&gammas, &args.solver.options())?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn make(args: &MakeArgs) -> Result<Value, Error> {
    let d = args.d.unwrap_or(args.rho.len() + 1);
    if args.rho.len() + 1 != d {
        return Err(Error::DimensionMismatch { expected: d.saturating_sub(1), found: args.rho.len() });
    }
    let model = match args.shape {
        Shape::Star => make_star(&args.rho)?,
        Shape::Chain => make_chain(&args.rho)?,
        Shape::Hybrid => GaussianTreeModel::from_edge_values(make_hybrid(d)?, &args.rho)?,
    };
    Ok(serde_json::to_value(model.to_file())?)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut sink: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(io::BufWriter::new(fs::File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    let value = match &cli.command {
        Command::Learn(a) => learn(a)?,
        Command::ExactExponent(a) => exact(a)?,
        Command::ApproxExponent(a) => approx(a)?,
        Command::Crossover(a) => crossover(a)?,
        Command::ExtremalScan(a) => scan(a)?,
        Command::Make(a) => make(a)?,
        Command::Simulate(a) => return simulate(a, &mut sink),
        Command::Fig5(a) => return fig5(a, &mut sink),
    };
    serde_json::to_writer_pretty(&mut sink, &value)?;
    writeln!(sink)?;
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
