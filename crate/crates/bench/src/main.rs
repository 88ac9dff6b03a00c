use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use distquad::driver::ProgressRecord;
use distquad_bench::experiments::GUARD_REASONS;
use distquad_bench::output::{write_csv, write_results, Manifest};
use distquad_bench::spec::{parse_functions, parse_list, parse_tol_exponents};
use distquad_bench::{
    run_accuracy_sweep, run_idle_breakdown, run_scaling_sweep, BackendId, BenchError,
    ExperimentSpec, FunctionId, RuleId,
};
use serde::Serialize;

/// Adaptive cubature over P simulated or threaded workers.
#[derive(Parser)]
#[command(name = "distquad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one function once and print the result.
    Integrate(IntegrateArgs),
    /// Error against reference values over a tolerance grid.
    Accuracy(SweepArgs),
    /// Time and transfer volume over worker counts.
    Scaling(SweepArgs),
    /// Per-rank compute and idle fractions.
    Idle(SweepArgs),
}

#[derive(Args)]
struct IntegrateArgs {
    /// f1..f7 or f2-corner.
    #[arg(long)]
    function: String,
    #[arg(long)]
    dim: usize,
    /// Relative tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// gm or gk.
    #[arg(long, default_value = "gm")]
    rule: String,
    /// sim or concurrent.
    #[arg(long, default_value = "sim")]
    backend: String,
    #[arg(long, default_value_t = 512)]
    cap: usize,
    #[arg(long, default_value_t = 8)]
    init_per_rank: usize,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    /// Print one progress line per iteration to stderr.
    #[arg(long)]
    trace: bool,
    /// Exit with status 3 if the run ends on a guard instead of the tolerance.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma list of f1..f7 and f2-corner, or "all".
    #[arg(long, default_value = "all")]
    function: String,
    /// Comma list of dimensions.
    #[arg(long, default_value = "2")]
    dim: String,
    /// Exponents k of tau = 10^-k: "a..b", "a..b:step" or "k1,k2,...".
    #[arg(long, default_value = "3..9:3")]
    tol_exp_range: String,
    /// Comma list of worker counts [default: 1 for accuracy, 1,2,4,8 for
    /// scaling, 8 for idle].
    #[arg(long)]
    workers: Option<String>,
    #[arg(long, default_value = "gm")]
    rule: String,
    #[arg(long, default_value = "sim")]
    backend: String,
    #[arg(long, default_value_t = 512)]
    cap: usize,
    #[arg(long, default_value_t = 8)]
    init_per_rank: usize,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Read the whole experiment from a JSON file instead of the flags above.
    #[arg(long, conflicts_with_all = ["function", "dim", "tol_exp_range", "workers"])]
    spec: Option<PathBuf>,
    /// CSV destination; the manifest goes beside it. Without it the CSV is
    /// printed and the manifest goes to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 3 if any run ends on a guard.
    #[arg(long)]
    strict: bool,
}

impl SweepArgs {
    fn to_spec(&self, default_workers: &str) -> Result<ExperimentSpec, BenchError> {
        let mut spec = if let Some(path) = &self.spec {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| BenchError::InvalidSpec(format!("{}: {e}", path.display())))?
        } else {
            ExperimentSpec {
                functions: parse_functions(&self.function)?,
                dims: parse_list(&self.dim, "dimension")?,
                tolerances: parse_tol_exponents(&self.tol_exp_range)?,
                workers: parse_list(self.workers.as_deref().unwrap_or(default_workers), "worker")?,
                rule: self.rule.parse()?,
                backend: self.backend.parse()?,
                repetitions: self.repetitions,
                seed: 0,
                cap: self.cap,
                init_per_rank: self.init_per_rank,
                max_iterations: self.max_iterations,
                output_path: None,
            }
        };
        if self.out.is_some() {
            spec.output_path = self.out.as_ref().map(|p| p.display().to_string());
        }
        spec.validate()?;
        Ok(spec)
    }
}

const EXIT_INVALID: u8 = 2;
const EXIT_GUARD: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::Integrate(a) => integrate(a),
        Command::Accuracy(a) => sweep("accuracy", a, "1", |s| {
            let rows = run_accuracy_sweep(s)?;
            let guarded = rows.iter().any(|r| GUARD_REASONS.contains(&r.termination_reason.as_str()));
            Ok((rows, guarded))
        }),
        Command::Scaling(a) => sweep("scaling", a, "1,2,4,8", |s| {
            let rows = run_scaling_sweep(s)?;
            let guarded = rows.iter().any(|r| GUARD_REASONS.contains(&r.termination_reason.as_str()));
            Ok((rows, guarded))
        }),
        Command::Idle(a) => sweep("idle", a, "8", |s| {
            let rows = run_idle_breakdown(s)?;
            let guarded = rows.iter().any(|r| GUARD_REASONS.contains(&r.termination_reason.as_str()));
            Ok((rows, guarded))
        }),
    };
    match run {
        Ok(code) => code,
        Err(BenchError::InvalidSpec(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(BenchError::Quad(e @ distquad::QuadError::InvalidConfig(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn sweep<R: Serialize>(
    name: &str,
    args: &SweepArgs,
    default_workers: &str,
    run: impl Fn(&ExperimentSpec) -> Result<(Vec<R>, bool), BenchError>,
) -> Result<ExitCode, BenchError> {
    let spec = args.to_spec(default_workers)?;
    let (rows, guarded) = run(&spec)?;
    match &args.out {
        Some(path) => {
            let manifest = write_results(name, &spec, &rows, path)?;
            eprintln!("{} rows -> {} ({})", rows.len(), path.display(), manifest.display());
        }
        None => {
            write_csv(std::io::stdout().lock(), &rows)?;
            let manifest = Manifest::new(name, &spec, rows.len(), None);
            eprintln!("{}", serde_json::to_string(&manifest)?);
        }
    }
    Ok(if args.strict && guarded {
        ExitCode::from(EXIT_GUARD)
    } else {
        ExitCode::SUCCESS
    })
}

fn integrate(a: &IntegrateArgs) -> Result<ExitCode, BenchError> {
    use distquad::distributed::{run_distributed_with_trace, Backend, RedistributionConfig};
    use distquad::driver::{integrate_with_trace, DriverConfig, TerminationReason};
    use distquad::region::HyperRect;

    let function: FunctionId = a.function.parse()?;
    let rule: RuleId = a.rule.parse()?;
    let backend: BackendId = a.backend.parse()?;
    if !(a.tol > 0.0 && a.tol < 1.0) {
        return Err(BenchError::InvalidSpec(format!("tolerance {} outside (0, 1)", a.tol)));
    }
    if a.workers == 0 || a.dim == 0 || a.max_iterations == 0 {
        return Err(BenchError::InvalidSpec(
            "workers, dim and max-iterations must be at least 1".into(),
        ));
    }
    let f = function.build(a.dim).map_err(|e| BenchError::InvalidSpec(e.to_string()))?;
    let domain = HyperRect::unit(a.dim);
    let mut cfg = DriverConfig::new(a.tol).with_rule(rule.choice());
    cfg.max_iterations = a.max_iterations;
    let trace = a.trace;
    let mut sink = |r: &ProgressRecord| {
        if trace {
            eprintln!(
                "iter {:>4}  active {:>9}  I {:>22.15e}  eps {:>10.3e}  evals {}",
                r.iteration, r.active_regions, r.integral, r.error, r.f_evals
            );
        }
    };

    let start = std::time::Instant::now();
    let (result, extra) = if a.workers == 1 {
        let r = integrate_with_trace(&f, &domain, &cfg, &mut sink)
            .map_err(|e| match e {
                distquad::QuadError::UnsupportedDimension { .. } => BenchError::InvalidSpec(e.to_string()),
                e => e.into(),
            })?;
        (r, None)
    } else {
        let rcfg = RedistributionConfig {
            cap: a.cap,
            initial_subdomains_per_rank: a.init_per_rank,
            backend: match backend {
                BackendId::DeterministicSim => Backend::Simulated(Default::default()),
                BackendId::Concurrent => Backend::Concurrent,
            },
            ..Default::default()
        };
        let m = run_distributed_with_trace(&f, &domain, &cfg, &rcfg, a.workers, &mut sink)
            .map_err(|e| match e {
                distquad::QuadError::UnsupportedDimension { .. } => BenchError::InvalidSpec(e.to_string()),
                e => e.into(),
            })?;
        (m.result.clone(), Some(m))
    };
    let exact = f.reference_value();
    println!("function            {function}");
    println!("dim                 {}", a.dim);
    println!("rule                {rule}");
    println!("workers             {}", a.workers);
    println!("tau_rel             {:e}", a.tol);
    println!("integral            {:.17e}", result.integral);
    println!("error_estimate      {:.6e}", result.error);
    println!("exact               {exact:.17e}");
    println!("rel_error           {:.6e}", (result.integral - exact).abs() / exact.abs());
    println!("termination_reason  {}", result.termination_reason);
    println!("iterations          {}", result.iterations);
    println!("f_evals             {}", result.total_f_evals);
    println!("peak_regions        {}", result.peak_regions);
    if let Some(m) = &extra {
        println!("backend             {}", m.backend);
        println!("regions_transferred {}", m.regions_transferred());
        println!("messages            {}", m.messages());
        println!("elapsed             {} {}", m.elapsed, m.time_unit);
        for b in &m.breakdown {
            println!(
                "rank {:>3}            compute {:.3}  idle {:.3}  in {}  out {}",
                b.rank,
                b.compute_fraction(),
                b.idle_fraction(),
                b.regions_in,
                b.regions_out
            );
        }
    } else {
        println!("wall_seconds        {:.3}", start.elapsed().as_secs_f64());
    }
    Ok(if a.strict && result.termination_reason != TerminationReason::Tolerance {
        ExitCode::from(EXIT_GUARD)
    } else {
        ExitCode::SUCCESS
    })
}
