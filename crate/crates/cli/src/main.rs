//! `arrival-mle`: simulate, bin, estimate, bound and study linearly
//! parameterized Poisson intensities from the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arrival_mle::basis::{gram_summary, rip_constant, BasisSpec, PreparedBasis};
use arrival_mle::bounds::{
    counting_bound, fisher_mc, noised_bound, rip_bound, sample_complexity_check, theorem_bound,
    BoundReport,
};
use arrival_mle::experiments::{
    run_bound_tightness, run_lemma_study, run_reg_study, RegStudyConfig,
};
use arrival_mle::io::{
    read_coefficients, read_counts, read_events, to_json, write_counts, write_events,
};
use arrival_mle::likelihood::{LikelihoodContext, Observations, Regularization};
use arrival_mle::process::{
    discretize, expected_count, sample_arrivals, sample_homogeneous, BinnedDesign, RngSeed,
};
use arrival_mle::solver::{
    estimate_mle, estimate_mle_sparse, ConstraintSet, SolveOptions, SparseMode,
};
use arrival_mle::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "arrival-mle",
    version,
    about = "Maximum-likelihood estimation of Poisson intensities"
)]
struct Cli {
    /// Seed for every random draw (studies: overrides master_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte-Carlo loops.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write machine-readable output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample arrivals from the model at the given coefficients (events CSV).
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        /// Thinning envelope; defaults to a bound computed from the model.
        #[arg(long)]
        rate_bound: Option<f64>,
    },
    /// Bin an events CSV into M₀ equal bins (counts CSV).
    Discretize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        bins: usize,
    },
    /// Maximum-likelihood estimate from events or counts (JSON).
    Estimate(EstimateArgs),
    /// Evaluate an error bound (JSON).
    Bounds(BoundsArgs),
    /// Monte-Carlo Fisher information and Cramér–Rao trace (JSON).
    Crlb {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Monte-Carlo studies.
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "counts", required_unless_present = "counts")]
    events: Option<PathBuf>,
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long, default_value_t = SolveOptions::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = SolveOptions::default().tol)]
    tol: f64,
    /// ℓ1 radius η.
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    nonneg: bool,
    /// Comma-separated 0-based coefficient indices allowed to be nonzero.
    #[arg(long, value_delimiter = ',')]
    support: Option<Vec<usize>>,
    /// Enforce R_x ≤ rmax on the check grid.
    #[arg(long)]
    rmax: Option<f64>,
    #[arg(long, value_enum, default_value_t = Reg::None)]
    reg: Reg,
    /// Regularization rate β (required with --reg noise|det).
    #[arg(long)]
    beta: Option<f64>,
    /// Sparsity level s for the ℓ0-constrained estimator.
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Exhaustive, requires = "sparsity")]
    sparse_mode: Mode,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reg {
    None,
    Noise,
    Det,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exhaustive,
    Iterative,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundChoice {
    /// Full-support bound, or its restricted-support form when --support is given.
    Theorem,
    /// Uniform bound over all s-sparse supports from the RIP constant.
    Rip,
    /// Counting model with a uniform M₀-bin design.
    Counting,
    /// Noise-augmented estimator; uses --rmax only.
    Noised,
    /// Sample-complexity chain for sparsity s.
    SampleComplexity,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = BoundChoice::Theorem)]
    kind: BoundChoice,
    #[arg(long, default_value_t = 3.0)]
    zeta: f64,
    #[arg(long)]
    rmin: Option<f64>,
    #[arg(long)]
    rmax: f64,
    #[arg(long, value_delimiter = ',')]
    support: Option<Vec<usize>>,
    /// Sparsity s for --kind rip and --kind sample-complexity.
    #[arg(long)]
    s: Option<usize>,
    /// Bins M₀ for --kind counting.
    #[arg(long)]
    bins: Option<usize>,
    /// Use this constant instead of c_{α,s}.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Subcommand)]
enum Experiment {
    /// Regularization study: relative error quantiles per scheme and β (CSV).
    Reg {
        /// Study config JSON; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Empirical error against the full-support bound (JSON).
    Tightness {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        zeta: f64,
        #[arg(long, default_value_t = 2_000)]
        trials: usize,
        #[arg(long, default_value_t = SolveOptions::default().tol)]
        tol: f64,
    },
    /// Empirical exceedance rates of the two concentration lemmas (JSON).
    Lemma {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        zeta: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, value_delimiter = ',')]
        support: Option<Vec<usize>>,
    },
}

/// A failed run: exit status 1 for bad input, 2 for numerical failure.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numeric() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

/// Machine output, a human summary, and whether the result itself signals a
/// numerical failure (written out, but exit status 2).
struct Output {
    body: String,
    summary: String,
    numeric_failure: Option<String>,
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<std::fs::File, Failure> {
    std::fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: arrival_mle::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn load_model(path: &Path) -> Result<BasisSpec, Failure> {
    with_path(path, BasisSpec::from_json(&read_text(path)?))
}

fn load_coeffs(path: &Path, basis: &BasisSpec) -> Result<Vec<f64>, Failure> {
    let x = with_path(path, read_coefficients(&read_text(path)?))?;
    if x.len() != basis.n() {
        return Err(usage(format!(
            "{}: {} coefficients for a basis of {} elements",
            path.display(),
            x.len(),
            basis.n()
        )));
    }
    Ok(x)
}

fn seed(cli_seed: Option<u64>) -> RngSeed {
    RngSeed::new(cli_seed.unwrap_or(0))
}

fn table(rows: &[(&str, String)]) -> String {
    let width = rows
        .iter()
        .map(|(k, _)| k.chars().count())
        .max()
        .unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<width$}  {v}");
    }
    s
}

fn bound_rows(r: &BoundReport) -> Vec<(&'static str, String)> {
    vec![
        ("kind", format!("{:?}", r.kind)),
        ("bound", format!("{:.6}", r.bound)),
        ("probability", format!("{:.6}", r.probability)),
        ("zeta", format!("{}", r.zeta)),
        ("c", format!("{:.6}", r.c_value)),
        ("alpha", format!("{:.6}", r.alpha)),
        ("s", r.s.to_string()),
        (
            "precondition",
            format!("{} ({})", r.precondition_ok, r.precondition_detail),
        ),
    ]
}

fn simulate(
    cli: &Cli,
    model: &Path,
    coeffs: &Path,
    rate_bound: Option<f64>,
) -> Result<Output, Failure> {
    let spec = load_model(model)?;
    let x = load_coeffs(coeffs, &spec)?;
    let events = sample_arrivals(&spec, &x, rate_bound, seed(cli.seed))?;
    let mut buf = Vec::new();
    write_events(&mut buf, &events)?;
    let m_bar = expected_count(&PreparedBasis::new(spec.clone())?, &x)?;
    Ok(Output {
        body: String::from_utf8(buf).expect("CSV is UTF-8"),
        summary: format!("simulated {} events (expected {m_bar:.3})\n", events.len()),
        numeric_failure: None,
    })
}

fn discretize_cmd(model: &Path, events: &Path, bins: usize) -> Result<Output, Failure> {
    let spec = load_model(model)?;
    let ev = with_path(events, read_events(open(events)?, &spec.domain))?;
    let data = discretize(&spec, &ev, bins)?;
    let mut buf = Vec::new();
    write_counts(&mut buf, &data)?;
    Ok(Output {
        body: String::from_utf8(buf).expect("CSV is UTF-8"),
        summary: format!("binned {} events into {} bins\n", ev.len(), data.bins()),
        numeric_failure: None,
    })
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> Result<Output, Failure> {
    let spec = load_model(&a.model)?;
    let basis = PreparedBasis::new(spec.clone())?;
    let events;
    let counts;
    let data = match (&a.events, &a.counts) {
        (Some(p), _) => {
            events = with_path(p, read_events(open(p)?, &spec.domain))?;
            Observations::Events(&events)
        }
        (None, Some(p)) => {
            counts = with_path(
                p,
                read_counts(open(p)?).and_then(|t| t.into_count_data(&spec)),
            )?;
            Observations::Counts(&counts)
        }
        (None, None) => return Err(usage("one of --events or --counts is required")),
    };
    let beta = match (a.reg, a.beta) {
        (Reg::None, Some(_)) => return Err(usage("--beta needs --reg noise or --reg det")),
        (Reg::None, None) => 0.0,
        (_, Some(b)) => b,
        (_, None) => return Err(usage("--reg noise|det needs --beta")),
    };
    let noise;
    let reg = match a.reg {
        Reg::None => Regularization::None,
        Reg::Noise => {
            noise = sample_homogeneous(beta, &spec.domain, seed(cli.seed))?;
            Regularization::Noise {
                events: &noise,
                beta,
            }
        }
        Reg::Det => Regularization::deterministic(beta),
    };
    let ctx = LikelihoodContext::new(&basis, data, reg)?;
    let cons = ConstraintSet {
        l1_radius: a.l1,
        nonnegative: a.nonneg,
        support: a.support.clone(),
        intensity_box: a.rmax,
    };
    let opts = SolveOptions {
        max_iters: a.max_iters,
        tol: a.tol,
        ..SolveOptions::default()
    };
    let (body, result) = match a.sparsity {
        None => {
            let r = estimate_mle(&ctx, &cons, None, &opts)?;
            (to_json(&r), r)
        }
        Some(s) => {
            let mode = match a.sparse_mode {
                Mode::Exhaustive => SparseMode::Exhaustive,
                Mode::Iterative => SparseMode::Iterative,
            };
            let r = estimate_mle_sparse(&ctx, s, &cons, &opts, mode)?;
            (to_json(&r), r.result)
        }
    };
    let summary = table(&[
        ("nll", format!("{:.10}", result.nll_value)),
        ("iterations", result.iterations.to_string()),
        ("kkt_residual", format!("{:.3e}", result.kkt_residual)),
        ("termination", result.termination.clone()),
        (
            "min_intensity",
            format!("{:.6}", result.feasibility.min_intensity),
        ),
    ]);
    Ok(Output {
        body,
        summary,
        numeric_failure: (!result.converged)
            .then(|| format!("solver did not converge: {}", result.termination)),
    })
}

fn bounds(a: &BoundsArgs) -> Result<Output, Failure> {
    let spec = load_model(&a.model)?;
    let need_rmin = || {
        a.rmin
            .ok_or_else(|| usage("--rmin is required for this bound"))
    };
    let need_s = || a.s.ok_or_else(|| usage("--s is required for this bound"));
    let (body, rows) = match a.kind {
        BoundChoice::Theorem => {
            let summary = gram_summary(&spec, a.support.as_deref())?;
            let r = theorem_bound(&summary, need_rmin()?, a.rmax, a.zeta, a.c)?;
            (to_json(&r), bound_rows(&r))
        }
        BoundChoice::Rip => {
            let s = need_s()?;
            let full = gram_summary(&spec, None)?;
            let delta = rip_constant(&full.gram, s)?;
            let r = rip_bound(
                delta,
                s,
                full.sup_norm_2inf,
                need_rmin()?,
                a.rmax,
                a.zeta,
                a.c,
            )?;
            let mut rows = bound_rows(&r);
            rows.push(("delta_s", format!("{delta:.6}")));
            (to_json(&r), rows)
        }
        BoundChoice::Counting => {
            let bins = a
                .bins
                .ok_or_else(|| usage("--bins is required for --kind counting"))?;
            let design = BinnedDesign::uniform(&spec, bins)?;
            let r = counting_bound(&design.design, need_rmin()?, a.rmax, a.zeta, a.c)?;
            (to_json(&r), bound_rows(&r))
        }
        BoundChoice::Noised => {
            let summary = gram_summary(&spec, a.support.as_deref())?;
            let r = noised_bound(&summary, a.rmax, a.zeta, a.c)?;
            (to_json(&r), bound_rows(&r))
        }
        BoundChoice::SampleComplexity => {
            let summary = gram_summary(&spec, a.support.as_deref())?;
            let r = sample_complexity_check(&summary, need_rmin()?, a.rmax, need_s()?)?;
            let rows = vec![
                ("satisfied", r.satisfied.to_string()),
                ("zeta_min", format!("{:.6}", r.zeta_min)),
                ("ratio", format!("{:.6}", r.ratio)),
                ("ratio_lower", format!("{:.6}", r.ratio_lower)),
                ("chain_holds", r.chain_holds.to_string()),
            ];
            (to_json(&r), rows)
        }
    };
    Ok(Output {
        body,
        summary: table(&rows),
        numeric_failure: None,
    })
}

fn crlb(cli: &Cli, model: &Path, coeffs: &Path, trials: usize) -> Result<Output, Failure> {
    let spec = load_model(model)?;
    let x = load_coeffs(coeffs, &spec)?;
    let basis = PreparedBasis::new(spec.clone())?;
    let f = fisher_mc(&basis, &x, trials, seed(cli.seed))?;
    let mut rows = vec![
        (
            "crlb_trace",
            format!("{:.6} ± {:.6}", f.crlb_trace, f.crlb_trace_se),
        ),
        ("trials", f.trials.to_string()),
    ];
    if let Some(w) = &f.warning {
        rows.push(("warning", w.clone()));
    }
    Ok(Output {
        body: to_json(&f),
        summary: table(&rows),
        numeric_failure: None,
    })
}

fn experiment(cli: &Cli, e: &Experiment) -> Result<Output, Failure> {
    match e {
        Experiment::Reg { config } => {
            let mut cfg = match config {
                Some(p) => {
                    serde_json::from_str::<RegStudyConfig>(&read_text(p)?).map_err(|err| {
                        usage(format!(
                            "{}: line {}, column {}: {err}",
                            p.display(),
                            err.line(),
                            err.column()
                        ))
                    })?
                }
                None => RegStudyConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.master_seed = RngSeed::new(s);
            }
            let t = run_reg_study(&cfg)?;
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<6} {:>10} {:>9} {:>9} {:>9}",
                "scheme", "beta/Rmax", "q10", "median", "q90"
            );
            for r in &t.rows {
                let _ = writeln!(
                    s,
                    "{:<6} {:>10} {:>9.4} {:>9.4} {:>9.4}",
                    r.scheme.name(),
                    r.beta_ratio,
                    r.q10,
                    r.median,
                    r.q90
                );
            }
            let _ = writeln!(s, "{} solves, {} not converged", t.solves, t.nonconverged);
            Ok(Output {
                body: t.to_csv_string(),
                summary: s,
                numeric_failure: None,
            })
        }
        Experiment::Tightness {
            model,
            coeffs,
            zeta,
            trials,
            tol,
        } => {
            let spec = load_model(model)?;
            let x = load_coeffs(coeffs, &spec)?;
            let basis = PreparedBasis::new(spec)?;
            let opts = SolveOptions {
                tol: *tol,
                ..SolveOptions::default()
            };
            let t = run_bound_tightness(&basis, &x, *zeta, *trials, seed(cli.seed), &opts)?;
            let summary = table(&[
                ("median error", format!("{:.6}", t.error_median)),
                (
                    "mean sq error",
                    format!("{:.6} ± {:.6}", t.mean_sq_error, t.mean_sq_error_se),
                ),
                ("bound", format!("{:.6}", t.theorem.bound)),
                (
                    "coverage",
                    format!(
                        "{:.4} (claimed {:.4})",
                        t.coverage_fraction, t.claimed_probability
                    ),
                ),
            ]);
            Ok(Output {
                body: to_json(&t),
                summary,
                numeric_failure: None,
            })
        }
        Experiment::Lemma {
            model,
            coeffs,
            zeta,
            trials,
            support,
        } => {
            let spec = load_model(model)?;
            let x = load_coeffs(coeffs, &spec)?;
            let basis = PreparedBasis::new(spec)?;
            let t = run_lemma_study(
                &basis,
                &x,
                support.as_deref(),
                *zeta,
                *trials,
                seed(cli.seed),
            )?;
            let summary = table(&[
                (
                    "score deviation exceedance",
                    format!(
                        "{:.4} (claimed ≤ {:.4})",
                        t.lemma1_exceedance, t.lemma1_claimed
                    ),
                ),
                (
                    "curvature shortfall",
                    format!(
                        "{:.4} (claimed ≤ {:.4})",
                        t.lemma2_shortfall, t.lemma2_claimed
                    ),
                ),
            ]);
            Ok(Output {
                body: to_json(&t),
                summary,
                numeric_failure: None,
            })
        }
    }
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        arrival_mle::set_parallelism(j);
    }
    match &cli.command {
        Command::Simulate {
            model,
            coeffs,
            rate_bound,
        } => simulate(cli, model, coeffs, *rate_bound),
        Command::Discretize {
            model,
            events,
            bins,
        } => discretize_cmd(model, events, *bins),
        Command::Estimate(a) => estimate(cli, a),
        Command::Bounds(a) => bounds(a),
        Command::Crlb {
            model,
            coeffs,
            trials,
        } => crlb(cli, model, coeffs, *trials),
        Command::Experiment(e) => experiment(cli, e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let out = match run(&cli) {
        Ok(o) => o,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return ExitCode::from(f.code);
        }
    };
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &out.body) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(1);
            }
            print!("{}", out.summary);
        }
        None => print!("{}", out.body),
    }
    match out.numeric_failure {
        Some(m) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        None => ExitCode::SUCCESS,
    }
}
