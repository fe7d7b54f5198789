//! Command-line front end: simulate synthetic data, fit the segmentation
//! model, decode state sequences, and evaluate or compare methods against
//! ground-truth labels.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors, and 3
//! when a fit stopped at the iteration cap without converging.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mhmmr::{
    build_design_with_norm, channel_subset, compare_methods, emission_logdensities, evaluate,
    forward_backward, max_posterior_decode, viterbi, EvalReport, FitConfig, GeneratorSpec,
    InitStrategy, Method, MhmmrError, TimeSeries,
};

const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "mhmmr", version, about = "Joint segmentation of multivariate time series with regression-emission HMMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic series and its ground-truth model.
    Simulate(SimulateArgs),
    /// Fit the segmentation model to a CSV series.
    Fit(FitArgs),
    /// Decode a series under a fitted model.
    Decode(DecodeArgs),
    /// Evaluate a decoded segmentation against labeled data.
    Eval(EvalArgs),
    /// Run several unsupervised methods on the same labeled series.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset name: paper-shaped (K=12, d=9, p=3) or separated (K=3, d=2, p=1).
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// TOML generator spec file.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional path for the ground-truth model file.
    #[arg(long)]
    truth_model: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV (a `label` column, if present, is ignored by training).
    #[arg(long)]
    data: PathBuf,
    /// Number of states.
    #[arg(short, long)]
    k: usize,
    /// Polynomial order of the per-state regressions.
    #[arg(short, long)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Contiguous)]
    init: InitArg,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-iteration log-likelihood trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Contiguous,
    Random,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output segmentation CSV (t, state, confidence).
    #[arg(long)]
    out: PathBuf,
    /// Optional posterior export CSV (t, tau_1..tau_K, state).
    #[arg(long)]
    posteriors: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DecodeMethod::Viterbi)]
    method: DecodeMethod,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeMethod {
    Viterbi,
    Map,
}

#[derive(Args)]
struct EvalArgs {
    /// Decoded segmentation CSV produced by `decode`.
    #[arg(long)]
    pred: PathBuf,
    /// Labeled data CSV providing the ground truth.
    #[arg(long)]
    truth: PathBuf,
    /// Optional machine-readable report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated subset of kmeans, gmm, hmm_p0, mhmmr.
    #[arg(long, default_value = "kmeans,gmm,hmm_p0,mhmmr")]
    methods: String,
    #[arg(short, long)]
    k: usize,
    #[arg(short, long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict the series to these channels or sensor groups first.
    #[arg(long)]
    channels: Option<String>,
    /// Optional machine-readable report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, MhmmrError> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Fit(args) => fit(args),
        Command::Decode(args) => decode(args),
        Command::Eval(args) => eval(args),
        Command::Compare(args) => compare(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, MhmmrError> {
    let spec: GeneratorSpec = match (&args.preset, &args.spec) {
        (Some(name), None) => mhmmr::preset(name, args.seed)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let mut spec: GeneratorSpec = toml::from_str(&text)
                .map_err(|e| MhmmrError::InvalidSpec(e.to_string()))?;
            spec.seed = args.seed;
            spec
        }
        _ => {
            return Err(MhmmrError::InvalidSpec(
                "give exactly one of --preset or --spec".into(),
            ))
        }
    };
    let (series, params) = mhmmr::generate(&spec)?;
    mhmmr::io::write_csv(&series, &args.out)?;
    if let Some(path) = &args.truth_model {
        mhmmr::io::save_model(&params, path)?;
    }
    println!(
        "simulated n={} d={} K={} -> {}",
        series.len(),
        series.dim(),
        params.num_states(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn fit(args: FitArgs) -> Result<ExitCode, MhmmrError> {
    let series = mhmmr::io::load_csv(&args.data)?;
    let mut cfg = FitConfig::new(args.k, args.p);
    cfg.n_restarts = args.restarts;
    cfg.seed = args.seed;
    cfg.max_iter = args.max_iter;
    cfg.rel_tol = args.tol;
    cfg.init_strategy = match args.init {
        InitArg::Contiguous => InitStrategy::Contiguous,
        InitArg::Random => InitStrategy::RandomResponsibilities,
    };
    let result = mhmmr::fit(&series, &cfg)?;
    mhmmr::io::save_model(&result.params, &args.out)?;
    if let Some(path) = &args.trace {
        let mut text = String::from("iteration,loglik\n");
        for (i, ll) in result.loglik_trace.iter().enumerate() {
            text.push_str(&format!("{},{}\n", i + 1, mhmmr::io::fmt_f64(*ll)));
        }
        std::fs::write(path, text)?;
    }
    println!(
        "fit K={} p={} iterations={} converged={} loglik={:.6}",
        args.k,
        args.p,
        result.iterations,
        result.converged,
        result.final_loglik()
    );
    if result.low_support_warning {
        eprintln!("warning: some state ended with total responsibility below p+2");
    }
    if result.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_NOT_CONVERGED))
    }
}

fn decode(args: DecodeArgs) -> Result<ExitCode, MhmmrError> {
    let series = mhmmr::io::load_csv(&args.data)?;
    let params = mhmmr::io::load_model(&args.model)?;
    if series.dim() != params.dim() {
        return Err(MhmmrError::DimensionMismatch(format!(
            "data has {} channels but the model expects {}",
            series.dim(),
            params.dim()
        )));
    }
    let design =
        build_design_with_norm(series.timestamps(), params.order(), params.time_norm());
    let emis = emission_logdensities(&params, &series, &design)?;
    let post = forward_backward(&params, &emis)?;
    let seg = match args.method {
        DecodeMethod::Viterbi => viterbi(&params, &emis)?,
        DecodeMethod::Map => max_posterior_decode(&post),
    };
    mhmmr::io::write_segmentation(series.timestamps(), &seg, &args.out)?;
    if let Some(path) = &args.posteriors {
        mhmmr::io::export_posteriors(series.timestamps(), &post, &seg, path)?;
    }
    println!(
        "decoded n={} states with {} -> {}",
        seg.states().len(),
        seg.source(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn print_report(report: &EvalReport) {
    println!("accuracy {:.4}", report.accuracy);
    println!(
        "macro precision {:.4}  macro recall {:.4}",
        report.macro_precision(),
        report.macro_recall()
    );
    let k = report.precision.len();
    print!("class   ");
    for c in 1..=k {
        print!(" {c:>7}");
    }
    println!();
    print!("precision");
    for p in &report.precision {
        print!(" {:>7.3}", p);
    }
    println!();
    print!("recall   ");
    for r in &report.recall {
        print!(" {:>7.3}", r);
    }
    println!();
}

fn report_csv(report: &EvalReport) -> String {
    let mut text = String::from("class,precision,recall\n");
    for c in 0..report.precision.len() {
        text.push_str(&format!(
            "{},{},{}\n",
            c + 1,
            mhmmr::io::fmt_f64(report.precision[c]),
            mhmmr::io::fmt_f64(report.recall[c])
        ));
    }
    text.push_str(&format!("accuracy,{},\n", mhmmr::io::fmt_f64(report.accuracy)));
    text
}

fn eval(args: EvalArgs) -> Result<ExitCode, MhmmrError> {
    let (_, pred, _) = mhmmr::io::load_segmentation(&args.pred)?;
    let truth_series = mhmmr::io::load_csv(&args.truth)?;
    let truth = truth_series
        .labels()
        .ok_or(MhmmrError::MissingLabels)?
        .to_vec();
    let report = evaluate(&pred, &truth)?;
    print_report(&report);
    if let Some(path) = &args.out {
        std::fs::write(path, report_csv(&report))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(args: CompareArgs) -> Result<ExitCode, MhmmrError> {
    let mut series = mhmmr::io::load_csv(&args.data)?;
    if let Some(spec) = &args.channels {
        let keep: Vec<&str> = spec.split(',').map(|s| s.trim()).collect();
        series = channel_subset(&series, &keep)?;
    }
    let methods = parse_methods(&args.methods)?;
    let cfg = {
        let mut cfg = FitConfig::new(args.k, args.p);
        cfg.seed = args.seed;
        cfg
    };
    let rows = compare_methods(&series, &methods, &cfg)?;

    println!("{:<8} {:>9} {:>15} {:>12}", "method", "accuracy", "macro_precision", "macro_recall");
    for (method, report) in &rows {
        println!(
            "{:<8} {:>9.4} {:>15.4} {:>12.4}",
            method.name(),
            report.accuracy,
            report.macro_precision(),
            report.macro_recall()
        );
    }
    if let Some(path) = &args.out {
        let mut text = String::from("method,accuracy,macro_precision,macro_recall\n");
        for (method, report) in &rows {
            text.push_str(&format!(
                "{},{},{},{}\n",
                method.name(),
                mhmmr::io::fmt_f64(report.accuracy),
                mhmmr::io::fmt_f64(report.macro_precision()),
                mhmmr::io::fmt_f64(report.macro_recall())
            ));
        }
        std::fs::write(path, text)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_methods(spec: &str) -> Result<Vec<Method>, MhmmrError> {
    spec.split(',')
        .map(|s| Method::parse(s.trim()))
        .collect()
}

/// Re-export used by integration tests to decode without going through files.
#[allow(dead_code)]
fn decode_series(series: &TimeSeries, params: &mhmmr::MhmmrParams) -> Result<Vec<usize>, MhmmrError> {
    let design =
        build_design_with_norm(series.timestamps(), params.order(), params.time_norm());
    let emis = emission_logdensities(params, series, &design)?;
    Ok(viterbi(params, &emis)?.states().to_vec())
}
