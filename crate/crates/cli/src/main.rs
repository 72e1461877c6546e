//! `tma`: simulate, analyse and verify threshold moving-average models.

// negated comparisons below also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use tma::analytics::{
    ex31_acf, ex31_constants_for, ex31_moment_curve, ex31_skewness_kurtosis, ex31_variance, ex32_acf1_for,
    is_ex31_shape, is_ex32_shape, linear_ma_acf, CONVOLUTION_MC_SAMPLES,
};
use tma::estimate::{dependence_decay, sample_acf, sample_moments, AcfReport};
use tma::io::{atomic_write, fmt_f64, path_from_csv, path_to_csv, table_to_csv, to_json_bytes};
use tma::model::DEFAULT_DELTA_SAMPLES;
use tma::stationary::{default_burn_in, simulate_closed_form_offset, simulate_recursive};
use tma::verify::{default_dependence_lags, verify, Status, VerifyConfig};
use tma::{DeltaEstimate, Innovation, Method, SeriesPath, TmaError, TmaModel, Truncation};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "tma", version, about = "Threshold moving-average processes with feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a path by recursion or from the closed-form stationary solution.
    Simulate(SimulateArgs),
    /// Closed-form ACF, or skewness and kurtosis over a threshold grid.
    Theory(TheoryArgs),
    /// Sample autocorrelations of a simulated path, with a decay fit.
    Acf(AcfArgs),
    /// Sample mean, variance, skewness and kurtosis with batch-means errors.
    Moments(MomentsArgs),
    /// Dependence of the joint distribution at growing lags.
    Decay(DecayArgs),
    /// Data for the skewness/kurtosis curves (fig1) and the slowly decaying ACF (fig2).
    Figure(FigureArgs),
    /// Run the full verification suite on a model.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Recursive,
    ClosedForm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Recursive => Method::Recursive,
            MethodArg::ClosedForm => Method::ClosedForm,
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Override the threshold r from the model file.
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output file; stdout when absent. CSV files get a `<out>.json` metadata sidecar.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Clone)]
struct PathArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Discarded steps (recursive) or index offset (closed form). Defaults to
    /// max(500, ⌈10(m+1)/(1−δ̂)⌉) for both, so the two methods line up.
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, value_enum, default_value = "recursive")]
    method: MethodArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct TheoryArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    /// Threshold grid "lo:hi:step"; switches to skewness/kurtosis output.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct AcfArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    path: PathArgs,
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    path: PathArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct DecayArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, allow_hyphen_values = true)]
    u: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    v: Option<f64>,
    /// Comma-separated lags; defaults to 40 lags spread over the decorrelation horizon.
    #[arg(long, value_delimiter = ',')]
    lags: Option<Vec<usize>>,
    /// Largest lag of the default grid (ignored with --lags).
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    replicates: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Fig1,
    Fig2,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(value_enum)]
    which: Which,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, value_enum, default_value = "recursive")]
    method: MethodArg,
    #[arg(long, default_value_t = 40)]
    max_lag: usize,
    #[arg(long, default_value = "-6:8:0.05", allow_hyphen_values = true)]
    grid: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Horizon of the exactness and coupling runs.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Path length for the moment, ACF and covariance checks.
    #[arg(long, default_value_t = 1_000_000)]
    moment_n: usize,
    #[arg(long, default_value_t = 100_000)]
    replicates: usize,
    /// Check this path CSV for exactness instead of fresh simulations.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Report file (JSON); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<TmaError> for Failure {
    fn from(e: TmaError) -> Self {
        let code = match e {
            TmaError::DeltaTooClose { .. } | TmaError::Degenerate(_) => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Theory(a) => cmd_theory(a),
        Command::Acf(a) => cmd_acf(a),
        Command::Moments(a) => cmd_moments(a),
        Command::Decay(a) => cmd_decay(a),
        Command::Figure(a) => cmd_figure(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tma: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_model(args: &ModelArgs) -> CliResult<TmaModel> {
    let model = TmaModel::from_path(&args.model)?;
    match args.threshold {
        None => Ok(model),
        Some(r) => {
            let mut spec = model.to_spec();
            spec.r = r;
            Ok(spec.validate()?)
        }
    }
}

fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| invalid(format!("grid '{text}': {e}")))?;
    let [lo, hi, step] = parts[..] else {
        return Err(invalid(format!("grid '{text}' must be lo:hi:step")));
    };
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("grid '{text}' needs lo ≤ hi and step > 0")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if count > 10_000_000 {
        return Err(invalid("grid has too many points"));
    }
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

/// Metadata shared by every output.
fn meta(command: &str, model: Option<&TmaModel>, seed: Option<u64>) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("version".into(), json!(VERSION));
    m.insert("command".into(), json!(command));
    if let Some(model) = model {
        m.insert("model_hash".into(), json!(model.hash()));
        m.insert(
            "model".into(),
            serde_json::to_value(model.to_spec()).expect("model serializes"),
        );
    }
    if let Some(seed) = seed {
        m.insert("seed".into(), json!(seed));
    }
    m
}

/// CSV goes to the output with a JSON sidecar; JSON merges metadata and body.
fn emit(out: &OutArgs, csv: Vec<u8>, mut meta: serde_json::Map<String, Value>, body: Value) -> CliResult<()> {
    match out.format {
        Format::Csv => {
            write_output(out.out.as_deref(), &csv)?;
            if let Some(path) = &out.out {
                let mut sidecar = path.clone().into_os_string();
                sidecar.push(".json");
                write_output(Some(Path::new(&sidecar)), &to_json_bytes(&meta)?)?;
            }
        }
        Format::Json => {
            if let Value::Object(fields) = body {
                meta.extend(fields);
            }
            write_output(out.out.as_deref(), &to_json_bytes(&meta)?)?;
        }
    }
    Ok(())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => atomic_write(p, bytes).map_err(|e| invalid(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(|e| invalid(e.to_string()))
        }
    }
}

struct Simulated {
    path: SeriesPath,
    delta: DeltaEstimate,
    trunc: Option<Truncation>,
}

fn simulate(model: &TmaModel, n: usize, burn_in: Option<usize>, method: Method, seed: u64) -> CliResult<Simulated> {
    let delta = model.contraction_delta(DEFAULT_DELTA_SAMPLES, seed)?;
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(model.m(), delta.delta));
    match method {
        Method::Recursive => {
            let init = vec![0.0; model.init_len()];
            let path = simulate_recursive(model, n, burn_in, &init, seed)?;
            Ok(Simulated {
                path,
                delta,
                trunc: None,
            })
        }
        Method::ClosedForm => {
            let trunc = Truncation::default_for(model, &delta)?;
            let path = simulate_closed_form_offset(model, burn_in, n, &trunc, seed)?;
            Ok(Simulated {
                path,
                delta,
                trunc: Some(trunc),
            })
        }
    }
}

fn path_meta(command: &str, model: &TmaModel, sim: &Simulated) -> serde_json::Map<String, Value> {
    let mut m = meta(command, Some(model), Some(sim.path.seed));
    m.insert("method".into(), json!(sim.path.method.to_string()));
    m.insert("n".into(), json!(sim.path.len()));
    m.insert("burn_in".into(), json!(sim.path.burn_in));
    m.insert(
        "delta_estimate".into(),
        serde_json::to_value(sim.delta).expect("serializes"),
    );
    m.insert("K".into(), json!(sim.trunc.map(|t| t.k)));
    m.insert("tail_bound".into(), json!(sim.trunc.map(|t| t.tail_bound)));
    m
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let p = &a.path;
    let sim = simulate(&model, p.n, p.burn_in, p.method.into(), p.seed)?;
    let csv = path_to_csv(&sim.path)?;
    let path = &sim.path;
    let body = json!({
        "index": (0..path.len()).map(|i| path.start + i as i64).collect::<Vec<_>>(),
        "e": (0..path.len()).map(|i| path.innovation_at(i)).collect::<Vec<_>>(),
        "y": path.values,
        "alpha": path.alpha,
    });
    emit(&a.out, csv, path_meta("simulate", &model, &sim), body)
}

fn analytic_acf(model: &TmaModel, max_lag: usize, seed: u64) -> CliResult<Option<Vec<f64>>> {
    if is_ex31_shape(model) {
        let c = ex31_constants_for(model)?;
        return Ok(Some(
            (0..=max_lag)
                .map(|k| ex31_acf(k, &c, model.mu1(), model.mu2()))
                .collect(),
        ));
    }
    if is_ex32_shape(model) {
        let a = ex32_acf1_for(model, CONVOLUTION_MC_SAMPLES, seed)?;
        return Ok(Some((0..=max_lag).map(|k| a.acf(k)).collect()));
    }
    if model.is_linear() {
        return Ok(Some((0..=max_lag).map(|k| linear_ma_acf(model.phi(), k)).collect()));
    }
    Ok(None)
}

fn cmd_theory(a: TheoryArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let mut m = meta("theory", Some(&model), Some(a.seed));
    if let Some(grid) = &a.grid {
        if !model.phi().is_empty() || model.d() != 1 {
            return Err(TmaError::ShapeMismatch("skewness/kurtosis curves need q = 0 and d = 1".into()).into());
        }
        let grid = parse_grid(grid)?;
        let curve = ex31_moment_curve(model.mu1(), model.mu2(), &model.innovation(), &grid)?;
        return emit_shape_curve(&a.out, curve, m);
    }
    let rho = analytic_acf(&model, a.max_lag, a.seed)?
        .ok_or_else(|| TmaError::ShapeMismatch("no closed-form ACF for this model".into()))?;
    let csv = table_to_csv(
        &["lag", "rho_analytic"],
        rho.iter().enumerate().map(|(k, r)| vec![k.to_string(), fmt_f64(*r)]),
    )?;
    if is_ex31_shape(&model) {
        let c = ex31_constants_for(&model)?;
        m.insert("beta".into(), json!(c.beta));
        m.insert("delta0".into(), json!(c.delta0));
        m.insert("variance".into(), json!(ex31_variance(&c, model.mu1(), model.mu2())));
    }
    emit(
        &a.out,
        csv,
        m,
        json!({ "lags": (0..=a.max_lag).collect::<Vec<_>>(), "rho_analytic": rho }),
    )
}

fn emit_shape_curve(
    out: &OutArgs,
    curve: Vec<(f64, tma::analytics::ShapeMoments)>,
    m: serde_json::Map<String, Value>,
) -> CliResult<()> {
    let csv = table_to_csv(
        &["r", "skewness", "kurtosis"],
        curve
            .iter()
            .map(|(r, s)| vec![fmt_f64(*r), fmt_f64(s.skewness), fmt_f64(s.kurtosis)]),
    )?;
    let body = json!({
        "r": curve.iter().map(|c| c.0).collect::<Vec<_>>(),
        "skewness": curve.iter().map(|c| c.1.skewness).collect::<Vec<_>>(),
        "kurtosis": curve.iter().map(|c| c.1.kurtosis).collect::<Vec<_>>(),
    });
    emit(out, csv, m, body)
}

fn acf_output(
    out: &OutArgs,
    mut report: AcfReport,
    overlay: Option<Vec<f64>>,
    mut m: serde_json::Map<String, Value>,
) -> CliResult<()> {
    let last = *report.lags.last().expect("lag 0 always present");
    // a failed fit is reported as null, not an error
    let _ = report.fit_decay((1, last));
    let mut header = vec!["lag", "value", "se", "band"];
    if overlay.is_some() {
        header.push("rho_analytic");
    }
    let rows = report.lags.iter().enumerate().map(|(i, lag)| {
        let mut row = vec![
            lag.to_string(),
            fmt_f64(report.rho_hat[i]),
            fmt_f64(report.se[i]),
            fmt_f64(report.band),
        ];
        if let Some(o) = &overlay {
            row.push(fmt_f64(o[i]));
        }
        row
    });
    let csv = table_to_csv(&header, rows.collect::<Vec<_>>())?;
    m.insert("summary".into(), fit_summary(report.decay_fit.as_ref(), report.n));
    let mut body = serde_json::to_value(&report).expect("serializes");
    if let (Value::Object(fields), Some(o)) = (&mut body, overlay) {
        fields.insert("rho_analytic".into(), json!(o));
    }
    emit(out, csv, m, json!({ "report": body }))
}

fn fit_summary(fit: Option<&tma::estimate::DecayFit>, n: usize) -> Value {
    match fit {
        Some(f) => json!({ "rate": f.rate, "slope": f.slope, "r2": f.r2, "lag_range": f.lag_range, "n": n }),
        None => json!({ "rate": null, "r2": null, "lag_range": null, "n": n }),
    }
}

fn cmd_acf(a: AcfArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let p = &a.path;
    let sim = simulate(&model, p.n, p.burn_in, p.method.into(), p.seed)?;
    let report = sample_acf(&sim.path, a.max_lag)?;
    let overlay = analytic_acf(&model, a.max_lag, p.seed)?;
    acf_output(&a.out, report, overlay, path_meta("acf", &model, &sim))
}

fn cmd_moments(a: MomentsArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let p = &a.path;
    let sim = simulate(&model, p.n, p.burn_in, p.method.into(), p.seed)?;
    let mom = sample_moments(&sim.path)?;
    let mut theory: [Option<f64>; 4] = [None; 4];
    if is_ex31_shape(&model) {
        let c = ex31_constants_for(&model)?;
        theory[0] = Some(tma::analytics::ex31_mean(&c, model.mu1(), model.mu2()));
        theory[1] = Some(ex31_variance(&c, model.mu1(), model.mu2()));
        if let Ok(s) = ex31_skewness_kurtosis(model.mu1(), model.mu2(), model.r(), &model.innovation()) {
            theory[2] = Some(s.skewness);
            theory[3] = Some(s.kurtosis);
        }
    }
    let stats = [
        ("mean", mom.mean),
        ("variance", mom.variance),
        ("skewness", mom.skewness),
        ("kurtosis", mom.kurtosis),
    ];
    let csv = table_to_csv(
        &["statistic", "value", "se", "analytic"],
        stats.iter().zip(theory).map(|((name, e), t)| {
            vec![
                name.to_string(),
                fmt_f64(e.value),
                fmt_f64(e.se),
                t.map(fmt_f64).unwrap_or_default(),
            ]
        }),
    )?;
    let body = json!({
        "moments": mom,
        "analytic": { "mean": theory[0], "variance": theory[1], "skewness": theory[2], "kurtosis": theory[3] },
    });
    emit(&a.out, csv, path_meta("moments", &model, &sim), body)
}

fn cmd_decay(a: DecayArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let delta = model.contraction_delta(DEFAULT_DELTA_SAMPLES, a.seed)?;
    let trunc = Truncation::default_for(&model, &delta)?;
    let lags = match (&a.lags, a.max_lag) {
        (Some(l), _) => l.clone(),
        (None, Some(max)) => {
            if max == 0 {
                return Err(invalid("--max-lag must be positive"));
            }
            let count = max.min(40);
            let mut l: Vec<usize> = (0..count).map(|i| 1 + i * (max - 1) / (count - 1).max(1)).collect();
            l.dedup();
            l
        }
        (None, None) => default_dependence_lags(&model, delta.delta),
    };
    if lags.contains(&0) {
        return Err(invalid("lags must be positive"));
    }
    let u = a.u.unwrap_or(model.r());
    let v = a.v.unwrap_or(model.r());
    let mut report = dependence_decay(&model, u, v, &lags, a.replicates, a.seed, &trunc)?;
    let range = (report.lags[0], *report.lags.last().expect("non-empty"));
    let _ = report.fit_decay(range);
    let csv = table_to_csv(
        &["lag", "value", "se"],
        report
            .lags
            .iter()
            .enumerate()
            .map(|(i, l)| vec![l.to_string(), fmt_f64(report.dep[i]), fmt_f64(report.se[i])]),
    )?;
    let mut m = meta("decay", Some(&model), Some(a.seed));
    m.insert(
        "delta_estimate".into(),
        serde_json::to_value(delta).expect("serializes"),
    );
    m.insert("K".into(), json!(trunc.k));
    m.insert(
        "summary".into(),
        fit_summary(report.decay_fit.as_ref(), report.replicates),
    );
    emit(&a.out, csv, m, json!({ "report": report }))
}

fn eq31_model() -> TmaModel {
    TmaModel::new(5.0, -3.0, vec![0.2], vec![0.8], 1, 0.5, Innovation::StandardNormal).expect("valid constants")
}

fn cmd_figure(a: FigureArgs) -> CliResult<()> {
    match a.which {
        Which::Fig1 => {
            let grid = parse_grid(&a.grid)?;
            let curve = ex31_moment_curve(4.0, -1.0, &Innovation::StandardNormal, &grid)?;
            let mut m = meta("figure", None, None);
            m.insert("figure".into(), json!("fig1"));
            m.insert("mu1".into(), json!(4.0));
            m.insert("mu2".into(), json!(-1.0));
            m.insert("grid".into(), json!(a.grid));
            emit_shape_curve(&a.out, curve, m)
        }
        Which::Fig2 => {
            let model = eq31_model();
            let sim = simulate(&model, a.n, a.burn_in, a.method.into(), a.seed)?;
            let report = sample_acf(&sim.path, a.max_lag)?;
            let mut m = path_meta("figure", &model, &sim);
            m.insert("figure".into(), json!("fig2"));
            acf_output(&a.out, report, None, m)
        }
    }
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    passed: bool,
    #[serde(flatten)]
    report: &'a tma::verify::VerificationReport,
}

fn cmd_verify(a: VerifyArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let path = match &a.path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            Some(path_from_csv(&text, &model, a.seed)?)
        }
        None => None,
    };
    let cfg = VerifyConfig {
        seed: a.seed,
        horizon: a.n,
        moment_n: a.moment_n,
        replicates: a.replicates,
        path,
        ..VerifyConfig::default()
    };
    let report = verify(&model, &cfg)?;
    for c in &report.checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A ",
        };
        eprintln!("[{tag}] ({}) {}: {}", c.id, c.name, c.detail);
    }
    let bytes = to_json_bytes(&VerifyOutput {
        passed: report.passed(),
        report: &report,
    })?;
    write_output(a.out.as_deref(), &bytes)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: "verification failed".into(),
        })
    }
}
