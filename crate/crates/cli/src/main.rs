use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use vrkf::bench::{self, ExperimentConfig, ExperimentId, ExportFormat, SweepParam};
use vrkf::convergence::{required_nu, BoundInputs, BoundReport};
use vrkf::filters::{predict, run_stream, whiten, StreamConfig};
use vrkf::Error;

/// Robust and adaptive Kalman filtering experiments.
#[derive(Debug, Parser)]
#[command(name = "vrkf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and export per-estimator RMSE.
    Run(RunArgs),
    /// Sweep one filter parameter over a list of values.
    Sweep(SweepArgs),
    /// Filter a CSV of measurements row by row.
    Filter(FilterArgs),
    /// Convergence bounds on the degrees of freedom over a measurement slice.
    Bounds(BoundsArgs),
    /// Check experiment or stream config files.
    Validate(ValidateArgs),
    /// List experiments, cases and estimator panels.
    List,
}

#[derive(Debug, Args)]
struct SeedArgs {
    /// Number of Monte Carlo seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// First seed; later seeds count up from it.
    #[arg(long, env = "VRKF_SEED", default_value_t = 1)]
    seed: u64,
}

impl SeedArgs {
    fn list(&self, default_count: usize) -> Vec<u64> {
        let n = self.seeds.unwrap_or(default_count) as u64;
        (self.seed..self.seed + n).collect()
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config file; replaces --experiment/--case/--panel.
    #[arg(long, conflicts_with_all = ["experiment", "case", "panel"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    experiment: Option<String>,
    #[arg(long, default_value_t = 1)]
    case: usize,
    /// Comma-separated estimator names from the registered panel.
    #[arg(long, value_delimiter = ',')]
    panel: Vec<String>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[arg(long)]
    steps: Option<usize>,
    /// Keep per-step channel variance traces (written next to the CSV output).
    #[arg(long)]
    traces: bool,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Print the resolved config as JSON and exit without running.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// One of rho, nu, eta.
    #[arg(long)]
    param: String,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<f64>,
    /// Defaults to the experiment the parameter is usually studied on.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    case: Option<usize>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Stream config: model, filter and optional prior.
    #[arg(long)]
    config: PathBuf,
    /// Measurement CSV (`k, y_1.., [u_1..]`); `-` reads stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Estimate CSV; `-` writes stdout.
    #[arg(long, default_value = "-")]
    output: String,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Stream config whose model, filter and prior are used.
    #[arg(long)]
    config: PathBuf,
    /// Measurement CSV in the `filter` input format.
    #[arg(long)]
    input: PathBuf,
    /// First row of the slice (1-based, inclusive).
    #[arg(long, default_value_t = 1)]
    from: usize,
    /// Last row of the slice (inclusive); defaults to the last row.
    #[arg(long)]
    to: Option<usize>,
    /// Ball radius. Without it each step uses `gamma_factor · ξ`.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    gamma_factor: f64,
    /// Contraction target in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence(_) | Error::NotPositiveDefinite(_) | Error::Singular(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

type CliResult = Result<u8, Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let file = File::open(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<File, Failure> {
    File::create(path).map_err(|e| config_error(format!("cannot write {}: {e}", path.display())))
}

fn header(command: &str, config: &impl serde::Serialize, seeds: &[u64]) -> Vec<String> {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    vec![
        format!("vrkf {} {command}", env!("CARGO_PKG_VERSION")),
        format!("config: {}", serde_json::to_string(config).expect("configs serialize")),
        format!("seeds: {}", if seeds.is_empty() { "none".to_string() } else { seeds.join(",") }),
    ]
}

fn resolve_run(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut cfg: ExperimentConfig = read_json(path)?;
            if args.seeds.seeds.is_some() {
                cfg.seeds = args.seeds.list(0);
            }
            cfg
        }
        None => {
            let experiment: ExperimentId = args.experiment.as_deref().unwrap_or_default().parse()?;
            let mut cfg = ExperimentConfig::registered(experiment, args.case, args.seeds.list(50))?;
            cfg.panel = bench::select_panel(cfg.panel, &args.panel)?;
            cfg
        }
    };
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    cfg.record_traces |= args.traces;
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> CliResult {
    let format: ExportFormat = args.format.parse()?;
    let cfg = resolve_run(&args)?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("configs serialize"));
        return Ok(0);
    }
    // Fail on an unwritable destination before spending time on the run.
    drop(create(&args.out)?);
    let result = bench::run_panel(&cfg)?;
    bench::export(std::slice::from_ref(&result), &args.out, format, &header("run", &cfg, &cfg.seeds))?;
    for e in &result.estimators {
        eprintln!(
            "{:<12} armse {:.5}  iterations {:.3}  divergences {}  {:.2}s",
            e.name,
            e.armse(),
            e.mean_iterations,
            e.divergences,
            e.wall_time_s
        );
    }
    if result.total_divergences() > 0 {
        eprintln!("error: {} estimator run(s) diverged", result.total_divergences());
        return Ok(2);
    }
    Ok(0)
}

fn sweep(args: SweepArgs) -> CliResult {
    let param: SweepParam = args.param.parse()?;
    if args.values.is_empty() {
        return Err(config_error("sweep needs at least one value in --values"));
    }
    let (default_exp, default_case) = param.default_target();
    let experiment = match &args.experiment {
        Some(name) => name.parse()?,
        None => default_exp,
    };
    let case = args.case.unwrap_or(if experiment == default_exp { default_case } else { 1 });
    experiment.check_case(case)?;
    let seeds = args.seeds.list(50);

    #[derive(serde::Serialize)]
    struct Resolved<'a> {
        param: &'a str,
        values: &'a [f64],
        experiment: ExperimentId,
        case: usize,
        steps: usize,
    }
    let resolved = Resolved {
        param: param.name(),
        values: &args.values,
        experiment,
        case,
        steps: args.steps.unwrap_or(experiment.default_steps()),
    };
    let file = create(&args.out)?;
    let rows = bench::sweep(param, &args.values, experiment, case, seeds.clone(), Some(resolved.steps))?;

    let mut out = BufWriter::new(file);
    for line in header("sweep", &resolved, &seeds) {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let n = rows.first().map_or(0, |r| r.rmse.len());
    let mut cols = vec!["param".to_string(), "value".into()];
    cols.extend((1..=n).map(|i| format!("rmse_{i}")));
    cols.extend(["armse".into(), "mean_iterations".into(), "divergences".into()]);
    w.write_record(&cols).map_err(Error::from)?;
    let mut divergences = 0;
    for r in &rows {
        let mut rec = vec![r.param.clone(), r.value.to_string()];
        rec.extend(r.rmse.iter().map(|v| format!("{v:e}")));
        rec.extend([format!("{:e}", r.armse), format!("{}", r.mean_iterations), r.divergences.to_string()]);
        w.write_record(&rec).map_err(Error::from)?;
        divergences += r.divergences;
        eprintln!("{}={:<8} armse {:.5}", r.param, r.value, r.armse);
    }
    w.flush()?;
    Ok(if divergences > 0 { 2 } else { 0 })
}

fn filter(args: FilterArgs) -> CliResult {
    let cfg: StreamConfig = read_json(&args.config)?;
    let input: Box<dyn Read> = if args.input == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(File::open(&args.input).map_err(|e| config_error(format!("{}: {e}", args.input)))?)
    };
    let mut output: Box<dyn Write> = if args.output == "-" {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(create(Path::new(&args.output))?))
    };
    for line in header("filter", &cfg, &[]) {
        writeln!(output, "# {line}")?;
    }
    let rows = run_stream(&cfg, input, &mut output)?;
    output.flush()?;
    eprintln!("filtered {rows} rows");
    Ok(0)
}

/// Reads `y_1..y_m` (and `u_1..` when present) from a measurement CSV.
fn read_measurements(path: &Path, m: usize) -> Result<Vec<(DVector<f64>, Option<DVector<f64>>)>, Failure> {
    let file = File::open(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let headers = reader.headers().map_err(Error::from)?.clone();
    let find = |prefix: &str| -> Vec<usize> {
        (1..)
            .map_while(|i| headers.iter().position(|h| h.trim() == format!("{prefix}{i}")))
            .collect()
    };
    let (ys, us) = (find("y_"), find("u_"));
    if ys.len() != m {
        return Err(config_error(format!("{} has {} measurement columns; model expects {m}", path.display(), ys.len())));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        let parse = |cols: &[usize]| -> Result<DVector<f64>, Failure> {
            let vals = cols
                .iter()
                .map(|&c| {
                    let raw = rec.get(c).unwrap_or("");
                    raw.trim()
                        .parse::<f64>()
                        .map_err(|_| config_error(format!("malformed row at line {line}: cannot parse '{raw}'")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(DVector::from_vec(vals))
        };
        let u = if us.is_empty() { None } else { Some(parse(&us)?) };
        rows.push((parse(&ys)?, u));
    }
    Ok(rows)
}

fn bounds(args: BoundsArgs) -> CliResult {
    let cfg: StreamConfig = read_json(&args.config)?;
    let model = &cfg.model;
    let l = model.channels();
    if cfg.filter.channels.len() != l {
        return Err(config_error(format!(
            "bounds need all {l} whitened channels configured; '{}' has {}",
            cfg.filter.name,
            cfg.filter.channels.len()
        )));
    }
    let tau2: Vec<f64> = cfg.filter.channels.iter().map(|c| c.tau2).collect();
    let rows = read_measurements(&args.input, model.m())?;
    let to = args.to.unwrap_or(rows.len());
    if args.from == 0 || args.from > to || to > rows.len() {
        return Err(config_error(format!("slice {}..={to} is outside rows 1..={}", args.from, rows.len())));
    }

    // Priors come from running the configured filter up to each step.
    let mut est = cfg.estimator()?;
    let mut worst: Option<(usize, BoundReport)> = None;
    let mut max_xi: f64 = 0.0;
    for (k, (y, u)) in rows.iter().enumerate().take(to) {
        if k + 1 >= args.from {
            let (x_prior, p_prior) = predict(model, est.state(), u.as_ref())?;
            let wh = whiten(&x_prior, &p_prior, &model.r, y, &model.c)?;
            let base = BoundInputs::from_whitened(&wh, tau2.clone(), 1.0, args.eta)?;
            let xi = vrkf::convergence::xi_lower_bound(&base)?;
            let gamma = args.gamma.unwrap_or(args.gamma_factor * xi);
            let report = required_nu(&base.with_gamma(gamma)?).map_err(|e| match e {
                Error::NoSolution(msg) => config_error(format!("step {}: {msg}", k + 1)),
                other => other.into(),
            })?;
            max_xi = max_xi.max(report.xi);
            if worst.is_none_or(|(_, w)| report.nu_required() > w.nu_required()) {
                worst = Some((k + 1, report));
            }
        }
        est.step(model, u.as_ref(), y)?;
    }
    let (step, report) = worst.expect("slice is non-empty");
    println!("steps {}..={to}", args.from);
    println!("xi {max_xi:.6e}");
    println!("nu_star {:.6e}", report.nu_star);
    println!("nu_plus {:.6e}", report.nu_plus);
    println!("nu_required {:.6e} (step {step})", report.nu_required());
    let mut all = true;
    for (i, ch) in cfg.filter.channels.iter().enumerate() {
        let ok = report.satisfied_by(ch.nu);
        all &= ok;
        println!("channel {} nu {} {}", i + 1, ch.nu, if ok { "pass" } else { "fail" });
    }
    println!("{}", if all { "all channels satisfy the bound" } else { "some channels violate the bound" });
    Ok(0)
}

fn validate(args: ValidateArgs) -> CliResult {
    let mut failed = 0;
    for path in &args.files {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let verdict = match serde_json::from_str::<ExperimentConfig>(&text) {
            Ok(cfg) => cfg.validate().map(|_| "experiment"),
            Err(exp_err) => match serde_json::from_str::<StreamConfig>(&text) {
                Ok(cfg) => cfg.estimator().map(|_| "stream"),
                Err(_) => Err(Error::Config(format!("neither an experiment nor a stream config: {exp_err}"))),
            },
        };
        match verdict {
            Ok(kind) => println!("ok {} ({kind})", path.display()),
            Err(e) => {
                failed += 1;
                println!("invalid {}: {e}", path.display());
            }
        }
    }
    Ok(if failed > 0 { 1 } else { 0 })
}

fn list() -> CliResult {
    for exp in ExperimentId::ALL {
        for &case in exp.cases() {
            let names: Vec<String> = bench::default_panel(exp, case)?.into_iter().map(|f| f.name).collect();
            println!("{exp} case {case} ({} steps): {}", exp.default_steps(), names.join(", "));
        }
    }
    println!("sweep parameters: rho, nu, eta");
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Filter(a) => filter(a),
        Command::Bounds(a) => bounds(a),
        Command::Validate(a) => validate(a),
        Command::List => list(),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
