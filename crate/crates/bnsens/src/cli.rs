//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 analysis failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bnsens_core::engine::query;
use bnsens_core::oracle::{grid_check, grid_check_bundle, GridReport, OracleError, DEFAULT_STATE_CAP};
use bnsens_core::sensitivity::fit_bundle;
use bnsens_core::{CovaryMode, Evidence, FittedBundle, FunctionBundle, Network, ParameterRef};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::analysis::{analyze, analyze_replay, batch_document, with_threads, AnalysisError};
use crate::generator::{random_network, rng, synthetic_network, GeneratorConfig};
use crate::netparse::{
    parse_case, parse_network, read_document, serialize_network, write_document, NetworkDocument, ParseError,
    FORMAT_VERSION,
};
use crate::paramspec::{format_parameter, format_target, parse_parameter, parse_target, Target};
use crate::report::{read_replay, AnalysisConfig, ReplayEntry, Report};
use crate::sample::sample_csv;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Input(String),
    Analysis(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Input(_) => 2,
            CliError::Analysis(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Input(m) | CliError::Analysis(m) => m,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Threads(_) => CliError::Input(e.to_string()),
            _ => CliError::Analysis(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "bnsens",
    version,
    about = "One-way sensitivity analysis of discrete Bayesian networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file; prints one line per violation
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
    /// Posterior distribution of the target
    Infer(InferArgs),
    /// Sensitivity functions, sensitivity values and vertices per parameter
    Analyze(AnalyzeArgs),
    /// Like analyze, with the admissible deviation of every parameter
    Admissible(AnalyzeArgs),
    /// Tabulate the sensitivity functions of one parameter as CSV
    Sample(SampleArgs),
    /// Re-select parameters of an existing report under new thresholds
    Report(ReportArgs),
    /// Compare fitted functions against brute-force enumeration
    OracleCheck(OracleArgs),
    /// Write a seeded random network
    Generate(GenerateArgs),
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    case: Option<PathBuf>,
    /// "Var"
    #[arg(long)]
    target: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Thresholds {
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    rho_abs: f64,
    #[arg(long, default_value_t = 1.0)]
    rho_rel: f64,
    /// Set the other entries of a column uniformly when the varied entry is 1
    #[arg(long)]
    uniform_fallback: bool,
}

impl Thresholds {
    fn config(&self, steps: usize) -> Result<AnalysisConfig, CliError> {
        let config = AnalysisConfig {
            delta: self.delta,
            rho_abs: self.rho_abs,
            rho_rel: self.rho_rel,
            steps,
            mode: if self.uniform_fallback {
                CovaryMode::UniformFallback
            } else {
                CovaryMode::Strict
            },
        };
        config.check().map_err(CliError::Input)?;
        Ok(config)
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, required_unless_present = "replay")]
    network: Option<PathBuf>,
    /// Report document whose constants are analyzed instead of a network
    #[arg(long, conflicts_with_all = ["network", "case", "cases", "param", "all"])]
    replay: Option<PathBuf>,
    #[arg(long, conflicts_with = "cases")]
    case: Option<PathBuf>,
    /// Directory of case files, analyzed one by one
    #[arg(long)]
    cases: Option<PathBuf>,
    /// "Var" or "Var=value"
    #[arg(long, required_unless_present = "replay")]
    target: Option<String>,
    /// "Var=value | Parent=value, ..."; repeatable
    #[arg(long, conflicts_with = "all")]
    param: Vec<String>,
    #[arg(long)]
    all: bool,
    #[command(flatten)]
    thresholds: Thresholds,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, required_unless_present = "replay")]
    network: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["network", "case"])]
    replay: Option<PathBuf>,
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long, required_unless_present = "replay")]
    target: Option<String>,
    /// Required unless the replayed report has a single entry
    #[arg(long)]
    param: Option<String>,
    #[arg(long, default_value_t = 101)]
    steps: usize,
    #[arg(long)]
    uniform_fallback: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    replay: PathBuf,
    #[command(flatten)]
    thresholds: Thresholds,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, required_unless_present = "seed", conflicts_with = "seed")]
    network: Option<PathBuf>,
    /// Check a random network generated from this seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    case: Option<PathBuf>,
    /// Defaults to the last variable
    #[arg(long)]
    target: Option<String>,
    /// Check these constants instead of fitting them
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, conflicts_with = "replay")]
    param: Vec<String>,
    #[arg(long, default_value_t = 11)]
    grid: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    uniform_fallback: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, required_unless_present = "synthetic")]
    seed: Option<u64>,
    /// The bundled 15-variable network
    #[arg(long, conflicts_with = "seed")]
    synthetic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Validate { network } => validate(&network, stderr),
        Command::Infer(args) => infer(args, stdout),
        Command::Analyze(args) => analyze_command(args, false, stdout),
        Command::Admissible(args) => analyze_command(args, true, stdout),
        Command::Sample(args) => sample(args, stdout),
        Command::Report(args) => report(args, stdout),
        Command::OracleCheck(args) => oracle_check(args, stdout, stderr),
        Command::Generate(args) => generate(args, stdout),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn with_path(path: &Path) -> impl Fn(ParseError) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

fn load_network(path: &Path) -> Result<NetworkDocument, CliError> {
    parse_network(&read(path)?).map_err(with_path(path))
}

fn load_case(path: Option<&Path>, net: &Network) -> Result<(Option<String>, Evidence), CliError> {
    match path {
        Some(p) => {
            let case = parse_case(&read(p)?, net).map_err(with_path(p))?;
            Ok((Some(case.case_id), case.evidence))
        }
        None => Ok((None, Evidence::new())),
    }
}

struct Replay {
    doc: Value,
    target: Option<String>,
    entries: Vec<ReplayEntry>,
}

impl Replay {
    /// Carries the source report's identity and constant count into `report`.
    fn inherit(&self, report: &mut Report) {
        let text = |key: &str| self.doc.get(key).and_then(Value::as_str).map(str::to_owned);
        report.network = text("network");
        report.case_id = text("case_id");
        report.constant_parameters += self.doc.get("constant_parameters").and_then(Value::as_u64).unwrap_or(0) as usize;
    }
}

fn load_replay(path: &Path) -> Result<Replay, CliError> {
    let doc = read_document(&read(path)?).map_err(with_path(path))?;
    let (target, entries) = read_replay(&doc).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(Replay { doc, target, entries })
}

fn validate(path: &Path, stderr: &mut dyn Write) -> Result<(), CliError> {
    match parse_network(&read(path)?) {
        Ok(_) => Ok(()),
        Err(ParseError::Invalid(violations)) => {
            for v in &violations {
                let _ = writeln!(stderr, "{}: {v}", path.display());
            }
            Err(CliError::Input(format!("{} violation(s)", violations.len())))
        }
        Err(e) => Err(with_path(path)(e)),
    }
}

fn infer(args: InferArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let doc = load_network(&args.network)?;
    let net = &doc.network;
    let target = parse_target(net, &args.target).map_err(input)?;
    let (case_id, evidence) = load_case(args.case.as_deref(), net)?;
    let result = query(net, target.variable, &evidence).map_err(|e| CliError::Analysis(e.to_string()))?;
    let posterior = result
        .posterior()
        .ok_or_else(|| CliError::Analysis(AnalysisError::ZeroEvidenceProbability.to_string()))?;
    let labels = net.variable(target.variable).values();
    let dist: serde_json::Map<String, Value> = labels
        .iter()
        .cloned()
        .zip(posterior.into_iter().map(Value::from))
        .collect();
    let out = json!({
        "format_version": FORMAT_VERSION,
        "case_id": case_id,
        "target": net.variable(target.variable).name(),
        "evidence_probability": result.evidence_prob,
        "posterior": dist,
    });
    emit(args.out.as_deref(), &write_document(&out), stdout)
}

fn select_params(net: &Network, specs: &[String], all: bool) -> Result<Vec<ParameterRef>, CliError> {
    if all {
        return Ok(net.parameters());
    }
    if specs.is_empty() {
        return Err(CliError::Input("give --param or --all".into()));
    }
    specs.iter().map(|s| parse_parameter(net, s).map_err(input)).collect()
}

fn whole_variable(net: &Network, text: &str) -> Result<Target, CliError> {
    let target = parse_target(net, text).map_err(input)?;
    if target.focus.is_some() {
        return Err(CliError::Input(format!(
            "admissible deviations need a variable as target, got {text:?}"
        )));
    }
    Ok(target)
}

fn analyze_command(args: AnalyzeArgs, deviations: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = args.thresholds.config(AnalysisConfig::default().steps)?;
    let text = with_threads(args.threads, || -> Result<String, CliError> {
        if let Some(path) = &args.replay {
            let replay = load_replay(path)?;
            let target = args.target.clone().or(replay.target.clone()).unwrap_or_default();
            let mut report = analyze_replay(target, &replay.entries, deviations, &config);
            replay.inherit(&mut report);
            return Ok(write_document(&report.to_json()));
        }
        let path = args.network.as_deref().expect("required by clap");
        let doc = load_network(path)?;
        let net = &doc.network;
        let spec = args.target.as_deref().expect("required by clap");
        let target = if deviations {
            whole_variable(net, spec)?
        } else {
            parse_target(net, spec).map_err(input)?
        };
        let params = select_params(net, &args.param, args.all)?;
        let run = |case_id: Option<String>, evidence: &Evidence| -> Result<Report, CliError> {
            let mut report = analyze(net, evidence, target, &params, &config)?;
            report.network = doc.name.clone();
            report.case_id = case_id;
            Ok(report)
        };
        match &args.cases {
            Some(dir) => {
                let mut reports = Vec::new();
                for file in case_files(dir)? {
                    let (case_id, evidence) = load_case(Some(&file), net)?;
                    reports.push(run(case_id, &evidence)?);
                }
                Ok(write_document(&batch_document(&reports)))
            }
            None => {
                let (case_id, evidence) = load_case(args.case.as_deref(), net)?;
                Ok(write_document(&run(case_id, &evidence)?.to_json()))
            }
        }
    })??;
    emit(args.out.as_deref(), &text, stdout)
}

/// `*.json` files of `dir`, sorted by name.
fn case_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Io(e.to_string()))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn normalize_spec(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn sample(args: SampleArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (labels, bundle): (Vec<String>, FunctionBundle) = if let Some(path) = &args.replay {
        let entries = load_replay(path)?.entries;
        let chosen = match &args.param {
            Some(p) => entries
                .into_iter()
                .find(|e| normalize_spec(&e.parameter_spec) == normalize_spec(p))
                .ok_or_else(|| CliError::Input(format!("no entry for parameter {p:?}")))?,
            None if entries.len() == 1 => entries.into_iter().next().expect("one entry"),
            None => return Err(CliError::Input("give --param to pick a replayed entry".into())),
        };
        (chosen.labels, chosen.bundle)
    } else {
        let doc = load_network(args.network.as_deref().expect("required by clap"))?;
        let net = &doc.network;
        let target = parse_target(net, args.target.as_deref().expect("required by clap")).map_err(input)?;
        let p = parse_parameter(
            net,
            args.param
                .as_deref()
                .ok_or_else(|| CliError::Input("give --param".into()))?,
        )
        .map_err(input)?;
        let (_, evidence) = load_case(args.case.as_deref(), net)?;
        let mode = if args.uniform_fallback {
            CovaryMode::UniformFallback
        } else {
            CovaryMode::Strict
        };
        let fitted =
            fit_bundle(net, &p, target.variable, &evidence, mode).map_err(|e| CliError::Analysis(e.to_string()))?;
        (net.variable(target.variable).values().to_vec(), fitted.bundle)
    };
    let csv = sample_csv(&labels, &bundle, args.steps).map_err(input)?;
    emit(args.out.as_deref(), &csv, stdout)
}

fn report(args: ReportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = args.thresholds.config(AnalysisConfig::default().steps)?;
    let replay = load_replay(&args.replay)?;
    let mut report = analyze_replay(
        replay.target.clone().unwrap_or_default(),
        &replay.entries,
        false,
        &config,
    );
    replay.inherit(&mut report);
    report.entries.retain(|e| e.is_selected());
    emit(args.out.as_deref(), &write_document(&report.to_json()), stdout)
}

fn oracle_check(args: OracleArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mode = if args.uniform_fallback {
        CovaryMode::UniformFallback
    } else {
        CovaryMode::Strict
    };
    let net = match (&args.network, args.seed) {
        (Some(path), _) => load_network(path)?.network,
        (None, Some(seed)) => random_network(&mut rng(seed), &GeneratorConfig::default()),
        (None, None) => unreachable!("required by clap"),
    };
    let target = match &args.target {
        Some(t) => whole_variable(&net, t)?,
        None => Target {
            variable: bnsens_core::VarId(net.len() - 1),
            focus: None,
        },
    };
    let (_, evidence) = load_case(args.case.as_deref(), &net)?;
    let oracle_error = |spec: &str, e: OracleError| match e {
        OracleError::NetworkTooLarge { .. } | OracleError::InvalidGrid(_) => CliError::Input(e.to_string()),
        other => CliError::Analysis(format!("{spec}: {other}")),
    };

    let mut reports: Vec<(String, GridReport)> = Vec::new();
    if let Some(path) = &args.replay {
        let entries = load_replay(path)?.entries;
        for e in entries {
            let p = parse_parameter(&net, &e.parameter_spec).map_err(input)?;
            let fitted = FittedBundle {
                parameter: p,
                target: target.variable,
                evidence: evidence.clone(),
                bundle: e.bundle,
            };
            let r = grid_check_bundle(&net, &fitted, args.grid, args.tol, mode, DEFAULT_STATE_CAP)
                .map_err(|err| oracle_error(&e.parameter_spec, err))?;
            reports.push((e.parameter_spec, r));
        }
    } else {
        let params = if args.param.is_empty() {
            net.parameters()
        } else {
            select_params(&net, &args.param, false)?
        };
        for p in &params {
            let spec = format_parameter(&net, p);
            let r = grid_check(
                &net,
                p,
                target.variable,
                &evidence,
                args.grid,
                args.tol,
                mode,
                DEFAULT_STATE_CAP,
            )
            .map_err(|err| oracle_error(&spec, err))?;
            reports.push((spec, r));
        }
    }

    let failed: Vec<&(String, GridReport)> = reports.iter().filter(|(_, r)| !r.passed()).collect();
    let max_error = reports.iter().map(|(_, r)| r.max_abs_error).fold(0.0, f64::max);
    let summary = json!({
        "format_version": FORMAT_VERSION,
        "target": format_target(&net, target),
        "grid": args.grid,
        "tolerance": args.tol,
        "parameters": reports.len(),
        "passed": reports.len() - failed.len(),
        "max_abs_error": max_error,
        "skipped_points": reports.iter().map(|(_, r)| r.skipped).sum::<usize>(),
        "failures": failed.iter().map(|(spec, r)| json!({
            "parameter": spec,
            "max_abs_error": if r.max_abs_error.is_finite() { json!(r.max_abs_error) } else { json!("nan") },
        })).collect::<Vec<_>>(),
    });
    emit(args.out.as_deref(), &write_document(&summary), stdout)?;
    if failed.is_empty() {
        Ok(())
    } else {
        for (spec, r) in &failed {
            let _ = writeln!(
                stderr,
                "{spec}: max abs error {:e} exceeds {:e}",
                r.max_abs_error, args.tol
            );
        }
        Err(CliError::Analysis(format!(
            "{} parameter(s) failed the grid check",
            failed.len()
        )))
    }
}

fn generate(args: GenerateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (name, network) = match args.seed {
        Some(seed) => (
            format!("random-{seed}"),
            random_network(&mut rng(seed), &GeneratorConfig::default()),
        ),
        None => (String::from("synthetic-15"), synthetic_network()),
    };
    let doc = NetworkDocument {
        format_version: FORMAT_VERSION.into(),
        name: Some(name),
        description: None,
        network,
    };
    emit(args.out.as_deref(), &serialize_network(&doc), stdout)
}
