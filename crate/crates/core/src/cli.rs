//! Command-line front end: series ingestion, result envelopes, and the
//! `test`, `acf` and `simulate` commands.
//!
//! Exit codes: 0 success, 1 output I/O failure or internal error,
//! 2 usage / parse / malformed config, 3 infeasible lag order,
//! 4 degenerate variance, 5 infeasible simulation design.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::acf::{classical_acf, emit_acf, shift_immune_acf, AcfData, AcfFormat, AcfKind};
use crate::error::SipError;
use crate::estimators::check_order;
use crate::portmanteau::{box_pierce, sip_test, BaselineResult, SipTestResult, SipVariant};
use crate::quadform::TimeSeries;
use crate::simulate::{run_rejection_study_with_threads, SimConfig, SimReport};

pub const RESULT_SCHEMA: &str = "sip-result/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE_LAG: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_INFEASIBLE_DESIGN: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "sip",
    version,
    about = "Shift-immune portmanteau tests for serial correlation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a series for serial correlation.
    Test(TestArgs),
    /// Emit shift-immune and/or classical ACF data.
    Acf(AcfArgs),
    /// Run a Monte Carlo rejection-rate study from a TOML config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestMethod {
    Sip1,
    Sip2,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Sip,
    Classical,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AcfOut {
    Csv,
    Json,
    Svg,
}

impl From<AcfOut> for AcfFormat {
    fn from(v: AcfOut) -> Self {
        match v {
            AcfOut::Csv => AcfFormat::Csv,
            AcfOut::Json => AcfFormat::Json,
            AcfOut::Svg => AcfFormat::Svg,
        }
    }
}

#[derive(Debug, Args)]
pub struct SeriesInput {
    /// Input file: one number per line, or CSV when --column is given.
    pub file: PathBuf,
    /// CSV column holding the series.
    #[arg(long)]
    pub column: Option<String>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: SeriesInput,
    #[arg(long, default_value_t = 4)]
    pub lag: usize,
    #[arg(long, value_enum, default_value_t = TestMethod::Sip2)]
    pub method: TestMethod,
    /// Use 2ŵ in the covariance (valid under the weaker segment-length condition).
    #[arg(long)]
    pub conservative: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct AcfArgs {
    #[command(flatten)]
    pub input: SeriesInput,
    #[arg(long, default_value_t = 20)]
    pub max_lag: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Both)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = AcfOut::Csv)]
    pub out: AcfOut,
    /// Write `acf_<kind>.<ext>` files here. Required output location for
    /// `--kind both`, which defaults to the current directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Directory for report.csv and report.json; CSV goes to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a command produced, before it touches the process streams.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandOutput {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Payload {
    SipTest(SipTestResult),
    Baseline(BaselineResult),
    Acf(Vec<AcfData>),
    Simulation(SimReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub schema: String,
    pub command: Vec<String>,
    pub timestamp: String,
    pub payload: Payload,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ResultEnvelope {
    pub fn new(command: Vec<String>, payload: Payload, warnings: Vec<String>) -> Self {
        Self {
            schema: RESULT_SCHEMA.to_string(),
            command,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            payload,
            warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ErrorBody {
    code: &'static str,
    exit_code: i32,
    message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    fn new(exit_code: i32, message: impl Into<String>) -> Self {
        Self {
            exit_code,
            message: message.into(),
        }
    }

    fn code_name(&self) -> &'static str {
        match self.exit_code {
            EXIT_USAGE => "usage",
            EXIT_INFEASIBLE_LAG => "infeasible_lag",
            EXIT_DEGENERATE => "degenerate_variance",
            EXIT_INFEASIBLE_DESIGN => "infeasible_design",
            _ => "io",
        }
    }

    fn from_sip(err: SipError, invalid_code: i32) -> Self {
        let code = match &err {
            SipError::InvalidArgument(_) => invalid_code,
            SipError::DegenerateVariance { .. } => EXIT_DEGENERATE,
            SipError::InfeasibleDesign(_) => EXIT_INFEASIBLE_DESIGN,
            SipError::NotPositiveDefinite { .. } => EXIT_IO,
        };
        Self::new(code, err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesFormat {
    Plain,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFile {
    pub path: PathBuf,
    pub format: SeriesFormat,
    pub series: TimeSeries,
}

impl SeriesFile {
    pub fn n(&self) -> usize {
        self.series.len()
    }
}

fn parse_value(raw: &str, line: usize) -> Result<f64, CliError> {
    let v: f64 = raw.trim().parse().map_err(|_| {
        CliError::new(
            EXIT_USAGE,
            format!("line {line}: cannot parse {raw:?} as a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(CliError::new(
            EXIT_USAGE,
            format!("line {line}: value is not finite"),
        ));
    }
    Ok(v)
}

/// One number per line; trailing blank lines are ignored, interior ones are errors.
pub fn parse_plain(text: &str) -> Result<Vec<f64>, CliError> {
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let Some(last) = last else {
        return Err(CliError::new(EXIT_USAGE, "input contains no values"));
    };
    lines[..=last]
        .iter()
        .enumerate()
        .map(|(i, l)| parse_value(l, i + 1))
        .collect()
}

pub fn parse_csv_column(text: &str, column: &str) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| CliError::new(EXIT_USAGE, format!("bad CSV header: {e}")))?;
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::new(EXIT_USAGE, format!("CSV has no column {column:?}")))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::new(EXIT_USAGE, format!("bad CSV row: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = rec.get(idx).ok_or_else(|| {
            CliError::new(EXIT_USAGE, format!("row {} lacks column {column:?}", i + 2))
        })?;
        out.push(parse_value(field, i + 2)?);
    }
    if out.is_empty() {
        return Err(CliError::new(EXIT_USAGE, "input contains no values"));
    }
    Ok(out)
}

pub fn read_series(path: &Path, column: Option<&str>) -> Result<SeriesFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))?;
    let (values, format) = match column {
        Some(col) => (parse_csv_column(&text, col)?, SeriesFormat::Csv),
        None => (parse_plain(&text)?, SeriesFormat::Plain),
    };
    let series = TimeSeries::new(values).map_err(|e| CliError::from_sip(e, EXIT_USAGE))?;
    Ok(SeriesFile {
        path: path.to_path_buf(),
        format,
        series,
    })
}

fn finish(result: Result<(String, String), CliError>, json_errors: bool) -> CommandOutput {
    match result {
        Ok((stdout, stderr)) => CommandOutput {
            exit_code: EXIT_OK,
            stdout,
            stderr,
        },
        Err(e) if json_errors => {
            let body = serde_json::json!({
                "schema": RESULT_SCHEMA,
                "error": ErrorBody { code: e.code_name(), exit_code: e.exit_code, message: e.message.clone() },
            });
            CommandOutput {
                exit_code: e.exit_code,
                stdout: format!(
                    "{}\n",
                    serde_json::to_string_pretty(&body).expect("serializable")
                ),
                stderr: String::new(),
            }
        }
        Err(e) => CommandOutput {
            exit_code: e.exit_code,
            stdout: String::new(),
            stderr: format!("error: {}\n", e.message),
        },
    }
}

fn sip_text(r: &SipTestResult) -> String {
    let rho = r
        .rho_hat
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "method: {}\nconservative: {}\nm: {}\nn: {}\nstatistic: {}\ndf: {}\np_value: {}\ngamma0_hat: {}\nw_raw: {}\nw_used: {}\nrho_hat: {}\n",
        r.variant, r.conservative, r.m, r.n, r.statistic, r.df, r.p_value, r.gamma0_used, r.w_raw, r.w_used, rho
    )
}

fn baseline_text(r: &BaselineResult, n: usize) -> String {
    format!(
        "method: box\nm: {}\nn: {n}\nstatistic: {}\ndf: {}\np_value: {}\n",
        r.m, r.statistic, r.m, r.p_value
    )
}

pub fn cmd_test(args: &TestArgs, argv: &[String]) -> CommandOutput {
    let json = args.format == OutputFormat::Json;
    let run = || -> Result<(String, String), CliError> {
        let file = read_series(&args.input.file, args.input.column.as_deref())?;
        let x = &file.series;
        let m = args.lag;
        let mut warnings = Vec::new();
        let (payload, text) = match args.method {
            TestMethod::Box => {
                if m == 0 || m >= x.len() {
                    return Err(CliError::new(
                        EXIT_INFEASIBLE_LAG,
                        format!("lag {m} infeasible for n = {}", x.len()),
                    ));
                }
                let r = box_pierce(x, m, true)
                    .map_err(|e| CliError::from_sip(e, EXIT_INFEASIBLE_LAG))?;
                let text = baseline_text(&r, x.len());
                (Payload::Baseline(r), text)
            }
            TestMethod::Sip1 | TestMethod::Sip2 => {
                check_order(m, x.len()).map_err(|e| CliError::from_sip(e, EXIT_INFEASIBLE_LAG))?;
                let variant = if args.method == TestMethod::Sip1 {
                    SipVariant::Sip1
                } else {
                    SipVariant::Sip2
                };
                let r = sip_test(x, m, variant, args.conservative)
                    .map_err(|e| CliError::from_sip(e, EXIT_INFEASIBLE_LAG))?;
                if r.w_raw < 0.0 {
                    warnings.push(format!(
                        "w estimate {} was negative and clamped to 0",
                        r.w_raw
                    ));
                }
                let text = sip_text(&r);
                (Payload::SipTest(r), text)
            }
        };
        if json {
            let env = ResultEnvelope::new(argv.to_vec(), payload, warnings);
            Ok((
                format!(
                    "{}\n",
                    serde_json::to_string_pretty(&env).expect("serializable")
                ),
                String::new(),
            ))
        } else {
            let mut text = text;
            for w in &warnings {
                text.push_str(&format!("warning: {w}\n"));
            }
            Ok((text, String::new()))
        }
    };
    finish(run(), json)
}

fn acf_file_name(kind: AcfKind, format: AcfFormat) -> String {
    let stem = match kind {
        AcfKind::ShiftImmune => "acf_sip",
        AcfKind::Classical => "acf_classical",
    };
    format!("{stem}.{}", format.extension())
}

pub fn cmd_acf(args: &AcfArgs, _argv: &[String]) -> CommandOutput {
    let run = || -> Result<(String, String), CliError> {
        if args.max_lag == 0 {
            return Err(CliError::new(EXIT_USAGE, "--max-lag must be at least 1"));
        }
        let file = read_series(&args.input.file, args.input.column.as_deref())?;
        let x = &file.series;
        let s = args.max_lag;
        let want_sip = matches!(args.kind, KindArg::Sip | KindArg::Both);
        let want_classical = matches!(args.kind, KindArg::Classical | KindArg::Both);
        if want_sip {
            check_order(s, x.len()).map_err(|e| CliError::from_sip(e, EXIT_INFEASIBLE_LAG))?;
        }
        if want_classical && s >= x.len() {
            return Err(CliError::new(
                EXIT_INFEASIBLE_LAG,
                format!("max lag {s} infeasible for n = {}", x.len()),
            ));
        }
        let mut data = Vec::new();
        if want_sip {
            data.push(
                shift_immune_acf(x, s).map_err(|e| CliError::from_sip(e, EXIT_INFEASIBLE_LAG))?,
            );
        }
        if want_classical {
            data.push(classical_acf(x, s).map_err(|e| CliError::from_sip(e, EXIT_INFEASIBLE_LAG))?);
        }

        let format = AcfFormat::from(args.out);
        let dir = match (&args.output_dir, args.kind) {
            (Some(d), _) => Some(d.clone()),
            (None, KindArg::Both) => Some(PathBuf::from(".")),
            (None, _) => None,
        };
        match dir {
            None => {
                let mut buf = Vec::new();
                emit_acf(&data[0], format, &mut buf)
                    .map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
                Ok((String::from_utf8(buf).expect("utf-8 output"), String::new()))
            }
            Some(dir) => {
                fs::create_dir_all(&dir).map_err(|e| {
                    CliError::new(EXIT_IO, format!("cannot create {}: {e}", dir.display()))
                })?;
                let mut listing = String::new();
                for d in &data {
                    let path = dir.join(acf_file_name(d.kind, format));
                    let mut buf = Vec::new();
                    emit_acf(d, format, &mut buf)
                        .map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
                    fs::write(&path, buf).map_err(|e| {
                        CliError::new(EXIT_IO, format!("cannot write {}: {e}", path.display()))
                    })?;
                    listing.push_str(&format!("{}\n", path.display()));
                }
                Ok((listing, String::new()))
            }
        }
    };
    finish(run(), false)
}

pub fn cmd_simulate(args: &SimulateArgs, _argv: &[String]) -> CommandOutput {
    let run = || -> Result<(String, String), CliError> {
        let text = fs::read_to_string(&args.config).map_err(|e| {
            CliError::new(
                EXIT_USAGE,
                format!("cannot read {}: {e}", args.config.display()),
            )
        })?;
        let cfg = SimConfig::from_toml(&text).map_err(|e| CliError::from_sip(e, EXIT_USAGE))?;
        let report = run_rejection_study_with_threads(&cfg, args.threads)
            .map_err(|e| CliError::from_sip(e, EXIT_USAGE))?;
        match &args.out {
            None => Ok((report.to_csv(), String::new())),
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| {
                    CliError::new(EXIT_IO, format!("cannot create {}: {e}", dir.display()))
                })?;
                let csv_path = dir.join("report.csv");
                let json_path = dir.join("report.json");
                let write = |p: &Path, body: String| {
                    fs::write(p, body).map_err(|e| {
                        CliError::new(EXIT_IO, format!("cannot write {}: {e}", p.display()))
                    })
                };
                write(&csv_path, report.to_csv())?;
                write(&json_path, format!("{}\n", report.to_json()))?;
                Ok((
                    format!(
                        "{}\n{}\nwall_time_secs: {:.3}\n",
                        csv_path.display(),
                        json_path.display(),
                        report.wall_time_secs
                    ),
                    String::new(),
                ))
            }
        }
    };
    finish(run(), false)
}

pub fn run(cli: &Cli, argv: &[String]) -> CommandOutput {
    match &cli.command {
        Command::Test(a) => cmd_test(a, argv),
        Command::Acf(a) => cmd_acf(a, argv),
        Command::Simulate(a) => cmd_simulate(a, argv),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_parsing_rules() {
        assert_eq!(
            parse_plain("1\n2.5\n-3\n\n\n").unwrap(),
            vec![1.0, 2.5, -3.0]
        );
        assert_eq!(parse_plain("  4 \n5").unwrap(), vec![4.0, 5.0]);
        assert_eq!(parse_plain("1\n\n2\n").unwrap_err().exit_code, EXIT_USAGE);
        assert_eq!(parse_plain("1\nabc\n").unwrap_err().exit_code, EXIT_USAGE);
        assert_eq!(parse_plain("1\nNaN\n").unwrap_err().exit_code, EXIT_USAGE);
        assert_eq!(parse_plain("\n\n").unwrap_err().exit_code, EXIT_USAGE);
    }

    #[test]
    fn csv_column_parsing() {
        let text = "t,level\n0,512\n1,498\n2,530\n";
        assert_eq!(
            parse_csv_column(text, "level").unwrap(),
            vec![512.0, 498.0, 530.0]
        );
        assert!(parse_csv_column(text, "missing").is_err());
        assert!(parse_csv_column("t,level\n0,x\n", "level").is_err());
    }

    #[test]
    fn envelope_round_trips() {
        let payload = Payload::Baseline(BaselineResult {
            method: crate::portmanteau::BaselineMethod::Box,
            m: 2,
            statistic: 3.5,
            p_value: 0.17,
        });
        let env = ResultEnvelope::new(vec!["sip".into(), "test".into()], payload, vec!["w".into()]);
        let js = serde_json::to_string(&env).unwrap();
        let back: ResultEnvelope = serde_json::from_str(&js).unwrap();
        assert_eq!(back, env);
        assert_eq!(back.schema, "sip-result/1");
    }
}
