//! Command-line front end.
//!
//! Options resolve as command line, then the `--config` JSON file, then
//! built-in defaults. Exit codes: 0 success, 1 internal failure, 2 usage.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::adversary::Strategy;
use crate::analysis::{enumerate_plan, monte_carlo, statistics, sweep, CurvePoint, SweepSpec};
use crate::branching::SamplingChooser;
use crate::error::Error;
use crate::protocol::{play_round, run_transcript, ProtocolConfig, RoundOutcome, Transcript};
use crate::selftest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const CURVE_HEADER: &str = "eta,i_ae,i_ab,i_be,qber,alice_detect_rate,bob_return_rate,mu,filter_pass";

#[derive(Parser, Debug)]
#[command(name = "pingpong", version, about = "Ping-pong protocol simulator and attack analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact outcome statistics by enumerating every branch of a round
    Analytic(CommonArgs),
    /// Monte Carlo run with a full transcript
    Simulate(CommonArgs),
    /// Information and rate curves versus channel efficiency
    Sweep(SweepArgs),
    /// State after every step of one sampled round
    Trace(TraceArgs),
    /// Run the built-in acceptance checks
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum StrategyArg {
    None,
    /// Attack every round
    Attack,
    /// Attack a fraction `--mu` of rounds
    Partial,
    /// Attack the largest fraction that keeps the loss statistics unchanged
    LossHiding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Attacked fraction for `--strategy partial`
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    symmetrize: bool,
    #[arg(long)]
    countermeasure: bool,
    #[arg(long)]
    control_prob: Option<f64>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file (default standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat JSON object of option names
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    eta_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Recompute every point by exact enumeration and compare
    #[arg(long)]
    cross_check: bool,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Round index within the seeded run
    #[arg(long)]
    round: Option<u64>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Monte Carlo rounds for the sampling check
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    eta: Option<f64>,
    strategy: Option<StrategyArg>,
    mu: Option<f64>,
    symmetrize: Option<bool>,
    countermeasure: Option<bool>,
    #[serde(alias = "control-prob")]
    control_prob: Option<f64>,
    rounds: Option<u64>,
    seed: Option<u64>,
    format: Option<Format>,
    out: Option<PathBuf>,
    #[serde(alias = "eta-min")]
    eta_min: Option<f64>,
    #[serde(alias = "eta-max")]
    eta_max: Option<f64>,
    steps: Option<usize>,
    #[serde(alias = "cross-check")]
    cross_check: Option<bool>,
    round: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Internal(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Options after merging the three sources.
#[derive(Debug, Clone, Serialize)]
struct Effective {
    #[serde(flatten)]
    protocol: ProtocolConfig,
    strategy: Strategy,
    format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

fn load_file(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

fn resolve(args: &CommonArgs, file: &FileConfig, default_format: Format) -> CliResult<Effective> {
    let defaults = ProtocolConfig::default();
    let protocol = ProtocolConfig {
        eta: args.eta.or(file.eta).unwrap_or(defaults.eta),
        control_prob: args.control_prob.or(file.control_prob).unwrap_or(defaults.control_prob),
        countermeasure: args.countermeasure || file.countermeasure.unwrap_or(defaults.countermeasure),
        rounds: args.rounds.or(file.rounds).unwrap_or(defaults.rounds),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
    };
    protocol.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if protocol.rounds == 0 {
        return Err(CliError::Usage("--rounds must be at least 1".into()));
    }
    let symmetrize = args.symmetrize || file.symmetrize.unwrap_or(false);
    let mu = args.mu.or(file.mu);
    let kind = args.strategy.or(file.strategy).unwrap_or(StrategyArg::None);
    let strategy = match kind {
        StrategyArg::None => Strategy::None,
        StrategyArg::Attack => Strategy::FullAttack { symmetrize },
        StrategyArg::Partial => Strategy::PartialAttack {
            mu: mu.ok_or_else(|| CliError::Usage("--strategy partial needs --mu".into()))?,
            symmetrize,
        },
        StrategyArg::LossHiding => {
            Strategy::loss_hiding(protocol.eta, symmetrize).map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    if mu.is_some() && kind != StrategyArg::Partial {
        return Err(CliError::Usage("--mu applies only to --strategy partial".into()));
    }
    strategy.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Effective {
        protocol,
        strategy,
        format: args.format.or(file.format).unwrap_or(default_format),
        out: args.out.clone().or_else(|| file.out.clone()),
    })
}

/// Formats `v` in fixed notation with 9 significant digits.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0.00000000".to_string();
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = |e: i32| (8 - e).max(0) as usize;
    let mut s = format!("{:.*}", decimals(exponent), v);
    // rounding may carry into a new leading digit
    let rounded: f64 = s.parse().expect("formatted float parses");
    let new_exponent = rounded.abs().log10().floor() as i32;
    if new_exponent != exponent {
        s = format!("{:.*}", decimals(new_exponent), v);
    }
    s
}

/// Writes curve points as CSV. Fails without writing on an empty list.
pub fn write_curve_csv(points: &[CurvePoint], sink: &mut dyn Write) -> io::Result<()> {
    if points.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no curve points to write"));
    }
    let mut text = String::with_capacity(64 * (points.len() + 1));
    text.push_str(CURVE_HEADER);
    text.push('\n');
    for p in points {
        let row = [p.eta, p.i_ae, p.i_ab, p.i_be, p.qber, p.alice_detect_rate, p.bob_return_rate, p.mu, p.filter_pass]
            .map(format_sig9)
            .join(",");
        text.push_str(&row);
        text.push('\n');
    }
    sink.write_all(text.as_bytes())
}

/// Writes a transcript as one JSON document with a trailing newline.
pub fn write_transcript_json(t: &Transcript, sink: &mut dyn Write) -> io::Result<()> {
    serde_json::to_writer(&mut *sink, t)?;
    sink.write_all(b"\n")
}

fn open_sink<'a>(out: Option<&Path>, stdout: &'a mut dyn Write) -> CliResult<Box<dyn Write + 'a>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", path.display())))?,
        )),
        None => Box::new(stdout),
    })
}

fn opt_number(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

fn analytic_report(eff: &Effective) -> CliResult<Map<String, Value>> {
    let plan = eff.strategy.plan(eff.protocol.eta).map_err(Error::from)?;
    let dist = enumerate_plan(&eff.protocol, &plan)?;
    let stats = statistics(&dist)?;
    let mut report = Map::new();
    report.insert("config".into(), serde_json::to_value(eff)?);
    report.insert("plan".into(), serde_json::to_value(plan)?);
    // p_jkm over attacked valid message rounds
    let attacked = dist.condition(&[("mode", "message"), ("discard", "none"), ("attacked", "1")]);
    for j in ["0", "1"] {
        for k in ["0", "1"] {
            for m in ["0", "1"] {
                let p = match &attacked {
                    Ok(t) => Some(t.prob(&[("j", j), ("k", k), ("m", m)]).map_err(Error::from)?),
                    Err(_) => None,
                };
                report.insert(format!("p_{j}{k}{m}"), opt_number(p));
            }
        }
    }
    if let Value::Object(fields) = serde_json::to_value(&stats)? {
        report.extend(fields);
    }
    Ok(report)
}

fn write_report(report: &Map<String, Value>, format: Format, sink: &mut dyn Write) -> CliResult<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *sink, report)?;
            sink.write_all(b"\n")?;
        }
        Format::Csv => {
            writeln!(sink, "quantity,value")?;
            for (key, value) in report {
                if let Some(v) = value.as_f64() {
                    writeln!(sink, "{key},{}", format_sig9(v))?;
                }
            }
        }
        Format::Text => {
            for (key, value) in report {
                match value {
                    Value::Number(n) => writeln!(sink, "{key:28} {}", format_sig9(n.as_f64().unwrap_or(f64::NAN)))?,
                    Value::Null => writeln!(sink, "{key:28} undefined")?,
                    other => writeln!(sink, "{key:28} {other}")?,
                }
            }
        }
    }
    Ok(())
}

fn echo_config(err: &mut dyn Write, value: &impl Serialize) -> CliResult<()> {
    writeln!(err, "config: {}", serde_json::to_string(value)?)?;
    Ok(())
}

fn cmd_analytic(args: &CommonArgs, out: &mut dyn Write) -> CliResult<()> {
    let file = load_file(args.config.as_deref())?;
    let eff = resolve(args, &file, Format::Text)?;
    let report = analytic_report(&eff)?;
    let mut sink = open_sink(eff.out.as_deref(), out)?;
    write_report(&report, eff.format, &mut *sink)?;
    sink.flush()?;
    Ok(())
}

fn round_csv_row(r: &RoundOutcome) -> String {
    let bit = |v: Option<u8>| v.map_or(String::new(), |b| b.to_string());
    let flag = |v: Option<bool>| v.map_or(String::new(), |b| u8::from(b).to_string());
    [
        match r.mode {
            crate::protocol::RoundMode::Message => "message".to_string(),
            crate::protocol::RoundMode::Control => "control".to_string(),
        },
        bit(r.j),
        bit(r.k),
        bit(r.m),
        flag(r.s_flag),
        u8::from(r.attacked).to_string(),
        flag(r.alice_detected),
        bit(r.alice_pol),
        bit(r.bob_home_pol),
        flag(r.bob_travel_occupied),
        u8::from(r.discarded).to_string(),
        r.discard_reason.as_str().to_string(),
    ]
    .join(",")
}

fn cmd_simulate(args: &CommonArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let file = load_file(args.config.as_deref())?;
    let eff = resolve(args, &file, Format::Text)?;
    match eff.format {
        Format::Json => {
            let t = run_transcript(&eff.protocol, &eff.strategy)?;
            let mut sink = open_sink(eff.out.as_deref(), out)?;
            write_transcript_json(&t, &mut *sink)?;
            sink.flush()?;
        }
        Format::Csv => {
            echo_config(err, &eff)?;
            let t = run_transcript(&eff.protocol, &eff.strategy)?;
            let mut sink = open_sink(eff.out.as_deref(), out)?;
            writeln!(
                sink,
                "round,mode,j,k,m,s_flag,attacked,alice_detected,alice_pol,bob_home_pol,bob_travel_occupied,discarded,discard_reason"
            )?;
            for (i, r) in t.rounds.iter().enumerate() {
                writeln!(sink, "{i},{}", round_csv_row(r))?;
            }
            sink.flush()?;
        }
        Format::Text => {
            let result = monte_carlo(&eff.protocol, &eff.strategy)?;
            let stats = statistics(&result.distribution)?;
            let mut report = Map::new();
            report.insert("config".into(), serde_json::to_value(&eff)?);
            if let Value::Object(fields) = serde_json::to_value(&result.summary)? {
                report.extend(fields);
            }
            if let Value::Object(fields) = serde_json::to_value(&stats)? {
                report.extend(fields);
            }
            let mut sink = open_sink(eff.out.as_deref(), out)?;
            write_report(&report, Format::Text, &mut *sink)?;
            sink.flush()?;
        }
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let file = load_file(args.common.config.as_deref())?;
    let defaults = SweepSpec::default();
    let common = &args.common;
    if common.eta.is_some() || common.mu.is_some() || common.rounds.is_some() {
        return Err(CliError::Usage("sweep takes --eta-min/--eta-max/--steps, not --eta, --mu or --rounds".into()));
    }
    let kind = common.strategy.or(file.strategy).unwrap_or(StrategyArg::Attack);
    let attack = match kind {
        StrategyArg::None => false,
        StrategyArg::Attack | StrategyArg::LossHiding => true,
        StrategyArg::Partial => {
            return Err(CliError::Usage("sweep sets the attacked fraction per point; use --strategy attack".into()))
        }
    };
    let spec = SweepSpec {
        eta_min: args.eta_min.or(file.eta_min).unwrap_or(defaults.eta_min),
        eta_max: args.eta_max.or(file.eta_max).unwrap_or(defaults.eta_max),
        steps: args.steps.or(file.steps).unwrap_or(defaults.steps),
        attack,
        symmetrize: common.symmetrize || file.symmetrize.unwrap_or(false),
        cross_check: args.cross_check || file.cross_check.unwrap_or(false),
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let format = common.format.or(file.format).unwrap_or(Format::Csv);
    let out_path = common.out.clone().or(file.out);
    let result = sweep(&spec)?;
    let mut sink = open_sink(out_path.as_deref(), out)?;
    match format {
        Format::Csv => {
            echo_config(err, &spec)?;
            write_curve_csv(&result.points, &mut *sink)?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *sink, &result)?;
            sink.write_all(b"\n")?;
        }
        Format::Text => {
            writeln!(sink, "config: {}", serde_json::to_string(&spec)?)?;
            writeln!(sink, "{:>10} {:>10} {:>10} {:>10} {:>10}", "eta", "i_ae", "i_ab", "i_be", "qber")?;
            for p in &result.points {
                writeln!(sink, "{:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}", p.eta, p.i_ae, p.i_ab, p.i_be, p.qber)?;
            }
            writeln!(sink, "i_ae non-increasing: {}", result.i_ae_non_increasing)?;
            writeln!(sink, "i_ab non-decreasing: {}", result.i_ab_non_decreasing)?;
            if let Some(d) = result.max_cross_check_deviation {
                writeln!(sink, "max deviation from enumeration: {d:e}")?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}

fn cmd_trace(args: &TraceArgs, out: &mut dyn Write) -> CliResult<()> {
    let file = load_file(args.common.config.as_deref())?;
    let eff = resolve(&args.common, &file, Format::Text)?;
    let index = args.round.or(file.round).unwrap_or(0);
    let plan = eff.strategy.plan(eff.protocol.eta).map_err(Error::from)?;
    let mut steps: Vec<(String, String)> = Vec::new();
    let mut chooser = SamplingChooser::for_round(eff.protocol.seed, index);
    let outcome = play_round(&eff.protocol, &plan, &mut chooser, &mut |label, psi| {
        steps.push((label.to_string(), psi.to_string()))
    });
    let mut sink = open_sink(eff.out.as_deref(), out)?;
    match eff.format {
        Format::Json => {
            let doc = json!({
                "config": eff,
                "round": index,
                "steps": steps.iter().map(|(l, s)| json!({"step": l, "state": s})).collect::<Vec<_>>(),
                "outcome": outcome,
            });
            serde_json::to_writer_pretty(&mut *sink, &doc)?;
            sink.write_all(b"\n")?;
        }
        Format::Csv => {
            writeln!(sink, "step,state")?;
            for (l, s) in &steps {
                writeln!(sink, "{l},\"{s}\"")?;
            }
        }
        Format::Text => {
            writeln!(sink, "config: {}", serde_json::to_string(&eff)?)?;
            writeln!(sink, "round {index}")?;
            for (l, s) in &steps {
                writeln!(sink, "{l}:\n  {s}")?;
            }
            writeln!(sink, "outcome: {}", serde_json::to_string(&outcome)?)?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn cmd_selftest(args: &SelftestArgs, out: &mut dyn Write) -> CliResult<()> {
    let rounds = args.rounds.unwrap_or(selftest::DEFAULT_MC_ROUNDS);
    if rounds == 0 {
        return Err(CliError::Usage("--rounds must be at least 1".into()));
    }
    let seed = args.seed.unwrap_or(ProtocolConfig::default().seed);
    writeln!(out, "config: {}", json!({"rounds": rounds, "seed": seed}))?;
    let checks = selftest::run_all(rounds, seed);
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} passed, {failed} failed", checks.len() - failed)?;
    if failed > 0 {
        return Err(CliError::Internal(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_cli<S: AsRef<str>>(argv: &[S], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(|s| s.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            let informational = !e.use_stderr();
            let text = e.render().to_string();
            let _ = if informational { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return if informational { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let result = match &cli.command {
        Command::Analytic(a) => cmd_analytic(a, out),
        Command::Simulate(a) => cmd_simulate(a, out, err),
        Command::Sweep(a) => cmd_sweep(a, out, err),
        Command::Trace(a) => cmd_trace(a, out),
        Command::Selftest(a) => cmd_selftest(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Internal(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::closed_form_point;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut argv = vec!["pingpong"];
        argv.extend_from_slice(args);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(&argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.5), "0.500000000");
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(0.0), "0.00000000");
        assert_eq!(format_sig9(0.0737609), "0.0737609000");
        assert_eq!(format_sig9(0.9999999999), "1.00000000");
        assert_eq!(format_sig9(-0.25), "-0.250000000");
    }

    #[test]
    fn curve_row_at_half() {
        let mut buf = Vec::new();
        write_curve_csv(&[closed_form_point(0.5, true).unwrap()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CURVE_HEADER));
        assert!(lines.next().unwrap().starts_with("0.500000000,0.311278124,0.188721876,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn empty_curve_rejected() {
        let mut buf = Vec::new();
        assert!(write_curve_csv(&[], &mut buf).is_err());
        assert!(buf.is_empty());
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(&["simulate", "--rounds", "0"]).0, EXIT_USAGE);
        assert_eq!(run(&["analytic", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run(&["analytic", "--eta", "1.5"]).0, EXIT_USAGE);
        assert_eq!(run(&["analytic", "--strategy", "partial"]).0, EXIT_USAGE);
        assert_eq!(run(&[]).0, EXIT_USAGE);
        assert_eq!(run(&["sweep", "--steps", "1"]).0, EXIT_USAGE);
    }
}
