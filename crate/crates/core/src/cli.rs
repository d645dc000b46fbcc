//! Command-line front end: `simulate`, `verify` and `report`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::flow::{ensemble_header, write_ensemble};
use crate::lie::LieGroupSpec;
use crate::report::{append_ledger, read_ledger, render_table, to_csv, Verdict, VerificationReport};
use crate::suites::{select, SuiteConfig, DEFAULT_GROUPS};
use crate::path::TimeGrid;

pub const SEED_ENV: &str = "PATHGROUP_SEED";

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const INCONCLUSIVE: i32 = 2;
    /// Invalid configuration, missing files and IO errors.
    pub const ERROR: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "pathgroup", version, about = "Monte Carlo verification of path-group identities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a reproducible ensemble of Brownian increments with checksums.
    Simulate(SimulateArgs),
    /// Run verification identities and print a summary table.
    Verify(VerifyArgs),
    /// Render a ledger as a table, JSON lines or CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "so3")]
    pub group: String,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long = "N", default_value_t = 200)]
    pub steps: usize,
    #[arg(long = "M", default_value_t = 1000)]
    pub samples: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 7)]
    pub seed: u64,
    /// Output file; defaults to `ensemble-<group>-<seed>.bin`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// exact, symbolic, statistical, convergence, a module name
    /// (flow, girsanov, heat, representations) or all.
    #[arg(long)]
    pub suite: Option<String>,
    /// Glob over identity names, e.g. 'intertwining*'.
    #[arg(long)]
    pub identity: Option<String>,
    /// Repeatable; defaults to so3 and circle.
    #[arg(long)]
    pub group: Vec<String>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long = "N")]
    pub steps: Option<usize>,
    /// Comma-separated refinement ladder for convergence identities.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<usize>>,
    #[arg(long = "M")]
    pub samples: Option<u64>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// JSON file with campaign fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON-lines ledger to append reports to.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    /// Additional export of this run's reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// List the selected identities without running them.
    #[arg(long)]
    pub list: bool,
    #[arg(long, short, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub ledger: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[arg(long)]
    pub verdict: Option<String>,
}

/// Parses `args` and runs the command, writing to `out`; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::ERROR } else { exit::PASS };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, out),
        Command::Verify(a) => verify(&a, out),
        Command::Report(a) => report(&a, out),
    };
    result.unwrap_or_else(|e| {
        let _ = writeln!(out, "error: {e}");
        exit::ERROR
    })
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = LieGroupSpec::by_name(&a.group)?;
    let grid = TimeGrid::new(a.horizon, a.steps)?;
    if a.samples == 0 {
        return Err(Error::InvalidConfig("M must be positive".into()));
    }
    let path = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("ensemble-{}-{}.bin", spec.label(), a.seed)));
    let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    let digest = write_ensemble(file, &ensemble_header(&spec, grid, a.samples, a.seed))?;
    writeln!(out, "wrote {} paths of {} steps to {}", a.samples, a.steps, path.display())?;
    writeln!(out, "sha256 {digest}")?;
    Ok(exit::PASS)
}

/// Resolves the campaign configuration: defaults, then `--config`, then flags.
pub fn resolve_config(a: &VerifyArgs) -> Result<SuiteConfig> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => SuiteConfig::default(),
    };
    if let Some(v) = a.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = &a.ladder {
        cfg.ladder = v.clone();
    }
    if let Some(v) = a.samples {
        cfg.samples = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// 0 if every report passes, 2 if nothing failed but something was
/// inconclusive, 1 otherwise.
pub fn exit_code(reports: &[VerificationReport]) -> i32 {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        exit::FAIL
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        exit::INCONCLUSIVE
    } else {
        exit::PASS
    }
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = resolve_config(a)?;
    let ids = select(a.suite.as_deref(), a.identity.as_deref())?;
    let names: Vec<String> = if a.group.is_empty() { DEFAULT_GROUPS.iter().map(|s| s.to_string()).collect() } else { a.group.clone() };
    let groups = names.iter().map(|g| LieGroupSpec::by_name(g)).collect::<Result<Vec<_>>>()?;
    if !ids.iter().any(|id| groups.iter().any(|g| id.accepts(g))) {
        return Err(Error::InvalidConfig(format!("no selected identity applies to groups {}", names.join(", "))));
    }
    if a.list {
        for id in &ids {
            let applies: Vec<String> = groups.iter().filter(|g| id.accepts(g)).map(|g| g.label()).collect();
            writeln!(out, "{:<12} {:<52} [{}] {}", id.suite.as_str(), id.name, applies.join(","), id.summary)?;
        }
        return Ok(exit::PASS);
    }
    let mut reports = Vec::new();
    for id in &ids {
        for g in groups.iter().filter(|g| id.accepts(g)) {
            let start = std::time::Instant::now();
            let batch = id.run(g, &cfg);
            if a.verbose > 0 {
                writeln!(out, "# {} on {} took {:.2}s", id.name, g.label(), start.elapsed().as_secs_f64())?;
            }
            for r in &batch {
                writeln!(out, "{}", r.summary_line())?;
                if a.verbose > 1 {
                    for n in &r.notes {
                        writeln!(out, "    note: {n}")?;
                    }
                    for (k, v) in &r.details {
                        writeln!(out, "    {k} = {v:.6e}")?;
                    }
                }
            }
            reports.extend(batch);
        }
    }
    let count = |v: Verdict| reports.iter().filter(|r| r.verdict == v).count();
    writeln!(
        out,
        "{} reports: {} pass, {} fail, {} inconclusive",
        reports.len(),
        count(Verdict::Pass),
        count(Verdict::Fail),
        count(Verdict::Inconclusive)
    )?;
    if let Some(p) = &a.ledger {
        append_ledger(p, &reports)?;
    }
    if let Some(p) = &a.out {
        export(p, a.format, &reports)?;
    }
    Ok(exit_code(&reports))
}

fn render(format: Format, reports: &[VerificationReport]) -> Result<String> {
    Ok(match format {
        Format::Table => render_table(reports),
        Format::Csv => to_csv(reports),
        Format::Json => {
            let mut s = String::new();
            for r in reports {
                s.push_str(&r.to_json()?);
                s.push('\n');
            }
            s
        }
    })
}

fn export(path: &Path, format: Format, reports: &[VerificationReport]) -> Result<()> {
    std::fs::write(path, render(format, reports)?)?;
    Ok(())
}

fn parse_verdict(s: &str) -> Result<Verdict> {
    match s.to_ascii_lowercase().as_str() {
        "pass" => Ok(Verdict::Pass),
        "fail" => Ok(Verdict::Fail),
        "inconclusive" => Ok(Verdict::Inconclusive),
        _ => Err(Error::InvalidConfig(format!("unknown verdict {s}"))),
    }
}

fn report(a: &ReportArgs, out: &mut dyn Write) -> Result<i32> {
    if !a.ledger.exists() {
        return Err(Error::InvalidConfig(format!("ledger {} does not exist", a.ledger.display())));
    }
    let mut reports = read_ledger(&a.ledger)?;
    if let Some(v) = &a.verdict {
        let v = parse_verdict(v)?;
        reports.retain(|r| r.verdict == v);
    }
    write!(out, "{}", render(a.format, &reports)?)?;
    Ok(exit::PASS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("pathgroup").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn zero_steps_is_a_validation_error() {
        let (code, text) = run_str(&["simulate", "--N", "0", "--M", "2", "--out", "/dev/null"]);
        assert_eq!(code, exit::ERROR);
        assert!(text.contains("error"), "{text}");
        let (code, _) = run_str(&["verify", "--suite", "exact", "--N", "0"]);
        assert_eq!(code, exit::ERROR);
    }

    #[test]
    fn unknown_selection_is_an_error() {
        assert_eq!(run_str(&["verify", "--identity", "nope*"]).0, exit::ERROR);
        assert_eq!(run_str(&["verify", "--suite", "heat", "--group", "torus3"]).0, exit::ERROR);
        assert_eq!(run_str(&["verify", "--group", "sl2"]).0, exit::ERROR);
    }

    #[test]
    fn exit_code_contract() {
        let r = |v| VerificationReport::exact("x", "so3", 0.0, 1.0, 0, 0, serde_json::json!({})).with_verdict(v);
        assert_eq!(exit_code(&[r(Verdict::Pass)]), 0);
        assert_eq!(exit_code(&[r(Verdict::Pass), r(Verdict::Inconclusive)]), 2);
        assert_eq!(exit_code(&[r(Verdict::Fail), r(Verdict::Inconclusive)]), 1);
    }

    #[test]
    fn list_reports_applicable_groups() {
        let (code, text) = run_str(&["verify", "--suite", "heat", "--list"]);
        assert_eq!(code, 0);
        assert!(text.contains("heat.trace_moment") && text.contains("[so3]"), "{text}");
    }
}
