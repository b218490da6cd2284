//! Command-line interface. The `pcfl` binary only forwards to [`dispatch`].
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 failed equilibrium
//! check.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::baselines::{run_baseline, Scheme};
use crate::cafl::{solve_cafl, DEFAULT_EPSILON};
use crate::cofl::solve_cofl;
use crate::error::Error;
use crate::model::{
    utility, EquilibriumResult, GameInstance, ParticipantType, StrategyProfile, DEFAULT_ALPHA,
    SCHEMA_VERSION,
};
use crate::oracle::verify_ne;
use crate::popgen::{generate, run_experiment, ExperimentConfig, PopulationSpec};
use crate::threshold::{optimize_threshold_with, SweepEntry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "pcfl",
    version,
    about = "Equilibria of federated-learning participation games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one game for its Nash equilibrium.
    #[command(subcommand)]
    Solve(SolveCommand),
    /// Sweep every integer threshold and report the one with the largest total utility.
    OptimizeThreshold(OptimizeArgs),
    /// Run a comparison scheme.
    Baseline(BaselineArgs),
    /// Check that a profile admits no profitable unilateral deviation.
    Verify(VerifyArgs),
    /// Run a batch experiment described by a JSON config.
    Experiment(ExperimentArgs),
    /// Draw a random population and write it as an instance file.
    Generate(GenerateArgs),
}

#[derive(Subcommand, Debug)]
enum SolveCommand {
    /// Oblivious game: everybody receives the model. Any threshold in the instance is ignored.
    Cofl(SolveArgs),
    /// Aware game: only participants contributing at least the threshold receive the model.
    Cafl(CaflArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Write the full-precision result here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include solver diagnostics (search path, removal rounds).
    #[arg(long)]
    trace: bool,
    /// Output format. CSV has one row per participant.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct CaflArgs {
    #[command(flatten)]
    common: SolveArgs,
    /// Threshold batchsize; overrides `b_th` in the instance.
    #[arg(long = "b-th")]
    b_th: Option<f64>,
    /// Bisection accuracy for the critical batchsize, in samples.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// Instance JSON file; its threshold, if any, is ignored.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the full sweep here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Result or profile JSON with `participants: [{id, batchsize}, ...]`.
    /// Participants listed in `removed_order` are left out of the check.
    #[arg(long)]
    profile: PathBuf,
    /// Threshold to check against; defaults to the instance's, then the profile's.
    #[arg(long = "b-th")]
    b_th: Option<f64>,
    /// Deviation grid size per participant.
    #[arg(long, default_value_t = 10_000)]
    grid: usize,
    /// Tolerated gain relative to max(1, |utility|).
    #[arg(long, default_value_t = 1e-6)]
    margin: f64,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir` in the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of participants.
    #[arg(long)]
    k: usize,
    /// Share of high-quality participants; their count is rounded up.
    #[arg(long, default_value_t = 0.5)]
    hq_fraction: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 30.0)]
    b_max_low: f64,
    #[arg(long, default_value_t = 150.0)]
    b_max_high: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Store a threshold in the instance.
    #[arg(long = "b-th")]
    b_th: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Uniform,
    Optimal,
    Independent,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Uniform => Scheme::Uniform,
            SchemeArg::Optimal => Scheme::Optimal,
            SchemeArg::Independent => Scheme::Independent,
        }
    }
}

enum Failure {
    Usage(String),
    Data(Error),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `argv` (program name first) and runs the command, writing to the
/// process's stdout and stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    dispatch_to(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// As [`dispatch`] with explicit output streams.
pub fn dispatch_to<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match run(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
        Err(Failure::Verify) => EXIT_VERIFY,
    }
}

fn run(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Solve(SolveCommand::Cofl(a)) => solve_cofl_cmd(a, out, err),
        Command::Solve(SolveCommand::Cafl(a)) => solve_cafl_cmd(a, out),
        Command::OptimizeThreshold(a) => optimize_cmd(a, out),
        Command::Baseline(a) => baseline_cmd(a, out),
        Command::Verify(a) => verify_cmd(a, out),
        Command::Experiment(a) => experiment_cmd(a, out),
        Command::Generate(a) => generate_cmd(a, out),
    }
}

#[derive(Serialize)]
struct ParticipantRow {
    id: u32,
    batchsize: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<ParticipantType>,
    utility: f64,
}

fn participant_rows(
    inst: &GameInstance,
    profile: &StrategyProfile,
    labels: Option<&[ParticipantType]>,
) -> Vec<ParticipantRow> {
    inst.players()
        .iter()
        .enumerate()
        .map(|(k, p)| ParticipantRow {
            id: p.id(),
            batchsize: profile.get(k),
            label: labels.map(|l| l[k]),
            utility: utility(inst, k, profile),
        })
        .collect()
}

fn result_doc(kind: &str, inst: &GameInstance, r: &EquilibriumResult) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "b_th": inst.b_th(),
        "critical_id": r.critical_index,
        "property": r.property,
        "global_batchsize": r.global_batchsize(),
        "total_utility": r.total_utility,
        "contributors": r.contributor_count(),
        "removed_order": r.removed,
        "iterations": r.iterations,
        "participants": participant_rows(inst, &r.profile, Some(&r.type_labels)),
    })
}

fn solve_cofl_cmd(a: SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let mut inst = GameInstance::load(&a.instance)?;
    if inst.b_th().is_some() {
        let _ = writeln!(err, "note: ignoring b_th in {}", a.instance.display());
        inst = inst.without_threshold();
    }
    let sol = solve_cofl(&inst)?;
    let mut doc = result_doc("cofl", &inst, &sol.result);
    doc["f_o_at_critical"] = json!(sol.f_o_at_critical);
    if a.trace {
        doc["trace"] = json!(sol.trace);
    }
    emit_result(&doc, a.format, a.out.as_deref(), out)
}

fn solve_cafl_cmd(a: CaflArgs, out: &mut dyn Write) -> Outcome {
    let inst = GameInstance::load(&a.common.instance)?;
    let inst = match (a.b_th, inst.b_th()) {
        (Some(t), _) => inst.without_threshold().with_threshold(t)?,
        (None, Some(_)) => inst,
        (None, None) => {
            return Err(Failure::Usage(
                "the aware game needs a threshold: pass --b-th or set b_th in the instance".into(),
            ))
        }
    };
    let sol = solve_cafl(&inst, a.epsilon)?;
    let mut doc = result_doc("cafl", &inst, &sol.result);
    doc["search_epsilon"] = json!(sol.search_epsilon);
    if a.common.trace {
        doc["trace"] = json!({
            "first_search_rank": sol.first_search_rank,
            "removal_bound": sol.removal_bound(),
            "rounds": sol.rounds,
        });
    }
    emit_result(&doc, a.common.format, a.common.out.as_deref(), out)
}

fn optimize_cmd(a: OptimizeArgs, out: &mut dyn Write) -> Outcome {
    let inst = GameInstance::load(&a.instance)?.without_threshold();
    check_jobs(a.jobs)?;
    let sweep = optimize_threshold_with(&inst, a.epsilon, a.jobs)?;
    let best = sweep.best();
    match (&a.out, a.format) {
        (Some(path), Format::Csv) => sweep.write_csv(path)?,
        (Some(path), Format::Json) => write_json(
            path,
            &json!({
                "schema_version": SCHEMA_VERSION,
                "best_b_th": sweep.best_b_th,
                "entries": sweep.entries,
            }),
        )?,
        (None, Format::Csv) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for e in &sweep.entries {
                let rounded = SweepEntry {
                    total_utility: round6(e.total_utility),
                    global_batchsize: round6(e.global_batchsize),
                    ..e.clone()
                };
                w.serialize(rounded)
                    .map_err(|e| Failure::Data(csv_stdout(e)))?;
            }
            write_stdout(
                out,
                &String::from_utf8_lossy(&w.into_inner().unwrap_or_default()),
            )?;
            return Ok(());
        }
        (None, Format::Json) => {}
    }
    writeln!(
        out,
        "best b_th {}  total utility {}  global batchsize {}  contributors {}  removed {}",
        best.b_th,
        fmt6(best.total_utility),
        fmt6(best.global_batchsize),
        best.contributors,
        best.removed
    )
    .map_err(stdout_err)?;
    Ok(())
}

fn baseline_cmd(a: BaselineArgs, out: &mut dyn Write) -> Outcome {
    let inst = GameInstance::load(&a.instance)?.without_threshold();
    let o = run_baseline(a.scheme.into(), &inst);
    let mut rows = participant_rows(&inst, &o.profile, None);
    for (row, u) in rows.iter_mut().zip(&o.utilities) {
        row.utility = *u;
    }
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "baseline",
        "scheme": o.scheme,
        "global_batchsize": o.global_batchsize(),
        "total_utility": o.total_utility,
        "contributors": o.contributor_count(),
        "participants": rows,
    });
    emit_result(&doc, a.format, a.out.as_deref(), out)
}

fn verify_cmd(a: VerifyArgs, out: &mut dyn Write) -> Outcome {
    let inst = GameInstance::load(&a.instance)?;
    let text = fs::read_to_string(&a.profile).map_err(|e| Error::io(&a.profile, e))?;
    let doc: Value = crate::error::load_json(&a.profile, &text)?;
    let bad = |reason: &str| Failure::Data(Error::param(a.profile.display().to_string(), reason));

    let removed: Vec<u32> = match doc.get("removed_order") {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|_| bad("removed_order must be a list of ids"))?,
        None => Vec::new(),
    };
    let doc_b_th = doc.get("b_th").and_then(Value::as_f64);
    let inst = inst.without(&removed);
    let inst = match a.b_th.or(inst.b_th()).or(doc_b_th) {
        Some(t) => inst.without_threshold().with_threshold(t)?,
        None => inst,
    };

    let rows = doc
        .get("participants")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing `participants` list"))?;
    let mut batch = vec![None; inst.len()];
    for (i, row) in rows.iter().enumerate() {
        let id = row
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad(&format!("participants[{i}].id missing")))? as u32;
        let b = row
            .get("batchsize")
            .and_then(Value::as_f64)
            .ok_or_else(|| bad(&format!("participants[{i}].batchsize missing")))?;
        if removed.contains(&id) {
            continue;
        }
        let pos = inst
            .position_of(id)
            .ok_or_else(|| bad(&format!("participants[{i}].id {id} not in instance")))?;
        batch[pos] = Some(b);
    }
    let batch: Vec<f64> = batch
        .into_iter()
        .zip(inst.players())
        .map(|(b, p)| b.ok_or_else(|| bad(&format!("no batchsize for participant {}", p.id()))))
        .collect::<std::result::Result<_, _>>()?;

    let report = verify_ne(&inst, &StrategyProfile::new(batch), a.grid, a.margin)?;
    for c in &report.participants {
        writeln!(
            out,
            "{:>6}  utility {:>12}  gain {:>12}  {}",
            c.id,
            fmt6(c.utility),
            fmt6(c.gain),
            if c.gain <= c.allowed {
                "ok"
            } else {
                "DEVIATES"
            }
        )
        .map_err(stdout_err)?;
    }
    let verdict = if report.passed {
        "equilibrium"
    } else {
        "not an equilibrium"
    };
    writeln!(out, "{verdict} (max gain {})", fmt6(report.max_gain)).map_err(stdout_err)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn experiment_cmd(a: ExperimentArgs, out: &mut dyn Write) -> Outcome {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = a.out_dir {
        cfg.out_dir = dir;
    }
    check_jobs(a.jobs)?;
    let report = run_experiment(&cfg, a.jobs)?;
    report.write(&cfg.out_dir, &cfg)?;
    writeln!(
        out,
        "{:>5} {:>6} {:>12} {:>12} {:>14} {:>12} {:>10}",
        "k", "hq", "scheme", "contrib", "batchsize", "utility", "growth"
    )
    .map_err(stdout_err)?;
    for s in &report.summary {
        writeln!(
            out,
            "{:>5} {:>6} {:>12} {:>12} {:>14} {:>12} {:>10}",
            s.k,
            fmt6(s.hq_fraction),
            s.scheme,
            fmt6(s.mean_contributors),
            fmt6(s.mean_global_batchsize),
            fmt6(s.mean_total_utility),
            fmt6(s.batchsize_growth)
        )
        .map_err(stdout_err)?;
    }
    writeln!(out, "wrote {}", cfg.out_dir.display()).map_err(stdout_err)?;
    Ok(())
}

fn generate_cmd(a: GenerateArgs, out: &mut dyn Write) -> Outcome {
    let spec = PopulationSpec {
        k: a.k,
        hq_fraction: a.hq_fraction,
        b_max_range: (a.b_max_low, a.b_max_high),
        seed: a.seed,
        alpha: a.alpha,
    };
    let mut inst = generate(&spec)?;
    if let Some(t) = a.b_th {
        inst = inst.with_threshold(t)?;
    }
    // Instances are data, so they keep full precision on stdout too.
    match a.out {
        Some(path) => inst.save(&path)?,
        None => write_stdout(out, &(inst.to_json_string() + "\n"))?,
    }
    Ok(())
}

fn check_jobs(jobs: Option<usize>) -> Outcome {
    match jobs {
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        _ => Ok(()),
    }
}

/// Writes `doc` to `path` at full precision, or prints it rounded to six
/// significant digits.
fn emit_result(doc: &Value, format: Format, path: Option<&Path>, out: &mut dyn Write) -> Outcome {
    match (format, path) {
        (Format::Json, Some(p)) => write_json(p, doc)?,
        (Format::Json, None) => {
            let text = serde_json::to_string_pretty(&round_value(doc)).expect("json");
            write_stdout(out, &(text + "\n"))?;
        }
        (Format::Csv, Some(p)) => {
            let file = fs::File::create(p).map_err(|e| Error::io(p, e))?;
            participants_csv(doc, file).map_err(|source| Error::Csv {
                path: p.to_path_buf(),
                source,
            })?;
        }
        (Format::Csv, None) => {
            let mut buf = Vec::new();
            participants_csv(&round_value(doc), &mut buf).map_err(csv_stdout)?;
            write_stdout(out, &String::from_utf8_lossy(&buf))?;
        }
    }
    if let Some(p) = path {
        let b = doc["global_batchsize"].as_f64().unwrap_or(f64::NAN);
        let u = doc["total_utility"].as_f64().unwrap_or(f64::NAN);
        writeln!(
            out,
            "global batchsize {}  total utility {}  -> {}",
            fmt6(b),
            fmt6(u),
            p.display()
        )
        .map_err(stdout_err)?;
    }
    Ok(())
}

fn participants_csv<W: std::io::Write>(doc: &Value, w: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["id", "batchsize", "label", "utility"])?;
    for row in doc["participants"].as_array().into_iter().flatten() {
        w.write_record([
            row["id"].to_string(),
            row["batchsize"].to_string(),
            row.get("label")
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_string(),
            row["utility"].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, doc: &Value) -> Outcome {
    let text = serde_json::to_string_pretty(doc).expect("json");
    fs::write(path, text + "\n").map_err(|e| Failure::Data(Error::io(path, e)))
}

fn write_stdout(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

fn stdout_err(e: std::io::Error) -> Failure {
    Failure::Data(Error::io("<stdout>", e))
}

fn csv_stdout(source: csv::Error) -> Error {
    Error::Csv {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

/// Rounds `x` to six significant digits.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Formats `x` with six significant digits.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

fn round_value(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => json!(round6(n.as_f64().unwrap_or(0.0))),
        Value::Array(xs) => Value::Array(xs.iter().map(round_value).collect()),
        Value::Object(m) => {
            Value::Object(m.iter().map(|(k, x)| (k.clone(), round_value(x))).collect())
        }
        other => other.clone(),
    }
}
