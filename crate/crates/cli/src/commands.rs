use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Subcommand};
use markoff_core::analysis::{
    bracket_check, collect_series, default_schedule, fit_power_law, log_spaced, upper_half, CountSeries,
    ExponentEstimate, DEFAULT_NODE_BUDGET, DEFAULT_SAMPLES, DEFAULT_WINDOW,
};
use markoff_core::descent::{find_fundamental_solutions, reduce_to_root, verify_properties};
use markoff_core::engine::{Backend, Checkpoint, CountResult, NodePoint, OrbitSpec, Traversal};
use markoff_core::geodesics::{
    count_one_sided_geodesics, structure_from_lengths, HyperbolicStructure, LengthBound, DEFAULT_TOLERANCE,
};
use markoff_core::threshold::LogBound;
use markoff_core::variety::{format_rational, parse_rational, ExactPoint, VarietyParams};
use markoff_core::{engine::BasePoint, Error};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::plot;

pub const FORMAT_VERSION: u32 = 1;

/// Nodes explored per frontier item between checkpoint saves.
const CHECKPOINT_SEGMENT: u64 = 1 << 20;

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Orbit-ball counting.
    #[command(subcommand)]
    Orbit(OrbitCmd),
    /// Descends a point to the root of its orbit.
    Reduce(ReduceArgs),
    /// Geodesic counting.
    #[command(subcommand)]
    Geodesics(GeodesicsCmd),
    /// Fits N ~ c L^beta to a CSV count series.
    FitBeta(FitBetaArgs),
    /// Counts at log-spaced radii, written as CSV or JSON.
    Series(SeriesArgs),
    /// Orbit roots with all coordinates in 1..=box.
    Fundamental(FundamentalArgs),
    /// Checks the descent properties at every point of a ball.
    Verify(VerifyArgs),
}

#[derive(Subcommand, Debug)]
pub enum OrbitCmd {
    /// Number of orbit points in the ball max x_i <= e^t.
    Count(OrbitCountArgs),
}

#[derive(Subcommand, Debug)]
pub enum GeodesicsCmd {
    /// Orbit count standing in for one-sided geodesics of bounded length.
    Count(GeodesicsCountArgs),
}

#[derive(Args, Debug)]
pub struct OrbitCountArgs {
    /// Comma-separated base point.
    #[arg(long, allow_hyphen_values = true)]
    pub base: String,
    /// Log radius: `6.5`, `ln:100`, `exp:3` or `len:12`.
    #[arg(long)]
    pub log_radius: String,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub point: String,
    /// Include every intermediate point.
    #[arg(long)]
    pub path: bool,
}

#[derive(Args, Debug)]
pub struct GeodesicsCountArgs {
    /// Lengths of the n simplex curves.
    #[arg(long, conflicts_with = "coordinates", required_unless_present = "coordinates")]
    pub lengths: Option<String>,
    /// The structure as a point of the variety.
    #[arg(long)]
    pub coordinates: Option<String>,
    #[arg(long, conflicts_with = "max_coordinate", required_unless_present = "max_coordinate")]
    pub max_length: Option<f64>,
    /// Exact coordinate bound instead of a length.
    #[arg(long)]
    pub max_coordinate: Option<String>,
    /// Relative defect allowed for --lengths.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct FitBetaArgs {
    #[arg(long)]
    pub series: PathBuf,
    /// Fit over all samples instead of the upper half of the range.
    #[arg(long, conflicts_with_all = ["from", "to"])]
    pub all: bool,
    #[arg(long, requires = "to")]
    pub from: Option<f64>,
    #[arg(long, requires = "from")]
    pub to: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Reference interval as `lo,hi`.
    #[arg(long, default_value = "2.430,2.477")]
    pub bracket: String,
}

#[derive(Args, Debug)]
pub struct SeriesArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub base: String,
    /// Node budget used to pick the largest radius.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    pub budget: u64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Explicit range `lo,hi` of log radii instead of the budget schedule.
    #[arg(long)]
    pub range: Option<String>,
    /// Also write the CSV to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FundamentalArgs {
    #[arg(long = "box")]
    pub box_bound: u64,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub base: String,
    #[arg(long)]
    pub log_radius: String,
    /// Number of violations listed in full.
    #[arg(long, default_value_t = 100)]
    pub max_listed: usize,
}

/// Output of one command, rendered to stdout.
pub struct Output {
    pub json: Value,
    pub csv: Option<String>,
    pub text: Option<String>,
}

impl Output {
    fn json(command: &str, body: impl Serialize) -> Output {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Envelope<'a, T> {
            format_version: u32,
            command: &'a str,
            #[serde(flatten)]
            body: T,
        }
        let json = serde_json::to_value(Envelope {
            format_version: FORMAT_VERSION,
            command,
            body,
        })
        .expect("output serializes");
        Output {
            json,
            csv: None,
            text: None,
        }
    }

    fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    fn with_text(mut self, text: String) -> Self {
        self.text = Some(text);
        self
    }

    pub fn render(&self, format: Format) -> Result<String, Error> {
        let missing = |f: &str| {
            Err(Error::InvalidArgument(format!(
                "{f} output is not available for this command"
            )))
        };
        match format {
            Format::Json => Ok(format!("{}\n", to_json(&self.json))),
            Format::Csv => self.csv.clone().map_or_else(|| missing("csv"), Ok),
            Format::Text => self.text.clone().map_or_else(|| missing("text"), Ok),
        }
    }
}

/// Pretty JSON with `formatVersion` kept first.
pub fn to_json(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

fn point_strings(p: &ExactPoint) -> Vec<String> {
    p.coords().iter().map(format_rational).collect()
}

fn base_point(params: &VarietyParams, s: &str) -> Result<ExactPoint, Error> {
    ExactPoint::parse(params, s)
}

pub fn run(cmd: &Command, cfg: &RunConfig) -> Result<Output, Error> {
    match cmd {
        Command::Orbit(OrbitCmd::Count(a)) => orbit_count(a, cfg),
        Command::Reduce(a) => reduce(a, cfg),
        Command::Geodesics(GeodesicsCmd::Count(a)) => geodesics_count(a, cfg),
        Command::FitBeta(a) => fit_beta(a, cfg),
        Command::Series(a) => series(a, cfg),
        Command::Fundamental(a) => fundamental(a, cfg),
        Command::Verify(a) => verify(a, cfg),
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CountBody<'a> {
    n: usize,
    a: String,
    base: Vec<String>,
    log_radius: &'a LogBound,
    backend: Backend,
    precision_bits: u32,
    #[serde(flatten)]
    result: &'a CountResult,
}

fn count_csv(r: &CountResult) -> String {
    let mut s = String::from("depth,count\n");
    for (d, c) in r.by_depth.iter().enumerate() {
        let _ = writeln!(s, "{d},{c}");
    }
    s
}

/// Runs to completion, saving to `path` between segments and resuming
/// from it when it already exists.
fn count_with_checkpoint(spec: &OrbitSpec, cfg: &RunConfig, log_r: &LogBound, path: &Path) -> Result<CountResult, Error> {
    let q = cfg.query(log_r.clone());
    let mut t = if path.exists() {
        Traversal::resume(spec, &q, &Checkpoint::load(path)?)?
    } else {
        Traversal::new(spec, &q)?
    };
    while !t.is_finished() {
        t.run_segment(Some(CHECKPOINT_SEGMENT))?;
        t.checkpoint().save(path)?;
    }
    t.checkpoint().save(path)?;
    Ok(t.results().swap_remove(0))
}

fn orbit_count(a: &OrbitCountArgs, cfg: &RunConfig) -> Result<Output, Error> {
    let base = base_point(&cfg.params, &a.base)?;
    let log_r = LogBound::parse(&a.log_radius)?;
    let spec = OrbitSpec::from_exact(cfg.params.clone(), base.clone())?;
    let result = match &cfg.checkpoint_path {
        Some(p) => count_with_checkpoint(&spec, cfg, &log_r, p)?,
        None => markoff_core::engine::count_ball(&spec, &cfg.query(log_r.clone()))?,
    };
    let text = format!(
        "{} orbit points of {base} with max <= e^({log_r}){}\n",
        result.total,
        if result.truncated_by_depth_cap { " (truncated by the depth cap)" } else { "" }
    );
    Ok(Output::json(
        "orbit count",
        CountBody {
            n: cfg.params.n(),
            a: format_rational(cfg.params.a()),
            base: point_strings(&base),
            log_radius: &log_r,
            backend: cfg.backend,
            precision_bits: cfg.precision.working_bits(),
            result: &result,
        },
    )
    .with_csv(count_csv(&result))
    .with_text(text))
}

fn reduce(a: &ReduceArgs, cfg: &RunConfig) -> Result<Output, Error> {
    let p = base_point(&cfg.params, &a.point)?;
    let cert = reduce_to_root(&cfg.params, &p)?;
    let path = cert.path(&cfg.params);
    let word = cert.word.to_vec();

    let mut text = format!("{p} descends to {} by moves {}\n", cert.root, cert.word);
    if a.path {
        for (i, (m, q)) in word.iter().zip(&path[1..]).enumerate() {
            let _ = writeln!(text, "  step {}: m{m} -> {q}", i + 1);
        }
    }
    let n = cfg.params.n();
    let mut csv = String::from("step,move");
    for i in 1..=n {
        let _ = write!(csv, ",x{i}");
    }
    csv.push('\n');
    for (i, q) in path.iter().enumerate() {
        let m = if i == 0 { String::new() } else { word[i - 1].to_string() };
        let _ = writeln!(csv, "{i},{m},{}", point_strings(q).join(","));
    }

    let mut body = json!({
        "point": point_strings(&p),
        "root": point_strings(&cert.root),
        "word": word,
        "steps": cert.steps.iter().map(format_rational).collect::<Vec<_>>(),
    });
    if a.path {
        body["path"] = json!(path.iter().map(point_strings).collect::<Vec<_>>());
    }
    Ok(Output::json("reduce", body).with_csv(csv).with_text(text))
}

fn geodesics_count(a: &GeodesicsCountArgs, cfg: &RunConfig) -> Result<Output, Error> {
    let j: HyperbolicStructure = match (&a.lengths, &a.coordinates) {
        (Some(l), None) => {
            let lengths: Vec<f64> = l
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad length {s:?}")))
                })
                .collect::<Result<_, _>>()?;
            structure_from_lengths(&cfg.params, &lengths, a.tolerance)?
        }
        (None, Some(c)) => {
            let p = base_point(&cfg.params, c)?;
            HyperbolicStructure::from_point(cfg.params.clone(), BasePoint::Exact(p))?
        }
        _ => return Err(Error::InvalidArgument("give exactly one of --lengths and --coordinates".into())),
    };
    let bound = match (a.max_length, &a.max_coordinate) {
        (Some(l), None) => LengthBound::from_length(l)?,
        (None, Some(x)) => LengthBound::of_coordinate(&parse_rational(x)?)?,
        _ => {
            return Err(Error::InvalidArgument(
                "give exactly one of --max-length and --max-coordinate".into(),
            ))
        }
    };
    let q = cfg.query(bound.threshold().clone());
    let count = count_one_sided_geodesics(&j, &bound, &q)?;
    let csv = format!(
        "length,logThreshold,rawCount,caveat\n{},{},{},{}\n",
        count.length, count.log_threshold, count.raw_count, count.caveat
    );
    let text = format!(
        "{} orbit points for length <= {} (threshold {}); the geodesic count differs by a bounded amount\n",
        count.raw_count, count.length, count.threshold
    );
    Ok(Output::json("geodesics count", &count).with_csv(csv).with_text(text))
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), Error> {
    let bad = || Error::Parse(format!("{what} must be `lo,hi`, got {s:?}"));
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FitBody<'a> {
    #[serde(flatten)]
    estimate: &'a ExponentEstimate,
    slope_spread_first_half: f64,
    slope_spread_last_half: f64,
    bracket: (f64, f64),
    bracket_verdict: markoff_core::analysis::BracketVerdict,
    bracket_margin: f64,
}

fn fit_beta(a: &FitBetaArgs, cfg: &RunConfig) -> Result<Output, Error> {
    let text = std::fs::read_to_string(&a.series)
        .map_err(|e| Error::Io(format!("{}: {e}", a.series.display())))?;
    let series = CountSeries::from_csv(&text)?;
    let range = match (a.from, a.to) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        _ if a.all => None,
        _ => upper_half(&series),
    };
    let est = fit_power_law(&series, range, a.window)?;
    let (lo, hi) = parse_pair(&a.bracket, "--bracket")?;
    let check = bracket_check(est.beta, lo, hi)?;
    let (s1, s2) = est.slope_spreads();
    if let Some(p) = &cfg.plot {
        let svg = plot::log_log_svg(&series, &est);
        std::fs::write(p, svg).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    }
    let csv = format!(
        "beta,logC,rSquared,fitFrom,fitTo,samplesUsed\n{},{},{},{},{},{}\n",
        est.beta, est.log_c, est.r_squared, est.fit_range.0, est.fit_range.1, est.samples_used
    );
    let text = format!(
        "beta = {:.6} (R^2 = {:.6}) over L in [{}, {}], {} samples; {:?} [{lo}, {hi}] by {:.4}\n",
        est.beta, est.r_squared, est.fit_range.0, est.fit_range.1, est.samples_used, check.verdict, check.margin
    );
    Ok(Output::json(
        "fit-beta",
        FitBody {
            estimate: &est,
            slope_spread_first_half: s1,
            slope_spread_last_half: s2,
            bracket: (lo, hi),
            bracket_verdict: check.verdict,
            bracket_margin: check.margin,
        },
    )
    .with_csv(csv)
    .with_text(text))
}

fn series(a: &SeriesArgs, cfg: &RunConfig) -> Result<Output, Error> {
    let base = base_point(&cfg.params, &a.base)?;
    let spec = OrbitSpec::from_exact(cfg.params.clone(), base)?;
    let q = cfg.query(LogBound::from_f64(1.0)?);
    let thresholds = match &a.range {
        Some(r) => {
            let (lo, hi) = parse_pair(r, "--range")?;
            log_spaced(lo, hi, a.samples)?
        }
        None => default_schedule(&spec, &q, a.budget, a.samples)?,
    };
    let mut s = collect_series(&spec, &thresholds, &q)?;
    s.spec_digest = Some(spec.digest());
    let csv = s.to_csv();
    if let Some(p) = &a.out {
        std::fs::write(p, &csv).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(Output::json("series", &s).with_csv(csv.clone()).with_text(csv))
}

fn fundamental(a: &FundamentalArgs, cfg: &RunConfig) -> Result<Output, Error> {
    let sols = find_fundamental_solutions(&cfg.params, a.box_bound)?;
    let n = cfg.params.n();
    let mut csv = (1..=n).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    csv.push('\n');
    let mut text = String::new();
    for p in &sols {
        let _ = writeln!(csv, "{}", point_strings(p).join(","));
        let _ = writeln!(text, "{p}");
    }
    let body = json!({
        "n": n,
        "a": format_rational(cfg.params.a()),
        "box": a.box_bound,
        "solutions": sols.iter().map(point_strings).collect::<Vec<_>>(),
    });
    Ok(Output::json("fundamental", body).with_csv(csv).with_text(text))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Violation {
    word: Vec<usize>,
    point: Vec<String>,
    holds_a: bool,
    holds_b: bool,
    holds_c: bool,
}

fn verify(a: &VerifyArgs, cfg: &RunConfig) -> Result<Output, Error> {
    if cfg.backend == Backend::Log {
        return Err(Error::InvalidArgument("verify needs exact points; use --backend exact or auto".into()));
    }
    let base = base_point(&cfg.params, &a.base)?;
    let log_r = LogBound::parse(&a.log_radius)?;
    let spec = OrbitSpec::from_exact(cfg.params.clone(), base)?;
    let q = cfg.query(log_r.clone()).with_backend(Backend::Exact).with_count_only(false);
    let found: Mutex<Vec<Violation>> = Mutex::new(Vec::new());
    let params = &cfg.params;
    let visit = |w: &markoff_core::variety::ReducedWord, p: &NodePoint| -> Result<(), String> {
        let NodePoint::Exact(x) = p else {
            return Err("expected exact points".into());
        };
        let r = verify_properties(params, x).map_err(|e| e.to_string())?;
        if !(r.holds_a && r.holds_b && r.holds_c) {
            found.lock().map_err(|_| "poisoned")?.push(Violation {
                word: w.to_vec(),
                point: point_strings(x),
                holds_a: r.holds_a,
                holds_b: r.holds_b,
                holds_c: r.holds_c,
            });
        }
        Ok(())
    };
    let result = markoff_core::engine::enumerate_ball(&spec, &q, &visit)?;
    let mut all = found.into_inner().unwrap_or_else(|e| e.into_inner());
    all.sort_by(|x, y| x.word.cmp(&y.word));
    let root_violates = all.first().is_some_and(|v| v.word.is_empty());
    let non_root = all.len() - usize::from(root_violates);
    let listed: Vec<&Violation> = all.iter().take(a.max_listed).collect();

    let csv = {
        let mut s = String::from("word,point,A,B,C\n");
        for v in &all {
            let w: Vec<String> = v.word.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                w.join(" "),
                v.point.join(" "),
                v.holds_a,
                v.holds_b,
                v.holds_c
            );
        }
        s
    };
    let text = format!(
        "checked {} points: {} violation(s) outside the root{}\n",
        result.total,
        non_root,
        if root_violates { " (the root itself fails, as expected)" } else { "" }
    );
    let body = json!({
        "logRadius": log_r,
        "checked": result.total,
        "rootViolates": root_violates,
        "nonRootViolations": non_root,
        "violations": listed,
        "truncatedByDepthCap": result.truncated_by_depth_cap,
    });
    Ok(Output::json("verify", body).with_csv(csv).with_text(text))
}
