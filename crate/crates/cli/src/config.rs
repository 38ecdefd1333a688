//! Run configuration: flags, then environment, then a key=value file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use markoff_core::engine::{Backend, BallQuery, DEFAULT_DEPTH_CAP};
use markoff_core::numerics::PrecisionConfig;
use markoff_core::threshold::LogBound;
use markoff_core::variety::{parse_rational, VarietyParams};
use markoff_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            other => Err(Error::InvalidArgument(format!(
                "unknown format {other:?} (expected json, csv or text)"
            ))),
        }
    }
}

/// Options shared by every command. All are optional so a config file can
/// fill the gaps.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// Number of coordinates.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Coefficient of the product term (integer, decimal or p/q).
    #[arg(long, global = true)]
    pub a: Option<String>,
    /// exact, log or auto.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Working precision of the log backend in bits.
    #[arg(long, global = true, env = "MARKOFF_PRECISION")]
    pub precision: Option<u32>,
    /// Error budget of the log backend.
    #[arg(long, global = true)]
    pub max_err: Option<f64>,
    #[arg(long, global = true, env = "MARKOFF_THREADS")]
    pub threads: Option<usize>,
    /// Maximum word length explored, or `none`.
    #[arg(long, global = true)]
    pub depth_cap: Option<String>,
    /// Resume from this file if it exists; progress is saved to it.
    #[arg(long, global = true)]
    pub checkpoint_path: Option<PathBuf>,
    /// json, csv or text.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Where to write an SVG plot (fit-beta only).
    #[arg(long, global = true)]
    pub plot: Option<PathBuf>,
    /// key=value file with defaults for the options above.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub params: VarietyParams,
    pub backend: Backend,
    pub precision: PrecisionConfig,
    pub threads: usize,
    pub depth_cap: Option<usize>,
    pub checkpoint_path: Option<PathBuf>,
    pub format: Format,
    pub plot: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "n",
    "a",
    "backend",
    "precision",
    "max-err",
    "threads",
    "depth-cap",
    "checkpoint-path",
    "format",
    "plot",
];

fn read_file(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_file(&text)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, Error> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse(format!("config line {}: expected key=value", i + 1)));
        };
        let k = k.trim().replace('_', "-");
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Parse(format!("config line {}: unknown key {k:?}", i + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, Error> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value {v:?} for {key}")))
}

fn parse_depth_cap(v: &str) -> Result<Option<usize>, Error> {
    if v.trim().eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse("depth-cap", v).map(Some)
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<RunConfig, Error> {
        let file = match &args.config {
            Some(p) => read_file(p)?,
            None => BTreeMap::new(),
        };
        let get = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).cloned());

        let n = match get(args.n.map(|v| v.to_string()), "n") {
            Some(v) => parse("n", &v)?,
            None => 4,
        };
        let a = match get(args.a.clone(), "a") {
            Some(v) => parse_rational(&v)?,
            None => parse_rational("1")?,
        };
        let params = VarietyParams::new(n, a)?;
        let backend = match get(args.backend.clone(), "backend") {
            Some(v) => v.parse()?,
            None => Backend::Auto,
        };
        let bits = match get(args.precision.map(|v| v.to_string()), "precision") {
            Some(v) => parse("precision", &v)?,
            None => PrecisionConfig::DEFAULT_BITS,
        };
        let max_err = match get(args.max_err.map(|v| v.to_string()), "max-err") {
            Some(v) => parse("max-err", &v)?,
            None => PrecisionConfig::DEFAULT_MAX_ERR,
        };
        let precision = PrecisionConfig::new(bits, max_err)?;
        let threads = match get(args.threads.map(|v| v.to_string()), "threads") {
            Some(v) => parse::<usize>("threads", &v)?,
            None => 1,
        };
        if threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        let depth_cap = match get(args.depth_cap.clone(), "depth-cap") {
            Some(v) => parse_depth_cap(&v)?,
            None => Some(DEFAULT_DEPTH_CAP),
        };
        let checkpoint_path = args
            .checkpoint_path
            .clone()
            .or_else(|| file.get("checkpoint-path").map(PathBuf::from));
        let format = match get(args.format.clone(), "format") {
            Some(v) => v.parse()?,
            None => Format::Json,
        };
        let plot = args.plot.clone().or_else(|| file.get("plot").map(PathBuf::from));
        Ok(RunConfig {
            params,
            backend,
            precision,
            threads,
            depth_cap,
            checkpoint_path,
            format,
            plot,
        })
    }

    pub fn query(&self, log_r: LogBound) -> BallQuery {
        BallQuery::new(log_r)
            .with_backend(self.backend)
            .with_precision(self.precision)
            .with_depth_cap(self.depth_cap)
            .with_threads(self.threads)
    }
}
