//! `pettis`: build basic functions, integrate them, and run the lemma and
//! blow-up checks from the command line.
//!
//! Exit codes: 0 pass, 1 property violation (including an infeasible
//! blow-up target), 2 usage or input error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pettis_core::backend::{BackendConfig, NormBackend};
use pettis_core::carving::{audit_path, carve, CarvingConfig};
use pettis_core::dyadic::{fmt_q, int, parse_q, pow2, Address, NodeKey, Rational};
use pettis_core::eval::{integral, sqrt_enclosure};
use pettis_core::family::{max_collision_bound, slope_selector, verify_ad};
use pettis_core::stepfun::{combine, make_fn, BasicFunction, Selector};
use pettis_core::verify::{
    blowup_for_function, quotient_table, verify_lemma, BlowupParams, LemmaParams, Mode, Status,
    QUOTIENT_CSV_HEADER,
};
use pettis_core::Error;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "pettis", version, about = "Exact checks for a Pettis-integrable, nowhere weakly differentiable construction")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Truncation depth (overrides the function file or lemma default).
    #[arg(long, global = true)]
    kmax: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `l2`, `l<p>` or `lp:<p>`.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Bits for reported square-root enclosures.
    #[arg(long, global = true, default_value_t = 64)]
    precision_bits: u32,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    L2,
    General,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a function, a carved set, or a carving audit as JSON.
    Construct {
        /// Slopes `t` of the selectors `n(k) = floor(t·k)`.
        #[arg(long, value_delimiter = ',')]
        ts: Vec<String>,
        /// Weights, one per slope (default all 1).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        weights: Vec<String>,
        /// `diagonal`, `zero` or `constant:<v>` instead of slopes.
        #[arg(long, conflicts_with = "ts")]
        selector: Option<String>,
        /// Restriction root `τ` as a bit string.
        #[arg(long)]
        restrict: Option<String>,
        /// Carve one set, given as `σ:i`.
        #[arg(long, conflicts_with_all = ["ts", "selector", "audit"])]
        carve: Option<String>,
        /// Audit the carving along the path to `τ`.
        #[arg(long, conflicts_with_all = ["ts", "selector"])]
        audit: Option<String>,
        #[arg(long, default_value_t = 1)]
        pieces_per_set: usize,
    },
    /// Exact integral over `[from, at]`.
    Integrate {
        #[arg(long = "f")]
        f: PathBuf,
        #[arg(long)]
        at: String,
        #[arg(long, default_value = "0")]
        from: String,
    },
    /// Run one lemma check.
    Verify {
        #[arg(long)]
        lemma: String,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Difference-quotient blow-up witness at `x`.
    Blowup {
        #[arg(long = "f")]
        f: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long = "M")]
        m: String,
        /// Defaults to `l2` for the Hilbert backend and `general` otherwise.
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, value_delimiter = ',')]
        cuts: Option<Vec<usize>>,
    },
    /// Slope-selector family: collision horizons and the almost-disjointness check.
    Family {
        #[arg(long)]
        check_ad: bool,
        #[arg(long, value_delimiter = ',', required = true)]
        ts: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        depth: usize,
    },
    /// Quotient table for `h = ±2^-1, …, ±hmin`.
    Table {
        #[arg(long = "f")]
        f: PathBuf,
        #[arg(long)]
        x: String,
        /// `2^-J` or a rational.
        #[arg(long)]
        hmin: String,
    },
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Violation(Value),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(msg) => {
                Failure::Violation(json!({"status": "infeasible", "reason": msg}))
            }
            Error::Frame(msg) => Failure::Violation(json!({"status": "frame-failure", "reason": msg})),
            other => Failure::Usage(other.to_string()),
        }
    }
}

struct Output {
    body: String,
    pass: bool,
}

impl Output {
    fn json(v: &impl serde::Serialize, pass: bool) -> Result<Self, Failure> {
        let body = serde_json::to_string_pretty(v).map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(Self { body: body + "\n", pass })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = run(&cli);
    let (body, code) = match result {
        Ok(out) => (Some(out.body), if out.pass { 0 } else { 1 }),
        Err(Failure::Violation(v)) => {
            eprintln!("pettis: {}", v["reason"].as_str().unwrap_or("property violated"));
            let body = serde_json::to_string_pretty(&v).expect("json") + "\n";
            (Some(body), 1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("pettis: {msg}");
            (None, 2)
        }
    };
    if let Some(body) = body {
        if let Err(e) = emit(cli.global.out.as_deref(), &body) {
            eprintln!("pettis: cannot write output: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::from(code)
}

fn emit(path: Option<&Path>, body: &str) -> std::io::Result<()> {
    match path {
        Some(p) => fs::write(p, body),
        None => std::io::stdout().lock().write_all(body.as_bytes()),
    }
}

fn q(s: &str) -> Result<Rational, Failure> {
    Ok(parse_q(s.trim())?)
}

fn qs(v: &[String]) -> Result<Vec<Rational>, Failure> {
    v.iter().map(|s| q(s)).collect()
}

fn backend_config(spec: &str, seed: u64) -> Result<BackendConfig, Failure> {
    let s = spec.trim().to_ascii_lowercase();
    let backend = if s == "l2" {
        NormBackend::l2()
    } else {
        let p = s
            .strip_prefix("lp:")
            .or_else(|| s.strip_prefix('l'))
            .and_then(|p| p.parse::<f64>().ok())
            .ok_or_else(|| Failure::Usage(format!("unknown backend {spec:?}; use l2, l<p> or lp:<p>")))?;
        NormBackend::lp(p, 1e-9, seed)?
    };
    Ok(BackendConfig { seed, ..backend.config() })
}

fn load_function(path: &Path, kmax: Option<usize>) -> Result<BasicFunction, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let f: BasicFunction = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(match kmax {
        Some(k) => f.with_kmax(k)?,
        None => f,
    })
}

fn parse_selector(s: &str) -> Result<Selector, Failure> {
    match s.trim() {
        "diagonal" => Ok(Selector::Diagonal),
        "zero" => Ok(Selector::Zero),
        other => other
            .strip_prefix("constant:")
            .and_then(|v| v.parse().ok())
            .map(|value| Selector::Constant { value })
            .ok_or_else(|| Failure::Usage(format!("unknown selector {s:?}"))),
    }
}

fn parse_key(s: &str) -> Result<NodeKey, Failure> {
    let (sigma, i) = s
        .split_once(':')
        .ok_or_else(|| Failure::Usage(format!("key must look like σ:i, got {s:?}")))?;
    let i = i
        .parse()
        .map_err(|_| Failure::Usage(format!("bad level index in {s:?}")))?;
    Ok(NodeKey::new(sigma.parse::<Address>()?, i)?)
}

/// `2^-J` (also `2^{-J}`) or a rational.
fn parse_hmin(s: &str) -> Result<Rational, Failure> {
    let t = s.trim().replace(['{', '}'], "");
    if let Some(e) = t.strip_prefix("2^") {
        let e: i64 = e
            .parse()
            .map_err(|_| Failure::Usage(format!("bad exponent in {s:?}")))?;
        return Ok(pow2(e));
    }
    q(&t)
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    let g = &cli.global;
    if g.format == Format::Csv && !matches!(cli.command, Command::Table { .. }) {
        return Err(Failure::Usage("--format csv is only available for `table`".into()));
    }
    match &cli.command {
        Command::Construct {
            ts,
            weights,
            selector,
            restrict,
            carve: key,
            audit,
            pieces_per_set,
        } => {
            if let Some(key) = key {
                let key = parse_key(key)?;
                let cfg = CarvingConfig::new(g.kmax.unwrap_or(key.depth()), *pieces_per_set)?;
                return Output::json(&carve(&key, &cfg)?, true);
            }
            let kmax = g.kmax.unwrap_or(8);
            if let Some(tau) = audit {
                let tau: Address = tau.parse()?;
                let report = audit_path(&tau, &CarvingConfig::new(kmax, *pieces_per_set)?);
                let pass = report.passed();
                return Output::json(&report, pass);
            }
            let f = match selector {
                Some(s) => make_fn(parse_selector(s)?, kmax)?,
                None if ts.is_empty() => {
                    return Err(Failure::Usage("construct needs --ts, --selector, --carve or --audit".into()))
                }
                None => {
                    let sels = qs(ts)?
                        .into_iter()
                        .map(Selector::slope)
                        .collect::<Result<Vec<_>, _>>()?;
                    let ws = if weights.is_empty() { vec![int(1); sels.len()] } else { qs(weights)? };
                    if ws.len() == 1 && sels.len() == 1 && ws[0] == int(1) {
                        make_fn(sels[0].clone(), kmax)?
                    } else {
                        combine(&ws, &sels, kmax)?
                    }
                }
            };
            let f = match restrict {
                Some(tau) => pettis_core::stepfun::restrict(&f, &tau.parse()?)?,
                None => f,
            };
            Output::json(&f, true)
        }
        Command::Integrate { f, at, from } => {
            let f = load_function(f, g.kmax)?;
            let cfg = CarvingConfig::new(f.kmax, 1)?;
            let (a, b) = (q(from)?, q(at)?);
            let v = integral(&f, &a, &b, &cfg)?;
            let norm = sqrt_enclosure(&v.norm_sq(), g.precision_bits)?;
            let mut body = serde_json::to_value(&v).map_err(|e| Failure::Usage(e.to_string()))?;
            body["norm_enclosure"] = json!([fmt_q(&norm.lo), fmt_q(&norm.hi)]);
            Output::json(&body, true)
        }
        Command::Verify { lemma, params } => {
            let mut p: LemmaParams = match params {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
                    serde_json::from_str(&text)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
                }
                None => LemmaParams::default(),
            };
            if g.kmax.is_some() {
                p.kmax = g.kmax;
            }
            if let Some(s) = g.seed {
                p.seed = s;
            }
            if let Some(b) = &g.backend {
                p.backend = backend_config(b, g.seed.unwrap_or(p.backend.seed))?;
            }
            let report = verify_lemma(lemma, &p)?;
            let pass = report.status == Status::Pass;
            Output::json(&report, pass)
        }
        Command::Blowup {
            f,
            x,
            m,
            mode,
            samples,
            cuts,
        } => {
            let f = load_function(f, g.kmax)?;
            let backend = match &g.backend {
                Some(b) => backend_config(b, g.seed.unwrap_or(0))?,
                None => NormBackend::l2().config(),
            };
            let exact = NormBackend::from_config(&backend)?.is_exact();
            let mode = match mode {
                Some(CliMode::L2) if !exact => {
                    return Err(Failure::Usage("--mode l2 needs the l2 backend".into()))
                }
                Some(CliMode::L2) => Mode::L2,
                Some(CliMode::General) => Mode::General,
                None if exact => Mode::L2,
                None => Mode::General,
            };
            let params = BlowupParams {
                seed: g.seed.unwrap_or(0),
                samples: *samples,
                backend,
                cuts: cuts.clone(),
                ..BlowupParams::default()
            };
            let w = blowup_for_function(&f, &q(x)?, &q(m)?, mode, &params)?;
            let pass = w.status == Status::Pass;
            Output::json(&w, pass)
        }
        Command::Family { check_ad, ts, depth } => {
            let ts = qs(ts)?;
            for t in &ts {
                slope_selector(t.clone())?;
            }
            let horizon = max_collision_bound(&ts)?;
            if !check_ad {
                let values: Vec<Vec<usize>> = ts
                    .iter()
                    .map(|t| {
                        let s = slope_selector(t.clone()).expect("checked");
                        (0..=(*depth).min(64)).map(|k| s.at(k)).collect()
                    })
                    .collect();
                return Output::json(&json!({"collision_horizon": horizon, "values": values}), true);
            }
            let report = verify_ad(&ts, *depth)?;
            let pass = report.passed();
            Output::json(&json!({"collision_horizon": horizon, "report": report}), pass)
        }
        Command::Table { f, x, hmin } => {
            let f = load_function(f, g.kmax)?;
            let x = q(x)?;
            let hmin = parse_hmin(hmin)?;
            if hmin <= Rational::from_integer(0.into()) || hmin > pettis_core::dyadic::rat(1, 2) {
                return Err(Failure::Usage(format!("--hmin must lie in (0, 1/2], got {}", fmt_q(&hmin))));
            }
            let one = int(1);
            let mut hs = Vec::new();
            let mut h = pettis_core::dyadic::rat(1, 2);
            while h >= hmin {
                hs.push(if &x + &h <= one { h.clone() } else { -h.clone() });
                h /= int(2);
            }
            let cfg = CarvingConfig::new(f.kmax, 1)?;
            let rows = quotient_table(&f, &x, &hs, &cfg)?;
            match g.format {
                Format::Json => Output::json(&rows, true),
                Format::Csv => {
                    let mut body = String::from(QUOTIENT_CSV_HEADER);
                    body.push('\n');
                    for r in &rows {
                        body.push_str(&r.csv());
                        body.push('\n');
                    }
                    Ok(Output { body, pass: true })
                }
            }
        }
    }
}
