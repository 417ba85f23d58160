//! `qvalab` command-line front end: structure tables, identity suites, the Drinfeld
//! realization check, and Fock-space dumps.
//!
//! Exit codes: 0 all checks passed, 1 an identity failed, 2 configuration error,
//! 3 internal consistency error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use qvalab::bidist::{delta_identity_results, residue_report};
use qvalab::deformed::{lambda_report, series_ope_report, smatrix_report, DeformedFock};
use qvalab::drinfeld::{module_report, q0p_results, realize_report, FamilyConfig, Relation, ZeroMode};
use qvalab::fock::{FockKey, FockSpace, FockVec, Gen, ModuleConvention};
use qvalab::report::{CheckReport, Status, Truncation};
use qvalab::roots::{datum_from_labels, RootDatum};
use qvalab::scalar::{rat, rat_int, Rat};
use qvalab::series::{HSeries, SeriesCtx};
use qvalab::structure::{Corruption, StructureTables};

const SUITES: [&str; 13] = [
    "kappa", "rational", "cmatrix", "b", "ope", "serre", "smatrix", "module", "lambda", "classical", "delta", "residue", "q0",
];

#[derive(Parser, Debug)]
#[command(name = "qvalab", version, about = "Exact checks for deformed lattice vertex algebras and Drinfeld currents")]
struct Cli {
    /// JSON file of flat key-value settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (also QVALAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the structure tables and their identity report.
    Structure {
        #[command(flatten)]
        common: Common,
        /// Write the tables as JSON.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Run identity suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated suites.
        #[arg(long, value_delimiter = ',')]
        suite: Option<Vec<String>>,
    },
    /// Assemble the Drinfeld family on the Fock space and check its relations.
    Realize {
        #[command(flatten)]
        common: Common,
        /// Comma-separated relations (Q0p, Q2p, Q3p, Q4p, Q5p, Q7p, Q3).
        #[arg(long, value_delimiter = ',')]
        check: Option<Vec<String>>,
        #[arg(long, value_enum)]
        convention: Option<Convention>,
        #[arg(long, value_enum)]
        zero_mode: Option<ZeroModeArg>,
    },
    /// Fock-space basis, or a classical vertex operator applied to the basis.
    Fock {
        #[command(flatten)]
        common: Common,
        /// Generator to apply: h<i>, e+<i> or e-<i> (1-based node).
        #[arg(long)]
        apply: Option<String>,
    },
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    #[arg(long = "type")]
    ty: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    hbar_order: Option<usize>,
    #[arg(long)]
    x_order: Option<i64>,
    #[arg(long)]
    degree: Option<i64>,
    #[arg(long)]
    ball: Option<i64>,
    #[arg(long)]
    modes: Option<i64>,
    #[arg(long)]
    vec_degree: Option<i64>,
    #[arg(long)]
    vec_ball: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Debug hook: flip ε on the pair (i,j), 1-based.
    #[arg(long)]
    corrupt_epsilon: Option<String>,
    /// Debug hook: perturb κ_ij, 1-based.
    #[arg(long)]
    corrupt_kappa: Option<String>,
    /// Debug hook: perturb g̃_ij, 1-based.
    #[arg(long)]
    corrupt_g: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Convention {
    Pinned,
    WeightShifted,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ZeroModeArg {
    Absorbed,
    Literal,
}

/// Settings read from a config file (every field optional).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(rename = "type")]
    ty: Option<String>,
    mu: Option<String>,
    hbar_order: Option<usize>,
    x_order: Option<i64>,
    degree: Option<i64>,
    ball: Option<i64>,
    modes: Option<i64>,
    vec_degree: Option<i64>,
    vec_ball: Option<i64>,
    seed: Option<u64>,
    suites: Option<Vec<String>>,
    checks: Option<Vec<String>>,
    format: Option<Format>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

/// Validated run configuration.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    command: &'static str,
    #[serde(rename = "type")]
    ty: String,
    mu: String,
    hbar_order: Option<usize>,
    x_order: Option<i64>,
    degree: Option<i64>,
    ball: Option<i64>,
    modes: Option<i64>,
    vec_degree: Option<i64>,
    vec_ball: Option<i64>,
    seed: u64,
    suites: Vec<String>,
    #[serde(skip)]
    corruption: Corruption,
    #[serde(skip)]
    format: Format,
    #[serde(skip)]
    out: Option<PathBuf>,
}

/// Configuration problems (exit 2) versus internal errors (exit 3).
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn parse_pair(s: &str, rank: usize) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let idx = |p: &str| -> Result<usize> {
        let v: usize = p.parse().map_err(|_| config_err(format!("bad node index '{p}'")))?;
        if v == 0 || v > rank {
            return Err(config_err(format!("node index {v} outside 1..={rank}")));
        }
        Ok(v - 1)
    };
    match parts.as_slice() {
        [a, b] => Ok((idx(a)?, idx(b)?)),
        _ => Err(config_err(format!("expected a pair i,j, got '{s}'"))),
    }
}

fn load_file(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("bad config file {}: {e}", p.display())))
        }
    }
}

fn positive(name: &str, v: Option<i64>) -> Result<Option<i64>> {
    match v {
        Some(x) if x <= 0 => Err(config_err(format!("--{name} must be positive, got {x}"))),
        v => Ok(v),
    }
}

fn build_config(cli: &Cli, file: FileConfig) -> Result<RunConfig> {
    let (name, common, list) = match &cli.command {
        Command::Structure { common, .. } => ("structure", common, None),
        Command::Verify { common, suite } => ("verify", common, suite.clone().or(file.suites.clone())),
        Command::Realize { common, check, .. } => ("realize", common, check.clone().or(file.checks.clone())),
        Command::Fock { common, .. } => ("fock", common, None),
    };
    let ty = common.ty.clone().or(file.ty).ok_or_else(|| config_err("--type is required"))?;
    let mu = common.mu.clone().or(file.mu).unwrap_or_else(|| "id".into());
    let hbar_order = common.hbar_order.or(file.hbar_order);
    if hbar_order == Some(0) {
        return Err(config_err("--hbar-order must be positive"));
    }
    let cfg = RunConfig {
        command: name,
        ty,
        mu,
        hbar_order,
        x_order: positive("x-order", common.x_order.or(file.x_order))?,
        degree: positive("degree", common.degree.or(file.degree))?,
        ball: positive("ball", common.ball.or(file.ball))?,
        modes: positive("modes", common.modes.or(file.modes))?,
        vec_degree: common.vec_degree.or(file.vec_degree),
        vec_ball: common.vec_ball.or(file.vec_ball),
        seed: common.seed.or(file.seed).unwrap_or(2024),
        suites: list.unwrap_or_default().into_iter().filter(|s| !s.is_empty()).collect(),
        corruption: Corruption::default(),
        format: cli.format.or(file.format).unwrap_or(Format::Json),
        out: cli.out.clone().or(file.out),
    };
    if name == "verify" {
        for s in &cfg.suites {
            if !SUITES.contains(&s.as_str()) {
                return Err(config_err(format!("unknown suite '{s}' (known: {})", SUITES.join(", "))));
            }
        }
    }
    if name == "realize" {
        for s in &cfg.suites {
            if Relation::parse(s).is_none() {
                return Err(config_err(format!("unknown relation '{s}'")));
            }
        }
    }
    if let Some(v) = cfg.vec_degree {
        if v < 0 {
            return Err(config_err("--vec-degree must be non-negative"));
        }
    }
    Ok(cfg)
}

fn threads(cli: &Cli, file_threads: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = cli.threads.or(file_threads) {
        return Ok(Some(t));
    }
    match std::env::var("QVALAB_THREADS") {
        Ok(v) => v.parse().map(Some).map_err(|_| config_err(format!("QVALAB_THREADS must be an integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Everything a run produces.
#[derive(Serialize)]
struct Output {
    config: RunConfig,
    reports: Vec<CheckReport>,
    summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    payload: Option<serde_json::Value>,
    timing: BTreeMap<String, f64>,
}

#[derive(Serialize, Default)]
struct Summary {
    pass: usize,
    fail: usize,
    skipped_clipped: usize,
}

fn datum(cfg: &RunConfig) -> Result<RootDatum> {
    let mut dt = datum_from_labels(&cfg.ty, &cfg.mu).map_err(|e| config_err(e.to_string()))?;
    cfg.corruption.apply_to(&mut dt);
    Ok(dt)
}

/// The corruption minus ε, which [`datum`] has already applied.
fn clean_eps(cfg: &RunConfig) -> Corruption {
    Corruption { epsilon: None, ..cfg.corruption }
}

fn tables(dt: &RootDatum, cfg: &RunConfig, h_default: usize, x_default: i64) -> Result<StructureTables> {
    let h = cfg.hbar_order.unwrap_or(h_default);
    let x = cfg.x_order.unwrap_or(x_default);
    StructureTables::compute(dt, h, x, clean_eps(cfg)).map_err(|e| anyhow!(e))
}

fn family_config(cfg: &RunConfig, defaults: FamilyConfig) -> FamilyConfig {
    FamilyConfig {
        hbar_order: cfg.hbar_order.unwrap_or(defaults.hbar_order),
        degree: cfg.degree.unwrap_or(defaults.degree),
        vec_degree: cfg.vec_degree.unwrap_or(defaults.vec_degree),
        vec_ball: cfg.vec_ball.unwrap_or(defaults.vec_ball),
        modes: cfg.modes.unwrap_or(defaults.modes),
        corruption: clean_eps(cfg),
        ..defaults
    }
}

fn residue_cases(seed: u64, n: usize) -> Vec<(Vec<Rat>, u32)> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let deg = rng.gen_range(0..=5usize);
            let p = (0..=deg).map(|_| rat(rng.gen_range(-9..=9), rng.gen_range(1..=4))).collect();
            (p, rng.gen_range(0..=5u32))
        })
        .collect()
}

fn run_suite(name: &str, dt: &RootDatum, cfg: &RunConfig) -> Result<CheckReport> {
    let untwisted = dt.n == 1;
    let h = cfg.hbar_order;
    Ok(match name {
        "kappa" => tables(dt, cfg, 8, 10)?.check_kappa(),
        "rational" => tables(dt, cfg, 8, 10)?.check_rational(),
        "cmatrix" => tables(dt, cfg, 8, 10)?.check_cmatrix(),
        "b" => tables(dt, cfg, 8, 10)?.check_b(),
        "smatrix" => smatrix_report(&tables(dt, cfg, 8, 10)?),
        "q0" => {
            let t = tables(dt, cfg, 4, 8)?;
            let mut rep = CheckReport::new("q0", dt.label(), Truncation::series(t.ctx.hbar_order, 0, 0));
            rep.extend(q0p_results(&t));
            rep
        }
        "lambda" => {
            let values = [rat_int(0), rat_int(1), rat_int(-2), rat_int(2), rat(1, 2)];
            lambda_report(&tables(dt, cfg, 8, 10)?, &values)
        }
        "ope" if untwisted => {
            let hh = h.unwrap_or(6);
            let d = cfg.degree.unwrap_or(hh as i64 + 1);
            DeformedFock::new(dt, hh, hh as i64 + 4, d, cfg.ball.unwrap_or(3), clean_eps(cfg))?.check_ope()
        }
        "ope" => series_ope_report(&tables(dt, cfg, 6, 10)?),
        "serre" if untwisted => {
            let hh = h.unwrap_or(6);
            let d = cfg.degree.unwrap_or(8);
            DeformedFock::new(dt, hh, hh as i64 + 4, d, cfg.ball.unwrap_or(3), clean_eps(cfg))?.check_serre()
        }
        "classical" if untwisted => {
            let d = cfg.degree.unwrap_or(7);
            let f = DeformedFock::new(dt, 0, 6, d, cfg.ball.unwrap_or(3), clean_eps(cfg))?;
            let mut rep = f.check_classical(cfg.vec_degree.unwrap_or(2), cfg.modes.unwrap_or(2));
            rep.extend(delta_identity_results(SeriesCtx::new(1, 0, 16), 3, 5));
            rep
        }
        "delta" => {
            let mut rep = CheckReport::new("delta", "-", Truncation::series(0, -5, 5));
            rep.extend(delta_identity_results(SeriesCtx::new(1, 0, 16), 3, 5));
            rep
        }
        "module" if untwisted => {
            let defaults = FamilyConfig { hbar_order: 3, degree: 6, vec_degree: 2, modes: 3, ..FamilyConfig::default() };
            module_report(dt, family_config(cfg, defaults))?
        }
        "residue" => residue_report(&residue_cases(cfg.seed, 100)),
        other => {
            let mut rep = CheckReport::new(other, dt.label(), Truncation::default());
            rep.push(qvalab::report::IdentityResult::skipped(other, "suite needs an untwisted datum (mu = id)"));
            rep
        }
    })
}

fn parse_gen(s: &str, rank: usize) -> Result<Gen> {
    let node = |t: &str| -> Result<usize> {
        let v: usize = t.parse().map_err(|_| config_err(format!("bad generator '{s}'")))?;
        if v == 0 || v > rank {
            return Err(config_err(format!("generator node {v} outside 1..={rank}")));
        }
        Ok(v - 1)
    };
    let unit = |i: usize, sign: i64| -> Vec<i64> { (0..rank).map(|k| if k == i { sign } else { 0 }).collect() };
    if let Some(t) = s.strip_prefix("e+") {
        Ok(Gen::E(unit(node(t)?, 1)))
    } else if let Some(t) = s.strip_prefix("e-") {
        Ok(Gen::E(unit(node(t)?, -1)))
    } else if let Some(t) = s.strip_prefix('h') {
        Ok(Gen::H(node(t)?))
    } else {
        Err(config_err(format!("bad generator '{s}' (use h<i>, e+<i>, e-<i>)")))
    }
}

fn fock_payload(dt: &RootDatum, cfg: &RunConfig, apply: &Option<String>) -> Result<serde_json::Value> {
    let degree = cfg.degree.unwrap_or(3);
    let ball = cfg.ball.unwrap_or(1);
    let fs = FockSpace::new(dt, degree, ball);
    let basis = fs.basis();
    let mut dims: BTreeMap<i64, usize> = BTreeMap::new();
    for k in &basis {
        *dims.entry(k.degree()).or_default() += 1;
    }
    let mut value = serde_json::json!({ "degree": degree, "ball": ball, "dimension": basis.len(), "graded_dimensions": dims });
    match apply {
        None => value["basis"] = serde_json::to_value(&basis)?,
        Some(g) => {
            let gen = parse_gen(g, dt.rank)?;
            let ctx = SeriesCtx::new(1, 0, degree + 4);
            let small = FockSpace::new(dt, cfg.vec_degree.unwrap_or(1), ball);
            let x_hi = degree + 2;
            let dumps: Vec<serde_json::Value> = small
                .basis()
                .iter()
                .map(|k: &FockKey| {
                    let v = FockVec::single(k.clone(), HSeries::one(ctx));
                    let out = fs.classical_y(&gen, &v, ctx, x_hi);
                    serde_json::json!({ "input": k, "output": out })
                })
                .collect();
            value["generator"] = serde_json::Value::String(g.clone());
            value["vectors"] = serde_json::Value::Array(dumps);
        }
    }
    Ok(value)
}

fn execute(cli: &Cli, cfg: &RunConfig) -> Result<Output> {
    let dt = datum(cfg)?;
    let mut reports = Vec::new();
    let mut timing = BTreeMap::new();
    let mut payload = None;
    let mut timed = |name: &str, f: &mut dyn FnMut() -> Result<Vec<CheckReport>>| -> Result<()> {
        let t = Instant::now();
        let r = f()?;
        timing.insert(name.to_string(), t.elapsed().as_secs_f64());
        reports.extend(r);
        Ok(())
    };
    match &cli.command {
        Command::Structure { emit, .. } => {
            let t = tables(&dt, cfg, 8, 10)?;
            timed("structure", &mut || Ok(vec![t.check_kappa(), t.check_rational(), t.check_cmatrix(), t.check_b()]))?;
            if let Some(path) = emit {
                write_file(path, &serde_json::to_string_pretty(&t.to_json())?)?;
            }
        }
        Command::Verify { .. } => {
            for s in &cfg.suites {
                timed(s, &mut || Ok(vec![run_suite(s, &dt, cfg)?]))?;
            }
        }
        Command::Realize { convention, zero_mode, .. } => {
            let rels: Vec<Relation> = if cfg.suites.is_empty() {
                Relation::PRIMED.to_vec()
            } else {
                cfg.suites.iter().filter_map(|s| Relation::parse(s)).collect()
            };
            let mut fc = family_config(cfg, FamilyConfig::default());
            if let Some(Convention::Pinned) = convention {
                fc.convention = ModuleConvention::Pinned;
            }
            if let Some(ZeroModeArg::Literal) = zero_mode {
                fc.zero_mode = ZeroMode::Literal;
            }
            if dt.n != 1 {
                return Err(config_err(format!("realize needs mu = id, got {}", dt.label())));
            }
            timed("realize", &mut || Ok(vec![realize_report(&dt, fc.clone(), &rels)?]))?;
        }
        Command::Fock { apply, .. } => {
            let t = Instant::now();
            payload = Some(fock_payload(&dt, cfg, apply)?);
            timing.insert("fock".into(), t.elapsed().as_secs_f64());
        }
    }
    let mut summary = Summary::default();
    for r in reports.iter().flat_map(|r| &r.results) {
        match r.status {
            Status::Pass => summary.pass += 1,
            Status::Fail => summary.fail += 1,
            Status::SkippedClipped => summary.skipped_clipped += 1,
        }
    }
    Ok(Output { config: cfg.clone(), reports, summary, payload, timing })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn render(out: &Output, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(out)? + "\n",
        Format::Text => {
            let mut s = format!("qvalab {} {} mu={}\n", out.config.command, out.config.ty, out.config.mu);
            for r in &out.reports {
                s.push_str(&r.to_text());
            }
            if let Some(p) = &out.payload {
                s.push_str(&serde_json::to_string_pretty(p)?);
                s.push('\n');
            }
            s.push_str(&format!(
                "summary: {} pass, {} fail, {} skipped-clipped\n",
                out.summary.pass, out.summary.fail, out.summary.skipped_clipped
            ));
            s
        }
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut file = load_file(&cli.config)?;
    let file_threads = file.threads.take();
    let mut cfg = build_config(&cli, file)?;
    let dt = datum_from_labels(&cfg.ty, &cfg.mu).map_err(|e| config_err(e.to_string()))?;
    let common = match &cli.command {
        Command::Structure { common, .. }
        | Command::Verify { common, .. }
        | Command::Realize { common, .. }
        | Command::Fock { common, .. } => common,
    };
    let pair = |s: &Option<String>| s.as_deref().map(|s| parse_pair(s, dt.rank)).transpose();
    cfg.corruption = Corruption { epsilon: pair(&common.corrupt_epsilon)?, kappa: pair(&common.corrupt_kappa)?, g: pair(&common.corrupt_g)? };
    if let Some(n) = threads(&cli, file_threads)? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| anyhow!(e))?;
    }
    let out = execute(&cli, &cfg)?;
    let text = render(&out, cfg.format)?;
    match &cfg.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(if out.summary.fail > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}
