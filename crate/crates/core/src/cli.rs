//! Command-line front end: `simulate`, `eval` and `verify`.
//!
//! Data goes to stdout or `--out`; diagnostics go to stderr.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::closed_forms as cf;
use crate::conditioned::{simulate_conditioned, HKind};
use crate::error::{invalid, Error, Result};
use crate::lamperti::{resample, simulate_cb};
use crate::mc::{map_paths, with_thread_cap};
use crate::rng::{derive_seed, path_rng};
use crate::special_functions as sf;
use crate::stable_levy::{phi_inverse, psi, simulate_path, Path, PathEnd, StableParams, StepRule, Stopping};
use crate::verify::{self, IdentitySpec, ParamMap, Report, SuiteSettings, DEFAULT_DT_MIN, DEFAULT_EPS, SCHEMA_VERSION};

/// Pool size per output path when CBI paths are drawn by weighted resampling.
const CBI_POOL_FACTOR: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "csbp", version, about = "Simulate and verify alpha-stable continuous-state branching processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Write sampled paths as CSV (path_id, t, value, absorbed).
    Simulate(SimulateArgs),
    /// Evaluate a closed-form expression over parameter grids.
    Eval(EvalArgs),
    /// Run identity checks and write a report.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Process {
    /// The spectrally positive stable process on a fixed grid.
    Stable,
    /// The CB-process through the CB-Lamperti transform.
    Cb,
    /// The CB-process conditioned never to die out.
    Cbi,
    /// The dual (spectrally negative) process conditioned to stay positive.
    DualConditioned,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_plus: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    /// Output grid step (and the step cap of adaptive runs).
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Process::Stable)]
    pub process: Process,
    /// Adaptive step constant for cb, cbi and dual-conditioned runs.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Formula name; an unknown name lists the available ones.
    #[arg(long)]
    pub formula: String,
    /// Comma-separated values expand into a grid.
    #[arg(long, value_delimiter = ',', default_value = "1.5")]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub c_plus: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub q: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub a: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub z: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub u: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub v: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub m_star: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// JSON run configuration.
    #[arg(long, conflicts_with_all = ["list", "identity"])]
    pub config: Option<PathBuf>,
    /// Print the identity registry.
    #[arg(long)]
    pub list: bool,
    /// Run one identity inline.
    #[arg(long)]
    pub identity: Option<String>,
    /// Inline identity parameter, `key=value`; repeatable.
    #[arg(long = "param", requires = "identity")]
    pub params: Vec<String>,
    #[arg(long, requires = "identity")]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Verification run configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Shared parameters, applied to every identity that takes them.
    pub alpha: Option<f64>,
    pub c_plus: Option<f64>,
    /// Starting value, applied as the identity parameter `x`.
    pub x0: Option<f64>,
    /// Step cap of the adaptive rule (`dt_max`); uncapped when absent.
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub eps: Option<f64>,
    pub dt_min: Option<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub identities: Vec<IdentitySpec>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_paths() -> usize {
    10_000
}

fn default_seed() -> u64 {
    1
}

impl RunConfig {
    /// Parse and check a config; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported config version {} (expected {SCHEMA_VERSION})", cfg.version)));
        }
        let positive = [
            ("alpha", cfg.alpha),
            ("c_plus", cfg.c_plus),
            ("x0", cfg.x0),
            ("dt", cfg.dt),
            ("horizon", cfg.horizon),
            ("eps", cfg.eps),
            ("dt_min", cfg.dt_min),
        ];
        for (k, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("`{k}` must be positive, got {v}")));
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn settings(&self) -> SuiteSettings {
        let mut shared = ParamMap::new();
        let keys = [
            ("alpha", self.alpha),
            ("c_plus", self.c_plus),
            ("x", self.x0),
            ("dt_max", self.dt),
            ("horizon", self.horizon),
            ("eps", self.eps),
            ("dt_min", self.dt_min),
        ];
        for (k, v) in keys {
            if let Some(v) = v {
                shared.insert(k.to_string(), v);
            }
        }
        SuiteSettings { master_seed: self.seed, n_paths: self.n_paths, shared }
    }

    pub fn run(&self) -> Result<Report> {
        verify::run_suite(&self.identities, &self.settings())
    }
}

/// Parse arguments, run, and map the outcome to an exit code
/// (0 success, 1 failed checks, 2 errors).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(args) => {
            cmd_simulate(&args)?;
            Ok(0)
        }
        Command::Eval(args) => {
            cmd_eval(&args)?;
            Ok(0)
        }
        Command::Verify(args) => cmd_verify(&args),
    }
}

fn open_output(path: Option<&FsPath>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// One sampled path on the output grid and whether it ended absorbed.
type SampledPath = (Path, bool);

/// Sample `args.paths` paths of the chosen process, in path order.
pub fn sample_paths(args: &SimulateArgs) -> Result<Vec<SampledPath>> {
    let params = StableParams::new(args.alpha, args.c_plus)?;
    if !(args.x0 > 0.0) && args.process != Process::Stable {
        return Err(invalid(format!("x0 must be positive for {:?}, got {}", args.process, args.x0)));
    }
    if !(args.dt > 0.0 && args.dt.is_finite()) {
        return Err(invalid(format!("dt must be positive, got {}", args.dt)));
    }
    if !(args.horizon >= args.dt && args.horizon.is_finite()) {
        return Err(invalid(format!("horizon {} must be finite and at least dt {}", args.horizon, args.dt)));
    }
    if args.paths == 0 {
        return Err(invalid("--paths must be at least 1"));
    }
    let rule = StepRule::adaptive(args.eps, DEFAULT_DT_MIN, args.dt);
    rule.validate()?;
    let seed = derive_seed(args.seed, "simulate");
    match args.process {
        Process::Stable => map_paths(args.paths, seed, |_, rng| {
            Ok((simulate_path(&params, args.x0, args.horizon, args.dt, rng)?, false))
        }),
        Process::Cb => map_paths(args.paths, seed, |_, rng| cb_output(&params, args, &rule, rng)),
        Process::Cbi => sample_cbi(&params, args, &rule, seed),
        Process::DualConditioned => map_paths(args.paths, seed, |_, rng| {
            let stop = Stopping { horizon: args.horizon, ..Stopping::default() };
            let run = simulate_conditioned(HKind::SnDual, &params, args.x0, &rule, &stop, rng)?;
            if run.end != PathEnd::Horizon {
                return Err(Error::Estimation(format!("conditioned path ended by {:?}", run.end)));
            }
            Ok((resample(&run.path, args.dt)?, false))
        }),
    }
}

fn cb_output(params: &StableParams, args: &SimulateArgs, rule: &StepRule, rng: &mut crate::rng::PathRng) -> Result<SampledPath> {
    let stop = Stopping { clock_horizon: Some(args.horizon), ..Stopping::default() };
    let (tc, _) = simulate_cb(params, args.x0, rule, &stop, rng)?;
    let absorbed = tc.absorbed.is_some_and(|a| a <= args.horizon);
    let out = match tc.output.truncated(args.horizon) {
        Some(p) if !absorbed => p,
        _ => tc.output.clone(),
    };
    Ok((resample(&out, args.dt)?, absorbed))
}

/// CBI paths by weighted resampling of CB paths with weight `Y_horizon / x0`.
fn sample_cbi(params: &StableParams, args: &SimulateArgs, rule: &StepRule, seed: u64) -> Result<Vec<SampledPath>> {
    let pool = map_paths(args.paths * CBI_POOL_FACTOR, seed, |_, rng| cb_output(params, args, rule, rng))?;
    let weights: Vec<f64> = pool.iter().map(|(p, dead)| if *dead { 0.0 } else { p.last_value() }).collect();
    let index = WeightedIndex::new(&weights)
        .map_err(|e| Error::Estimation(format!("no CB path survived to the horizon: {e}")))?;
    let mut rng = path_rng(derive_seed(seed, "cbi-resample"), 0);
    Ok((0..args.paths).map(|_| pool[index.sample(&mut rng)].clone()).collect())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let paths = with_thread_cap(|| sample_paths(args))??;
    let mut w = csv::Writer::from_writer(open_output(args.out.as_deref())?);
    w.write_record(["path_id", "t", "value", "absorbed"]).map_err(verify::csv_err)?;
    for (id, (path, absorbed)) in paths.iter().enumerate() {
        let last = path.len() - 1;
        for (k, (t, v)) in path.times.iter().zip(&path.values).enumerate() {
            let flag = if *absorbed && k == last { "1" } else { "0" };
            w.write_record([id.to_string(), t.to_string(), v.to_string(), flag.to_string()]).map_err(verify::csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

type Formula = fn(&BTreeMap<&'static str, f64>) -> Result<f64>;

fn p(v: &BTreeMap<&'static str, f64>) -> Result<StableParams> {
    StableParams::new(v["alpha"], v["c_plus"])
}

/// Closed forms reachable from `eval`: name, required parameters, evaluator.
pub const FORMULAS: &[(&str, &[&str], Formula)] = &[
    ("psi", &["lambda"], |v| psi(&p(v)?, v["lambda"])),
    ("phi_inverse", &["q"], |v| phi_inverse(&p(v)?, v["q"])),
    ("gamma", &["x"], |v| Ok(sf::gamma(v["x"]))),
    ("mittag_leffler", &["x"], |v| Ok(sf::mittag_leffler(v["alpha"], v["x"])?.value)),
    ("mittag_leffler_derivative", &["x"], |v| Ok(sf::mittag_leffler_derivative(v["alpha"], v["x"])?.value)),
    ("scale_W", &["q", "x"], |v| sf::scale_w(&p(v)?, v["q"], v["x"])),
    ("scale_Z", &["q", "x"], |v| sf::scale_z(&p(v)?, v["q"], v["x"])),
    ("u_t", &["t", "lambda"], |v| cf::u_t(&p(v)?, v["t"], v["lambda"])),
    ("u_t_infinity", &["t"], |v| cf::u_t_infinity(&p(v)?, v["t"])),
    ("cb_laplace", &["x", "t", "lambda"], |v| cf::cb_laplace(&p(v)?, v["x"], v["t"], v["lambda"])),
    ("extinction_cdf", &["x", "t"], |v| cf::extinction_cdf(&p(v)?, v["x"], v["t"])),
    ("survival_probability", &["x", "t"], |v| cf::survival_probability(&p(v)?, v["x"], v["t"])),
    ("frechet_density", &["t"], |v| cf::frechet_density(&p(v)?, v["t"])),
    ("tail_i_asymptotic", &["t"], |v| cf::tail_i_asymptotic(&p(v)?, v["t"])),
    ("canonical_m", &[], |v| Ok(cf::canonical_m(&p(v)?))),
    ("entrance_law_cdf", &["t", "a"], |v| {
        let pp = p(v)?;
        cf::entrance_law_cdf(&pp, cf::canonical_m(&pp), v["t"], v["a"])
    }),
    ("cbi_entrance_laplace", &["t", "lambda"], |v| cf::cbi_entrance_laplace(&p(v)?, v["t"], v["lambda"])),
    ("cbi_exact_laplace", &["x", "t", "lambda"], |v| cf::cbi_exact_laplace(&p(v)?, v["x"], v["t"], v["lambda"])),
    ("qs_norm", &["t"], |v| cf::qs_norm(&p(v)?, v["t"])),
    ("qs_limit", &["lambda"], |v| cf::qs_limit(&p(v)?, v["lambda"])),
    ("cbi_qs_limit", &["lambda"], |v| cf::cbi_qs_limit(&p(v)?, v["lambda"])),
    ("qs_ratio", &["t", "lambda"], |v| cf::qs_ratio(&p(v)?, v["t"], v["lambda"])),
    ("survival_conditioned_laplace", &["x", "t", "lambda"], |v| {
        cf::survival_conditioned_laplace_exact(&p(v)?, v["x"], v["t"], v["lambda"])
    }),
    ("cor1_infimum_law", &["y", "z"], |v| cf::cor1_infimum_law(&p(v)?, v["y"], v["z"])),
    ("prop3_infimum_law", &["u", "v"], |v| cf::prop3_infimum_law(v["alpha"], v["u"], v["v"])),
    ("thm2_exit_i", &["x", "a", "q"], |v| cf::thm2_exit(&p(v)?, v["x"], v["a"], v["q"], cf::ExitBranch::UpFirst)),
    ("thm2_exit_ii", &["x", "a", "q"], |v| {
        cf::thm2_exit(&p(v)?, v["x"], v["a"], v["q"], cf::ExitBranch::ExtinctFirst)
    }),
    ("thm7_expflp1", &["a", "q"], |v| {
        cf::thm7_exp_functional(&p(v)?, v["a"], v["q"], cf::ExpFunctionalBranch::BeforePassage)
    }),
    ("thm7_expflp2", &["a", "q"], |v| {
        cf::thm7_exp_functional(&p(v)?, v["a"], v["q"], cf::ExpFunctionalBranch::NoPassage)
    }),
    ("cor4_expn", &["m_star", "lambda"], |v| cf::cor4_expn(&p(v)?, v["m_star"], v["lambda"])),
    ("prop4_sup_law", &["m_star", "y", "z"], |v| cf::prop4_sup_law(v["m_star"], v["y"], v["z"])),
    ("xi_exponent", &["m", "lambda"], |v| cf::xi_exponent(v["alpha"], v["m"], v["lambda"])),
    ("xi_star_exponent", &["m_star", "lambda"], |v| cf::xi_star_exponent(v["alpha"], v["m_star"], v["lambda"])),
];

pub fn formula_names() -> Vec<&'static str> {
    FORMULAS.iter().map(|f| f.0).collect()
}

/// Rows of the value table: the grid point and its value.
/// Column names and `(inputs, value)` rows of an `eval` run.
pub type EvalTable = (Vec<&'static str>, Vec<(Vec<f64>, f64)>);

pub fn eval_table(args: &EvalArgs) -> Result<EvalTable> {
    let (_, needed, formula) = FORMULAS.iter().find(|f| f.0 == args.formula).ok_or_else(|| Error::UnknownFormula {
        name: args.formula.clone(),
        available: formula_names().join(", "),
    })?;
    let grids: [(&'static str, &Vec<f64>); 13] = [
        ("alpha", &args.alpha),
        ("c_plus", &args.c_plus),
        ("t", &args.t),
        ("lambda", &args.lambda),
        ("x", &args.x),
        ("q", &args.q),
        ("a", &args.a),
        ("y", &args.y),
        ("z", &args.z),
        ("u", &args.u),
        ("v", &args.v),
        ("m", &args.m),
        ("m_star", &args.m_star),
    ];
    let mut columns = vec!["alpha", "c_plus"];
    columns.extend(needed.iter().copied());
    let mut axes = Vec::new();
    for name in &columns {
        let values = grids.iter().find(|g| g.0 == *name).expect("every formula key has a flag").1;
        if values.is_empty() {
            return Err(invalid(format!("formula `{}` needs --{}", args.formula, name.replace('_', "-"))));
        }
        axes.push(values.clone());
    }
    let mut rows = Vec::new();
    let mut idx = vec![0usize; axes.len()];
    loop {
        let point: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        let map: BTreeMap<&'static str, f64> = columns.iter().copied().zip(point.iter().copied()).collect();
        rows.push((point, formula(&map)?));
        // odometer over the grid, last axis fastest
        let mut k = axes.len();
        loop {
            if k == 0 {
                return Ok((columns, rows));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (columns, rows) = eval_table(args)?;
    let mut out = open_output(args.out.as_deref())?;
    if rows.len() == 1 {
        writeln!(out, "{}", rows[0].1)?;
    } else {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = columns.clone();
        header.push("value");
        w.write_record(&header).map_err(verify::csv_err)?;
        for (point, value) in &rows {
            let mut rec: Vec<String> = point.iter().map(|v| v.to_string()).collect();
            rec.push(value.to_string());
            w.write_record(&rec).map_err(verify::csv_err)?;
        }
        out = Box::new(w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    }
    out.flush()?;
    Ok(())
}

fn parse_param(s: &str) -> Result<(String, f64)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got `{s}`")))?;
    let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("`{v}` is not a number in `{s}`")))?;
    Ok((k.trim().to_string(), v))
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    if args.list {
        let mut out = io::stdout().lock();
        for e in verify::registry() {
            let keys: Vec<String> = e.defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let rule = match e.ks_budget {
                Some(b) => format!("KS statistic < {b}"),
                None => format!("bias budget {}", e.bias_budget),
            };
            writeln!(out, "{:24} {}\n{:24} defaults: {}; {rule}", e.name, e.description, "", keys.join(" "))?;
        }
        return Ok(0);
    }
    let mut cfg = match (&args.config, &args.identity) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => {
            let mut spec = IdentitySpec::new(name);
            for p in &args.params {
                let (k, v) = parse_param(p)?;
                spec.params.insert(k, v);
            }
            spec.n_paths = args.paths;
            RunConfig {
                version: SCHEMA_VERSION,
                alpha: None,
                c_plus: None,
                x0: None,
                dt: None,
                horizon: None,
                eps: None,
                dt_min: None,
                n_paths: default_paths(),
                seed: default_seed(),
                identities: vec![spec],
                output: None,
                format: Format::Json,
            }
        }
        (None, None) => return Err(Error::Config("verify needs --config, --identity or --list".into())),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = cfg.run()?;
    let target = args.out.clone().or(cfg.output.clone());
    let out = open_output(target.as_deref())?;
    match args.format.unwrap_or(cfg.format) {
        Format::Json => {
            let mut out = out;
            out.write_all(report.to_json()?.as_bytes())?;
            out.flush()?;
        }
        Format::Csv => report.write_csv(out)?,
    }
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {} (estimate {}, closed form {})", c.name, c.estimate.mean, c.closed_form);
    }
    Ok(if report.pass { 0 } else { 1 })
}
