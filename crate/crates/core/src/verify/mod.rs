//! Identity registry and the statistics engine behind `csbp verify`.
//!
//! | name | identity checked |
//! |---|---|
//! | `extinction_frechet` | extinction time of `Y` has CDF `exp(-x u_t(inf))` (KS) |
//! | `cb_laplace` | `E_x[exp(-lambda Y_t)] = exp(-x u_t(lambda))` |
//! | `exit_thm2_i` | exit above `a` before extinction, discounted by total progeny |
//! | `exit_thm2_ii` | extinction before exit above `a`, discounted by total progeny |
//! | `expfunc_thm7` | exponential functionals of `xi`, through the exit of `Y` from `(0, e^a)` |
//! | `infimum_cor1` | infimum of the conditioned dual: `((y-z)/y)^(alpha-1)` |
//! | `infimum_prop3` | infimum of `xi` before its last passage above `u` |
//! | `selfsim_index_shift` | `k Y_(k^-(alpha-1) t)` from `x` equals `Y_t` from `kx` (two-sample KS) |
//! | `entrance_law_thm3` | reversed CB-process at a small time against the entrance law |
//! | `reversal_thm1_marginal` | reversed CB marginal against the time-changed conditioned dual (two-sample KS) |
//! | `cbi_laplace_lemma6` | h-transformed CB Laplace transform against its exact form |
//! | `qs_lemma5` | survival-conditioned rescaled Laplace transform at large `t` |
//! | `qs_cbi_lemma6` | CBI rescaled Laplace transform at large `t` |
//! | `sup_prop4_shape` | sup of the CBI before its last passage below `y` is linear in `y/z` |
//! | `lambert_consistency` | h-transformed CB-process equals the time-changed conditioned `X` |
//!
//! A moment check passes when `|mean - closed_form| <= z_tolerance * stderr + bias_budget`.
//! A KS check passes when the statistic is below its declared `ks_budget`,
//! or, without a budget, when the p-value is at least `ks_min_p`.

mod identities;
pub mod ks;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{with_thread_cap, MCEstimate};
use crate::rng::derive_seed;
use crate::stable_levy::StepRule;
use ks::KsResult;

/// Version written to and expected in reports and configs.
pub const SCHEMA_VERSION: u32 = 1;

/// Default multiple of the standard error allowed by moment checks.
pub const DEFAULT_Z_TOLERANCE: f64 = 4.0;
/// Default p-value floor of KS checks without a statistic budget.
pub const DEFAULT_KS_MIN_P: f64 = 0.01;
/// Default adaptive step constant: `dt = eps * d^alpha`.
pub const DEFAULT_EPS: f64 = 0.03;
/// Default adaptive step floor.
pub const DEFAULT_DT_MIN: f64 = 1e-15;

pub type ParamMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub params: ParamMap,
    pub closed_form: f64,
    pub estimate: MCEstimate,
    /// `(mean - closed_form) / (stderr + bias_budget / 4)`; `None` when undefined.
    pub z: Option<f64>,
    pub ks: Option<KsResult>,
    pub bias_budget: f64,
    pub pass: bool,
    pub ess: Option<f64>,
    pub notes: Vec<String>,
    /// Wall-clock seconds; left out of the JSON report so it stays reproducible.
    #[serde(skip)]
    pub runtime_s: f64,
}

/// Resolved inputs of one identity run.
#[derive(Debug, Clone)]
pub struct Context {
    pub params: ParamMap,
    pub n_paths: usize,
    pub seed: u64,
    pub rule: StepRule,
    pub bias_budget: f64,
    pub z_tolerance: f64,
}

impl Context {
    /// A resolved parameter; every key is filled from the registry defaults.
    pub(crate) fn get(&self, key: &str) -> f64 {
        self.params[key]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum CheckKind {
    Moment,
    Ks,
}

/// What an identity runner hands back before the pass rule is applied.
#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    closed_form: f64,
    estimate: MCEstimate,
    ks: Option<KsResult>,
    ess: Option<f64>,
    notes: Vec<String>,
    kind: CheckKind,
    /// Extra condition the check must also meet.
    required: bool,
}

impl Outcome {
    pub(crate) fn moment(closed_form: f64, estimate: MCEstimate) -> Self {
        Self { closed_form, estimate, ks: None, ess: None, notes: Vec::new(), kind: CheckKind::Moment, required: true }
    }

    pub(crate) fn ks(closed_form: f64, estimate: MCEstimate, ks: KsResult) -> Self {
        Self { ks: Some(ks), kind: CheckKind::Ks, ..Self::moment(closed_form, estimate) }
    }

    pub(crate) fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub(crate) fn with_ess(mut self, ess: f64) -> Self {
        self.ess = Some(ess);
        self
    }

    pub(crate) fn require(mut self, ok: bool) -> Self {
        self.required &= ok;
        self
    }
}

type Runner = fn(&Context) -> Result<Outcome>;

/// A registered identity: its parameters with defaults and its error budgets.
pub struct IdentityEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub defaults: &'static [(&'static str, f64)],
    pub bias_budget: f64,
    pub ks_budget: Option<f64>,
    runner: Runner,
}

const STABLE: [(&str, f64); 2] = [("alpha", 1.5), ("c_plus", 1.0)];

macro_rules! defaults {
    ($(($k:expr, $v:expr)),* $(,)?) => {
        &[STABLE[0], STABLE[1], $(($k, $v)),*]
    };
}

static REGISTRY: &[IdentityEntry] = &[
    IdentityEntry {
        name: "extinction_frechet",
        description: "extinction time against its Frechet-type CDF (one-sample KS)",
        defaults: defaults![("x", 1.0)],
        bias_budget: 0.0,
        ks_budget: Some(0.02),
        runner: identities::extinction_frechet,
    },
    IdentityEntry {
        name: "cb_laplace",
        description: "E_x[exp(-lambda Y_t)] = exp(-x u_t(lambda))",
        defaults: defaults![("x", 1.0), ("t", 0.5), ("lambda", 1.0)],
        bias_budget: 0.01,
        ks_budget: None,
        runner: identities::cb_laplace_check,
    },
    IdentityEntry {
        name: "exit_thm2_i",
        description: "exit above a before extinction, discounted by exp(-q total progeny)",
        defaults: defaults![("x", 1.0), ("a", 2.0), ("q", 0.0)],
        bias_budget: 0.01,
        ks_budget: None,
        runner: identities::exit_thm2_i,
    },
    IdentityEntry {
        name: "exit_thm2_ii",
        description: "extinction before exit above a, discounted by exp(-q total progeny)",
        defaults: defaults![("x", 1.0), ("a", 2.0), ("q", 0.0)],
        bias_budget: 0.01,
        ks_budget: None,
        runner: identities::exit_thm2_ii,
    },
    IdentityEntry {
        name: "infimum_cor1",
        description: "infimum of the conditioned dual from y stays above z with probability ((y-z)/y)^(alpha-1)",
        defaults: defaults![("y", 1.0), ("z", 0.5), ("horizon", 1e4)],
        bias_budget: 0.0,
        ks_budget: None,
        runner: identities::infimum_cor1,
    },
    IdentityEntry {
        name: "infimum_prop3",
        description: "infimum of xi before its last passage above u stays above v",
        defaults: defaults![("x", 1.0), ("u", -1.0), ("v", -2.0)],
        bias_budget: 0.0,
        ks_budget: None,
        runner: identities::infimum_prop3,
    },
    IdentityEntry {
        name: "selfsim_index_shift",
        description: "k Y at time k^-(alpha-1) t from x against Y_t from kx (two-sample KS)",
        defaults: defaults![("x", 1.0), ("k", 2.0), ("t", 0.5)],
        bias_budget: 0.0,
        ks_budget: None,
        runner: identities::selfsim_index_shift,
    },
    IdentityEntry {
        name: "entrance_law_thm3",
        description: "reversed CB-process from x at time t against entrance-law quantiles",
        defaults: defaults![("x", 10.0), ("t", 0.05)],
        bias_budget: 0.02,
        ks_budget: None,
        runner: identities::entrance_law_thm3,
    },
    IdentityEntry {
        name: "reversal_thm1_marginal",
        description: "reversed CB marginal against the time-changed conditioned dual (two-sample KS)",
        defaults: defaults![("y", 1.0), ("r", 0.5), ("x0_ratio", 1e-9), ("exit_ratio", 200.0)],
        bias_budget: 0.0,
        ks_budget: None,
        runner: identities::reversal_thm1_marginal,
    },
    IdentityEntry {
        name: "cbi_laplace_lemma6",
        description: "h-transformed E_x[exp(-lambda Y_t)] against the exact CBI Laplace transform",
        defaults: defaults![("x", 1.0), ("t", 0.5), ("lambda", 1.0)],
        bias_budget: 0.01,
        ks_budget: None,
        runner: identities::cbi_laplace_lemma6,
    },
    IdentityEntry {
        name: "qs_lemma5",
        description: "E_x[exp(-lambda Y_t / c_t) | survival to t] against its t -> infinity limit",
        defaults: &[("alpha", 2.0), ("c_plus", 0.5), ("x", 1.0), ("t", 50.0), ("lambda", 1.0)],
        bias_budget: 0.02,
        ks_budget: None,
        runner: identities::qs_lemma5,
    },
    IdentityEntry {
        name: "qs_cbi_lemma6",
        description: "CBI E_x[exp(-lambda Y_t / c_t)] against its t -> infinity limit",
        defaults: &[("alpha", 2.0), ("c_plus", 0.5), ("x", 1.0), ("t", 50.0), ("lambda", 1.0)],
        bias_budget: 0.02,
        ks_budget: None,
        runner: identities::qs_cbi_lemma6,
    },
    IdentityEntry {
        name: "expfunc_thm7",
        description: "Laplace transforms of exponential functionals of xi (branch 1 or 2)",
        defaults: defaults![("a", 0.5), ("q", 0.5), ("branch", 1.0)],
        bias_budget: 0.01,
        ks_budget: None,
        runner: identities::expfunc_thm7,
    },
    IdentityEntry {
        name: "sup_prop4_shape",
        description: "P(sup before last passage below y <= z) is 1 - kappa y/z: intercept 1, R^2 > 0.99",
        defaults: &[("alpha", 2.0), ("c_plus", 1.0), ("y", 1.0), ("x0_ratio", 1e-6), ("exit_ratio", 1e3)],
        bias_budget: 0.03,
        ks_budget: None,
        runner: identities::sup_prop4_shape,
    },
    IdentityEntry {
        name: "lambert_consistency",
        description: "h-transformed CB-process against time-changed conditioned X, E[exp(-lambda Y_t)]",
        defaults: &[("alpha", 2.0), ("c_plus", 1.0), ("x", 1.0), ("t", 0.5), ("lambda", 1.0), ("x_horizon", 20.0)],
        bias_budget: 0.01,
        ks_budget: None,
        runner: identities::lambert_consistency,
    },
];

/// All registered identities, in registry order.
pub fn registry() -> &'static [IdentityEntry] {
    REGISTRY
}

pub fn lookup(name: &str) -> Result<&'static IdentityEntry> {
    REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownIdentity(name.to_string()))
}

/// Keys every identity accepts on top of its own parameters.
const STEP_KEYS: [&str; 3] = ["eps", "dt_min", "dt_max"];

/// One identity as listed in a config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySpec {
    pub name: String,
    #[serde(default)]
    pub params: ParamMap,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub bias_budget: Option<f64>,
    pub ks_budget: Option<f64>,
    pub ks_min_p: Option<f64>,
    pub z_tolerance: Option<f64>,
}

impl IdentitySpec {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), ..Self::default() }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn paths(mut self, n: usize) -> Self {
        self.n_paths = Some(n);
        self
    }
}

/// Settings shared by every identity of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSettings {
    pub master_seed: u64,
    pub n_paths: usize,
    /// Parameters applied to every identity that takes them, below per-identity values.
    pub shared: ParamMap,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        Self { master_seed: 1, n_paths: 10_000, shared: ParamMap::new() }
    }
}

/// Fully resolved identity run, validated before anything is simulated.
#[derive(Debug, Clone)]
pub struct PlannedCheck {
    pub name: String,
    pub context: Context,
    pub ks_budget: Option<f64>,
    pub ks_min_p: f64,
    runner: Runner,
}

fn finite_nonneg(what: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{what} must be finite and non-negative, got {v}")))
    }
}

/// Resolve and validate one identity spec.
pub fn plan(spec: &IdentitySpec, index: usize, settings: &SuiteSettings) -> Result<PlannedCheck> {
    let entry = lookup(&spec.name)?;
    let accepts = |k: &str| entry.defaults.iter().any(|(d, _)| *d == k) || STEP_KEYS.contains(&k);
    let mut params: ParamMap = entry.defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in &settings.shared {
        if accepts(k) {
            params.insert(k.clone(), *v);
        }
    }
    for (k, v) in &spec.params {
        if !accepts(k) {
            let mut keys: Vec<&str> = entry.defaults.iter().map(|(d, _)| *d).collect();
            keys.extend(STEP_KEYS);
            return Err(Error::Config(format!(
                "identity `{}` has no parameter `{k}`; accepted: {}",
                entry.name,
                keys.join(", ")
            )));
        }
        params.insert(k.clone(), *v);
    }
    if let Some((k, v)) = params.iter().find(|(_, v)| v.is_nan()) {
        return Err(Error::Config(format!("parameter `{k}` of `{}` is NaN ({v})", entry.name)));
    }
    let eps = params.remove("eps").unwrap_or(DEFAULT_EPS);
    let dt_min = params.remove("dt_min").unwrap_or(DEFAULT_DT_MIN);
    let dt_max = params.remove("dt_max").unwrap_or(f64::INFINITY);
    let rule = StepRule::adaptive(eps, dt_min, dt_max);
    rule.validate().map_err(|e| Error::Config(format!("`{}`: {e}", entry.name)))?;
    let n_paths = spec.n_paths.unwrap_or(settings.n_paths);
    if n_paths < 2 {
        return Err(Error::Config(format!("`{}` needs at least 2 paths, got {n_paths}", entry.name)));
    }
    let context = Context {
        params,
        n_paths,
        seed: spec.seed.unwrap_or_else(|| derive_seed(settings.master_seed, &format!("{index}:{}", entry.name))),
        rule,
        bias_budget: finite_nonneg("bias_budget", spec.bias_budget.unwrap_or(entry.bias_budget))?,
        z_tolerance: finite_nonneg("z_tolerance", spec.z_tolerance.unwrap_or(DEFAULT_Z_TOLERANCE))?,
    };
    let ks_budget = match spec.ks_budget.or(entry.ks_budget) {
        Some(b) => Some(finite_nonneg("ks_budget", b)?),
        None => None,
    };
    let ks_min_p = finite_nonneg("ks_min_p", spec.ks_min_p.unwrap_or(DEFAULT_KS_MIN_P))?;
    Ok(PlannedCheck { name: entry.name.to_string(), context, ks_budget, ks_min_p, runner: entry.runner })
}

impl PlannedCheck {
    /// Run the experiment and apply the pass rule.
    pub fn run(&self) -> Result<IdentityCheck> {
        let start = Instant::now();
        let out = (self.runner)(&self.context)?;
        let ctx = &self.context;
        let diff = out.estimate.mean - out.closed_form;
        let total_error = out.estimate.stderr + ctx.bias_budget / 4.0;
        let z = if total_error > 0.0 {
            Some(diff / total_error)
        } else if diff == 0.0 {
            Some(0.0)
        } else {
            None
        };
        let pass = out.required
            && match out.kind {
                CheckKind::Moment => diff.abs() <= ctx.z_tolerance * out.estimate.stderr + ctx.bias_budget,
                CheckKind::Ks => {
                    let ks = out.ks.expect("KS checks carry a KS result");
                    match self.ks_budget {
                        Some(budget) => ks.statistic < budget,
                        None => ks.p_value >= self.ks_min_p,
                    }
                }
            };
        let mut params = ctx.params.clone();
        if let StepRule::Adaptive { eps, dt_min, dt_max } = ctx.rule {
            params.insert("eps".into(), eps);
            params.insert("dt_min".into(), dt_min);
            if dt_max.is_finite() {
                params.insert("dt_max".into(), dt_max);
            }
        }
        let mut notes = out.notes;
        if let Some(b) = self.ks_budget.filter(|_| out.kind == CheckKind::Ks) {
            notes.push(format!("KS budget {b}"));
        }
        Ok(IdentityCheck {
            name: self.name.clone(),
            params,
            closed_form: out.closed_form,
            estimate: out.estimate,
            z,
            ks: out.ks,
            bias_budget: ctx.bias_budget,
            pass,
            ess: out.ess,
            notes,
            runtime_s: start.elapsed().as_secs_f64(),
        })
    }
}

/// Run a single identity.
pub fn run_identity(name: &str, params: &ParamMap, n_paths: usize, seed: u64) -> Result<IdentityCheck> {
    let spec = IdentitySpec { name: name.to_string(), params: params.clone(), n_paths: Some(n_paths), seed: Some(seed), ..IdentitySpec::default() };
    plan(&spec, 0, &SuiteSettings::default())?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub master_seed: u64,
    pub pass: bool,
    pub checks: Vec<IdentityCheck>,
}

/// Validate every spec, then run them all in parallel (capped by `CSBP_THREADS`).
pub fn run_suite(specs: &[IdentitySpec], settings: &SuiteSettings) -> Result<Report> {
    let planned = specs.iter().enumerate().map(|(i, s)| plan(s, i, settings)).collect::<Result<Vec<_>>>()?;
    let checks = with_thread_cap(|| planned.par_iter().map(PlannedCheck::run).collect::<Result<Vec<_>>>())??;
    Ok(Report { schema_version: SCHEMA_VERSION, master_seed: settings.master_seed, pass: checks.iter().all(|c| c.pass), checks })
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Summary table: name, closed_form, estimate, stderr, z, ks, p, pass, runtime_s.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record(["name", "closed_form", "estimate", "stderr", "z", "ks", "p", "pass", "runtime_s"]).map_err(csv_err)?;
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                c.closed_form.to_string(),
                c.estimate.mean.to_string(),
                c.estimate.stderr.to_string(),
                opt(c.z),
                opt(c.ks.map(|k| k.statistic)),
                opt(c.ks.map(|k| k.p_value)),
                c.pass.to_string(),
                format!("{:.3}", c.runtime_s),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
