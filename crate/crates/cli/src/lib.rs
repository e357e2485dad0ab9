//! Plumbing behind the `convex-auction` binary: distribution specs, the
//! method catalogue, experiment configs, CSV rows and mechanism files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use convex_auction::mechanisms::{
    ex_ante_bound, heuristic_brm, heuristic_lb_rrm, pseudo_surplus_maximizer, surplus_maximizer,
    virtual_surplus_maximizer, AllocMethod, Mechanism, MechanismReport, ObjectiveKind,
};
use convex_auction::model::{make_binomial, make_categorical, make_uniform};
use convex_auction::oracle::{exact_brm, exact_rrm, OracleConfig};
use convex_auction::AuctionInstance;

/// `categorical:L,H,p`, `uniform:K` or `binomial:t,p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    Categorical { low: f64, high: f64, p_low: f64 },
    Uniform { points: usize },
    Binomial { trials: u32, p: f64 },
}

impl DistributionSpec {
    /// Symmetric instance with `n` bidders.
    pub fn instance(&self, n: usize) -> Result<AuctionInstance> {
        let (t, d) = match *self {
            Self::Categorical { low, high, p_low } => make_categorical(low, high, p_low)?,
            Self::Uniform { points } => make_uniform(points)?,
            Self::Binomial { trials, p } => make_binomial(trials, p)?,
        };
        Ok(AuctionInstance::symmetric(n, t, d)?)
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Categorical { low, high, p_low } => write!(f, "categorical:{low},{high},{p_low}"),
            Self::Uniform { points } => write!(f, "uniform:{points}"),
            Self::Binomial { trials, p } => write!(f, "binomial:{trials},{p}"),
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| anyhow!("distribution '{s}' should look like kind:args"))?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let num = |j: usize| -> Result<f64> {
            args[j].parse::<f64>().with_context(|| format!("bad number '{}' in '{s}'", args[j]))
        };
        let want = |k: usize| -> Result<()> {
            if args.len() == k {
                Ok(())
            } else {
                bail!("'{kind}' takes {k} argument(s), got {}", args.len())
            }
        };
        let spec = match kind.trim() {
            "categorical" => {
                want(3)?;
                Self::Categorical { low: num(0)?, high: num(1)?, p_low: num(2)? }
            }
            "uniform" => {
                want(1)?;
                Self::Uniform { points: args[0].parse().with_context(|| format!("bad point count in '{s}'"))? }
            }
            "binomial" => {
                want(2)?;
                Self::Binomial {
                    trials: args[0].parse().with_context(|| format!("bad trial count in '{s}'"))?,
                    p: num(1)?,
                }
            }
            other => bail!("unknown distribution '{other}' (categorical, uniform, binomial)"),
        };
        // surface range errors at parse time
        spec.instance(1)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    ExactRrm,
    ExactBrm,
    PseudoSurplusGreedy,
    PseudoSurplusCf,
    HeurLbGreedy,
    HeurLbCf,
    HeurRrmRev,
    HeurRrmCf,
    HeurBrmRev,
    HeurBrmCf,
    ExAnte,
    ExAnteTrunc,
    Surplus,
    VirtualSurplus,
}

impl Method {
    pub const ALL: [Method; 14] = [
        Method::ExactRrm,
        Method::ExactBrm,
        Method::PseudoSurplusGreedy,
        Method::PseudoSurplusCf,
        Method::HeurLbGreedy,
        Method::HeurLbCf,
        Method::HeurRrmRev,
        Method::HeurRrmCf,
        Method::HeurBrmRev,
        Method::HeurBrmCf,
        Method::ExAnte,
        Method::ExAnteTrunc,
        Method::Surplus,
        Method::VirtualSurplus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ExactRrm => "exact_rrm",
            Method::ExactBrm => "exact_brm",
            Method::PseudoSurplusGreedy => "pseudo_surplus_greedy",
            Method::PseudoSurplusCf => "pseudo_surplus_cf",
            Method::HeurLbGreedy => "heur_lb_greedy",
            Method::HeurLbCf => "heur_lb_cf",
            Method::HeurRrmRev => "heur_rrm_rev",
            Method::HeurRrmCf => "heur_rrm_cf",
            Method::HeurBrmRev => "heur_brm_rev",
            Method::HeurBrmCf => "heur_brm_cf",
            Method::ExAnte => "ex_ante",
            Method::ExAnteTrunc => "ex_ante_trunc",
            Method::Surplus => "surplus",
            Method::VirtualSurplus => "virtual_surplus",
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Method::ExactRrm | Method::ExactBrm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        // greedy spellings of the revenue heuristics
        let s = match s {
            "heur_rrm_greedy" => "heur_rrm_rev",
            "heur_brm_greedy" => "heur_brm_rev",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| anyhow!("unknown method '{s}'"))
    }
}

/// Comma-separated method list; empty input gives an empty list.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
}

/// One method run on one instance.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub kind: ObjectiveKind,
    pub value: f64,
    pub revenue: f64,
    pub verified: bool,
    /// Absent for the ex-ante methods, which only produce an interim rule.
    pub mechanism: Option<Mechanism>,
    pub report: MechanismReport,
    pub runtime_ms: f64,
}

/// Runs `method`. Returns `None` when an exact method exceeds the oracle cap.
pub fn run_method(
    instance: &AuctionInstance,
    method: Method,
    epsilon: f64,
    oracle: &OracleConfig,
) -> Result<Option<MethodOutcome>> {
    if method.is_exact() && oracle.admits(instance).is_err() {
        return Ok(None);
    }
    let greedy = AllocMethod::Greedy { epsilon };
    let start = Instant::now();
    let (mechanism, report) = match method {
        Method::ExactRrm => wrap(exact_rrm(instance, oracle))?,
        Method::ExactBrm => wrap(exact_brm(instance, oracle))?,
        Method::PseudoSurplusGreedy => wrap(pseudo_surplus_maximizer(instance, greedy))?,
        Method::PseudoSurplusCf => wrap(pseudo_surplus_maximizer(instance, AllocMethod::ClosedForm))?,
        Method::HeurLbGreedy | Method::HeurRrmRev => wrap(heuristic_lb_rrm(instance, greedy))?,
        Method::HeurLbCf | Method::HeurRrmCf => wrap(heuristic_lb_rrm(instance, AllocMethod::ClosedForm))?,
        Method::HeurBrmRev => wrap(heuristic_brm(instance, greedy))?,
        Method::HeurBrmCf => wrap(heuristic_brm(instance, AllocMethod::ClosedForm))?,
        Method::ExAnte => (None, ex_ante_bound(instance, false)?.1),
        Method::ExAnteTrunc => (None, ex_ante_bound(instance, true)?.1),
        Method::Surplus => wrap(surplus_maximizer(instance))?,
        Method::VirtualSurplus => wrap(virtual_surplus_maximizer(instance))?,
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    // the revenue heuristics report revenue rather than their objective
    let (kind, value) = match method {
        Method::HeurRrmRev | Method::HeurRrmCf => (ObjectiveKind::RevenueRobust, report.revenue),
        _ => (report.kind, report.objective_value),
    };
    Ok(Some(MethodOutcome {
        method,
        kind,
        value,
        revenue: report.revenue,
        verified: report.verification.all_passed(),
        mechanism,
        report,
        runtime_ms,
    }))
}

fn wrap(r: convex_auction::Result<(Mechanism, MechanismReport)>) -> Result<(Option<Mechanism>, MechanismReport)> {
    let (m, rep) = r?;
    Ok((Some(m), rep))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub distribution: DistributionSpec,
    pub n_min: usize,
    pub n_max: usize,
    pub methods: Vec<Method>,
    pub epsilon: f64,
    pub oracle_grid: f64,
    pub output: Option<PathBuf>,
    /// When false the runtime column is left empty.
    pub timing: bool,
}

/// Settings as strings, keyed like the config file. Later layers win.
#[derive(Debug, Clone, Default)]
pub struct Settings(BTreeMap<String, String>);

pub const CONFIG_KEYS: [&str; 8] =
    ["distribution", "n_min", "n_max", "methods", "epsilon", "oracle_grid", "output", "timing"];

impl Settings {
    /// `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", no + 1))?;
            let k = k.trim().to_string();
            if !CONFIG_KEYS.contains(&k.as_str()) {
                bail!("line {}: unknown key '{k}'", no + 1);
            }
            map.insert(k, v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| anyhow!("bad value '{v}' for {key}: {e}")),
        }
    }

    pub fn into_config(self) -> Result<ExperimentConfig> {
        let distribution: DistributionSpec = self
            .0
            .get("distribution")
            .ok_or_else(|| anyhow!("no distribution given"))?
            .parse()?;
        let cfg = ExperimentConfig {
            distribution,
            n_min: self.get("n_min", 1)?,
            n_max: self.get("n_max", 1)?,
            methods: match self.0.get("methods") {
                Some(m) => parse_methods(m)?,
                None => vec![Method::HeurLbCf, Method::HeurRrmRev, Method::HeurBrmRev],
            },
            epsilon: self.get("epsilon", 1e-3)?,
            oracle_grid: self.get("oracle_grid", OracleConfig::default().grid)?,
            output: self.0.get("output").map(PathBuf::from),
            timing: self.get("timing", true)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 || self.n_min > self.n_max {
            bail!("bidder range {}..{} is empty", self.n_min, self.n_max);
        }
        convex_auction::alloc::GreedyConfig::new(self.epsilon, 0.5)?;
        self.oracle().validate()?;
        Ok(())
    }

    pub fn oracle(&self) -> OracleConfig {
        OracleConfig::with_grid(self.oracle_grid)
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub method: String,
    pub distribution: String,
    pub n_bidders: usize,
    pub objective_kind: String,
    pub value: f64,
    pub runtime_ms: Option<f64>,
    pub verified: bool,
}

/// Every (method, n) pair in config order. Pairs run in parallel; rows come
/// back in (method, n) order. Oversized exact runs are skipped with a
/// notice on stderr.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<Row>> {
    config.validate()?;
    let oracle = config.oracle();
    let pairs: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| (config.n_min..=config.n_max).map(move |n| (m, n)))
        .collect();
    let results: Vec<Result<Option<Row>>> = pairs
        .par_iter()
        .map(|&(method, n)| {
            let inst = config.distribution.instance(n)?;
            let Some(out) = run_method(&inst, method, config.epsilon, &oracle)? else {
                eprintln!(
                    "notice: skipping {method} at n={n}: {} allocation variables exceed the oracle cap of {}",
                    inst.num_alloc_vars(),
                    oracle.max_profile_vars
                );
                return Ok(None);
            };
            Ok(Some(Row {
                method: method.name().to_string(),
                distribution: config.distribution.to_string(),
                n_bidders: n,
                objective_kind: out.kind.name().to_string(),
                value: out.value,
                runtime_ms: config.timing.then_some(out.runtime_ms),
                verified: out.verified,
            }))
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        if let Some(row) = r? {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// CSV with a header line, even when `rows` is empty.
pub fn write_csv<W: std::io::Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["method", "distribution", "n_bidders", "objective_kind", "value", "runtime_ms", "verified"])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// An instance together with a mechanism for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismFile {
    pub instance: AuctionInstance,
    pub mechanism: Mechanism,
}

impl MechanismFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        file.instance_matches()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn instance_matches(&self) -> Result<()> {
        let t = &self.mechanism.allocation.table;
        if t.len() != self.instance.num_bidders() || t.iter().any(|r| r.len() != self.instance.num_profiles()) {
            bail!("allocation table does not fit the instance");
        }
        Ok(())
    }
}
