//! Exact solvers for small instances, the constraint verifier and the
//! program exporter.
//!
//! Payments are pinned down by the allocation, so every search runs over
//! ex-post allocation tables only. Two strategies are available:
//!
//! * [`OracleStrategy::Concave`] (default): revenue is a sum of square
//!   roots of functions linear in the table, hence concave, and the
//!   feasible set is a polytope. A barrier method finds the continuous
//!   optimum, which upper-bounds every grid table. The result is then
//!   snapped to the grid: with at most [`SNAP_EXHAUSTIVE_VARS`] variables
//!   every floor/ceil combination is tried, otherwise nearest rounding with
//!   feasibility repair and plain flooring are compared. The best feasible
//!   table wins; if none is feasible the continuous table is returned.
//! * [`OracleStrategy::Enumerate`]: depth-first search over every grid
//!   table, profile by profile, pruning on per-profile supply and (robust
//!   case) own-type monotonicity. Grid-optimal by construction but only
//!   practical on coarse grids. The outermost variable is split across
//!   threads; ties go to the lexicographically smallest table.

pub mod concave;
pub mod export;
pub mod verify;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alloc::unit_steps;
use crate::discretization::round_allocation;
use crate::error::{AuctionError, Result};
use crate::mechanisms::{Mechanism, MechanismReport, ObjectiveKind, Provenance};
use crate::model::{AuctionInstance, ExPostAllocation, PerceivedPayment};
use crate::par;
use crate::payments::{bayesian_payment_clamped, interim_collapse, payment_rule_clamped, ExpectedRevenue};
use concave::{BarrierOptions, ConcaveProgram, Sparse};

pub use export::{export_program, ProgramKind};
pub use verify::{verify, verify_interim, verify_with_tol, ConstraintCheck, ConstraintKind, VerificationReport, VERIFY_TOL};

/// Snapping tries all 2^m floor/ceil tables up to this many variables.
pub const SNAP_EXHAUSTIVE_VARS: usize = 16;
/// Feasibility slack for grid tables.
const GRID_TOL: f64 = 1e-12;
/// Objective values this close count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStrategy {
    Concave,
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub grid: f64,
    pub max_profile_vars: usize,
    pub strategy: OracleStrategy,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid: 1e-3,
            max_profile_vars: 128,
            strategy: OracleStrategy::Concave,
        }
    }
}

impl OracleConfig {
    pub fn with_grid(grid: f64) -> Self {
        Self {
            grid,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<usize> {
        if !(self.grid > 0.0 && self.grid <= 0.1) {
            return Err(AuctionError::InvalidConfig(format!(
                "oracle grid {} outside (0, 0.1]",
                self.grid
            )));
        }
        unit_steps(self.grid, "oracle grid")
    }

    /// Refuses instances with more free allocation variables than the cap.
    pub fn admits(&self, instance: &AuctionInstance) -> Result<()> {
        let vars = instance.num_alloc_vars();
        if vars > self.max_profile_vars {
            Err(AuctionError::TooLarge {
                vars,
                cap: self.max_profile_vars,
            })
        } else {
            Ok(())
        }
    }
}

/// Extra facts attached to an oracle's report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDetails {
    pub grid: f64,
    /// n · max value · grid.
    pub slack: f64,
    /// Optimum of the continuous program, when the concave strategy ran.
    pub continuous_optimum: Option<f64>,
    /// Whether the returned table lies on the grid.
    pub on_grid: bool,
    pub strategy: OracleStrategy,
}

/// Which revenue program an oracle maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Σ_v f(v) Σ_i √q_i(v), ex-post monotone.
    Robust,
    /// Σ_i Σ_k f_{i,k} √q̂_i(z_k), interim monotone.
    Bayesian,
    /// Σ_v f(v) Σ_i q_i(v), ex-post monotone (classical payments).
    RobustLinear,
}

impl Objective {
    fn ex_post_monotone(self) -> bool {
        !matches!(self, Objective::Bayesian)
    }
}

fn var(instance: &AuctionInstance, i: usize, v: usize) -> usize {
    i * instance.num_profiles() + v
}

/// Coefficients of q_i at profile `v` in terms of the table variables.
fn payment_coeffs(instance: &AuctionInstance, i: usize, v: usize, scale: f64, out: &mut Sparse) {
    let types = &instance.bidder(i).types;
    let l = instance.type_index(v, i);
    out.push((var(instance, i, v), scale * types.value(l)));
    for j in 0..l {
        out.push((var(instance, i, instance.with_type(v, i, j)), -scale * types.gap(j)));
    }
}

/// The continuous program over the flattened `[bidder][profile]` table.
pub fn build_program(instance: &AuctionInstance, objective: Objective) -> ConcaveProgram {
    let n = instance.num_bidders();
    let np = instance.num_profiles();
    let mut prog = ConcaveProgram::new(n * np);
    match objective {
        Objective::Robust => {
            for i in 0..n {
                for v in 0..np {
                    let mut a = Vec::new();
                    payment_coeffs(instance, i, v, 1.0, &mut a);
                    prog.add_root(instance.prob(v), a);
                }
            }
        }
        Objective::RobustLinear => {
            for i in 0..n {
                for v in 0..np {
                    let mut a = Vec::new();
                    payment_coeffs(instance, i, v, instance.prob(v), &mut a);
                    for (j, c) in a {
                        prog.linear[j] += c;
                    }
                }
            }
        }
        Objective::Bayesian => {
            for i in 0..n {
                let bases = instance.chain_bases(i);
                for l in 0..instance.num_types(i) {
                    let mut a = Vec::new();
                    for &b in &bases {
                        let v = instance.with_type(b, i, l);
                        payment_coeffs(instance, i, v, instance.prob_others(v, i), &mut a);
                    }
                    prog.add_root(instance.bidder(i).pmf(l), merge(a));
                }
            }
        }
    }
    for v in 0..np {
        prog.add_le((0..n).map(|i| (var(instance, i, v), 1.0)).collect(), 1.0);
    }
    for j in 0..n * np {
        prog.add_le(vec![(j, -1.0)], 0.0);
    }
    for i in 0..n {
        let bases = instance.chain_bases(i);
        for l in 1..instance.num_types(i) {
            if objective.ex_post_monotone() {
                for &b in &bases {
                    let lo = var(instance, i, instance.with_type(b, i, l - 1));
                    let hi = var(instance, i, instance.with_type(b, i, l));
                    prog.add_le(vec![(lo, 1.0), (hi, -1.0)], 0.0);
                }
            } else {
                let mut a = Vec::new();
                for &b in &bases {
                    let w = instance.prob_others(b, i);
                    a.push((var(instance, i, instance.with_type(b, i, l - 1)), w));
                    a.push((var(instance, i, instance.with_type(b, i, l)), -w));
                }
                prog.add_le(a, 0.0);
            }
        }
    }
    prog
}

fn merge(mut a: Sparse) -> Sparse {
    a.sort_by_key(|e| e.0);
    let mut out: Sparse = Vec::with_capacity(a.len());
    for (j, c) in a {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += c,
            _ => out.push((j, c)),
        }
    }
    out
}

/// Strictly interior point: x_i(v) = (k_i + 1) / (2n (K_i + 1)).
fn interior_start(instance: &AuctionInstance) -> Vec<f64> {
    let n = instance.num_bidders();
    let mut x = vec![0.0; instance.num_alloc_vars()];
    for i in 0..n {
        let kk = instance.num_types(i) as f64;
        for v in 0..instance.num_profiles() {
            let k = instance.type_index(v, i) as f64;
            x[var(instance, i, v)] = (k + 1.0) / (2.0 * n as f64 * (kk + 1.0));
        }
    }
    x
}

fn to_table(instance: &AuctionInstance, x: &[f64]) -> ExPostAllocation {
    ExPostAllocation {
        table: x.chunks(instance.num_profiles()).map(|r| r.to_vec()).collect(),
    }
}

fn better(value: f64, x: &[f64], best: &Option<(f64, Vec<f64>)>) -> bool {
    match best {
        None => true,
        Some((bv, bx)) => {
            value > bv + TIE_TOL
                || ((value - bv).abs() <= TIE_TOL && x.iter().partial_cmp(bx.iter()) == Some(std::cmp::Ordering::Less))
        }
    }
}

fn pick(candidates: impl IntoIterator<Item = Option<(f64, Vec<f64>)>>) -> Option<(f64, Vec<f64>)> {
    let mut best = None;
    for (v, x) in candidates.into_iter().flatten() {
        if better(v, &x, &best) {
            best = Some((v, x));
        }
    }
    best
}

/// Tries grid tables near `x` and returns the best feasible one.
fn snap(prog: &ConcaveProgram, x: &[f64], grid: f64, instance: &AuctionInstance) -> Option<(f64, Vec<f64>)> {
    let steps = (1.0 / grid).round();
    let bounds: Vec<(f64, f64)> = x
        .iter()
        .map(|&xi| {
            let k = (xi / grid).clamp(0.0, steps);
            if (k - k.round()).abs() < 1e-7 {
                (k.round() / steps, k.round() / steps)
            } else {
                (k.floor() / steps, k.ceil() / steps)
            }
        })
        .collect();
    let feasible = |cand: &[f64]| prog.max_violation(cand) <= GRID_TOL;
    let score = |cand: Vec<f64>| {
        if feasible(&cand) {
            Some((prog.objective(&cand), cand))
        } else {
            None
        }
    };
    if x.len() <= SNAP_EXHAUSTIVE_VARS {
        let found = par::map_range(1usize << x.len(), |mask| {
            let cand: Vec<f64> = bounds
                .iter()
                .enumerate()
                .map(|(j, &(lo, hi))| if mask >> j & 1 == 1 { hi } else { lo })
                .collect();
            score(cand)
        });
        pick(found)
    } else {
        let nearest = match round_allocation(instance, &to_table(instance, x), grid) {
            Ok((rounded, _)) => rounded.table.into_iter().flatten().collect(),
            Err(_) => return None,
        };
        let floors = bounds.iter().map(|b| b.0).collect();
        pick([score(nearest), score(floors)])
    }
}

/// Exhaustive search over every grid table. Returns the table and its value.
pub fn enumerate(instance: &AuctionInstance, objective: Objective, grid: f64) -> Result<(Vec<f64>, f64)> {
    let steps = unit_steps(grid, "grid")?;
    let prog = build_program(instance, objective);
    let n = instance.num_bidders();
    let np = instance.num_profiles();
    let total = n * np;
    // Table position of the pos-th search variable (profile-major order).
    let slot = |pos: usize| var(instance, pos % n, pos / n);

    struct Search<'a> {
        instance: &'a AuctionInstance,
        prog: &'a ConcaveProgram,
        objective: Objective,
        steps: usize,
        counts: Vec<usize>,
        best: Option<(f64, Vec<f64>)>,
    }

    impl Search<'_> {
        fn leaf(&mut self) {
            let x: Vec<f64> = self.counts.iter().map(|&k| k as f64 / self.steps as f64).collect();
            if self.objective == Objective::Bayesian && self.prog.max_violation(&x) > GRID_TOL {
                return;
            }
            let value = self.prog.objective(&x);
            if better(value, &x, &self.best) {
                self.best = Some((value, x));
            }
        }

        fn descend(&mut self, pos: usize) {
            let inst = self.instance;
            let n = inst.num_bidders();
            if pos == n * inst.num_profiles() {
                self.leaf();
                return;
            }
            let (v, i) = (pos / n, pos % n);
            let np = inst.num_profiles();
            let used: usize = (0..i).map(|j| self.counts[j * np + v]).sum();
            let l = inst.type_index(v, i);
            let lo = if self.objective.ex_post_monotone() && l > 0 {
                self.counts[i * np + inst.with_type(v, i, l - 1)]
            } else {
                0
            };
            let hi = self.steps - used;
            for k in lo..=hi {
                self.counts[i * np + v] = k;
                self.descend(pos + 1);
            }
            self.counts[i * np + v] = 0;
        }
    }

    let first = slot(0);
    let found = par::map_range(steps + 1, |k0| {
        let mut s = Search {
            instance,
            prog: &prog,
            objective,
            steps,
            counts: vec![0; total],
            best: None,
        };
        s.counts[first] = k0;
        s.descend(1);
        s.best
    });
    let (value, x) = pick(found).ok_or_else(|| AuctionError::Solver("no feasible grid table".into()))?;
    Ok((x, value))
}

struct Found {
    x: Vec<f64>,
    continuous: Option<f64>,
    on_grid: bool,
}

fn search(instance: &AuctionInstance, config: &OracleConfig, objective: Objective) -> Result<Found> {
    config.validate()?;
    config.admits(instance)?;
    match config.strategy {
        OracleStrategy::Enumerate => {
            let (x, _) = enumerate(instance, objective, config.grid)?;
            Ok(Found {
                x,
                continuous: None,
                on_grid: true,
            })
        }
        OracleStrategy::Concave => {
            let prog = build_program(instance, objective);
            let sol = prog.solve(&interior_start(instance), &BarrierOptions::default())?;
            match snap(&prog, &sol.x, config.grid, instance) {
                Some((_, x)) => Ok(Found {
                    x,
                    continuous: Some(sol.value),
                    on_grid: true,
                }),
                None => Ok(Found {
                    x: sol.x,
                    continuous: Some(sol.value),
                    on_grid: false,
                }),
            }
        }
    }
}

fn details(instance: &AuctionInstance, config: &OracleConfig, found: &Found) -> OracleDetails {
    OracleDetails {
        grid: config.grid,
        slack: instance.num_bidders() as f64 * instance.max_value() * config.grid,
        continuous_optimum: found.continuous,
        on_grid: found.on_grid,
        strategy: config.strategy,
    }
}

fn robust_oracle(
    instance: &AuctionInstance,
    config: &OracleConfig,
    objective: Objective,
) -> Result<(Mechanism, MechanismReport)> {
    let start = Instant::now();
    let found = search(instance, config, objective)?;
    let (model, provenance) = match objective {
        Objective::RobustLinear => (PerceivedPayment::Linear, Provenance::ExactLinearRrm),
        _ => (PerceivedPayment::Quadratic, Provenance::ExactRrm),
    };
    let alloc = to_table(instance, &found.x);
    let (payments, _) = payment_rule_clamped(&alloc, instance, model)?;
    let revenue = payments.expected_revenue(instance);
    let mech = Mechanism::robust(alloc, payments, provenance);
    let runtime = start.elapsed();
    let verification = verify(instance, &mech, &ConstraintKind::ROBUST)?;
    let report = MechanismReport {
        kind: ObjectiveKind::ExactOracle,
        objective_value: revenue,
        revenue,
        verification,
        warnings: vec![],
        runtime,
        oracle: Some(details(instance, config, &found)),
    };
    Ok((mech, report))
}

/// Best robust (ex-post IC/IR/feasible) mechanism on the grid.
pub fn exact_rrm(instance: &AuctionInstance, config: &OracleConfig) -> Result<(Mechanism, MechanismReport)> {
    robust_oracle(instance, config, Objective::Robust)
}

/// Same search with classical payments q = p, the linear benchmark.
pub fn exact_linear_rrm(instance: &AuctionInstance, config: &OracleConfig) -> Result<(Mechanism, MechanismReport)> {
    robust_oracle(instance, config, Objective::RobustLinear)
}

/// Best Bayesian (interim IC/IR, ex-post feasible) mechanism on the grid,
/// charged h-payments.
pub fn exact_brm(instance: &AuctionInstance, config: &OracleConfig) -> Result<(Mechanism, MechanismReport)> {
    let start = Instant::now();
    let found = search(instance, config, Objective::Bayesian)?;
    let alloc = to_table(instance, &found.x);
    let interim = interim_collapse(&alloc, instance)?;
    let (h, _) = bayesian_payment_clamped(&interim, instance)?;
    let revenue = h.expected_revenue(instance);
    let mech = Mechanism::bayesian(alloc, interim, h, Provenance::ExactBrm);
    let runtime = start.elapsed();
    let verification = verify(instance, &mech, &ConstraintKind::BAYESIAN)?;
    let report = MechanismReport {
        kind: ObjectiveKind::ExactOracle,
        objective_value: revenue,
        revenue,
        verification,
        warnings: vec![],
        runtime,
        oracle: Some(details(instance, config, &found)),
    };
    Ok((mech, report))
}
