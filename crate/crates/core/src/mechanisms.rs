//! End-to-end pipelines: allocate per profile, attach payments, evaluate
//! the objective and verify. Also the revenue bound evaluators.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::alloc::{closed_form_alloc, eqp_solver, ex_ante_closed_form, pointwise_max, ExAnteSolution, GreedyConfig, ScoreVector};
use crate::error::{AuctionError, Result};
use crate::model::{
    AuctionInstance, ExPostAllocation, InterimAllocation, InterimPaymentRule, PerceivedPayment,
    RobustPaymentRule,
};
use crate::oracle::OracleDetails;
use crate::oracle::verify::{verify, verify_interim, ConstraintKind, VerificationReport};
use crate::par;
use crate::payments::{bayesian_payment_clamped, expect_over_others, interim_collapse, payment_rule_clamped, ExpectedRevenue};
use crate::virtual_value::{is_regular, virtual_values, VirtualValueTable};

/// Slack on every ordering check in [`bound_report`].
pub const BOUND_TOL: f64 = 1e-9;

/// How each profile's scores become an allocation vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AllocMethod {
    Greedy { epsilon: f64 },
    ClosedForm,
}

impl AllocMethod {
    pub fn greedy_default() -> Self {
        Self::Greedy {
            epsilon: GreedyConfig::default().epsilon,
        }
    }
}

/// Which pipeline built a mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pipeline", rename_all = "snake_case")]
pub enum Provenance {
    SurplusMaximizer,
    PseudoSurplusMaximizer { alloc: AllocMethod },
    VirtualSurplusMaximizer,
    HeuristicLbRrm { alloc: AllocMethod },
    HeuristicBrm { alloc: AllocMethod },
    ExactRrm,
    ExactBrm,
    ExactLinearRrm,
    Manual,
}

/// An allocation rule with whichever payment rules were derived for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub allocation: ExPostAllocation,
    #[serde(default)]
    pub robust_payments: Option<RobustPaymentRule>,
    #[serde(default)]
    pub interim_allocation: Option<InterimAllocation>,
    #[serde(default)]
    pub interim_payments: Option<InterimPaymentRule>,
    pub provenance: Provenance,
}

impl Mechanism {
    pub fn allocation_only(allocation: ExPostAllocation, provenance: Provenance) -> Self {
        Self {
            allocation,
            robust_payments: None,
            interim_allocation: None,
            interim_payments: None,
            provenance,
        }
    }

    pub fn robust(allocation: ExPostAllocation, payments: RobustPaymentRule, provenance: Provenance) -> Self {
        Self {
            robust_payments: Some(payments),
            ..Self::allocation_only(allocation, provenance)
        }
    }

    pub fn bayesian(
        allocation: ExPostAllocation,
        interim: InterimAllocation,
        payments: InterimPaymentRule,
        provenance: Provenance,
    ) -> Self {
        Self {
            interim_allocation: Some(interim),
            interim_payments: Some(payments),
            ..Self::allocation_only(allocation, provenance)
        }
    }

    /// Expected revenue from the robust rule if present, else from h.
    pub fn revenue(&self, instance: &AuctionInstance) -> Option<f64> {
        match (&self.robust_payments, &self.interim_payments) {
            (Some(p), _) => Some(p.expected_revenue(instance)),
            (None, Some(h)) => Some(h.expected_revenue(instance)),
            _ => None,
        }
    }

    /// The constraint set this mechanism is meant to satisfy.
    pub fn standard_constraints(&self) -> &'static [ConstraintKind] {
        if self.robust_payments.is_some() {
            &ConstraintKind::ROBUST
        } else {
            &ConstraintKind::BAYESIAN
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    RevenueRobust,
    RevenueBayesian,
    PseudoSurplus,
    HeuristicLowerBound,
    ExAnteBound,
    ExactOracle,
    Surplus,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::RevenueRobust => "revenue_robust",
            Self::RevenueBayesian => "revenue_bayesian",
            Self::PseudoSurplus => "pseudo_surplus",
            Self::HeuristicLowerBound => "heuristic_lower_bound",
            Self::ExAnteBound => "ex_ante_bound",
            Self::ExactOracle => "exact_oracle",
            Self::Surplus => "surplus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    /// Virtual values of these bidders are not non-decreasing.
    Irregular { bidders: Vec<usize> },
    /// Some allocation decreases in the bidder's own type.
    NonMonotone,
    /// Negative perceived payments were clamped to zero.
    PaymentsClamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismReport {
    pub kind: ObjectiveKind,
    /// The quantity the pipeline optimizes.
    pub objective_value: f64,
    /// Realized expected revenue of the emitted payment rule.
    pub revenue: f64,
    pub verification: VerificationReport,
    pub warnings: Vec<Warning>,
    pub runtime: Duration,
    /// Grid and bound details, set by the exact oracles only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleDetails>,
}

/// Allocation per profile from a score function and an engine.
fn allocate(
    instance: &AuctionInstance,
    scores: impl Fn(usize, usize) -> f64 + Sync + Send,
    engine: Engine,
) -> Result<ExPostAllocation> {
    if let Engine::Greedy(cfg) = engine {
        cfg.steps()?;
    }
    let n = instance.num_bidders();
    let rows = par::map_range(instance.num_profiles(), |v| {
        let c = ScoreVector::new((0..n).map(|i| scores(i, instance.type_index(v, i))).collect());
        match engine {
            Engine::Pointwise => pointwise_max(&c),
            Engine::Greedy(cfg) => eqp_solver(&c, &cfg).expect("config checked above"),
            Engine::ClosedForm => closed_form_alloc(&c, 0.5),
        }
    });
    Ok(ExPostAllocation::from_profiles(instance, rows))
}

#[derive(Debug, Clone, Copy)]
enum Engine {
    Pointwise,
    Greedy(GreedyConfig),
    ClosedForm,
}

impl From<AllocMethod> for Engine {
    fn from(m: AllocMethod) -> Self {
        match m {
            AllocMethod::Greedy { epsilon } => Engine::Greedy(GreedyConfig { epsilon, alpha: 0.5 }),
            AllocMethod::ClosedForm => Engine::ClosedForm,
        }
    }
}

fn value_scores(instance: &AuctionInstance) -> impl Fn(usize, usize) -> f64 + Sync + Send + '_ {
    move |i, k| instance.bidder(i).value(k)
}

fn irregularity(table: &VirtualValueTable) -> Vec<Warning> {
    let bad: Vec<usize> = is_regular(table)
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        vec![]
    } else {
        vec![Warning::Irregular { bidders: bad }]
    }
}

/// E_v[Σ_i g(i, k_i) · x_i(v)] style sums with a per-entry transform.
pub(crate) fn expect_entries(
    instance: &AuctionInstance,
    alloc: &ExPostAllocation,
    term: impl Fn(usize, usize, f64) -> f64 + Sync + Send,
) -> f64 {
    par::sum_range(instance.num_profiles(), |v| {
        instance.prob(v)
            * (0..instance.num_bidders())
                .map(|i| term(i, instance.type_index(v, i), alloc.table[i][v]))
                .sum::<f64>()
    })
}

/// Robust payments under `model`, with warnings and verification.
fn finish_robust(
    instance: &AuctionInstance,
    alloc: ExPostAllocation,
    model: PerceivedPayment,
    provenance: Provenance,
    mut warnings: Vec<Warning>,
) -> Result<(Mechanism, Vec<Warning>, VerificationReport)> {
    let (payments, clamped) = payment_rule_clamped(&alloc, instance, model)?;
    let mech = Mechanism::robust(alloc, payments, provenance);
    let verification = verify(instance, &mech, &ConstraintKind::ROBUST)?;
    let mono = verify(instance, &mech, &[ConstraintKind::Monotone])?;
    if !mono.all_passed() {
        warnings.push(Warning::NonMonotone);
    }
    if clamped {
        warnings.push(Warning::PaymentsClamped);
    }
    Ok((mech, warnings, verification))
}

/// Pointwise max on values with classical (q = p) payments. The objective
/// is the expected surplus E[Σ v x].
pub fn surplus_maximizer(instance: &AuctionInstance) -> Result<(Mechanism, MechanismReport)> {
    let start = Instant::now();
    let alloc = allocate(instance, value_scores(instance), Engine::Pointwise)?;
    let surplus = expect_entries(instance, &alloc, |i, k, x| instance.bidder(i).value(k) * x);
    let (mech, warnings, verification) =
        finish_robust(instance, alloc, PerceivedPayment::Linear, Provenance::SurplusMaximizer, vec![])?;
    let revenue = mech.revenue(instance).unwrap_or(0.0);
    Ok((
        mech,
        MechanismReport {
            kind: ObjectiveKind::Surplus,
            objective_value: surplus,
            revenue,
            verification,
            warnings,
            runtime: start.elapsed(),
            oracle: None,
        },
    ))
}

/// Maximizes Σ √(v_i x_i) per profile; the objective E[Σ √(v x)] bounds revenue.
pub fn pseudo_surplus_maximizer(
    instance: &AuctionInstance,
    method: AllocMethod,
) -> Result<(Mechanism, MechanismReport)> {
    let start = Instant::now();
    let alloc = allocate(instance, value_scores(instance), method.into())?;
    let objective = robust_pseudo_surplus(instance, &alloc);
    let (mech, warnings, verification) = finish_robust(
        instance,
        alloc,
        PerceivedPayment::Quadratic,
        Provenance::PseudoSurplusMaximizer { alloc: method },
        vec![],
    )?;
    let revenue = mech.revenue(instance).unwrap_or(0.0);
    Ok((
        mech,
        MechanismReport {
            kind: ObjectiveKind::PseudoSurplus,
            objective_value: objective,
            revenue,
            verification,
            warnings,
            runtime: start.elapsed(),
            oracle: None,
        },
    ))
}

/// Pointwise max on virtual values with classical payments. Revenue equals
/// the expected virtual surplus, which is the reported objective.
pub fn virtual_surplus_maximizer(instance: &AuctionInstance) -> Result<(Mechanism, MechanismReport)> {
    let start = Instant::now();
    let table = virtual_values(instance);
    let alloc = allocate(instance, |i, k| table.phi(i, k), Engine::Pointwise)?;
    let objective = expect_entries(instance, &alloc, |i, k, x| table.phi(i, k) * x);
    let (mech, warnings, verification) = finish_robust(
        instance,
        alloc,
        PerceivedPayment::Linear,
        Provenance::VirtualSurplusMaximizer,
        irregularity(&table),
    )?;
    let revenue = mech.revenue(instance).unwrap_or(0.0);
    Ok((
        mech,
        MechanismReport {
            kind: ObjectiveKind::RevenueRobust,
            objective_value: objective,
            revenue,
            verification,
            warnings,
            runtime: start.elapsed(),
            oracle: None,
        },
    ))
}

fn lb_allocation(
    instance: &AuctionInstance,
    table: &VirtualValueTable,
    method: AllocMethod,
) -> Result<ExPostAllocation> {
    allocate(instance, |i, k| table.phi_plus(i, k), method.into())
}

/// Maximizes the heuristic objective E[Σ √(φ⁺ x)] per profile, then charges
/// robust payments.
pub fn heuristic_lb_rrm(instance: &AuctionInstance, method: AllocMethod) -> Result<(Mechanism, MechanismReport)> {
    let start = Instant::now();
    let table = virtual_values(instance);
    let alloc = lb_allocation(instance, &table, method)?;
    let objective = heuristic_lb_value(instance, &table, &alloc);
    let (mech, warnings, verification) = finish_robust(
        instance,
        alloc,
        PerceivedPayment::Quadratic,
        Provenance::HeuristicLbRrm { alloc: method },
        irregularity(&table),
    )?;
    let revenue = mech.revenue(instance).unwrap_or(0.0);
    Ok((
        mech,
        MechanismReport {
            kind: ObjectiveKind::HeuristicLowerBound,
            objective_value: objective,
            revenue,
            verification,
            warnings,
            runtime: start.elapsed(),
            oracle: None,
        },
    ))
}

/// Same allocation as [`heuristic_lb_rrm`], charged interim h-payments.
pub fn heuristic_brm(instance: &AuctionInstance, method: AllocMethod) -> Result<(Mechanism, MechanismReport)> {
    let start = Instant::now();
    let table = virtual_values(instance);
    let alloc = lb_allocation(instance, &table, method)?;
    let interim = interim_collapse(&alloc, instance)?;
    let (h, clamped) = bayesian_payment_clamped(&interim, instance)?;
    let revenue = h.expected_revenue(instance);
    let mut warnings = irregularity(&table);
    let mech = Mechanism::bayesian(alloc, interim, h, Provenance::HeuristicBrm { alloc: method });
    let verification = verify(instance, &mech, &ConstraintKind::BAYESIAN)?;
    if !verify(instance, &mech, &[ConstraintKind::InterimMonotone])?.all_passed() {
        warnings.push(Warning::NonMonotone);
    }
    if clamped {
        warnings.push(Warning::PaymentsClamped);
    }
    Ok((
        mech,
        MechanismReport {
            kind: ObjectiveKind::RevenueBayesian,
            objective_value: revenue,
            revenue,
            verification,
            warnings,
            runtime: start.elapsed(),
            oracle: None,
        },
    ))
}

/// Ex-ante relaxation solved in closed form, charged h-payments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExAnteOutcome {
    pub solution: ExAnteSolution,
    pub payments: InterimPaymentRule,
}

/// Revenue of the ex-ante relaxation's interim rule (optionally truncated
/// at 1) under h-payments. Verification covers BIC, BIR and XA.
pub fn ex_ante_bound(instance: &AuctionInstance, truncate: bool) -> Result<(ExAnteOutcome, MechanismReport)> {
    let start = Instant::now();
    let table = virtual_values(instance);
    let solution = ex_ante_closed_form(instance, &table, truncate);
    let (payments, clamped) = bayesian_payment_clamped(&solution.interim, instance)?;
    let revenue = payments.expected_revenue(instance);
    let verification = verify_interim(
        instance,
        &solution.interim,
        &payments,
        &[ConstraintKind::Bic, ConstraintKind::Bir, ConstraintKind::Xa],
    )?;
    let mut warnings = irregularity(&table);
    if clamped {
        warnings.push(Warning::PaymentsClamped);
    }
    Ok((
        ExAnteOutcome { solution, payments },
        MechanismReport {
            kind: ObjectiveKind::ExAnteBound,
            objective_value: revenue,
            revenue,
            verification,
            warnings,
            runtime: start.elapsed(),
            oracle: None,
        },
    ))
}

/// E[Σ_i √(v_i x_i(v))].
pub fn robust_pseudo_surplus(instance: &AuctionInstance, alloc: &ExPostAllocation) -> f64 {
    expect_entries(instance, alloc, |i, k, x| (instance.bidder(i).value(k) * x).sqrt())
}

/// Σ_i E[√(v_i x̂_i(v_i))].
pub fn bayesian_pseudo_surplus(instance: &AuctionInstance, interim: &InterimAllocation) -> f64 {
    interim
        .table
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let b = instance.bidder(i);
            row.iter()
                .enumerate()
                .map(|(k, x)| b.pmf(k) * (b.value(k) * x).sqrt())
                .sum::<f64>()
        })
        .sum()
}

/// E[Σ_i √(φ⁺_i x_i(v))].
pub fn heuristic_lb_value(instance: &AuctionInstance, table: &VirtualValueTable, alloc: &ExPostAllocation) -> f64 {
    expect_entries(instance, alloc, |i, k, x| (table.phi_plus(i, k) * x).sqrt())
}

/// Per bidder, E_v[φ_i x_i(v)].
pub fn virtual_surplus_per_bidder(
    instance: &AuctionInstance,
    table: &VirtualValueTable,
    alloc: &ExPostAllocation,
) -> Vec<f64> {
    expect_over_others(&alloc.table, instance)
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(k, xh)| instance.bidder(i).pmf(k) * table.phi(i, k) * xh)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub robust_pseudo_surplus: f64,
    pub bayesian_pseudo_surplus: f64,
    /// Σ_i √(E[φ_i x_i]).
    pub virtual_sqrt_upper: f64,
    pub per_bidder_virtual_upper: Vec<f64>,
    pub heuristic_lb_value: f64,
    pub revenue: f64,
    pub per_bidder_revenue: Vec<f64>,
    /// Descriptions of every ordering that failed; empty for a sound mechanism.
    pub violations: Vec<String>,
}

impl BoundReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates the revenue bounds on `mech` and checks their ordering.
///
/// For robust quadratic payments: revenue ≤ robust pseudo-surplus ≤ Bayesian
/// pseudo-surplus. For h-payments: revenue ≤ Bayesian pseudo-surplus. For
/// both, each bidder's expected payment stays below √(E[φ_i x_i]). Classical
/// payments only get the pseudo-surplus ordering.
pub fn bound_report(instance: &AuctionInstance, mech: &Mechanism) -> Result<BoundReport> {
    instance.check_profile_table(&mech.allocation.table, "allocation")?;
    let table = virtual_values(instance);
    let alloc = &mech.allocation;
    let interim = interim_collapse(alloc, instance)?;
    let rps = robust_pseudo_surplus(instance, alloc);
    let bps = bayesian_pseudo_surplus(instance, &interim);
    let per_bidder_virtual_upper: Vec<f64> = virtual_surplus_per_bidder(instance, &table, alloc)
        .into_iter()
        .map(|s| s.max(0.0).sqrt())
        .collect();
    let (per_bidder_revenue, quadratic, robust): (Vec<f64>, bool, bool) =
        match (&mech.robust_payments, &mech.interim_payments) {
            (Some(p), _) => (
                crate::payments::expected_payment_per_bidder(p, instance),
                p.perceived == PerceivedPayment::Quadratic,
                true,
            ),
            (None, Some(h)) => (
                h.table
                    .iter()
                    .enumerate()
                    .map(|(i, row)| row.iter().enumerate().map(|(k, x)| instance.bidder(i).pmf(k) * x).sum())
                    .collect(),
                true,
                false,
            ),
            (None, None) => {
                return Err(AuctionError::InvalidConfig("mechanism has no payment rule".into()))
            }
        };
    let revenue: f64 = per_bidder_revenue.iter().sum();

    let mut violations = Vec::new();
    let mut expect_le = |a: f64, b: f64, what: String| {
        if a > b + BOUND_TOL {
            violations.push(format!("{what}: {a} > {b}"));
        }
    };
    expect_le(rps, bps, "robust pseudo-surplus exceeds Bayesian pseudo-surplus".into());
    if quadratic {
        if robust {
            expect_le(revenue, rps, "revenue exceeds robust pseudo-surplus".into());
        } else {
            expect_le(revenue, bps, "revenue exceeds Bayesian pseudo-surplus".into());
        }
        for (i, (p, ub)) in per_bidder_revenue.iter().zip(&per_bidder_virtual_upper).enumerate() {
            expect_le(*p, *ub, format!("bidder {i} pays more than the virtual-surplus root"));
        }
    }
    Ok(BoundReport {
        robust_pseudo_surplus: rps,
        bayesian_pseudo_surplus: bps,
        virtual_sqrt_upper: per_bidder_virtual_upper.iter().sum(),
        per_bidder_virtual_upper,
        heuristic_lb_value: heuristic_lb_value(instance, &table, alloc),
        revenue,
        per_bidder_revenue,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn single_type(n: usize) -> AuctionInstance {
        AuctionInstance::symmetric(
            n,
            TypeSpace::new(vec![1.0]).unwrap(),
            DiscreteDistribution::new(vec![1.0]).unwrap(),
        )
        .unwrap()
    }

    fn golden() -> AuctionInstance {
        let (t, d) = make_categorical(0.0, 100.0, 0.5).unwrap();
        AuctionInstance::symmetric(2, t, d).unwrap()
    }

    fn categorical(n: usize) -> AuctionInstance {
        let (t, d) = make_categorical(3.0, 10.0, 0.8).unwrap();
        AuctionInstance::symmetric(n, t, d).unwrap()
    }

    #[test]
    fn surplus_two_bidders_one_two() {
        let inst = AuctionInstance::symmetric(
            2,
            TypeSpace::new(vec![1.0, 2.0]).unwrap(),
            DiscreteDistribution::new(vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let (mech, rep) = surplus_maximizer(&inst).unwrap();
        // profile (2, 1) has flat index 2; bidder 0 wins outright
        assert_eq!(mech.allocation.table[0][2], 1.0);
        assert_eq!(mech.allocation.table[1][2], 0.0);
        // classical payment 2*1 - (2-1)*x(1,1) with the tie at (1,1) split in half
        let p = &mech.robust_payments.as_ref().unwrap().table;
        assert!((p[0][2] - 1.5).abs() < 1e-12);
        assert!(rep.verification.all_passed());
        assert!((rep.objective_value - (0.25 * 1.0 + 0.75 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn surplus_single_and_zero() {
        let (mech, rep) = surplus_maximizer(&single_type(1)).unwrap();
        assert_eq!(mech.allocation.table, vec![vec![1.0]]);
        assert_eq!(rep.revenue, 1.0);
        assert_eq!(rep.objective_value, 1.0);

        let zero = AuctionInstance::symmetric(
            2,
            TypeSpace::new(vec![0.0]).unwrap(),
            DiscreteDistribution::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        let (_, rep) = surplus_maximizer(&zero).unwrap();
        assert_eq!(rep.objective_value, 0.0);
        let (_, rep) = pseudo_surplus_maximizer(&zero, AllocMethod::ClosedForm).unwrap();
        assert_eq!(rep.objective_value, 0.0);
        assert_eq!(rep.revenue, 0.0);
    }

    #[test]
    fn pseudo_surplus_tight_family() {
        for n in 1..=8 {
            let inst = single_type(n);
            let root = (n as f64).sqrt();
            let (mech, rep) = pseudo_surplus_maximizer(&inst, AllocMethod::ClosedForm).unwrap();
            assert!((rep.objective_value - root).abs() < 1e-9);
            assert!((rep.revenue - root).abs() < 1e-9);
            for i in 0..n {
                assert!((mech.allocation.table[i][0] - 1.0 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_surplus_golden() {
        let inst = golden();
        let (_, rep) = pseudo_surplus_maximizer(&inst, AllocMethod::ClosedForm).unwrap();
        assert!((rep.objective_value - 2.5 * (2.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!(rep.verification.all_passed());
    }

    #[test]
    fn virtual_surplus_reserve_behaviour() {
        let inst = AuctionInstance::symmetric(
            1,
            TypeSpace::new((1..=5).map(|j| j as f64 / 5.0).collect()).unwrap(),
            DiscreteDistribution::new(vec![0.2; 5]).unwrap(),
        )
        .unwrap();
        let (mech, rep) = virtual_surplus_maximizer(&inst).unwrap();
        assert_eq!(mech.allocation.table[0], vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!((rep.objective_value - rep.revenue).abs() < 1e-9);
        // posted price 0.6 sold with probability 0.6
        assert!((rep.revenue - 0.36).abs() < 1e-12);

        let (_, rep) = virtual_surplus_maximizer(&single_type(1)).unwrap();
        assert_eq!(rep.revenue, 1.0);
    }

    #[test]
    fn irregular_instance_is_flagged_not_fatal() {
        let inst = AuctionInstance::symmetric(
            2,
            TypeSpace::new(vec![1.0, 2.0, 3.0]).unwrap(),
            DiscreteDistribution::new(vec![0.45, 0.1, 0.45]).unwrap(),
        )
        .unwrap();
        let (_, rep) = virtual_surplus_maximizer(&inst).unwrap();
        assert!(rep
            .warnings
            .iter()
            .any(|w| matches!(w, Warning::Irregular { bidders } if bidders == &vec![0, 1])));
        assert!(heuristic_lb_rrm(&inst, AllocMethod::ClosedForm).is_ok());
        assert!(heuristic_brm(&inst, AllocMethod::ClosedForm).is_ok());
    }

    #[test]
    fn heuristic_single_type_is_tight() {
        for n in 1..=6 {
            let inst = single_type(n);
            let (mech, rep) = heuristic_lb_rrm(&inst, AllocMethod::ClosedForm).unwrap();
            let root = (n as f64).sqrt();
            assert!((rep.objective_value - root).abs() < 1e-9);
            assert!((rep.revenue - root).abs() < 1e-9);
            let p = &mech.robust_payments.as_ref().unwrap().table;
            assert!((p[0][0] - (1.0 / n as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn heuristic_golden_matches_bayesian_optimum() {
        let inst = golden();
        let (mech, rep) = heuristic_brm(&inst, AllocMethod::ClosedForm).unwrap();
        assert!((rep.revenue - 5.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(mech.allocation.table[0], vec![0.0, 0.0, 1.0, 0.5]);
        assert!(rep.verification.all_passed());
    }

    #[test]
    fn categorical_orderings() {
        let inst = categorical(2);
        for method in [AllocMethod::ClosedForm, AllocMethod::greedy_default()] {
            let (rm, rr) = heuristic_lb_rrm(&inst, method).unwrap();
            let (_, br) = heuristic_brm(&inst, method).unwrap();
            assert!(rr.objective_value <= rr.revenue + 1e-9);
            assert!(rr.revenue <= br.revenue + 1e-9);
            let bounds = bound_report(&inst, &rm).unwrap();
            assert!(bounds.is_consistent(), "{:?}", bounds.violations);
        }
    }

    #[test]
    fn zero_virtual_values_give_nothing() {
        let inst = AuctionInstance::symmetric(
            2,
            TypeSpace::new(vec![0.0]).unwrap(),
            DiscreteDistribution::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        let (_, r) = heuristic_lb_rrm(&inst, AllocMethod::greedy_default()).unwrap();
        assert_eq!((r.objective_value, r.revenue), (0.0, 0.0));
        let (_, r) = heuristic_brm(&inst, AllocMethod::ClosedForm).unwrap();
        assert_eq!(r.revenue, 0.0);
    }

    #[test]
    fn bound_report_examples() {
        let inst = golden();
        let (mech, _) = pseudo_surplus_maximizer(&inst, AllocMethod::ClosedForm).unwrap();
        let b = bound_report(&inst, &mech).unwrap();
        assert!((b.robust_pseudo_surplus - 2.5 * (2.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((b.bayesian_pseudo_surplus - 5.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!(b.is_consistent());

        for n in 1..=5 {
            let inst = single_type(n);
            let (mech, _) = pseudo_surplus_maximizer(&inst, AllocMethod::ClosedForm).unwrap();
            let b = bound_report(&inst, &mech).unwrap();
            let root = (n as f64).sqrt();
            for v in [b.revenue, b.robust_pseudo_surplus, b.virtual_sqrt_upper, b.heuristic_lb_value] {
                assert!((v - root).abs() < 1e-9);
            }
            for u in &b.per_bidder_virtual_upper {
                assert!((u - (1.0 / n as f64).sqrt()).abs() < 1e-12);
            }
        }

        let zero = Mechanism::robust(
            ExPostAllocation::zeros(&inst),
            RobustPaymentRule {
                table: vec![vec![0.0; 4]; 2],
                perceived: PerceivedPayment::Quadratic,
            },
            Provenance::Manual,
        );
        let b = bound_report(&golden(), &zero).unwrap();
        assert_eq!(
            (b.revenue, b.robust_pseudo_surplus, b.bayesian_pseudo_surplus, b.virtual_sqrt_upper),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn overcharging_is_flagged() {
        let inst = golden();
        let (mut mech, _) = pseudo_surplus_maximizer(&inst, AllocMethod::ClosedForm).unwrap();
        mech.robust_payments.as_mut().unwrap().table[0][2] = 100.0;
        assert!(!bound_report(&inst, &mech).unwrap().is_consistent());
        let bare = Mechanism::allocation_only(mech.allocation.clone(), Provenance::Manual);
        assert!(bound_report(&inst, &bare).is_err());
    }

    #[test]
    fn ex_ante_truncated_categorical() {
        let inst = categorical(2);
        let (out, rep) = ex_ante_bound(&inst, true).unwrap();
        let expect = (10.0 - 7.0 * 1.25 / 6.0f64).sqrt();
        assert!((out.payments.table[0][1] - expect).abs() < 1e-12);
        assert!(rep.verification.all_passed(), "{:?}", rep.verification);
        let (_, full) = ex_ante_bound(&inst, false).unwrap();
        assert!(full.revenue >= rep.revenue);
    }

    #[test]
    fn bad_epsilon_is_rejected() {
        let inst = categorical(2);
        assert!(heuristic_lb_rrm(&inst, AllocMethod::Greedy { epsilon: 0.3 }).is_err());
    }
}
