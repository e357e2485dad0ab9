//! Payment rules implied by a monotone allocation.
//!
//! The perceived payment of type z_ℓ is the area-style sum
//! q(z_ℓ) = z_ℓ x(z_ℓ) − Σ_{j<ℓ} (z_{j+1} − z_j) x(z_j). With q = p² the
//! actual payment is its square root; the interim version applies the same
//! sum to x̂. Only q(p) = p² and the linear baseline are modelled; any other
//! invertible convex q would swap the final inversion step.

use crate::error::{AuctionError, Result};
use crate::model::{
    AuctionInstance, ExPostAllocation, InterimAllocation, InterimPaymentRule, PerceivedPayment,
    RobustPaymentRule, TypeSpace,
};
use crate::par;

/// Radicands in `[-CLAMP_TOL, 0)` are rounding noise and become 0.
pub const CLAMP_TOL: f64 = 1e-9;
/// Slack allowed when checking monotonicity.
pub const MONO_TOL: f64 = 1e-9;

/// q_i(v) for every bidder and profile, plus a monotonicity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceivedPayments {
    pub table: Vec<Vec<f64>>,
    /// False when some x_i drops as bidder i's own type rises.
    pub monotone: bool,
}

/// The perceived payment of type index `l` along one chain `x(0..K)`.
pub(crate) fn chain_payment(types: &TypeSpace, l: usize, x: impl Fn(usize) -> f64) -> f64 {
    let mut q = types.value(l) * x(l);
    for j in 0..l {
        q -= types.gap(j) * x(j);
    }
    q
}

pub fn perceived_payment(alloc: &ExPostAllocation, instance: &AuctionInstance) -> Result<PerceivedPayments> {
    instance.check_profile_table(&alloc.table, "allocation")?;
    let mut monotone = true;
    let mut table = Vec::with_capacity(instance.num_bidders());
    for i in 0..instance.num_bidders() {
        let types = &instance.bidder(i).types;
        let row = &alloc.table[i];
        let entries = par::map_range(instance.num_profiles(), |v| {
            let l = instance.type_index(v, i);
            let q = chain_payment(types, l, |j| row[instance.with_type(v, i, j)]);
            let mono = l == 0 || row[v] >= row[instance.with_type(v, i, l - 1)] - MONO_TOL;
            (q, mono)
        });
        monotone &= entries.iter().all(|e| e.1);
        table.push(entries.into_iter().map(|e| e.0).collect());
    }
    Ok(PerceivedPayments { table, monotone })
}

fn invert_checked(q: f64, model: PerceivedPayment, bidder: usize, index: usize) -> Result<f64> {
    if q >= 0.0 {
        Ok(model.invert(q))
    } else if q >= -CLAMP_TOL {
        Ok(0.0)
    } else {
        Err(AuctionError::NegativeRadicand {
            bidder,
            index,
            value: q,
        })
    }
}

fn payments_from(perceived: &[Vec<f64>], model: PerceivedPayment) -> Result<Vec<Vec<f64>>> {
    perceived
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(v, &q)| invert_checked(q, model, i, v))
                .collect()
        })
        .collect()
}

/// p_i(v) = √q_i(v). Fails on a clearly negative q.
pub fn robust_payment(alloc: &ExPostAllocation, instance: &AuctionInstance) -> Result<RobustPaymentRule> {
    payment_rule(alloc, instance, PerceivedPayment::Quadratic)
}

/// p_i(v) = q_i(v), the classical Myerson payment.
pub fn linear_payment(alloc: &ExPostAllocation, instance: &AuctionInstance) -> Result<RobustPaymentRule> {
    payment_rule(alloc, instance, PerceivedPayment::Linear)
}

pub fn payment_rule(
    alloc: &ExPostAllocation,
    instance: &AuctionInstance,
    model: PerceivedPayment,
) -> Result<RobustPaymentRule> {
    let q = perceived_payment(alloc, instance)?;
    Ok(RobustPaymentRule {
        table: payments_from(&q.table, model)?,
        perceived: model,
    })
}

/// Like [`payment_rule`] but clamps every negative q to 0. Returns whether
/// anything beyond rounding noise was clamped.
pub(crate) fn payment_rule_clamped(
    alloc: &ExPostAllocation,
    instance: &AuctionInstance,
    model: PerceivedPayment,
) -> Result<(RobustPaymentRule, bool)> {
    let q = perceived_payment(alloc, instance)?;
    let clamped = q.table.iter().flatten().any(|&x| x < -CLAMP_TOL);
    let table = q
        .table
        .iter()
        .map(|row| row.iter().map(|&x| model.invert(x.max(0.0))).collect())
        .collect();
    Ok((RobustPaymentRule { table, perceived: model }, clamped))
}

/// x̂_i(z_k) = Σ_{v_{-i}} f_{-i}(v_{-i}) x_i(z_k, v_{-i}).
pub fn interim_collapse(alloc: &ExPostAllocation, instance: &AuctionInstance) -> Result<InterimAllocation> {
    instance.check_profile_table(&alloc.table, "allocation")?;
    Ok(InterimAllocation {
        table: expect_over_others(&alloc.table, instance),
    })
}

/// E_{v_{-i}} of a `[bidder][profile]` table, as `[bidder][type]`.
pub(crate) fn expect_over_others(table: &[Vec<f64>], instance: &AuctionInstance) -> Vec<Vec<f64>> {
    par::map_range(instance.num_bidders(), |i| {
        let mut out = vec![0.0; instance.num_types(i)];
        for (v, &x) in table[i].iter().enumerate() {
            out[instance.type_index(v, i)] += instance.prob_others(v, i) * x;
        }
        out
    })
}

/// q̂_i(z_ℓ) from the interim rule, same sum as the ex-post formula.
pub fn interim_perceived_payment(interim: &InterimAllocation, instance: &AuctionInstance) -> Result<Vec<Vec<f64>>> {
    instance.check_type_table(&interim.table, "interim allocation")?;
    Ok(interim
        .table
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let types = &instance.bidder(i).types;
            (0..row.len())
                .map(|l| chain_payment(types, l, |j| row[j]))
                .collect()
        })
        .collect())
}

/// h_i(z_ℓ) = √q̂_i(z_ℓ). Fails on a clearly negative radicand.
pub fn bayesian_payment(interim: &InterimAllocation, instance: &AuctionInstance) -> Result<InterimPaymentRule> {
    let q = interim_perceived_payment(interim, instance)?;
    Ok(InterimPaymentRule {
        table: payments_from(&q, PerceivedPayment::Quadratic)?,
    })
}

pub(crate) fn bayesian_payment_clamped(
    interim: &InterimAllocation,
    instance: &AuctionInstance,
) -> Result<(InterimPaymentRule, bool)> {
    let q = interim_perceived_payment(interim, instance)?;
    let clamped = q.iter().flatten().any(|&x| x < -CLAMP_TOL);
    let table = q
        .iter()
        .map(|row| row.iter().map(|&x| x.max(0.0).sqrt()).collect())
        .collect();
    Ok((InterimPaymentRule { table }, clamped))
}

/// Expected total payment collected by the seller.
pub trait ExpectedRevenue {
    fn expected_revenue(&self, instance: &AuctionInstance) -> f64;
}

impl ExpectedRevenue for RobustPaymentRule {
    fn expected_revenue(&self, instance: &AuctionInstance) -> f64 {
        par::sum_range(instance.num_profiles(), |v| {
            instance.prob(v) * self.table.iter().map(|row| row[v]).sum::<f64>()
        })
    }
}

impl ExpectedRevenue for InterimPaymentRule {
    fn expected_revenue(&self, instance: &AuctionInstance) -> f64 {
        self.table
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(k, h)| instance.bidder(i).pmf(k) * h)
                    .sum::<f64>()
            })
            .sum()
    }
}

pub fn expected_revenue(rule: &impl ExpectedRevenue, instance: &AuctionInstance) -> f64 {
    rule.expected_revenue(instance)
}

/// Per-bidder expected payment E_v[p_i(v)].
pub fn expected_payment_per_bidder(rule: &RobustPaymentRule, instance: &AuctionInstance) -> Vec<f64> {
    rule.table
        .iter()
        .map(|row| row.iter().enumerate().map(|(v, p)| instance.prob(v) * p).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn golden() -> (AuctionInstance, ExPostAllocation) {
        let (t, d) = make_categorical(0.0, 100.0, 0.5).unwrap();
        let inst = AuctionInstance::symmetric(2, t, d).unwrap();
        // profiles (0,0) (0,100) (100,0) (100,100)
        let alloc = ExPostAllocation {
            table: vec![vec![0.0, 0.0, 1.0, 0.5], vec![0.0, 1.0, 0.0, 0.5]],
        };
        (inst, alloc)
    }

    fn one_bidder(values: Vec<f64>, pmf: Vec<f64>) -> AuctionInstance {
        AuctionInstance::symmetric(
            1,
            TypeSpace::new(values).unwrap(),
            DiscreteDistribution::new(pmf).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn golden_robust_payments() {
        let (inst, alloc) = golden();
        let q = perceived_payment(&alloc, &inst).unwrap();
        assert!(q.monotone);
        assert_eq!(q.table[0][3], 50.0);
        let p = robust_payment(&alloc, &inst).unwrap();
        assert_eq!(p.table[0][2], 10.0);
        assert_eq!(p.table[0][3], 50f64.sqrt());
        assert_eq!(p.table[1][1], 10.0);
        let rev = p.expected_revenue(&inst);
        assert!((rev - 5.0 * (1.0 + 2f64.sqrt() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn golden_bayesian_payments() {
        let (inst, alloc) = golden();
        let xh = interim_collapse(&alloc, &inst).unwrap();
        assert_eq!(xh.table[0], vec![0.0, 0.75]);
        let h = bayesian_payment(&xh, &inst).unwrap();
        assert_eq!(h.table[0][0], 0.0);
        assert!((h.table[0][1] - 5.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((expected_revenue(&h, &inst) - 5.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn small_formula_cases() {
        let inst = one_bidder(vec![1.0], vec![1.0]);
        let alloc = ExPostAllocation { table: vec![vec![1.0]] };
        assert_eq!(perceived_payment(&alloc, &inst).unwrap().table, vec![vec![1.0]]);

        let inst = one_bidder(vec![0.0, 1.0], vec![0.5, 0.5]);
        let alloc = ExPostAllocation { table: vec![vec![0.0, 1.0]] };
        assert_eq!(perceived_payment(&alloc, &inst).unwrap().table[0][1], 1.0);
    }

    #[test]
    fn zero_and_constant_allocations() {
        let (t, d) = make_uniform(3).unwrap();
        let inst = AuctionInstance::symmetric(2, t, d).unwrap();
        let zero = ExPostAllocation::zeros(&inst);
        let p = robust_payment(&zero, &inst).unwrap();
        assert!(p.table.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(p.expected_revenue(&inst), 0.0);

        let half = ExPostAllocation {
            table: vec![vec![0.5; 9]; 2],
        };
        let xh = interim_collapse(&half, &inst).unwrap();
        assert!(xh.table.iter().flatten().all(|&x| (x - 0.5).abs() < 1e-15));
        let h = bayesian_payment(&InterimAllocation { table: vec![vec![0.0; 3]; 2] }, &inst).unwrap();
        assert!(h.table.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn non_monotone_is_flagged_and_rejected() {
        let inst = one_bidder(vec![1.0, 2.0], vec![0.5, 0.5]);
        let alloc = ExPostAllocation { table: vec![vec![1.0, 0.2]] };
        let q = perceived_payment(&alloc, &inst).unwrap();
        assert!(!q.monotone);
        // q(2) = 2*0.2 - 1*1 < 0
        assert!(matches!(
            robust_payment(&alloc, &inst),
            Err(AuctionError::NegativeRadicand { .. })
        ));
        let (rule, clamped) = payment_rule_clamped(&alloc, &inst, PerceivedPayment::Quadratic).unwrap();
        assert!(clamped);
        assert_eq!(rule.table[0][1], 0.0);
    }

    #[test]
    fn tiny_negative_radicand_is_clamped() {
        let inst = one_bidder(vec![1.0, 2.0], vec![0.5, 0.5]);
        let alloc = ExPostAllocation {
            table: vec![vec![0.5, 0.25 - 2e-10]],
        };
        let p = robust_payment(&alloc, &inst).unwrap();
        assert_eq!(p.table[0][1], 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (inst, _) = golden();
        let bad = ExPostAllocation { table: vec![vec![0.0; 4]] };
        assert!(perceived_payment(&bad, &inst).is_err());
    }
}
