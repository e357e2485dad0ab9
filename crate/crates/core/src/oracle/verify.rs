//! Exhaustive constraint checks for a mechanism against its instance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuctionError, Result};
use crate::mechanisms::Mechanism;
use crate::model::{AuctionInstance, ExPostAllocation, InterimAllocation, InterimPaymentRule};
use crate::par;
use crate::payments::expect_over_others;

/// Default tolerance on every inequality.
pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Truth-telling is optimal at every profile.
    Ic,
    /// Non-negative utility at every profile.
    Ir,
    /// Truth-telling is optimal in expectation over the others.
    Bic,
    /// Non-negative expected utility.
    Bir,
    /// Σ_i x_i(v) ≤ 1 at every profile.
    Xp,
    /// Σ_i E[x_i] ≤ 1.
    Xa,
    /// 0 ≤ x ≤ 1 entrywise.
    Bounds,
    /// x_i rises with bidder i's own type at every v_{-i}.
    Monotone,
    /// x̂_i rises with bidder i's own type.
    InterimMonotone,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 9] = [
        Self::Ic,
        Self::Ir,
        Self::Bic,
        Self::Bir,
        Self::Xp,
        Self::Xa,
        Self::Bounds,
        Self::Monotone,
        Self::InterimMonotone,
    ];
    pub const ROBUST: [ConstraintKind; 3] = [Self::Ic, Self::Ir, Self::Xp];
    pub const BAYESIAN: [ConstraintKind; 3] = [Self::Bic, Self::Bir, Self::Xp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ic => "ic",
            Self::Ir => "ir",
            Self::Bic => "bic",
            Self::Bir => "bir",
            Self::Xp => "xp",
            Self::Xa => "xa",
            Self::Bounds => "bounds",
            Self::Monotone => "monotone",
            Self::InterimMonotone => "interim_monotone",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstraintKind {
    type Err = AuctionError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| AuctionError::InvalidConfig(format!("unknown constraint '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub kind: ConstraintKind,
    pub passed: bool,
    /// Largest amount by which any inequality of this kind is violated, 0 if none.
    pub worst_violation: f64,
    /// Set when the mechanism lacks the tables this check needs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<ConstraintCheck>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, kind: ConstraintKind) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.kind == kind)
    }

    pub fn passed(&self, kind: ConstraintKind) -> bool {
        self.get(kind).is_some_and(|c| c.passed)
    }
}

/// Everything the checks may look at, with derived tables filled in.
struct Tables<'a> {
    instance: &'a AuctionInstance,
    alloc: Option<&'a ExPostAllocation>,
    /// Ex-post perceived payments q_i(v).
    q: Option<Vec<Vec<f64>>>,
    interim: Option<InterimAllocation>,
    /// Interim perceived payments q̂_i(z_k).
    q_hat: Option<Vec<Vec<f64>>>,
}

fn missing(kind: ConstraintKind, what: &str) -> ConstraintCheck {
    ConstraintCheck {
        kind,
        passed: false,
        worst_violation: f64::INFINITY,
        note: Some(format!("mechanism has no {what}")),
    }
}

fn outcome(kind: ConstraintKind, worst: f64, tol: f64) -> ConstraintCheck {
    let worst = worst.max(0.0);
    ConstraintCheck {
        kind,
        passed: worst <= tol,
        worst_violation: worst,
        note: None,
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

impl Tables<'_> {
    fn check(&self, kind: ConstraintKind, tol: f64) -> ConstraintCheck {
        let inst = self.instance;
        match kind {
            ConstraintKind::Ic | ConstraintKind::Ir => {
                let (Some(x), Some(q)) = (self.alloc, self.q.as_ref()) else {
                    return missing(kind, "ex-post allocation and payments");
                };
                let worst = par::map_range(inst.num_profiles(), |v| {
                    max_of((0..inst.num_bidders()).map(|i| {
                        let l = inst.type_index(v, i);
                        let z = inst.bidder(i).value(l);
                        let truthful = z * x.table[i][v] - q[i][v];
                        if kind == ConstraintKind::Ir {
                            return -truthful;
                        }
                        max_of((0..inst.num_types(i)).map(|w| {
                            let u = inst.with_type(v, i, w);
                            z * x.table[i][u] - q[i][u] - truthful
                        }))
                    }))
                });
                outcome(kind, max_of(worst), tol)
            }
            ConstraintKind::Bic | ConstraintKind::Bir => {
                let (Some(xh), Some(qh)) = (self.interim.as_ref(), self.q_hat.as_ref()) else {
                    return missing(kind, "interim allocation and payments");
                };
                let worst = (0..inst.num_bidders()).flat_map(|i| {
                    let b = inst.bidder(i);
                    (0..b.num_types()).map(move |l| {
                        let z = b.value(l);
                        let truthful = z * xh.table[i][l] - qh[i][l];
                        if kind == ConstraintKind::Bir {
                            return -truthful;
                        }
                        max_of(
                            (0..b.num_types()).map(|w| z * xh.table[i][w] - qh[i][w] - truthful),
                        )
                    })
                });
                outcome(kind, max_of(worst), tol)
            }
            ConstraintKind::Xp => {
                let Some(x) = self.alloc else {
                    return missing(kind, "ex-post allocation");
                };
                let worst = (0..inst.num_profiles())
                    .map(|v| x.table.iter().map(|row| row[v]).sum::<f64>() - 1.0);
                outcome(kind, max_of(worst), tol)
            }
            ConstraintKind::Xa => {
                let Some(xh) = self.interim.as_ref() else {
                    return missing(kind, "allocation");
                };
                let mass: f64 = xh
                    .table
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(k, x)| inst.bidder(i).pmf(k) * x)
                            .sum::<f64>()
                    })
                    .sum();
                outcome(kind, mass - 1.0, tol)
            }
            ConstraintKind::Bounds => {
                let worst = match self.alloc {
                    Some(x) => max_of(x.table.iter().flatten().map(|&e| (-e).max(e - 1.0))),
                    None => match self.interim.as_ref() {
                        Some(xh) => max_of(xh.table.iter().flatten().map(|&e| (-e).max(e - 1.0))),
                        None => return missing(kind, "allocation"),
                    },
                };
                outcome(kind, worst, tol)
            }
            ConstraintKind::Monotone => {
                let Some(x) = self.alloc else {
                    return missing(kind, "ex-post allocation");
                };
                let worst = (0..inst.num_bidders()).flat_map(|i| {
                    (0..inst.num_profiles())
                        .filter(move |&v| inst.type_index(v, i) > 0)
                        .map(move |v| {
                            let l = inst.type_index(v, i);
                            x.table[i][inst.with_type(v, i, l - 1)] - x.table[i][v]
                        })
                });
                outcome(kind, max_of(worst), tol)
            }
            ConstraintKind::InterimMonotone => {
                let Some(xh) = self.interim.as_ref() else {
                    return missing(kind, "allocation");
                };
                let worst = xh
                    .table
                    .iter()
                    .flat_map(|row| row.windows(2).map(|w| w[0] - w[1]));
                outcome(kind, max_of(worst), tol)
            }
        }
    }
}

fn run(tables: &Tables<'_>, which: &[ConstraintKind], tol: f64) -> VerificationReport {
    VerificationReport {
        checks: which.iter().map(|&k| tables.check(k, tol)).collect(),
    }
}

/// Checks every inequality of each requested kind, at tolerance [`VERIFY_TOL`].
///
/// Ex-post payments come from the robust rule, or from p_i(v) = h_i(v_i) when
/// only interim payments exist. Interim payments come from h² when present,
/// else from the expectation of the ex-post perceived payments.
pub fn verify(
    instance: &AuctionInstance,
    mech: &Mechanism,
    which: &[ConstraintKind],
) -> Result<VerificationReport> {
    verify_with_tol(instance, mech, which, VERIFY_TOL)
}

pub fn verify_with_tol(
    instance: &AuctionInstance,
    mech: &Mechanism,
    which: &[ConstraintKind],
    tol: f64,
) -> Result<VerificationReport> {
    instance.check_profile_table(&mech.allocation.table, "allocation")?;
    let q = match (&mech.robust_payments, &mech.interim_payments) {
        (Some(rule), _) => {
            instance.check_profile_table(&rule.table, "payments")?;
            Some(
                rule.table
                    .iter()
                    .map(|row| row.iter().map(|&p| rule.perceived.perceive(p)).collect())
                    .collect::<Vec<Vec<f64>>>(),
            )
        }
        (None, Some(h)) => {
            instance.check_type_table(&h.table, "interim payments")?;
            Some(
                (0..instance.num_bidders())
                    .map(|i| {
                        (0..instance.num_profiles())
                            .map(|v| h.table[i][instance.type_index(v, i)].powi(2))
                            .collect()
                    })
                    .collect(),
            )
        }
        (None, None) => None,
    };
    let interim = match &mech.interim_allocation {
        Some(xh) => {
            instance.check_type_table(&xh.table, "interim allocation")?;
            xh.clone()
        }
        None => InterimAllocation {
            table: expect_over_others(&mech.allocation.table, instance),
        },
    };
    let q_hat = match (&mech.interim_payments, &q) {
        (Some(h), _) => Some(
            h.table
                .iter()
                .map(|row| row.iter().map(|x| x * x).collect())
                .collect(),
        ),
        (None, Some(q)) => Some(expect_over_others(q, instance)),
        (None, None) => None,
    };
    let tables = Tables {
        instance,
        alloc: Some(&mech.allocation),
        q,
        interim: Some(interim),
        q_hat,
    };
    Ok(run(&tables, which, tol))
}

/// Checks for a rule that exists only at the interim level, such as the
/// ex-ante relaxation. Ex-post kinds come back failed with a note.
pub fn verify_interim(
    instance: &AuctionInstance,
    interim: &InterimAllocation,
    payments: &InterimPaymentRule,
    which: &[ConstraintKind],
) -> Result<VerificationReport> {
    instance.check_type_table(&interim.table, "interim allocation")?;
    instance.check_type_table(&payments.table, "interim payments")?;
    let tables = Tables {
        instance,
        alloc: None,
        q: None,
        interim: Some(interim.clone()),
        q_hat: Some(
            payments
                .table
                .iter()
                .map(|row| row.iter().map(|x| x * x).collect())
                .collect(),
        ),
    };
    Ok(run(&tables, which, VERIFY_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{Mechanism, Provenance};
    use crate::model::*;
    use crate::payments::{bayesian_payment, interim_collapse, robust_payment};

    fn golden() -> (AuctionInstance, ExPostAllocation) {
        let (t, d) = make_categorical(0.0, 100.0, 0.5).unwrap();
        let inst = AuctionInstance::symmetric(2, t, d).unwrap();
        let alloc = ExPostAllocation {
            table: vec![vec![0.0, 0.0, 1.0, 0.5], vec![0.0, 1.0, 0.0, 0.5]],
        };
        (inst, alloc)
    }

    #[test]
    fn golden_robust_passes() {
        let (inst, alloc) = golden();
        let p = robust_payment(&alloc, &inst).unwrap();
        let mech = Mechanism::robust(alloc, p, Provenance::Manual);
        let rep = verify(&inst, &mech, &ConstraintKind::ALL).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
    }

    #[test]
    fn golden_bayesian_passes_interim_but_not_ex_post_ir() {
        let (inst, alloc) = golden();
        let xh = interim_collapse(&alloc, &inst).unwrap();
        let h = bayesian_payment(&xh, &inst).unwrap();
        let mech = Mechanism::bayesian(alloc, xh, h, Provenance::Manual);
        let rep = verify(&inst, &mech, &[ConstraintKind::Bic, ConstraintKind::Bir, ConstraintKind::Xp, ConstraintKind::Ir])
            .unwrap();
        assert!(rep.passed(ConstraintKind::Bic));
        assert!(rep.passed(ConstraintKind::Bir));
        assert!(rep.passed(ConstraintKind::Xp));
        // at (100, 100): 100 * 1/2 - 75 = -25
        let ir = rep.get(ConstraintKind::Ir).unwrap();
        assert!(!ir.passed);
        assert!((ir.worst_violation - 25.0).abs() < 1e-9);
    }

    #[test]
    fn double_allocation_fails_xp_by_one() {
        let (inst, mut alloc) = golden();
        alloc.table[0][3] = 1.0;
        alloc.table[1][3] = 1.0;
        let mech = Mechanism::allocation_only(alloc, Provenance::Manual);
        let rep = verify(&inst, &mech, &[ConstraintKind::Xp]).unwrap();
        let xp = rep.get(ConstraintKind::Xp).unwrap();
        assert!(!xp.passed);
        assert_eq!(xp.worst_violation, 1.0);
    }

    #[test]
    fn missing_payments_fail_with_note() {
        let (inst, alloc) = golden();
        let mech = Mechanism::allocation_only(alloc, Provenance::Manual);
        let rep = verify(&inst, &mech, &[ConstraintKind::Ic, ConstraintKind::Monotone]).unwrap();
        assert!(!rep.passed(ConstraintKind::Ic));
        assert!(rep.get(ConstraintKind::Ic).unwrap().note.is_some());
        assert!(rep.passed(ConstraintKind::Monotone));
    }

    #[test]
    fn overcharging_breaks_ir_and_ic() {
        let (inst, alloc) = golden();
        let mut p = robust_payment(&alloc, &inst).unwrap();
        p.table[0][2] = 11.0; // q = 121 > 100
        let mech = Mechanism::robust(alloc, p, Provenance::Manual);
        let rep = verify(&inst, &mech, &ConstraintKind::ROBUST).unwrap();
        assert!(!rep.passed(ConstraintKind::Ir));
        assert!((rep.get(ConstraintKind::Ir).unwrap().worst_violation - 21.0).abs() < 1e-9);
        assert!(!rep.passed(ConstraintKind::Ic));
    }

    #[test]
    fn interim_only_checks() {
        let (inst, alloc) = golden();
        let xh = interim_collapse(&alloc, &inst).unwrap();
        let h = bayesian_payment(&xh, &inst).unwrap();
        let rep = verify_interim(&inst, &xh, &h, &[ConstraintKind::Bic, ConstraintKind::Bir, ConstraintKind::Xa, ConstraintKind::Xp])
            .unwrap();
        assert!(rep.passed(ConstraintKind::Bic));
        assert!(rep.passed(ConstraintKind::Xa));
        assert!(!rep.passed(ConstraintKind::Xp));
    }

    #[test]
    fn parse_names() {
        for k in ConstraintKind::ALL {
            assert_eq!(k.name().parse::<ConstraintKind>().unwrap(), k);
        }
        assert_eq!(" IC ".parse::<ConstraintKind>().unwrap(), ConstraintKind::Ic);
        assert!("icx".parse::<ConstraintKind>().is_err());
    }
}
