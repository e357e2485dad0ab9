//! Discrete virtual values and the regularity check.

use serde::{Deserialize, Serialize};

use crate::model::AuctionInstance;

/// φ and φ⁺ = max(φ, 0), indexed `[bidder][type]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualValueTable {
    pub phi: Vec<Vec<f64>>,
    pub phi_plus: Vec<Vec<f64>>,
}

impl VirtualValueTable {
    pub fn phi(&self, i: usize, k: usize) -> f64 {
        self.phi[i][k]
    }

    pub fn phi_plus(&self, i: usize, k: usize) -> f64 {
        self.phi_plus[i][k]
    }
}

/// φ_{i,k} = z_k - (z_{k+1} - z_k)(1 - F_k) / f_k with z_{K+1} = z_K.
pub fn virtual_values(instance: &AuctionInstance) -> VirtualValueTable {
    let phi: Vec<Vec<f64>> = instance
        .bidders()
        .iter()
        .map(|b| {
            let cdf = b.dist.cdf();
            (0..b.num_types())
                .map(|k| {
                    let gap = b.types.gap(k);
                    if gap == 0.0 {
                        b.value(k)
                    } else {
                        b.value(k) - gap * (1.0 - cdf[k]) / b.pmf(k)
                    }
                })
                .collect()
        })
        .collect();
    let phi_plus = phi
        .iter()
        .map(|row| row.iter().map(|p| p.max(0.0)).collect())
        .collect();
    VirtualValueTable { phi, phi_plus }
}

/// Per bidder: are the virtual values non-decreasing?
pub fn is_regular(table: &VirtualValueTable) -> Vec<bool> {
    table
        .phi
        .iter()
        .map(|row| row.windows(2).all(|w| w[1] >= w[0]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn instance(values: Vec<f64>, pmf: Vec<f64>, n: usize) -> AuctionInstance {
        AuctionInstance::symmetric(
            n,
            TypeSpace::new(values).unwrap(),
            DiscreteDistribution::new(pmf).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_grid_closed_form() {
        for k_max in 1..=9usize {
            let values = (1..=k_max).map(|j| j as f64 / k_max as f64).collect();
            let inst = instance(values, vec![1.0 / k_max as f64; k_max], 1);
            let t = virtual_values(&inst);
            for k in 1..=k_max {
                let expect = 2.0 * k as f64 / k_max as f64 - 1.0;
                assert!((t.phi(0, k - 1) - expect).abs() < 1e-12);
            }
            assert!(is_regular(&t)[0]);
        }
        let inst = instance((1..=5).map(|j| j as f64 / 5.0).collect(), vec![0.2; 5], 1);
        assert!((virtual_values(&inst).phi(0, 2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn categorical_and_single_type() {
        let (t, d) = make_categorical(3.0, 10.0, 0.8).unwrap();
        let inst = AuctionInstance::symmetric(2, t, d).unwrap();
        let tab = virtual_values(&inst);
        assert!((tab.phi(0, 0) - 1.25).abs() < 1e-12);
        assert_eq!(tab.phi(1, 1), 10.0);
        assert_eq!(is_regular(&tab), vec![true, true]);

        let inst = instance(vec![1.0], vec![1.0], 3);
        let tab = virtual_values(&inst);
        assert!(tab.phi.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn crafted_pmf_matches_definition() {
        let inst = instance(vec![1.0, 2.0, 10.0], vec![0.1, 0.8, 0.1], 1);
        let tab = virtual_values(&inst);
        // by hand: 1 - 1*0.9/0.1 = -8, 2 - 8*0.1/0.8 = 1, 10
        let by_hand = [1.0 - 0.9 / 0.1, 2.0 - 8.0 * 0.1 / 0.8, 10.0];
        for (a, b) in tab.phi[0].iter().zip(by_hand) {
            assert!((a - b).abs() < 1e-9);
        }
        let verdict = by_hand.windows(2).all(|w| w[1] >= w[0]);
        assert_eq!(is_regular(&tab)[0], verdict);
    }

    #[test]
    fn irregular_is_detected() {
        // heavy middle mass after a light low type
        let inst = instance(vec![1.0, 2.0, 3.0], vec![0.45, 0.1, 0.45], 1);
        let tab = virtual_values(&inst);
        assert!(tab.phi(0, 1) < tab.phi(0, 0));
        assert!(!is_regular(&tab)[0]);
    }

    #[test]
    fn top_type_and_positive_part() {
        let (t, d) = make_binomial(4, 0.5).unwrap();
        let inst = AuctionInstance::symmetric(2, t, d).unwrap();
        let tab = virtual_values(&inst);
        for i in 0..2 {
            assert_eq!(tab.phi(i, 4), 4.0);
            for k in 0..5 {
                assert!(tab.phi(i, k) <= inst.bidder(i).value(k));
                assert!(tab.phi_plus(i, k) >= 0.0 && tab.phi_plus(i, k) >= tab.phi(i, k));
            }
        }
    }
}
