//! Log-barrier Newton method for
//!
//! ```text
//! maximize   c·x + Σ_t w_t √(a_t·x)
//! subject to g_r·x ≤ h_r
//! ```
//!
//! Every revenue program here has this shape: payments are square roots
//! of perceived payments, which are linear in the allocation. The
//! objective is concave, so the central path converges to the global
//! optimum and `m / t` bounds the remaining gap.

use nalgebra::{DMatrix, DVector};

use crate::error::{AuctionError, Result};

/// Sparse linear form Σ coef · x[var].
pub type Sparse = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct RootTerm {
    pub weight: f64,
    pub coeffs: Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Sparse,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConcaveProgram {
    pub num_vars: usize,
    pub linear: Vec<f64>,
    pub roots: Vec<RootTerm>,
    pub constraints: Vec<LinearConstraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierOptions {
    /// Stop once m / t falls below this.
    pub gap_tol: f64,
    pub t0: f64,
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            t0: 1.0,
            mu: 20.0,
            max_newton: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Certified bound on optimum − value, from the barrier parameter.
    pub gap: f64,
}

fn dot(coeffs: &Sparse, x: &[f64]) -> f64 {
    coeffs.iter().map(|&(j, a)| a * x[j]).sum()
}

impl ConcaveProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            linear: vec![0.0; num_vars],
            ..Self::default()
        }
    }

    pub fn add_root(&mut self, weight: f64, coeffs: Sparse) {
        let coeffs: Sparse = coeffs.into_iter().filter(|&(_, a)| a != 0.0).collect();
        if weight != 0.0 && !coeffs.is_empty() {
            self.roots.push(RootTerm { weight, coeffs });
        }
    }

    pub fn add_le(&mut self, coeffs: Sparse, rhs: f64) {
        self.constraints.push(LinearConstraint { coeffs, rhs });
    }

    /// Objective at `x`, with radicands clamped at zero.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(x).map(|(c, x)| c * x).sum();
        lin + self
            .roots
            .iter()
            .map(|r| r.weight * dot(&r.coeffs, x).max(0.0).sqrt())
            .sum::<f64>()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| dot(&c.coeffs, x) - c.rhs)
            .fold(0.0, f64::max)
    }

    /// Barrier objective t·F(x) + Σ log(slack); `None` outside the domain.
    fn barrier(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut acc = 0.0;
        for c in &self.constraints {
            let s = c.rhs - dot(&c.coeffs, x);
            if s <= 0.0 {
                return None;
            }
            acc += s.ln();
        }
        let mut f: f64 = self.linear.iter().zip(x).map(|(c, x)| c * x).sum();
        for r in &self.roots {
            let s = dot(&r.coeffs, x);
            if s <= 0.0 {
                return None;
            }
            f += r.weight * s.sqrt();
        }
        Some(t * f + acc)
    }

    /// Gradient and negated Hessian of the barrier objective.
    fn derivatives(&self, x: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.num_vars;
        let mut g = DVector::from_iterator(n, self.linear.iter().map(|c| t * c));
        let mut h = DMatrix::<f64>::zeros(n, n);
        for r in &self.roots {
            let s = dot(&r.coeffs, x);
            let d1 = t * r.weight / (2.0 * s.sqrt());
            let d2 = t * r.weight / (4.0 * s * s.sqrt());
            for &(j, a) in &r.coeffs {
                g[j] += d1 * a;
                for &(k, b) in &r.coeffs {
                    h[(j, k)] += d2 * a * b;
                }
            }
        }
        for c in &self.constraints {
            let s = c.rhs - dot(&c.coeffs, x);
            let inv = 1.0 / s;
            for &(j, a) in &c.coeffs {
                g[j] -= a * inv;
                for &(k, b) in &c.coeffs {
                    h[(j, k)] += a * b * inv * inv;
                }
            }
        }
        (g, h)
    }

    /// Solves from a strictly feasible `start`.
    pub fn solve(&self, start: &[f64], opts: &BarrierOptions) -> Result<Solution> {
        if start.len() != self.num_vars {
            return Err(AuctionError::Solver("start point has the wrong length".into()));
        }
        let mut x = start.to_vec();
        let mut t = opts.t0;
        if self.barrier(&x, t).is_none() {
            return Err(AuctionError::Solver("start point is not strictly feasible".into()));
        }
        let m = self.constraints.len().max(1) as f64;
        loop {
            self.center(&mut x, t, opts)?;
            if m / t < opts.gap_tol {
                break;
            }
            t *= opts.mu;
        }
        Ok(Solution {
            value: self.objective(&x),
            gap: m / t,
            x,
        })
    }

    fn center(&self, x: &mut Vec<f64>, t: f64, opts: &BarrierOptions) -> Result<()> {
        let n = self.num_vars;
        for _ in 0..opts.max_newton {
            let (g, mut h) = self.derivatives(x, t);
            let step = match h.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    // Nearly singular: nudge the diagonal and retry.
                    let bump = 1e-12 * (1.0 + h.diagonal().amax());
                    for j in 0..n {
                        h[(j, j)] += bump;
                    }
                    h.cholesky()
                        .ok_or_else(|| AuctionError::Solver("Newton system is singular".into()))?
                        .solve(&g)
                }
            };
            let decrement = g.dot(&step);
            if decrement / 2.0 <= 1e-10 || !decrement.is_finite() {
                return Ok(());
            }
            let here = self.barrier(x, t).expect("iterate stays interior");
            let mut s = 1.0;
            let mut moved = false;
            while s > 1e-16 {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + s * d).collect();
                if let Some(val) = self.barrier(&trial, t) {
                    if val >= here + 0.25 * s * decrement {
                        *x = trial;
                        moved = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !moved {
                return Ok(());
            }
        }
        Ok(())
    }
}
