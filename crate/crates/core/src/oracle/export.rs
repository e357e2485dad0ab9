//! Plain-text rendering of the revenue programs.
//!
//! Output is line oriented and deterministic:
//!
//! ```text
//! OBJECTIVE maximize: <expr>
//! VAR <name>
//! CONSTRAINT <name>: <expr> <= | == <rhs>
//! ```
//!
//! Ex-post variables are indexed by flat profile (`x[i][v]`, `p[i][v]`),
//! interim ones by own type (`xhat[i][k]`, `h[i][k]`).

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::AuctionError;
use crate::model::AuctionInstance;
use crate::virtual_value::virtual_values;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramKind {
    RrmXp,
    RrmPseudo,
    RrmLb,
    BrmXpNaive,
    BrmXp,
    BrmPseudo,
    BrmXa,
    BrmXaRel,
    BrmXaRelTrunc,
}

impl ProgramKind {
    pub const ALL: [ProgramKind; 9] = [
        ProgramKind::RrmXp,
        ProgramKind::RrmPseudo,
        ProgramKind::RrmLb,
        ProgramKind::BrmXpNaive,
        ProgramKind::BrmXp,
        ProgramKind::BrmPseudo,
        ProgramKind::BrmXa,
        ProgramKind::BrmXaRel,
        ProgramKind::BrmXaRelTrunc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProgramKind::RrmXp => "rrm_xp",
            ProgramKind::RrmPseudo => "rrm_pseudo",
            ProgramKind::RrmLb => "rrm_lb",
            ProgramKind::BrmXpNaive => "brm_xp_naive",
            ProgramKind::BrmXp => "brm_xp",
            ProgramKind::BrmPseudo => "brm_pseudo",
            ProgramKind::BrmXa => "brm_xa",
            ProgramKind::BrmXaRel => "brm_xa_rel",
            ProgramKind::BrmXaRelTrunc => "brm_xa_rel_trunc",
        }
    }
}

impl fmt::Display for ProgramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProgramKind {
    type Err = AuctionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProgramKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AuctionError::InvalidConfig(format!("unknown program '{s}'")))
    }
}

/// Linear expression as (coefficient, variable name) pairs.
type Expr = Vec<(f64, String)>;

fn x(i: usize, v: usize) -> String {
    format!("x[{i}][{v}]")
}
fn p(i: usize, v: usize) -> String {
    format!("p[{i}][{v}]")
}
fn xhat(i: usize, k: usize) -> String {
    format!("xhat[{i}][{k}]")
}
fn phat(i: usize, k: usize) -> String {
    format!("phat[{i}][{k}]")
}
fn qhat(i: usize, k: usize) -> String {
    format!("qhat[{i}][{k}]")
}
fn h(i: usize, k: usize) -> String {
    format!("h[{i}][{k}]")
}

fn render(e: &[(f64, String)]) -> String {
    let mut s = String::new();
    for (n, (c, name)) in e.iter().enumerate() {
        let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
        if n == 0 {
            if sign == "-" {
                s.push('-');
            }
        } else {
            let _ = write!(s, " {sign} ");
        }
        if mag == 1.0 {
            s.push_str(name);
        } else {
            let _ = write!(s, "{mag}*{name}");
        }
    }
    if s.is_empty() {
        s.push('0');
    }
    s
}

struct Builder {
    objective: Vec<String>,
    vars: Vec<String>,
    cons: Vec<String>,
}

impl Builder {
    fn new() -> Self {
        Self { objective: Vec::new(), vars: Vec::new(), cons: Vec::new() }
    }

    fn con(&mut self, name: String, lhs: String, op: &str, rhs: f64) {
        self.cons.push(format!("CONSTRAINT {name}: {lhs} {op} {rhs}"));
    }

    fn finish(self) -> String {
        let mut out = String::new();
        let obj = if self.objective.is_empty() { "0".to_string() } else { self.objective.join(" + ") };
        let _ = writeln!(out, "OBJECTIVE maximize: {obj}");
        for v in self.vars {
            let _ = writeln!(out, "VAR {v}");
        }
        for c in self.cons {
            let _ = writeln!(out, "{c}");
        }
        out
    }

    fn ex_post_vars(&mut self, inst: &AuctionInstance, name: fn(usize, usize) -> String) {
        for i in 0..inst.num_bidders() {
            for v in 0..inst.num_profiles() {
                self.vars.push(name(i, v));
            }
        }
    }

    fn interim_vars(&mut self, inst: &AuctionInstance, name: fn(usize, usize) -> String) {
        for i in 0..inst.num_bidders() {
            for k in 0..inst.num_types(i) {
                self.vars.push(name(i, k));
            }
        }
    }

    fn ex_post_feasibility(&mut self, inst: &AuctionInstance) {
        for v in 0..inst.num_profiles() {
            let e: Expr = (0..inst.num_bidders()).map(|i| (1.0, x(i, v))).collect();
            self.con(format!("xp[{v}]"), render(&e), "<=", 1.0);
        }
    }

    fn ex_post_bounds(&mut self, inst: &AuctionInstance) {
        for i in 0..inst.num_bidders() {
            for v in 0..inst.num_profiles() {
                self.con(format!("lower[{i}][{v}]"), format!("-{}", x(i, v)), "<=", 0.0);
            }
        }
        for i in 0..inst.num_bidders() {
            for v in 0..inst.num_profiles() {
                self.con(format!("upper[{i}][{v}]"), x(i, v), "<=", 1.0);
            }
        }
    }

    fn ex_post_monotone(&mut self, inst: &AuctionInstance) {
        for i in 0..inst.num_bidders() {
            for b in inst.chain_bases(i) {
                for l in 1..inst.num_types(i) {
                    let lo = inst.with_type(b, i, l - 1);
                    let hi = inst.with_type(b, i, l);
                    let e = vec![(1.0, x(i, lo)), (-1.0, x(i, hi))];
                    self.con(format!("mono[{i}][{hi}]"), render(&e), "<=", 0.0);
                }
            }
        }
    }

    /// `name[i][k] == Σ_{v−i} f(v−i) inner(i, v)` for every own type.
    fn relate_interim(&mut self, inst: &AuctionInstance, label: &str, lhs: fn(usize, usize) -> String, inner: &dyn Fn(usize, usize) -> String) {
        for i in 0..inst.num_bidders() {
            let bases = inst.chain_bases(i);
            for k in 0..inst.num_types(i) {
                let mut s = lhs(i, k);
                for &b in &bases {
                    let v = inst.with_type(b, i, k);
                    let _ = write!(s, " - {}*{}", inst.prob_others(v, i), inner(i, v));
                }
                self.con(format!("{label}[{i}][{k}]"), s, "==", 0.0);
            }
        }
    }

    fn interim_monotone(&mut self, inst: &AuctionInstance) {
        for i in 0..inst.num_bidders() {
            for l in 1..inst.num_types(i) {
                let e = vec![(1.0, xhat(i, l - 1)), (-1.0, xhat(i, l))];
                self.con(format!("mono[{i}][{l}]"), render(&e), "<=", 0.0);
            }
        }
    }

    fn interim_lower(&mut self, inst: &AuctionInstance) {
        for i in 0..inst.num_bidders() {
            for k in 0..inst.num_types(i) {
                self.con(format!("lower[{i}][{k}]"), format!("-{}", xhat(i, k)), "<=", 0.0);
            }
        }
    }

    fn interim_upper(&mut self, inst: &AuctionInstance) {
        for i in 0..inst.num_bidders() {
            for k in 0..inst.num_types(i) {
                self.con(format!("upper[{i}][{k}]"), xhat(i, k), "<=", 1.0);
            }
        }
    }

    fn ex_ante_feasibility(&mut self, inst: &AuctionInstance) {
        let mut e = Expr::new();
        for i in 0..inst.num_bidders() {
            for k in 0..inst.num_types(i) {
                e.push((inst.bidder(i).pmf(k), xhat(i, k)));
            }
        }
        self.con("xa".into(), render(&e), "<=", 1.0);
    }

    /// `pay^2 == z_l alloc(l) − Σ_{j<l} gap_j alloc(j)` along each chain.
    fn payment_rule(&mut self, inst: &AuctionInstance, interim: bool, pay: fn(usize, usize) -> String) {
        for i in 0..inst.num_bidders() {
            let types = &inst.bidder(i).types;
            let cells = if interim { inst.num_types(i) } else { inst.num_profiles() };
            for cell in 0..cells {
                let l = if interim { cell } else { inst.type_index(cell, i) };
                let at = |j: usize| if interim { xhat(i, j) } else { x(i, inst.with_type(cell, i, j)) };
                let mut e: Expr = vec![(-types.value(l), at(l))];
                for j in 0..l {
                    e.push((types.gap(j), at(j)));
                }
                let lhs = format!("{}^2 {}", pay(i, cell), signed_tail(&e));
                self.con(format!("pay[{i}][{cell}]"), lhs, "==", 0.0);
            }
        }
    }
}

/// Renders `e` as a continuation (every term carries its sign).
fn signed_tail(e: &[(f64, String)]) -> String {
    let body = render(e);
    if let Some(rest) = body.strip_prefix('-') {
        format!("- {rest}")
    } else {
        format!("+ {body}")
    }
}

/// Emits `kind` for `instance`.
pub fn export_program(instance: &AuctionInstance, kind: ProgramKind) -> String {
    let n = instance.num_bidders();
    let np = instance.num_profiles();
    let mut b = Builder::new();
    let vv = virtual_values(instance);
    match kind {
        ProgramKind::RrmXp => {
            b.ex_post_vars(instance, x);
            b.ex_post_vars(instance, p);
            for v in 0..np {
                for i in 0..n {
                    b.objective.push(format!("{}*{}", instance.prob(v), p(i, v)));
                }
            }
            b.ex_post_feasibility(instance);
            b.ex_post_bounds(instance);
            b.ex_post_monotone(instance);
            b.payment_rule(instance, false, p);
        }
        ProgramKind::RrmPseudo | ProgramKind::RrmLb => {
            b.ex_post_vars(instance, x);
            for v in 0..np {
                for i in 0..n {
                    let l = instance.type_index(v, i);
                    let c = if kind == ProgramKind::RrmPseudo {
                        instance.bidder(i).value(l)
                    } else {
                        vv.phi_plus(i, l)
                    };
                    b.objective.push(format!("{}*sqrt({}*{})", instance.prob(v), c, x(i, v)));
                }
            }
            b.ex_post_feasibility(instance);
            b.ex_post_bounds(instance);
            b.ex_post_monotone(instance);
        }
        ProgramKind::BrmXpNaive => {
            b.ex_post_vars(instance, x);
            b.ex_post_vars(instance, p);
            b.interim_vars(instance, xhat);
            b.interim_vars(instance, phat);
            b.interim_vars(instance, qhat);
            for i in 0..n {
                for k in 0..instance.num_types(i) {
                    b.objective.push(format!("{}*{}", instance.bidder(i).pmf(k), phat(i, k)));
                }
            }
            b.ex_post_feasibility(instance);
            b.ex_post_bounds(instance);
            b.relate_interim(instance, "xhat", xhat, &x);
            b.relate_interim(instance, "phat", phat, &p);
            b.relate_interim(instance, "qhat", qhat, &|i, v| format!("{}^2", p(i, v)));
            b.interim_monotone(instance);
            for i in 0..n {
                let types = &instance.bidder(i).types;
                for l in 0..instance.num_types(i) {
                    let mut e: Expr = vec![(-types.value(l), xhat(i, l))];
                    for j in 0..l {
                        e.push((types.gap(j), xhat(i, j)));
                    }
                    let lhs = format!("{} {}", qhat(i, l), signed_tail(&e));
                    b.con(format!("pay[{i}][{l}]"), lhs, "==", 0.0);
                }
            }
        }
        ProgramKind::BrmXp | ProgramKind::BrmPseudo => {
            b.ex_post_vars(instance, x);
            b.interim_vars(instance, xhat);
            if kind == ProgramKind::BrmXp {
                b.interim_vars(instance, h);
            }
            for i in 0..n {
                for k in 0..instance.num_types(i) {
                    let f = instance.bidder(i).pmf(k);
                    b.objective.push(if kind == ProgramKind::BrmXp {
                        format!("{f}*{}", h(i, k))
                    } else {
                        format!("{f}*sqrt({}*{})", instance.bidder(i).value(k), xhat(i, k))
                    });
                }
            }
            b.ex_post_feasibility(instance);
            b.ex_post_bounds(instance);
            b.relate_interim(instance, "xhat", xhat, &x);
            b.interim_monotone(instance);
            if kind == ProgramKind::BrmXp {
                b.payment_rule(instance, true, h);
            }
        }
        ProgramKind::BrmXa => {
            b.interim_vars(instance, xhat);
            b.interim_vars(instance, h);
            for i in 0..n {
                for k in 0..instance.num_types(i) {
                    b.objective.push(format!("{}*{}", instance.bidder(i).pmf(k), h(i, k)));
                }
            }
            b.ex_ante_feasibility(instance);
            b.interim_lower(instance);
            b.interim_upper(instance);
            b.interim_monotone(instance);
            b.payment_rule(instance, true, h);
        }
        ProgramKind::BrmXaRel | ProgramKind::BrmXaRelTrunc => {
            b.interim_vars(instance, xhat);
            for i in 0..n {
                for k in 0..instance.num_types(i) {
                    b.objective.push(format!(
                        "{}*sqrt({}*{})",
                        instance.bidder(i).pmf(k),
                        vv.phi_plus(i, k),
                        xhat(i, k)
                    ));
                }
            }
            b.ex_ante_feasibility(instance);
            b.interim_lower(instance);
            if kind == ProgramKind::BrmXaRelTrunc {
                b.interim_upper(instance);
            }
            b.interim_monotone(instance);
        }
    }
    b.finish()
}

/// (variables, constraints) in an exported program.
pub fn count_lines(text: &str) -> (usize, usize) {
    let vars = text.lines().filter(|l| l.starts_with("VAR ")).count();
    let cons = text.lines().filter(|l| l.starts_with("CONSTRAINT ")).count();
    (vars, cons)
}
