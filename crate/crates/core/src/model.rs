//! Instances, type profiles and the allocation / payment tables.
//!
//! Profiles are addressed by a flat index in lexicographic order with
//! bidder 0 as the slowest-moving digit. Every table keyed by profile is
//! stored as `[bidder][profile]`; tables keyed by type as `[bidder][type]`.

use serde::{Deserialize, Serialize};

use crate::error::{AuctionError, Result};

/// Absolute tolerance on the pmf total.
const PMF_SUM_TOL: f64 = 1e-12;

/// Sorted support of one bidder's value distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeSpace {
    values: Vec<f64>,
}

impl TypeSpace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(AuctionError::InvalidTypeSpace("no types".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(AuctionError::InvalidTypeSpace(format!(
                "type {v} is negative or not finite"
            )));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AuctionError::InvalidTypeSpace(
                "types must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// z_k for k in 0..K, and the sentinel z_{K} = z_{K-1} past the end.
    pub fn value(&self, k: usize) -> f64 {
        self.values[k.min(self.values.len() - 1)]
    }

    /// z_{k+1} - z_k, zero at the top type.
    pub fn gap(&self, k: usize) -> f64 {
        self.value(k + 1) - self.value(k)
    }

    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Probability mass function with its running cdf.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    pmf: Vec<f64>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(AuctionError::InvalidDistribution("empty pmf".into()));
        }
        if let Some(f) = pmf.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(AuctionError::InvalidDistribution(format!(
                "mass {f} outside (0, 1]"
            )));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(AuctionError::InvalidDistribution(format!(
                "masses sum to {total}"
            )));
        }
        let cdf = pmf
            .iter()
            .scan(0.0, |acc, f| {
                *acc += f;
                Some(*acc)
            })
            .collect();
        Ok(Self { pmf, cdf })
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }
}

impl<'de> Deserialize<'de> for DiscreteDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            pmf: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        DiscreteDistribution::new(raw.pmf).map_err(serde::de::Error::custom)
    }
}

/// One bidder: types plus their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bidder {
    pub types: TypeSpace,
    pub dist: DiscreteDistribution,
}

impl Bidder {
    pub fn new(types: TypeSpace, dist: DiscreteDistribution) -> Result<Self> {
        if types.len() != dist.len() {
            return Err(AuctionError::InvalidDistribution(format!(
                "{} types but {} masses",
                types.len(),
                dist.len()
            )));
        }
        Ok(Self { types, dist })
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn value(&self, k: usize) -> f64 {
        self.types.value(k)
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.dist.pmf[k]
    }
}

/// Independent bidders and the derived profile indexing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionInstance {
    bidders: Vec<Bidder>,
    #[serde(skip)]
    strides: Vec<usize>,
    #[serde(skip)]
    num_profiles: usize,
}

impl<'de> Deserialize<'de> for AuctionInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            bidders: Vec<Bidder>,
        }
        let raw = Raw::deserialize(d)?;
        AuctionInstance::new(raw.bidders).map_err(serde::de::Error::custom)
    }
}

impl AuctionInstance {
    pub fn new(bidders: Vec<Bidder>) -> Result<Self> {
        if bidders.is_empty() {
            return Err(AuctionError::InvalidConfig("need at least one bidder".into()));
        }
        let n = bidders.len();
        let mut strides = vec![1usize; n];
        let mut size = 1usize;
        for i in (0..n).rev() {
            strides[i] = size;
            size = size
                .checked_mul(bidders[i].num_types())
                .ok_or_else(|| AuctionError::InvalidConfig("profile space overflows".into()))?;
        }
        Ok(Self {
            bidders,
            strides,
            num_profiles: size,
        })
    }

    /// `n` copies of the same bidder.
    pub fn symmetric(n: usize, types: TypeSpace, dist: DiscreteDistribution) -> Result<Self> {
        let bidder = Bidder::new(types, dist)?;
        Self::new(vec![bidder; n])
    }

    pub fn bidders(&self) -> &[Bidder] {
        &self.bidders
    }

    pub fn bidder(&self, i: usize) -> &Bidder {
        &self.bidders[i]
    }

    pub fn num_bidders(&self) -> usize {
        self.bidders.len()
    }

    pub fn num_profiles(&self) -> usize {
        self.num_profiles
    }

    pub fn num_types(&self, i: usize) -> usize {
        self.bidders[i].num_types()
    }

    /// Step of bidder `i`'s digit in the flat profile index.
    pub fn stride(&self, i: usize) -> usize {
        self.strides[i]
    }

    pub fn max_value(&self) -> f64 {
        self.bidders
            .iter()
            .map(|b| b.types.max_value())
            .fold(0.0, f64::max)
    }

    /// Bidder `i`'s type index inside profile `v`.
    pub fn type_index(&self, v: usize, i: usize) -> usize {
        (v / self.strides[i]) % self.bidders[i].num_types()
    }

    /// Profile `v` with bidder `i` switched to type `k`.
    pub fn with_type(&self, v: usize, i: usize, k: usize) -> usize {
        let cur = self.type_index(v, i);
        v + k * self.strides[i] - cur * self.strides[i]
    }

    pub fn profile(&self, v: usize) -> TypeProfile {
        TypeProfile {
            indices: (0..self.num_bidders()).map(|i| self.type_index(v, i)).collect(),
        }
    }

    pub fn flat_index(&self, profile: &TypeProfile) -> usize {
        profile
            .indices
            .iter()
            .zip(&self.strides)
            .map(|(k, s)| k * s)
            .sum()
    }

    /// Joint probability f(v).
    pub fn prob(&self, v: usize) -> f64 {
        (0..self.num_bidders())
            .map(|i| self.bidders[i].pmf(self.type_index(v, i)))
            .product()
    }

    /// Probability of the other bidders' types in `v`, i.e. f_{-i}(v_{-i}).
    pub fn prob_others(&self, v: usize, i: usize) -> f64 {
        (0..self.num_bidders())
            .filter(|&j| j != i)
            .map(|j| self.bidders[j].pmf(self.type_index(v, j)))
            .product()
    }

    /// Profiles with bidder `i` at its lowest type: one per v_{-i}, in order.
    /// Bidder `i`'s chain over its own types starts at each of these.
    pub fn chain_bases(&self, i: usize) -> Vec<usize> {
        (0..self.num_profiles)
            .filter(|&v| self.type_index(v, i) == 0)
            .collect()
    }

    /// Number of free ex-post allocation variables, n * prod K_i.
    pub fn num_alloc_vars(&self) -> usize {
        self.num_bidders() * self.num_profiles
    }

    /// All profiles in lexicographic order with their joint probability.
    pub fn profiles(&self) -> impl Iterator<Item = (TypeProfile, f64)> + '_ {
        (0..self.num_profiles).map(move |v| (self.profile(v), self.prob(v)))
    }

    pub(crate) fn check_profile_table(&self, table: &[Vec<f64>], what: &str) -> Result<()> {
        let ok = table.len() == self.num_bidders()
            && table.iter().all(|row| row.len() == self.num_profiles);
        if ok {
            Ok(())
        } else {
            Err(AuctionError::ShapeMismatch(format!(
                "{what} must be {} x {}",
                self.num_bidders(),
                self.num_profiles
            )))
        }
    }

    pub(crate) fn check_type_table(&self, table: &[Vec<f64>], what: &str) -> Result<()> {
        let ok = table.len() == self.num_bidders()
            && table
                .iter()
                .enumerate()
                .all(|(i, row)| row.len() == self.num_types(i));
        if ok {
            Ok(())
        } else {
            Err(AuctionError::ShapeMismatch(format!(
                "{what} must have one row per bidder and one entry per type"
            )))
        }
    }
}

/// One type index per bidder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeProfile {
    pub indices: Vec<usize>,
}

/// x_i(v) for every bidder and profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExPostAllocation {
    pub table: Vec<Vec<f64>>,
}

impl ExPostAllocation {
    pub fn zeros(instance: &AuctionInstance) -> Self {
        Self {
            table: vec![vec![0.0; instance.num_profiles()]; instance.num_bidders()],
        }
    }

    /// Builds the table from one allocation vector per profile.
    pub fn from_profiles(instance: &AuctionInstance, per_profile: Vec<Vec<f64>>) -> Self {
        let mut out = Self::zeros(instance);
        for (v, row) in per_profile.into_iter().enumerate() {
            for (i, x) in row.into_iter().enumerate() {
                out.table[i][v] = x;
            }
        }
        out
    }

    pub fn get(&self, i: usize, v: usize) -> f64 {
        self.table[i][v]
    }
}

/// x̂_i(z_k) for every bidder and type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InterimAllocation {
    pub table: Vec<Vec<f64>>,
}

/// How a payment p maps to the disutility the bidder perceives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceivedPayment {
    /// q = p^2.
    #[default]
    Quadratic,
    /// q = p, the classical quasi-linear model.
    Linear,
}

impl PerceivedPayment {
    pub fn perceive(self, p: f64) -> f64 {
        match self {
            Self::Quadratic => p * p,
            Self::Linear => p,
        }
    }

    pub fn invert(self, q: f64) -> f64 {
        match self {
            Self::Quadratic => q.sqrt(),
            Self::Linear => q,
        }
    }
}

/// p_i(v) for every bidder and profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustPaymentRule {
    pub table: Vec<Vec<f64>>,
    #[serde(default)]
    pub perceived: PerceivedPayment,
}

/// h_i(z_k) for every bidder and type; the perceived payment is h^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InterimPaymentRule {
    pub table: Vec<Vec<f64>>,
}

/// Two-point distribution {low, high} with P(low) = p_low.
pub fn make_categorical(
    low: f64,
    high: f64,
    p_low: f64,
) -> Result<(TypeSpace, DiscreteDistribution)> {
    if !(low >= 0.0 && low < high) {
        return Err(AuctionError::InvalidTypeSpace(format!(
            "need 0 <= low < high, got {low}, {high}"
        )));
    }
    if !(p_low > 0.0 && p_low < 1.0) {
        return Err(AuctionError::InvalidDistribution(format!(
            "p_low = {p_low} outside (0, 1)"
        )));
    }
    Ok((
        TypeSpace::new(vec![low, high])?,
        DiscreteDistribution::new(vec![p_low, 1.0 - p_low])?,
    ))
}

/// `points` equally spaced values on [0, 1] with equal mass.
pub fn make_uniform(points: usize) -> Result<(TypeSpace, DiscreteDistribution)> {
    if points == 0 {
        return Err(AuctionError::InvalidTypeSpace("need at least one point".into()));
    }
    let values = if points == 1 {
        vec![0.0]
    } else {
        (0..points).map(|j| j as f64 / (points - 1) as f64).collect()
    };
    let mass = 1.0 / points as f64;
    Ok((
        TypeSpace::new(values)?,
        DiscreteDistribution::new(vec![mass; points])?,
    ))
}

/// Binomial(trials, p) on {0, ..., trials}.
pub fn make_binomial(trials: u32, p: f64) -> Result<(TypeSpace, DiscreteDistribution)> {
    if trials == 0 {
        return Err(AuctionError::InvalidTypeSpace("need at least one trial".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(AuctionError::InvalidDistribution(format!("p = {p} outside (0, 1)")));
    }
    let t = trials as i32;
    let mut coeff = 1.0f64;
    let mut pmf = Vec::with_capacity(trials as usize + 1);
    for k in 0..=t {
        if k > 0 {
            coeff = coeff * (t - k + 1) as f64 / k as f64;
        }
        pmf.push(coeff * p.powi(k) * (1.0 - p).powi(t - k));
    }
    let values = (0..=trials).map(f64::from).collect();
    Ok((TypeSpace::new(values)?, DiscreteDistribution::new(pmf)?))
}
