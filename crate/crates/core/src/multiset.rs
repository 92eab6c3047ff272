//! Multisets with real multiplicities and the Jaccard, interiority and
//! coincidence similarity indices.
//!
//! A [`FeatureVector`] is a multiset over the index set `0..N`: entry `i` is the
//! multiplicity of element `i`. Two vectors are compared element-wise:
//!
//! - Jaccard: `Σ sᵢ·min(|xᵢ|,|yᵢ|) / Σ max(|xᵢ|,|yᵢ|)`
//! - interiority: `Σ min(|xᵢ|,|yᵢ|) / min(Σ|xᵢ|, Σ|yᵢ|)`
//! - coincidence: `sign(J)·|J|^D · I`
//!
//! where `sᵢ = sign(xᵢ)·sign(yᵢ)` with `sign(0) = 0`. On non-negative inputs
//! these reduce to the plain min/max forms, so both [`SimilarityMode`]s share
//! one evaluation path; the mode only decides which inputs are legal.

use std::collections::BTreeMap;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ExactSum;

/// Ordered real multiplicities. Non-empty and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Only non-negative multiplicities are accepted.
    #[default]
    NonNegative,
    /// Real multiplicities; element contributions carry the product of signs.
    Signed,
}

/// Strictness exponent `D` and input mode shared by all three indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    d: f64,
    mode: SimilarityMode,
}

impl SimilarityConfig {
    pub fn new(d: f64, mode: SimilarityMode) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidExponent(d));
        }
        Ok(Self { d, mode })
    }

    pub fn non_negative(d: f64) -> Result<Self> {
        Self::new(d, SimilarityMode::NonNegative)
    }

    pub fn signed(d: f64) -> Result<Self> {
        Self::new(d, SimilarityMode::Signed)
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn mode(&self) -> SimilarityMode {
        self.mode
    }
}

/// The five sums every index is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTerms {
    /// `Σ sᵢ·min(|xᵢ|,|yᵢ|)`
    pub signed_min: f64,
    /// `Σ min(|xᵢ|,|yᵢ|)`
    pub abs_min: f64,
    /// `Σ max(|xᵢ|,|yᵢ|)`
    pub abs_max: f64,
    pub abs_x: f64,
    pub abs_y: f64,
}

impl SimilarityTerms {
    pub fn compute(x: &[f64], y: &[f64], mode: SimilarityMode) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if mode == SimilarityMode::NonNegative {
            for v in [x, y] {
                if let Some((index, &value)) = v.iter().enumerate().find(|(_, &v)| v < 0.0) {
                    return Err(Error::NegativeEntryInNonNegativeMode { index, value });
                }
            }
        }

        let mut signed_min = ExactSum::new();
        let mut abs_min = ExactSum::new();
        let mut abs_max = ExactSum::new();
        let mut abs_x = ExactSum::new();
        let mut abs_y = ExactSum::new();
        for (&a, &b) in x.iter().zip(y) {
            let (ma, mb) = (a.abs(), b.abs());
            let lo = ma.min(mb);
            abs_min.add(lo);
            abs_max.add(ma.max(mb));
            abs_x.add(ma);
            abs_y.add(mb);
            let s = sign(a) * sign(b);
            if s != 0.0 {
                signed_min.add(s * lo);
            }
        }
        let terms = Self {
            signed_min: signed_min.value(),
            abs_min: abs_min.value(),
            abs_max: abs_max.value(),
            abs_x: abs_x.value(),
            abs_y: abs_y.value(),
        };
        if terms.abs_max == 0.0 {
            return Err(Error::AllZeroOperands);
        }
        Ok(terms)
    }

    pub fn jaccard(&self) -> f64 {
        self.signed_min / self.abs_max
    }

    pub fn interiority(&self) -> f64 {
        let denom = self.abs_x.min(self.abs_y);
        if denom == 0.0 {
            // One operand is all-zero: nothing is shared.
            0.0
        } else {
            self.abs_min / denom
        }
    }

    pub fn coincidence(&self, d: f64) -> f64 {
        pow_signed(self.jaccard(), d) * self.interiority()
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `sign(j)·|j|^d`; agrees with `j^d` for odd integer `d` and stays real otherwise.
pub fn pow_signed(j: f64, d: f64) -> f64 {
    if j == 0.0 {
        0.0
    } else {
        j.signum() * j.abs().powf(d)
    }
}

pub fn jaccard(x: &FeatureVector, y: &FeatureVector, cfg: &SimilarityConfig) -> Result<f64> {
    Ok(SimilarityTerms::compute(x, y, cfg.mode)?.jaccard())
}

pub fn interiority(x: &FeatureVector, y: &FeatureVector, cfg: &SimilarityConfig) -> Result<f64> {
    Ok(SimilarityTerms::compute(x, y, cfg.mode)?.interiority())
}

pub fn coincidence(x: &FeatureVector, y: &FeatureVector, cfg: &SimilarityConfig) -> Result<f64> {
    coincidence_slices(x, y, cfg)
}

pub(crate) fn coincidence_slices(x: &[f64], y: &[f64], cfg: &SimilarityConfig) -> Result<f64> {
    Ok(SimilarityTerms::compute(x, y, cfg.mode)?.coincidence(cfg.d))
}

/// Multiset with non-negative integer multiplicities over labels of type `T`.
///
/// Labels with multiplicity zero are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerMultiset<T: Ord> {
    tuples: BTreeMap<T, u64>,
}

impl<T: Ord + Clone> IntegerMultiset<T> {
    pub fn new() -> Self {
        Self {
            tuples: BTreeMap::new(),
        }
    }

    pub fn from_counts<I: IntoIterator<Item = (T, u64)>>(counts: I) -> Self {
        let mut ms = Self::new();
        for (label, m) in counts {
            ms.insert(label, m);
        }
        ms
    }

    /// Adds `m` copies of `label`.
    pub fn insert(&mut self, label: T, m: u64) {
        if m > 0 {
            *self.tuples.entry(label).or_insert(0) += m;
        }
    }

    pub fn multiplicity(&self, label: &T) -> u64 {
        self.tuples.get(label).copied().unwrap_or(0)
    }

    pub fn support(&self) -> impl Iterator<Item = &T> {
        self.tuples.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, u64)> {
        self.tuples.iter().map(|(k, &m)| (k, m))
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Sum of multiplicities.
    pub fn cardinality(&self) -> u64 {
        self.tuples.values().sum()
    }

    /// Support is the union of supports; each multiplicity is the larger one.
    pub fn union(&self, other: &Self) -> Self {
        let mut out = self.tuples.clone();
        for (k, &m) in &other.tuples {
            let slot = out.entry(k.clone()).or_insert(0);
            *slot = (*slot).max(m);
        }
        Self { tuples: out }
    }

    /// Support is the shared labels; each multiplicity is the smaller one.
    pub fn intersection(&self, other: &Self) -> Self {
        let tuples = self
            .tuples
            .iter()
            .filter_map(|(k, &m)| other.tuples.get(k).map(|&n| (k.clone(), m.min(n))))
            .collect();
        Self { tuples }
    }

    /// Multiplicities over `labels`, in that order, as a real vector.
    pub fn to_multiplicities(&self, labels: &[T]) -> Vec<f64> {
        labels.iter().map(|l| self.multiplicity(l) as f64).collect()
    }
}

impl<T: Ord + Clone> Default for IntegerMultiset<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Ord + Clone> FromIterator<T> for IntegerMultiset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut ms = Self::new();
        for label in iter {
            ms.insert(label, 1);
        }
        ms
    }
}

pub fn ms_union<T: Ord + Clone>(x: &IntegerMultiset<T>, y: &IntegerMultiset<T>) -> IntegerMultiset<T> {
    x.union(y)
}

pub fn ms_intersection<T: Ord + Clone>(
    x: &IntegerMultiset<T>,
    y: &IntegerMultiset<T>,
) -> IntegerMultiset<T> {
    x.intersection(y)
}

pub fn ms_cardinality<T: Ord + Clone>(x: &IntegerMultiset<T>) -> u64 {
    x.cardinality()
}
