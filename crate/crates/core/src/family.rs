//! Slope selectors `n_t(k) = ⌊t·k⌋` and their pairwise almost-disjointness.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dyadic::{ceil_int, fmt_q, serde_q, Rational};
use crate::error::{Error, Result};

/// Selector following the line through the origin with rational slope `t ∈ (0, 1)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SlopeJson", into = "SlopeJson")]
pub struct SlopeSelector {
    t: Rational,
}

#[derive(Serialize, Deserialize)]
struct SlopeJson {
    #[serde(with = "serde_q")]
    t: Rational,
}

impl TryFrom<SlopeJson> for SlopeSelector {
    type Error = Error;
    fn try_from(j: SlopeJson) -> Result<Self> {
        slope_selector(j.t)
    }
}

impl From<SlopeSelector> for SlopeJson {
    fn from(s: SlopeSelector) -> Self {
        SlopeJson { t: s.t }
    }
}

pub fn slope_selector(t: Rational) -> Result<SlopeSelector> {
    if !t.is_positive() || t >= Rational::one() {
        return Err(Error::OutOfRange {
            value: fmt_q(&t),
            range: "(0, 1)",
        });
    }
    Ok(SlopeSelector { t })
}

impl SlopeSelector {
    pub fn t(&self) -> &Rational {
        &self.t
    }

    /// `⌊t·k⌋`.
    pub fn at(&self, k: usize) -> usize {
        let n = self.t.numer() * BigInt::from(k);
        n.div_floor(self.t.denom())
            .to_usize()
            .expect("floor(t k) <= k fits usize")
    }
}

/// `⌈1/|s − t|⌉`: from this level on the two selectors never agree, since
/// `⌊sk⌋ = ⌊tk⌋` forces `|s − t|·k < 1`.
pub fn collision_bound(s: &Rational, t: &Rational) -> Result<usize> {
    let gap = (s - t).abs();
    if gap.is_zero() {
        return Err(Error::DuplicateSlope(fmt_q(s)));
    }
    Ok(ceil_int(&gap.recip()).to_usize().unwrap_or(usize::MAX))
}

#[derive(Clone, Debug, Serialize)]
pub struct PairReport {
    #[serde(with = "serde_q")]
    pub s: Rational,
    #[serde(with = "serde_q")]
    pub t: Rational,
    pub bound: usize,
    /// Levels `< depth` where the selectors agree.
    pub collisions: Vec<usize>,
    /// False when `bound ≥ depth`, so the sampled range never reaches it.
    pub bound_reached: bool,
    /// Collisions at or beyond `bound`; must be empty.
    pub violations: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdReport {
    pub depth: usize,
    pub pairs: Vec<PairReport>,
}

impl AdReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(|p| p.violations.is_empty())
    }
}

/// Enumerates collisions of every pair of slopes on levels `0..depth`.
pub fn verify_ad(ts: &[Rational], depth: usize) -> Result<AdReport> {
    let sels = ts
        .iter()
        .cloned()
        .map(slope_selector)
        .collect::<Result<Vec<_>>>()?;
    for (a, s) in ts.iter().enumerate() {
        if ts[a + 1..].contains(s) {
            return Err(Error::DuplicateSlope(fmt_q(s)));
        }
    }
    let mut pairs = Vec::new();
    for a in 0..sels.len() {
        for b in a + 1..sels.len() {
            let bound = collision_bound(sels[a].t(), sels[b].t())?;
            let collisions: Vec<usize> = (0..depth)
                .filter(|&k| sels[a].at(k) == sels[b].at(k))
                .collect();
            let violations = collisions.iter().copied().filter(|&k| k >= bound).collect();
            pairs.push(PairReport {
                s: sels[a].t().clone(),
                t: sels[b].t().clone(),
                bound,
                collisions,
                bound_reached: bound < depth,
                violations,
            });
        }
    }
    Ok(AdReport { depth, pairs })
}

/// Largest pairwise collision bound among `ts` (0 for fewer than two slopes).
pub fn max_collision_bound(ts: &[Rational]) -> Result<usize> {
    let mut l = 0;
    for a in 0..ts.len() {
        for b in a + 1..ts.len() {
            l = l.max(collision_bound(&ts[a], &ts[b])?);
        }
    }
    Ok(l)
}
