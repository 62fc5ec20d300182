//! Disjoint closed sets `A(σ, i) ⊆ I_σ` of positive measure.
//!
//! Layout: split `[0, 1]` into cells of length `2^-(kmax+1)`. Every key at
//! depth `d` owns one slot inside each cell of `I_σ`; the slot position depends
//! only on `(d, i)`. Slots of different depths occupy disjoint bands of the
//! cell, and any given cell lies in exactly one interval per depth, so two
//! distinct keys never share a slot. Inside its slot a key lays
//! `pieces_per_set` closed intervals filling half the slot.
//!
//! The per-cell fill of a depth-`d` key is `budget · 2^d` of the cell, which
//! with the standard budget totals `Σ_d 4^-(d+2) < 1/12` per cell. Hence any
//! dyadic interval of depth `≤ kmax` keeps at least `11/12` of its length free.
//!
//! Pieces are stored as arithmetic runs `(start, len, pitch, count)` so that a
//! depth-40 carving with `2^41` pieces stays `O(pieces_per_set)` in size.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic::{
    ceil_int, floor_int, fmt_q, int, interval_of, parse_q, pow2, rat, serde_q, Address, NodeKey,
    Rational,
};
use crate::error::{Error, Result};

/// Largest piece list [`CarvedSet::pieces`] will expand.
pub const MAX_EXPANDED_PIECES: u64 = 1 << 16;

/// How much measure each key receives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetRule {
    /// `2^-d · 4^-(d+2) / (d+1)`.
    #[default]
    Standard,
    /// `2^-d`, i.e. each set asks for its whole interval. Only useful to make
    /// the audit fail.
    WholeInterval,
}

impl BudgetRule {
    pub fn budget(self, depth: usize) -> Rational {
        let d = depth as i64;
        match self {
            BudgetRule::Standard => pow2(-d) * pow2(-2 * (d + 2)) / int(d + 1),
            BudgetRule::WholeInterval => pow2(-d),
        }
    }

    /// Fraction of a cell filled by one key at this depth.
    fn fill(self, depth: usize) -> Rational {
        self.budget(depth) * pow2(depth as i64)
    }

    /// Start of the depth band, as a fraction of a cell.
    fn band_offset(self, depth: usize) -> Rational {
        let base = rat(1, 4);
        match self {
            BudgetRule::Standard => base + (int(1) - pow2(-2 * depth as i64)) / int(6),
            _ => (0..depth).fold(base, |acc, d| acc + int(2 * (d as i64 + 1)) * self.fill(d)),
        }
    }
}

/// Default per-key measure `2^-d · 4^-(d+2) / (d+1)` with `d = |σ|`.
pub fn budget(key: &NodeKey) -> Rational {
    BudgetRule::Standard.budget(key.depth())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CarvingConfig {
    pub kmax: usize,
    #[serde(default = "one")]
    pub pieces_per_set: usize,
    #[serde(default)]
    pub budget: BudgetRule,
}

fn one() -> usize {
    1
}

impl CarvingConfig {
    pub fn new(kmax: usize, pieces_per_set: usize) -> Result<Self> {
        if pieces_per_set == 0 {
            return Err(Error::OutOfRange {
                value: "0".into(),
                range: "pieces_per_set >= 1",
            });
        }
        Ok(Self {
            kmax,
            pieces_per_set,
            budget: BudgetRule::Standard,
        })
    }

    pub fn with_budget(mut self, budget: BudgetRule) -> Self {
        self.budget = budget;
        self
    }

    /// Cell length `2^-(kmax+1)`, a strict upper bound on piece length.
    pub fn cell(&self) -> Rational {
        pow2(-(self.kmax as i64 + 1))
    }
}

/// `count` closed intervals `[start + n·pitch, start + n·pitch + len]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PieceRun {
    pub start: Rational,
    pub len: Rational,
    pub pitch: Rational,
    pub count: BigUint,
}

impl PieceRun {
    pub fn single(lo: Rational, hi: Rational) -> Self {
        let len = &hi - &lo;
        Self {
            start: lo,
            pitch: len.clone(),
            len,
            count: BigUint::one(),
        }
    }

    fn is_single(&self) -> bool {
        self.count.is_one()
    }

    fn count_q(&self) -> Rational {
        Rational::from_integer(BigInt::from(self.count.clone()))
    }

    pub fn piece(&self, n: &BigUint) -> (Rational, Rational) {
        let lo = &self.start + &self.pitch * Rational::from_integer(BigInt::from(n.clone()));
        let hi = &lo + &self.len;
        (lo, hi)
    }

    pub fn first_lo(&self) -> &Rational {
        &self.start
    }

    pub fn last_hi(&self) -> Rational {
        self.piece(&(&self.count - 1u32)).1
    }

    pub fn measure(&self) -> Rational {
        &self.len * self.count_q()
    }

    /// Exact `λ(run ∩ [0, t])`.
    pub fn measure_below(&self, t: &Rational) -> Rational {
        if t <= &self.start || self.count.is_zero() {
            return Rational::zero();
        }
        let rel = t - &self.start;
        if self.is_single() {
            return rel.min(self.len.clone());
        }
        let n = floor_int(&(&rel / &self.pitch));
        let count = BigInt::from(self.count.clone());
        if n >= count {
            return self.measure();
        }
        let nq = Rational::from_integer(n);
        let partial = (rel - &self.pitch * &nq).min(self.len.clone());
        &self.len * nq + partial
    }

    /// Index range `[lo, hi]` of pieces meeting the closed interval `[x, y]`.
    fn hits(&self, x: &Rational, y: &Rational) -> Option<(BigInt, BigInt)> {
        let last = BigInt::from(self.count.clone()) - 1;
        let (lo, hi) = if self.is_single() {
            (BigInt::zero(), BigInt::zero())
        } else {
            (
                ceil_int(&((x - &self.start - &self.len) / &self.pitch)).max(BigInt::zero()),
                floor_int(&((y - &self.start) / &self.pitch)).min(last),
            )
        };
        if lo > hi {
            return None;
        }
        // confirm the endpoint pieces really meet [x, y] (single pieces skip the division)
        let (plo, _) = self.piece(&lo.to_biguint()?);
        let (_, phi) = self.piece(&hi.to_biguint()?);
        (plo <= *y && phi >= *x).then_some((lo, hi))
    }

    /// True iff some piece of `self` shares a point with some piece of `other`.
    pub fn intersects(&self, other: &PieceRun) -> bool {
        if self.count.is_zero() || other.count.is_zero() {
            return false;
        }
        if self.is_single() {
            let (x, y) = self.piece(&BigUint::zero());
            return other.hits(&x, &y).is_some();
        }
        if other.is_single() {
            return other.intersects(self);
        }
        if self.pitch == other.pitch {
            // pieces a, b meet iff Δ + (b-a)·p ∈ [-len_b, len_a]
            let p = &self.pitch;
            let delta = &other.start - &self.start;
            let m_lo = ceil_int(&((-&other.len - &delta) / p));
            let m_hi = floor_int(&((&self.len - &delta) / p));
            let n1 = BigInt::from(self.count.clone());
            let n2 = BigInt::from(other.count.clone());
            let mut m = m_lo;
            while m <= m_hi {
                let a_lo = BigInt::zero().max(-&m);
                let a_hi = (&n1).min(&(&n2 - &m)).clone();
                if a_lo < a_hi {
                    return true;
                }
                m += 1;
            }
            return false;
        }
        let (small, big) = if self.count <= other.count {
            (self, other)
        } else {
            (other, self)
        };
        let n = small
            .count
            .to_u64()
            .filter(|&n| n <= MAX_EXPANDED_PIECES * 64)
            .expect("run too long for piecewise intersection");
        (0..n).any(|k| {
            let (x, y) = small.piece(&BigUint::from(k));
            big.hits(&x, &y).is_some()
        })
    }
}

/// Finite union of disjoint closed rational intervals realizing `A(σ, i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CarvedSet {
    pub key: NodeKey,
    pub runs: Vec<PieceRun>,
    pub measure: Rational,
}

impl CarvedSet {
    /// Set made of explicitly listed pieces.
    pub fn from_pieces(key: NodeKey, pieces: Vec<(Rational, Rational)>) -> Result<Self> {
        for (lo, hi) in &pieces {
            if lo > hi {
                return Err(Error::InvalidInterval {
                    lo: fmt_q(lo),
                    hi: fmt_q(hi),
                });
            }
        }
        let runs: Vec<_> = pieces
            .into_iter()
            .map(|(lo, hi)| PieceRun::single(lo, hi))
            .collect();
        let measure = runs.iter().map(PieceRun::measure).sum();
        Ok(Self { key, runs, measure })
    }

    pub fn piece_count(&self) -> BigUint {
        self.runs.iter().map(|r| r.count.clone()).sum()
    }

    /// Pieces sorted by left endpoint, or `None` if there are more than `limit`.
    pub fn pieces(&self, limit: u64) -> Option<Vec<(Rational, Rational)>> {
        if self.piece_count() > BigUint::from(limit) {
            return None;
        }
        let mut out: Vec<_> = self
            .runs
            .iter()
            .flat_map(|r| {
                let n = r.count.to_u64().unwrap_or(0);
                (0..n).map(move |k| r.piece(&BigUint::from(k)))
            })
            .collect();
        out.sort();
        Some(out)
    }

    pub fn max_piece_len(&self) -> Rational {
        self.runs
            .iter()
            .map(|r| r.len.clone())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Exact `λ(A ∩ [0, t])`.
    pub fn measure_below(&self, t: &Rational) -> Result<Rational> {
        check_unit(t)?;
        Ok(self.runs.iter().map(|r| r.measure_below(t)).sum())
    }

    /// Exact `λ(A ∩ [a, b])` for `a ≤ b` in `[0, 1]`.
    pub fn measure_between(&self, a: &Rational, b: &Rational) -> Result<Rational> {
        Ok(self.measure_below(b)? - self.measure_below(a)?)
    }

    pub fn intersects(&self, other: &CarvedSet) -> bool {
        self.runs
            .iter()
            .any(|r| other.runs.iter().any(|s| r.intersects(s)))
    }

    /// Pieces are nondegenerate, separated by gaps, and no two runs touch.
    pub fn is_internally_disjoint(&self) -> bool {
        let runs_ok = self
            .runs
            .iter()
            .all(|r| r.len.is_positive() && (r.is_single() || r.len < r.pitch));
        let pairs_ok = self.runs.iter().enumerate().all(|(n, r)| {
            self.runs[n + 1..].iter().all(|s| !r.intersects(s))
        });
        runs_ok && pairs_ok
    }
}

fn check_unit(t: &Rational) -> Result<()> {
    if t.is_negative() || t > &Rational::one() {
        return Err(Error::OutOfRange {
            value: fmt_q(t),
            range: "[0, 1]",
        });
    }
    Ok(())
}

pub fn measure_below(set: &CarvedSet, t: &Rational) -> Result<Rational> {
    set.measure_below(t)
}

/// Carves `A(σ, i)`; a pure function of `key` and `cfg`.
pub fn carve(key: &NodeKey, cfg: &CarvingConfig) -> Result<CarvedSet> {
    let d = key.depth();
    if d > cfg.kmax {
        return Err(Error::DepthExceeded {
            depth: d,
            kmax: cfg.kmax,
        });
    }
    if key.level_index > d {
        return Err(Error::LevelIndex {
            index: key.level_index,
            depth: d,
        });
    }
    let cell = cfg.cell();
    let m = int(cfg.pieces_per_set as i64);
    let slot = int(2) * cfg.budget.fill(d);
    let slot_start = cfg.budget.band_offset(d) + &slot * int(key.level_index as i64);
    let step = &slot / &m;
    let len = &cell * &step / int(2);
    let lo = interval_of(&key.sigma).lo;
    let count = BigUint::one() << (cfg.kmax + 1 - d);

    let runs = (0..cfg.pieces_per_set)
        .map(|j| PieceRun {
            start: &lo + &cell * (&slot_start + &step * int(j as i64)),
            len: len.clone(),
            pitch: cell.clone(),
            count: count.clone(),
        })
        .collect::<Vec<_>>();
    let measure = runs.iter().map(PieceRun::measure).sum();
    Ok(CarvedSet {
        key: key.clone(),
        runs,
        measure,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Overlap { a: NodeKey, b: NodeKey },
    InternalOverlap { key: NodeKey },
    Containment { key: NodeKey },
    Measure {
        key: NodeKey,
        #[serde(with = "serde_q")]
        expected: Rational,
        #[serde(with = "serde_q")]
        actual: Rational,
    },
    PieceCap { key: NodeKey },
    FreeMeasure {
        tau: Address,
        #[serde(with = "serde_q")]
        free: Rational,
        #[serde(with = "serde_q")]
        required: Rational,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub tau: Address,
    pub kmax: usize,
    pub sets_checked: usize,
    /// Free measure of `I_τ` itself.
    #[serde(with = "serde_q")]
    pub free_measure: Rational,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Carves every key on the prefix path of `tau` and on its sibling, then checks
/// disjointness, containment, measure, piece cap, and free measure along the path.
///
/// Descendants below each prefix contribute their budgets; this is exact as
/// long as the containment and measure checks pass.
pub fn audit_path(tau: &Address, cfg: &CarvingConfig) -> AuditReport {
    let mut violations = Vec::new();
    if tau.len() > cfg.kmax {
        violations.push(Violation::FreeMeasure {
            tau: tau.clone(),
            free: Rational::zero(),
            required: pow2(-(tau.len() as i64)) / int(2),
        });
        return AuditReport {
            tau: tau.clone(),
            kmax: cfg.kmax,
            sets_checked: 0,
            free_measure: Rational::zero(),
            violations,
        };
    }
    let mut nodes: Vec<Address> = tau.prefixes().collect();
    if let Some(parent) = tau.parent() {
        let last = *tau.bits().last().expect("non-root");
        nodes.push(parent.child(!last));
    }
    let sets: Vec<CarvedSet> = nodes
        .iter()
        .flat_map(|sigma| {
            (0..=sigma.len()).map(move |i| NodeKey {
                sigma: sigma.clone(),
                level_index: i,
            })
        })
        .map(|key| carve(&key, cfg).expect("depth checked"))
        .collect();

    let cell = cfg.cell();
    for set in &sets {
        let iv = interval_of(&set.key.sigma);
        let inside = set
            .runs
            .iter()
            .all(|r| r.first_lo() >= &iv.lo && r.last_hi() <= iv.hi);
        if !inside {
            violations.push(Violation::Containment {
                key: set.key.clone(),
            });
        }
        let expected = cfg.budget.budget(set.key.depth());
        if set.measure != expected {
            violations.push(Violation::Measure {
                key: set.key.clone(),
                expected,
                actual: set.measure.clone(),
            });
        }
        if set.max_piece_len() >= cell {
            violations.push(Violation::PieceCap {
                key: set.key.clone(),
            });
        }
        if !set.is_internally_disjoint() {
            violations.push(Violation::InternalOverlap {
                key: set.key.clone(),
            });
        }
    }

    let overlaps: Vec<_> = (0..sets.len())
        .into_par_iter()
        .flat_map_iter(|a| {
            let sets = &sets;
            (a + 1..sets.len())
                .filter(move |&b| sets[a].intersects(&sets[b]))
                .map(move |b| Violation::Overlap {
                    a: sets[a].key.clone(),
                    b: sets[b].key.clone(),
                })
        })
        .collect();
    violations.extend(overlaps);

    let mut free_tau = Rational::zero();
    for p in tau.prefixes() {
        let iv = interval_of(&p);
        let from_ancestors: Rational = sets
            .iter()
            .filter(|s| p.extends(&s.key.sigma))
            .map(|s| s.measure_between(&iv.lo, &iv.hi).expect("unit interval"))
            .sum();
        let k = p.len();
        let from_subtree: Rational = (k + 1..=cfg.kmax)
            .map(|d| pow2((d - k) as i64) * int(d as i64 + 1) * cfg.budget.budget(d))
            .sum();
        let free = iv.length() - from_ancestors - from_subtree;
        let required = iv.length() / int(2);
        if free < required {
            violations.push(Violation::FreeMeasure {
                tau: p.clone(),
                free: free.clone(),
                required,
            });
        }
        if k == tau.len() {
            free_tau = free;
        }
    }

    AuditReport {
        tau: tau.clone(),
        kmax: cfg.kmax,
        sets_checked: sets.len(),
        free_measure: free_tau,
        violations,
    }
}

#[derive(Serialize, Deserialize)]
struct RunJson {
    #[serde(with = "serde_q")]
    start: Rational,
    #[serde(with = "serde_q")]
    len: Rational,
    #[serde(with = "serde_q")]
    pitch: Rational,
    count: String,
}

#[derive(Serialize, Deserialize)]
struct CarvedSetJson {
    sigma: Address,
    i: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pieces: Option<Vec<[String; 2]>>,
    #[serde(default)]
    runs: Vec<RunJson>,
    #[serde(with = "serde_q")]
    measure: Rational,
}

impl Serialize for CarvedSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pieces = self
            .pieces(MAX_EXPANDED_PIECES)
            .map(|ps| ps.iter().map(|(a, b)| [fmt_q(a), fmt_q(b)]).collect());
        CarvedSetJson {
            sigma: self.key.sigma.clone(),
            i: self.key.level_index,
            pieces,
            runs: self
                .runs
                .iter()
                .map(|r| RunJson {
                    start: r.start.clone(),
                    len: r.len.clone(),
                    pitch: r.pitch.clone(),
                    count: r.count.to_string(),
                })
                .collect(),
            measure: self.measure.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CarvedSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = CarvedSetJson::deserialize(d)?;
        let key = NodeKey::new(j.sigma, j.i).map_err(D::Error::custom)?;
        let set = if !j.runs.is_empty() {
            let runs = j
                .runs
                .into_iter()
                .map(|r| {
                    Ok(PieceRun {
                        start: r.start,
                        len: r.len,
                        pitch: r.pitch,
                        count: r.count.parse().map_err(D::Error::custom)?,
                    })
                })
                .collect::<std::result::Result<Vec<_>, D::Error>>()?;
            let measure = runs.iter().map(PieceRun::measure).sum();
            CarvedSet { key, runs, measure }
        } else {
            let pieces = j
                .pieces
                .unwrap_or_default()
                .into_iter()
                .map(|[a, b]| Ok((parse_q(&a)?, parse_q(&b)?)))
                .collect::<Result<Vec<_>>>()
                .map_err(D::Error::custom)?;
            CarvedSet::from_pieces(key, pieces).map_err(D::Error::custom)?
        };
        if set.measure != j.measure {
            return Err(D::Error::custom("measure does not match pieces"));
        }
        Ok(set)
    }
}

/// Carves every key of depth `≤ cfg.kmax`; keyed for lookup in tests and audits.
pub fn carve_all(cfg: &CarvingConfig) -> BTreeMap<NodeKey, CarvedSet> {
    crate::dyadic::enumerate_block(0, cfg.kmax)
        .map(|k| {
            let s = carve(&k, cfg).expect("within kmax");
            (k, s)
        })
        .collect()
}
