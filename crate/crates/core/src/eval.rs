//! Exact interval integrals of basic functions in `ℓ₂`.
//!
//! The component of `∫_I f` at `(σ, i)` is `c(σ, i)·λ(A(σ,i) ∩ I)/λ(A(σ,i))`.
//! At every depth `k` the dyadic intervals fully inside `I` all get ratio 1,
//! so they are recorded as one aggregate (an index range plus the shared
//! coefficients). Only the at most two intervals straddling an endpoint need
//! carved-set measure queries. A depth-40 integral therefore touches about
//! `40·2·(selectors)` carved sets instead of `2^41`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::carving::{carve, CarvingConfig};
use crate::dyadic::{
    ceil_int, floor_int, fmt_q, int, interval_of, pow2, rat, serde_q, to_f64, Address, NodeKey,
    Rational,
};
use crate::error::{Error, Result};
use crate::stepfun::{BasicFunction, SignedSquare};

/// One explicit component: `coeff · ratio`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub coeff: SignedSquare,
    /// Carved-measure fraction, negated when the vector is.
    pub ratio: Rational,
}

impl Component {
    pub fn value(&self) -> SignedSquare {
        self.coeff.scale(&self.ratio)
    }
}

/// All depth-`level` addresses with index in `[first, first + count)`, each
/// carrying the same `entries` scaled by `ratio` (±1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelAggregate {
    pub level: usize,
    pub first: BigUint,
    pub count: BigUint,
    pub entries: Vec<(usize, SignedSquare)>,
    pub ratio: Rational,
}

impl LevelAggregate {
    fn covers(&self, sigma: &Address) -> bool {
        if sigma.len() != self.level {
            return false;
        }
        let q = sigma.index();
        q >= self.first && q < &self.first + &self.count
    }

    fn norm_sq(&self) -> Rational {
        let per: Rational = self.entries.iter().map(|(_, c)| c.square().clone()).sum();
        per * Rational::from_integer(BigInt::from(self.count.clone())) * &self.ratio * &self.ratio
    }
}

/// Sparse `∫_{[lo, hi]} f` with per-level aggregates. The aggregated and the
/// explicit keys are disjoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegralVector {
    pub lo: Rational,
    pub hi: Rational,
    pub aggregates: Vec<LevelAggregate>,
    pub components: BTreeMap<NodeKey, Component>,
}

impl IntegralVector {
    pub fn zero(lo: Rational, hi: Rational) -> Self {
        Self {
            lo,
            hi,
            aggregates: Vec::new(),
            components: BTreeMap::new(),
        }
    }

    pub fn norm_sq(&self) -> Rational {
        let agg: Rational = self.aggregates.iter().map(LevelAggregate::norm_sq).sum();
        let explicit: Rational = self
            .components
            .values()
            .map(|c| c.value().square().clone())
            .sum();
        agg + explicit
    }

    pub fn is_zero(&self) -> bool {
        self.norm_sq().is_zero()
    }

    pub fn negate(&self) -> Self {
        let mut v = self.clone();
        for a in &mut v.aggregates {
            a.ratio = -a.ratio.clone();
        }
        for c in v.components.values_mut() {
            c.ratio = -c.ratio.clone();
        }
        v
    }

    /// Number of keys represented, aggregated ones included.
    pub fn support_size(&self) -> BigUint {
        let agg: BigUint = self
            .aggregates
            .iter()
            .map(|a| &a.count * BigUint::from(a.entries.len()))
            .sum();
        agg + BigUint::from(self.components.len())
    }

    /// Component at `key` (zero when absent).
    pub fn value_at(&self, key: &NodeKey) -> SignedSquare {
        if let Some(c) = self.components.get(key) {
            return c.value();
        }
        self.aggregates
            .iter()
            .filter(|a| a.covers(&key.sigma))
            .flat_map(|a| {
                a.entries
                    .iter()
                    .filter(|(j, _)| *j == key.level_index)
                    .map(|(_, c)| c.scale(&a.ratio))
            })
            .next()
            .unwrap_or_else(SignedSquare::zero)
    }

    /// Every nonzero component as an explicit map, or `None` above `limit` keys.
    pub fn to_dense(&self, limit: u64) -> Option<BTreeMap<NodeKey, Component>> {
        if self.support_size() > BigUint::from(limit) {
            return None;
        }
        let mut out = self.components.clone();
        for a in &self.aggregates {
            let count = a.count.to_u64()?;
            for n in 0..count {
                let sigma = Address::from_index(&(&a.first + BigUint::from(n)), a.level);
                for (j, c) in &a.entries {
                    let key = NodeKey::new(sigma.clone(), *j).expect("aggregate entry in range");
                    out.insert(
                        key,
                        Component {
                            coeff: c.clone(),
                            ratio: a.ratio.clone(),
                        },
                    );
                }
            }
        }
        out.retain(|_, c| !c.ratio.is_zero() && !c.coeff.is_zero());
        Some(out)
    }
}

/// Componentwise sum of two dense vectors of the same function.
pub fn dense_sum(
    a: &BTreeMap<NodeKey, Component>,
    b: &BTreeMap<NodeKey, Component>,
) -> Result<BTreeMap<NodeKey, Component>> {
    let mut out = a.clone();
    for (k, c) in b {
        match out.get_mut(k) {
            Some(e) if e.coeff == c.coeff => e.ratio += &c.ratio,
            Some(_) => {
                return Err(Error::Params(format!(
                    "vectors disagree on the coefficient at {k:?}"
                )))
            }
            None => {
                out.insert(k.clone(), c.clone());
            }
        }
    }
    out.retain(|_, c| !c.ratio.is_zero());
    Ok(out)
}

fn check_endpoints(a: &Rational, b: &Rational) -> Result<()> {
    if a.is_negative() || b > &Rational::one() || a > b {
        return Err(Error::InvalidInterval {
            lo: fmt_q(a),
            hi: fmt_q(b),
        });
    }
    Ok(())
}

/// `λ(A ∩ [a, b]) / λ(A)` for the carved set of `key`.
fn carved_ratio(key: &NodeKey, a: &Rational, b: &Rational, cfg: &CarvingConfig) -> Result<Rational> {
    let iv = interval_of(&key.sigma);
    if &iv.lo >= a && &iv.hi <= b {
        return Ok(Rational::one());
    }
    if &iv.hi <= a || &iv.lo >= b {
        return Ok(Rational::zero());
    }
    let set = carve(key, cfg)?;
    Ok(set.measure_between(a, b)? / &set.measure)
}

/// `∫_{[a, b]} f`, exact.
pub fn integral(
    f: &BasicFunction,
    a: &Rational,
    b: &Rational,
    cfg: &CarvingConfig,
) -> Result<IntegralVector> {
    check_endpoints(a, b)?;
    if f.kmax > cfg.kmax {
        return Err(Error::Params(format!(
            "function depth {} exceeds carving depth {}",
            f.kmax, cfg.kmax
        )));
    }
    let mut out = IntegralVector::zero(a.clone(), b.clone());

    // coefficients vanish off I_τ, so clip the window to it
    let (lo, hi) = match &f.restriction {
        Some(tau) => {
            let iv = interval_of(tau);
            (a.max(&iv.lo).clone(), b.min(&iv.hi).clone())
        }
        None => (a.clone(), b.clone()),
    };
    if lo >= hi {
        return Ok(out);
    }

    if let Some(support) = f.explicit_support() {
        for (key, coeff) in support {
            let ratio = carved_ratio(&key, &lo, &hi, cfg)?;
            if !ratio.is_zero() {
                out.components.insert(key, Component { coeff, ratio });
            }
        }
        return Ok(out);
    }

    let rdepth = f.restriction.as_ref().map_or(0, Address::len);
    for k in rdepth..=f.kmax {
        let entries = f.level_coefficients(k).expect("uniform scheme");
        if entries.is_empty() {
            continue;
        }
        let scale = pow2(k as i64);
        let (sa, sb) = (&lo * &scale, &hi * &scale);
        let (first, end) = (ceil_int(&sa), floor_int(&sb));
        if first < end {
            out.aggregates.push(LevelAggregate {
                level: k,
                first: first.to_biguint().expect("nonnegative"),
                count: (&end - &first).to_biguint().expect("positive"),
                entries: entries.clone(),
                ratio: Rational::one(),
            });
        }
        let mut boundary = Vec::new();
        if !sa.is_integer() {
            boundary.push(floor_int(&sa));
        }
        if !sb.is_integer() && !boundary.contains(&floor_int(&sb)) {
            boundary.push(floor_int(&sb));
        }
        for q in boundary {
            let sigma = Address::from_index(&q.to_biguint().expect("nonnegative"), k);
            for (j, coeff) in &entries {
                let key = NodeKey::new(sigma.clone(), *j)?;
                let ratio = carved_ratio(&key, &lo, &hi, cfg)?;
                if !ratio.is_zero() {
                    out.components.insert(
                        key,
                        Component {
                            coeff: coeff.clone(),
                            ratio,
                        },
                    );
                }
            }
        }
    }
    Ok(out)
}

/// `F(x + h) − F(x)` where `F` is the primitive of `f`.
pub fn primitive_diff(
    f: &BasicFunction,
    x: &Rational,
    h: &Rational,
    cfg: &CarvingConfig,
) -> Result<IntegralVector> {
    let y = x + h;
    if h.is_negative() {
        Ok(integral(f, &y, x, cfg)?.negate())
    } else {
        integral(f, x, &y, cfg)
    }
}

pub fn norm_sq(v: &IntegralVector) -> Rational {
    v.norm_sq()
}

/// `lo ≤ √q ≤ hi` with rational endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Enclosure {
    #[serde(with = "serde_q")]
    pub lo: Rational,
    #[serde(with = "serde_q")]
    pub hi: Rational,
    pub precision_bits: u32,
}

impl Enclosure {
    pub fn exact(v: Rational) -> Self {
        Self {
            lo: v.clone(),
            hi: v,
            precision_bits: u32::MAX,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn add(&self, other: &Enclosure) -> Enclosure {
        Enclosure {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
            precision_bits: self.precision_bits.min(other.precision_bits),
        }
    }

    /// Multiplies by `a ≥ 0`.
    pub fn scale(&self, a: &Rational) -> Enclosure {
        debug_assert!(!a.is_negative());
        Enclosure {
            lo: &self.lo * a,
            hi: &self.hi * a,
            precision_bits: self.precision_bits,
        }
    }

    pub fn midpoint_f64(&self) -> f64 {
        (to_f64(&self.lo) + to_f64(&self.hi)) / 2.0
    }
}

fn exact_sqrt_int(n: &BigInt) -> Option<BigInt> {
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}

/// Exact square root of a rational square, if it is one.
pub fn exact_sqrt(q: &Rational) -> Option<Rational> {
    if q.is_negative() {
        return None;
    }
    Some(Rational::new(
        exact_sqrt_int(q.numer())?,
        exact_sqrt_int(q.denom())?,
    ))
}

/// Dyadic enclosure of `√q` of absolute width `2^-(bits+1)`; exact when `q` is
/// a rational square.
pub fn sqrt_enclosure(q: &Rational, bits: u32) -> Result<Enclosure> {
    if q.is_negative() {
        return Err(Error::NegativeSqrt(fmt_q(q)));
    }
    if let Some(r) = exact_sqrt(q) {
        return Ok(Enclosure::exact(r));
    }
    let s = i64::from(bits) + 1;
    let n = floor_int(&(q * pow2(2 * s)));
    let lo = Rational::from_integer(n.sqrt()) * pow2(-s);
    let hi = &lo + pow2(-s);
    Ok(Enclosure {
        lo,
        hi,
        precision_bits: bits,
    })
}

/// Precisions tried before a sum of square roots is declared undecided.
pub const ESCALATION_BITS: [u32; 3] = [64, 128, 256];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SqrtSumCheck {
    /// `√lhs_sq ≤ rhs` was certified.
    pub holds: bool,
    /// Decided on exact squares, without enclosures.
    pub exact: bool,
    pub bits: u32,
    pub rhs: Enclosure,
}

/// Certifies `√lhs_sq ≤ Σ a_i √b_i` for `a_i, b_i ≥ 0`.
///
/// Terms whose radicands differ by a rational square are merged first, so a
/// single surviving radicand is decided on exact squares. Otherwise the right
/// side is enclosed at 64, 128 and 256 bits; the check fails only when even
/// 256 bits cannot place `√lhs_sq` below the lower end.
pub fn certify_le_sqrt_sum(lhs_sq: &Rational, terms: &[(Rational, Rational)]) -> Result<SqrtSumCheck> {
    let mut groups: Vec<(Rational, Rational)> = Vec::new();
    for (a, b) in terms {
        if a.is_negative() || b.is_negative() {
            return Err(Error::NegativeSqrt(format!("{} · √{}", fmt_q(a), fmt_q(b))));
        }
        if a.is_zero() || b.is_zero() {
            continue;
        }
        match groups
            .iter_mut()
            .find_map(|g| exact_sqrt(&(b / &g.1)).map(|r| (g, r)))
        {
            Some((g, r)) => g.0 += a * r,
            None => groups.push((a.clone(), b.clone())),
        }
    }
    match groups.as_slice() {
        [] => Ok(SqrtSumCheck {
            holds: lhs_sq.is_zero(),
            exact: true,
            bits: 0,
            rhs: Enclosure::exact(Rational::zero()),
        }),
        [(a, b)] => {
            let rhs_sq = a * a * b;
            Ok(SqrtSumCheck {
                holds: lhs_sq <= &rhs_sq,
                exact: true,
                bits: 0,
                rhs: sqrt_enclosure(&rhs_sq, ESCALATION_BITS[0])?,
            })
        }
        _ => {
            let mut last = None;
            for bits in ESCALATION_BITS {
                let mut rhs = Enclosure::exact(Rational::zero());
                for (a, b) in &groups {
                    rhs = rhs.add(&sqrt_enclosure(b, bits)?.scale(a));
                }
                rhs.precision_bits = bits;
                if lhs_sq <= &(&rhs.lo * &rhs.lo) {
                    return Ok(SqrtSumCheck {
                        holds: true,
                        exact: false,
                        bits,
                        rhs,
                    });
                }
                let decided_false = lhs_sq > &(&rhs.hi * &rhs.hi);
                last = Some((bits, rhs));
                if decided_false {
                    break;
                }
            }
            let (bits, rhs) = last.expect("at least one precision tried");
            Ok(SqrtSumCheck {
                holds: false,
                exact: false,
                bits,
                rhs,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PettisKind {
    /// `Σ c²` over the whole index set (Hilbert space).
    L2Sum,
    /// `Σ_j √(Σ_{B_j} c²)` over blocks starting at `cuts` (general space).
    BlockSum { cuts: Vec<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    IntegrableAtTruncation,
    Divergent,
}

#[derive(Clone, Debug, Serialize)]
pub struct PettisCertificate {
    pub kind: PettisKind,
    /// `Σ c²` for the Hilbert kind; upper end of the block sum otherwise.
    #[serde(with = "serde_q")]
    pub partial: Rational,
    /// Exact `Σ_{B_j} c²` for each block (empty for the Hilbert kind).
    #[serde(serialize_with = "ser_q_vec")]
    pub blocks: Vec<Rational>,
    pub block_sum: Option<Enclosure>,
    /// Strict upper bound on the contribution of depths beyond `kmax`.
    #[serde(serialize_with = "ser_opt_q")]
    pub tail_bound: Option<Rational>,
    pub verdict: Verdict,
}

fn ser_q_vec<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(fmt_q))
}

fn ser_opt_q<S: Serializer>(v: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(q) => s.serialize_some(&fmt_q(q)),
        None => s.serialize_none(),
    }
}

/// `Σ_{k>kmax} 1/(k+1)² < 2/(2·kmax+3)` (each `1/n²` is below
/// `∫_{n-1/2}^{n+1/2} x^{-2}`), scaled by `2^-|τ|·(Σ|λ|)²`.
fn l2_tail_bound(f: &BasicFunction) -> Rational {
    match f.weight_l1() {
        None => Rational::zero(),
        Some(w) => {
            let r = f.restriction.as_ref().map_or(0, Address::len) as i64;
            &w * &w * pow2(-r) * rat(2, 2 * f.kmax as i64 + 3)
        }
    }
}

/// Integrability certificate at truncation depth.
pub fn pettis_check(f: &BasicFunction, kind: &PettisKind) -> Result<PettisCertificate> {
    match kind {
        PettisKind::L2Sum => Ok(PettisCertificate {
            kind: kind.clone(),
            partial: f.coefficient_sq_sum(),
            blocks: Vec::new(),
            block_sum: None,
            tail_bound: Some(l2_tail_bound(f)),
            verdict: Verdict::IntegrableAtTruncation,
        }),
        PettisKind::BlockSum { cuts } => {
            let blocks = block_squares(f, cuts)?;
            let mut sum = Enclosure::exact(Rational::zero());
            for b in &blocks {
                sum = sum.add(&sqrt_enclosure(b, ESCALATION_BITS[0])?);
            }
            Ok(PettisCertificate {
                kind: kind.clone(),
                partial: sum.hi.clone(),
                blocks,
                block_sum: Some(sum),
                tail_bound: None,
                verdict: Verdict::IntegrableAtTruncation,
            })
        }
    }
}

/// Exact `Σ_{B_j} c²` for the blocks `[cuts[j], cuts[j+1])`, the last one
/// truncated at `kmax`.
pub fn block_squares(f: &BasicFunction, cuts: &[usize]) -> Result<Vec<Rational>> {
    if cuts.first() != Some(&0) || cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Schedule(format!(
            "cuts must start at 0 and increase strictly, got {cuts:?}"
        )));
    }
    Ok(cuts
        .iter()
        .enumerate()
        .take_while(|(_, &c)| c <= f.kmax)
        .map(|(j, &c)| {
            let end = cuts.get(j + 1).map_or(f.kmax + 1, |&n| n.min(f.kmax + 1));
            (c..end).map(|k| f.level_sq_sum(k)).sum()
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct BochnerCertificate {
    /// Enclosures of `S_K = Σ_{k≤K} ∫‖f_k‖` for `K = 0..=kmax`.
    pub partial_sums: Vec<Enclosure>,
    #[serde(with = "serde_q")]
    pub threshold: Rational,
    /// `S_kmax` provably exceeds `threshold`.
    pub divergent: bool,
}

/// Partial sums of `∫‖f‖ = Σ_k 2^{k/2}·Σ_j |d(k,j)| / (k+1)` (restriction
/// aware), flagged divergent once the lower end passes `threshold`.
pub fn bochner_check(f: &BasicFunction, threshold: &Rational) -> Result<BochnerCertificate> {
    if !f.is_uniform() {
        return Err(Error::Params(
            "Bochner partial sums need a selector scheme".into(),
        ));
    }
    let mut acc = Enclosure::exact(Rational::zero());
    let mut partial_sums = Vec::with_capacity(f.kmax + 1);
    for k in 0..=f.kmax {
        let nodes = Rational::from_integer(f.supported_nodes_at(k));
        let d: Rational = f
            .merged_weights(k)
            .expect("uniform")
            .iter()
            .map(|(_, w)| w.abs())
            .sum();
        let term_sq = &nodes * &nodes * &d * &d * pow2(-(k as i64)) / int(((k + 1) * (k + 1)) as i64);
        acc = acc.add(&sqrt_enclosure(&term_sq, ESCALATION_BITS[0])?);
        partial_sums.push(acc.clone());
    }
    let divergent = &acc.lo > threshold;
    Ok(BochnerCertificate {
        partial_sums,
        threshold: threshold.clone(),
        divergent,
    })
}

#[derive(Serialize)]
struct EntryJson {
    i: usize,
    sign: i8,
    #[serde(with = "serde_q")]
    square: Rational,
}

#[derive(Serialize)]
struct AggregateJson {
    level: usize,
    first: String,
    count: String,
    entries: Vec<EntryJson>,
}

#[derive(Serialize)]
struct ComponentJson {
    sigma: Address,
    i: usize,
    sign: i8,
    #[serde(with = "serde_q")]
    square: Rational,
}

#[derive(Serialize)]
struct VectorJson {
    interval: [String; 2],
    aggregates: Vec<AggregateJson>,
    components: Vec<ComponentJson>,
    #[serde(with = "serde_q")]
    norm_sq: Rational,
    norm: f64,
}

impl Serialize for IntegralVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let norm_sq = self.norm_sq();
        VectorJson {
            interval: [fmt_q(&self.lo), fmt_q(&self.hi)],
            aggregates: self
                .aggregates
                .iter()
                .map(|a| AggregateJson {
                    level: a.level,
                    first: a.first.to_string(),
                    count: a.count.to_string(),
                    entries: a
                        .entries
                        .iter()
                        .map(|(i, c)| {
                            let v = c.scale(&a.ratio);
                            EntryJson {
                                i: *i,
                                sign: v.sign().as_i8(),
                                square: v.square().clone(),
                            }
                        })
                        .collect(),
                })
                .collect(),
            components: self
                .components
                .iter()
                .map(|(k, c)| {
                    let v = c.value();
                    ComponentJson {
                        sigma: k.sigma.clone(),
                        i: k.level_index,
                        sign: v.sign().as_i8(),
                        square: v.square().clone(),
                    }
                })
                .collect(),
            norm: to_f64(&norm_sq).sqrt(),
            norm_sq,
        }
        .serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::enumerate_block;
    use crate::stepfun::{combine, make_fn, restrict, Selector};
    use proptest::prelude::*;

    /// Enumerates every key and carves it; the reference for small depths.
    fn brute_norm_sq(f: &BasicFunction, a: &Rational, b: &Rational, cfg: &CarvingConfig) -> Rational {
        enumerate_block(0, f.kmax)
            .map(|key| {
                let c = f.coeff_sq(&key).unwrap();
                if c.is_zero() {
                    return Rational::zero();
                }
                let set = carve(&key, cfg).unwrap();
                let r = set.measure_between(a, b).unwrap() / &set.measure;
                c.square() * &r * &r
            })
            .sum()
    }

    fn third() -> Selector {
        Selector::slope(rat(1, 3)).unwrap()
    }

    #[test]
    fn spec_norms() {
        let cfg = CarvingConfig::new(2, 1).unwrap();
        let f = make_fn(third(), 2).unwrap();
        let v = integral(&f, &int(0), &int(1), &cfg).unwrap();
        assert_eq!(v.norm_sq(), rat(49, 36));
        assert!(integral(&f, &int(0), &int(0), &cfg).unwrap().is_zero());

        let tau: Address = "1".parse().unwrap();
        let iv = interval_of(&tau);
        let g = restrict(&f, &tau).unwrap();
        assert_eq!(integral(&g, &iv.lo, &iv.hi, &cfg).unwrap().norm_sq(), rat(13, 72));
    }

    #[test]
    fn norm_sq_hand_sum() {
        let mut v = IntegralVector::zero(int(0), int(1));
        v.aggregates.push(LevelAggregate {
            level: 3,
            first: BigUint::from(2u32),
            count: BigUint::from(4u32),
            entries: vec![(1, SignedSquare::new(crate::stepfun::Sign::Pos, rat(1, 128)).unwrap())],
            ratio: int(1),
        });
        v.components.insert(
            NodeKey::new("000".parse().unwrap(), 1).unwrap(),
            Component {
                coeff: SignedSquare::new(crate::stepfun::Sign::Pos, rat(1, 512)).unwrap(),
                ratio: int(1),
            },
        );
        assert_eq!(v.norm_sq(), rat(17, 512));
        assert_eq!(IntegralVector::zero(int(0), int(1)).norm_sq(), int(0));
    }

    #[test]
    fn primitive_chain_example() {
        let cfg = CarvingConfig::new(3, 1).unwrap();
        let f = make_fn(third(), 3).unwrap();
        let v = primitive_diff(&f, &int(0), &rat(1, 4), &cfg).unwrap();
        let tau: Address = "00".parse().unwrap();
        let r = integral(&restrict(&f, &tau).unwrap(), &int(0), &rat(1, 4), &cfg).unwrap();
        assert_eq!(r.norm_sq(), rat(25, 576));
        assert!(v.norm_sq() >= r.norm_sq());

        let back = primitive_diff(&f, &rat(1, 4), &rat(-1, 4), &cfg).unwrap();
        assert_eq!(back.negate(), v);
        assert!(primitive_diff(&f, &rat(7, 8), &rat(1, 4), &cfg).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let cfg = CarvingConfig::new(5, 2).unwrap();
        let f = combine(&[int(1), rat(-1, 3)], &[third(), Selector::Diagonal], 5).unwrap();
        for (a, b) in [(rat(0, 1), rat(1, 1)), (rat(1, 7), rat(5, 9)), (rat(3, 64), rat(3, 64) + rat(1, 1000))] {
            let v = integral(&f, &a, &b, &cfg).unwrap();
            assert_eq!(v.norm_sq(), brute_norm_sq(&f, &a, &b, &cfg));
        }
        let tau: Address = "10".parse().unwrap();
        let g = restrict(&f, &tau).unwrap();
        let v = integral(&g, &rat(1, 3), &rat(2, 3), &cfg).unwrap();
        assert_eq!(v.norm_sq(), brute_norm_sq(&g, &rat(1, 3), &rat(2, 3), &cfg));
    }

    #[test]
    fn explicit_scheme_integral() {
        let cfg = CarvingConfig::new(3, 1).unwrap();
        let mut m = BTreeMap::new();
        m.insert(NodeKey::new("01".parse().unwrap(), 2).unwrap(), SignedSquare::from_rational(&rat(-2, 3)));
        m.insert(NodeKey::new("".parse().unwrap(), 0).unwrap(), SignedSquare::from_rational(&rat(1, 2)));
        let f = BasicFunction::explicit(3, m).unwrap();
        let v = integral(&f, &int(0), &int(1), &cfg).unwrap();
        assert_eq!(v.norm_sq(), rat(4, 9) + rat(1, 4));
        let v = integral(&f, &rat(1, 5), &rat(4, 5), &cfg).unwrap();
        assert_eq!(v.norm_sq(), brute_norm_sq(&f, &rat(1, 5), &rat(4, 5), &cfg));
    }

    #[test]
    fn deep_integral_is_cheap() {
        let cfg = CarvingConfig::new(40, 1).unwrap();
        let f = make_fn(third(), 40).unwrap();
        let v = integral(&f, &rat(1, 3), &rat(2, 3), &cfg).unwrap();
        assert!(v.components.len() <= 2 * 41);
        let whole = integral(&f, &int(0), &int(1), &cfg).unwrap();
        let expected: Rational = (0..=40).map(|k| rat(1, (k + 1) * (k + 1))).sum();
        assert_eq!(whole.norm_sq(), expected);
    }

    #[test]
    fn sqrt_enclosures() {
        assert_eq!(sqrt_enclosure(&int(4), 10).unwrap(), Enclosure::exact(int(2)));
        assert_eq!(sqrt_enclosure(&rat(49, 36), 10).unwrap(), Enclosure::exact(rat(7, 6)));
        let e = sqrt_enclosure(&int(2), 20).unwrap();
        assert!(&e.lo * &e.lo <= int(2) && int(2) <= &e.hi * &e.hi);
        assert!(e.width() <= pow2(-20));
        assert!(to_f64(&e.lo) <= std::f64::consts::SQRT_2 && std::f64::consts::SQRT_2 <= to_f64(&e.hi));
        assert!(sqrt_enclosure(&int(-1), 8).is_err());
    }

    #[test]
    fn sqrt_sum_certification() {
        // 2√2 = √8: merged into one radicand, decided exactly even at equality
        let c = certify_le_sqrt_sum(&int(8), &[(int(1), int(2)), (int(1), int(2))]).unwrap();
        assert!(c.holds && c.exact);
        let c = certify_le_sqrt_sum(&int(18), &[(int(1), int(2)), (int(1), int(8))]).unwrap();
        assert!(c.holds && c.exact);
        // √2 + √3 ≈ 3.146
        let c = certify_le_sqrt_sum(&rat(314, 100).pow(2), &[(int(1), int(2)), (int(1), int(3))]).unwrap();
        assert!(c.holds && !c.exact && c.bits == 64);
        let c = certify_le_sqrt_sum(&rat(315, 100).pow(2), &[(int(1), int(2)), (int(1), int(3))]).unwrap();
        assert!(!c.holds);
    }

    #[test]
    fn certificates() {
        let f = make_fn(third(), 2).unwrap();
        let c = pettis_check(&f, &PettisKind::L2Sum).unwrap();
        assert_eq!(c.partial, rat(49, 36));
        assert_eq!(c.tail_bound, Some(rat(2, 7)));
        assert_eq!(
            pettis_check(&BasicFunction::zero(4), &PettisKind::L2Sum).unwrap().partial,
            int(0)
        );

        let g = combine(&[int(1), rat(1, 2)], &[Selector::Zero, Selector::Diagonal], 6).unwrap();
        let bound: Rational = (0..=6).map(|k| rat(9, 4) / int((k + 1) * (k + 1))).sum();
        assert!(pettis_check(&g, &PettisKind::L2Sum).unwrap().partial <= bound);

        let f = make_fn(third(), 6).unwrap();
        let blk = pettis_check(&f, &PettisKind::BlockSum { cuts: vec![0, 3] }).unwrap();
        assert_eq!(blk.blocks[0], rat(49, 36));
        assert_eq!(blk.blocks.len(), 2);

        let b = bochner_check(&make_fn(third(), 20).unwrap(), &int(100)).unwrap();
        assert!(b.divergent);
        assert!(b.partial_sums.windows(2).all(|w| w[1].lo > w[0].hi));
        let z = bochner_check(&BasicFunction::zero(5).with_kmax(5).unwrap(), &int(1));
        assert!(z.is_err());
        let zc = combine(&[int(1), int(-1)], &[third(), third()], 5).unwrap();
        assert!(bochner_check(&zc, &int(0)).unwrap().partial_sums.iter().all(|e| e.hi.is_zero()));
    }

    fn dyadic_pair() -> impl Strategy<Value = (Rational, Rational)> {
        (0i64..64, 0i64..64).prop_map(|(x, y)| {
            let (x, y) = if x <= y { (x, y) } else { (y, x) };
            (rat(x, 64), rat(y, 64))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn additivity(p in 0i64..=90, q in 0i64..=90, r in 0i64..=90) {
            let mut v = [p, q, r];
            v.sort();
            let [a, b, c] = v.map(|n| rat(n, 90));
            let cfg = CarvingConfig::new(4, 2).unwrap();
            let f = combine(&[int(1), rat(1, 4)], &[third(), Selector::slope(rat(1, 2)).unwrap()], 4).unwrap();
            let ab = integral(&f, &a, &b, &cfg).unwrap().to_dense(10_000).unwrap();
            let bc = integral(&f, &b, &c, &cfg).unwrap().to_dense(10_000).unwrap();
            let ac = integral(&f, &a, &c, &cfg).unwrap().to_dense(10_000).unwrap();
            prop_assert_eq!(dense_sum(&ab, &bc).unwrap(), ac);
        }

        #[test]
        fn linearity((a, b) in dyadic_pair(), p in -9i64..9, q in 1i64..9) {
            let w = rat(p, q);
            let cfg = CarvingConfig::new(4, 1).unwrap();
            let f = make_fn(third(), 4).unwrap();
            let g = combine(std::slice::from_ref(&w), &[third()], 4).unwrap();
            let vf = integral(&f, &a, &b, &cfg).unwrap();
            let vg = integral(&g, &a, &b, &cfg).unwrap();
            for key in enumerate_block(0, 4) {
                prop_assert_eq!(vg.value_at(&key), vf.value_at(&key).scale(&w));
            }
        }

        #[test]
        fn aggregated_matches_dense((a, b) in dyadic_pair()) {
            let cfg = CarvingConfig::new(5, 1).unwrap();
            let f = make_fn(Selector::Diagonal, 5).unwrap();
            let v = integral(&f, &a, &b, &cfg).unwrap();
            prop_assert_eq!(v.norm_sq(), brute_norm_sq(&f, &a, &b, &cfg));
        }
    }
}
