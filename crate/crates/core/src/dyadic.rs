//! Binary addresses, dyadic intervals, the tree index set and exact rationals.
//!
//! An [`Address`] is a finite 0/1 word. Its interval is obtained by halving
//! `[0, 1]` once per bit, taking the left half on `0` and the right half on
//! `1`. A [`NodeKey`] pairs an address `σ` with a level index `0 ≤ i ≤ |σ|`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exact signed rational scalar, always kept in lowest terms.
pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `2^e` for any signed exponent.
pub fn pow2(e: i64) -> Rational {
    let p = BigInt::one() << e.unsigned_abs();
    if e >= 0 {
        Rational::from_integer(p)
    } else {
        Rational::new(BigInt::one(), p)
    }
}

pub fn floor_int(q: &Rational) -> BigInt {
    q.numer().div_floor(q.denom())
}

pub fn ceil_int(q: &Rational) -> BigInt {
    let (d, m) = q.numer().div_mod_floor(q.denom());
    if m.is_zero() {
        d
    } else {
        d + 1
    }
}

/// Formats as `p/q`, including `q = 1`.
pub fn fmt_q(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Parses `p/q`, an integer, or a power of two written `2^e`.
pub fn parse_q(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some(exp) = s.strip_prefix("2^") {
        let e: i64 = exp
            .trim_matches(|c| c == '(' || c == ')')
            .parse()
            .map_err(|_| Error::Parse(format!("bad exponent in {s:?}")))?;
        return Ok(pow2(e));
    }
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Serde adapter for rationals as `"p/q"` strings.
pub mod serde_q {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<Rational>`.
pub mod serde_q_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(fmt_q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse_q(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Finite binary word `σ`.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Address {
    bits: Vec<bool>,
}

impl Address {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        Self {
            bits: bits.into_iter().collect(),
        }
    }

    /// Address of depth `depth` whose bits spell `index` in binary (most
    /// significant bit first).
    pub fn from_index(index: &BigUint, depth: usize) -> Self {
        let bits = (0..depth)
            .map(|p| index.bit((depth - 1 - p) as u64))
            .collect();
        Self { bits }
    }

    pub fn from_index_u64(index: u64, depth: usize) -> Self {
        Self::from_index(&BigUint::from(index), depth)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn index(&self) -> BigUint {
        self.bits.iter().fold(BigUint::zero(), |acc, &b| {
            let acc = acc << 1u32;
            if b {
                acc + 1u32
            } else {
                acc
            }
        })
    }

    pub fn child(&self, bit: bool) -> Self {
        let mut bits = self.bits.clone();
        bits.push(bit);
        Self { bits }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.bits.is_empty() {
            None
        } else {
            Some(self.prefix(self.len() - 1))
        }
    }

    /// `σ|len`; panics if `len > |σ|`.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            bits: self.bits[..len].to_vec(),
        }
    }

    /// All prefixes from the root down to `self`, inclusive.
    pub fn prefixes(&self) -> impl Iterator<Item = Address> + '_ {
        (0..=self.len()).map(|l| self.prefix(l))
    }

    /// True iff `tau` is a prefix of `self`.
    pub fn extends(&self, tau: &Address) -> bool {
        is_extension(self, tau)
    }

    pub fn interval(&self) -> DyadicInterval {
        interval_of(self)
    }
}

impl PartialOrd for Address {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Depth first, then lexicographic (which is numeric order at equal depth).
impl Ord for Address {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.bits.cmp(&other.bits))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self:?})", self = self.to_string())
    }
}

impl FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("address must be over {{0,1}}: {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(|bits| Self { bits })
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Closed interval `[lo, hi]` with dyadic endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DyadicInterval {
    pub lo: Rational,
    pub hi: Rational,
}

impl DyadicInterval {
    pub fn length(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, t: &Rational) -> bool {
        &self.lo <= t && t <= &self.hi
    }

    pub fn contains_interval(&self, lo: &Rational, hi: &Rational) -> bool {
        &self.lo <= lo && hi <= &self.hi
    }
}

/// Element `(σ, i)` of the tree index set.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub sigma: Address,
    #[serde(rename = "i")]
    pub level_index: usize,
}

impl NodeKey {
    pub fn new(sigma: Address, level_index: usize) -> Result<Self> {
        if level_index > sigma.len() {
            return Err(Error::LevelIndex {
                index: level_index,
                depth: sigma.len(),
            });
        }
        Ok(Self { sigma, level_index })
    }

    pub fn depth(&self) -> usize {
        self.sigma.len()
    }
}

impl PartialOrd for NodeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NodeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sigma
            .cmp(&other.sigma)
            .then(self.level_index.cmp(&other.level_index))
    }
}

impl fmt::Debug for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.sigma, self.level_index)
    }
}

pub fn interval_of(sigma: &Address) -> DyadicInterval {
    let d = sigma.len() as i64;
    let q = Rational::from_integer(BigInt::from(sigma.index()));
    let w = pow2(-d);
    DyadicInterval {
        lo: &q * &w,
        hi: (q + int(1)) * w,
    }
}

/// Depth-`k` address whose interval holds `t`. Intervals are treated as
/// left-closed/right-open except the rightmost, which is closed.
pub fn locate(t: &Rational, k: usize) -> Result<Address> {
    if t.is_negative() || t > &Rational::one() {
        return Err(Error::OutOfRange {
            value: fmt_q(t),
            range: "[0, 1]",
        });
    }
    let scaled = t * pow2(k as i64);
    let mut q = floor_int(&scaled);
    let top = BigInt::one() << k;
    if q == top {
        q -= 1;
    }
    Ok(Address::from_index(&q.to_biguint().expect("nonnegative"), k))
}

pub fn is_extension(sigma: &Address, tau: &Address) -> bool {
    tau.len() <= sigma.len() && sigma.bits[..tau.len()] == tau.bits[..]
}

/// `Σ_{k=kmin}^{kmax} 2^k (k+1)`.
pub fn block_size(kmin: usize, kmax: usize) -> BigUint {
    (kmin..=kmax)
        .map(|k| (BigUint::one() << k) * BigUint::from(k + 1))
        .sum()
}

/// Every `(σ, i)` with `kmin ≤ |σ| ≤ kmax`, ordered by depth, address, then `i`.
///
/// Depths are limited to 63 since larger blocks cannot be enumerated anyway.
pub fn enumerate_block(kmin: usize, kmax: usize) -> impl Iterator<Item = NodeKey> {
    assert!(kmax < 64, "enumeration depth {kmax} too large");
    (kmin..=kmax).flat_map(|k| {
        (0..(1u64 << k)).flat_map(move |q| {
            let sigma = Address::from_index_u64(q, k);
            (0..=k).map(move |i| NodeKey {
                sigma: sigma.clone(),
                level_index: i,
            })
        })
    })
}

/// All addresses of exactly depth `k`.
pub fn addresses_at(k: usize) -> impl Iterator<Item = Address> {
    assert!(k < 64, "enumeration depth {k} too large");
    (0..(1u64 << k)).map(move |q| Address::from_index_u64(q, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a(s: &str) -> Address {
        s.parse().unwrap()
    }

    #[test]
    fn intervals() {
        assert_eq!(interval_of(&Address::root()), DyadicInterval { lo: int(0), hi: int(1) });
        assert_eq!(interval_of(&a("0")), DyadicInterval { lo: int(0), hi: rat(1, 2) });
        assert_eq!(interval_of(&a("101")), DyadicInterval { lo: rat(5, 8), hi: rat(3, 4) });
    }

    #[test]
    fn locate_examples() {
        assert_eq!(locate(&int(0), 3).unwrap(), a("000"));
        assert_eq!(locate(&int(1), 2).unwrap(), a("11"));
        assert_eq!(locate(&rat(1, 2), 2).unwrap(), a("10"));
        assert_eq!(locate(&int(0), 0).unwrap(), Address::root());
        assert!(locate(&rat(3, 2), 2).is_err());
        assert!(locate(&rat(-1, 2), 2).is_err());
    }

    #[test]
    fn enumerate_counts() {
        assert_eq!(enumerate_block(0, 0).count(), 1);
        assert_eq!(enumerate_block(0, 2).count(), 17);
        assert_eq!(enumerate_block(2, 2).count(), 12);
        for kmin in 0..=12 {
            for kmax in kmin..=12 {
                let n = enumerate_block(kmin, kmax).count();
                assert_eq!(BigUint::from(n), block_size(kmin, kmax));
            }
        }
    }

    #[test]
    fn enumerate_order_is_sorted() {
        let keys: Vec<_> = enumerate_block(0, 4).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn extension() {
        assert!(is_extension(&a("01"), &a("0")));
        assert!(!is_extension(&a("0"), &a("01")));
        assert!(!is_extension(&a("101"), &a("11")));
        assert!(is_extension(&a("101"), &Address::root()));
    }

    #[test]
    fn parse_and_format() {
        assert_eq!(fmt_q(&int(1)), "1/1");
        assert_eq!(parse_q("6/4").unwrap(), rat(3, 2));
        assert_eq!(parse_q("-3").unwrap(), int(-3));
        assert_eq!(parse_q("2^-5").unwrap(), rat(1, 32));
        assert!(parse_q("1/0").is_err());
        assert!(parse_q("x").is_err());
        assert_eq!(a("0110").to_string(), "0110");
        assert!("012".parse::<Address>().is_err());
        let key = NodeKey::new(a("011"), 2).unwrap();
        assert_eq!(serde_json::to_string(&key).unwrap(), r#"{"sigma":"011","i":2}"#);
        assert!(NodeKey::new(a("01"), 3).is_err());
    }

    #[test]
    fn deep_addresses_round_trip() {
        let sigma = Address::from_bits((0..100).map(|p| p % 3 == 0));
        assert_eq!(Address::from_index(&sigma.index(), 100), sigma);
        assert_eq!(interval_of(&sigma).length(), pow2(-100));
    }

    fn address_strategy(max: usize) -> impl Strategy<Value = Address> {
        prop::collection::vec(any::<bool>(), 0..=max).prop_map(Address::from_bits)
    }

    proptest! {
        #[test]
        fn halves_tile_parent(sigma in address_strategy(40)) {
            let p = interval_of(&sigma);
            let l = interval_of(&sigma.child(false));
            let r = interval_of(&sigma.child(true));
            prop_assert_eq!(&l.lo, &p.lo);
            prop_assert_eq!(&l.hi, &r.lo);
            prop_assert_eq!(&r.hi, &p.hi);
            prop_assert_eq!(p.length(), pow2(-(sigma.len() as i64)));
        }

        #[test]
        fn nested_iff_prefix_comparable(s in address_strategy(10), t in address_strategy(10)) {
            let (a, b) = (interval_of(&s), interval_of(&t));
            let comparable = is_extension(&s, &t) || is_extension(&t, &s);
            let nested = a.contains_interval(&b.lo, &b.hi) || b.contains_interval(&a.lo, &a.hi);
            prop_assert_eq!(comparable, nested);
            if !comparable {
                // interiors disjoint
                prop_assert!(a.hi <= b.lo || b.hi <= a.lo);
            }
        }

        #[test]
        fn locate_contains(num in 0u64..=1_000_000, den in 1u64..=1_000_000, k in 0usize..=32) {
            prop_assume!(num <= den);
            let t = Rational::new(BigInt::from(num), BigInt::from(den));
            let tau = locate(&t, k).unwrap();
            prop_assert_eq!(tau.len(), k);
            prop_assert!(interval_of(&tau).contains(&t));
        }
    }
}
