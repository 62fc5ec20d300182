//! Coefficient schemes over the tree index set.
//!
//! A basic function is determined by its coefficients `c(σ, i)`. The selector
//! functions carry `1/((k+1)·2^{k/2})` at `(σ, n(k))`, which is irrational for
//! odd `k`, so coefficients are kept as [`SignedSquare`]s: a sign and the
//! rational square.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dyadic::{int, is_extension, pow2, serde_q, Address, NodeKey, Rational};
use crate::error::{Error, Result};
use crate::family::SlopeSelector;

/// Map `k ↦ n(k)` with `n(k) ≤ k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Selector {
    /// `n ≡ 0`.
    Zero,
    /// `n(k) = k`.
    Diagonal,
    /// `n ≡ value`; leaves the admissible set below level `value`.
    Constant { value: usize },
    Slope(SlopeSelector),
    /// Explicit values for levels `0..values.len()`.
    Table { values: Vec<usize> },
}

impl Selector {
    pub fn slope(t: Rational) -> Result<Self> {
        crate::family::slope_selector(t).map(Selector::Slope)
    }

    /// `n(k)`, or `None` when a table does not reach level `k`.
    pub fn at(&self, k: usize) -> Option<usize> {
        match self {
            Selector::Zero => Some(0),
            Selector::Diagonal => Some(k),
            Selector::Constant { value } => Some(*value),
            Selector::Slope(s) => Some(s.at(k)),
            Selector::Table { values } => values.get(k).copied(),
        }
    }

    /// Checks `n(k) ≤ k` for every `k ≤ kmax`.
    pub fn check_admissible(&self, kmax: usize) -> Result<()> {
        for k in 0..=kmax {
            match self.at(k) {
                Some(v) if v <= k => {}
                Some(v) => return Err(Error::SelectorOutOfRange { level: k, value: v }),
                None => {
                    return Err(Error::Params(format!(
                        "selector table stops before level {k}"
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
}

impl Sign {
    pub fn of(q: &Rational) -> Self {
        if q.is_positive() {
            Sign::Pos
        } else if q.is_negative() {
            Sign::Neg
        } else {
            Sign::Zero
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Neg => -1,
            Sign::Zero => 0,
            Sign::Pos => 1,
        }
    }

    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Sign::Neg),
            0 => Ok(Sign::Zero),
            1 => Ok(Sign::Pos),
            _ => Err(Error::Parse(format!("sign must be -1, 0 or 1, got {v}"))),
        }
    }

    pub fn times(self, other: Sign) -> Sign {
        Sign::from_i8(self.as_i8() * other.as_i8()).expect("product of signs")
    }
}

/// The real number `sign·√square`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SignedSquareJson", into = "SignedSquareJson")]
pub struct SignedSquare {
    sign: Sign,
    square: Rational,
}

#[derive(Serialize, Deserialize)]
struct SignedSquareJson {
    sign: i8,
    #[serde(with = "serde_q")]
    square: Rational,
}

impl TryFrom<SignedSquareJson> for SignedSquare {
    type Error = Error;
    fn try_from(j: SignedSquareJson) -> Result<Self> {
        SignedSquare::new(Sign::from_i8(j.sign)?, j.square)
    }
}

impl From<SignedSquare> for SignedSquareJson {
    fn from(s: SignedSquare) -> Self {
        SignedSquareJson {
            sign: s.sign.as_i8(),
            square: s.square,
        }
    }
}

impl SignedSquare {
    pub fn new(sign: Sign, square: Rational) -> Result<Self> {
        if square.is_negative() || (sign == Sign::Zero) != square.is_zero() {
            return Err(Error::Params(format!(
                "inconsistent signed square ({sign:?}, {square})"
            )));
        }
        Ok(Self { sign, square })
    }

    pub fn zero() -> Self {
        Self {
            sign: Sign::Zero,
            square: Rational::zero(),
        }
    }

    /// Exact embedding of a rational `r` as `(sign r, r²)`.
    pub fn from_rational(r: &Rational) -> Self {
        Self {
            sign: Sign::of(r),
            square: r * r,
        }
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn square(&self) -> &Rational {
        &self.square
    }

    pub fn is_zero(&self) -> bool {
        self.sign == Sign::Zero
    }

    /// `a·x` for rational `a`.
    pub fn scale(&self, a: &Rational) -> Self {
        let sign = self.sign.times(Sign::of(a));
        if sign == Sign::Zero {
            return Self::zero();
        }
        Self {
            sign,
            square: &self.square * a * a,
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Rational::one())
    }

    pub fn to_f64(&self) -> f64 {
        f64::from(self.sign.as_i8()) * crate::dyadic::to_f64(&self.square).sqrt()
    }
}

impl fmt::Debug for SignedSquare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}√({})", self.sign.as_i8(), self.square)
    }
}

/// Square of the level weight `1/((k+1)·2^{k/2})`.
pub fn level_weight_sq(k: usize) -> Rational {
    pow2(-(k as i64)) / int(((k + 1) * (k + 1)) as i64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    #[serde(with = "serde_q")]
    pub weight: Rational,
    pub selector: Selector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Scheme {
    Explicit {
        #[serde(with = "explicit_json")]
        coefficients: BTreeMap<NodeKey, SignedSquare>,
    },
    Fn { selector: Selector },
    Combined { terms: Vec<Term> },
}

mod explicit_json {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        sigma: Address,
        i: usize,
        #[serde(flatten)]
        value: SignedSquare,
    }

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<NodeKey, SignedSquare>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(m.iter().map(|(k, v)| Entry {
            sigma: k.sigma.clone(),
            i: k.level_index,
            value: v.clone(),
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<NodeKey, SignedSquare>, D::Error> {
        use serde::de::Error as _;
        Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| Ok((NodeKey::new(e.sigma, e.i).map_err(D::Error::custom)?, e.value)))
            .collect()
    }
}

/// Finite-depth basic function: a coefficient scheme, a truncation depth, and
/// an optional restriction root `τ` (coefficients vanish off `[τ]`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BasicFunctionJson")]
pub struct BasicFunction {
    pub kmax: usize,
    pub scheme: Scheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restriction: Option<Address>,
}

#[derive(Deserialize)]
struct BasicFunctionJson {
    kmax: usize,
    scheme: Scheme,
    #[serde(default)]
    restriction: Option<Address>,
}

impl TryFrom<BasicFunctionJson> for BasicFunction {
    type Error = Error;
    fn try_from(j: BasicFunctionJson) -> Result<Self> {
        let f = BasicFunction {
            kmax: j.kmax,
            scheme: j.scheme,
            restriction: None,
        };
        f.validate()?;
        match j.restriction {
            Some(tau) => restrict(&f, &tau),
            None => Ok(f),
        }
    }
}

pub fn make_fn(n: Selector, kmax: usize) -> Result<BasicFunction> {
    n.check_admissible(kmax)?;
    Ok(BasicFunction {
        kmax,
        scheme: Scheme::Fn { selector: n },
        restriction: None,
    })
}

pub fn combine(weights: &[Rational], selectors: &[Selector], kmax: usize) -> Result<BasicFunction> {
    if weights.len() != selectors.len() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: selectors.len(),
        });
    }
    for s in selectors {
        s.check_admissible(kmax)?;
    }
    let terms = weights
        .iter()
        .zip(selectors)
        .map(|(w, s)| Term {
            weight: w.clone(),
            selector: s.clone(),
        })
        .collect();
    Ok(BasicFunction {
        kmax,
        scheme: Scheme::Combined { terms },
        restriction: None,
    })
}

/// `f_{|τ}`: same coefficients on keys with `σ ∈ [τ]`, zero elsewhere.
pub fn restrict(f: &BasicFunction, tau: &Address) -> Result<BasicFunction> {
    if tau.len() > f.kmax {
        return Err(Error::DepthExceeded {
            depth: tau.len(),
            kmax: f.kmax,
        });
    }
    let restriction = match &f.restriction {
        None => tau.clone(),
        Some(old) if is_extension(tau, old) => tau.clone(),
        Some(old) if is_extension(old, tau) => old.clone(),
        Some(_) => {
            // incomparable roots: nothing survives
            return Ok(BasicFunction {
                kmax: f.kmax,
                scheme: Scheme::Explicit {
                    coefficients: BTreeMap::new(),
                },
                restriction: Some(tau.clone()),
            });
        }
    };
    Ok(BasicFunction {
        kmax: f.kmax,
        scheme: f.scheme.clone(),
        restriction: Some(restriction),
    })
}

pub fn coeff_sq(f: &BasicFunction, key: &NodeKey) -> Result<SignedSquare> {
    f.coeff_sq(key)
}

impl BasicFunction {
    pub fn zero(kmax: usize) -> Self {
        Self {
            kmax,
            scheme: Scheme::Explicit {
                coefficients: BTreeMap::new(),
            },
            restriction: None,
        }
    }

    pub fn explicit(kmax: usize, coefficients: BTreeMap<NodeKey, SignedSquare>) -> Result<Self> {
        let f = Self {
            kmax,
            scheme: Scheme::Explicit { coefficients },
            restriction: None,
        };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        match &self.scheme {
            Scheme::Explicit { coefficients } => {
                for k in coefficients.keys() {
                    if k.depth() > self.kmax {
                        return Err(Error::DepthExceeded {
                            depth: k.depth(),
                            kmax: self.kmax,
                        });
                    }
                }
                Ok(())
            }
            Scheme::Fn { selector } => selector.check_admissible(self.kmax),
            Scheme::Combined { terms } => terms
                .iter()
                .try_for_each(|t| t.selector.check_admissible(self.kmax)),
        }
    }

    /// Same scheme at a different truncation depth.
    pub fn with_kmax(&self, kmax: usize) -> Result<Self> {
        let f = Self {
            kmax,
            scheme: self.scheme.clone(),
            restriction: self.restriction.clone(),
        };
        f.validate()?;
        if let Some(tau) = &f.restriction {
            if tau.len() > kmax {
                return Err(Error::DepthExceeded {
                    depth: tau.len(),
                    kmax,
                });
            }
        }
        Ok(f)
    }

    pub fn is_uniform(&self) -> bool {
        !matches!(self.scheme, Scheme::Explicit { .. })
    }

    fn in_support(&self, sigma: &Address) -> bool {
        self.restriction
            .as_ref()
            .is_none_or(|tau| is_extension(sigma, tau))
    }

    /// `d(k, j)` for every `j` with a nonzero merged weight, sorted by `j`.
    /// `None` for explicit schemes, whose coefficients depend on `σ`.
    pub fn merged_weights(&self, k: usize) -> Option<Vec<(usize, Rational)>> {
        match &self.scheme {
            Scheme::Explicit { .. } => None,
            Scheme::Fn { selector } => {
                Some(vec![(selector.at(k).expect("validated"), Rational::one())])
            }
            Scheme::Combined { terms } => {
                let mut d: BTreeMap<usize, Rational> = BTreeMap::new();
                for t in terms {
                    *d.entry(t.selector.at(k).expect("validated"))
                        .or_insert_with(Rational::zero) += &t.weight;
                }
                Some(d.into_iter().filter(|(_, w)| !w.is_zero()).collect())
            }
        }
    }

    /// Nonzero coefficients shared by every supported `σ` of depth `k`,
    /// ignoring the restriction. `None` for explicit schemes.
    pub fn level_coefficients(&self, k: usize) -> Option<Vec<(usize, SignedSquare)>> {
        let base = SignedSquare {
            sign: Sign::Pos,
            square: level_weight_sq(k),
        };
        self.merged_weights(k)
            .map(|d| d.into_iter().map(|(j, w)| (j, base.scale(&w))).collect())
    }

    pub fn coeff_sq(&self, key: &NodeKey) -> Result<SignedSquare> {
        if key.depth() > self.kmax {
            return Err(Error::DepthExceeded {
                depth: key.depth(),
                kmax: self.kmax,
            });
        }
        if !self.in_support(&key.sigma) {
            return Ok(SignedSquare::zero());
        }
        Ok(match &self.scheme {
            Scheme::Explicit { coefficients } => coefficients
                .get(key)
                .cloned()
                .unwrap_or_else(SignedSquare::zero),
            _ => self
                .level_coefficients(key.depth())
                .expect("uniform")
                .into_iter()
                .find(|(j, _)| *j == key.level_index)
                .map(|(_, c)| c)
                .unwrap_or_else(SignedSquare::zero),
        })
    }

    /// Explicit nonzero coefficients inside the support, for explicit schemes.
    pub fn explicit_support(&self) -> Option<Vec<(NodeKey, SignedSquare)>> {
        match &self.scheme {
            Scheme::Explicit { coefficients } => Some(
                coefficients
                    .iter()
                    .filter(|(k, v)| !v.is_zero() && self.in_support(&k.sigma))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// `Σ|λ_i|` for uniform schemes (1 for a single selector).
    pub fn weight_l1(&self) -> Option<Rational> {
        match &self.scheme {
            Scheme::Explicit { .. } => None,
            Scheme::Fn { .. } => Some(Rational::one()),
            Scheme::Combined { terms } => Some(terms.iter().map(|t| t.weight.abs()).sum()),
        }
    }

    /// The `(weight, selector)` pairs of a uniform scheme.
    pub fn terms(&self) -> Option<Vec<Term>> {
        match &self.scheme {
            Scheme::Explicit { .. } => None,
            Scheme::Fn { selector } => Some(vec![Term {
                weight: Rational::one(),
                selector: selector.clone(),
            }]),
            Scheme::Combined { terms } => Some(terms.clone()),
        }
    }

    /// True iff every coefficient of depth `≤ kmax` vanishes.
    pub fn is_zero(&self) -> bool {
        if let Some(tau) = &self.restriction {
            if tau.len() > self.kmax {
                return true;
            }
        }
        match &self.scheme {
            Scheme::Explicit { .. } => self.explicit_support().expect("explicit").is_empty(),
            _ => (0..=self.kmax).all(|k| self.merged_weights(k).expect("uniform").is_empty()),
        }
    }

    /// Exact `Σ c(σ,i)²` over the support, level-aggregated.
    pub fn coefficient_sq_sum(&self) -> Rational {
        match &self.scheme {
            Scheme::Explicit { .. } => self
                .explicit_support()
                .expect("explicit")
                .iter()
                .map(|(_, c)| c.square().clone())
                .sum(),
            _ => (0..=self.kmax)
                .map(|k| self.level_sq_sum(k))
                .sum(),
        }
    }

    /// `Σ c²` over supported keys of depth exactly `k`.
    pub fn level_sq_sum(&self, k: usize) -> Rational {
        let nodes = self.supported_nodes_at(k);
        if nodes.is_zero() {
            return Rational::zero();
        }
        match self.level_coefficients(k) {
            Some(cs) => {
                let per: Rational = cs.iter().map(|(_, c)| c.square().clone()).sum();
                per * Rational::from_integer(nodes)
            }
            None => self
                .explicit_support()
                .expect("explicit")
                .iter()
                .filter(|(key, _)| key.depth() == k)
                .map(|(_, c)| c.square().clone())
                .sum(),
        }
    }

    /// Number of addresses of depth `k` inside the restriction.
    pub fn supported_nodes_at(&self, k: usize) -> BigInt {
        let r = self.restriction.as_ref().map_or(0, Address::len);
        if k < r {
            BigInt::zero()
        } else {
            BigInt::one() << (k - r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{enumerate_block, rat};
    use proptest::prelude::*;

    fn key(s: &str, i: usize) -> NodeKey {
        NodeKey::new(s.parse().unwrap(), i).unwrap()
    }

    fn third() -> Selector {
        Selector::slope(rat(1, 3)).unwrap()
    }

    #[test]
    fn make_fn_coefficients() {
        let f = make_fn(third(), 5).unwrap();
        assert_eq!(f.coeff_sq(&key("", 0)).unwrap().square(), &int(1));
        assert_eq!(f.coeff_sq(&key("010", 1)).unwrap().square(), &rat(1, 128));
        assert_eq!(f.coeff_sq(&key("01", 0)).unwrap().square(), &rat(1, 36));
        assert!(f.coeff_sq(&key("010", 2)).unwrap().is_zero());
        assert!(matches!(
            f.coeff_sq(&key("010101", 2)),
            Err(Error::DepthExceeded { .. })
        ));
    }

    #[test]
    fn admissibility() {
        assert!(make_fn(Selector::Diagonal, 10).is_ok());
        assert!(matches!(
            make_fn(Selector::Constant { value: 2 }, 3),
            Err(Error::SelectorOutOfRange { level: 0, value: 2 })
        ));
        let table = Selector::Table {
            values: vec![0, 1, 1, 4],
        };
        assert!(make_fn(table.clone(), 2).is_ok());
        assert!(matches!(
            make_fn(table.clone(), 3),
            Err(Error::SelectorOutOfRange { level: 3, value: 4 })
        ));
        assert!(make_fn(table, 4).is_err());
    }

    #[test]
    fn restrict_behaviour() {
        let f = make_fn(third(), 6).unwrap();
        assert_eq!(restrict(&f, &Address::root()).unwrap().coeff_sq(&key("01", 0)).unwrap(),
                   f.coeff_sq(&key("01", 0)).unwrap());
        let tau: Address = "1".parse().unwrap();
        let g = restrict(&f, &tau).unwrap();
        assert!(g.coeff_sq(&key("01", 0)).unwrap().is_zero());
        assert_eq!(restrict(&g, &tau).unwrap(), g);
        for k in 1..=6 {
            let alive = crate::dyadic::addresses_at(k)
                .filter(|s| !g.coeff_sq(&NodeKey::new(s.clone(), third().at(k).unwrap()).unwrap()).unwrap().is_zero())
                .count();
            assert_eq!(alive, 1 << (k - 1));
        }
        let h = restrict(&g, &"0".parse().unwrap()).unwrap();
        assert!(h.is_zero());
        let deeper = restrict(&g, &"10".parse().unwrap()).unwrap();
        assert_eq!(deeper.restriction, Some("10".parse().unwrap()));
    }

    #[test]
    fn combine_merges() {
        let sels = [Selector::Zero, Selector::Diagonal];
        let f = combine(&[int(1), rat(1, 2)], &sels, 4).unwrap();
        assert_eq!(f.merged_weights(0).unwrap(), vec![(0, rat(3, 2))]);
        assert_eq!(f.merged_weights(2).unwrap(), vec![(0, int(1)), (2, rat(1, 2))]);
        assert_eq!(f.coeff_sq(&key("", 0)).unwrap().square(), &rat(9, 4));
        assert!(f.coeff_sq(&key("01", 1)).unwrap().is_zero());

        let cancel = combine(&[int(1), int(-1)], &[third(), third()], 8).unwrap();
        assert!(cancel.is_zero());
        assert!(matches!(
            combine(&[int(1)], &sels, 3),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn negative_weights_keep_sign() {
        let f = combine(&[rat(-1, 8)], &[third()], 3).unwrap();
        let c = f.coeff_sq(&key("", 0)).unwrap();
        assert_eq!(c.sign(), Sign::Neg);
        assert_eq!(c.square(), &rat(1, 64));
    }

    #[test]
    fn kmax_consistency() {
        let f8 = combine(&[int(1), rat(-3, 2)], &[third(), Selector::slope(rat(3, 4)).unwrap()], 8).unwrap();
        let f12 = f8.with_kmax(12).unwrap();
        for k in enumerate_block(0, 8) {
            assert_eq!(f8.coeff_sq(&k).unwrap(), f12.coeff_sq(&k).unwrap());
        }
    }

    #[test]
    fn json_round_trip() {
        let f = restrict(
            &combine(&[int(1), rat(1, 4)], &[third(), Selector::slope(rat(1, 2)).unwrap()], 10).unwrap(),
            &"01".parse().unwrap(),
        )
        .unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(
            s,
            r#"{"kmax":10,"scheme":{"type":"combined","terms":[{"weight":"1/1","selector":{"type":"slope","t":"1/3"}},{"weight":"1/4","selector":{"type":"slope","t":"1/2"}}]},"restriction":"01"}"#
        );
        assert_eq!(serde_json::from_str::<BasicFunction>(&s).unwrap(), f);

        let mut m = BTreeMap::new();
        m.insert(key("1", 1), SignedSquare::from_rational(&rat(-1, 3)));
        let e = BasicFunction::explicit(3, m).unwrap();
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<BasicFunction>(&s).unwrap(), e);

        let bad = r#"{"kmax":3,"scheme":{"type":"fn","selector":{"type":"constant","value":2}}}"#;
        assert!(serde_json::from_str::<BasicFunction>(bad).is_err());
    }

    fn selector_strategy() -> impl Strategy<Value = Selector> {
        prop_oneof![
            Just(Selector::Zero),
            Just(Selector::Diagonal),
            (1i64..20, 2i64..21)
                .prop_filter("proper", |(p, q)| p < q)
                .prop_map(|(p, q)| Selector::slope(rat(p, q)).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn scaling(sel in selector_strategy(), p in -20i64..20, q in 1i64..20) {
            let a = rat(p, q);
            let f = make_fn(sel.clone(), 6).unwrap();
            let g = combine(std::slice::from_ref(&a), &[sel], 6).unwrap();
            for k in enumerate_block(0, 6) {
                prop_assert_eq!(g.coeff_sq(&k).unwrap(), f.coeff_sq(&k).unwrap().scale(&a));
            }
        }

        #[test]
        fn rejection_iff_violation(values in prop::collection::vec(0usize..6, 6)) {
            let kmax = 5;
            let sel = Selector::Table { values: values.clone() };
            let bad = values.iter().enumerate().any(|(k, &v)| v > k);
            prop_assert_eq!(make_fn(sel, kmax).is_err(), bad);
        }
    }
}
