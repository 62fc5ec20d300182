//! Ambient spaces other than `ℓ₂`.
//!
//! The general construction needs, for every block `B_k` of consecutive depths,
//! vectors `e(σ, i)` living on their own range of basis coordinates and
//! spanning a 2-Euclidean section. Here those vectors are seeded Gaussian
//! columns, calibrated and then validated on sampled coefficient vectors.
//! Blocks are exponentially large, so a frame is only materialized for the
//! keys a computation actually touches.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{block_size, fmt_q, int, serde_q_vec, NodeKey, Rational};
use crate::error::{Error, Result};
use crate::eval::{sqrt_enclosure, Enclosure, ESCALATION_BITS};

/// Norm of a coordinate vector with respect to the ambient basis.
pub type OracleFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendKind {
    #[serde(alias = "l2")]
    L2Exact,
    Lp { p: f64 },
    /// User-supplied norm; only constructible in code.
    Oracle,
}

/// JSON form of a backend: `{"kind":"lp","p":4,"tolerance":1e-9,"seed":12345}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Clone)]
pub struct NormBackend {
    pub kind: BackendKind,
    pub tolerance: f64,
    pub seed: u64,
    oracle: Option<OracleFn>,
}

impl fmt::Debug for NormBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormBackend")
            .field("kind", &self.kind)
            .field("tolerance", &self.tolerance)
            .field("seed", &self.seed)
            .finish()
    }
}

impl NormBackend {
    pub fn l2() -> Self {
        Self {
            kind: BackendKind::L2Exact,
            tolerance: 0.0,
            seed: 0,
            oracle: None,
        }
    }

    pub fn lp(p: f64, tolerance: f64, seed: u64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::Backend(format!("p must be finite and >= 1, got {p}")));
        }
        Ok(Self {
            kind: BackendKind::Lp { p },
            tolerance,
            seed,
            oracle: None,
        })
    }

    pub fn oracle(norm: OracleFn, tolerance: f64, seed: u64) -> Self {
        Self {
            kind: BackendKind::Oracle,
            tolerance,
            seed,
            oracle: Some(norm),
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self> {
        match &cfg.kind {
            BackendKind::L2Exact => Ok(Self {
                seed: cfg.seed,
                ..Self::l2()
            }),
            BackendKind::Lp { p } => Self::lp(*p, cfg.tolerance, cfg.seed),
            BackendKind::Oracle => Err(Error::Backend(
                "oracle backends carry a closure and cannot be read from JSON".into(),
            )),
        }
    }

    pub fn config(&self) -> BackendConfig {
        BackendConfig {
            kind: self.kind.clone(),
            tolerance: self.tolerance,
            seed: self.seed,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.kind == BackendKind::L2Exact
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        match &self.kind {
            BackendKind::L2Exact => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            BackendKind::Lp { p } => x.iter().map(|v| v.abs().powf(*p)).sum::<f64>().powf(1.0 / p),
            BackendKind::Oracle => (self.oracle.as_ref().expect("oracle backend"))(x),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed derived from a base seed and a list of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(seed), |h, t| splitmix(h ^ t))
}

fn key_tag(key: &NodeKey) -> u64 {
    let bits = key.sigma.bits();
    let mut h = splitmix(bits.len() as u64 ^ ((key.level_index as u64) << 32));
    for chunk in bits.chunks(64) {
        let word = chunk
            .iter()
            .enumerate()
            .fold(0u64, |w, (n, &b)| w | (u64::from(b) << n));
        h = splitmix(h ^ word);
    }
    h
}

/// `Σ_{i=a}^{b-1} 1/(i+1)²`, summed pairwise to keep denominators balanced.
pub fn inverse_square_sum(a: usize, b: usize) -> Rational {
    match b.saturating_sub(a) {
        0 => Rational::zero(),
        1 => Rational::new(1.into(), ((a + 1) * (a + 1)).into()),
        n => inverse_square_sum(a, a + n / 2) + inverse_square_sum(a + n / 2, b),
    }
}

/// Cut points `0 = n_0 < n_1 < …` with `u_{k+1} < u_k / 3`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockSchedule {
    pub cuts: Vec<usize>,
    /// Exact `u_k²` for the blocks `[n_k, n_{k+1})`.
    #[serde(with = "serde_q_vec")]
    pub u_sq: Vec<Rational>,
    pub u: Vec<Enclosure>,
}

impl BlockSchedule {
    /// Validates explicit cuts; the last cut closes the last block.
    pub fn from_cuts(cuts: &[usize]) -> Result<Self> {
        let sched = Self::partition(cuts)?;
        for (k, w) in sched.u_sq.windows(2).enumerate() {
            if &w[1] * int(9) >= w[0] {
                return Err(Error::Schedule(format!(
                    "u_{}² = {} is not below u_{k}²/9 = {}",
                    k + 1,
                    fmt_q(&w[1]),
                    fmt_q(&(&w[0] / int(9)))
                )));
            }
        }
        Ok(sched)
    }

    /// Blocks from cuts without the decay condition. Fine for checks that
    /// look at one block at a time.
    pub fn partition(cuts: &[usize]) -> Result<Self> {
        if cuts.len() < 2 || cuts[0] != 0 {
            return Err(Error::Schedule(format!(
                "need at least two cuts starting at 0, got {cuts:?}"
            )));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Schedule(format!("cuts must increase strictly: {cuts:?}")));
        }
        let u_sq: Vec<Rational> = cuts
            .windows(2)
            .map(|w| inverse_square_sum(w[0], w[1]))
            .collect();
        let u = u_sq
            .iter()
            .map(|q| sqrt_enclosure(q, ESCALATION_BITS[0]))
            .collect::<Result<_>>()?;
        Ok(Self {
            cuts: cuts.to_vec(),
            u_sq,
            u,
        })
    }

    pub fn blocks(&self) -> usize {
        self.u_sq.len()
    }

    /// Block containing depth `d`, if it lies before the last cut.
    pub fn block_of(&self, d: usize) -> Option<usize> {
        (d < *self.cuts.last().expect("nonempty")).then(|| {
            self.cuts.partition_point(|&c| c <= d) - 1
        })
    }

    /// Last depth covered by the schedule.
    pub fn depth(&self) -> usize {
        self.cuts.last().expect("nonempty") - 1
    }

    /// `|B_k|`.
    pub fn block_size(&self, k: usize) -> BigUint {
        block_size(self.cuts[k], self.cuts[k + 1] - 1)
    }

    /// Offsets `m_0 = 0 < m_1 < …`: block `k` owns basis positions
    /// `[m_k, m_{k+1})`. The width is `|B_k|` for `ℓ₂` and
    /// `|B_k|·⌈C·ln|B_k|⌉` (at least `|B_k|`) otherwise.
    pub fn offsets(&self, backend: &NormBackend, dim_factor: f64) -> Vec<BigUint> {
        let mut out = vec![BigUint::zero()];
        for k in 0..self.blocks() {
            let n = self.block_size(k);
            let width = if backend.is_exact() {
                n.clone()
            } else {
                let ln = n.bits() as f64 * std::f64::consts::LN_2;
                &n * BigUint::from((dim_factor * ln).ceil().max(1.0) as u64)
            };
            let next = out.last().expect("nonempty") + width;
            out.push(next);
        }
        out
    }
}

/// Proposal rule for [`make_schedule`]: the first cut is searched upward from
/// 1, later cuts follow `n_{k+1} = max(n_k + 1, factor·n_k)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthConfig {
    pub factor: usize,
    pub max_first_cut: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            factor: 10,
            max_first_cut: 1000,
        }
    }
}

/// First schedule with `count` blocks produced by the growth rule that
/// satisfies the decay condition exactly.
pub fn make_schedule(count: usize, growth: &GrowthConfig) -> Result<BlockSchedule> {
    if count == 0 {
        return Err(Error::Schedule("need at least one block".into()));
    }
    let mut last = None;
    for first in 1..=growth.max_first_cut {
        let mut cuts = vec![0, first];
        while cuts.len() < count + 1 {
            let n = *cuts.last().expect("nonempty");
            cuts.push((n + 1).max(growth.factor.saturating_mul(n)));
        }
        match BlockSchedule::from_cuts(&cuts) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Schedule(format!(
        "no first cut up to {} works with factor {}: {}",
        growth.max_first_cut,
        growth.factor,
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// `C` in the dimension heuristic `C·N·ln N`.
    pub dim_factor: f64,
    pub calibration_samples: usize,
    pub validation_samples: usize,
    pub max_attempts: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            dim_factor: 4.0,
            calibration_samples: 1000,
            validation_samples: 10_000,
            max_attempts: 5,
        }
    }
}

/// Frame vectors for some keys of one block, as columns over a local
/// coordinate range placed at the block's offset.
#[derive(Clone, Debug, Serialize)]
pub struct DvoretzkyFrame {
    pub block: usize,
    pub offset: BigUint,
    pub dim: usize,
    pub keys: Vec<NodeKey>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub seed: u64,
    pub attempts: u32,
    pub scale: f64,
    /// Extreme ratios `‖Σλe‖ / ‖λ‖₂` seen during validation.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl DvoretzkyFrame {
    fn position(&self, key: &NodeKey) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    /// Local coordinates of `Σ w·e(key)`.
    pub fn combine(&self, weights: &[(NodeKey, f64)]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.dim];
        for (key, w) in weights {
            let p = self.position(key).ok_or_else(|| {
                Error::Frame(format!("key {key:?} has no vector in block {}", self.block))
            })?;
            for (yi, ei) in y.iter_mut().zip(&self.vectors[p]) {
                *yi += w * ei;
            }
        }
        Ok(y)
    }

    fn ratio(&self, backend: &NormBackend, lambda: &[f64]) -> f64 {
        let mut y = vec![0.0; self.dim];
        for (l, v) in lambda.iter().zip(&self.vectors) {
            for (yi, ei) in y.iter_mut().zip(v) {
                *yi += l * ei;
            }
        }
        let l2 = lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
        backend.norm(&y) / l2
    }
}

fn sample_direction(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Frame for `keys` (all in block `k`): identity columns for `ℓ₂`, otherwise
/// seeded Gaussian columns scaled so the median sampled ratio is `1/√2`,
/// then validated against `½ ≤ ‖Σλe‖/‖λ‖₂ ≤ 1` on fresh samples. Reseeds up
/// to `max_attempts` times.
pub fn sample_frame_for_keys(
    k: usize,
    keys: &[NodeKey],
    sched: &BlockSchedule,
    backend: &NormBackend,
    fcfg: &FrameConfig,
) -> Result<DvoretzkyFrame> {
    let mut keys = keys.to_vec();
    keys.sort();
    keys.dedup();
    for key in &keys {
        if sched.block_of(key.depth()) != Some(k) {
            return Err(Error::Frame(format!("key {key:?} is not in block {k}")));
        }
    }
    let offset = sched.offsets(backend, fcfg.dim_factor)[k].clone();
    let n = keys.len();
    if backend.is_exact() || n == 0 {
        let vectors = (0..n)
            .map(|j| (0..n).map(|m| if m == j { 1.0 } else { 0.0 }).collect())
            .collect();
        return Ok(DvoretzkyFrame {
            block: k,
            offset,
            dim: n,
            keys,
            vectors,
            seed: backend.seed,
            attempts: 0,
            scale: 1.0,
            min_ratio: 1.0,
            max_ratio: 1.0,
        });
    }

    let dim = ((fcfg.dim_factor * n as f64 * (n as f64).ln().max(1.0)).ceil() as usize).max(n);
    let lo = 0.5 - backend.tolerance;
    let hi = 1.0 + backend.tolerance;
    let mut worst = (f64::INFINITY, 0.0f64);
    for attempt in 0..fcfg.max_attempts {
        let seed = derive_seed(backend.seed, &[k as u64, u64::from(attempt)]);
        let raw: Vec<Vec<f64>> = keys
            .iter()
            .map(|key| sample_direction(derive_seed(seed, &[key_tag(key)]), dim))
            .collect();
        let mut frame = DvoretzkyFrame {
            block: k,
            offset: offset.clone(),
            dim,
            keys: keys.clone(),
            vectors: raw,
            seed,
            attempts: attempt + 1,
            scale: 1.0,
            min_ratio: 0.0,
            max_ratio: 0.0,
        };
        let calib: Vec<f64> = (0..fcfg.calibration_samples.max(1))
            .into_par_iter()
            .map(|s| frame.ratio(backend, &sample_direction(derive_seed(seed, &[1, s as u64]), n)))
            .collect();
        let scale = std::f64::consts::FRAC_1_SQRT_2 / median(calib);
        for v in &mut frame.vectors {
            v.iter_mut().for_each(|x| *x *= scale);
        }
        frame.scale = scale;
        let (mn, mx) = (0..fcfg.validation_samples)
            .into_par_iter()
            .map(|s| frame.ratio(backend, &sample_direction(derive_seed(seed, &[2, s as u64]), n)))
            .fold(|| (f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r), b.max(r)))
            .reduce(|| (f64::INFINITY, 0.0f64), |(a, b), (c, d)| (a.min(c), b.max(d)));
        frame.min_ratio = mn;
        frame.max_ratio = mx;
        if mn >= lo && mx <= hi {
            return Ok(frame);
        }
        worst = (worst.0.min(mn), worst.1.max(mx));
    }
    Err(Error::Frame(format!(
        "block {k}: ratios left [1/2, 1] after {} attempts (worst {:.6} .. {:.6})",
        fcfg.max_attempts, worst.0, worst.1
    )))
}

/// Frame over the whole block `k`; refuses blocks above 2^16 keys.
pub fn sample_frame(
    k: usize,
    sched: &BlockSchedule,
    backend: &NormBackend,
    fcfg: &FrameConfig,
) -> Result<DvoretzkyFrame> {
    if k >= sched.blocks() {
        return Err(Error::Frame(format!("block {k} beyond schedule")));
    }
    let size = sched.block_size(k);
    if size > BigUint::from(1u32 << 16) {
        return Err(Error::Frame(format!("block {k} has {size} keys; sample a subset")));
    }
    let keys: Vec<NodeKey> =
        crate::dyadic::enumerate_block(sched.cuts[k], sched.cuts[k + 1] - 1).collect();
    sample_frame_for_keys(k, &keys, sched, backend, fcfg)
}

/// Frames for every block touched by a set of keys.
#[derive(Clone, Debug, Serialize)]
pub struct FrameSet {
    pub frames: Vec<DvoretzkyFrame>,
}

impl FrameSet {
    pub fn for_keys<'a>(
        keys: impl IntoIterator<Item = &'a NodeKey>,
        sched: &BlockSchedule,
        backend: &NormBackend,
        fcfg: &FrameConfig,
    ) -> Result<Self> {
        let mut by_block: std::collections::BTreeMap<usize, Vec<NodeKey>> = Default::default();
        for key in keys {
            let k = sched.block_of(key.depth()).ok_or_else(|| {
                Error::Frame(format!("depth {} beyond schedule", key.depth()))
            })?;
            by_block.entry(k).or_default().push(key.clone());
        }
        let frames = by_block
            .into_par_iter()
            .map(|(k, ks)| sample_frame_for_keys(k, &ks, sched, backend, fcfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { frames })
    }

    pub fn frame(&self, block: usize) -> Option<&DvoretzkyFrame> {
        self.frames.iter().find(|f| f.block == block)
    }
}

/// `‖Σ w·e(key)‖` in the ambient space. Blocks occupy disjoint coordinate
/// ranges, laid out in block order.
pub fn gen_norm(
    weights: &[(NodeKey, f64)],
    frames: &FrameSet,
    sched: &BlockSchedule,
    backend: &NormBackend,
) -> Result<f64> {
    let mut coords = Vec::new();
    for frame in &frames.frames {
        let part: Vec<_> = weights
            .iter()
            .filter(|(k, _)| sched.block_of(k.depth()) == Some(frame.block))
            .cloned()
            .collect();
        coords.extend(frame.combine(&part)?);
    }
    let covered: usize = weights
        .iter()
        .filter(|(k, _)| {
            sched
                .block_of(k.depth())
                .and_then(|b| frames.frame(b))
                .is_some()
        })
        .count();
    if covered != weights.len() {
        return Err(Error::Frame("some keys lie outside every frame".into()));
    }
    Ok(backend.norm(&coords))
}

/// Exact norm square of `Σ w·e(key)` for orthonormal `e`, with rational weights.
pub fn gen_norm_sq_exact(weights: &[(NodeKey, Rational)]) -> Rational {
    let mut seen = std::collections::BTreeMap::new();
    for (k, w) in weights {
        *seen.entry(k.clone()).or_insert_with(Rational::zero) += w;
    }
    seen.values().map(|w| w * w).sum()
}

/// Sampled lower estimate of `sup ‖q_{k,l}‖` over coordinate segments of
/// random vectors with `depth` basis coefficients. Exactly 1 for `ℓ₂`; the
/// value never drops below 1 (the full segment).
pub fn estimate_k(backend: &NormBackend, depth: usize, samples: usize) -> f64 {
    if backend.is_exact() || depth == 0 {
        return 1.0;
    }
    (0..samples)
        .into_par_iter()
        .map(|s| {
            let seed = derive_seed(backend.seed, &[0x4b, s as u64]);
            let v = sample_direction(seed, depth);
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed));
            let a = rng.random_range(0..depth);
            let b = rng.random_range(a..depth);
            let seg: Vec<f64> = v
                .iter()
                .enumerate()
                .map(|(n, x)| if (a..=b).contains(&n) { *x } else { 0.0 })
                .collect();
            let full = backend.norm(&v);
            if full > 0.0 {
                backend.norm(&seg) / full
            } else {
                1.0
            }
        })
        .reduce(|| 1.0, f64::max)
}

/// Norm of the summing basis of `c_0`: `‖Σ aₙ sₙ‖ = maxₙ |Σ_{m≥n} a_m|`.
/// Its basis constant is 2, which makes it a useful oracle for tests.
pub fn summing_basis_norm(a: &[f64]) -> f64 {
    let mut tail = 0.0f64;
    let mut best = 0.0f64;
    for x in a.iter().rev() {
        tail += x;
        best = best.max(tail.abs());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::rat;

    #[test]
    fn schedule_examples() {
        let s = BlockSchedule::from_cuts(&[0, 3]).unwrap();
        assert_eq!(s.u_sq, vec![rat(49, 36)]);
        assert!(BlockSchedule::from_cuts(&[0, 3, 30, 300]).is_err());
        for ok in [&[0, 8, 80, 800][..], &[0, 3, 7], &[0, 3, 7, 8], &[0, 2, 3]] {
            let s = BlockSchedule::from_cuts(ok).unwrap();
            for w in s.u_sq.windows(2) {
                assert!(&w[1] * int(9) < w[0]);
            }
        }
        assert!(BlockSchedule::from_cuts(&[1, 3]).is_err());
        assert!(BlockSchedule::from_cuts(&[0, 3, 3]).is_err());
    }

    #[test]
    fn u1_for_cut_thirty() {
        // u_1² for the cut pair (3, 30): about 0.251, above 49/324
        let u1 = inverse_square_sum(3, 30);
        assert!(u1 > rat(251, 1000) && u1 < rat(252, 1000));
        assert!(u1 * int(9) >= rat(49, 36));
    }

    #[test]
    fn schedule_search() {
        let s = make_schedule(4, &GrowthConfig::default()).unwrap();
        assert_eq!(s.cuts[0], 0);
        assert_eq!(s.blocks(), 4);
        for w in s.u_sq.windows(2) {
            assert!(&w[1] * int(9) < w[0]);
        }
        assert_eq!(make_schedule(1, &GrowthConfig::default()).unwrap().cuts, vec![0, 1]);
        let stuck = GrowthConfig {
            factor: 1,
            max_first_cut: 50,
        };
        assert!(make_schedule(3, &stuck).is_err());
    }

    #[test]
    fn offsets_increase_and_separate() {
        let s = BlockSchedule::from_cuts(&[0, 3, 7]).unwrap();
        let l2 = s.offsets(&NormBackend::l2(), 4.0);
        assert_eq!(l2, vec![0u32.into(), 17u32.into(), (17u32 + 8 * 4 + 16 * 5 + 32 * 6 + 64 * 7).into()]);
        let lp = s.offsets(&NormBackend::lp(4.0, 1e-9, 1).unwrap(), 4.0);
        assert!(lp.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s.block_of(2), Some(0));
        assert_eq!(s.block_of(3), Some(1));
        assert_eq!(s.block_of(7), None);
    }

    #[test]
    fn l2_identity_frame() {
        let s = BlockSchedule::from_cuts(&[0, 2, 3]).unwrap();
        let f = sample_frame(0, &s, &NormBackend::l2(), &FrameConfig::default()).unwrap();
        assert_eq!(f.keys.len(), 5);
        let w: Vec<_> = f.keys.iter().take(2).cloned().zip([3.0, 4.0]).collect();
        let fs = FrameSet { frames: vec![f] };
        assert_eq!(gen_norm(&w, &fs, &s, &NormBackend::l2()).unwrap(), 5.0);
        let one = vec![(fs.frames[0].keys[0].clone(), 1.0)];
        assert_eq!(gen_norm(&one, &fs, &s, &NormBackend::l2()).unwrap(), 1.0);
    }

    #[test]
    fn lp_frame_is_deterministic_and_validated() {
        let s = BlockSchedule::from_cuts(&[0, 2, 3]).unwrap();
        let b = NormBackend::lp(4.0, 1e-9, 12345).unwrap();
        let cfg = FrameConfig {
            validation_samples: 2000,
            ..FrameConfig::default()
        };
        let f1 = sample_frame(1, &s, &b, &cfg).unwrap();
        let f2 = sample_frame(1, &s, &b, &cfg).unwrap();
        assert_eq!(f1.vectors, f2.vectors);
        assert_eq!(f1.keys.len(), 12);
        assert!(f1.min_ratio >= 0.5 - 1e-9 && f1.max_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn l1_single_vector_norm() {
        let s = BlockSchedule::from_cuts(&[0, 2, 3]).unwrap();
        let b = NormBackend::lp(1.0, 1e-9, 7).unwrap();
        let cfg = FrameConfig {
            validation_samples: 500,
            ..FrameConfig::default()
        };
        let f = sample_frame(0, &s, &b, &cfg).unwrap();
        let key = f.keys[3].clone();
        let expected: f64 = f.vectors[3].iter().map(|x| x.abs()).sum();
        let fs = FrameSet { frames: vec![f] };
        let got = gen_norm(&[(key, 1.0)], &fs, &s, &b).unwrap();
        assert!((got - expected).abs() <= 1e-12 * fs.frames[0].dim as f64 * expected);
    }

    #[test]
    fn frame_errors() {
        let s = BlockSchedule::from_cuts(&[0, 2, 3]).unwrap();
        let key = NodeKey::new("01".parse().unwrap(), 1).unwrap();
        let b = NormBackend::l2();
        assert!(sample_frame_for_keys(0, std::slice::from_ref(&key), &s, &b, &FrameConfig::default()).is_err());
        let fs = FrameSet::for_keys([&NodeKey::new("".parse().unwrap(), 0).unwrap()], &s, &b, &FrameConfig::default()).unwrap();
        assert!(gen_norm(&[(key, 1.0)], &fs, &s, &b).is_err());
    }

    #[test]
    fn k_estimates() {
        assert_eq!(estimate_k(&NormBackend::l2(), 10, 100), 1.0);
        let l1 = NormBackend::lp(1.0, 1e-9, 3).unwrap();
        assert_eq!(estimate_k(&l1, 16, 1000), 1.0);
        let sb = NormBackend::oracle(Arc::new(summing_basis_norm), 1e-9, 99);
        let small = estimate_k(&sb, 12, 100);
        let large = estimate_k(&sb, 12, 10_000);
        assert!(small >= 1.0 && large >= small && large <= 2.0 + 1e-12);
        assert!(large > 1.2);
    }

    #[test]
    fn exact_pythagoras() {
        let a = NodeKey::new("".parse().unwrap(), 0).unwrap();
        let b = NodeKey::new("1".parse().unwrap(), 0).unwrap();
        assert_eq!(gen_norm_sq_exact(&[(a, int(3)), (b, int(4))]), int(25));
    }

    #[test]
    fn config_json() {
        let c: BackendConfig = serde_json::from_str(r#"{"kind":"lp","p":4,"tolerance":1e-9,"seed":12345}"#).unwrap();
        assert_eq!(c.kind, BackendKind::Lp { p: 4.0 });
        let b = NormBackend::from_config(&c).unwrap();
        assert_eq!(b.seed, 12345);
        let c: BackendConfig = serde_json::from_str(r#"{"kind":"l2"}"#).unwrap();
        assert!(NormBackend::from_config(&c).unwrap().is_exact());
        let c: BackendConfig = serde_json::from_str(r#"{"kind":"oracle"}"#).unwrap();
        assert!(NormBackend::from_config(&c).is_err());
        assert!(NormBackend::lp(0.5, 1e-9, 0).is_err());
    }
}
