//! Executable versions of every estimate the construction relies on, and the
//! difference-quotient blow-up harness.
//!
//! Hilbert-space checks are exact: equalities and single-norm inequalities are
//! compared on squares, sums of distinct square roots go through
//! [`certify_le_sqrt_sum`]. Checks in other spaces depend on sampled frames
//! and a sampled basis constant and are labelled empirical.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{
    derive_seed, estimate_k, gen_norm, BackendConfig, BlockSchedule, FrameConfig,
    FrameSet, NormBackend,
};
use crate::carving::CarvingConfig;
use crate::dyadic::{
    fmt_q, int, interval_of, locate, pow2, rat, serde_q, serde_q_vec, to_f64, Address, NodeKey,
    Rational,
};
use crate::error::{Error, Result};
use crate::eval::{
    block_squares, certify_le_sqrt_sum, integral, pettis_check, primitive_diff, sqrt_enclosure,
    IntegralVector, PettisKind,
};
use crate::family::{max_collision_bound, slope_selector};
use crate::stepfun::{combine, make_fn, restrict, BasicFunction, Selector};

/// Lemma identifiers understood by [`verify_lemma`].
pub const LEMMAS: [&str; 9] = ["3.1-1", "3.1-2", "3.1-3", "3.2", "3.3", "4.2", "4.3", "4.4", "4.5"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    fn of(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// One logged inequality or equality: a name plus the values compared.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub name: String,
    pub holds: bool,
    #[serde(flatten)]
    pub values: BTreeMap<String, Value>,
}

impl Step {
    fn new(name: &str, holds: bool) -> Self {
        Self {
            name: name.into(),
            holds,
            values: BTreeMap::new(),
        }
    }

    fn q(mut self, key: &str, v: &Rational) -> Self {
        self.values.insert(key.into(), Value::String(fmt_q(v)));
        self
    }

    fn v(mut self, key: &str, v: impl Serialize) -> Self {
        self.values
            .insert(key.into(), serde_json::to_value(v).expect("serializable"));
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaParams {
    /// Truncation depth; each lemma has its own default.
    pub kmax: Option<usize>,
    pub pieces_per_set: usize,
    #[serde(with = "serde_q_vec")]
    pub slopes: Vec<Rational>,
    /// Fixed weights; empty means random functions.
    #[serde(with = "serde_q_vec")]
    pub weights: Vec<Rational>,
    /// Deepest `τ` sampled or enumerated.
    pub max_depth: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub backend: BackendConfig,
    pub cuts: Option<Vec<usize>>,
    pub frame: FrameConfig,
    /// Samples behind the basis-constant estimate.
    pub k_samples: usize,
    /// Relative slack for empirical brackets.
    pub slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<BasicFunction>,
    /// Record wall time in the report (breaks byte-identical output).
    pub timing: bool,
}

impl Default for LemmaParams {
    fn default() -> Self {
        Self {
            kmax: None,
            pieces_per_set: 1,
            slopes: vec![rat(1, 3)],
            weights: Vec::new(),
            max_depth: None,
            samples: 200,
            seed: 0,
            backend: NormBackend::l2().config(),
            cuts: None,
            frame: FrameConfig::default(),
            k_samples: 10_000,
            slack: 1e-6,
            function: None,
            timing: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub params: LemmaParams,
    pub status: Status,
    pub counterexamples: Vec<Value>,
    pub steps: Vec<Step>,
    pub ms: Option<u64>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

fn rng_for(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

fn random_rational(rng: &mut ChaCha8Rng, bound: i64, max_den: i64) -> Rational {
    let q = rng.random_range(1..=max_den);
    rat(rng.random_range(-bound * q..=bound * q), q)
}

fn random_nonzero(rng: &mut ChaCha8Rng, bound: i64, max_den: i64) -> Rational {
    loop {
        let r = random_rational(rng, bound, max_den);
        if !r.is_zero() {
            return r;
        }
    }
}

/// `n` distinct slopes `p/q ∈ (0, 1)` with `q ≤ 16`.
fn random_slopes(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    let mut out: Vec<Rational> = Vec::with_capacity(n);
    while out.len() < n {
        let q = rng.random_range(2..=16);
        let t = rat(rng.random_range(1..q), q);
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn slope_selectors(ts: &[Rational]) -> Result<Vec<Selector>> {
    ts.iter().map(|t| Selector::slope(t.clone())).collect()
}

fn random_address(rng: &mut ChaCha8Rng, max_depth: usize) -> Address {
    let d = rng.random_range(0..=max_depth);
    Address::from_bits((0..d).map(|_| rng.random_bool(0.5)))
}

/// Point of `[0, 1]`: dyadic with a fine denominator or a generic rational.
fn random_point(rng: &mut ChaCha8Rng, kmax: usize) -> Rational {
    if rng.random_bool(0.5) {
        let den = 1i64 << (kmax + 3).min(40);
        rat(rng.random_range(0..=den), den)
    } else {
        let den = rng.random_range(1..=97);
        rat(rng.random_range(0..=den), den)
    }
}

/// The function under test: fixed by `function` or `weights`, else random
/// combination of up to three slope selectors.
fn function_for(params: &LemmaParams, kmax: usize, rng: &mut ChaCha8Rng) -> Result<BasicFunction> {
    if let Some(f) = &params.function {
        return f.with_kmax(kmax);
    }
    if !params.weights.is_empty() {
        return combine(&params.weights, &slope_selectors(&params.slopes)?, kmax);
    }
    let n = rng.random_range(1..=3);
    let ts = random_slopes(rng, n);
    let ws: Vec<_> = (0..n).map(|_| random_nonzero(rng, 4, 8)).collect();
    combine(&ws, &slope_selectors(&ts)?, kmax)
}

fn fn_json(f: &BasicFunction) -> Value {
    serde_json::to_value(f).expect("serializable")
}

/// Runs lemma `id` and reports pass/fail with counterexamples.
pub fn verify_lemma(id: &str, params: &LemmaParams) -> Result<LemmaReport> {
    let start = Instant::now();
    let (steps, counterexamples) = match id {
        "3.1-1" => lemma_3_1_1(params)?,
        "3.1-2" => lemma_3_1_2(params)?,
        "3.1-3" => lemma_3_1_3(params)?,
        "3.2" => lemma_3_2(params)?,
        "3.3" => lemma_3_3(params)?,
        "4.2" => lemma_4_2(params)?,
        "4.3" => lemma_4_3(params)?,
        "4.4" => lemma_4_4(params)?,
        "4.5" => lemma_4_5(params)?,
        _ => return Err(Error::UnknownLemma(id.into())),
    };
    let ok = counterexamples.is_empty() && steps.iter().all(|s| s.holds);
    Ok(LemmaReport {
        lemma: id.into(),
        params: params.clone(),
        status: Status::of(ok),
        counterexamples,
        steps,
        ms: params.timing.then(|| start.elapsed().as_millis() as u64),
    })
}

type Outcome = Result<(Vec<Step>, Vec<Value>)>;

fn carving(params: &LemmaParams, kmax: usize) -> Result<CarvingConfig> {
    CarvingConfig::new(kmax, params.pieces_per_set)
}

fn tau_depth(params: &LemmaParams, kmax: usize, default: usize) -> Result<usize> {
    let d = params.max_depth.unwrap_or(default.min(kmax));
    if d > kmax {
        return Err(Error::Params(format!("max_depth {d} exceeds kmax {kmax}")));
    }
    Ok(d)
}

/// Collects per-sample results in sample order.
fn run_samples<F>(n: usize, check: F) -> Result<Vec<Option<Value>>>
where
    F: Fn(usize) -> Result<Option<Value>> + Send + Sync,
{
    (0..n).into_par_iter().map(check).collect()
}

fn summarize(name: &str, results: Vec<Option<Value>>) -> (Vec<Step>, Vec<Value>) {
    let checked = results.len();
    let bad: Vec<Value> = results.into_iter().flatten().collect();
    let step = Step::new(name, bad.is_empty())
        .v("checked", checked)
        .v("violations", bad.len());
    (vec![step], bad)
}

/// `‖∫_{[0,1]} f‖² = Σ c²`.
fn lemma_3_1_1(params: &LemmaParams) -> Outcome {
    let kmax = params.kmax.unwrap_or(8);
    let cfg = carving(params, kmax)?;
    let results = run_samples(params.samples, |s| {
        let mut rng = rng_for(params.seed, &[311, s as u64]);
        let f = function_for(params, kmax, &mut rng)?;
        let lhs = integral(&f, &int(0), &int(1), &cfg)?.norm_sq();
        let rhs = f.coefficient_sq_sum();
        Ok((lhs != rhs).then(|| {
            json!({"f": fn_json(&f), "norm_sq": fmt_q(&lhs), "coefficient_sq_sum": fmt_q(&rhs)})
        }))
    })?;
    Ok(summarize("norm-equals-coefficients", results))
}

/// `I ⊆ J ⇒ ‖∫_I f‖ ≤ ‖∫_J f‖`, half on nested dyadic intervals and half on
/// nested rational intervals.
fn lemma_3_1_2(params: &LemmaParams) -> Outcome {
    let kmax = params.kmax.unwrap_or(8);
    let cfg = carving(params, kmax)?;
    let results = run_samples(params.samples, |s| {
        let mut rng = rng_for(params.seed, &[312, s as u64]);
        let f = function_for(params, kmax, &mut rng)?;
        let (i, j) = if s % 2 == 0 {
            let outer = random_address(&mut rng, kmax);
            let extra = rng.random_range(0..=kmax - outer.len());
            let inner = Address::from_bits(
                outer
                    .bits()
                    .iter()
                    .copied()
                    .chain((0..extra).map(|_| rng.random_bool(0.5))),
            );
            let (o, n) = (interval_of(&outer), interval_of(&inner));
            ((n.lo, n.hi), (o.lo, o.hi))
        } else {
            let mut pts: Vec<Rational> = (0..4).map(|_| random_point(&mut rng, kmax)).collect();
            pts.sort();
            ((pts[1].clone(), pts[2].clone()), (pts[0].clone(), pts[3].clone()))
        };
        let inner = integral(&f, &i.0, &i.1, &cfg)?.norm_sq();
        let outer = integral(&f, &j.0, &j.1, &cfg)?.norm_sq();
        Ok((inner > outer).then(|| {
            json!({
                "f": fn_json(&f),
                "inner": [fmt_q(&i.0), fmt_q(&i.1)],
                "outer": [fmt_q(&j.0), fmt_q(&j.1)],
                "inner_sq": fmt_q(&inner),
                "outer_sq": fmt_q(&outer),
            })
        }))
    })?;
    Ok(summarize("monotone-in-interval", results))
}

/// `‖∫_{I_τ} f‖ ≥ ‖∫_{I_τ} f_{|τ}‖ = √(Σ_{σ∈[τ]} c²)`.
fn lemma_3_1_3(params: &LemmaParams) -> Outcome {
    let kmax = params.kmax.unwrap_or(8);
    let cfg = carving(params, kmax)?;
    let depth = tau_depth(params, kmax, 6)?;
    let results = run_samples(params.samples, |s| {
        let mut rng = rng_for(params.seed, &[313, s as u64]);
        let f = function_for(params, kmax, &mut rng)?;
        let tau = random_address(&mut rng, depth);
        let iv = interval_of(&tau);
        let g = restrict(&f, &tau)?;
        let full = integral(&f, &iv.lo, &iv.hi, &cfg)?.norm_sq();
        let part = integral(&g, &iv.lo, &iv.hi, &cfg)?.norm_sq();
        let coeffs = g.coefficient_sq_sum();
        Ok((full < part || part != coeffs).then(|| {
            json!({
                "f": fn_json(&f),
                "tau": tau.to_string(),
                "full_sq": fmt_q(&full),
                "restricted_sq": fmt_q(&part),
                "coefficient_sq_sum": fmt_q(&coeffs),
            })
        }))
    })?;
    Ok(summarize("restriction-bound", results))
}

/// `Σ_{k=i}^{kmax} 1/(k+1)²`.
pub fn truncated_tail(i: usize, kmax: usize) -> Rational {
    crate::backend::inverse_square_sum(i, kmax + 1)
}

/// Truncated exact norm: `‖∫_{I_τ} f(n)_{|τ}‖² = 2^{-|τ|} Σ_{k=|τ|}^{kmax} 1/(k+1)²`
/// for every `τ` up to `max_depth`.
fn lemma_3_2(params: &LemmaParams) -> Outcome {
    let kmax = params.kmax.unwrap_or(10);
    let cfg = carving(params, kmax)?;
    let depth = tau_depth(params, kmax, 5)?;
    let mut steps = Vec::new();
    let mut bad = Vec::new();
    for t in &params.slopes {
        let f = make_fn(Selector::slope(t.clone())?, kmax)?;
        let taus: Vec<Address> = (0..=depth).flat_map(crate::dyadic::addresses_at).collect();
        let results: Vec<Option<Value>> = taus
            .par_iter()
            .map(|tau| {
                let iv = interval_of(tau);
                let got = integral(&restrict(&f, tau)?, &iv.lo, &iv.hi, &cfg)?.norm_sq();
                let want = pow2(-(tau.len() as i64)) * truncated_tail(tau.len(), kmax);
                Ok((got != want).then(|| {
                    json!({"t": fmt_q(t), "tau": tau.to_string(), "got": fmt_q(&got), "want": fmt_q(&want)})
                }))
            })
            .collect::<Result<_>>()?;
        let n = results.len();
        let fails: Vec<Value> = results.into_iter().flatten().collect();
        let cert = pettis_check(&f, &PettisKind::L2Sum)?;
        steps.push(
            Step::new("exact-identity", fails.is_empty())
                .q("t", t)
                .v("taus", n)
                .q("root_norm_sq", &cert.partial)
                .q("tail_bound", cert.tail_bound.as_ref().expect("uniform")),
        );
        bad.extend(fails);
    }
    Ok((steps, bad))
}

/// Triangle inequality over selectors, restricted (`f_{|τ}`) and unrestricted,
/// plus the coefficient bound `Σ c² ≤ (Σ|λ|)² Σ 1/(k+1)²`.
fn lemma_3_3(params: &LemmaParams) -> Outcome {
    let kmax = params.kmax.unwrap_or(8);
    let cfg = carving(params, kmax)?;
    let depth = tau_depth(params, kmax, 4)?;
    let fixed = !params.weights.is_empty();
    let samples = if fixed { params.samples.min(64) } else { params.samples.min(50) };
    let per: Vec<(Option<Value>, bool, u32)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng_for(params.seed, &[33, s as u64]);
            let (ws, ts) = if fixed {
                (params.weights.clone(), params.slopes.clone())
            } else {
                let n = rng.random_range(1..=8);
                let ts = random_slopes(&mut rng, n);
                ((0..n).map(|_| random_nonzero(&mut rng, 4, 8)).collect(), ts)
            };
            let sels = slope_selectors(&ts)?;
            let f = combine(&ws, &sels, kmax)?;
            let fi: Vec<BasicFunction> = sels
                .iter()
                .map(|n| make_fn(n.clone(), kmax))
                .collect::<Result<_>>()?;
            let tau = random_address(&mut rng, depth);
            let iv = interval_of(&tau);

            let mut all_exact = true;
            let mut max_bits = 0;
            let mut bad = Vec::new();
            for restricted in [true, false] {
                let prep = |g: &BasicFunction| -> Result<Rational> {
                    let g = if restricted { restrict(g, &tau)? } else { g.clone() };
                    Ok(integral(&g, &iv.lo, &iv.hi, &cfg)?.norm_sq())
                };
                let lhs = prep(&f)?;
                let terms: Vec<(Rational, Rational)> = ws
                    .iter()
                    .zip(&fi)
                    .map(|(w, g)| Ok((w.abs(), prep(g)?)))
                    .collect::<Result<_>>()?;
                let c = certify_le_sqrt_sum(&lhs, &terms)?;
                all_exact &= c.exact;
                max_bits = max_bits.max(c.bits);
                if !c.holds {
                    bad.push(json!({
                        "restricted": restricted,
                        "tau": tau.to_string(),
                        "weights": ws.iter().map(fmt_q).collect::<Vec<_>>(),
                        "slopes": ts.iter().map(fmt_q).collect::<Vec<_>>(),
                        "lhs_sq": fmt_q(&lhs),
                        "rhs_lo": fmt_q(&c.rhs.lo),
                    }));
                }
            }
            let l1: Rational = ws.iter().map(|w| w.abs()).sum();
            let sum = f.coefficient_sq_sum();
            let bound = &l1 * &l1 * truncated_tail(0, kmax);
            if sum > bound {
                bad.push(json!({"coefficient_sq_sum": fmt_q(&sum), "bound": fmt_q(&bound)}));
            }
            let v = (!bad.is_empty()).then_some(Value::Array(bad));
            Ok((v, all_exact, max_bits))
        })
        .collect::<Result<_>>()?;
    let exact = per.iter().filter(|p| p.1).count();
    let bits = per.iter().map(|p| p.2).max().unwrap_or(0);
    let bad: Vec<Value> = per.into_iter().filter_map(|p| p.0).collect();
    let step = Step::new("triangle", bad.is_empty())
        .v("checked", samples)
        .v("decided_exactly", exact)
        .v("max_bits", bits);
    Ok((vec![step], bad))
}

/// Shared setup for the general-space lemmas.
struct General {
    kmax: usize,
    cfg: CarvingConfig,
    sched: BlockSchedule,
    backend: NormBackend,
    k_hat: f64,
    frame: FrameConfig,
}

const DEFAULT_CUTS: [usize; 3] = [0, 3, 7];

impl General {
    fn new(params: &LemmaParams, check_growth: bool) -> Result<Self> {
        let cuts = params.cuts.clone().unwrap_or_else(|| DEFAULT_CUTS.to_vec());
        let sched = if check_growth {
            BlockSchedule::from_cuts(&cuts)?
        } else {
            BlockSchedule::partition(&cuts)?
        };
        let kmax = params.kmax.unwrap_or(sched.depth());
        if kmax > sched.depth() {
            return Err(Error::Params(format!(
                "kmax {kmax} exceeds the schedule depth {}",
                sched.depth()
            )));
        }
        let backend = NormBackend::from_config(&params.backend)?;
        let k_hat = estimate_k(&backend, kmax + 1, params.k_samples);
        Ok(Self {
            kmax,
            cfg: carving(params, kmax)?,
            sched,
            backend,
            k_hat,
            frame: params.frame.clone(),
        })
    }

    fn frames_for(&self, v: &IntegralVector) -> Result<FrameSet> {
        let dense = dense_or_err(v)?;
        FrameSet::for_keys(dense.keys(), &self.sched, &self.backend, &self.frame)
    }

    fn norm(&self, v: &IntegralVector, frames: &FrameSet) -> Result<f64> {
        let dense = dense_or_err(v)?;
        let w: Vec<(NodeKey, f64)> = dense
            .into_iter()
            .map(|(k, c)| (k, c.value().to_f64()))
            .collect();
        gen_norm(&w, frames, &self.sched, &self.backend)
    }

    fn header(&self) -> Step {
        Step::new("setup", true)
            .v("backend", self.backend.config())
            .v("k_hat", self.k_hat)
            .v("cuts", &self.sched.cuts)
            .v("kmax", self.kmax)
    }

    /// Blocks `k` whose depths `[n_k, n_{k+1})` all lie within `kmax`.
    fn complete_blocks(&self) -> Vec<usize> {
        (0..self.sched.blocks())
            .filter(|&k| self.sched.cuts[k + 1] - 1 <= self.kmax)
            .collect()
    }
}

/// Keys touched by evaluations in other spaces stay small; refuse otherwise.
const DENSE_LIMIT: u64 = 1 << 14;

fn dense_or_err(v: &IntegralVector) -> Result<BTreeMap<NodeKey, crate::eval::Component>> {
    v.to_dense(DENSE_LIMIT).ok_or_else(|| {
        Error::Params(format!(
            "integral has {} components; frames are materialized only up to {DENSE_LIMIT}",
            v.support_size()
        ))
    })
}

/// Two-sided 2-Euclidean bound on one block, on fresh samples after the
/// frame's own validation.
fn lemma_4_2(params: &LemmaParams) -> Outcome {
    let mut params = params.clone();
    if params.cuts.is_none() {
        // block [1, 3) holds exactly 16 keys
        params.cuts = Some(vec![0, 1, 3]);
    }
    let g = General::new(&params, false)?;
    let block = g.sched.blocks() - 1;
    let frame = crate::backend::sample_frame(block, &g.sched, &g.backend, &g.frame)?;
    let n = frame.keys.len();
    let tol = g.backend.tolerance;
    let ratios: Vec<f64> = (0..params.frame.validation_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng_for(params.seed, &[42, s as u64]);
            let lambda: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let w: Vec<(NodeKey, f64)> = frame.keys.iter().cloned().zip(lambda.iter().copied()).collect();
            let y = frame.combine(&w).expect("frame keys");
            g.backend.norm(&y) / lambda.iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .collect();
    let (mn, mx) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let bad: Vec<Value> = ratios
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < 0.5 - tol || r > 1.0 + tol)
        .take(20)
        .map(|(s, r)| json!({"sample": s, "ratio": r}))
        .collect();
    let step = Step::new("two-sided", bad.is_empty())
        .v("block", block)
        .v("frame_vectors", n)
        .v("dim", frame.dim)
        .v("attempts", frame.attempts)
        .v("samples", ratios.len())
        .v("min_ratio", mn)
        .v("max_ratio", mx)
        .v("tolerance", tol);
    Ok((vec![g.header(), step], bad))
}

/// Unconditional-sum bound, the two-sided block estimate for `f_{|τ}`, and
/// `‖∫_{I_τ} f‖ ≥ ‖∫_{I_τ} f_{|τ}‖ / K̂`.
fn lemma_4_3(params: &LemmaParams) -> Outcome {
    let g = General::new(params, true)?;
    let mut rng = rng_for(params.seed, &[43]);
    let f = function_for(params, g.kmax, &mut rng)?;
    let mut steps = vec![g.header()];
    let mut bad = Vec::new();
    let tol = g.backend.tolerance;
    let slack = 1.0 + params.slack;

    // random sign patterns never beat Σ_j √(Σ_{B_j} c²)
    let blocks = block_squares(&f, &g.sched.cuts)?;
    let bound: f64 = blocks
        .iter()
        .map(|b| Ok(to_f64(&sqrt_enclosure(b, 64)?.hi)))
        .sum::<Result<f64>>()?;
    let whole = integral(&f, &int(0), &int(1), &g.cfg)?;
    let dense = dense_or_err(&whole)?;
    let frames = FrameSet::for_keys(dense.keys(), &g.sched, &g.backend, &g.frame)?;
    let sign_samples = params.samples.min(200);
    let worst = (0..sign_samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng_for(params.seed, &[431, s as u64]);
            let w: Vec<(NodeKey, f64)> = dense
                .iter()
                .map(|(k, c)| {
                    let e = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                    (k.clone(), e * c.value().to_f64())
                })
                .collect();
            gen_norm(&w, &frames, &g.sched, &g.backend)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let ok1 = worst <= bound * slack + tol;
    if !ok1 {
        bad.push(json!({"check": "unconditional-sum", "worst": worst, "bound": bound}));
    }
    steps.push(
        Step::new("unconditional-sum", ok1)
            .v("sign_patterns", sign_samples)
            .v("worst_norm", worst)
            .v("block_bound", bound),
    );

    // block bracket and restriction bound on sampled τ of depth n_k
    let ks = g.complete_blocks();
    let n_tau = params.samples.min(20);
    let mut cache: HashMap<Address, Value> = HashMap::new();
    let mut checked = 0;
    for s in 0..n_tau {
        let k = ks[s % ks.len()];
        let nk = g.sched.cuts[k];
        let tau = Address::from_bits((0..nk).map(|_| rng.random_bool(0.5)));
        if cache.contains_key(&tau) {
            continue;
        }
        let iv = interval_of(&tau);
        let fr = restrict(&f, &tau)?;
        let vf = integral(&f, &iv.lo, &iv.hi, &g.cfg)?;
        let vr = integral(&fr, &iv.lo, &iv.hi, &g.cfg)?;
        let frames = g.frames_for(&vf)?;
        let nf = g.norm(&vf, &frames)?;
        let nr = g.norm(&vr, &frames)?;
        let rb = block_squares(&fr, &g.sched.cuts)?;
        let lower = to_f64(&sqrt_enclosure(&rb[k], 64)?.lo) / (2.0 * g.k_hat);
        let upper: f64 = rb[k..]
            .iter()
            .map(|b| Ok(to_f64(&sqrt_enclosure(b, 64)?.hi)))
            .sum::<Result<f64>>()?;
        let ok2 = lower <= nr * slack + tol && nr <= upper * slack + tol;
        let ok3 = nf * slack + tol >= nr / g.k_hat;
        let rec = json!({
            "tau": tau.to_string(), "block": k, "restricted_norm": nr, "lower": lower,
            "upper": upper, "full_norm": nf,
        });
        if !(ok2 && ok3) {
            bad.push(rec.clone());
        }
        checked += 1;
        cache.insert(tau, rec);
    }
    steps.push(
        Step::new("block-bracket-and-restriction", bad.is_empty())
            .v("taus", checked)
            .v("empirical", !g.backend.is_exact()),
    );
    Ok((steps, bad))
}

/// `(1/(2K̂)) 2^{-n_k/2} u_k ≤ ‖∫_{I_τ} f(n)_{|τ}‖ ≤ (3/2) 2^{-n_k/2} u_k` on
/// sampled `τ ∈ {0,1}^{n_k}`. With the exact backend the bracket is checked
/// on squares and the block decomposition is cross-checked against the
/// Hilbert-space norm.
fn lemma_4_4(params: &LemmaParams) -> Outcome {
    let g = General::new(params, true)?;
    let t = params
        .slopes
        .first()
        .cloned()
        .ok_or_else(|| Error::Params("need a slope".into()))?;
    let f = make_fn(Selector::slope(t)?, g.kmax)?;
    let ks = g.complete_blocks();
    if ks.is_empty() {
        return Err(Error::Params("no block fits inside kmax".into()));
    }
    let slack = 1.0 + params.slack;
    let n_tau = params.samples.min(20);
    let mut rng = rng_for(params.seed, &[44]);
    let taus: Vec<(usize, Address)> = (0..n_tau)
        .map(|s| {
            let k = ks[s % ks.len()];
            (k, Address::from_bits((0..g.sched.cuts[k]).map(|_| rng.random_bool(0.5))))
        })
        .collect();

    let mut bad = Vec::new();
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = 0.0f64;
    let mut exact_agree = true;
    let mut frames_cache: HashMap<Address, (f64, f64)> = HashMap::new();
    for (k, tau) in &taus {
        let nk = g.sched.cuts[*k];
        let iv = interval_of(tau);
        let fr = restrict(&f, tau)?;
        let v = integral(&fr, &iv.lo, &iv.hi, &g.cfg)?;
        let base_sq = pow2(-(nk as i64)) * &g.sched.u_sq[*k];
        if g.backend.is_exact() {
            let got = v.norm_sq();
            let blocks: Rational = block_squares(&fr, &g.sched.cuts)?.into_iter().sum();
            exact_agree &= blocks == got;
            let lo_ok = &base_sq / int(4) <= got;
            let hi_ok = got <= &base_sq * rat(9, 4);
            let lo_ratio = to_f64(&(&got / &base_sq)).sqrt() * 2.0;
            let hi_ratio = to_f64(&(&got / &base_sq)).sqrt() / 1.5;
            worst_lo = worst_lo.min(lo_ratio);
            worst_hi = worst_hi.max(hi_ratio);
            if !(lo_ok && hi_ok) {
                bad.push(json!({"tau": tau.to_string(), "norm_sq": fmt_q(&got), "base_sq": fmt_q(&base_sq)}));
            }
            continue;
        }
        let (lo_ratio, hi_ratio) = match frames_cache.get(tau) {
            Some(r) => *r,
            None => {
                let frames = g.frames_for(&v)?;
                let got = g.norm(&v, &frames)?;
                let base = to_f64(&base_sq).sqrt();
                let r = (got / (base / (2.0 * g.k_hat)), got / (1.5 * base));
                frames_cache.insert(tau.clone(), r);
                r
            }
        };
        worst_lo = worst_lo.min(lo_ratio);
        worst_hi = worst_hi.max(hi_ratio);
        if lo_ratio * slack < 1.0 || hi_ratio > slack {
            bad.push(json!({"tau": tau.to_string(), "lower_ratio": lo_ratio, "upper_ratio": hi_ratio}));
        }
    }
    let mut steps = vec![
        g.header(),
        Step::new("bracket", bad.is_empty())
            .v("taus", taus.len())
            .v("min_norm_over_lower", worst_lo)
            .v("max_norm_over_upper", worst_hi)
            .v("slack", slack)
            .v("empirical", !g.backend.is_exact()),
    ];
    if g.backend.is_exact() {
        steps.push(Step::new("l2-cross-check", exact_agree));
    }
    Ok((steps, bad))
}

/// Combinations: block sums against `(Σ|λ|)·u_k`, `Σ u_k < (3/2) u_0`, and
/// the triangle inequality over selectors.
fn lemma_4_5(params: &LemmaParams) -> Outcome {
    let g = General::new(params, true)?;
    let mut steps = vec![g.header()];
    let mut bad = Vec::new();
    let n_samples = params.samples.min(20);
    let u_sum: Rational = g.sched.u.iter().map(|e| e.hi.clone()).sum();
    let geom = rat(3, 2) * &g.sched.u[0].lo;
    let geom_ok = u_sum < geom;
    steps.push(
        Step::new("geometric-decay", geom_ok)
            .q("sum_u_hi", &u_sum)
            .q("three_halves_u0_lo", &geom),
    );
    let mut checked = 0;
    for s in 0..n_samples {
        let mut rng = rng_for(params.seed, &[45, s as u64]);
        let (ws, ts) = if params.weights.is_empty() {
            let n = rng.random_range(1..=4);
            let ts = random_slopes(&mut rng, n);
            ((0..n).map(|_| random_nonzero(&mut rng, 4, 8)).collect::<Vec<_>>(), ts)
        } else {
            (params.weights.clone(), params.slopes.clone())
        };
        let sels = slope_selectors(&ts)?;
        let f = combine(&ws, &sels, g.kmax)?;
        let l1: Rational = ws.iter().map(|w| w.abs()).sum();
        for (k, b) in block_squares(&f, &g.sched.cuts)?.iter().enumerate() {
            if b > &(&l1 * &l1 * &g.sched.u_sq[k]) {
                bad.push(json!({"sample": s, "block": k, "block_sq": fmt_q(b)}));
            }
        }
        let tau = random_address(&mut rng, g.kmax.min(3));
        let iv = interval_of(&tau);
        let vf = integral(&f, &iv.lo, &iv.hi, &g.cfg)?;
        let parts: Vec<IntegralVector> = sels
            .iter()
            .map(|n| integral(&make_fn(n.clone(), g.kmax)?, &iv.lo, &iv.hi, &g.cfg))
            .collect::<Result<_>>()?;
        if g.backend.is_exact() {
            let terms: Vec<_> = ws.iter().zip(&parts).map(|(w, p)| (w.abs(), p.norm_sq())).collect();
            let c = certify_le_sqrt_sum(&vf.norm_sq(), &terms)?;
            if !c.holds {
                bad.push(json!({"sample": s, "tau": tau.to_string(), "lhs_sq": fmt_q(&vf.norm_sq())}));
            }
        } else {
            let frames = g.frames_for(&vf)?;
            let lhs = g.norm(&vf, &frames)?;
            let rhs: f64 = ws
                .iter()
                .zip(&parts)
                .map(|(w, p)| Ok(to_f64(&w.abs()) * g.norm(p, &frames)?))
                .sum::<Result<f64>>()?;
            if lhs > rhs * (1.0 + params.slack) + g.backend.tolerance {
                bad.push(json!({"sample": s, "tau": tau.to_string(), "lhs": lhs, "rhs": rhs}));
            }
        }
        checked += 1;
    }
    steps.push(
        Step::new("blocks-and-triangle", bad.is_empty())
            .v("samples", checked)
            .v("empirical", !g.backend.is_exact()),
    );
    Ok((steps, bad))
}

/// Finite combination after dropping zero weights, merging repeated slopes
/// and dividing by the first weight: `f = scale · Σ weights_i f(n_{slopes_i})`
/// with `weights_0 = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Renumerated {
    #[serde(with = "serde_q_vec")]
    pub weights: Vec<Rational>,
    #[serde(with = "serde_q_vec")]
    pub slopes: Vec<Rational>,
    #[serde(with = "serde_q")]
    pub scale: Rational,
}

pub fn renumerate(weights: &[Rational], slopes: &[Rational]) -> Result<Renumerated> {
    if weights.len() != slopes.len() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: slopes.len(),
        });
    }
    let mut merged: Vec<(Rational, Rational)> = Vec::new();
    for (w, t) in weights.iter().zip(slopes) {
        slope_selector(t.clone())?;
        match merged.iter_mut().find(|(_, s)| s == t) {
            Some(e) => e.0 += w,
            None => merged.push((w.clone(), t.clone())),
        }
    }
    merged.retain(|(w, _)| !w.is_zero());
    let scale = merged
        .first()
        .map(|(w, _)| w.clone())
        .ok_or_else(|| Error::Degenerate("all weights vanish; f is the zero function".into()))?;
    Ok(Renumerated {
        weights: merged.iter().map(|(w, _)| w / &scale).collect(),
        slopes: merged.into_iter().map(|(_, t)| t).collect(),
        scale,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    L2,
    General,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BlowupParams {
    pub kmax: usize,
    pub pieces_per_set: usize,
    pub seed: u64,
    /// Number of sampled `h`.
    pub samples: usize,
    pub backend: BackendConfig,
    pub cuts: Option<Vec<usize>>,
    pub frame: FrameConfig,
    pub k_samples: usize,
}

impl Default for BlowupParams {
    fn default() -> Self {
        Self {
            kmax: 40,
            pieces_per_set: 1,
            seed: 0,
            samples: 20,
            backend: NormBackend::l2().config(),
            cuts: None,
            frame: FrameConfig::default(),
            k_samples: 10_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HSample {
    #[serde(with = "serde_q")]
    pub h: Rational,
    /// Depth of the largest dyadic interval inside `[x, x+h]`.
    pub j: usize,
    pub tau: Address,
    #[serde(with = "serde_q")]
    pub quot_sq: Rational,
    pub quot: f64,
    pub pass: bool,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EndpointReport {
    pub k: usize,
    pub n_k: usize,
    pub tau: Address,
    pub k_hat: f64,
    /// `‖∫_{I_τ} f‖ / |I_τ|`.
    pub interval_quotient: f64,
    /// `‖F(b) − F(x)‖ / (b − x)`, absent when `x = b`.
    pub right_quotient: Option<f64>,
    /// `‖F(x) − F(a)‖ / (x − a)`, absent when `x = a`.
    pub left_quotient: Option<f64>,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupWitness {
    pub mode: Mode,
    #[serde(with = "serde_q")]
    pub x: Rational,
    #[serde(rename = "M", with = "serde_q")]
    pub m: Rational,
    pub kmax: usize,
    pub renumerated: Renumerated,
    pub i0: usize,
    /// `Σ_{i>i0} |λ_i|` after normalization.
    #[serde(with = "serde_q")]
    pub tail: Rational,
    pub l: usize,
    pub k0: usize,
    #[serde(with = "serde_q")]
    pub delta: Rational,
    pub samples: Vec<HSample>,
    pub endpoint: Option<EndpointReport>,
    pub status: Status,
}

/// Least `i0 ≥ 1` with `Σ_{i>i0} |λ_i| < bound`, and that tail.
fn tail_cutoff(weights: &[Rational], bound: &Rational) -> (usize, Rational) {
    (1..=weights.len())
        .map(|i0| (i0, weights[i0..].iter().map(|w| w.abs()).sum::<Rational>()))
        .find(|(_, t)| t < bound)
        .expect("the empty tail is below any positive bound")
}

/// Least `k0 > l` (and `≤ kmax − 2`, so that sampled `h` exist) with
/// `2^{j−6}·Σ_{k=j}^{kmax} 1/(k+1)² > M²` for every `j ∈ (k0, kmax]`.
pub fn l2_threshold(l: usize, m_sq: &Rational, kmax: usize) -> Option<usize> {
    let good = |j: usize| pow2(j as i64 - 6) * truncated_tail(j, kmax) > *m_sq;
    let mut k0 = kmax;
    while k0 > 0 && good(k0) {
        k0 -= 1;
    }
    let k0 = k0.max(l + 1);
    (k0 + 2 <= kmax).then_some(k0)
}

/// Depth of the largest dyadic interval inside `[lo, hi]`, and that interval.
fn largest_dyadic_inside(lo: &Rational, hi: &Rational) -> (usize, Address) {
    let mut j = 0;
    loop {
        let s = pow2(j as i64);
        let q = crate::dyadic::ceil_int(&(lo * &s));
        if Rational::from_integer(&q + BigInt::one()) / &s <= *hi {
            let idx = q.to_biguint().expect("nonnegative");
            return (j, Address::from_index(&idx, j));
        }
        j += 1;
    }
}

/// Blow-up of `‖(F(x+h) − F(x))/h‖` for `f = Σ λ_i f(n_{t_i})`.
///
/// Hilbert mode follows the proof that works for every `0 < |h| < δ`: it picks
/// `δ = 2^{-k0}`, samples dyadic `h` below `δ`, and checks `quotient² > M²`
/// exactly together with each step of the lower-bound chain. General mode
/// picks a block level and checks the interval quotient over `I_τ ∋ x` and the
/// two one-sided quotients at `x`.
pub fn blowup_witness(
    weights: &[Rational],
    slopes: &[Rational],
    x: &Rational,
    m: &Rational,
    mode: Mode,
    params: &BlowupParams,
) -> Result<BlowupWitness> {
    if x.is_negative() || x > &Rational::one() {
        return Err(Error::OutOfRange {
            value: fmt_q(x),
            range: "[0, 1]",
        });
    }
    if m.is_negative() {
        return Err(Error::OutOfRange {
            value: fmt_q(m),
            range: "M >= 0",
        });
    }
    let ren = renumerate(weights, slopes)?;
    match mode {
        Mode::L2 => blowup_l2(ren, x, m, params),
        Mode::General => blowup_general(ren, x, m, params),
    }
}

/// Same as [`blowup_witness`] for a combined or single-selector function whose
/// selectors are all slopes.
pub fn blowup_for_function(
    f: &BasicFunction,
    x: &Rational,
    m: &Rational,
    mode: Mode,
    params: &BlowupParams,
) -> Result<BlowupWitness> {
    if f.restriction.is_some() {
        return Err(Error::Params("blow-up needs an unrestricted function".into()));
    }
    let terms = f
        .terms()
        .ok_or_else(|| Error::Params("blow-up needs a selector scheme".into()))?;
    let mut ws = Vec::new();
    let mut ts = Vec::new();
    for t in terms {
        match t.selector {
            Selector::Slope(s) => {
                ws.push(t.weight);
                ts.push(s.t().clone());
            }
            other => {
                return Err(Error::Params(format!(
                    "blow-up needs slope selectors, got {other:?}"
                )))
            }
        }
    }
    let params = BlowupParams {
        kmax: f.kmax,
        ..params.clone()
    };
    blowup_witness(&ws, &ts, x, m, mode, &params)
}

struct Parts {
    g: BasicFunction,
    head: BasicFunction,
    tail: BasicFunction,
    first: BasicFunction,
}

fn split(ren: &Renumerated, i0: usize, kmax: usize) -> Result<Parts> {
    let sels = slope_selectors(&ren.slopes)?;
    Ok(Parts {
        g: combine(&ren.weights, &sels, kmax)?,
        head: combine(&ren.weights[..i0], &sels[..i0], kmax)?,
        tail: combine(&ren.weights[i0..], &sels[i0..], kmax)?,
        first: make_fn(sels[0].clone(), kmax)?,
    })
}

fn blowup_l2(ren: Renumerated, x: &Rational, m: &Rational, params: &BlowupParams) -> Result<BlowupWitness> {
    let kmax = params.kmax;
    let (i0, tail) = tail_cutoff(&ren.weights, &rat(1, 2));
    let l = max_collision_bound(&ren.slopes[..i0])?;
    let m_g = m / ren.scale.abs();
    let m_g_sq = &m_g * &m_g;
    let k0 = match l2_threshold(l, &m_g_sq, kmax) {
        Some(k0) => k0,
        None => {
            let need = (kmax + 1..=kmax + 512).find(|&n| l2_threshold(l, &m_g_sq, n).is_some());
            return Err(Error::Infeasible(match need {
                Some(n) => format!("M = {} needs kmax >= {n} (got {kmax})", fmt_q(m)),
                None => format!("M = {} is out of reach below kmax {}", fmt_q(m), kmax + 512),
            }));
        }
    };
    let delta = pow2(-(k0 as i64));
    let cfg = CarvingConfig::new(kmax, params.pieces_per_set)?;
    let parts = split(&ren, i0, kmax)?;
    let f = combine(
        &ren.weights.iter().map(|w| w * &ren.scale).collect::<Vec<_>>(),
        &slope_selectors(&ren.slopes)?,
        kmax,
    )?;

    let hs: Vec<Rational> = (0..params.samples)
        .map(|s| {
            let mut rng = rng_for(params.seed, &[0xb10, s as u64]);
            let r = rng.random_range(1..=kmax - 1 - k0);
            let odd = 2 * rng.random_range(0..1u64 << (r - 1).min(62)) + 1;
            let h = Rational::from_integer(BigInt::from(odd)) * pow2(-((k0 + r) as i64));
            let neg = rng.random_bool(0.5);
            let fits = |h: &Rational| {
                let y = x + h;
                !y.is_negative() && y <= Rational::one()
            };
            let h = if neg { -h } else { h };
            if fits(&h) {
                h
            } else {
                -h
            }
        })
        .collect();

    let samples: Vec<HSample> = hs
        .par_iter()
        .map(|h| l2_sample(&f, &parts, &ren, &tail, i0, k0, m, &m_g_sq, x, h, &cfg))
        .collect::<Result<_>>()?;
    let ok = samples.iter().all(|s| s.pass);
    Ok(BlowupWitness {
        mode: Mode::L2,
        x: x.clone(),
        m: m.clone(),
        kmax,
        renumerated: ren,
        i0,
        tail,
        l,
        k0,
        delta,
        samples,
        endpoint: None,
        status: Status::of(ok),
    })
}

#[allow(clippy::too_many_arguments)]
fn l2_sample(
    f: &BasicFunction,
    parts: &Parts,
    ren: &Renumerated,
    tail: &Rational,
    i0: usize,
    k0: usize,
    m: &Rational,
    m_g_sq: &Rational,
    x: &Rational,
    h: &Rational,
    cfg: &CarvingConfig,
) -> Result<HSample> {
    let kmax = f.kmax;
    let y = x + h;
    let (lo, hi) = if h.is_negative() { (&y, x) } else { (x, &y) };
    let (j, tau) = largest_dyadic_inside(lo, hi);
    let iv = interval_of(&tau);
    let mut steps = Vec::new();

    let d_sq = primitive_diff(f, x, h, cfg)?.norm_sq();
    let quot_sq = &d_sq / (h * h);
    let scale_sq = &ren.scale * &ren.scale;
    let d_g = &d_sq / &scale_sq;

    steps.push(
        Step::new("level", j > k0 && j <= kmax && h.abs() < int(4) * pow2(-(j as i64)))
            .v("j", j)
            .v("k0", k0)
            .q("abs_h", &h.abs())
            .q("four_two_pow_minus_j", &(int(4) * pow2(-(j as i64)))),
    );
    let on_tau = integral(&parts.g, &iv.lo, &iv.hi, cfg)?.norm_sq();
    steps.push(Step::new("interval-monotone", on_tau <= d_g).q("lhs_sq", &d_g).q("rhs_sq", &on_tau));
    let restricted = integral(&restrict(&parts.g, &tau)?, &iv.lo, &iv.hi, cfg)?.norm_sq();
    steps.push(Step::new("restriction", restricted <= on_tau).q("lhs_sq", &on_tau).q("rhs_sq", &restricted));

    let first_sq = integral(&restrict(&parts.first, &tau)?, &iv.lo, &iv.hi, cfg)?.norm_sq();
    let exact = pow2(-(j as i64)) * truncated_tail(j, kmax);
    steps.push(Step::new("exact-norm", first_sq == exact).q("lhs_sq", &first_sq).q("formula", &exact));

    let l1_sq = integral(&restrict(&parts.head, &tau)?, &iv.lo, &iv.hi, cfg)?.norm_sq();
    let distinct = (j..=kmax).all(|k| {
        let vals: Vec<usize> = ren.slopes[..i0]
            .iter()
            .map(|t| slope_selector(t.clone()).expect("valid").at(k))
            .collect();
        vals.iter().enumerate().all(|(a, v)| !vals[a + 1..].contains(v))
    });
    steps.push(
        Step::new("almost-disjoint", distinct && l1_sq >= first_sq)
            .q("l1_sq", &l1_sq)
            .q("first_sq", &first_sq),
    );
    let l2_sq = integral(&restrict(&parts.tail, &tau)?, &iv.lo, &iv.hi, cfg)?.norm_sq();
    let l2_bound_sq = tail * tail * &first_sq;
    steps.push(Step::new("tail", l2_sq <= l2_bound_sq).q("l2_sq", &l2_sq).q("bound_sq", &l2_bound_sq));

    let one_minus = int(1) - tail;
    let lower_sq = &one_minus * &one_minus * &first_sq;
    steps.push(
        Step::new("l1-minus-l2", lower_sq <= restricted)
            .q("lower_sq", &lower_sq)
            .q("restricted_sq", &restricted),
    );
    let chain = pow2(j as i64 - 6) * truncated_tail(j, kmax);
    let chain_ok = &lower_sq / (int(16) * pow2(-2 * j as i64)) >= chain && &chain > m_g_sq;
    steps.push(Step::new("chain-bound", chain_ok).q("chain_sq", &chain).q("target_sq", m_g_sq));
    let pass_q = quot_sq > m * m;
    steps.push(Step::new("quotient", pass_q).q("quot_sq", &quot_sq).q("m_sq", &(m * m)));

    let pass = steps.iter().all(|s| s.holds);
    Ok(HSample {
        h: h.clone(),
        j,
        tau,
        quot: to_f64(&quot_sq).sqrt(),
        quot_sq,
        pass,
        steps,
    })
}

fn blowup_general(ren: Renumerated, x: &Rational, m: &Rational, params: &BlowupParams) -> Result<BlowupWitness> {
    let kmax = params.kmax;
    let cuts = params.cuts.clone().unwrap_or_else(|| DEFAULT_CUTS.to_vec());
    let sched = BlockSchedule::from_cuts(&cuts)?;
    if kmax > sched.depth() {
        return Err(Error::Params(format!(
            "kmax {kmax} exceeds the schedule depth {}",
            sched.depth()
        )));
    }
    let backend = NormBackend::from_config(&params.backend)?;
    let k_hat = estimate_k(&backend, kmax + 1, params.k_samples);
    let k_hat_q = Rational::from_float(k_hat).ok_or_else(|| Error::Backend("K̂ is not finite".into()))?;
    let (i0, tail) = tail_cutoff(&ren.weights, &(int(1) / (int(8) * &k_hat_q)));
    let l = max_collision_bound(&ren.slopes[..i0])?;
    let m_g = to_f64(&(m / ren.scale.abs()));
    let k = (0..sched.blocks())
        .filter(|&k| sched.cuts[k] > l && sched.cuts[k + 1] - 1 <= kmax)
        .find(|&k| {
            let u = to_f64(&sched.u[k].lo);
            2f64.powf(sched.cuts[k] as f64 / 2.0) * u / (4.0 * k_hat * k_hat) > m_g
        })
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no complete block within kmax {kmax} has n_k > {l} and (1/4K̂²)·2^(n_k/2)·u_k > M/|λ_1|; extend the schedule"
            ))
        })?;
    let nk = sched.cuts[k];
    let tau = locate(x, nk)?;
    let iv = interval_of(&tau);
    let cfg = CarvingConfig::new(kmax, params.pieces_per_set)?;
    let parts = split(&ren, i0, kmax)?;
    let general = General {
        kmax,
        cfg: cfg.clone(),
        sched: sched.clone(),
        backend,
        k_hat,
        frame: params.frame.clone(),
    };

    let v_full = integral(&parts.g, &iv.lo, &iv.hi, &cfg)?;
    let frames = general.frames_for(&v_full)?;
    let norm = |f: &BasicFunction, a: &Rational, b: &Rational| -> Result<f64> {
        general.norm(&integral(f, a, b, &cfg)?, &frames)
    };
    let n_full = general.norm(&v_full, &frames)?;
    let n_restr = norm(&restrict(&parts.g, &tau)?, &iv.lo, &iv.hi)?;
    let l1 = norm(&restrict(&parts.head, &tau)?, &iv.lo, &iv.hi)?;
    let l2 = norm(&restrict(&parts.tail, &tau)?, &iv.lo, &iv.hi)?;
    let base = 2f64.powf(-(nk as f64) / 2.0) * to_f64(&sched.u[k].lo);
    let tol = general.backend.tolerance;
    let tail_f = to_f64(&tail);
    let width = to_f64(&iv.length());
    let scale = to_f64(&ren.scale.abs());

    let mut steps = vec![
        Step::new("restriction", n_full + tol >= n_restr / k_hat).v("full", n_full).v("restricted", n_restr),
        Step::new("l1-lower", l1 + tol >= base / (2.0 * k_hat)).v("l1", l1).v("bound", base / (2.0 * k_hat)),
        Step::new("l2-upper", l2 <= tail_f * 1.5 * base + tol).v("l2", l2).v("bound", tail_f * 1.5 * base),
        Step::new("l1-minus-l2", n_restr + tol >= l1 - l2 && l1 - l2 > base / (4.0 * k_hat))
            .v("difference", l1 - l2)
            .v("bound", base / (4.0 * k_hat)),
    ];
    let interval_quotient = scale * n_full / width;
    steps.push(Step::new("interval-quotient", interval_quotient > to_f64(m)).v("quotient", interval_quotient));

    let right_quotient = (x < &iv.hi)
        .then(|| Ok::<_, Error>(scale * norm(&parts.g, x, &iv.hi)? / to_f64(&(&iv.hi - x))))
        .transpose()?;
    let left_quotient = (x > &iv.lo)
        .then(|| Ok::<_, Error>(scale * norm(&parts.g, &iv.lo, x)? / to_f64(&(x - &iv.lo))))
        .transpose()?;
    let best = right_quotient.unwrap_or(0.0).max(left_quotient.unwrap_or(0.0));
    // the one-sided quotients average to at least the interval quotient
    steps.push(Step::new("one-sided", best > to_f64(m)).v("best", best));

    let ok = steps.iter().all(|s| s.holds);
    Ok(BlowupWitness {
        mode: Mode::General,
        x: x.clone(),
        m: m.clone(),
        kmax,
        renumerated: ren,
        i0,
        tail,
        l,
        k0: nk,
        delta: iv.length(),
        samples: Vec::new(),
        endpoint: Some(EndpointReport {
            k,
            n_k: nk,
            tau,
            k_hat,
            interval_quotient,
            right_quotient,
            left_quotient,
            steps,
        }),
        status: Status::of(ok),
    })
}

/// `f64` bracketing `q` from below and above.
fn f64_bracket(q: &Rational) -> (f64, f64) {
    let v = to_f64(q);
    match Rational::from_float(v) {
        Some(r) if &r == q => (v, v),
        Some(r) if &r > q => (v.next_down(), v),
        Some(_) => (v, v.next_up()),
        None => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuotientRow {
    #[serde(with = "serde_q")]
    pub x: Rational,
    #[serde(with = "serde_q")]
    pub h: Rational,
    pub quot_sq_lo: f64,
    pub quot_sq_hi: f64,
    #[serde(with = "serde_q")]
    pub quot_sq_exact: Rational,
}

pub const QUOTIENT_CSV_HEADER: &str = "x,h,quot_sq_lo,quot_sq_hi,quot_sq_exact";

impl QuotientRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:?},{:?},{}",
            fmt_q(&self.x),
            fmt_q(&self.h),
            self.quot_sq_lo,
            self.quot_sq_hi,
            fmt_q(&self.quot_sq_exact)
        )
    }
}

/// `‖(F(x+h) − F(x))/h‖²` for each `h`, exact with a float bracket.
pub fn quotient_table(
    f: &BasicFunction,
    x: &Rational,
    hs: &[Rational],
    cfg: &CarvingConfig,
) -> Result<Vec<QuotientRow>> {
    hs.par_iter()
        .map(|h| {
            if h.is_zero() {
                return Err(Error::OutOfRange {
                    value: "0".into(),
                    range: "h != 0",
                });
            }
            let q = primitive_diff(f, x, h, cfg)?.norm_sq() / (h * h);
            let (lo, hi) = f64_bracket(&q);
            Ok(QuotientRow {
                x: x.clone(),
                h: h.clone(),
                quot_sq_lo: lo,
                quot_sq_hi: hi,
                quot_sq_exact: q,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_lemma() {
        assert!(matches!(
            verify_lemma("9.9", &LemmaParams::default()),
            Err(Error::UnknownLemma(_))
        ));
    }

    #[test]
    fn renumeration() {
        let r = renumerate(
            &[int(0), rat(1, 2), rat(1, 4), rat(-1, 2)],
            &[rat(1, 5), rat(1, 3), rat(1, 2), rat(1, 3)],
        )
        .unwrap();
        assert_eq!(r.slopes, vec![rat(1, 2)]);
        assert_eq!(r.weights, vec![int(1)]);
        assert_eq!(r.scale, rat(1, 4));
        assert!(matches!(
            renumerate(&[int(1), int(-1)], &[rat(1, 3), rat(1, 3)]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn threshold_for_spec_example() {
        // first j with 2^{j-6}·S_j > 2500 at kmax = 40 is 24, so k0 = 23
        assert_eq!(l2_threshold(6, &int(2500), 40), Some(23));
        assert_eq!(l2_threshold(0, &int(0), 10), Some(1));
        assert_eq!(l2_threshold(0, &int(2500), 20), None);
    }

    #[test]
    fn dyadic_inside() {
        assert_eq!(largest_dyadic_inside(&int(0), &rat(1, 4)), (2, "00".parse().unwrap()));
        let (j, tau) = largest_dyadic_inside(&rat(1, 3), &(rat(1, 3) + rat(1, 100)));
        let iv = interval_of(&tau);
        assert!(iv.lo >= rat(1, 3) && iv.hi <= rat(1, 3) + rat(1, 100));
        assert!(j == 7 || j == 8);
    }

    #[test]
    fn f64_brackets() {
        let (lo, hi) = f64_bracket(&rat(1, 3));
        assert!(Rational::from_float(lo).unwrap() < rat(1, 3));
        assert!(Rational::from_float(hi).unwrap() > rat(1, 3));
        assert_eq!(f64_bracket(&rat(1, 4)), (0.25, 0.25));
    }
}
