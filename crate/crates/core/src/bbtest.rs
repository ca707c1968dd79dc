//! Black-box consistency testing and the hitting-set based sampler.
//!
//! The tester sees the program only through [`OracleObp::query`]. States are
//! named by `(seed, layer)`; two seeds are identified at layer `i` when their
//! prefixes `H(x)_{1..i}` have the same continuation vector
//! `y ↦ B(H(x)_{1..i} H(y)_{1..n−i})`.

use crate::bits;
use crate::obp::{Direction, Obp};
use crate::prg::{EnumerationCap, Prg, PrgError};
use crate::rational::{self, Q};
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BbError {
    #[error(transparent)]
    Prg(#[from] PrgError),
    #[error("hitting set emits {found} bits, oracle reads {expected}")]
    Length { expected: usize, found: usize },
    #[error("estimates for layer {layer} cover {found} entries, need {expected}")]
    Coverage { layer: usize, expected: usize, found: usize },
    #[error("sample string {index} has {found} bits, need {expected}")]
    SampleLength { index: usize, expected: usize, found: usize },
    #[error("no sample string produced accepted estimates ({tried} tried)")]
    SamplerFailure { tried: u64 },
}

pub type Result<T> = std::result::Result<T, BbError>;

/// Query access to a hidden function `{0,1}^n → {0,1}` with a counter.
pub struct OracleObp {
    n: usize,
    query_fn: Box<dyn Fn(u64) -> bool + Send + Sync>,
    queries: AtomicU64,
}

impl std::fmt::Debug for OracleObp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "OracleObp(n={}, queries={})", self.n, self.queries())
    }
}

impl OracleObp {
    pub fn new(n: usize, query_fn: impl Fn(u64) -> bool + Send + Sync + 'static) -> Self {
        OracleObp { n, query_fn: Box::new(query_fn), queries: AtomicU64::new(0) }
    }

    /// Hides `b` behind the query interface.
    pub fn hide(b: Obp) -> Self {
        let n = b.len();
        let b = Arc::new(b);
        OracleObp::new(n, move |x| b.label(b.run_packed(x)).is_positive())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn query(&self, x: u64) -> bool {
        self.queries.fetch_add(1, Ordering::Relaxed);
        (self.query_fn)(x & bits::mask(self.n))
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset_queries(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }
}

/// Seeds `0..2^s` and their `n`-bit outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingSet {
    pub s: usize,
    pub n: usize,
    pub eps: Q,
    outputs: Vec<u64>,
    pub provenance: String,
}

impl HittingSet {
    /// Every string of length `n`.
    pub fn enumerate(n: usize) -> Self {
        HittingSet { s: n, n, eps: rational::dyadic(1, n), outputs: (0..1u64 << n).collect(), provenance: format!("enumerate(n={n})") }
    }

    pub fn from_prg(g: &dyn Prg, eps: Q, cap: EnumerationCap) -> Result<Self> {
        let seeds = cap.check("hitting set", g.seed_len())?;
        Ok(HittingSet { s: g.seed_len(), n: g.output_len(), eps, outputs: (0..seeds).map(|y| g.expand(y)).collect(), provenance: g.provenance() })
    }

    /// Explicit outputs; the list is padded by repeating its last entry up to a power of two.
    pub fn from_list(n: usize, mut outputs: Vec<u64>, eps: Q) -> Self {
        if outputs.is_empty() {
            outputs.push(0);
        }
        let s = (usize::BITS - (outputs.len() - 1).leading_zeros()) as usize;
        let last = *outputs.last().unwrap();
        outputs.resize(1 << s, last);
        HittingSet { s, n, eps, outputs, provenance: format!("list({})", 1u64 << s) }
    }

    pub fn seeds(&self) -> u64 {
        self.outputs.len() as u64
    }

    pub fn output(&self, y: u64) -> u64 {
        self.outputs[y as usize]
    }

    /// `H(y)_{1..k}`.
    pub fn prefix(&self, y: u64, k: usize) -> u64 {
        bits::prefix(self.outputs[y as usize], self.n, k)
    }
}

/// Seed classes of one layer, in order of their first member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerClasses {
    pub layer: usize,
    /// Class of every seed.
    pub class_of: Vec<usize>,
    /// Members of each class, increasing; `members[j][0]` is the representative.
    pub members: Vec<Vec<u64>>,
    /// Set when there are more classes than the width bound.
    pub over_width: bool,
}

impl LayerClasses {
    pub fn representative(&self, j: usize) -> u64 {
        self.members[j][0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `y ↦ B(prefix ∘ H(y)_{1..n−i})`, one query per `y` (a single query when `i = n`).
fn continuation_vector(o: &OracleObp, h: &HittingSet, prefix: u64, i: usize) -> Vec<bool> {
    let n = h.n;
    if i == n {
        return vec![o.query(prefix)];
    }
    let k = n - i;
    (0..h.seeds()).map(|y| o.query(bits::concat(prefix, h.prefix(y, k), k))).collect()
}

/// Whether seeds `x` and `x2` are indistinguishable at layer `i`, with a distinguishing `y` if not.
pub fn indistinguishable(o: &OracleObp, h: &HittingSet, x: u64, x2: u64, i: usize) -> (bool, Option<u64>) {
    let (p, q) = (h.prefix(x, i), h.prefix(x2, i));
    if i == h.n {
        return (o.query(p) == o.query(q), None);
    }
    let k = h.n - i;
    for y in 0..h.seeds() {
        let suffix = h.prefix(y, k);
        if o.query(bits::concat(p, suffix, k)) != o.query(bits::concat(q, suffix, k)) {
            return (false, Some(y));
        }
    }
    (true, None)
}

/// Classes of layer `i` by equal continuation vectors.
pub fn build_classes(o: &OracleObp, h: &HittingSet, i: usize, width_bound: usize) -> LayerClasses {
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut class_of = Vec::with_capacity(h.seeds() as usize);
    let mut members: Vec<Vec<u64>> = Vec::new();
    for x in 0..h.seeds() {
        let v = continuation_vector(o, h, h.prefix(x, i), i);
        let next = members.len();
        let j = *index.entry(v).or_insert(next);
        if j == next {
            members.push(Vec::new());
        }
        members[j].push(x);
        class_of.push(j);
    }
    let over_width = members.len() > width_bound;
    LayerClasses { layer: i, class_of, members, over_width }
}

/// Classes of every layer plus, for each `(x, i < n, b)`, the layer-`i+1` class
/// matching the prefix `H(x)_{1..i} b` (if any seed reaches an indistinguishable state).
#[derive(Debug, Clone)]
pub struct SeedClassIndex {
    pub n: usize,
    pub layers: Vec<LayerClasses>,
    pub children: Vec<Vec<[Option<usize>; 2]>>,
    /// `B(H(x))` for every seed.
    pub finals: Vec<bool>,
}

impl SeedClassIndex {
    pub fn build(o: &OracleObp, h: &HittingSet, width_bound: usize) -> Result<Self> {
        if h.n != o.n() {
            return Err(BbError::Length { expected: o.n(), found: h.n });
        }
        let n = h.n;
        let layers: Vec<LayerClasses> = (0..=n).map(|i| build_classes(o, h, i, width_bound)).collect();
        // continuation vectors of each class, to match children against
        let mut lookup: Vec<HashMap<Vec<bool>, usize>> = Vec::with_capacity(n + 1);
        for l in &layers {
            let mut m = HashMap::new();
            for (j, mem) in l.members.iter().enumerate() {
                m.insert(Self::replay(o, h, mem[0], l.layer), j);
            }
            lookup.push(m);
        }
        let mut children = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(h.seeds() as usize);
            for x in 0..h.seeds() {
                let p = h.prefix(x, i);
                let mut pair = [None, None];
                for (b, slot) in pair.iter_mut().enumerate() {
                    let v = continuation_vector(o, h, (p << 1) | b as u64, i + 1);
                    *slot = lookup[i + 1].get(&v).copied();
                }
                row.push(pair);
            }
            children.push(row);
        }
        let finals = (0..h.seeds()).map(|x| o.query(h.output(x))).collect();
        Ok(SeedClassIndex { n, layers, children, finals })
    }

    // Representative vectors are recomputed rather than kept from `build_classes`,
    // so the query count stays a fixed function of (n, 2^s).
    fn replay(o: &OracleObp, h: &HittingSet, x: u64, i: usize) -> Vec<bool> {
        continuation_vector(o, h, h.prefix(x, i), i)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.len()).collect()
    }
}

/// Queries spent by [`SeedClassIndex::build`] for the given class counts.
pub fn index_query_count(n: usize, seeds: u64, class_counts: &[usize]) -> u64 {
    let len = |i: usize| if i == n { 1 } else { seeds };
    let classes: u64 = (0..=n).map(|i| seeds * len(i)).sum();
    let replay: u64 = (0..=n).map(|i| class_counts[i] as u64 * len(i)).sum();
    let children: u64 = (0..n).map(|i| 2 * seeds * len(i + 1)).sum();
    classes + replay + children + seeds
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BbTest {
    T1,
    T2,
    T3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BbVerdict {
    Accept {
        #[serde(serialize_with = "ser_q")]
        value: Q,
    },
    Reject {
        test: BbTest,
        layer: usize,
        x: u64,
        /// The other seed(s) involved: `x'` for T2, `(x₀, x₁)` for T1.
        with: Vec<u64>,
        #[serde(serialize_with = "ser_q")]
        gap: Q,
    },
}

fn ser_q<S: serde::Serializer>(x: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational::format(x))
}

impl BbVerdict {
    pub fn value(&self) -> Option<&Q> {
        match self {
            BbVerdict::Accept { value } => Some(value),
            BbVerdict::Reject { .. } => None,
        }
    }
}

/// Per-seed estimates `p̃_{x,i}` for layers `0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedEstimates(pub Vec<Vec<Q>>);

/// Runs the three checks on per-seed estimates with tolerance `5ε`; on success
/// returns `p̃_{0,0}`.
pub fn bb_lc_test(idx: &SeedClassIndex, est: &SeedEstimates, eps: &Q) -> Result<BbVerdict> {
    let n = idx.n;
    let seeds = idx.finals.len();
    if est.0.len() != n + 1 {
        return Err(BbError::Coverage { layer: est.0.len(), expected: n + 1, found: est.0.len() });
    }
    for (i, layer) in est.0.iter().enumerate() {
        if layer.len() != seeds {
            return Err(BbError::Coverage { layer: i, expected: seeds, found: layer.len() });
        }
    }
    let tol = eps * rational::int(5);
    // T3
    for x in 0..seeds {
        let want = if idx.finals[x] { rational::int(1) } else { Q::zero() };
        if est.0[n][x] != want {
            return Ok(BbVerdict::Reject { test: BbTest::T3, layer: n, x: x as u64, with: vec![], gap: rational::abs(&(&est.0[n][x] - want)) });
        }
    }
    // per-class extremes: (min value, its seed, max value, its seed)
    let extremes: Vec<Vec<(Q, u64, Q, u64)>> = idx
        .layers
        .iter()
        .map(|l| {
            l.members
                .iter()
                .map(|mem| {
                    let vals = &est.0[l.layer];
                    let (mut lo, mut hi) = (mem[0], mem[0]);
                    for &x in mem {
                        if vals[x as usize] < vals[lo as usize] {
                            lo = x;
                        }
                        if vals[x as usize] > vals[hi as usize] {
                            hi = x;
                        }
                    }
                    (vals[lo as usize].clone(), lo, vals[hi as usize].clone(), hi)
                })
                .collect()
        })
        .collect();
    // T2
    for (i, layer) in extremes.iter().enumerate() {
        for (lo, x_lo, hi, x_hi) in layer {
            let gap = hi - lo;
            if gap > tol {
                return Ok(BbVerdict::Reject { test: BbTest::T2, layer: i, x: *x_lo, with: vec![*x_hi], gap });
            }
        }
    }
    // T1: |a − (p0 + p1)/2| over a box is largest at a corner
    let half = rational::half();
    for i in 0..n {
        for x in 0..seeds {
            let [Some(c0), Some(c1)] = idx.children[i][x] else { continue };
            let (lo0, xl0, hi0, xh0) = &extremes[i + 1][c0];
            let (lo1, xl1, hi1, xh1) = &extremes[i + 1][c1];
            let a = &est.0[i][x];
            for (p0, p1, w0, w1) in [(lo0, lo1, xl0, xl1), (hi0, hi1, xh0, xh1)] {
                let gap = rational::abs(&(a - (p0 + p1) * &half));
                if gap > tol {
                    return Ok(BbVerdict::Reject { test: BbTest::T1, layer: i, x: x as u64, with: vec![*w0, *w1], gap });
                }
            }
        }
    }
    Ok(BbVerdict::Accept { value: est.0[0][0].clone() })
}

/// Class estimates `p̃_{j,i}` for layers `0..n`, copied to every member seed; the
/// final layer is `B(H(x))`.
pub fn bb_lc_test_classes(idx: &SeedClassIndex, class_est: &[Vec<Q>], eps: &Q) -> Result<BbVerdict> {
    let n = idx.n;
    if class_est.len() != n {
        return Err(BbError::Coverage { layer: class_est.len(), expected: n, found: class_est.len() });
    }
    let mut per_seed = Vec::with_capacity(n + 1);
    for (i, vals) in class_est.iter().enumerate() {
        let l = &idx.layers[i];
        if vals.len() != l.len() {
            return Err(BbError::Coverage { layer: i, expected: l.len(), found: vals.len() });
        }
        per_seed.push(l.class_of.iter().map(|&j| vals[j].clone()).collect());
    }
    per_seed.push(idx.finals.iter().map(|&b| if b { rational::int(1) } else { Q::zero() }).collect());
    bb_lc_test(idx, &SeedEstimates(per_seed), eps)
}

/// Suffix samples indexed by a string `z` and a block `(j, i)`.
pub trait SampleSource {
    /// Number of strings `z`.
    fn count(&self) -> u64;
    /// The samples of block `(j, i)` of string `z`, each `n − i` bits.
    fn block(&self, z: u64, j: usize, i: usize, n: usize) -> Vec<u64>;
    fn describe(&self) -> String;
}

/// One string whose blocks hold every suffix.
#[derive(Debug, Clone, Copy)]
pub struct ExhaustiveSuffixes;

impl SampleSource for ExhaustiveSuffixes {
    fn count(&self) -> u64 {
        1
    }
    fn block(&self, _z: u64, _j: usize, i: usize, n: usize) -> Vec<u64> {
        (0..1u64 << (n - i)).collect()
    }
    fn describe(&self) -> String {
        "exhaustive".into()
    }
}

/// Explicit strings of `n·w·t·n` bits; block `(j, i)` starts at bit `(i·w + j)·t·n`
/// and sample `k` uses the first `n − i` of its `n` bits.
#[derive(Debug, Clone)]
pub struct ExplicitStrings {
    pub strings: Vec<Vec<bool>>,
    pub w: usize,
    pub t: usize,
}

impl ExplicitStrings {
    pub fn new(strings: Vec<Vec<bool>>, n: usize, w: usize, t: usize) -> Result<Self> {
        let need = n * w * t * n;
        if let Some((index, s)) = strings.iter().enumerate().find(|(_, s)| s.len() < need) {
            return Err(BbError::SampleLength { index, expected: need, found: s.len() });
        }
        Ok(ExplicitStrings { strings, w, t })
    }
}

impl SampleSource for ExplicitStrings {
    fn count(&self) -> u64 {
        self.strings.len() as u64
    }
    fn block(&self, z: u64, j: usize, i: usize, n: usize) -> Vec<u64> {
        let s = &self.strings[z as usize];
        let j = j.min(self.w - 1);
        let start = (i * self.w + j) * self.t * n;
        (0..self.t).map(|k| bits::pack(&s[start + k * n..start + k * n + (n - i)])).collect()
    }
    fn describe(&self) -> String {
        format!("explicit({} strings, t={})", self.strings.len(), self.t)
    }
}

/// `count` pseudo-random strings with `t` samples per block, from a fixed seed.
#[derive(Debug, Clone, Copy)]
pub struct SeededSamples {
    pub count: u64,
    pub t: usize,
    pub seed: u64,
}

impl SampleSource for SeededSamples {
    fn count(&self) -> u64 {
        self.count
    }
    fn block(&self, z: u64, j: usize, i: usize, n: usize) -> Vec<u64> {
        let mix = self.seed ^ z.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((j as u64) << 40) ^ ((i as u64) << 52);
        let mut rng = ChaCha8Rng::seed_from_u64(mix);
        (0..self.t).map(|_| rng.gen::<u64>() & bits::mask(n - i)).collect()
    }
    fn describe(&self) -> String {
        format!("seeded(count={}, t={}, seed={})", self.count, self.t, self.seed)
    }
}

/// `⌈8·ln(4nw)/ε²⌉`.
pub fn default_t(n: usize, w: usize, eps: f64) -> usize {
    (8.0 * ((4 * n * w) as f64).ln() / (eps * eps)).ceil() as usize
}

/// Mean of `B(H(y_{j,i})_{1..i} s_k)` over the block's samples.
pub fn est_from_hsg_block(o: &OracleObp, h: &HittingSet, block: &[u64], rep: u64, i: usize) -> Q {
    let k = h.n - i;
    let prefix = h.prefix(rep, i);
    let hits = block.iter().filter(|&&s| o.query(bits::concat(prefix, s & bits::mask(k), k))).count();
    rational::ratio(hits as u64, block.len().max(1) as u64)
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplerReport {
    #[serde(serialize_with = "ser_q")]
    pub estimate: Q,
    pub z_found: u64,
    pub z_tried: u64,
    pub query_count: u64,
    pub index_queries: u64,
    pub class_counts: Vec<usize>,
    #[serde(serialize_with = "ser_q")]
    pub tester_eps: Q,
    pub source: String,
}

/// For each `z` in order, estimates every class from its block and runs the
/// class-level test at `eps/(6n)`; returns the first accepted value.
pub fn bb_sampler(o: &OracleObp, h: &HittingSet, src: &dyn SampleSource, eps: &Q, width_bound: usize) -> Result<SamplerReport> {
    let n = o.n();
    let start = o.queries();
    let idx = SeedClassIndex::build(o, h, width_bound)?;
    let index_queries = o.queries() - start;
    let tester_eps = eps / rational::int(6 * n.max(1) as i64);
    for z in 0..src.count() {
        let class_est: Vec<Vec<Q>> = (0..n)
            .map(|i| {
                let l = &idx.layers[i];
                (0..l.len()).map(|j| est_from_hsg_block(o, h, &src.block(z, j, i, n), l.representative(j), i)).collect()
            })
            .collect();
        if let BbVerdict::Accept { value } = bb_lc_test_classes(&idx, &class_est, &tester_eps)? {
            return Ok(SamplerReport {
                estimate: value,
                z_found: z,
                z_tried: z + 1,
                query_count: o.queries() - start,
                index_queries,
                class_counts: idx.class_counts(),
                tester_eps,
                source: src.describe(),
            });
        }
    }
    Err(BbError::SamplerFailure { tried: src.count() })
}

/// Checks that read the hidden program directly; only the test harness uses these.
pub mod analysis {
    use super::*;

    /// State reached by each seed at layer `i`.
    pub fn states_at(b: &Obp, h: &HittingSet, i: usize) -> Vec<usize> {
        (0..h.seeds())
            .map(|x| {
                let p = h.prefix(x, i);
                (0..i).fold(0, |v, k| b.next(k, v, (p >> (i - 1 - k)) & 1 == 1))
            })
            .collect()
    }

    /// `p_{v→}` for the state of every seed at every layer.
    pub fn true_estimates(b: &Obp, h: &HittingSet) -> SeedEstimates {
        let back = b.exact_probs(Direction::Backward);
        SeedEstimates((0..=b.len()).map(|i| states_at(b, h, i).into_iter().map(|v| back.values[i][v].clone()).collect()).collect())
    }

    /// States of layer `i < n` with a child that no seed reaches.
    pub fn unverified_states(b: &Obp, h: &HittingSet, i: usize) -> Vec<usize> {
        let here = states_at(b, h, i);
        let next = states_at(b, h, i + 1);
        let mut out: Vec<usize> = here
            .iter()
            .copied()
            .filter(|&v| (0..2).any(|bit| !next.contains(&b.next(i, v, bit == 1))))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Probability that a uniform input passes through an unverified state.
    pub fn unverified_mass(b: &Obp, h: &HittingSet) -> Q {
        let n = b.len();
        let bad: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                let u = unverified_states(b, h, i);
                (0..b.widths()[i]).map(|v| u.contains(&v)).collect()
            })
            .collect();
        let mut hits = 0u64;
        for x in 0..1u64 << n {
            let mut v = 0;
            let mut hit = false;
            for (i, row) in bad.iter().enumerate() {
                hit |= row[v];
                v = b.next(i, v, (x >> (n - 1 - i)) & 1 == 1);
            }
            hits += hit as u64;
        }
        rational::dyadic(hits, n)
    }

    /// Largest `|p_{v→} − p_{v′→}|` over pairs of seeds sharing a class.
    pub fn max_class_spread(b: &Obp, h: &HittingSet, idx: &SeedClassIndex) -> Q {
        let truth = true_estimates(b, h);
        let mut worst = Q::zero();
        for l in &idx.layers {
            for mem in &l.members {
                let vals: Vec<&Q> = mem.iter().map(|&x| &truth.0[l.layer][x as usize]).collect();
                let lo = vals.iter().min().unwrap();
                let hi = vals.iter().max().unwrap();
                let d = *hi - *lo;
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Whether seeds in the same true state always share a class.
    pub fn classes_coarsen_states(b: &Obp, h: &HittingSet, idx: &SeedClassIndex) -> bool {
        idx.layers.iter().all(|l| {
            let st = states_at(b, h, l.layer);
            let mut seen: HashMap<usize, usize> = HashMap::new();
            st.iter().zip(&l.class_of).all(|(&v, &c)| *seen.entry(v).or_insert(c) == c)
        })
    }

    /// `|E[B] − δ|` as a float, for reports.
    pub fn error_f64(b: &Obp, value: &Q) -> f64 {
        rational::abs(&(b.expectation() - value)).to_f64().unwrap_or(f64::NAN)
    }
}
