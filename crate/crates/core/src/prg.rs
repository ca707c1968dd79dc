//! Seeded generators and the four-stage hardness-to-randomness assembly.
//!
//! Seeds and outputs are packed bit-strings (see [`crate::bits`]); outputs are
//! at most 64 bits. Every loop over seeds goes through an [`EnumerationCap`].

use crate::bits;
use crate::combinat::{self, BiasGen, CombinatError, Design, Expander};
use crate::gf2k::{Elem, Field};
use crate::obp::Obp;
use crate::rational::{self, Q};
use crate::table::TruthTable;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrgError {
    #[error("{what}: 2^{bits} seeds exceed the enumeration cap of {cap}")]
    Capacity { what: String, bits: usize, cap: u64 },
    #[error("generator emits {found} bits, program reads {expected}")]
    OutputLength { expected: usize, found: usize },
    #[error("bad parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Combinat(#[from] CombinatError),
}

pub type Result<T> = std::result::Result<T, PrgError>;

/// Default number of seeds any single enumeration may visit.
pub const DEFAULT_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationCap(pub u64);

impl Default for EnumerationCap {
    fn default() -> Self {
        EnumerationCap(DEFAULT_CAP)
    }
}

impl EnumerationCap {
    /// Number of seeds of length `bits`, or a capacity error.
    pub fn check(&self, what: &str, bits: usize) -> Result<u64> {
        match bits::count(bits) {
            Some(c) if c <= self.0 => Ok(c),
            _ => Err(PrgError::Capacity { what: what.to_string(), bits, cap: self.0 }),
        }
    }
}

pub trait Prg: Send + Sync {
    fn seed_len(&self) -> usize;
    fn output_len(&self) -> usize;
    /// Output for `seed` (`seed_len` bits), packed.
    fn expand(&self, seed: u64) -> u64;
    /// Construction name and parameters.
    fn provenance(&self) -> String;

    fn bit(&self, seed: u64, i: usize) -> bool {
        bits::get(self.expand(seed), self.output_len(), i)
    }

    fn expand_bits(&self, seed: u64) -> Vec<bool> {
        bits::unpack(self.expand(seed), self.output_len())
    }
}

/// `G(y) = y`.
#[derive(Debug, Clone)]
pub struct Enumerate {
    pub n: usize,
}

impl Prg for Enumerate {
    fn seed_len(&self) -> usize {
        self.n
    }
    fn output_len(&self) -> usize {
        self.n
    }
    fn expand(&self, seed: u64) -> u64 {
        seed & bits::mask(self.n)
    }
    fn provenance(&self) -> String {
        format!("enumerate(n={})", self.n)
    }
}

/// A single seed mapping to `0^n`.
#[derive(Debug, Clone)]
pub struct AllZeros {
    pub n: usize,
}

impl Prg for AllZeros {
    fn seed_len(&self) -> usize {
        0
    }
    fn output_len(&self) -> usize {
        self.n
    }
    fn expand(&self, _seed: u64) -> u64 {
        0
    }
    fn provenance(&self) -> String {
        format!("all-zeros(n={})", self.n)
    }
}

#[derive(Debug, Clone)]
pub struct SmallBias {
    pub gen: BiasGen,
}

impl SmallBias {
    pub fn new(k: usize, q: u32) -> Self {
        SmallBias { gen: BiasGen::with_field(k, q) }
    }
}

impl Prg for SmallBias {
    fn seed_len(&self) -> usize {
        self.gen.seed_bits()
    }
    fn output_len(&self) -> usize {
        self.gen.k
    }
    fn expand(&self, seed: u64) -> u64 {
        self.gen.expand(seed)
    }
    fn provenance(&self) -> String {
        format!("small-bias(k={}, q={}, eps={})", self.gen.k, self.gen.field().k(), self.gen.eps())
    }
}

/// Explicit list of strings; seed `y` picks entry `y mod len`.
#[derive(Debug, Clone)]
pub struct ListGen {
    pub n: usize,
    pub strings: Vec<u64>,
}

impl ListGen {
    pub fn new(n: usize, strings: Vec<u64>) -> Result<Self> {
        if strings.is_empty() {
            return Err(PrgError::Params("empty string list".into()));
        }
        Ok(ListGen { n, strings })
    }
}

impl Prg for ListGen {
    fn seed_len(&self) -> usize {
        (usize::BITS - (self.strings.len() - 1).leading_zeros()) as usize
    }
    fn output_len(&self) -> usize {
        self.n
    }
    fn expand(&self, seed: u64) -> u64 {
        self.strings[(seed % self.strings.len() as u64) as usize] & bits::mask(self.n)
    }
    fn provenance(&self) -> String {
        format!("list(n={}, len={})", self.n, self.strings.len())
    }
}

/// Removes the coordinates outside a sorted position set from a packed string.
#[derive(Debug, Clone)]
struct Extract {
    len: usize,
    positions: Vec<usize>,
    /// Bit offsets (from the least significant end) of the dropped coordinates, descending.
    holes: Vec<u32>,
}

impl Extract {
    fn new(len: usize, positions: &[usize]) -> Self {
        let mut holes: Vec<u32> = (0..len).filter(|p| !positions.contains(p)).map(|p| (len - 1 - p) as u32).collect();
        holes.sort_unstable_by(|a, b| b.cmp(a));
        Extract { len, positions: positions.to_vec(), holes }
    }

    #[inline]
    fn apply(&self, x: u64) -> u64 {
        if self.holes.len() < self.positions.len() {
            let mut v = x & bits::mask(self.len);
            for &h in &self.holes {
                v = ((v >> (h + 1)) << h) | (v & bits::mask(h as usize));
            }
            v
        } else {
            bits::gather(x, self.len, &self.positions)
        }
    }
}

/// `G(x) = f(x_{S_1}) … f(x_{S_n})`.
#[derive(Debug, Clone)]
pub struct NwGen {
    pub design: Design,
    pub f: Arc<TruthTable>,
    extract: Vec<Extract>,
}

impl NwGen {
    pub fn new(design: Design, f: Arc<TruthTable>) -> Result<Self> {
        if f.n_in() != design.set_size || f.n_out() != 1 {
            return Err(PrgError::Params(format!(
                "hard function on {} bits does not match sets of size {}",
                f.n_in(),
                design.set_size
            )));
        }
        if design.len() > 64 || design.s > 64 {
            return Err(PrgError::Params("generator wider than 64 bits".into()));
        }
        let extract = design.sets.iter().map(|s| Extract::new(design.s, s)).collect();
        Ok(NwGen { design, f, extract })
    }

    /// `x_{S_i}` for a seed `x`.
    #[inline]
    pub fn restrict(&self, x: u64, i: usize) -> u64 {
        self.extract[i].apply(x)
    }

    pub fn nw_expand(&self, x: u64) -> u64 {
        let mut out = 0u64;
        for e in &self.extract {
            out = (out << 1) | self.f.get(e.apply(x));
        }
        out
    }

    /// The first `k` output bits.
    #[inline]
    pub fn expand_prefix(&self, x: u64, k: usize) -> u64 {
        let mut out = 0u64;
        for e in &self.extract[..k] {
            out = (out << 1) | self.f.get(e.apply(x));
        }
        out
    }
}

impl Prg for NwGen {
    fn seed_len(&self) -> usize {
        self.design.s
    }
    fn output_len(&self) -> usize {
        self.design.len()
    }
    fn expand(&self, seed: u64) -> u64 {
        self.nw_expand(seed)
    }
    fn provenance(&self) -> String {
        format!("nw(s={}, m={}, n={})", self.design.s, self.design.set_size, self.design.len())
    }
}

/// `G(r, v, d) = (r|_{S_1} ⊕ EW(v,d)_1, …, r|_{S_k} ⊕ EW(v,d)_k)` over blocks of `m` bits.
///
/// The walk of `k` vertices consumes `k − 1` digits, so the seed has
/// `s + m + 2(k − 1)` bits, laid out as `r ‖ v ‖ d`.
#[derive(Debug, Clone)]
pub struct DirectProductGen {
    pub m: usize,
    pub design: Design,
    pub expander: Expander,
    extract: Vec<Extract>,
}

impl DirectProductGen {
    pub fn new(design: Design, expander: Expander) -> Result<Self> {
        let m = design.set_size;
        if expander.m != m {
            return Err(PrgError::Params(format!("expander on {} bits for blocks of {m}", expander.m)));
        }
        let g = DirectProductGen { m, extract: design.sets.iter().map(|s| Extract::new(design.s, s)).collect(), design, expander };
        if g.seed_len() > 64 {
            return Err(PrgError::Params(format!("seed of {} bits", g.seed_len())));
        }
        Ok(g)
    }

    pub fn blocks(&self) -> usize {
        self.design.len()
    }

    pub fn digit_bits(&self) -> usize {
        2 * (self.blocks() - 1)
    }

    pub fn seed_len(&self) -> usize {
        self.design.s + self.m + self.digit_bits()
    }

    pub fn dp_expand(&self, r: u64, v: u64, d: &[u8]) -> Result<Vec<u64>> {
        let mut digits = d.to_vec();
        digits.push(0);
        let walk = self.expander.walk(v, &digits)?;
        Ok((0..self.blocks()).map(|i| self.extract[i].apply(r) ^ walk[i]).collect())
    }

    /// Splits a packed seed into `(r, v, digits)`.
    pub fn split(&self, seed: u64) -> (u64, u64, Vec<u8>) {
        let db = self.digit_bits();
        let d = seed & bits::mask(db);
        let v = (seed >> db) & bits::mask(self.m);
        let r = (seed >> (db + self.m)) & bits::mask(self.design.s);
        let digits = (0..self.blocks() - 1).map(|i| ((d >> (db - 2 * i - 2)) & 3) as u8).collect();
        (r, v, digits)
    }

    pub fn join(&self, r: u64, v: u64, digits: &[u8]) -> u64 {
        let d = digits.iter().fold(0u64, |acc, &x| (acc << 2) | x as u64);
        (((r << self.m) | v) << self.digit_bits()) | d
    }

    pub fn expand_seed(&self, seed: u64) -> Vec<u64> {
        let (r, v, d) = self.split(seed);
        self.dp_expand(r, v, &d).expect("digits in range")
    }
}

/// The supplied hard function `f: {0,1}^m → {0,1}`.
#[derive(Debug, Clone)]
pub struct HardFunction {
    pub m: usize,
    pub table: Arc<TruthTable>,
    pub provenance: String,
}

impl HardFunction {
    pub fn new(table: TruthTable, provenance: impl Into<String>) -> Result<Self> {
        if table.n_out() != 1 {
            return Err(PrgError::Params("hard function must be boolean".into()));
        }
        Ok(HardFunction { m: table.n_in(), table: Arc::new(table), provenance: provenance.into() })
    }

    pub fn from_fn(m: usize, mut f: impl FnMut(u64) -> bool, provenance: impl Into<String>) -> Self {
        HardFunction::new(TruthTable::from_fn(m, 1, |x| f(x) as u64), provenance).unwrap()
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Self {
        HardFunction::from_fn(m, |_| rng.gen::<bool>(), format!("random(m={m})"))
    }

    pub fn eval(&self, x: u64) -> bool {
        self.table.bit(x)
    }
}

/// `E_{y←U_s}[B(G(y))]`, exactly.
pub fn expectation_under(g: &dyn Prg, b: &Obp, cap: EnumerationCap) -> Result<Q> {
    if g.output_len() != b.len() {
        return Err(PrgError::OutputLength { expected: b.len(), found: g.output_len() });
    }
    let seeds = cap.check("expectation_under", g.seed_len())?;
    let mut hits = vec![0u64; b.widths()[b.len()]];
    for y in 0..seeds {
        hits[b.run_packed(g.expand(y))] += 1;
    }
    let total: Q = hits.iter().zip(b.labels()).map(|(&c, l)| l * rational::int(c as i64)).sum();
    Ok(total / rational::int(seeds as i64))
}

/// Stage parameters of the four-step assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwParams {
    /// Input length of `f`.
    pub m: usize,
    /// `|H| = 2^h_bits`.
    pub h_bits: usize,
    /// Number of variables of the extension, `ℓ·h_bits = m`.
    pub ell: usize,
    /// Field `GF(2^field_k)`.
    pub field_k: u32,
    /// Blocks of the direct-product generator.
    pub blocks: usize,
    /// Universe size of the direct-product design.
    pub dp_s: usize,
    /// Universe size of the NW design.
    pub nw_s: usize,
    /// Output length of the generator.
    pub n: usize,
}

impl IwParams {
    /// Smallest chain that fits the default cap: one block, `|H| = 2^h` with
    /// `h` the largest divisor of `m` at most `⌈log₂ m⌉`, and the smallest
    /// field in which the total degree `ℓ(|H| − 1)` is below `|F|`.
    pub fn desk(m: usize, n: usize) -> Self {
        assert!(m >= 1);
        let lg = (usize::BITS - (m.max(2) - 1).leading_zeros()) as usize;
        let h_bits = (1..=lg.max(1)).rev().find(|h| m.is_multiple_of(*h)).unwrap_or(1);
        let ell = m / h_bits;
        let degree = ell * ((1 << h_bits) - 1);
        let field_k = (1..).find(|&k| (1usize << k) > degree).unwrap() as u32;
        let mut p = IwParams { m, h_bits, ell, field_k, blocks: 1, dp_s: 0, nw_s: 0, n };
        p.dp_s = p.m1();
        p.nw_s = p.m3() + 1;
        p
    }

    /// The asymptotic profile: `|H| = m`, `|F| = m²`, `m₁` blocks, design
    /// density `α = γ/2` for the direct product and `α_nw` for NW.
    pub fn asymptotic(m: usize, n: usize, gamma: f64, alpha_nw: f64) -> Self {
        assert!(m.is_power_of_two() && m >= 2);
        let h_bits = m.trailing_zeros() as usize;
        let ell = m / h_bits;
        let field_k = 2 * h_bits as u32;
        let mut p = IwParams { m, h_bits, ell, field_k, blocks: 0, dp_s: 0, nw_s: 0, n };
        p.blocks = p.m1();
        p.dp_s = (p.m1() as f64 / (gamma / 2.0)).ceil() as usize;
        p.nw_s = (p.m3() as f64 / alpha_nw).ceil() as usize;
        p
    }

    pub fn h_size(&self) -> usize {
        1 << self.h_bits
    }

    /// Per-line degree bound `ℓ(|H| − 1)`.
    pub fn degree(&self) -> usize {
        self.ell * (self.h_size() - 1)
    }

    pub fn m1(&self) -> usize {
        (self.ell + 1) * self.field_k as usize
    }

    pub fn m2(&self) -> usize {
        self.dp_s + self.m1() + 2 * (self.blocks - 1)
    }

    pub fn m3(&self) -> usize {
        self.m2() + self.blocks
    }

    /// `γ = 2α` with `α = m₁/s` the direct-product design density.
    pub fn gamma(&self) -> f64 {
        2.0 * self.m1() as f64 / self.dp_s as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(PrgError::Params(s));
        if self.ell * self.h_bits != self.m {
            return bad(format!("ℓ·h = {}·{} ≠ m = {}", self.ell, self.h_bits, self.m));
        }
        if self.degree() >= 1 << self.field_k {
            return bad(format!("degree {} not below field size 2^{}", self.degree(), self.field_k));
        }
        if self.h_bits > self.field_k as usize {
            return bad("H larger than the field".into());
        }
        if self.blocks == 0 || self.dp_s < self.m1() || self.nw_s < self.m3() {
            return bad("design universe smaller than its sets".into());
        }
        if self.n == 0 || self.n > 64 {
            return bad(format!("output length {} outside 1..=64", self.n));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageDescriptor {
    pub stage: String,
    pub input_bits: usize,
    pub output_bits: usize,
    pub details: serde_json::Value,
}

/// The assembled generator with every intermediate table.
#[derive(Debug, Clone)]
pub struct IwGenerator {
    pub params: IwParams,
    pub f: HardFunction,
    pub field: Arc<Field>,
    /// `p` on `F^ℓ`, indexed by the packed point.
    pub lde: Vec<Elem>,
    /// `f′(x, y) = ⟨p(x), y⟩` on `m₁` bits.
    pub f1: Arc<TruthTable>,
    pub dp: DirectProductGen,
    /// `f″ = f′^k ∘ G_dp` on `m₂` bits, `k` outputs (block 1 most significant).
    pub f2: Arc<TruthTable>,
    /// `f‴(x, r) = ⟨f″(x), r⟩` on `m₃` bits.
    pub f3: Arc<TruthTable>,
    pub nw: NwGen,
    pub stages: Vec<StageDescriptor>,
}

/// Lagrange basis over `H = {0, …, |H|−1}`: `basis[a][x] = Π_{b≠a} (x − b)/(a − b)`.
pub fn lagrange_basis(field: &Field, h_size: usize) -> Vec<Vec<Elem>> {
    (0..h_size as Elem)
        .map(|a| {
            let denom = (0..h_size as Elem).filter(|&b| b != a).fold(1, |acc, b| field.mul(acc, a ^ b));
            let inv = field.inv(denom).expect("distinct points");
            field
                .elements()
                .map(|x| {
                    let num = (0..h_size as Elem).filter(|&b| b != a).fold(1, |acc, b| field.mul(acc, x ^ b));
                    field.mul(num, inv)
                })
                .collect()
        })
        .collect()
}

/// Evaluations of the extension of `f` (read as a function on `H^ℓ`) at every point of `F^ℓ`.
pub fn low_degree_extension(f: &TruthTable, field: &Field, h_bits: usize, ell: usize) -> Vec<Elem> {
    let k = field.k() as usize;
    let basis = lagrange_basis(field, 1 << h_bits);
    let ones: Vec<Vec<usize>> = (0..f.rows())
        .filter(|&x| f.bit(x))
        .map(|x| (0..ell).map(|j| ((x >> ((ell - 1 - j) * h_bits)) & bits::mask(h_bits)) as usize).collect())
        .collect();
    (0..1u64 << (k * ell))
        .map(|pt| {
            let coords: Vec<usize> = (0..ell).map(|j| ((pt >> ((ell - 1 - j) * k)) & bits::mask(k)) as usize).collect();
            ones.iter().fold(0, |acc, h| {
                let term = h.iter().zip(&coords).fold(1, |t, (&hj, &xj)| field.mul(t, basis[hj][xj]));
                acc ^ term
            })
        })
        .collect()
}

/// Packed point of `F^ℓ` for `x ∈ {0,1}^m` read as an element of `H^ℓ`.
pub fn embed(x: u64, h_bits: usize, ell: usize, k: usize) -> u64 {
    (0..ell).fold(0u64, |acc, j| (acc << k) | ((x >> ((ell - 1 - j) * h_bits)) & bits::mask(h_bits)))
}

/// `g(x, y) = ⟨p(x), y⟩` on `(ℓ + 1)·k` bits, `x ∈ F^ℓ` first.
pub fn hadamard_table(lde: &[Elem], field: &Field, ell: usize) -> TruthTable {
    let k = field.k() as usize;
    TruthTable::from_fn((ell + 1) * k, 1, |x| {
        let y = (x & bits::mask(k)) as Elem;
        crate::gf2k::inner(lde[(x >> k) as usize], y) as u64
    })
}

/// `f^k ∘ G_dp`: one output bit per block, block 1 most significant.
pub fn direct_product_table(dp: &DirectProductGen, f: &TruthTable) -> TruthTable {
    TruthTable::from_fn(dp.seed_len(), dp.blocks(), |seed| {
        dp.expand_seed(seed).iter().fold(0u64, |acc, &b| (acc << 1) | f.get(b))
    })
}

/// `g(x, r) = ⟨f(x), r⟩` for a multi-output `f`, `x` first.
pub fn inner_product_table(f: &TruthTable) -> TruthTable {
    let k = f.n_out();
    TruthTable::from_fn(f.n_in() + k, 1, |x| ((f.get(x >> k) & x & bits::mask(k)).count_ones() & 1) as u64)
}

pub fn assemble_iw_generator(f: &HardFunction, params: &IwParams, cap: EnumerationCap) -> Result<IwGenerator> {
    params.validate()?;
    if f.m != params.m {
        return Err(PrgError::Params(format!("f has {} inputs, parameters expect {}", f.m, params.m)));
    }
    cap.check("NW seed", params.nw_s)?;
    // stage tables are materialized, so they obey the same cap
    cap.check("f'' table", params.m2())?;
    cap.check("f''' table", params.m3())?;

    let field = Arc::new(Field::new(params.field_k).map_err(|e| PrgError::Params(e.to_string()))?);
    let k = params.field_k as usize;
    let (m1, m2, m3) = (params.m1(), params.m2(), params.m3());

    let lde = low_degree_extension(&f.table, &field, params.h_bits, params.ell);
    let f1 = hadamard_table(&lde, &field, params.ell);

    let dp_design = combinat::build_design_sized(params.dp_s, m1, params.blocks)?;
    let dp = DirectProductGen::new(dp_design, Expander::unmeasured(m1))?;
    let f2 = direct_product_table(&dp, &f1);
    let kb = params.blocks;
    let f3 = inner_product_table(&f2);

    let nw_design = combinat::build_design_sized(params.nw_s, m3, params.n)?;
    let f3 = Arc::new(f3);
    let nw = NwGen::new(nw_design, f3.clone())?;

    let stages = vec![
        StageDescriptor {
            stage: "f".into(),
            input_bits: params.m,
            output_bits: 1,
            details: json!({ "provenance": f.provenance }),
        },
        StageDescriptor {
            stage: "low-degree extension + Hadamard".into(),
            input_bits: m1,
            output_bits: 1,
            details: json!({
                "field_k": k, "modulus": field.modulus(), "h_size": params.h_size(), "ell": params.ell,
                "degree": params.degree(), "formula": "m1 = (ell + 1) * field_k"
            }),
        },
        StageDescriptor {
            stage: "direct product".into(),
            input_bits: m2,
            output_bits: kb,
            details: json!({
                "blocks": kb, "design_s": params.dp_s, "set_size": m1, "gamma": params.gamma(),
                "max_intersection": dp.design.max_intersection(), "formula": "m2 = s + m1 + 2(blocks - 1)"
            }),
        },
        StageDescriptor {
            stage: "inner product".into(),
            input_bits: m3,
            output_bits: 1,
            details: json!({ "formula": "m3 = m2 + blocks" }),
        },
        StageDescriptor {
            stage: "nw".into(),
            input_bits: params.nw_s,
            output_bits: params.n,
            details: json!({
                "set_size": m3, "max_intersection": nw.design.max_intersection(),
                "intersection_bound": nw.design.intersection_bound()
            }),
        },
    ];

    Ok(IwGenerator {
        params: params.clone(),
        f: f.clone(),
        field,
        lde,
        f1: Arc::new(f1),
        dp,
        f2: Arc::new(f2),
        f3,
        nw,
        stages,
    })
}

impl IwGenerator {
    pub fn stages_json(&self) -> String {
        serde_json::to_string_pretty(&self.stages).expect("serializable")
    }
}

impl Prg for IwGenerator {
    fn seed_len(&self) -> usize {
        self.nw.seed_len()
    }
    fn output_len(&self) -> usize {
        self.nw.output_len()
    }
    fn expand(&self, seed: u64) -> u64 {
        self.nw.nw_expand(seed)
    }
    fn provenance(&self) -> String {
        format!("iw(m={}, m1={}, m2={}, m3={}, s={}, n={})", self.params.m, self.params.m1(), self.params.m2(), self.params.m3(), self.params.nw_s, self.params.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn desk_profile_at_four() {
        let p = IwParams::desk(4, 8);
        assert_eq!((p.h_bits, p.ell, p.field_k), (2, 2, 3));
        assert_eq!((p.m1(), p.m2(), p.m3(), p.nw_s), (9, 18, 19, 20));
        p.validate().unwrap();
    }

    #[test]
    fn extension_agrees_on_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = HardFunction::random(&mut rng, 4);
        let p = IwParams::desk(4, 4);
        let g = assemble_iw_generator(&f, &p, EnumerationCap::default()).unwrap();
        for x in 0..16 {
            let pt = embed(x, 2, 2, 3);
            assert_eq!(g.lde[pt as usize], f.eval(x) as Elem);
            assert_eq!(g.f1.bit((pt << 3) | 1), f.eval(x));
        }
    }

    #[test]
    fn extract_matches_gather() {
        for positions in [vec![0, 2, 3], vec![1, 2, 3, 4, 5], vec![0, 1, 2, 3, 4, 6]] {
            let e = Extract::new(7, &positions);
            for x in 0..128 {
                assert_eq!(e.apply(x), bits::gather(x, 7, &positions));
            }
        }
    }

    #[test]
    fn list_gen_seed_length() {
        assert_eq!(ListGen::new(3, vec![1]).unwrap().seed_len(), 0);
        assert_eq!(ListGen::new(3, vec![1, 2, 3]).unwrap().seed_len(), 2);
        assert_eq!(ListGen::new(3, vec![1, 2, 3, 4]).unwrap().seed_len(), 2);
    }
}
