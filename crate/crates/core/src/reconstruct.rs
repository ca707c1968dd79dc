//! Turning predictors into circuits: the decoder, XOR, inner-product and NW
//! reconstruction steps, and the chain that maps a next-bit predictor for the
//! assembled generator to an exact evaluator for `f`.
//!
//! Every step re-measures its precondition, searches seeds in lexicographic
//! order, verifies the candidate exhaustively and returns the first that passes.

use crate::bits;
use crate::combinat::{Sampler, BiasGen};
use crate::evaluator::{self, Domain, EvalError, Evaluator, Node, SizeBudget, Src};
use crate::gf2k::{Elem, Field};
use crate::prg::{self, DirectProductGen, EnumerationCap, IwGenerator, NwGen, Prg, PrgError};
use crate::rational::{self, Q};
use crate::table::{SparseTable, TruthTable};
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Predictor,
    Nw,
    Gl,
    Xor,
    Rm,
    Final,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Predictor => "predictor",
            Stage::Nw => "NW_RESTRICT",
            Stage::Gl => "GL_RECON",
            Stage::Xor => "XOR_RECON",
            Stage::Rm => "RM_RECON",
            Stage::Final => "final check",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconError {
    #[error("{stage}: precondition failed, measured {measured}, need {required}")]
    Precondition { stage: Stage, measured: String, required: String },
    #[error("{stage}: no candidate passed after {tried} seeds (best score {best})")]
    Failure { stage: Stage, tried: u64, best: String },
    #[error("{stage}: size {size} exceeds budget {budget}")]
    Budget { stage: Stage, size: u128, budget: u128 },
    #[error("{stage}: enumeration refused")]
    Capacity { stage: Stage, source: PrgError },
    #[error("{stage}: {message}")]
    Params { stage: Stage, message: String },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl ReconError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            ReconError::Precondition { stage, .. }
            | ReconError::Failure { stage, .. }
            | ReconError::Budget { stage, .. }
            | ReconError::Capacity { stage, .. }
            | ReconError::Params { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ReconError>;

/// How many sampler queries to use and how many seeds to try.
///
/// Without `max_seeds` the search covers `min(2^seed_len, cap)` seeds; an
/// explicit `max_seeds` above the cap is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerPlan {
    pub queries: usize,
    pub max_seeds: Option<u64>,
}

impl SamplerPlan {
    fn budget(&self, stage: Stage, seed_bits: usize, cap: EnumerationCap) -> Result<u64> {
        let all = bits::count(seed_bits).unwrap_or(u64::MAX);
        match self.max_seeds {
            Some(k) if k > cap.0 => Err(ReconError::Capacity {
                stage,
                source: PrgError::Capacity { what: format!("{stage} seed budget {k}"), bits: seed_bits, cap: cap.0 },
            }),
            Some(k) => Ok(k.min(all)),
            None => Ok(all.min(cap.0)),
        }
    }
}

/// The artifact's constants for the reconstruction chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub cap: EnumerationCap,
    /// Lines per candidate decoder circuit.
    pub rm: SamplerPlan,
    /// Copies of the randomized XOR circuit per candidate.
    pub xor: SamplerPlan,
    /// Field degree `q` of the small-bias space (seed `2q` bits).
    pub gl_bias_q: u32,
    pub gl_max_seeds: Option<u64>,
    pub nw_max_assignments: Option<u64>,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            cap: EnumerationCap::default(),
            rm: SamplerPlan { queries: 7, max_seeds: None },
            xor: SamplerPlan { queries: 5, max_seeds: None },
            gl_bias_q: 10,
            gl_max_seeds: None,
            nw_max_assignments: None,
        }
    }
}

impl ReconConfig {
    /// Snapshot of every constant together with the budget formulas it feeds.
    pub fn ledger(&self) -> serde_json::Value {
        json!({
            "cap": self.cap.0,
            "rm_lines": self.rm.queries,
            "rm_max_seeds": self.rm.max_seeds,
            "rm_success_threshold": "99/100",
            "xor_copies": self.xor.queries,
            "xor_max_seeds": self.xor.max_seeds,
            "xor_success_target": "99/100",
            "xor_threshold": "2^-ceil(gamma*m1)",
            "gl_bias_q": self.gl_bias_q,
            "gl_max_seeds": self.gl_max_seeds,
            "gl_ell": "ceil(log2(128*k/delta^2 + 1)), k = output bits",
            "gl_delta": "largest power of two below ADV(C3), at least 1/(8n)",
            "nw_max_assignments": self.nw_max_assignments,
            "budgets": {
                "nw": "|B| + i*2^maxint",
                "gl": "k*(1 + (2^ell - 1)*(|B| + 1))",
                "xor": "1 + t*(|B| + 2^(2k-1) + (k-1)*2^maxint)",
                "rm": "2*t*N^2*k*(|B| + 1) + t*N^3 + 1",
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub seeds_tried: u64,
    pub score: String,
    pub size: u128,
    pub budget: SizeBudget,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct StageOutput {
    pub evaluator: Arc<Evaluator>,
    pub report: StageReport,
}

fn const_bits(value: u64, width: usize) -> Vec<Src> {
    (0..width).map(|j| Src::Bit((value >> (width - 1 - j)) & 1 == 1)).collect()
}

fn wire(i: usize, flip: bool) -> Src {
    if flip {
        Src::NotIn(i)
    } else {
        Src::In(i)
    }
}

fn pow2(e: usize) -> u128 {
    1u128.checked_shl(e as u32).unwrap_or(u128::MAX)
}

fn finish(stage: Stage, evaluator: Evaluator, budget: SizeBudget, tried: u64, score: Q, details: serde_json::Value) -> Result<StageOutput> {
    let size = evaluator.size();
    if !budget.admits(size) {
        return Err(ReconError::Budget { stage, size, budget: budget.bound });
    }
    evaluator.tabulate();
    Ok(StageOutput {
        evaluator: Arc::new(evaluator),
        report: StageReport { stage, seeds_tried: tried, score: rational::format(&score), size, budget, details },
    })
}

// ---------------------------------------------------------------------------
// Decoder step

/// Field and subcube of the low-degree encoding.
#[derive(Debug, Clone)]
pub struct RmParams {
    pub field: Arc<Field>,
    pub h_bits: usize,
    pub ell: usize,
}

impl RmParams {
    pub fn new(field_k: u32, h_bits: usize, ell: usize) -> Result<Self> {
        let bad = |message: String| ReconError::Params { stage: Stage::Rm, message };
        let field = Field::new(field_k).map_err(|e| bad(e.to_string()))?;
        let p = RmParams { field: Arc::new(field), h_bits, ell };
        if p.degree() >= p.field.size() || h_bits > field_k as usize {
            return Err(bad(format!("degree {} does not fit GF(2^{field_k})", p.degree())));
        }
        if ell * field_k as usize > 16 || p.field.size() * field_k as usize > 64 {
            return Err(bad("field too large for packed decoding".into()));
        }
        Ok(p)
    }

    pub fn m(&self) -> usize {
        self.h_bits * self.ell
    }

    pub fn k(&self) -> usize {
        self.field.k() as usize
    }

    pub fn m1(&self) -> usize {
        (self.ell + 1) * self.k()
    }

    pub fn degree(&self) -> usize {
        self.ell * ((1 << self.h_bits) - 1)
    }

    /// `g(x, y) = ⟨p(x), y⟩` for the extension `p` of `f`.
    pub fn encode(&self, f: &TruthTable) -> TruthTable {
        let lde = prg::low_degree_extension(f, &self.field, self.h_bits, self.ell);
        prg::hadamard_table(&lde, &self.field, self.ell)
    }

    /// Bits of the point `x + w` for input `x ∈ H^ℓ` (wires `0..m`) and a constant `w ∈ F^ℓ`.
    fn shifted_point(&self, w: u64) -> Vec<Src> {
        let (k, h) = (self.k(), self.h_bits);
        let mut out = Vec::with_capacity(k * self.ell);
        for c in 0..self.ell {
            let wc = (w >> ((self.ell - 1 - c) * k)) & bits::mask(k);
            for p in 0..k {
                let wb = (wc >> (k - 1 - p)) & 1 == 1;
                if p < k - h {
                    out.push(Src::Bit(wb));
                } else {
                    out.push(wire(c * h + p - (k - h), wb));
                }
            }
        }
        out
    }

    fn scale(&self, lambda: Elem, v: u64) -> u64 {
        let k = self.k();
        (0..self.ell).fold(0u64, |acc, c| {
            let vc = ((v >> ((self.ell - 1 - c) * k)) & bits::mask(k)) as Elem;
            (acc << k) | self.field.mul(lambda, vc) as u64
        })
    }
}

/// `B′_i(x) = MAJ_z (B(x, e_i + z) ⊕ B(x, z))`, assembled into an element of `F`.
pub fn hadamard_decoder(rm: &RmParams, b: &Arc<Evaluator>) -> Result<Evaluator> {
    let (k, n_pt) = (rm.k(), rm.k() * rm.ell);
    let mut bit_nodes = Vec::with_capacity(k);
    for p in 0..k {
        let unit = 1u64 << (k - 1 - p);
        let mut terms = Vec::with_capacity(rm.field.size());
        for z in 0..rm.field.size() as u64 {
            let call = |y: u64| -> Result<Src> {
                let mut args = evaluator::wires(n_pt);
                args.extend(const_bits(y, k));
                Ok(Src::Node(Node::call(args, b.clone())?))
            };
            terms.push(Src::Node(Node::xor(vec![call(unit ^ z)?, call(z)?])));
        }
        bit_nodes.push(Src::Node(Node::maj(terms)));
    }
    Ok(Evaluator::new(n_pt, Node::concat(bit_nodes)?)?)
}

pub fn rm_budget(rm: &RmParams, lines: usize, b_size: u128) -> SizeBudget {
    let (n, k, t) = (rm.field.size() as u128, rm.k() as u128, lines as u128);
    let bound = (2 * t * n * n * k).saturating_mul(b_size.saturating_add(1)).saturating_add(t * n * n * n + 1);
    SizeBudget::new(bound, format!("2*t*N^2*k*(|B|+1) + t*N^3 + 1 with t={lines}, N={n}, k={k}, |B|={b_size}"))
}

/// Requires `SUC(B, g) > 0.99` and returns `C` with `C = f` everywhere.
pub fn rm_recon(rm: &RmParams, f: &TruthTable, b: Arc<Evaluator>, plan: &SamplerPlan, cap: EnumerationCap) -> Result<StageOutput> {
    let stage = Stage::Rm;
    if f.n_in() != rm.m() || b.n_in() != rm.m1() || b.n_out() != 1 {
        return Err(ReconError::Params { stage, message: "input lengths do not match the encoding".into() });
    }
    let g = rm.encode(f);
    b.tabulate();
    let suc = evaluator::success(&b, &g, Domain::All);
    if suc <= rational::q(99, 100) {
        return Err(ReconError::Precondition { stage, measured: rational::format(&suc), required: "> 99/100".into() });
    }
    let bp = Arc::new(hadamard_decoder(rm, &b)?);
    bp.tabulate();

    let (k, n) = (rm.k(), rm.field.size());
    let sampler = Sampler::walk(k * rm.ell, plan.queries, 0.01).map_err(|e| ReconError::Params { stage, message: e.to_string() })?;
    let seeds = plan.budget(stage, sampler.seed_bits(), cap)?;
    let budget = rm_budget(rm, plan.queries, b.size());
    let mut best = 0u64;
    let mut lines = Vec::new();
    for seed in 0..seeds {
        sampler.sample_into(seed, &mut lines);
        let mut decoders = Vec::with_capacity(lines.len());
        for &v in &lines {
            let mut word = Vec::with_capacity(n);
            for lambda in 0..n as Elem {
                word.push(Src::Node(Node::call(rm.shifted_point(rm.scale(lambda, v)), bp.clone())?));
            }
            decoders.push(Node::decode(rm.field.clone(), rm.degree(), word)?);
        }
        let vote = Node::plurality(decoders, k)?;
        let c = Evaluator::new(rm.m(), Node::project(vote, vec![k - 1])?)?;
        let agree = evaluator::agreements(&c, f, Domain::All);
        best = best.max(agree);
        if agree == f.rows() {
            let details = json!({ "seed": seed, "lines": plan.queries, "field_k": k, "degree": rm.degree(), "decoder_size": bp.size() });
            return finish(stage, c, budget, seed + 1, rational::int(1), details);
        }
    }
    Err(ReconError::Failure { stage, tried: seeds, best: format!("{best}/{}", f.rows()) })
}

// ---------------------------------------------------------------------------
// XOR step

/// Bit layout of the randomness `R = (i, a, v, d, w)` of the XOR circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct XorRandomness {
    pub i_bits: usize,
    pub a_bits: usize,
    pub v_bits: usize,
    pub d_bits: usize,
    pub w_bits: usize,
}

impl XorRandomness {
    pub fn of(dp: &DirectProductGen) -> Self {
        let k = dp.blocks();
        XorRandomness {
            i_bits: (usize::BITS - (k - 1).leading_zeros()) as usize,
            a_bits: dp.design.s - dp.m,
            v_bits: dp.m,
            d_bits: dp.digit_bits(),
            w_bits: k,
        }
    }

    pub fn len(&self) -> usize {
        self.i_bits + self.a_bits + self.v_bits + self.d_bits + self.w_bits
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn split(&self, r: u64) -> [u64; 5] {
        let widths = [self.i_bits, self.a_bits, self.v_bits, self.d_bits, self.w_bits];
        let mut out = [0u64; 5];
        let mut shift = self.len();
        for (o, w) in out.iter_mut().zip(widths) {
            shift -= w;
            *o = (r >> shift) & bits::mask(w);
        }
        out
    }
}

/// `F(x, R)` for a fixed `R`, as a node over the `m` input wires.
fn xor_candidate(dp: &DirectProductGen, f: &TruthTable, b: &Arc<Evaluator>, layout: &XorRandomness, r: u64) -> Result<Node> {
    let (m, s, kb) = (dp.m, dp.design.s, dp.blocks());
    let [i_raw, a, v, d, w] = layout.split(r);
    let i = (i_raw as usize) % kb;
    let digits: Vec<u8> = (0..kb - 1).map(|q| ((d >> (layout.d_bits - 2 * q - 2)) & 3) as u8).collect();
    let mut padded = digits.clone();
    padded.push(0);
    let walk = dp.expander.walk(v, &padded).map_err(|e| ReconError::Params { stage: Stage::Xor, message: e.to_string() })?;
    let block_bit = |blk: u64, q: usize| (blk >> (m - 1 - q)) & 1 == 1;

    // h(i, x, a, v, d): r|_{S_i} = x ⊕ EW_i, the rest of r from a
    let si = &dp.design.sets[i];
    let mut r_src: Vec<Src> = Vec::with_capacity(s);
    let mut a_pos = 0;
    for p in 0..s {
        if let Some(q) = si.iter().position(|&x| x == p) {
            r_src.push(wire(q, block_bit(walk[i], q)));
        } else {
            r_src.push(Src::Bit((a >> (layout.a_bits - 1 - a_pos)) & 1 == 1));
            a_pos += 1;
        }
    }
    let mut b_args = r_src.clone();
    b_args.extend(const_bits(v, m));
    b_args.extend(const_bits(d, layout.d_bits));
    let mut comb_args = vec![Src::Node(Node::call(b_args, b.clone())?)];

    for (j, sj) in dp.design.sets.iter().enumerate() {
        if j == i {
            continue;
        }
        // block j of G∘h depends on x only through S_i ∩ S_j
        let mut varying = Vec::new();
        let mut fixed = 0u64;
        let mut slots = Vec::new();
        for (q, &p) in sj.iter().enumerate() {
            let flip = block_bit(walk[j], q);
            match &r_src[p] {
                Src::Bit(bit) => fixed |= ((*bit ^ flip) as u64) << (m - 1 - q),
                Src::In(x) => {
                    varying.push(wire(*x, flip));
                    slots.push(q);
                }
                Src::NotIn(x) => {
                    varying.push(wire(*x, !flip));
                    slots.push(q);
                }
                Src::Node(_) => unreachable!(),
            }
        }
        let c = slots.len();
        let table = TruthTable::from_fn(c, 1, |u| {
            let blk = slots.iter().enumerate().fold(fixed, |acc, (t, &q)| acc | (((u >> (c - 1 - t)) & 1) << (m - 1 - q)));
            f.get(blk)
        });
        comb_args.push(Src::Node(Node::lookup(varying, Arc::new(table))?));
    }

    // output y_i when the first t bits of w are zero (t = mismatches), else the last bit of w
    let zeros = (0..kb - 1).take_while(|&q| (w >> (kb - 1 - q)) & 1 == 0).count();
    let w_last = w & 1;
    let rule = TruthTable::from_fn(2 * kb - 1, 1, |row| {
        let y = row >> (kb - 1);
        let fv = row & bits::mask(kb - 1);
        let mut t = 0;
        let mut q = 0;
        for j in 0..kb {
            if j == i {
                continue;
            }
            let yj = (y >> (kb - 1 - j)) & 1;
            let fj = (fv >> (kb - 2 - q)) & 1;
            t += (yj != fj) as usize;
            q += 1;
        }
        if t <= zeros {
            (y >> (kb - 1 - i)) & 1
        } else {
            w_last
        }
    });
    Ok(Node::lookup(comb_args, Arc::new(rule))?)
}

pub fn xor_budget(dp: &DirectProductGen, copies: usize, b_size: u128) -> SizeBudget {
    let kb = dp.blocks();
    let per = b_size.saturating_add(pow2(2 * kb - 1)).saturating_add((kb as u128 - 1).saturating_mul(pow2(dp.design.max_intersection())));
    SizeBudget::new(
        (copies as u128).saturating_mul(per).saturating_add(1),
        format!("1 + t*(|B| + 2^(2k-1) + (k-1)*2^maxint) with t={copies}, k={kb}, |B|={b_size}"),
    )
}

/// `2^{−⌈γm⌉}`.
pub fn xor_threshold(gamma: f64, m: usize) -> Q {
    let e = (gamma * m as f64).ceil() as usize;
    rational::dyadic(1, e)
}

/// Requires `SUC(B, f^k ∘ G_dp) ≥ threshold`; returns `C` with `SUC(C, f) > 0.99`.
pub fn xor_recon(dp: &DirectProductGen, f: &TruthTable, b: Arc<Evaluator>, threshold: &Q, plan: &SamplerPlan, cap: EnumerationCap) -> Result<StageOutput> {
    let stage = Stage::Xor;
    if f.n_in() != dp.m || b.n_in() != dp.seed_len() || b.n_out() != dp.blocks() {
        return Err(ReconError::Params { stage, message: "lengths do not match the direct-product generator".into() });
    }
    b.tabulate();
    let target = prg::direct_product_table(dp, f);
    let suc = evaluator::success(&b, &target, Domain::All);
    if suc < *threshold {
        return Err(ReconError::Precondition { stage, measured: rational::format(&suc), required: format!(">= {}", rational::format(threshold)) });
    }
    let layout = XorRandomness::of(dp);
    let sampler = Sampler::walk(layout.len(), plan.queries, 0.01).map_err(|e| ReconError::Params { stage, message: e.to_string() })?;
    let seeds = plan.budget(stage, sampler.seed_bits(), cap)?;
    let budget = xor_budget(dp, plan.queries, b.size());
    let need = f.rows() * 99 / 100 + 1;
    let mut best = 0u64;
    let mut rs = Vec::new();
    for seed in 0..seeds {
        sampler.sample_into(seed, &mut rs);
        let copies = rs.iter().map(|&r| Ok(Src::Node(xor_candidate(dp, f, &b, &layout, r)?))).collect::<Result<Vec<_>>>()?;
        let c = Evaluator::new(dp.m, Node::maj(copies))?;
        let agree = evaluator::agreements(&c, f, Domain::All);
        best = best.max(agree);
        if agree >= need && rational::ratio(agree, f.rows()) > rational::q(99, 100) {
            let details = json!({ "seed": seed, "copies": plan.queries, "randomness_bits": layout.len(), "threshold": rational::format(threshold) });
            return finish(stage, c, budget, seed + 1, rational::ratio(agree, f.rows()), details);
        }
    }
    Err(ReconError::Failure { stage, tried: seeds, best: format!("{best}/{}", f.rows()) })
}

// ---------------------------------------------------------------------------
// Inner-product step

/// `ℓ = ⌈log₂(128k/δ² + 1)⌉`.
pub fn gl_ell(k: usize, delta: &Q) -> usize {
    let x = rational::int(128 * k as i64) / (delta * delta) + rational::int(1);
    let mut ell = 0usize;
    let mut p = rational::int(1);
    while p < x {
        p *= rational::int(2);
        ell += 1;
    }
    ell
}

/// `δ′ = δ·2^{−ℓ−2}`.
pub fn gl_delta_prime(delta: &Q, ell: usize) -> Q {
    delta * rational::dyadic(1, ell + 2)
}

pub fn gl_budget(k: usize, ell: usize, b_size: u128) -> SizeBudget {
    let bound = (k as u128).saturating_mul(1u128.saturating_add((pow2(ell) - 1).saturating_mul(b_size.saturating_add(1))));
    SizeBudget::new(bound, format!("k*(1 + (2^ell - 1)*(|B| + 1)) with k={k}, ell={ell}, |B|={b_size}"))
}

/// Requires `ADV(B, ⟨f(x), r⟩) > δ`; returns `C` with `SUC(C, f) > δ·2^{−ℓ−2}`.
pub fn gl_recon(f: &TruthTable, b: Arc<Evaluator>, delta: &Q, bias_q: u32, max_seeds: Option<u64>, cap: EnumerationCap) -> Result<StageOutput> {
    let stage = Stage::Gl;
    let (mi, k) = (f.n_in(), f.n_out());
    if b.n_in() != mi + k || b.n_out() != 1 {
        return Err(ReconError::Params { stage, message: "predictor must read (x, r)".into() });
    }
    if *delta < rational::dyadic(1, mi) {
        let c = Evaluator::constant(mi, 0, k)?;
        let suc = evaluator::success(&c, f, Domain::All);
        let details = json!({ "short_circuit": true, "delta_prime": rational::format(&rational::dyadic(1, mi)) });
        return finish(stage, c, SizeBudget::new(1, "constant"), 0, suc, details);
    }
    b.tabulate();
    let g = prg::inner_product_table(f);
    let adv = evaluator::advantage(&b, &g, Domain::All);
    if adv <= *delta {
        return Err(ReconError::Precondition { stage, measured: rational::format(&adv), required: format!("> {}", rational::format(delta)) });
    }
    let ell = gl_ell(k, delta);
    let dprime = gl_delta_prime(delta, ell);
    if ell * k > 64 || ell > 24 {
        return Err(ReconError::Params { stage, message: format!("ell = {ell} too large") });
    }
    let bias = BiasGen::with_field(ell * k, bias_q);
    let all = bits::count(bias.seed_bits()).unwrap_or(u64::MAX);
    let seeds = match max_seeds {
        Some(s) if s > cap.0 => return Err(ReconError::Capacity { stage, source: PrgError::Capacity { what: "GL seeds".into(), bits: bias.seed_bits(), cap: cap.0 } }),
        Some(s) => s.min(all),
        None => cap.check("GL seeds", bias.seed_bits()).map_err(|source| ReconError::Capacity { stage, source })?,
    };

    // group inputs by (B(x, ·), f(x))
    let patterns = 1usize << k;
    let mut groups: HashMap<(u64, u64), u64> = HashMap::new();
    for x in 0..f.rows() {
        let pat = (0..patterns as u64).fold(0u64, |acc, u| acc | (b.run_packed((x << k) | u) << u));
        *groups.entry((pat, f.get(x))).or_insert(0) += 1;
    }
    let groups: Vec<((u64, u64), u64)> = {
        let mut g: Vec<_> = groups.into_iter().collect();
        g.sort();
        g
    };

    let mut best = 0u64;
    let mut hist = vec![0u64; 2 * patterns];
    let mut tried = 0u64;
    for y in 0..seeds {
        let out = bias.expand(y);
        let rv: Vec<u64> = (0..ell).map(|j| (out >> ((ell - 1 - j) * k)) & bits::mask(k)).collect();
        for bvec in 0..(1u64 << ell) {
            tried += 1;
            hist.iter_mut().for_each(|h| *h = 0);
            // Gray-code walk over J, skipping J = ∅
            let (mut rj, mut bj) = (0u64, 0u64);
            for step in 1..(1u64 << ell) {
                let j = step.trailing_zeros() as usize;
                rj ^= rv[j];
                bj ^= (bvec >> (ell - 1 - j)) & 1;
                hist[((bj as usize) << k) | rj as usize] += 1;
            }
            let total = (1u64 << ell) - 1;
            let mut agree = 0u64;
            for &((pat, fx), count) in &groups {
                let mut cx = 0u64;
                for i in 0..k {
                    let e = 1u64 << (k - 1 - i);
                    let mut ones = 0u64;
                    for (cell, &h) in hist.iter().enumerate() {
                        if h == 0 {
                            continue;
                        }
                        let (bjc, u) = ((cell >> k) as u64, (cell & (patterns - 1)) as u64);
                        ones += h * (bjc ^ ((pat >> (u ^ e)) & 1));
                    }
                    cx = (cx << 1) | (2 * ones > total) as u64;
                }
                if cx == fx {
                    agree += count;
                }
            }
            best = best.max(agree);
            if rational::ratio(agree, f.rows()) > dprime {
                let c = gl_circuit(&b, mi, k, &hist)?;
                let check = evaluator::agreements(&c, f, Domain::All);
                if check != agree {
                    return Err(ReconError::Invariant(format!("grouped count {agree} differs from direct count {check}")));
                }
                let details = json!({
                    "seed": y, "b": bvec, "ell": ell, "delta": rational::format(delta),
                    "delta_prime": rational::format(&dprime), "bias_q": bias_q, "bias_eps": bias.eps()
                });
                return finish(stage, c, gl_budget(k, ell, b.size()), tried, rational::ratio(agree, f.rows()), details);
            }
        }
    }
    Err(ReconError::Failure { stage, tried, best: format!("{best}/{}", f.rows()) })
}

/// `C_i(x) = MAJ_{J≠∅}(b^J ⊕ B(x, r^J ⊕ e_i))`, with equal terms merged into weights.
fn gl_circuit(b: &Arc<Evaluator>, mi: usize, k: usize, hist: &[u64]) -> Result<Evaluator> {
    let patterns = 1usize << k;
    let mut outs = Vec::with_capacity(k);
    for i in 0..k {
        let e = 1u64 << (k - 1 - i);
        let mut children = Vec::new();
        for (cell, &h) in hist.iter().enumerate() {
            if h == 0 {
                continue;
            }
            let (bj, u) = (cell >> k == 1, (cell & (patterns - 1)) as u64);
            let mut args = evaluator::wires(mi);
            args.extend(const_bits(u ^ e, k));
            let term = Node::xor(vec![Src::Bit(bj), Src::Node(Node::call(args, b.clone())?)]);
            children.push((h, term));
        }
        outs.push(Src::Node(Node::weighted_maj(children)?));
    }
    Ok(Evaluator::new(mi, Node::concat(outs)?)?)
}

// ---------------------------------------------------------------------------
// NW step

/// A next-bit predictor for bit `bit + 1` (1-based) reading the first `bit` output bits.
#[derive(Debug, Clone)]
pub struct PredictorInput {
    pub evaluator: Arc<Evaluator>,
    /// `Pr[B(prefix) = next] − 1/2` as claimed by the caller.
    pub claimed_advantage: Q,
    /// Number of prefix bits read (0-based index of the predicted bit).
    pub bit: usize,
}

/// `Pr_y[B(G(y)_{1..i}) = G(y)_{i+1}] − 1/2` by seed enumeration.
pub fn predictor_advantage(g: &dyn Prg, p: &PredictorInput, cap: EnumerationCap) -> std::result::Result<Q, PrgError> {
    let seeds = cap.check("predictor check", g.seed_len())?;
    let n = g.output_len();
    let i = p.bit;
    let mut hits = 0u64;
    for y in 0..seeds {
        let out = g.expand(y);
        let prefix = bits::prefix(out, n, i);
        let next = (out >> (n - 1 - i)) & 1;
        hits += (p.evaluator.run_packed(prefix) == next) as u64;
    }
    Ok(rational::ratio(hits, seeds) - rational::half())
}

/// The first `i` for which bit `i + 1` is a function of the first `i` bits, and
/// that function as a sparse table.
pub fn perfect_next_bit_predictor(g: &dyn Prg, cap: EnumerationCap) -> std::result::Result<Option<PredictorInput>, PrgError> {
    let seeds = cap.check("predictor search", g.seed_len())?;
    let n = g.output_len();
    let outs: Vec<u64> = (0..seeds).map(|y| g.expand(y)).collect();
    for i in 0..n {
        let mut map: HashMap<u64, u64> = HashMap::new();
        let mut ok = true;
        for &o in &outs {
            let pre = bits::prefix(o, n, i);
            let nb = (o >> (n - 1 - i)) & 1;
            if *map.entry(pre).or_insert(nb) != nb {
                ok = false;
                break;
            }
        }
        if ok {
            let table = SparseTable::new(i, 1, map.into_iter().filter(|&(_, v)| v == 1).collect(), 0);
            let evaluator = Arc::new(Evaluator::sparse(Arc::new(table)));
            return Ok(Some(PredictorInput { evaluator, claimed_advantage: rational::half(), bit: i }));
        }
    }
    Ok(None)
}

pub fn nw_budget(nw: &NwGen, bit: usize, b_size: u128) -> SizeBudget {
    let bound = b_size.saturating_add((bit as u128).saturating_mul(pow2(nw.design.max_intersection())));
    SizeBudget::new(bound, format!("|B| + i*2^maxint with i={bit}, maxint={}, |B|={b_size}", nw.design.max_intersection()))
}

/// Requires the predictor's advantage above `eps`; returns `C(x_S) = B(G(x_S ∪ x_T)_{1..i})`
/// for the first `x_T` with `ADV(C, f) > eps`.
pub fn nw_restrict(nw: &NwGen, p: &PredictorInput, eps: &Q, max_assignments: Option<u64>, cap: EnumerationCap) -> Result<StageOutput> {
    let stage = Stage::Nw;
    let i = p.bit;
    if i >= nw.output_len() || p.evaluator.n_in() != i || p.evaluator.n_out() != 1 {
        return Err(ReconError::Params { stage, message: format!("predictor for bit {i} has the wrong shape") });
    }
    let adv = predictor_advantage(nw, p, cap).map_err(|source| ReconError::Capacity { stage, source })?;
    if adv <= *eps {
        return Err(ReconError::Precondition { stage, measured: rational::format(&adv), required: format!("> {}", rational::format(eps)) });
    }
    let f = &nw.f;
    let s = nw.design.s;
    let set = &nw.design.sets[i];
    let t_pos: Vec<usize> = (0..s).filter(|q| !set.contains(q)).collect();
    let assignments = bits::count(t_pos.len()).unwrap_or(u64::MAX);
    let tries = match max_assignments {
        Some(k) if k > cap.0 => return Err(ReconError::Capacity { stage, source: PrgError::Capacity { what: "x_T".into(), bits: t_pos.len(), cap: cap.0 } }),
        Some(k) => k.min(assignments),
        None => cap.check("x_T assignments", t_pos.len()).map_err(|source| ReconError::Capacity { stage, source })?,
    };
    let budget = nw_budget(nw, i, p.evaluator.size());
    let mut best: Option<Q> = None;
    for xt in 0..tries {
        let mut args = Vec::with_capacity(i);
        for sj in &nw.design.sets[..i] {
            // positions of S_j inside S are read from the input, the rest are fixed by x_T
            let mut varying = Vec::new();
            let mut slots = Vec::new();
            let mut fixed = 0u64;
            let mj = sj.len();
            for (q, &pos) in sj.iter().enumerate() {
                if let Some(r) = set.iter().position(|&x| x == pos) {
                    varying.push(Src::In(r));
                    slots.push(q);
                } else {
                    let t = t_pos.iter().position(|&x| x == pos).unwrap();
                    fixed |= ((xt >> (t_pos.len() - 1 - t)) & 1) << (mj - 1 - q);
                }
            }
            let c = slots.len();
            let table = TruthTable::from_fn(c, 1, |u| {
                let z = slots.iter().enumerate().fold(fixed, |acc, (t, &q)| acc | (((u >> (c - 1 - t)) & 1) << (mj - 1 - q)));
                f.get(z)
            });
            args.push(Src::Node(Node::lookup(varying, Arc::new(table))?));
        }
        let c = Evaluator::new(set.len(), Node::call(args, p.evaluator.clone())?)?;
        c.tabulate();
        let a = evaluator::advantage(&c, f, Domain::All);
        if a > *eps {
            let details = json!({ "x_t": xt, "t_bits": t_pos.len(), "bit": i, "predictor_advantage": rational::format(&adv) });
            return finish(stage, c, budget, xt + 1, a, details);
        }
        if best.as_ref().is_none_or(|b| a > *b) {
            best = Some(a);
        }
    }
    Err(ReconError::Failure { stage, tried: tries, best: best.map_or("none".into(), |b| rational::format(&b)) })
}

// ---------------------------------------------------------------------------
// Chain

/// The final evaluator with per-stage reports.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub evaluator: Arc<Evaluator>,
    pub reports: Vec<StageReport>,
    pub budget: SizeBudget,
    pub ledger: serde_json::Value,
}

impl Reconstruction {
    /// `log₂(budget)/m`, the exponent in `size ≤ 2^{εm}` realized by the chained budget.
    pub fn size_exponent(&self, m: usize) -> f64 {
        (self.budget.bound as f64).log2() / m as f64
    }
}

/// `δ` for the inner-product step: the largest power of two strictly below `adv`, at least `floor`.
pub fn gl_delta(adv: &Q, floor: &Q) -> Q {
    let mut d = rational::half();
    while d >= *adv {
        d /= rational::int(2);
    }
    if d < *floor {
        floor.clone()
    } else {
        d
    }
}

/// NW restriction, then inner-product, XOR and decoder reconstruction; the result computes `f` exactly.
pub fn full_reconstruction(gen: &IwGenerator, predictor: &PredictorInput, cfg: &ReconConfig) -> Result<Reconstruction> {
    let n = gen.output_len();
    let eps = rational::q(1, 8 * n as i64);
    let adv = predictor_advantage(gen, predictor, cfg.cap).map_err(|source| ReconError::Capacity { stage: Stage::Predictor, source })?;
    if adv <= eps {
        return Err(ReconError::Precondition { stage: Stage::Predictor, measured: rational::format(&adv), required: format!("> {}", rational::format(&eps)) });
    }
    let mut reports = Vec::new();

    let c3 = nw_restrict(&gen.nw, predictor, &eps, cfg.nw_max_assignments, cfg.cap)?;
    let adv3 = evaluator::advantage(&c3.evaluator, &gen.f3, Domain::All);
    reports.push(c3.report.clone());

    let delta = gl_delta(&adv3, &eps);
    let c2 = gl_recon(&gen.f2, c3.evaluator.clone(), &delta, cfg.gl_bias_q, cfg.gl_max_seeds, cfg.cap)?;
    reports.push(c2.report.clone());

    let p = &gen.params;
    let threshold = xor_threshold(p.gamma(), p.m1());
    let c1 = xor_recon(&gen.dp, &gen.f1, c2.evaluator.clone(), &threshold, &cfg.xor, cfg.cap)?;
    reports.push(c1.report.clone());

    let rm = RmParams { field: gen.field.clone(), h_bits: p.h_bits, ell: p.ell };
    let c = rm_recon(&rm, &gen.f.table, c1.evaluator.clone(), &cfg.rm, cfg.cap)?;
    reports.push(c.report.clone());

    let ok = evaluator::agreements(&c.evaluator, &gen.f.table, Domain::All) == gen.f.table.rows();
    if !ok {
        return Err(ReconError::Invariant("decoder output disagrees with f".into()));
    }
    // chain the stage formulas from the predictor's size
    let ell = c2.report.details["ell"].as_u64().map_or(0, |e| e as usize);
    let b3 = nw_budget(&gen.nw, predictor.bit, predictor.evaluator.size()).bound;
    let b2 = if ell == 0 { 1 } else { gl_budget(gen.f2.n_out(), ell, b3).bound };
    let b1 = xor_budget(&gen.dp, cfg.xor.queries, b2).bound;
    let b0 = rm_budget(&rm, cfg.rm.queries, b1).bound;
    let budget = SizeBudget::new(b0, "rm(xor(gl(nw(|B|))))");
    let size = c.evaluator.size();
    if !budget.admits(size) {
        return Err(ReconError::Budget { stage: Stage::Final, size, budget: budget.bound });
    }
    let _ = adv.to_f64();
    Ok(Reconstruction { evaluator: c.evaluator, reports, budget, ledger: cfg.ledger() })
}
