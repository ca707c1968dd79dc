//! The next-bit tester and the estimate-or-refute pipeline.
//!
//! `E_G[N_v]` is `(#seeds reaching v with next bit 1 − #seeds reaching v with
//! next bit 0) / 2^s`. A layer fails when `Σ_v |E_G[N_v]|` exceeds the budget;
//! the lowest failing layer yields the predictor.

use crate::bits;
use crate::evaluator::{self, Domain, Evaluator, SizeBudget};
use crate::obp::{Obp, ObpError, StateRef};
use crate::prg::{self, EnumerationCap, HardFunction, IwGenerator, IwParams, Prg, PrgError};
use crate::rational::{self, Q};
use crate::reconstruct::{self, PredictorInput, ReconConfig, ReconError, StageReport};
use num_traits::{Signed, Zero};
use serde_json::json;
use std::sync::Arc;
use thiserror::Error;

/// What the command-line wrapper prints above a refuting evaluator.
pub const REFUTER_MESSAGE: &str = "Unable to compute f(x) because the hardness assumption A is false";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifierError {
    #[error(transparent)]
    Obp(#[from] ObpError),
    #[error(transparent)]
    Prg(#[from] PrgError),
    #[error("state ({layer}, {index}) is in the final layer")]
    FinalLayer { layer: usize, index: usize },
    #[error("reconstruction failed")]
    Reconstruction(#[from] ReconError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, VerifierError>;

/// `E_G[N_v]` and `E_G[B_{→v}]` for every state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    pub layer: usize,
    pub bias: Vec<Q>,
    pub reach: Vec<Q>,
}

impl BiasTable {
    pub fn abs_sum(&self) -> Q {
        self.bias.iter().map(rational::abs).sum()
    }
}

fn check_lengths(b: &Obp, g: &dyn Prg) -> Result<()> {
    if g.output_len() != b.len() {
        return Err(PrgError::OutputLength { expected: b.len(), found: g.output_len() }.into());
    }
    Ok(())
}

/// `E_G[N_v]` for a single non-final state, by its own pass over the seeds.
pub fn next_bit_bias(b: &Obp, g: &dyn Prg, v: StateRef, cap: EnumerationCap) -> Result<Q> {
    if v.layer >= b.len() {
        return Err(VerifierError::FinalLayer { layer: v.layer, index: v.index });
    }
    if v.index >= b.widths()[v.layer] {
        return Err(ObpError::NoSuchState { layer: v.layer, index: v.index }.into());
    }
    if g.output_len() < v.layer + 1 {
        return Err(PrgError::OutputLength { expected: v.layer + 1, found: g.output_len() }.into());
    }
    let seeds = cap.check("next_bit_bias", g.seed_len())?;
    let n = g.output_len();
    let mut signed = 0i64;
    for y in 0..seeds {
        let out = g.expand(y);
        let mut idx = 0;
        for j in 0..v.layer {
            idx = b.next(j, idx, (out >> (n - 1 - j)) & 1 == 1);
        }
        if idx == v.index {
            signed += if (out >> (n - 1 - v.layer)) & 1 == 1 { 1 } else { -1 };
        }
    }
    Ok(Q::new(signed.into(), (seeds as i64).into()))
}

/// Every layer's table in one pass over the seeds.
pub fn bias_tables(b: &Obp, g: &dyn Prg, cap: EnumerationCap) -> Result<Vec<BiasTable>> {
    check_lengths(b, g)?;
    let seeds = cap.check("bias tables", g.seed_len())?;
    let n = b.len();
    let mut ones: Vec<Vec<u64>> = (0..n).map(|i| vec![0; b.widths()[i]]).collect();
    let mut zeros = ones.clone();
    for y in 0..seeds {
        let out = g.expand(y);
        let mut idx = 0;
        for i in 0..n {
            let bit = (out >> (n - 1 - i)) & 1 == 1;
            if bit {
                ones[i][idx] += 1;
            } else {
                zeros[i][idx] += 1;
            }
            idx = b.next(i, idx, bit);
        }
    }
    let total = seeds as i64;
    Ok((0..n)
        .map(|i| BiasTable {
            layer: i,
            bias: ones[i].iter().zip(&zeros[i]).map(|(&a, &z)| Q::new((a as i64 - z as i64).into(), total.into())).collect(),
            reach: ones[i].iter().zip(&zeros[i]).map(|(&a, &z)| rational::ratio(a + z, seeds)).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum NextBitVerdict {
    Certified {
        /// Per-layer budget.
        eps: Q,
        /// `ε·n`.
        bound: Q,
        estimate: Q,
    },
    Predictor {
        layer: usize,
        predictor: Obp,
        bias_sum: Q,
        /// `Pr[T(G(y)_{1..i}) = G(y)_{i+1}] − 1/2`, recomputed from `predictor`.
        advantage: Q,
    },
}

impl NextBitVerdict {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            NextBitVerdict::Certified { eps, bound, estimate } => json!({
                "kind": "certified", "eps": rational::format(eps), "bound": rational::format(bound),
                "estimate": rational::format(estimate)
            }),
            NextBitVerdict::Predictor { layer, predictor, bias_sum, advantage } => json!({
                "kind": "predictor", "layer": layer, "bias_sum": rational::format(bias_sum),
                "advantage": rational::format(advantage), "predictor": predictor.document()
            }),
        }
    }
}

/// `B` restricted to layers `0..=i`, each state of layer `i` labeled by the sign of its bias.
pub fn predictor_from_layer(b: &Obp, table: &BiasTable) -> Result<Obp> {
    let i = table.layer;
    let widths = b.widths()[..=i].to_vec();
    let edges = b.edges()[..i].to_vec();
    let labels = table.bias.iter().map(|x| !x.is_negative()).collect();
    Ok(Obp::new_binary(widths, edges, labels)?)
}

/// `Pr_y[T(G(y)_{1..i}) = G(y)_{i+1}] − 1/2` for a predictor `T` of length `i`.
pub fn predictor_advantage(g: &dyn Prg, t: &Obp, cap: EnumerationCap) -> Result<Q> {
    t.require_binary()?;
    let i = t.len();
    let n = g.output_len();
    if n <= i {
        return Err(PrgError::OutputLength { expected: i + 1, found: n }.into());
    }
    let seeds = cap.check("predictor check", g.seed_len())?;
    let mut hits = 0u64;
    for y in 0..seeds {
        let out = g.expand(y);
        let guess = t.label(t.run_packed(bits::prefix(out, n, i))).is_positive();
        hits += (guess == ((out >> (n - 1 - i)) & 1 == 1)) as u64;
    }
    Ok(rational::ratio(hits, seeds) - rational::half())
}

/// Certified if every layer's bias sum is at most `eps`; otherwise the predictor
/// from the lowest failing layer, its advantage re-checked to exceed `eps/2`.
pub fn test_fools(b: &Obp, g: &dyn Prg, eps: &Q, cap: EnumerationCap) -> Result<NextBitVerdict> {
    b.require_binary()?;
    let tables = bias_tables(b, g, cap)?;
    for t in &tables {
        let sum = t.abs_sum();
        if sum > *eps {
            let predictor = predictor_from_layer(b, t)?;
            let advantage = predictor_advantage(g, &predictor, cap)?;
            if advantage <= eps / rational::int(2) {
                return Err(VerifierError::Invariant(format!(
                    "layer {} predictor advantage {} not above {}",
                    t.layer,
                    rational::format(&advantage),
                    rational::format(&(eps / rational::int(2)))
                )));
            }
            return Ok(NextBitVerdict::Predictor { layer: t.layer, predictor, bias_sum: sum, advantage });
        }
    }
    let estimate = prg::expectation_under(g, b, cap)?;
    Ok(NextBitVerdict::Certified { eps: eps.clone(), bound: eps * rational::int(b.len() as i64), estimate })
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub cap: EnumerationCap,
    pub recon: ReconConfig,
    /// Hardness exponent: the refuter is compared against `2^{eps_hard·m}`.
    pub eps_hard: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { cap: EnumerationCap::default(), recon: ReconConfig::default(), eps_hard: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Estimate {
        value: Q,
        /// The certified verdict for the padded program.
        certificate: NextBitVerdict,
    },
    Refuter {
        evaluator: Arc<Evaluator>,
        size: u128,
        budget: SizeBudget,
        verified: bool,
        /// `log₂(budget)/m`, to compare with `eps_hard`.
        size_exponent: f64,
        within_hardness_bound: bool,
        predictor_layer: usize,
        reports: Vec<StageReport>,
    },
}

impl Outcome {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Outcome::Estimate { value, certificate } => json!({
                "kind": "estimate", "value": rational::format(value), "certificate": certificate.to_json()
            }),
            Outcome::Refuter { size, budget, verified, size_exponent, within_hardness_bound, predictor_layer, reports, .. } => json!({
                "kind": "refuter", "message": REFUTER_MESSAGE, "size": size.to_string(), "budget": budget, "verified": verified,
                "size_exponent": size_exponent, "within_hardness_bound": within_hardness_bound,
                "predictor_layer": predictor_layer, "stages": reports
            }),
        }
    }
}

/// Generator parameters used for a padded program of length `n`: the desk
/// profile, with one more universe bit when `n` exceeds the number of sets it holds.
pub fn pipeline_params(m: usize, n: usize) -> IwParams {
    let mut p = IwParams::desk(m, n);
    if n > p.nw_s {
        p.nw_s = p.m3() + 2;
    }
    p
}

/// `b` padded to length `max(len, width)`.
pub fn pad_square(b: &Obp) -> Result<Obp> {
    let n = b.len().max(b.width()).max(1);
    Ok(b.pad(n, b.width())?)
}

/// Assembles the generator for `f` and runs [`certified_estimate_or_refuter_with`].
pub fn certified_estimate_or_refuter(b: &Obp, f: &HardFunction, cfg: &PipelineConfig) -> Result<Outcome> {
    let b = pad_square(b)?;
    let gen = prg::assemble_iw_generator(f, &pipeline_params(f.m, b.len()), cfg.cap)?;
    certified_estimate_or_refuter_with(&b, &gen, cfg)
}

/// Tests `gen` against `b` with per-layer budget `1/(4n)`. A certified run
/// returns `E_G[B]`; otherwise the predictor is handed to reconstruction and
/// the result is checked against `f` on every input before it is returned.
pub fn certified_estimate_or_refuter_with(b: &Obp, gen: &IwGenerator, cfg: &PipelineConfig) -> Result<Outcome> {
    let b = pad_square(b)?;
    let n = b.len();
    check_lengths(&b, gen)?;
    let eps = rational::q(1, 4 * n as i64);
    match test_fools(&b, gen, &eps, cfg.cap)? {
        NextBitVerdict::Certified { eps, bound, estimate } => {
            Ok(Outcome::Estimate { value: estimate.clone(), certificate: NextBitVerdict::Certified { eps, bound, estimate } })
        }
        NextBitVerdict::Predictor { layer, predictor, advantage, .. } => {
            let evaluator = Arc::new(Evaluator::program(Arc::new(predictor)).map_err(ReconError::from)?);
            let input = PredictorInput { evaluator, claimed_advantage: advantage, bit: layer };
            let recon = reconstruct::full_reconstruction(gen, &input, &cfg.recon)?;
            let f = &gen.f.table;
            let verified = evaluator::agreements(&recon.evaluator, f, Domain::All) == f.rows();
            if !verified {
                return Err(VerifierError::Invariant("refuting evaluator disagrees with f".into()));
            }
            let size = recon.evaluator.size();
            if !recon.budget.admits(size) {
                return Err(VerifierError::Invariant(format!("refuter size {size} above budget {}", recon.budget.bound)));
            }
            let size_exponent = recon.size_exponent(gen.params.m);
            Ok(Outcome::Refuter {
                evaluator: recon.evaluator,
                size,
                budget: recon.budget,
                verified,
                size_exponent,
                within_hardness_bound: size_exponent <= cfg.eps_hard,
                predictor_layer: layer,
                reports: recon.reports,
            })
        }
    }
}

/// Exact `|E_G[B] − E[B]|`; used by callers to audit certified verdicts.
pub fn fooling_error(b: &Obp, g: &dyn Prg, cap: EnumerationCap) -> Result<Q> {
    let eg = prg::expectation_under(g, b, cap)?;
    Ok(rational::abs(&(eg - b.expectation())))
}

/// Whether every bias table satisfies `|E_G[N_v]| ≤ E_G[B_{→v}]`.
pub fn tables_consistent(tables: &[BiasTable]) -> bool {
    tables.iter().all(|t| t.bias.iter().zip(&t.reach).all(|(b, r)| rational::abs(b) <= *r && !r.is_negative()))
        && tables.first().is_none_or(|t| t.reach.iter().sum::<Q>() == rational::int(1) || t.reach.iter().all(Zero::is_zero))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prg::{AllZeros, Enumerate};

    #[test]
    fn all_zeros_start_bias() {
        let b = Obp::dictator(4, 0);
        let g = AllZeros { n: 4 };
        assert_eq!(next_bit_bias(&b, &g, StateRef::start(), EnumerationCap::default()).unwrap(), rational::int(-1));
    }

    #[test]
    fn final_layer_rejected() {
        let b = Obp::parity(3);
        let g = Enumerate { n: 3 };
        assert!(matches!(next_bit_bias(&b, &g, StateRef::new(3, 0), EnumerationCap::default()), Err(VerifierError::FinalLayer { .. })));
    }

    #[test]
    fn zero_generator_yields_layer_zero_predictor() {
        let b = Obp::dictator(4, 0);
        let v = test_fools(&b, &AllZeros { n: 4 }, &rational::q(1, 16), EnumerationCap::default()).unwrap();
        match v {
            NextBitVerdict::Predictor { layer, advantage, predictor, .. } => {
                assert_eq!(layer, 0);
                assert_eq!(advantage, rational::half());
                assert!(!predictor.label(0).is_positive());
            }
            other => panic!("{other:?}"),
        }
    }
}
