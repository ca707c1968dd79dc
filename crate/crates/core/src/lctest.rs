//! Local consistency test on reaching-probability estimates.
//!
//! Layer `i` is checked by its flow residual
//! `Σ_{v∈V_{i+1}} |p̃_v − ½ Σ_{u→v} p̃_u|`. Since each state sends half its mass
//! along each edge, the final-layer ℓ1 error satisfies `e_{i+1} ≤ e_i + residual_i`
//! with `e_0 = |p̃_{v_0} − 1|`.

use crate::obp::{Direction, Obp, StateRef};
use crate::rational::{self, Q};
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LcError {
    #[error("estimates cover {found} states in layer {layer}, program has {expected}")]
    MissingStates { layer: usize, expected: usize, found: usize },
    #[error("estimates cover {found} layers, program has {expected}")]
    MissingLayers { expected: usize, found: usize },
    #[error("estimate for ({layer}, {index}) is outside [0, 1]: {value}")]
    Range { layer: usize, index: usize, value: String },
}

/// `p̃_{→v}` for every state, by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachEstimates(pub Vec<Vec<Q>>);

impl ReachEstimates {
    pub fn exact(b: &Obp) -> Self {
        ReachEstimates(b.exact_probs(Direction::Forward).values)
    }

    pub fn validate(&self, b: &Obp) -> Result<(), LcError> {
        if self.0.len() != b.len() + 1 {
            return Err(LcError::MissingLayers { expected: b.len() + 1, found: self.0.len() });
        }
        for (i, layer) in self.0.iter().enumerate() {
            if layer.len() != b.widths()[i] {
                return Err(LcError::MissingStates { layer: i, expected: b.widths()[i], found: layer.len() });
            }
            check_range(i, layer)?;
        }
        Ok(())
    }

    pub fn get(&self, v: StateRef) -> &Q {
        &self.0[v.layer][v.index]
    }
}

fn check_range(layer: usize, values: &[Q]) -> Result<(), LcError> {
    match values.iter().position(|x| !rational::is_unit_interval(x)) {
        Some(index) => Err(LcError::Range { layer, index, value: rational::format(&values[index]) }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LcVerdict {
    Accept {
        /// `tol + 2nw·tol`.
        #[serde(serialize_with = "ser_q")]
        bound: Q,
        /// `|p̃_{v_0} − 1| + Σ residuals`, never above `bound`.
        #[serde(serialize_with = "ser_q")]
        certified_error: Q,
        /// `Σ_{v∈V_n} label(v)·p̃_v`.
        #[serde(serialize_with = "ser_q")]
        estimate: Q,
    },
    Reject {
        /// `None` for the start-state check.
        layer: Option<usize>,
        #[serde(serialize_with = "ser_q")]
        residual: Q,
        #[serde(serialize_with = "ser_q")]
        threshold: Q,
    },
}

fn ser_q<S: serde::Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&rational::format(x))
}

impl LcVerdict {
    pub fn accepted(&self) -> bool {
        matches!(self, LcVerdict::Accept { .. })
    }
}

pub fn soundness_bound(n: usize, w: usize, tol: &Q) -> Q {
    tol + tol * rational::int(2 * n as i64 * w as i64)
}

/// Runs the test on an explicit table.
pub fn lc_test(b: &Obp, est: &ReachEstimates, tol: &Q) -> Result<LcVerdict, LcError> {
    est.validate(b)?;
    lc_test_streaming(b, tol, |i| Ok(est.0[i].clone())).map(|(v, _)| v)
}

/// Runs the test requesting one layer of estimates at a time from `layer_values`.
/// At most two layers are held at once; the second result is the largest number
/// of estimates held simultaneously.
pub fn lc_test_streaming<F>(b: &Obp, tol: &Q, mut layer_values: F) -> Result<(LcVerdict, usize), LcError>
where
    F: FnMut(usize) -> Result<Vec<Q>, LcError>,
{
    let n = b.len();
    let w = b.width();
    let fetch = |i: usize, f: &mut F| -> Result<Vec<Q>, LcError> {
        let vals = f(i)?;
        if vals.len() != b.widths()[i] {
            return Err(LcError::MissingStates { layer: i, expected: b.widths()[i], found: vals.len() });
        }
        check_range(i, &vals)?;
        Ok(vals)
    };
    let mut cur = fetch(0, &mut layer_values)?;
    let mut peak = cur.len();
    let start_err = rational::abs(&(&cur[0] - rational::int(1)));
    if start_err > *tol {
        return Ok((LcVerdict::Reject { layer: None, residual: start_err, threshold: tol.clone() }, peak));
    }
    let threshold = tol * rational::int(2 * w as i64);
    let half = rational::half();
    let mut certified = start_err;
    for i in 0..n {
        let next = fetch(i + 1, &mut layer_values)?;
        peak = peak.max(cur.len() + next.len());
        let mut inflow = vec![Q::zero(); next.len()];
        for (u, p) in cur.iter().enumerate() {
            let [a, c] = b.edges()[i][u];
            let h = p * &half;
            inflow[a] += &h;
            inflow[c] += h;
        }
        let residual: Q = next.iter().zip(&inflow).map(|(p, q)| rational::abs(&(p - q))).sum();
        if residual > threshold {
            return Ok((LcVerdict::Reject { layer: Some(i), residual, threshold }, peak));
        }
        certified += residual;
        cur = next;
    }
    let estimate = cur.iter().zip(b.labels()).map(|(p, l)| p * l).sum();
    Ok((LcVerdict::Accept { bound: soundness_bound(n, w, tol), certified_error: certified, estimate }, peak))
}

/// Exact `Σ_{v∈V_n} |p̃_v − p_v|`.
pub fn final_layer_error(b: &Obp, est: &ReachEstimates) -> Q {
    let exact = b.exact_probs(Direction::Forward);
    let n = b.len();
    est.0[n].iter().zip(&exact.values[n]).map(|(a, e)| rational::abs(&(a - e))).sum()
}
