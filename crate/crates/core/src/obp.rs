//! Ordered branching programs.
//!
//! Layer `i` holds `w_i` states, layer 0 holds only the start state, and each
//! state of a non-final layer has a 0-edge and a 1-edge into the next layer.
//! Final states carry rational labels in `[0, 1]`; a standard program uses
//! labels in `{0, 1}` and accepts a string when it ends at a label-1 state.

use crate::rational::{self, Q};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObpError {
    #[error("program must have at least one layer")]
    NoLayers,
    #[error("layer 0 must have exactly one state, found {0}")]
    StartWidth(usize),
    #[error("layer {0} has width 0")]
    EmptyLayer(usize),
    #[error("expected {expected} edge layers, found {found}")]
    EdgeLayers { expected: usize, found: usize },
    #[error("layer {layer}: expected {expected} edge pairs, found {found}")]
    EdgeCount { layer: usize, expected: usize, found: usize },
    #[error("layer {layer} state {state}: edge target {target} out of range (next width {width})")]
    EdgeTarget { layer: usize, state: usize, target: usize, width: usize },
    #[error("expected {expected} labels, found {found}")]
    LabelCount { expected: usize, found: usize },
    #[error("label {0} outside [0, 1]")]
    LabelRange(String),
    #[error("label {0} is not binary")]
    NonBinaryLabel(String),
    #[error("width {width} exceeds bound {bound}")]
    WidthBound { width: usize, bound: usize },
    #[error("state ({layer}, {index}) does not exist")]
    NoSuchState { layer: usize, index: usize },
    #[error("walk of {len} bits from layer {layer} runs past length {n}")]
    WalkPastEnd { layer: usize, len: usize, n: usize },
    #[error("input has length {found}, program has length {expected}")]
    InputLength { expected: usize, found: usize },
    #[error("repetition count must be odd, got {0}")]
    EvenRepetitions(usize),
    #[error("cannot pad length {from} down to {to}")]
    ShrinkLength { from: usize, to: usize },
    #[error("cannot pad width {from} down to {to}")]
    ShrinkWidth { from: usize, to: usize },
    #[error("bad document: {0}")]
    Document(String),
}

pub type Result<T> = std::result::Result<T, ObpError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateRef {
    pub layer: usize,
    pub index: usize,
}

impl StateRef {
    pub fn new(layer: usize, index: usize) -> Self {
        StateRef { layer, index }
    }

    pub fn start() -> Self {
        StateRef { layer: 0, index: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `p_{→v}`: probability a uniform prefix reaches `v`.
    Forward,
    /// `p_{v→}`: expected label reached from `v` on a uniform suffix.
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    pub direction: Direction,
    pub values: Vec<Vec<Q>>,
}

impl ProbTable {
    pub fn get(&self, v: StateRef) -> &Q {
        &self.values[v.layer][v.index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Obp {
    widths: Vec<usize>,
    edges: Vec<Vec<[usize; 2]>>,
    labels: Vec<Q>,
}

impl Obp {
    pub fn new(widths: Vec<usize>, edges: Vec<Vec<[usize; 2]>>, labels: Vec<Q>) -> Result<Self> {
        if widths.is_empty() {
            return Err(ObpError::NoLayers);
        }
        if widths[0] != 1 {
            return Err(ObpError::StartWidth(widths[0]));
        }
        if let Some(i) = widths.iter().position(|&w| w == 0) {
            return Err(ObpError::EmptyLayer(i));
        }
        let n = widths.len() - 1;
        if edges.len() != n {
            return Err(ObpError::EdgeLayers { expected: n, found: edges.len() });
        }
        for (i, layer) in edges.iter().enumerate() {
            if layer.len() != widths[i] {
                return Err(ObpError::EdgeCount { layer: i, expected: widths[i], found: layer.len() });
            }
            for (v, pair) in layer.iter().enumerate() {
                for &t in pair {
                    if t >= widths[i + 1] {
                        return Err(ObpError::EdgeTarget { layer: i, state: v, target: t, width: widths[i + 1] });
                    }
                }
            }
        }
        if labels.len() != widths[n] {
            return Err(ObpError::LabelCount { expected: widths[n], found: labels.len() });
        }
        if let Some(l) = labels.iter().find(|l| !rational::is_unit_interval(l)) {
            return Err(ObpError::LabelRange(rational::format(l)));
        }
        Ok(Obp { widths, edges, labels })
    }

    /// A standard program: labels must be 0 or 1.
    pub fn new_binary(widths: Vec<usize>, edges: Vec<Vec<[usize; 2]>>, labels: Vec<bool>) -> Result<Self> {
        let labels = labels.into_iter().map(|b| if b { Q::one() } else { Q::zero() }).collect();
        Obp::new(widths, edges, labels)
    }

    /// Length-0 program with the given label.
    pub fn constant(label: bool) -> Self {
        Obp::new_binary(vec![1], vec![], vec![label]).unwrap()
    }

    /// Accepts iff every bit is 1.
    pub fn and_all(n: usize) -> Self {
        if n == 0 {
            return Obp::constant(true);
        }
        // state 0 = all ones so far, state 1 = dead
        let mut widths = vec![1];
        widths.extend(std::iter::repeat_n(2, n));
        let mut edges = vec![vec![[1, 0]]];
        for _ in 1..n {
            edges.push(vec![[1, 0], [1, 1]]);
        }
        Obp::new_binary(widths, edges, vec![true, false]).unwrap()
    }

    /// Outputs `x_j` (0-based).
    pub fn dictator(n: usize, j: usize) -> Self {
        assert!(j < n);
        let mut widths = vec![1];
        let mut edges = Vec::new();
        for i in 0..n {
            if i < j {
                widths.push(1);
                edges.push(vec![[0, 0]]);
            } else if i == j {
                widths.push(2);
                edges.push(vec![[0, 1]]);
            } else {
                widths.push(2);
                edges.push(vec![[0, 0], [1, 1]]);
            }
        }
        Obp::new_binary(widths, edges, vec![false, true]).unwrap()
    }

    /// Accepts iff the number of ones is odd.
    pub fn parity(n: usize) -> Self {
        if n == 0 {
            return Obp::constant(false);
        }
        let mut widths = vec![1];
        widths.extend(std::iter::repeat_n(2, n));
        let mut edges = vec![vec![[0, 1]]];
        for _ in 1..n {
            edges.push(vec![[0, 1], [1, 0]]);
        }
        Obp::new_binary(widths, edges, vec![false, true]).unwrap()
    }

    /// A random standard program of length `n` and width at most `w`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, w: usize) -> Self {
        assert!(w >= 1);
        let mut widths = vec![1];
        for _ in 0..n {
            widths.push(rng.gen_range(1..=w));
        }
        let edges = (0..n)
            .map(|i| (0..widths[i]).map(|_| [rng.gen_range(0..widths[i + 1]), rng.gen_range(0..widths[i + 1])]).collect())
            .collect();
        let labels = (0..widths[n]).map(|_| rng.gen_bool(0.5)).collect();
        Obp::new_binary(widths, edges, labels).unwrap()
    }

    pub fn len(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn width(&self) -> usize {
        *self.widths.iter().max().unwrap()
    }

    pub fn edges(&self) -> &[Vec<[usize; 2]>] {
        &self.edges
    }

    pub fn labels(&self) -> &[Q] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &Q {
        &self.labels[index]
    }

    pub fn is_binary(&self) -> bool {
        self.labels.iter().all(|l| l.is_zero() || l.is_one())
    }

    pub fn require_binary(&self) -> Result<()> {
        match self.labels.iter().find(|l| !(l.is_zero() || l.is_one())) {
            Some(l) => Err(ObpError::NonBinaryLabel(rational::format(l))),
            None => Ok(()),
        }
    }

    pub fn require_width(&self, bound: usize) -> Result<()> {
        let w = self.width();
        if w > bound {
            Err(ObpError::WidthBound { width: w, bound })
        } else {
            Ok(())
        }
    }

    fn check_state(&self, v: StateRef) -> Result<()> {
        if v.layer >= self.widths.len() || v.index >= self.widths[v.layer] {
            Err(ObpError::NoSuchState { layer: v.layer, index: v.index })
        } else {
            Ok(())
        }
    }

    /// Successor of state `index` in `layer` on bit `b`; no bounds checks.
    #[inline]
    pub fn next(&self, layer: usize, index: usize, b: bool) -> usize {
        self.edges[layer][index][b as usize]
    }

    pub fn step(&self, v: StateRef, sigma: &[bool]) -> Result<StateRef> {
        self.check_state(v)?;
        if v.layer + sigma.len() > self.len() {
            return Err(ObpError::WalkPastEnd { layer: v.layer, len: sigma.len(), n: self.len() });
        }
        let mut idx = v.index;
        for (k, &b) in sigma.iter().enumerate() {
            idx = self.next(v.layer + k, idx, b);
        }
        Ok(StateRef::new(v.layer + sigma.len(), idx))
    }

    /// Final state index reached from the start on `x`; `x.len()` must equal the length.
    #[inline]
    pub fn run(&self, x: &[bool]) -> usize {
        debug_assert_eq!(x.len(), self.len());
        let mut idx = 0;
        for (i, &b) in x.iter().enumerate() {
            idx = self.edges[i][idx][b as usize];
        }
        idx
    }

    /// Same as [`Obp::run`] on a packed string.
    #[inline]
    pub fn run_packed(&self, x: u64) -> usize {
        let n = self.len();
        let mut idx = 0;
        for i in 0..n {
            idx = self.edges[i][idx][((x >> (n - 1 - i)) & 1) as usize];
        }
        idx
    }

    pub fn eval(&self, x: &[bool]) -> Result<&Q> {
        if x.len() != self.len() {
            return Err(ObpError::InputLength { expected: self.len(), found: x.len() });
        }
        Ok(&self.labels[self.run(x)])
    }

    /// Acceptance of a standard program.
    pub fn accepts(&self, x: &[bool]) -> Result<bool> {
        Ok(self.eval(x)?.is_one())
    }

    pub fn exact_probs(&self, direction: Direction) -> ProbTable {
        let n = self.len();
        let values = match direction {
            Direction::Forward => {
                // count the i-bit prefixes reaching each state, then scale by 2^-i
                let mut counts: Vec<Vec<BigInt>> = vec![vec![BigInt::one()]];
                for i in 0..n {
                    let mut nxt = vec![BigInt::zero(); self.widths[i + 1]];
                    for (v, c) in counts[i].iter().enumerate() {
                        if c.is_zero() {
                            continue;
                        }
                        let [a, b] = self.edges[i][v];
                        nxt[a] += c;
                        nxt[b] += c;
                    }
                    counts.push(nxt);
                }
                counts
                    .into_iter()
                    .enumerate()
                    .map(|(i, layer)| {
                        let den = BigInt::one() << i;
                        layer.into_iter().map(|c| Q::new(c, den.clone())).collect()
                    })
                    .collect()
            }
            Direction::Backward => {
                let mut vals: Vec<Vec<Q>> = vec![Vec::new(); n + 1];
                vals[n] = self.labels.clone();
                let half = rational::half();
                for i in (0..n).rev() {
                    vals[i] = self.edges[i]
                        .iter()
                        .map(|&[a, b]| (&vals[i + 1][a] + &vals[i + 1][b]) * &half)
                        .collect();
                }
                vals
            }
        };
        ProbTable { direction, values }
    }

    /// `E[B]`: expected label on a uniform input.
    pub fn expectation(&self) -> Q {
        self.exact_probs(Direction::Backward).values[0][0].clone()
    }

    /// The program `B_{→v}` of length `v.layer` accepting exactly the prefixes that reach `v`.
    pub fn prefix_program(&self, v: StateRef) -> Result<Obp> {
        self.check_state(v)?;
        let widths = self.widths[..=v.layer].to_vec();
        let edges = self.edges[..v.layer].to_vec();
        let labels = (0..widths[v.layer]).map(|u| u == v.index).collect();
        Obp::new_binary(widths, edges, labels)
    }

    /// Majority of `d` independent runs (length `d·n`), counting accepts as it goes.
    ///
    /// At layer `j·n + i` the state `(c, v)` (with `c ≤ j` accepts among the first `j`
    /// runs and `v ∈ V_i`) has index `c·w_i + v`.
    pub fn majority_amplify(&self, d: usize) -> Result<Obp> {
        if d.is_multiple_of(2) {
            return Err(ObpError::EvenRepetitions(d));
        }
        self.require_binary()?;
        let n = self.len();
        if n == 0 {
            return Ok(self.clone());
        }
        let accept: Vec<usize> = self.labels.iter().map(|l| l.is_one() as usize).collect();
        let mut widths = Vec::with_capacity(d * n + 1);
        let mut edges = Vec::with_capacity(d * n);
        for j in 0..d {
            for i in 0..n {
                let wi = self.widths[i];
                widths.push((j + 1) * wi);
                let mut layer = Vec::with_capacity((j + 1) * wi);
                for c in 0..=j {
                    for v in 0..wi {
                        let pair = self.edges[i][v];
                        let t = pair.map(|u| {
                            if i + 1 < n {
                                c * self.widths[i + 1] + u
                            } else {
                                c + accept[u]
                            }
                        });
                        layer.push(t);
                    }
                }
                edges.push(layer);
            }
        }
        widths.push(d + 1);
        let labels = (0..=d).map(|c| 2 * c > d).collect();
        Obp::new_binary(widths, edges, labels)
    }

    /// Appends identity layers up to length `n_target`. Width is a bound only and
    /// is never increased; `w_target` is checked against the current width.
    pub fn pad(&self, n_target: usize, w_target: usize) -> Result<Obp> {
        if n_target < self.len() {
            return Err(ObpError::ShrinkLength { from: self.len(), to: n_target });
        }
        if w_target < self.width() {
            return Err(ObpError::ShrinkWidth { from: self.width(), to: w_target });
        }
        let wn = *self.widths.last().unwrap();
        let mut widths = self.widths.clone();
        let mut edges = self.edges.clone();
        for _ in self.len()..n_target {
            widths.push(wn);
            edges.push((0..wn).map(|v| [v, v]).collect());
        }
        Obp::new(widths, edges, self.labels.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.document()).expect("serializable")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.document()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Obp> {
        let doc: ObpDocument = serde_json::from_str(s).map_err(|e| ObpError::Document(e.to_string()))?;
        Obp::from_document(doc)
    }

    pub fn document(&self) -> ObpDocument {
        ObpDocument {
            n: self.len(),
            widths: self.widths.clone(),
            edges: self.edges.clone(),
            labels: self.labels.iter().map(rational::format).collect(),
        }
    }

    pub fn from_document(doc: ObpDocument) -> Result<Obp> {
        if doc.widths.len() != doc.n + 1 {
            return Err(ObpError::Document(format!("n = {} but {} widths", doc.n, doc.widths.len())));
        }
        let labels = doc
            .labels
            .iter()
            .map(|s| rational::parse(s).ok_or_else(|| ObpError::Document(format!("bad rational {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Obp::new(doc.widths, doc.edges, labels)
    }
}

/// Serialized form; field order is the canonical order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ObpDocument {
    pub n: usize,
    pub widths: Vec<usize>,
    pub edges: Vec<Vec<[usize; 2]>>,
    pub labels: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn and2() -> Obp {
        Obp::and_all(2)
    }

    #[test]
    fn and_program() {
        let b = and2();
        assert!(!b.accepts(&[true, false]).unwrap());
        assert!(b.accepts(&[true, true]).unwrap());
        assert_eq!(b.expectation(), q(1, 4));
        let v = b.step(StateRef::start(), &[true, true]).unwrap();
        assert!(b.label(v.index).is_one());
        assert_eq!(b.step(StateRef::new(1, 0), &[]).unwrap(), StateRef::new(1, 0));
    }

    #[test]
    fn structural_errors() {
        assert_eq!(Obp::new_binary(vec![2], vec![], vec![true, true]), Err(ObpError::StartWidth(2)));
        assert!(matches!(
            Obp::new_binary(vec![1, 1], vec![vec![[0, 1]]], vec![true]),
            Err(ObpError::EdgeTarget { .. })
        ));
        let b = and2();
        assert!(b.step(StateRef::new(1, 0), &[true, true]).is_err());
        assert!(b.eval(&[true]).is_err());
        assert!(Obp::new(vec![1], vec![], vec![q(3, 2)]).is_err());
    }

    #[test]
    fn prefix_and_pad() {
        let b = and2();
        let p0 = b.prefix_program(StateRef::start()).unwrap();
        assert_eq!(p0.len(), 0);
        assert!(p0.expectation().is_one());
        let p1 = b.prefix_program(StateRef::new(1, 0)).unwrap();
        assert_eq!(p1.expectation(), q(1, 2));
        assert_eq!(b.pad(2, 2).unwrap(), b);
        assert_eq!(b.pad(5, 2).unwrap().expectation(), q(1, 4));
        assert!(b.pad(1, 2).is_err());
        assert!(b.pad(3, 1).is_err());
    }

    #[test]
    fn amplify() {
        let b = and2();
        assert_eq!(b.majority_amplify(3).unwrap().expectation(), q(10, 64));
        assert!(b.majority_amplify(2).is_err());
        let d = Obp::dictator(3, 0).majority_amplify(5).unwrap();
        assert_eq!(d.expectation(), q(1, 2));
        assert!(d.width() <= 2 * 6);
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Obp::random(&mut rng, 5, 4);
        let s = b.to_json();
        assert_eq!(Obp::from_json(&s).unwrap(), b);
        assert!(s.starts_with("{\"n\":5,\"widths\""));
        assert!(Obp::from_json("{\"n\":1,\"widths\":[1],\"edges\":[],\"labels\":[\"1/1\"]}").is_err());
    }
}
