//! Combinatorial designs, a degree-4 expander family with walks, averaging
//! samplers and the powering small-bias space.

use crate::bits;
use crate::gf2k::{self, Field};
use crate::rational::{self, Q};
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CombinatError {
    #[error("alpha·s = {0} is not a positive integer")]
    SetSize(String),
    #[error("design search found only {achieved} of {requested} sets")]
    DesignCapacity { requested: usize, achieved: usize },
    #[error("walk digit {0} out of range for degree 4")]
    Digit(u8),
    #[error("seed has {found} bits, expected {expected}")]
    SeedLength { expected: usize, found: usize },
    #[error("seed length {0} exceeds 64 bits")]
    SeedTooLong(usize),
    #[error("bias {eps} needs a field of degree {q} > 16")]
    BiasField { eps: f64, q: u32 },
}

/// Sets `S_1..S_n ⊆ [s]` of size `αs` with pairwise intersections at most `2α²s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    pub s: usize,
    pub set_size: usize,
    pub sets: Vec<Vec<usize>>,
}

impl Design {
    pub fn alpha(&self) -> Q {
        rational::ratio(self.set_size as u64, self.s as u64)
    }

    /// `⌊2α²s⌋ = ⌊2·size²/s⌋`.
    pub fn intersection_bound(&self) -> usize {
        2 * self.set_size * self.set_size / self.s
    }

    pub fn max_intersection(&self) -> usize {
        let mut best = 0;
        for i in 0..self.sets.len() {
            for j in i + 1..self.sets.len() {
                best = best.max(intersection(&self.sets[i], &self.sets[j]));
            }
        }
        best
    }

    pub fn is_valid(&self) -> bool {
        self.sets.iter().all(|s| s.len() == self.set_size && s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&x| x < self.s))
            && self.max_intersection() <= self.intersection_bound()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Upper limit on subsets examined by the greedy search.
const DESIGN_SEARCH_LIMIT: u64 = 1 << 24;

/// Greedy design: scan `αs`-subsets of `[s]` in lexicographic order and keep
/// each one compatible with every set kept so far.
pub fn build_design(s: usize, alpha: &Q, n_sets: usize) -> Result<Design, CombinatError> {
    let size_q = alpha * rational::int(s as i64);
    if !size_q.is_integer() || size_q <= rational::int(0) || size_q > rational::int(s as i64) {
        return Err(CombinatError::SetSize(rational::format(&size_q)));
    }
    let size = size_q.to_integer().to_usize().unwrap();
    build_design_sized(s, size, n_sets)
}

pub fn build_design_sized(s: usize, size: usize, n_sets: usize) -> Result<Design, CombinatError> {
    if size == 0 || size > s {
        return Err(CombinatError::SetSize(format!("{size}/{s}")));
    }
    let bound = 2 * size * size / s;
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = (0..size).collect();
    let mut examined = 0u64;
    while sets.len() < n_sets {
        if sets.iter().all(|t| intersection(t, &cur) <= bound) {
            sets.push(cur.clone());
            if sets.len() == n_sets {
                break;
            }
        }
        examined += 1;
        if examined >= DESIGN_SEARCH_LIMIT || !next_combination(&mut cur, s) {
            return Err(CombinatError::DesignCapacity { requested: n_sets, achieved: sets.len() });
        }
    }
    Ok(Design { s, set_size: size, sets })
}

fn next_combination(c: &mut [usize], s: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < s - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Degree-4 graph on `{0,1}^m`: digit 0/1 step `v ± 1 mod 2^m`, digit 2 applies
/// `π(v) = rotl(v) ⊕ 1` and digit 3 applies `π^{-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expander {
    pub m: usize,
    /// Second largest absolute eigenvalue of the normalized adjacency matrix, measured for `m ≤ 16`.
    pub lambda: Option<f64>,
}

pub const DEGREE: u8 = 4;

/// Bound asserted on measured `λ` for instantiated sizes up to `m = 12`.
pub const LAMBDA_BOUND: f64 = 0.99;

impl Expander {
    pub fn new(m: usize) -> Self {
        let mut e = Expander { m, lambda: None };
        if m <= 16 {
            e.lambda = Some(e.measure_lambda(if m <= 12 { 3000 } else { 600 }));
        }
        e
    }

    /// Skips the eigenvalue measurement.
    pub fn unmeasured(m: usize) -> Self {
        Expander { m, lambda: None }
    }

    #[inline]
    fn rotl(&self, v: u64) -> u64 {
        if self.m <= 1 {
            return v;
        }
        ((v << 1) | (v >> (self.m - 1))) & bits::mask(self.m)
    }

    #[inline]
    fn rotr(&self, v: u64) -> u64 {
        if self.m <= 1 {
            return v;
        }
        ((v >> 1) | (v << (self.m - 1))) & bits::mask(self.m)
    }

    #[inline]
    pub fn neighbor(&self, v: u64, d: u8) -> u64 {
        if self.m == 0 {
            return 0;
        }
        let mk = bits::mask(self.m);
        match d {
            0 => v.wrapping_add(1) & mk,
            1 => v.wrapping_sub(1) & mk,
            2 => self.rotl(v) ^ 1,
            3 => self.rotr(v ^ 1),
            _ => panic!("digit out of range"),
        }
    }

    /// `v_1 = v0`, `v_{i+1} = neighbor(v_i, d_i)`; the last digit is not used.
    pub fn walk(&self, v0: u64, digits: &[u8]) -> Result<Vec<u64>, CombinatError> {
        if let Some(&d) = digits.iter().find(|&&d| d >= DEGREE) {
            return Err(CombinatError::Digit(d));
        }
        let mut out = Vec::with_capacity(digits.len());
        let mut v = v0 & bits::mask(self.m);
        for (i, &d) in digits.iter().enumerate() {
            out.push(v);
            if i + 1 < digits.len() {
                v = self.neighbor(v, d);
            }
        }
        Ok(out)
    }

    /// Power iteration on the complement of the constant vector.
    pub fn measure_lambda(&self, iterations: usize) -> f64 {
        let n = 1usize << self.m;
        if n <= 1 {
            return 0.0;
        }
        let mut x: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754877).sin()).collect();
        let project = |x: &mut Vec<f64>| {
            let mean = x.iter().sum::<f64>() / n as f64;
            let mut norm = 0.0;
            for v in x.iter_mut() {
                *v -= mean;
                norm += *v * *v;
            }
            let norm = norm.sqrt();
            for v in x.iter_mut() {
                *v /= norm;
            }
        };
        project(&mut x);
        let mut est = 0.0;
        let mut y = vec![0.0; n];
        for _ in 0..iterations {
            for (v, yv) in y.iter_mut().enumerate() {
                let v64 = v as u64;
                *yv = (0..DEGREE).map(|d| x[self.neighbor(v64, d) as usize]).sum::<f64>() / DEGREE as f64;
            }
            let norm: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            est = norm;
            std::mem::swap(&mut x, &mut y);
            project(&mut x);
        }
        est
    }
}

/// Averaging sampler: maps a seed to `t` queries in `{0,1}^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sampler {
    /// `t = 2^m`, a single empty seed, every point queried once.
    Exhaustive { m: usize },
    /// Seed `(v0, d_1 … d_{t-1})`; queries are the `t` vertices of the walk.
    Walk { expander: Expander, t: usize, eps: f64 },
}

impl Sampler {
    pub fn exhaustive(m: usize) -> Self {
        Sampler::Exhaustive { m }
    }

    pub fn walk(m: usize, t: usize, eps: f64) -> Result<Self, CombinatError> {
        assert!(t >= 1);
        let l = m + 2 * (t - 1);
        if l > 64 {
            return Err(CombinatError::SeedTooLong(l));
        }
        let expander = if m <= 12 { Expander::new(m) } else { Expander::unmeasured(m) };
        Ok(Sampler::Walk { expander, t, eps })
    }

    pub fn domain_bits(&self) -> usize {
        match self {
            Sampler::Exhaustive { m } => *m,
            Sampler::Walk { expander, .. } => expander.m,
        }
    }

    pub fn queries(&self) -> usize {
        match self {
            Sampler::Exhaustive { m } => 1 << m,
            Sampler::Walk { t, .. } => *t,
        }
    }

    pub fn seed_bits(&self) -> usize {
        match self {
            Sampler::Exhaustive { .. } => 0,
            Sampler::Walk { expander, t, .. } => expander.m + 2 * (t - 1),
        }
    }

    pub fn accuracy(&self) -> f64 {
        match self {
            Sampler::Exhaustive { .. } => 0.0,
            Sampler::Walk { eps, .. } => *eps,
        }
    }

    /// `δ`: 0 for the exhaustive sampler; `min(1, 2·exp(−(1−λ)ε²t/4))` for walks.
    pub fn failure_bound(&self) -> f64 {
        match self {
            Sampler::Exhaustive { .. } => 0.0,
            Sampler::Walk { expander, t, eps } => {
                let lambda = expander.lambda.unwrap_or(LAMBDA_BOUND);
                (2.0 * (-(1.0 - lambda) * eps * eps * *t as f64 / 4.0).exp()).min(1.0)
            }
        }
    }

    pub fn sample(&self, seed: u64) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.queries());
        self.sample_into(seed, &mut out);
        out
    }

    pub fn sample_into(&self, seed: u64, out: &mut Vec<u64>) {
        out.clear();
        match self {
            Sampler::Exhaustive { m } => out.extend(0..(1u64 << m)),
            Sampler::Walk { expander, t, .. } => {
                let l = self.seed_bits();
                let digit_bits = 2 * (t - 1);
                let mut v = if expander.m == 0 { 0 } else { bits::prefix(seed, l, expander.m) };
                out.push(v);
                for i in 0..t - 1 {
                    let d = ((seed >> (digit_bits - 2 * i - 2)) & 3) as u8;
                    v = expander.neighbor(v, d);
                    out.push(v);
                }
            }
        }
    }
}

/// Powering construction: seed `(x, y) ∈ GF(2^q)²`, output bit `i` (`1..=k`)
/// is `⟨x^{i−1}, y⟩`. Bias at most `k/2^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasGen {
    pub k: usize,
    field: Field,
}

impl BiasGen {
    /// Smallest field with `k/2^q ≤ eps`.
    pub fn new(k: usize, eps: f64) -> Result<Self, CombinatError> {
        let q = ((k as f64 / eps).log2().ceil().max(1.0)) as u32;
        if q > gf2k::MAX_DEGREE {
            return Err(CombinatError::BiasField { eps, q });
        }
        Ok(Self::with_field(k, q))
    }

    pub fn with_field(k: usize, q: u32) -> Self {
        BiasGen { k, field: Field::new(q).expect("field degree in range") }
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn seed_bits(&self) -> usize {
        2 * self.field.k() as usize
    }

    pub fn eps(&self) -> f64 {
        self.k as f64 / self.field.size() as f64
    }

    /// Output bits packed MSB-first (`k ≤ 64`), bit 1 first.
    pub fn expand(&self, seed: u64) -> u64 {
        assert!(self.k <= 64);
        let q = self.field.k() as usize;
        let x = bits::prefix(seed, 2 * q, q) as u32;
        let y = (seed & bits::mask(q)) as u32;
        let mut p = 1u32;
        let mut out = 0u64;
        for _ in 0..self.k {
            out = (out << 1) | gf2k::inner(p, y) as u64;
            p = self.field.mul(p, x);
        }
        out
    }

    pub fn expand_bits(&self, seed: u64) -> Vec<bool> {
        bits::unpack(self.expand(seed), self.k)
    }

    /// Largest `|Pr[⟨T, G(y)⟩ = 1] − 1/2|` over nonzero `T`, by enumeration.
    pub fn measured_bias(&self) -> f64 {
        assert!(self.k <= 16);
        let mut hist = vec![0u64; 1 << self.k];
        let seeds = 1u64 << self.seed_bits();
        for s in 0..seeds {
            hist[self.expand(s) as usize] += 1;
        }
        let mut worst = 0.0f64;
        for t in 1..(1usize << self.k) {
            let ones: u64 = hist.iter().enumerate().filter(|(o, _)| ((o & t).count_ones() & 1) == 1).map(|(_, c)| c).sum();
            worst = worst.max((ones as f64 / seeds as f64 - 0.5).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    #[test]
    fn single_and_disjoint_designs() {
        let d = build_design(8, &q(1, 2), 1).unwrap();
        assert_eq!(d.sets, vec![vec![0, 1, 2, 3]]);
        let d = build_design(8, &q(1, 4), 2).unwrap();
        assert!(d.is_valid());
        assert!(build_design(5, &q(1, 2), 1).is_err());
        assert!(matches!(build_design(4, &q(1, 2), 100), Err(CombinatError::DesignCapacity { .. })));
    }

    #[test]
    fn walk_basics() {
        let e = Expander::new(3);
        assert_eq!(e.walk(5, &[1]).unwrap(), vec![5]);
        assert!(e.walk(0, &[4, 0]).is_err());
        let w = e.walk(3, &[2, 0, 1]).unwrap();
        assert_eq!(w, vec![3, e.neighbor(3, 2), e.neighbor(e.neighbor(3, 2), 0)]);
    }

    #[test]
    fn exhaustive_sampler() {
        let s = Sampler::exhaustive(3);
        assert_eq!(s.sample(0), (0..8).collect::<Vec<_>>());
        assert_eq!(s.seed_bits(), 0);
    }

    #[test]
    fn bias_seed_zero_is_zero() {
        let b = BiasGen::new(4, 0.25).unwrap();
        assert_eq!(b.seed_bits(), 8);
        assert_eq!(b.expand(0), 0);
    }
}
