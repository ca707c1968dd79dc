//! Dovetailing over a registry of estimators, budgets and rounding thresholds,
//! with the local consistency test deciding which answer to trust.

use crate::lctest::{self, LcError, LcVerdict};
use crate::obp::{Obp, StateRef};
use crate::rational::{self, Q};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Abort {
    Time,
    Space,
}

/// Step and workspace counters enforced against hard limits.
#[derive(Debug, Clone)]
pub struct Meter {
    pub steps: u64,
    pub cells: usize,
    pub peak_cells: usize,
    step_limit: u64,
    cell_limit: usize,
}

impl Meter {
    pub fn new(step_limit: u64, cell_limit: usize) -> Self {
        Meter { steps: 0, cells: 0, peak_cells: 0, step_limit, cell_limit }
    }

    pub fn unlimited() -> Self {
        Meter::new(u64::MAX, usize::MAX)
    }

    /// Budget `j`: at most `j` cells and `2^j` steps.
    pub fn for_budget(j: usize) -> Self {
        Meter::new(1u64.checked_shl(j as u32).unwrap_or(u64::MAX), j)
    }

    pub fn tick(&mut self, k: u64) -> Result<(), Abort> {
        self.steps = self.steps.saturating_add(k);
        if self.steps > self.step_limit {
            Err(Abort::Time)
        } else {
            Ok(())
        }
    }

    pub fn alloc(&mut self, k: usize) -> Result<(), Abort> {
        self.cells += k;
        self.peak_cells = self.peak_cells.max(self.cells);
        if self.cells > self.cell_limit {
            Err(Abort::Space)
        } else {
            Ok(())
        }
    }

    pub fn release(&mut self, k: usize) {
        self.cells = self.cells.saturating_sub(k);
    }
}

/// A deterministic procedure `(1^n, B, r) ↦ value`.
pub trait Estimator: Send + Sync {
    fn name(&self) -> String;
    fn run(&self, n: usize, b: &Obp, r: &Q, meter: &mut Meter) -> Result<Q, Abort>;
}

/// `n^{-e}`.
pub fn inv_pow(n: usize, e: u32) -> Q {
    Q::new(BigInt::one(), BigInt::from(n.max(1)).pow(e))
}

/// `k·unit` for the largest integer `k` with `γ + r ≥ k·unit`.
pub fn round_down(gamma: &Q, r: &Q, unit: &Q) -> Q {
    ((gamma + r) / unit).floor() * unit
}

/// Exact acceptance probability by forward counting, rounded to the `n^{−c+2}` grid.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceEstimator {
    pub c: u32,
}

impl Default for ReferenceEstimator {
    fn default() -> Self {
        ReferenceEstimator { c: 5 }
    }
}

impl Estimator for ReferenceEstimator {
    fn name(&self) -> String {
        format!("reference(c={})", self.c)
    }

    fn run(&self, n: usize, b: &Obp, r: &Q, meter: &mut Meter) -> Result<Q, Abort> {
        let w = b.width();
        meter.alloc(2 * w)?;
        let mut cur: Vec<BigInt> = vec![BigInt::one()];
        for i in 0..b.len() {
            let mut next = vec![BigInt::zero(); b.widths()[i + 1]];
            for (u, c) in cur.iter().enumerate() {
                meter.tick(2)?;
                let [a, z] = b.edges()[i][u];
                next[a] += c;
                next[z] += c;
            }
            cur = next;
        }
        meter.tick(cur.len() as u64)?;
        let accepted: BigInt = cur.iter().zip(b.labels()).filter(|(_, l)| l.is_positive()).map(|(c, _)| c.clone()).sum();
        let gamma = Q::new(accepted, BigInt::one() << b.len());
        meter.release(2 * w);
        Ok(round_down(&gamma, r, &inv_pow(n, self.c - 2)))
    }
}

/// Returns the same value whatever it is asked.
#[derive(Debug, Clone)]
pub struct ConstantEstimator(pub Q);

impl Estimator for ConstantEstimator {
    fn name(&self) -> String {
        format!("constant({})", rational::format(&self.0))
    }

    fn run(&self, _n: usize, _b: &Obp, _r: &Q, meter: &mut Meter) -> Result<Q, Abort> {
        meter.tick(1)?;
        Ok(self.0.clone())
    }
}

#[derive(Clone, Default)]
pub struct Registry {
    entries: Vec<Arc<dyn Estimator>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter().map(|e| e.name())).finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn with(mut self, e: impl Estimator + 'static) -> Self {
        self.entries.push(Arc::new(e));
        self
    }

    pub fn push(&mut self, e: Arc<dyn Estimator>) {
        self.entries.push(e);
    }

    pub fn get(&self, i: usize) -> Option<&Arc<dyn Estimator>> {
        self.entries.get(i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

/// `r = k·n^{−c}/2` for `k = 1..=2n²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundingGrid {
    pub n: usize,
    pub c: u32,
}

impl RoundingGrid {
    pub fn new(n: usize, c: u32) -> Self {
        RoundingGrid { n, c }
    }

    pub fn len(&self) -> usize {
        2 * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, k: usize) -> Q {
        inv_pow(self.n, self.c) * rational::q(k as i64, 2)
    }

    pub fn iter(&self) -> impl Iterator<Item = Q> + '_ {
        (1..=self.len()).map(|k| self.value(k))
    }
}

fn reach_probabilities(b: &Obp) -> Vec<Q> {
    let mut all: Vec<Q> = b.exact_probs(crate::obp::Direction::Forward).values.into_iter().flatten().collect();
    all.sort();
    all.dedup();
    all
}

/// `|p − k·n^{−c+2} + r| > n^{−c}/6` for every integer `k` and every reach probability `p`.
pub fn promise_holds(b: &Obp, n: usize, r: &Q, c: u32) -> bool {
    let unit = inv_pow(n, c - 2);
    let margin = inv_pow(n, c) / rational::int(6);
    reach_probabilities(b).iter().all(|p| {
        let k0 = ((p + r) / &unit).floor();
        [k0.clone(), k0 + rational::int(1)].iter().all(|k| rational::abs(&(p - k * &unit + r)) > margin)
    })
}

/// The first grid value satisfying [`promise_holds`].
pub fn good_r_exists(b: &Obp, n: usize, c: u32) -> Option<Q> {
    RoundingGrid::new(n, c).iter().find(|r| promise_holds(b, n, r, c))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnivError {
    #[error("program of length {len} and width {width} exceeds n = {n}")]
    TooLarge { n: usize, len: usize, width: usize },
    #[error("no estimator passed up to budget j = {0}")]
    Exhausted(usize),
    #[error(transparent)]
    Lc(#[from] LcError),
}

#[derive(Debug, Clone)]
pub struct UnivConfig {
    pub c: u32,
    pub j_max: usize,
}

impl Default for UnivConfig {
    fn default() -> Self {
        UnivConfig { c: 5, j_max: 256 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UnivReport {
    /// The accepting-state estimate certified by the test.
    #[serde(serialize_with = "ser_q")]
    pub value: Q,
    /// The winning estimator on the whole program.
    #[serde(serialize_with = "ser_q")]
    pub estimator_value: Q,
    #[serde(serialize_with = "ser_q")]
    pub bound: Q,
    pub estimator: String,
    pub i: usize,
    pub j: usize,
    #[serde(serialize_with = "ser_q")]
    pub r: Q,
    pub calls: u64,
    pub steps: u64,
    pub aborts: u64,
    pub rejections: u64,
    /// Most estimates held at once by the test.
    pub peak_estimates: usize,
    pub total_states: usize,
}

fn ser_q<S: serde::Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&rational::format(x))
}

enum Attempt {
    Abort,
    Verdict(LcVerdict, usize),
}

/// For `j = 0, 1, …`, `i ≤ j` and each grid `r`: feed the estimates of
/// `⟨i⟩(1^n, B_{→v}, r)`, recomputed on request, to the consistency test
/// with tolerance `n^{−3}`; an estimator that exceeds `j` cells or `2^j` steps
/// is aborted and the next `r` tried.
pub fn univ_derand(n: usize, b: &Obp, reg: &Registry, cfg: &UnivConfig) -> Result<UnivReport, UnivError> {
    if b.len() > n || b.width() > n {
        return Err(UnivError::TooLarge { n, len: b.len(), width: b.width() });
    }
    let tol = inv_pow(n, 3);
    let grid = RoundingGrid::new(n, cfg.c);
    let total_states: usize = b.widths().iter().sum();
    let (mut calls, mut steps, mut aborts, mut rejections) = (0u64, 0u64, 0u64, 0u64);
    for j in 0..=cfg.j_max {
        for i in 0..=j.min(reg.len().saturating_sub(1)) {
            let Some(est) = reg.get(i) else { break };
            for r in grid.iter() {
                let mut aborted = false;
                let run = |layer: usize, calls: &mut u64, steps: &mut u64, aborted: &mut bool| -> Result<Vec<Q>, LcError> {
                    let mut vals = Vec::with_capacity(b.widths()[layer]);
                    for index in 0..b.widths()[layer] {
                        if *aborted {
                            vals.push(Q::zero());
                            continue;
                        }
                        let prefix = b.prefix_program(StateRef::new(layer, index)).expect("state exists");
                        let mut meter = Meter::for_budget(j);
                        *calls += 1;
                        let out = est.run(n, &prefix, &r, &mut meter);
                        *steps += meter.steps;
                        match out {
                            Ok(v) if rational::is_unit_interval(&v) => vals.push(v),
                            // out-of-range answers fail the test like any inconsistent value
                            Ok(_) => vals.push(rational::int(2)),
                            Err(_) => {
                                *aborted = true;
                                vals.push(Q::zero());
                            }
                        }
                    }
                    Ok(vals)
                };
                let attempt = {
                    let out = lctest::lc_test_streaming(b, &tol, |layer| run(layer, &mut calls, &mut steps, &mut aborted));
                    match out {
                        _ if aborted => Attempt::Abort,
                        Ok((v, peak)) => Attempt::Verdict(v, peak),
                        Err(LcError::Range { .. }) => Attempt::Verdict(
                            LcVerdict::Reject { layer: None, residual: rational::int(2), threshold: tol.clone() },
                            0,
                        ),
                        Err(e) => return Err(e.into()),
                    }
                };
                match attempt {
                    Attempt::Abort => aborts += 1,
                    Attempt::Verdict(LcVerdict::Reject { .. }, _) => rejections += 1,
                    Attempt::Verdict(LcVerdict::Accept { bound, estimate, .. }, peak) => {
                        let mut meter = Meter::for_budget(j);
                        calls += 1;
                        let whole = est.run(n, b, &r, &mut meter);
                        steps += meter.steps;
                        let Ok(estimator_value) = whole else {
                            aborts += 1;
                            continue;
                        };
                        return Ok(UnivReport {
                            value: estimate,
                            estimator_value,
                            bound,
                            estimator: est.name(),
                            i,
                            j,
                            r,
                            calls,
                            steps,
                            aborts,
                            rejections,
                            peak_estimates: peak,
                            total_states,
                        });
                    }
                }
            }
        }
    }
    Err(UnivError::Exhausted(cfg.j_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_rounding() {
        let e = ReferenceEstimator::default();
        let n = 4;
        let r = inv_pow(n, 5) / rational::int(2);
        let zero = Obp::constant(false).pad(4, 1).unwrap();
        assert!(e.run(n, &zero, &r, &mut Meter::unlimited()).unwrap().is_zero());
        let half = Obp::dictator(4, 1);
        let v = e.run(n, &half, &r, &mut Meter::unlimited()).unwrap();
        assert!(rational::abs(&(v - rational::half())) <= inv_pow(n, 3));
    }

    #[test]
    fn grid_size() {
        let g = RoundingGrid::new(6, 5);
        assert_eq!(g.iter().count(), 72);
        assert_eq!(g.value(72), inv_pow(6, 3));
    }

    #[test]
    fn meter_aborts() {
        let mut m = Meter::for_budget(3);
        assert_eq!(m.alloc(4), Err(Abort::Space));
        let mut m = Meter::for_budget(3);
        assert_eq!(m.tick(9), Err(Abort::Time));
    }
}
