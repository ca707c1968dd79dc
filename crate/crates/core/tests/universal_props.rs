use obpderand::obp::Obp;
use obpderand::rational::{self, q, Q};
use obpderand::universal::{self, Abort, ConstantEstimator, Estimator, Meter, ReferenceEstimator, Registry, RoundingGrid, UnivConfig, UnivError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Spins until aborted.
struct Spinner;

impl Estimator for Spinner {
    fn name(&self) -> String {
        "spinner".into()
    }
    fn run(&self, _n: usize, _b: &Obp, _r: &Q, meter: &mut Meter) -> Result<Q, Abort> {
        loop {
            meter.tick(1)?;
        }
    }
}

/// Asks for more cells than any budget grants.
struct Hog;

impl Estimator for Hog {
    fn name(&self) -> String {
        "hog".into()
    }
    fn run(&self, _n: usize, _b: &Obp, _r: &Q, meter: &mut Meter) -> Result<Q, Abort> {
        meter.alloc(usize::MAX)?;
        Ok(Q::from_integer(0.into()))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn result_within_bound_whatever_precedes_reference(seed: u64, len in 2usize..=10, w in 1usize..=4) {
        let b = Obp::random(&mut ChaCha8Rng::seed_from_u64(seed), len, w);
        let n = len.max(b.width());
        let reg = Registry::new().with(Spinner).with(ConstantEstimator(q(2, 3))).with(Hog).with(ReferenceEstimator::default());
        let rep = universal::univ_derand(n, &b, &reg, &UnivConfig::default()).unwrap();
        prop_assert!(rational::abs(&(&rep.value - b.expectation())) <= rep.bound);
        prop_assert_eq!(rep.i, 3);
        prop_assert!(rep.aborts > 0);
    }
}

#[test]
fn halts_once_reference_budget_is_reached() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let b = Obp::random(&mut r, 8, 4);
        let n = 8;
        let reg = Registry::new().with(ReferenceEstimator::default());
        let rep = universal::univ_derand(n, &b, &reg, &UnivConfig::default()).unwrap();
        // reference needs 2w cells and about 2·Σwidths + w steps per call
        let cells = 2 * b.width();
        let steps: usize = 2 * b.widths().iter().sum::<usize>() + b.width();
        let need = cells.max((steps as f64).log2().ceil() as usize);
        assert!(rep.j <= need, "j = {} above {need}", rep.j);
    }
}

#[test]
fn too_large_programs_rejected() {
    let b = Obp::parity(6);
    let reg = Registry::new().with(ReferenceEstimator::default());
    assert!(matches!(universal::univ_derand(4, &b, &reg, &UnivConfig::default()), Err(UnivError::TooLarge { .. })));
}

#[test]
fn exhausted_registry_reported() {
    let b = Obp::parity(3);
    let reg = Registry::new().with(ConstantEstimator(q(1, 3)));
    let cfg = UnivConfig { j_max: 6, ..Default::default() };
    assert!(matches!(universal::univ_derand(3, &b, &reg, &cfg), Err(UnivError::Exhausted(6))));
}

#[test]
fn a_good_shift_exists() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    for n in 2..=10 {
        let b = Obp::random(&mut r, n, 3);
        let shift = universal::good_r_exists(&b, n, 5).expect("some grid value satisfies the promise");
        assert!(universal::promise_holds(&b, n, &shift, 5));
        assert!(RoundingGrid::new(n, 5).iter().any(|v| v == shift));
    }
}
