use num_traits::Zero;
use obpderand::lctest::{self, LcVerdict, ReachEstimates};
use obpderand::obp::Obp;
use obpderand::rational::{self, q, Q};
use obpderand::universal::inv_pow;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy(exact: &ReachEstimates, tol: &Q, scale: i64, seed: u64) -> ReachEstimates {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    ReachEstimates(
        exact
            .0
            .iter()
            .map(|l| l.iter().map(|p| (p + tol * q(r.gen_range(-scale..=scale), 100)).max(Q::zero()).min(rational::int(1))).collect())
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn completeness_at_the_input_tolerance(seed: u64, n in 1usize..=16, w in 1usize..=6) {
        let b = Obp::random(&mut ChaCha8Rng::seed_from_u64(seed), n, w);
        let tol = inv_pow(n.max(2), 3);
        let est = noisy(&ReachEstimates::exact(&b), &tol, 100, seed ^ 1);
        prop_assert!(lctest::lc_test(&b, &est, &tol).unwrap().accepted());
    }

    #[test]
    fn accepted_error_is_within_the_certificate(seed: u64, n in 1usize..=12, w in 1usize..=5, scale in 100i64..4000) {
        let b = Obp::random(&mut ChaCha8Rng::seed_from_u64(seed), n, w);
        let tol = inv_pow(n.max(2), 3);
        let est = noisy(&ReachEstimates::exact(&b), &tol, scale, seed ^ 2);
        if let LcVerdict::Accept { bound, certified_error, estimate } = lctest::lc_test(&b, &est, &tol).unwrap() {
            let final_err = lctest::final_layer_error(&b, &est);
            prop_assert!(final_err <= certified_error);
            prop_assert!(certified_error <= bound);
            prop_assert!(rational::abs(&(estimate - b.expectation())) <= final_err);
        }
    }

    #[test]
    fn streaming_holds_two_layers(seed: u64, n in 1usize..=12, w in 1usize..=6) {
        let b = Obp::random(&mut ChaCha8Rng::seed_from_u64(seed), n, w);
        let exact = ReachEstimates::exact(&b);
        let tol = inv_pow(n.max(2), 3);
        let mut requested = Vec::new();
        let (v, peak) = lctest::lc_test_streaming(&b, &tol, |i| {
            requested.push(i);
            Ok(exact.0[i].clone())
        })
        .unwrap();
        prop_assert!(v.accepted());
        prop_assert_eq!(requested, (0..=n).collect::<Vec<_>>());
        let two = b.widths().windows(2).map(|p| p[0] + p[1]).max().unwrap();
        prop_assert!(peak <= two);
    }
}

#[test]
fn bound_fits_three_over_n() {
    for n in 2..=64usize {
        let tol = inv_pow(n, 3);
        assert!(lctest::soundness_bound(n, n, &tol) <= q(3, n as i64));
    }
}

#[test]
fn start_state_mass_checked() {
    let b = Obp::parity(3);
    let mut est = ReachEstimates::exact(&b);
    est.0[0][0] = rational::half();
    match lctest::lc_test(&b, &est, &q(1, 27)).unwrap() {
        LcVerdict::Reject { layer, .. } => assert_eq!(layer, None),
        v => panic!("{v:?}"),
    }
}

#[test]
fn out_of_range_estimates_are_errors() {
    let b = Obp::parity(2);
    let mut est = ReachEstimates::exact(&b);
    est.0[1][0] = rational::int(2);
    assert!(lctest::lc_test(&b, &est, &q(1, 8)).is_err());
}
