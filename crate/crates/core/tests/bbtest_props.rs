use num_traits::Zero;
use obpderand::bbtest::{self, analysis, ExhaustiveSuffixes, HittingSet, OracleObp, SeedClassIndex, SeedEstimates, SeededSamples};
use obpderand::obp::Obp;
use obpderand::rational::{self, q, Q};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hidden(seed: u64, n: usize, w: usize) -> (Obp, OracleObp) {
    let b = Obp::random(&mut ChaCha8Rng::seed_from_u64(seed), n, w);
    (b.clone(), OracleObp::hide(b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn full_hitting_set_classes_are_states(seed: u64, n in 1usize..=6, w in 1usize..=4) {
        let (b, o) = hidden(seed, n, w);
        let h = HittingSet::enumerate(n);
        let idx = SeedClassIndex::build(&o, &h, w).unwrap();
        prop_assert!(analysis::classes_coarsen_states(&b, &h, &idx));
        prop_assert!(analysis::max_class_spread(&b, &h, &idx).is_zero());
        prop_assert!(analysis::unverified_mass(&b, &h).is_zero());
        prop_assert_eq!(o.queries(), bbtest::index_query_count(n, h.seeds(), &idx.class_counts()));
    }

    #[test]
    fn permuted_list_behaves_like_enumeration(seed: u64, n in 1usize..=5, w in 1usize..=4) {
        let (b, o) = hidden(seed, n, w);
        let mut outs: Vec<u64> = (0..1u64 << n).collect();
        outs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 7));
        let h = HittingSet::from_list(n, outs, q(1, 5));
        let rep = bbtest::bb_sampler(&o, &h, &ExhaustiveSuffixes, &q(1, 5), w).unwrap();
        prop_assert!(rational::abs(&(rep.estimate - b.expectation())) <= q(1, 5));
    }

    #[test]
    fn exact_seed_estimates_accepted(seed: u64, n in 1usize..=6, w in 1usize..=4) {
        let (b, o) = hidden(seed, n, w);
        let h = HittingSet::enumerate(n);
        let idx = SeedClassIndex::build(&o, &h, w).unwrap();
        let v = bbtest::bb_lc_test(&idx, &analysis::true_estimates(&b, &h), &q(1, 100)).unwrap();
        prop_assert_eq!(v.value(), Some(&b.expectation()));
    }
}

/// Every estimate table on a five-point grid, for each program of length 2 and
/// width at most 2: nothing accepted may be farther than 6εn from the truth.
#[test]
fn adversarial_grid_search_at_n2() {
    let eps = q(1, 20);
    let grid: Vec<Q> = (0..=4).map(|k| q(k, 4)).collect();
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let mut accepted = 0u64;
    for _ in 0..6 {
        let b = Obp::random(&mut r, 2, 2);
        let o = OracleObp::hide(b.clone());
        let h = HittingSet::enumerate(2);
        let idx = SeedClassIndex::build(&o, &h, 2).unwrap();
        let finals: Vec<Q> = idx.finals.iter().map(|&f| if f { rational::int(1) } else { Q::zero() }).collect();
        let truth = b.expectation();
        let bound = &eps * rational::int(12);
        // 4 seeds × layers 0 and 1
        for code in 0..5u32.pow(8) {
            let mut c = code;
            let mut layer = |_: usize| -> Vec<Q> {
                (0..4)
                    .map(|_| {
                        let v = grid[(c % 5) as usize].clone();
                        c /= 5;
                        v
                    })
                    .collect()
            };
            let est = SeedEstimates(vec![layer(0), layer(1), finals.clone()]);
            if let Some(v) = bbtest::bb_lc_test(&idx, &est, &eps).unwrap().value() {
                assert!(rational::abs(&(v - &truth)) <= bound);
                accepted += 1;
            }
        }
    }
    assert!(accepted > 0);
}

#[test]
fn seeded_samples_estimate() {
    let (b, o) = hidden(3, 3, 2);
    let h = HittingSet::enumerate(3);
    let eps = q(1, 2);
    let t = bbtest::default_t(3, 2, rational::to_f64(&eps) / 18.0);
    let src = SeededSamples { count: 4, t, seed: 1 };
    match bbtest::bb_sampler(&o, &h, &src, &eps, 2) {
        Ok(rep) => assert!(rational::abs(&(rep.estimate - b.expectation())) <= eps),
        Err(e) => assert!(matches!(e, bbtest::BbError::SamplerFailure { .. }), "{e}"),
    }
}

#[test]
fn oracle_counts_every_query() {
    let o = OracleObp::new(4, |x| x % 3 == 0);
    assert_eq!(o.queries(), 0);
    let hits = (0..16).filter(|&x| o.query(x)).count();
    assert_eq!(hits, 6);
    assert_eq!(o.queries(), 16);
    o.reset_queries();
    assert_eq!(o.queries(), 0);
}
