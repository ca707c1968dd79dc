use num_traits::Signed;
use obpderand::bits;
use obpderand::combinat::BiasGen;
use obpderand::obp::{Obp, StateRef};
use obpderand::prg::{EnumerationCap, Enumerate, HardFunction, Prg, SmallBias};
use obpderand::rational::{self, q, Q};
use obpderand::verifier::{self, NextBitVerdict, Outcome, PipelineConfig, REFUTER_MESSAGE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CAP: EnumerationCap = EnumerationCap(1 << 20);

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tables_match_single_state_passes(seed: u64, n in 2usize..8, w in 1usize..4, qd in 2u32..5) {
        let b = Obp::random(&mut ChaCha8Rng::seed_from_u64(seed), n, w);
        let g = SmallBias::new(n, qd);
        let tables = verifier::bias_tables(&b, &g, CAP).unwrap();
        prop_assert!(verifier::tables_consistent(&tables));
        for t in &tables {
            for (v, bias) in t.bias.iter().enumerate() {
                prop_assert_eq!(bias, &verifier::next_bit_bias(&b, &g, StateRef::new(t.layer, v), CAP).unwrap());
            }
        }
    }

    #[test]
    fn certified_verdicts_are_sound(seed: u64, n in 2usize..8, w in 1usize..4, qd in 2u32..6, e in 1i64..16) {
        let b = Obp::random(&mut ChaCha8Rng::seed_from_u64(seed), n, w);
        let g = SmallBias::new(n, qd);
        let eps = q(1, e);
        match verifier::test_fools(&b, &g, &eps, CAP).unwrap() {
            NextBitVerdict::Certified { bound, .. } => {
                prop_assert!(verifier::fooling_error(&b, &g, CAP).unwrap() <= bound);
            }
            NextBitVerdict::Predictor { advantage, .. } => prop_assert!(advantage > &eps / rational::int(2)),
        }
    }
}

#[test]
fn enumeration_is_always_certified() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..30 {
        let b = Obp::random(&mut r, 6, 4);
        let v = verifier::test_fools(&b, &Enumerate { n: 6 }, &q(1, 1000), CAP).unwrap();
        match v {
            NextBitVerdict::Certified { estimate, .. } => assert_eq!(estimate, b.expectation()),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn small_bias_against_parity() {
    let b = Obp::parity(6);
    let g = SmallBias::new(6, 4);
    let measured = BiasGen::with_field(6, 4).measured_bias();
    let e_g = obpderand::prg::expectation_under(&g, &b, CAP).unwrap();
    assert!((rational::to_f64(&e_g) - 0.5).abs() <= measured + 1e-12);
    let sums: Vec<Q> = verifier::bias_tables(&b, &g, CAP).unwrap().iter().map(|t| t.abs_sum()).collect();
    let worst = sums.iter().max().unwrap().clone();
    assert!(verifier::test_fools(&b, &g, &worst, CAP).unwrap().to_json()["kind"] == "certified");
}

#[test]
fn predictor_from_layer_beats_half() {
    // a generator whose third bit copies the first
    struct Copy3;
    impl Prg for Copy3 {
        fn seed_len(&self) -> usize {
            2
        }
        fn output_len(&self) -> usize {
            3
        }
        fn expand(&self, y: u64) -> u64 {
            y << 1 | (y >> 1)
        }
        fn provenance(&self) -> String {
            "copy".into()
        }
    }
    // remember bit 1 through layer 2
    let edges = vec![vec![[0, 1]], vec![[0, 0], [1, 1]], vec![[0, 1], [0, 1]]];
    let b = Obp::new_binary(vec![1, 2, 2, 2], edges, vec![false, true]).unwrap();
    match verifier::test_fools(&b, &Copy3, &q(1, 20), CAP).unwrap() {
        NextBitVerdict::Predictor { layer, predictor, advantage, .. } => {
            assert_eq!(layer, 2);
            assert_eq!(advantage, rational::half());
            for y in 0..4u64 {
                let out = Copy3.expand(y);
                let guess = predictor.eval(&bits::unpack(bits::prefix(out, 3, 2), 2)).unwrap().is_positive();
                assert_eq!(guess, bits::get(out, 3, 2));
            }
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_table_is_refuted_exactly() {
    let f = HardFunction::from_fn(4, |_| false, "zero");
    let cfg = PipelineConfig { cap: EnumerationCap(1 << 22), ..Default::default() };
    let out = verifier::certified_estimate_or_refuter(&Obp::dictator(16, 3), &f, &cfg).unwrap();
    match &out {
        Outcome::Refuter { evaluator, verified, size, budget, .. } => {
            assert!(*verified);
            assert!(budget.admits(*size));
            assert!((0..16).all(|x| evaluator.run_packed(x) == 0));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(out.to_json()["message"], REFUTER_MESSAGE);
}
