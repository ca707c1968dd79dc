use obpderand::evaluator::{self, wires, Domain, Evaluator, Node, Src};
use obpderand::gf2k::Field;
use obpderand::obp::Obp;
use obpderand::rational;
use obpderand::table::{SparseTable, TruthTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// A composite circuit mixing most node kinds, on `n ≥ 4` inputs.
fn composite(seed: u64, n: usize) -> Evaluator {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let t = Arc::new(TruthTable::from_fn(3, 2, |_| r.gen_range(0..4)));
    let lookup = Node::lookup(vec![Src::In(0), Src::NotIn(1), Src::In(n - 1)], t).unwrap();
    let obp = Arc::new(Obp::random(&mut r, n, 3));
    let prog = Node::program(wires(n), obp).unwrap();
    let sparse = Arc::new(SparseTable::new(n, 1, vec![(r.gen_range(0..1 << n), 1), (r.gen_range(0..1 << n), 1)], 0));
    let sp = Node::sparse(wires(n), sparse).unwrap();
    let inner = Arc::new(Evaluator::new(n, Node::xor(vec![Src::In(2), Src::In(3)])).unwrap());
    let call = Node::call(wires(n), inner).unwrap();
    let maj = Node::maj(vec![Src::Node(prog), Src::Node(sp), Src::Node(call), Src::Node(Node::project(lookup, vec![1]).unwrap())]);
    Evaluator::new(n, Node::concat(vec![Src::Node(maj), Src::Node(Node::and(vec![Src::In(0), Src::In(1)]))]).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn json_round_trip_preserves_outputs_and_size(seed: u64, n in 4usize..=12) {
        let e = composite(seed, n);
        let back = Evaluator::from_json(&e.to_json()).unwrap();
        prop_assert_eq!(back.size(), e.size());
        prop_assert_eq!(back.n_out(), e.n_out());
        for x in 0..1u64 << n {
            prop_assert_eq!(back.run_packed(x), e.run_packed(x));
        }
    }

    #[test]
    fn success_and_advantage_identities(seed: u64, n in 1usize..=10) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let f = TruthTable::from_fn(n, 1, |_| r.gen_range(0..2));
        let g = Arc::new(Evaluator::table(Arc::new(TruthTable::from_fn(n, 1, |_| r.gen_range(0..2)))));
        let suc = evaluator::success(&g, &f, Domain::All);
        prop_assert_eq!(evaluator::advantage(&g, &f, Domain::All), &suc * rational::int(2) - rational::int(1));
        let not_g = Evaluator::complement(g).unwrap();
        prop_assert_eq!(suc + evaluator::success(&not_g, &f, Domain::All), rational::int(1));
    }

    #[test]
    fn tabulation_does_not_change_outputs(seed: u64, n in 4usize..=10) {
        let e = composite(seed, n);
        let before: Vec<u64> = (0..1u64 << n).map(|x| e.run_packed(x)).collect();
        prop_assert!(e.tabulate());
        let after: Vec<u64> = (0..1u64 << n).map(|x| e.run_packed(x)).collect();
        prop_assert_eq!(before, after);
    }
}

#[test]
fn inner_weighted_and_plurality() {
    let ip = Evaluator::new(4, Node::inner(vec![Src::In(0), Src::In(1)], vec![Src::In(2), Src::In(3)]).unwrap()).unwrap();
    for x in 0..16u64 {
        let want = ((x >> 3 & x >> 1) ^ (x >> 2 & x)) & 1;
        assert_eq!(ip.run_packed(x), want);
    }
    // weight 3 on input 0 outvotes inputs 1 and 2
    let wm = Node::weighted_maj(vec![(3, Node::select(0)), (1, Node::select(1)), (1, Node::select(2))]).unwrap();
    let wm = Evaluator::new(3, wm).unwrap();
    for x in 0..8u64 {
        assert_eq!(wm.run_packed(x), x >> 2 & 1);
    }
}

#[test]
fn decode_node_recovers_constant_term() {
    let f = Arc::new(Field::new(2).unwrap());
    // word of q(a) = 1 + a over GF(4), one symbol corrupted
    let mut word = f.rs_encode(&[1, 1]);
    word[3] ^= 2;
    let args: Vec<Src> = word.iter().flat_map(|&s| [Src::Bit(s >> 1 & 1 == 1), Src::Bit(s & 1 == 1)]).collect();
    let e = Evaluator::new(1, Node::decode(f.clone(), 1, args).unwrap()).unwrap();
    // flag bit then q(a_1) = q(0) = 1
    assert_eq!(e.run_packed(0), 0b101);
}

#[test]
fn wrong_input_length() {
    let e = Evaluator::select(3, 1).unwrap();
    assert!(e.run(&[true]).is_err());
    assert!(Evaluator::from_json("[]").is_err());
}
