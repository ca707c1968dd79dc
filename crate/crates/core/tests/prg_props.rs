use obpderand::bits;
use obpderand::combinat;
use obpderand::gf2k::{self, Field};
use obpderand::obp::Obp;
use obpderand::prg::{self, EnumerationCap, Enumerate, HardFunction, IwParams, NwGen, Prg, SmallBias};
use obpderand::table::TruthTable;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn enumeration_gives_the_exact_expectation(seed: u64, n in 1usize..12, w in 1usize..6) {
        let b = Obp::random(&mut ChaCha8Rng::seed_from_u64(seed), n, w);
        let e = prg::expectation_under(&Enumerate { n }, &b, EnumerationCap::default()).unwrap();
        prop_assert_eq!(e, b.expectation());
    }

    #[test]
    fn nw_matches_slow_recomputation(seed: u64, n in 1usize..10, s in 6usize..10) {
        let f = HardFunction::random(&mut ChaCha8Rng::seed_from_u64(seed), 4);
        let Ok(design) = combinat::build_design_sized(s, 4, n) else { return Ok(()) };
        let g = NwGen::new(design.clone(), f.table.clone()).unwrap();
        for x in 0..1u64 << s {
            let out = g.expand(x);
            for (i, set) in design.sets.iter().enumerate() {
                // f applied to the bits of x indexed by the set, MSB-first
                let mut arg = 0u64;
                for &p in set {
                    arg = (arg << 1) | bits::get(x, s, p) as u64;
                }
                prop_assert_eq!(bits::get(out, n, i), f.table.bit(arg));
            }
            prop_assert_eq!(g.expand_prefix(x, n), out);
        }
    }
}

#[test]
fn direct_product_matches_walks() {
    let mut p = IwParams::desk(4, 8);
    p.nw_s = p.m3() + 1;
    let f = HardFunction::random(&mut ChaCha8Rng::seed_from_u64(9), 4);
    let g = prg::assemble_iw_generator(&f, &p, EnumerationCap(1 << 22)).unwrap();
    let dp = &g.dp;
    for seed in (0..1u64 << dp.seed_len()).step_by(97) {
        let (r, v, digits) = dp.split(seed);
        assert_eq!(dp.join(r, v, &digits), seed);
        let points = dp.expand_seed(seed);
        assert_eq!(points, dp.dp_expand(r, v, &digits).unwrap());
        assert_eq!(points.len(), dp.blocks());
    }
}

#[test]
fn extension_agrees_with_f_on_the_cube() {
    for m in [2usize, 4, 6] {
        let h_bits = if m == 6 { 3 } else { 2 };
        let ell = m / h_bits;
        let field = Field::new(4).unwrap();
        let f = HardFunction::random(&mut ChaCha8Rng::seed_from_u64(m as u64), m);
        let lde = prg::low_degree_extension(&f.table, &field, h_bits, ell);
        for x in 0..1u64 << m {
            let y = prg::embed(x, h_bits, ell, field.k() as usize);
            assert_eq!(lde[y as usize], f.eval(x) as u32, "m={m} x={x}");
        }
    }
}

#[test]
fn hadamard_and_inner_product_layers() {
    let f = TruthTable::from_fn(3, 3, |x| (x * 5 + 1) & 7);
    let ip = prg::inner_product_table(&f);
    assert_eq!(ip.n_in(), 6);
    for x in 0..8u64 {
        for r in 0..8u64 {
            assert_eq!(ip.bit(x << 3 | r), gf2k::inner(f.get(x) as u32, r as u32));
        }
    }
}

#[test]
fn seed_cap_is_enforced() {
    let b = Obp::parity(4);
    let g = SmallBias::new(4, 12);
    assert!(prg::expectation_under(&g, &b, EnumerationCap(1 << 10)).is_err());
    assert!(prg::expectation_under(&g, &b, EnumerationCap(1 << 24)).is_ok());
}

#[test]
fn generator_is_deterministic() {
    let f = HardFunction::random(&mut ChaCha8Rng::seed_from_u64(4), 4);
    let p = IwParams::desk(4, 8);
    let a = prg::assemble_iw_generator(&f, &p, EnumerationCap(1 << 22)).unwrap();
    let b = prg::assemble_iw_generator(&f, &p, EnumerationCap(1 << 22)).unwrap();
    assert_eq!(a.stages_json(), b.stages_json());
    for y in (0..1u64 << a.seed_len()).step_by(1013) {
        assert_eq!(a.expand(y), b.expand(y));
    }
}
