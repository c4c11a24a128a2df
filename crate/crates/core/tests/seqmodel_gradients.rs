mod common;

use claimrisk::codevec::PAD;
use claimrisk::rng::seeded;
use claimrisk::seqmodel::{backward, forward, Hyper, ModelKind, ModelParams};
use common::{max_relative_fd_error, oracle_probability};
use rand::Rng;

fn tiny(kind: ModelKind, seed: u64) -> ModelParams {
    ModelParams::init(kind, Hyper::tiny(), None, &mut seeded(seed)).unwrap()
}

fn random_input(seed: u64, len: usize, valid: usize) -> (Vec<usize>, Vec<bool>) {
    let mut rng = seeded(seed);
    let idx = (0..len)
        .map(|t| if t < valid { rng.random_range(1..20) } else { PAD })
        .collect();
    let mask = (0..len).map(|t| t < valid).collect();
    (idx, mask)
}

#[test]
fn forward_matches_independent_oracle() {
    for kind in [ModelKind::Sa, ModelKind::Baseline] {
        for seed in 0..5 {
            let p = tiny(kind, seed);
            let (idx, mask) = random_input(100 + seed, 12, 12 - seed as usize);
            let got = forward(&p, &idx, &mask).unwrap().probability;
            let want = oracle_probability(&p, &idx, &mask);
            assert!((got - want).abs() < 1e-10, "{kind} seed {seed}: {got} vs {want}");
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for kind in [ModelKind::Sa, ModelKind::Baseline] {
        for (seed, label) in [(1u64, 1u8), (2, 0)] {
            let p = tiny(kind, seed);
            let (idx, mask) = random_input(seed, 12, 10);
            let out = forward(&p, &idx, &mask).unwrap();
            let g = backward(&p, &out.trace, label, 1.0).unwrap();
            let (err, at) = max_relative_fd_error(&p, &g, &idx, &mask, label, 1e-5, 1e-6);
            assert!(err < 1e-4, "{kind}: {err:e} at {at}");
        }
    }
}

#[test]
fn forward_is_deterministic_and_checkpoint_roundtrips() {
    let p = tiny(ModelKind::Sa, 9);
    let (idx, mask) = random_input(9, 12, 12);
    let a = forward(&p, &idx, &mask).unwrap();
    let mut buf = Vec::new();
    p.save(&mut buf).unwrap();
    let q = ModelParams::load(buf.as_slice()).unwrap();
    assert_eq!(p, q);
    let b = forward(&q, &idx, &mask).unwrap();
    assert_eq!(a.probability.to_bits(), b.probability.to_bits());
    assert_eq!(a.attention, b.attention);
}

#[test]
fn heads_do_not_share_storage() {
    let sa = tiny(ModelKind::Sa, 1);
    let base = tiny(ModelKind::Baseline, 1);
    assert_eq!(sa.fc1_w.cols, Hyper::tiny().hops * 2 * Hyper::tiny().hidden);
    assert_eq!(base.fc1_w.cols, Hyper::tiny().hidden);
    assert!(base.bwd.is_none() && base.attention.is_none());
    let mut moved = sa.clone();
    moved.fc1_w.data[0] += 1.0;
    assert_ne!(moved.fc1_w, sa.fc1_w);
    assert_eq!(moved.fwd, sa.fwd);
}
