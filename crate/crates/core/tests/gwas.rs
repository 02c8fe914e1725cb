//! Encrypted GWAS stages against cleartext references.

mod common;

use common::{setup, Setup};
use hegwas::cache::{CacheConfig, CiphertextCache};
use hegwas::gwas::{
    batch_operands, batch_statistics, compute_m, decrypt_outputs, encrypt_inputs, inverse_slots, pack_batches,
    prepare, process_batches, BatchOperands, BatchOutput, CachedBatch, GwasConfig, GwasIntermediate, GwasResult,
    SnpBatch,
};
use hegwas::matrix::{decrypt_cp, encrypt_cp, encrypt_rep, RepMatrix};
use hegwas::oracle::{inverse_checked, inverse_newton, oracle_pipeline, synth_dataset, CleartextDataset};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::sync::OnceLock;

const N: usize = 8;
const K: usize = 20;

struct Prepared {
    s: Setup,
    data: CleartextDataset,
    inter: GwasIntermediate,
    cfg: GwasConfig,
}

fn prepared() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| {
        let s = setup(10, 1600);
        let mut data = synth_dataset(N, 2, K, 5, 0.2).dataset;
        // a monomorphic SNP standardizes to zero
        data.s.column_mut(3).fill(0.0);
        let xtx_inv = inverse_checked(&(data.x.transpose() * &data.x)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let inputs = encrypt_inputs(&s.ctx, &s.keys.public, &data.x, &xtx_inv, data.y.as_slice(), &mut rng).unwrap();
        let cfg = GwasConfig::new(N, 2, K, s.ctx.slots());
        let inter = prepare(&s.mev, &inputs, &cfg).unwrap();
        Prepared { s, data, inter, cfg }
    })
}

fn run_direct(p: &Prepared, cfg: &GwasConfig) -> GwasResult {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let ops = batch_operands(&p.s.mev, &p.inter, cfg.complex_packing).unwrap();
    let batches = pack_batches(&p.s.ctx, &p.s.keys.public, &p.data.s, cfg, &mut rng).unwrap();
    let outs: Vec<BatchOutput> = batches.iter().map(|b| batch_statistics(&p.s.mev, &ops, b).unwrap()).collect();
    decrypt_outputs(&p.s.ctx, &p.s.keys.secret, cfg, &outs).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!(
            (x.is_nan() && y.is_nan()) || (x - y).abs() <= tol,
            "entry {i}: {x} vs {y}"
        );
    }
}

#[test]
fn inverse_slots_follows_newton_iterates() {
    let s = setup(8, 600);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let w = [0.25, 0.2, 0.1, 0.3];
    let ct = s.ctx.encrypt_values(&w, &s.keys.public, &mut rng).unwrap();
    let inv = s.ctx.decrypt_values(&inverse_slots(&s.mev, &ct, 3, 3.0).unwrap(), &s.keys.secret).unwrap();
    assert!((inv[0] - 3.99993896484375).abs() < 1e-6);
    assert!((inv[1] - 5.0).abs() < 0.15);
    for (i, &wi) in w.iter().enumerate() {
        assert!((inv[i] - inverse_newton(wi, 3, 3.0)).abs() < 1e-6);
    }
    assert!(inverse_slots(&s.mev, &ct, 0, 3.0).is_err());
}

#[test]
fn projector_for_intercept_only_centers() {
    let s = setup(8, 600);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let x = DMatrix::from_element(4, 1, 1.0);
    let xtx_inv = DMatrix::from_element(1, 1, 0.25);
    let m = compute_m(
        &s.mev,
        &encrypt_cp(&s.ctx, &s.keys.public, &x, &mut rng).unwrap(),
        &encrypt_cp(&s.ctx, &s.keys.public, &xtx_inv, &mut rng).unwrap(),
        &encrypt_rep(&s.ctx, &s.keys.public, &x.transpose(), 4, &mut rng).unwrap(),
    )
    .unwrap();
    let got = decrypt_cp(&s.ctx, &s.keys.secret, &m).unwrap();
    let want = DMatrix::identity(4, 4) - DMatrix::from_element(4, 4, 0.25);
    assert!((got - want).abs().max() < 1e-6);
}

#[test]
fn projector_annihilates_covariates() {
    let p = prepared();
    let m = decrypt_cp(&p.s.ctx, &p.s.keys.secret, &p.inter.m).unwrap();
    assert!((&m * &p.data.x).abs().max() < 1e-5);
    assert!((&m * &m - &m).abs().max() < 1e-5);
    assert!((&m - m.transpose()).abs().max() < 1e-5);
}

#[test]
fn pipeline_matches_cleartext_twin() {
    let p = prepared();
    let got = run_direct(p, &p.cfg);
    let want = oracle_pipeline(&p.data, p.cfg.kappa, p.cfg.inverse_iters, p.cfg.inverse_guess).unwrap();
    assert_close(&got.numerator, &want.numerator, 1e-3);
    assert_close(&got.denominator, &want.denominator, 1e-3);
    assert_close(&got.effects, &want.effects, 1e-3);
    assert!(want.flagged().contains(&3));
    assert_eq!(got.flagged(), want.flagged());
    let out = batch_statistics(
        &p.s.mev,
        &batch_operands(&p.s.mev, &p.inter, true).unwrap(),
        &pack_batches(&p.s.ctx, &p.s.keys.public, &p.data.s, &p.cfg, &mut ChaCha20Rng::seed_from_u64(1)).unwrap()[0],
    )
    .unwrap();
    assert!(out.depth().ct <= 40 && out.depth().pt <= 29, "{:?}", out.depth());
}

#[test]
fn batch_width_and_packing_do_not_change_results() {
    let p = prepared();
    let base = run_direct(p, &p.cfg);
    for (tau, complex) in [(4, true), (6, true), (3, false), (64, false)] {
        let cfg = GwasConfig {
            tau,
            complex_packing: complex,
            ..p.cfg
        };
        let got = run_direct(p, &cfg);
        assert_close(&got.numerator, &base.numerator, 1e-6);
        assert_close(&got.denominator, &base.denominator, 1e-6);
    }
}

#[test]
fn cached_threads_match_direct_run() {
    let p = prepared();
    let cfg = GwasConfig { tau: 4, ..p.cfg };
    let base = run_direct(p, &cfg);
    let dir = tempfile::tempdir().unwrap();
    let cache = CiphertextCache::new(CacheConfig::new(3 * N + 4, dir.path())).unwrap();
    let ops = batch_operands(&p.s.mev, &p.inter, true).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let cached: Vec<CachedBatch> = pack_batches(&p.s.ctx, &p.s.keys.public, &p.data.s, &cfg, &mut rng)
        .unwrap()
        .into_iter()
        .map(|b| CachedBatch::store(&cache, b).unwrap())
        .collect();
    let outs = process_batches(&p.s.mev, &ops, &cache, &cached, 2).unwrap();
    assert_eq!(outs.iter().map(|o| o.index).collect::<Vec<_>>(), (0..cfg.batches()).collect::<Vec<_>>());
    let got = decrypt_outputs(&p.s.ctx, &p.s.keys.secret, &cfg, &outs).unwrap();
    assert_close(&got.numerator, &base.numerator, 1e-6);
    assert_close(&got.denominator, &base.denominator, 1e-6);
    assert_eq!(cache.resident_count(), 0);
}

#[test]
fn empty_snp_set_gives_empty_result() {
    let p = prepared();
    let cfg = GwasConfig { k: 0, ..p.cfg };
    let s = DMatrix::zeros(N, 0);
    let batches = pack_batches(&p.s.ctx, &p.s.keys.public, &s, &cfg, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
    assert!(batches.is_empty());
    assert!(decrypt_outputs(&p.s.ctx, &p.s.keys.secret, &cfg, &[]).unwrap().is_empty());
}

#[test]
fn complex_slot_splits_into_two_denominators() {
    // one sample, M = 1, w = 1: the pair (3, 4) yields 9 and 16
    let s = setup(8, 600);
    let ctx = &s.ctx;
    let p = ctx.params();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let enc = |v: Complex64, rng: &mut ChaCha20Rng| {
        ctx.encrypt(&ctx.encode_complex(&vec![v; ctx.slots()], p.log_p, p.log_l).unwrap(), &s.keys.public, rng)
            .unwrap()
    };
    let ops = BatchOperands {
        m_dup: vec![enc(Complex64::new(1.0, 0.0), &mut rng)],
        w_dup: enc(Complex64::new(0.5, 0.0), &mut rng),
        wz_dup: enc(Complex64::new(1.0, 0.0), &mut rng),
        n: 1,
        complex: true,
    };
    let batch = SnpBatch {
        index: 0,
        packed: RepMatrix {
            rows_ct: vec![enc(Complex64::new(3.0, 4.0), &mut rng)],
            repeat: 1,
            cols: 1,
        },
        snp_count: 2,
        complex: true,
    };
    let out = batch_statistics(&s.mev, &ops, &batch).unwrap();
    let cfg = GwasConfig {
        n: 1,
        d: 0,
        k: 2,
        kappa: 1,
        tau: 2,
        inverse_iters: 1,
        inverse_guess: 3.0,
        complex_packing: true,
    };
    let r = decrypt_outputs(ctx, &s.keys.secret, &cfg, &[out]).unwrap();
    assert_close(&r.denominator, &[9.0, 16.0], 1e-6);
    assert_close(&r.numerator, &[3.0, 4.0], 1e-6);
}

#[test]
fn oversized_batches_are_rejected() {
    let cfg = GwasConfig::new(8, 2, 100, 512);
    assert!(cfg.validate(512).is_ok());
    assert!(GwasConfig { tau: cfg.tau + 2, ..cfg }.validate(512).is_err());
    assert!(GwasConfig { tau: 3, ..cfg }.validate(512).is_err());
    assert!(GwasConfig::new(64, 2, 10, 512).validate(512).is_err());
}
