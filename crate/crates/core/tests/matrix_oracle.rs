//! Packed matrix algorithms against cleartext linear algebra.

mod common;

use common::{setup, Setup};
use hegwas::matrix::{
    decrypt_ccp, decrypt_cp, decrypt_rep, decrypt_rp, decrypt_vector, encrypt_ccp, encrypt_cp, encrypt_rep,
    encrypt_rp, encrypt_vector, load_packed, save_packed, PackedMatrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::sync::OnceLock;

const TOL: f64 = 1e-6;

fn shared() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup(8, 500))
}

fn random(rng: &mut ChaCha20Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    a.shape() == b.shape() && (a - b).abs().max() < TOL
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cp_matvec_matches(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8) {
        let s = shared();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = random(&mut rng, n, m);
        let v = random(&mut rng, m, 1);
        let ca = encrypt_cp(&s.ctx, &s.keys.public, &a, &mut rng).unwrap();
        let cv = encrypt_vector(&s.ctx, &s.keys.public, v.as_slice(), &mut rng).unwrap();
        let got = decrypt_vector(&s.ctx, &s.keys.secret, &s.mev.cp_matvec(&ca, &cv).unwrap(), n).unwrap();
        prop_assert!(close(&DMatrix::from_vec(n, 1, got), &(&a * &v)));
    }

    #[test]
    fn cp_matmul_matches(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8, p in 1usize..=4) {
        let s = shared();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = random(&mut rng, n, m);
        let b = random(&mut rng, m, p);
        let ca = encrypt_cp(&s.ctx, &s.keys.public, &a, &mut rng).unwrap();
        let cb = encrypt_cp(&s.ctx, &s.keys.public, &b, &mut rng).unwrap();
        let got = decrypt_cp(&s.ctx, &s.keys.secret, &s.mev.cp_matmul(&ca, &cb).unwrap()).unwrap();
        prop_assert!(close(&got, &(&a * &b)));
    }

    #[test]
    fn rp_matvec_matches(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8) {
        let s = shared();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = random(&mut rng, n, m);
        let v = random(&mut rng, m, 1);
        let ca = encrypt_rp(&s.ctx, &s.keys.public, &a, &mut rng).unwrap();
        let cv = encrypt_vector(&s.ctx, &s.keys.public, v.as_slice(), &mut rng).unwrap();
        let got = decrypt_vector(&s.ctx, &s.keys.secret, &s.mev.rp_matvec(&ca, &cv).unwrap(), n).unwrap();
        prop_assert!(close(&DMatrix::from_vec(n, 1, got), &(&a * &v)));
    }

    #[test]
    fn cp_rep_then_ccp_to_cp_matches(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=4, p in 1usize..=8) {
        let s = shared();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = random(&mut rng, n, m);
        let b = random(&mut rng, m, p);
        let ca = encrypt_cp(&s.ctx, &s.keys.public, &a, &mut rng).unwrap();
        let cb = encrypt_rep(&s.ctx, &s.keys.public, &b, n.next_power_of_two(), &mut rng).unwrap();
        let ccp = s.mev.cp_rep_matmul(&ca, &cb).unwrap();
        let want = &a * &b;
        prop_assert!(close(&decrypt_ccp(&s.ctx, &s.keys.secret, &ccp).unwrap(), &want));
        let cp = s.mev.ccp_to_cp(&ccp).unwrap();
        let got = decrypt_cp(&s.ctx, &s.keys.secret, &cp).unwrap();
        prop_assert!(close(&got, &want));
        // columns come out zero beyond the matrix height
        for c in &cp.cols {
            let v = s.ctx.decrypt_values(c, &s.keys.secret).unwrap();
            prop_assert!(v[n..].iter().all(|x| x.abs() < TOL));
        }
    }

    #[test]
    fn col_sum_matches(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8) {
        let s = shared();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = random(&mut rng, n, m);
        let ca = encrypt_ccp(&s.ctx, &s.keys.public, &a, &mut rng).unwrap();
        let v = s.ctx.decrypt_values(&s.mev.col_sum(&ca).unwrap(), &s.keys.secret).unwrap();
        for j in 0..m {
            prop_assert!((v[j * ca.col_size] - a.column(j).sum()).abs() < TOL);
        }
    }

    #[test]
    fn dot_prod_fills_every_slot(seed in any::<u64>(), len in 1usize..=64) {
        let s = shared();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ca = encrypt_vector(&s.ctx, &s.keys.public, &a, &mut rng).unwrap();
        let cb = encrypt_vector(&s.ctx, &s.keys.public, &b, &mut rng).unwrap();
        let want: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let v = s.ctx.decrypt_values(&s.mev.dot_prod(&ca, &cb, len).unwrap(), &s.keys.secret).unwrap();
        prop_assert!(v.iter().all(|x| (x - want).abs() < TOL));
    }

    #[test]
    fn duplicate_tiles_block(seed in any::<u64>(), k in 1usize..=32) {
        let s = shared();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ca = encrypt_vector(&s.ctx, &s.keys.public, &a, &mut rng).unwrap();
        let v = s.ctx.decrypt_values(&s.mev.duplicate(&ca, k).unwrap(), &s.keys.secret).unwrap();
        let block = k.next_power_of_two();
        for (i, x) in v.iter().enumerate() {
            let want = if i % block < k { a[i % block] } else { 0.0 };
            prop_assert!((x - want).abs() < TOL);
        }
    }
}

#[test]
fn replicate_broadcasts_each_slot() {
    let s = shared();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let a = [0.5, -0.25, 0.75];
    let ca = encrypt_vector(&s.ctx, &s.keys.public, &a, &mut rng).unwrap();
    for (i, r) in s.mev.replicate(&ca, 3).unwrap().iter().enumerate() {
        let v = s.ctx.decrypt_values(r, &s.keys.secret).unwrap();
        assert!(v.iter().all(|x| (x - a[i]).abs() < TOL));
    }
}

#[test]
fn dimension_mismatches_are_errors() {
    let s = shared();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let a = encrypt_cp(&s.ctx, &s.keys.public, &random(&mut rng, 4, 3), &mut rng).unwrap();
    let b = encrypt_cp(&s.ctx, &s.keys.public, &random(&mut rng, 2, 2), &mut rng).unwrap();
    assert!(s.mev.cp_matmul(&a, &b).is_err());
    let rep = encrypt_rep(&s.ctx, &s.keys.public, &random(&mut rng, 3, 2), 8, &mut rng).unwrap();
    assert!(s.mev.cp_rep_matmul(&a, &rep).is_err());
    assert!(encrypt_rep(&s.ctx, &s.keys.public, &random(&mut rng, 1, 2), 3, &mut rng).is_err());
    assert!(encrypt_cp(&s.ctx, &s.keys.public, &random(&mut rng, 129, 1), &mut rng).is_err());
}

#[test]
fn layouts_roundtrip_through_encryption_and_disk() {
    let s = shared();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let m = random(&mut rng, 5, 3);
    let dir = tempfile::tempdir().unwrap();
    let packed = [
        PackedMatrix::Cp(encrypt_cp(&s.ctx, &s.keys.public, &m, &mut rng).unwrap()),
        PackedMatrix::Ccp(encrypt_ccp(&s.ctx, &s.keys.public, &m, &mut rng).unwrap()),
        PackedMatrix::Rp(encrypt_rp(&s.ctx, &s.keys.public, &m, &mut rng).unwrap()),
        PackedMatrix::Rep(encrypt_rep(&s.ctx, &s.keys.public, &m, 8, &mut rng).unwrap()),
    ];
    let dec = |p: &PackedMatrix| match p {
        PackedMatrix::Cp(x) => decrypt_cp(&s.ctx, &s.keys.secret, x).unwrap(),
        PackedMatrix::Ccp(x) => decrypt_ccp(&s.ctx, &s.keys.secret, x).unwrap(),
        PackedMatrix::Rp(x) => decrypt_rp(&s.ctx, &s.keys.secret, x).unwrap(),
        PackedMatrix::Rep(x) => decrypt_rep(&s.ctx, &s.keys.secret, x).unwrap(),
    };
    for (i, p) in packed.iter().enumerate() {
        assert!(close(&dec(p), &m), "layout {i}");
        let name = format!("m{i}");
        save_packed(dir.path(), &name, p).unwrap();
        let back = load_packed(dir.path(), &name).unwrap();
        assert_eq!(std::mem::discriminant(p), std::mem::discriminant(&back));
        assert!(close(&dec(&back), &m), "layout {i} from disk");
    }
    assert!(load_packed(dir.path(), "absent").is_err());
}
