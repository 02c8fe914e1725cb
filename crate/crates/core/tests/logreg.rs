//! Encrypted logistic regression against its cleartext twin.

mod common;

use common::{max_abs_diff, setup};
use hegwas::gwas::encrypt_inputs;
use hegwas::logreg::{hom_logreg, sigmoid7, sigmoid7_plain};
use hegwas::matrix::decrypt_vector;
use hegwas::oracle::{inverse_checked, oracle_logreg_approx, synth_dataset};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[test]
fn encrypted_sigmoid_tracks_polynomial() {
    let s = setup(8, 600);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..128).map(|i| -8.0 + 16.0 * i as f64 / 127.0).collect();
    let ct = s.ctx.encrypt_values(&xs, &s.keys.public, &mut rng).unwrap();
    let got = s.ctx.decrypt_values(&sigmoid7(&s.mev, &ct).unwrap(), &s.keys.secret).unwrap();
    let want: Vec<f64> = xs.iter().map(|&x| sigmoid7_plain(x)).collect();
    assert!(max_abs_diff(&got, &want) < 1e-6);
}

#[test]
fn hom_logreg_matches_cleartext_iterates() {
    let s = setup(10, 1400);
    let data = synth_dataset(16, 3, 1, 21, 0.0).dataset;
    let xtx_inv = inverse_checked(&(data.x.transpose() * &data.x)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let inputs = encrypt_inputs(&s.ctx, &s.keys.public, &data.x, &xtx_inv, data.y.as_slice(), &mut rng).unwrap();
    let kappa = 3;
    let out = hom_logreg(&s.mev, &inputs.logreg, kappa).unwrap();
    let fit = oracle_logreg_approx(&data.x, &data.y, kappa).unwrap();
    let beta = decrypt_vector(&s.ctx, &s.keys.secret, &out.beta, 4).unwrap();
    let p = decrypt_vector(&s.ctx, &s.keys.secret, &out.p_prev, 16).unwrap();
    assert!(max_abs_diff(&beta, fit.beta().as_slice()) < 1e-4, "{beta:?} vs {:?}", fit.beta());
    assert!(max_abs_diff(&p, fit.p_prev.as_slice()) < 1e-4);
    // at least two rescales per iteration land on the ciphertext tier
    assert!(out.beta.depth.ct >= 2 * kappa as u32);
}

#[test]
fn zero_iterations_is_rejected() {
    let s = setup(8, 600);
    let data = synth_dataset(8, 1, 1, 3, 0.0).dataset;
    let xtx_inv = inverse_checked(&(data.x.transpose() * &data.x)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let inputs = encrypt_inputs(&s.ctx, &s.keys.public, &data.x, &xtx_inv, data.y.as_slice(), &mut rng).unwrap();
    assert!(hom_logreg(&s.mev, &inputs.logreg, 0).is_err());
}
