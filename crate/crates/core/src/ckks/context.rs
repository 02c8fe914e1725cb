use std::sync::Arc;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::cipher::{Ciphertext, Depth, Plaintext};
use super::encoding::SpecialFft;
use super::keys::{
    sample_gaussian, sample_hwt, sample_uniform, sample_zo, EvaluationKey, KeySet, KeySwitchKey,
    PublicKey, RotationDirection, RotationKeySet, SecretKey,
};
use super::params::CkksParams;
use super::ring::{RingContext, RingElement};
use crate::error::{Error, Result};

/// Parameters plus the precomputed ring and encoder tables.
#[derive(Debug)]
pub struct CkksContext {
    params: CkksParams,
    ring: RingContext,
    fft: SpecialFft,
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Arc<Self>> {
        params.validate()?;
        let n = params.n();
        Ok(Arc::new(Self {
            params,
            ring: RingContext::new(n, params.max_product_bits()),
            fft: SpecialFft::new(n),
        }))
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn ring(&self) -> &RingContext {
        &self.ring
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn slots(&self) -> usize {
        self.params.slot_count()
    }

    /// Galois element realising a right rotation by `amount` slots.
    pub fn galois_right(&self, amount: usize) -> usize {
        let s = self.slots();
        self.galois_left((s - amount % s) % s)
    }

    /// Galois element realising a left rotation by `amount` slots (`5^amount`).
    pub fn galois_left(&self, amount: usize) -> usize {
        let two_n = 2 * self.n();
        let mut g = 1usize;
        for _ in 0..amount % self.slots() {
            g = g * 5 % two_n;
        }
        g
    }

    pub fn galois_conj(&self) -> usize {
        2 * self.n() - 1
    }

    pub fn encode_complex(
        &self,
        values: &[Complex64],
        scale_bits: u32,
        level_bits: u32,
    ) -> Result<Plaintext> {
        if values.len() > self.slots() {
            return Err(Error::dim(format!(
                "{} values exceed {} slots",
                values.len(),
                self.slots()
            )));
        }
        let limit_bits = level_bits as i64 - scale_bits as i64 - 1;
        let magnitude = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !magnitude.is_finite() || magnitude >= 2f64.powi(limit_bits.clamp(-1000, 1000) as i32) {
            return Err(Error::EncodingOverflow {
                magnitude,
                limit_bits,
            });
        }
        let coeffs = self.fft.embed_inverse(values, 2f64.powi(scale_bits as i32));
        Ok(Plaintext {
            m: RingElement::from_f64_rounded(&coeffs, level_bits),
            scale_bits,
            slots: self.slots(),
        })
    }

    pub fn encode(&self, values: &[f64], scale_bits: u32, level_bits: u32) -> Result<Plaintext> {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.encode_complex(&v, scale_bits, level_bits)
    }

    pub fn decode_complex(&self, pt: &Plaintext) -> Vec<Complex64> {
        let coeffs: Vec<f64> = (0..self.n()).map(|i| pt.m.coeff_f64(i)).collect();
        self.fft.embed(&coeffs, 2f64.powi(pt.scale_bits as i32))
    }

    pub fn decode(&self, pt: &Plaintext) -> Vec<f64> {
        self.decode_complex(pt).into_iter().map(|z| z.re).collect()
    }

    pub fn encrypt<R: RngCore>(
        &self,
        pt: &Plaintext,
        pk: &PublicKey,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let l = self.params.log_l;
        let n = self.n();
        let m = if pt.level_bits() >= l {
            pt.m.mod_down(l)
        } else {
            pt.m.lift(l)
        };
        let v = RingElement::from_i64(&sample_zo(rng, n), l);
        let e0 = RingElement::from_i64(&sample_gaussian(rng, n, self.params.sigma), l);
        let e1 = RingElement::from_i64(&sample_gaussian(rng, n, self.params.sigma), l);
        let mut c0 = self.ring.mul(&v, &pk.b, l);
        c0.add_assign(&m);
        c0.add_assign(&e0);
        let mut c1 = self.ring.mul(&v, &pk.a, l);
        c1.add_assign(&e1);
        Ok(Ciphertext {
            c0,
            c1,
            scale_bits: pt.scale_bits,
            slots: pt.slots,
            depth: Depth::default(),
        })
    }

    pub fn decrypt(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Plaintext> {
        if ct.is_exhausted() {
            return Err(Error::BudgetDepleted {
                level: ct.level_bits(),
                scale: ct.scale_bits,
            });
        }
        let mut m = ct.c1.mul_ternary(&sk.coeffs);
        m.add_assign(&ct.c0);
        Ok(Plaintext {
            m,
            scale_bits: ct.scale_bits,
            slots: ct.slots,
        })
    }

    pub fn encrypt_values<R: RngCore>(
        &self,
        values: &[f64],
        pk: &PublicKey,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let pt = self.encode(values, self.params.log_p, self.params.log_l)?;
        self.encrypt(&pt, pk, rng)
    }

    pub fn decrypt_values(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Vec<f64>> {
        Ok(self.decode(&self.decrypt(ct, sk)?))
    }

    fn switch_key<R: RngCore>(&self, sk: &SecretKey, target: &[i64], rng: &mut R) -> KeySwitchKey {
        let l = self.params.log_l;
        let q = 2 * l;
        let n = self.n();
        let a = sample_uniform(rng, n, q);
        let e = RingElement::from_i64(&sample_gaussian(rng, n, self.params.sigma), q);
        let mut b = a.mul_ternary(&sk.coeffs).neg();
        b.add_assign(&e);
        b.add_assign(&RingElement::from_i64(target, q).shl(l));
        KeySwitchKey::new(b, a)
    }

    /// Rotation key for the automorphism `X -> X^g`.
    pub fn galois_key<R: RngCore>(&self, sk: &SecretKey, g: usize, rng: &mut R) -> KeySwitchKey {
        let s = sk.as_ring(64).automorphism(g);
        let target: Vec<i64> = (0..self.n())
            .map(|i| s.coeff_i128(i).unwrap() as i64)
            .collect();
        self.switch_key(sk, &target, rng)
    }

    /// Generates all keys deterministically from `seed`.
    ///
    /// Rotation keys cover every power of two below the slot count in both
    /// directions, plus conjugation.
    pub fn keygen(&self, seed: u64) -> Result<KeySet> {
        self.params.validate_for_keygen()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = self.n();
        let l = self.params.log_l;
        let secret = SecretKey::from_coeffs(sample_hwt(&mut rng, n, self.params.h));

        let a = sample_uniform(&mut rng, n, l);
        let e = RingElement::from_i64(&sample_gaussian(&mut rng, n, self.params.sigma), l);
        let mut b = a.mul_ternary(&secret.coeffs).neg();
        b.add_assign(&e);
        let public = PublicKey { b, a };

        let s_sq = negacyclic_square(&secret.coeffs);
        let evaluation = EvaluationKey(self.switch_key(&secret, &s_sq, &mut rng));

        let mut rotation = RotationKeySet::empty();
        let mut amount = 1;
        while amount < self.slots() {
            let g = self.galois_right(amount);
            rotation.insert(
                RotationDirection::Right,
                amount,
                self.galois_key(&secret, g, &mut rng),
            );
            let g = self.galois_left(amount);
            rotation.insert(
                RotationDirection::Left,
                amount,
                self.galois_key(&secret, g, &mut rng),
            );
            amount <<= 1;
        }
        rotation.set_conjugation(Some(self.galois_key(&secret, self.galois_conj(), &mut rng)));
        Ok(KeySet {
            secret,
            public,
            evaluation,
            rotation,
        })
    }
}

fn negacyclic_square(s: &[i8]) -> Vec<i64> {
    let n = s.len();
    let nz: Vec<(usize, i64)> = s
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0)
        .map(|(i, &c)| (i, c as i64))
        .collect();
    let mut out = vec![0i64; n];
    for &(i, a) in &nz {
        for &(j, b) in &nz {
            let k = i + j;
            if k < n {
                out[k] += a * b;
            } else {
                out[k - n] -= a * b;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Arc<CkksContext> {
        CkksContext::new(CkksParams::new(6, 200, 40, 20).unwrap()).unwrap()
    }

    #[test]
    fn encrypt_decrypt_roundtrip() {
        let ctx = small();
        let keys = ctx.keygen(1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let vals: Vec<f64> = (0..ctx.slots()).map(|i| (i as f64 - 10.0) / 7.0).collect();
        let ct = ctx.encrypt_values(&vals, &keys.public, &mut rng).unwrap();
        let out = ctx.decrypt_values(&ct, &keys.secret).unwrap();
        for (a, b) in vals.iter().zip(&out) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn secret_has_exact_weight() {
        let ctx = small();
        let keys = ctx.keygen(9).unwrap();
        assert_eq!(keys.secret.hamming_weight(), ctx.params().h);
    }

    #[test]
    fn keygen_is_deterministic() {
        let ctx = small();
        let a = ctx.keygen(5).unwrap();
        let b = ctx.keygen(5).unwrap();
        assert_eq!(a.secret, b.secret);
        assert_eq!(a.public, b.public);
        assert_eq!(a.evaluation, b.evaluation);
    }

    #[test]
    fn encoding_overflow_is_reported() {
        let ctx = small();
        let err = ctx.encode(&[2f64.powi(170)], 40, 200).unwrap_err();
        assert!(matches!(err, Error::EncodingOverflow { .. }));
    }

    #[test]
    fn galois_elements_invert() {
        let ctx = small();
        let two_n = 2 * ctx.n();
        for r in [1, 2, 4, 8] {
            assert_eq!(ctx.galois_left(r) * ctx.galois_right(r) % two_n, 1);
        }
    }
}
