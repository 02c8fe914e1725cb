//! Canonical-embedding encoder.
//!
//! Slot `j` of a message polynomial `m` is `m(zeta^(5^j))` with
//! `zeta = exp(i*pi/N)`. The transforms below evaluate and invert that map
//! in `O(N log N)` using the rotation-group ordering, so that the Galois
//! automorphism `X -> X^5` shifts slots left by one.

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct SpecialFft {
    n: usize,
    slots: usize,
    /// `5^j mod 2N` for `j < N/2`.
    rot_group: Vec<usize>,
    /// `exp(2*pi*i*j / 2N)` for `j <= 2N`.
    ksi: Vec<Complex64>,
}

fn bit_reverse_permute(v: &mut [Complex64]) {
    let n = v.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            v.swap(i, j);
        }
    }
}

impl SpecialFft {
    pub fn new(n: usize) -> Self {
        let m = 2 * n;
        let slots = n / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = (g * 5) % m;
        }
        let ksi = (0..=m)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64))
            .collect();
        Self {
            n,
            slots,
            rot_group,
            ksi,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn rot_group(&self) -> &[usize] {
        &self.rot_group
    }

    /// `vals[j] <- sum_i vals[i] * zeta^(5^j * i)` over `i < N/2`.
    pub fn forward(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        bit_reverse_permute(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * (m / lenq);
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len <<= 1;
        }
    }

    /// Inverse of [`SpecialFft::forward`].
    pub fn backward(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        let mut len = size;
        while len >= 2 {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * (m / lenq);
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        bit_reverse_permute(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Real coefficient vector (unrounded, already scaled) for a slot vector.
    pub fn embed_inverse(&self, values: &[Complex64], scale: f64) -> Vec<f64> {
        assert!(values.len() <= self.slots);
        let mut u = vec![Complex64::new(0.0, 0.0); self.slots];
        u[..values.len()].copy_from_slice(values);
        self.backward(&mut u);
        let mut coeffs = vec![0.0; self.n];
        for (i, z) in u.iter().enumerate() {
            coeffs[i] = z.re * scale;
            coeffs[i + self.slots] = z.im * scale;
        }
        coeffs
    }

    /// Slot values of a real coefficient vector, divided by `scale`.
    pub fn embed(&self, coeffs: &[f64], scale: f64) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.n);
        let mut u: Vec<Complex64> = (0..self.slots)
            .map(|i| Complex64::new(coeffs[i], coeffs[i + self.slots]) / scale)
            .collect();
        self.forward(&mut u);
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the canonical embedding at `zeta^(5^j)`.
    fn naive_embed(coeffs: &[f64]) -> Vec<Complex64> {
        let n = coeffs.len();
        let m = 2 * n;
        let mut g = 1usize;
        let mut out = Vec::new();
        for _ in 0..n / 2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &c) in coeffs.iter().enumerate() {
                let e = (g * k) % m;
                acc += Complex64::from_polar(c, PI * e as f64 / n as f64);
            }
            out.push(acc);
            g = (g * 5) % m;
        }
        out
    }

    #[test]
    fn fast_embedding_matches_direct_evaluation() {
        let n = 32;
        let fft = SpecialFft::new(n);
        let coeffs: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let fast = fft.embed(&coeffs, 1.0);
        let slow = naive_embed(&coeffs);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn inverse_roundtrips() {
        let n = 64;
        let fft = SpecialFft::new(n);
        let vals: Vec<Complex64> = (0..n / 2)
            .map(|i| Complex64::new(i as f64 * 0.1, -(i as f64) * 0.05))
            .collect();
        let coeffs = fft.embed_inverse(&vals, 1.0);
        let back = fft.embed(&coeffs, 1.0);
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_vector_is_constant_polynomial() {
        let n = 16;
        let fft = SpecialFft::new(n);
        let ones = vec![Complex64::new(1.0, 0.0); n / 2];
        let coeffs = fft.embed_inverse(&ones, 1024.0);
        assert!((coeffs[0] - 1024.0).abs() < 1e-9);
        for c in &coeffs[1..] {
            assert!(c.abs() < 1e-9);
        }
    }
}
