//! Word-sized modular arithmetic and the negacyclic NTT used to multiply
//! big-coefficient ring elements through a chain of auxiliary primes.
//!
//! All auxiliary primes lie in `(2^61, 2^62)` and are `1 mod 2^18`, so a
//! single prime list serves every ring degree up to `2^17`.

use std::sync::OnceLock;

/// `2N` for the largest supported ring degree.
pub(crate) const MAX_TWO_N: u64 = 1 << 18;

/// Lower bound on `log2` of every auxiliary prime.
pub(crate) const PRIME_BITS_FLOOR: u32 = 61;

/// A prime modulus below `2^62` with a Barrett constant for 124-bit inputs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Modulus {
    pub p: u64,
    /// floor(2^124 / p); fits in 63 bits because p > 2^61.
    barrett: u64,
}

impl Modulus {
    pub fn new(p: u64) -> Self {
        debug_assert!(p < (1 << 62) && p > (1 << 61));
        let barrett = ((1u128 << 124) / p as u128) as u64;
        Self { p, barrett }
    }

    /// Reduces `x < 2^124`.
    #[inline(always)]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let q = (((x >> 60) as u64 as u128 * self.barrett as u128) >> 64) as u64;
        let mut r = (x.wrapping_sub(q as u128 * self.p as u128)) as u64;
        while r >= self.p {
            r -= self.p;
        }
        r
    }

    #[inline(always)]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    pub fn inv(&self, a: u64) -> u64 {
        self.pow(a, self.p - 2)
    }

    /// Shoup companion of a fixed multiplicand `w`.
    #[inline(always)]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.p as u128) as u64
    }

    /// `a * w mod p` for a precomputed Shoup pair, `a < 2^64`.
    #[inline(always)]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let q = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(q.wrapping_mul(self.p));
        if r >= self.p {
            r - self.p
        } else {
            r
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for sp in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % sp == 0 {
            return n == sp;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Returns the first `count` auxiliary primes, descending from `2^62`.
pub(crate) fn aux_primes(count: usize) -> Vec<u64> {
    static CACHE: OnceLock<std::sync::Mutex<Vec<u64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| std::sync::Mutex::new(Vec::new()));
    let mut primes = cache.lock().unwrap();
    let mut candidate = primes
        .last()
        .copied()
        .unwrap_or((1u64 << 62) + 1)
        - MAX_TWO_N;
    while primes.len() < count {
        assert!(candidate > (1 << 61), "ran out of auxiliary primes");
        if is_prime(candidate) {
            primes.push(candidate);
        }
        candidate -= MAX_TWO_N;
    }
    primes[..count].to_vec()
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

/// Twiddle tables for one prime and one ring degree.
#[derive(Debug)]
pub(crate) struct NttTable {
    pub modulus: Modulus,
    n: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

impl NttTable {
    pub fn new(p: u64, n: usize) -> Self {
        assert!(n.is_power_of_two() && (2 * n as u64) <= MAX_TWO_N);
        let modulus = Modulus::new(p);
        let two_n = 2 * n as u64;
        // primitive 2N-th root of unity
        let mut psi = 0;
        for g in 2u64.. {
            let cand = modulus.pow(g, (p - 1) / two_n);
            if modulus.pow(cand, n as u64) == p - 1 {
                psi = cand;
                break;
            }
        }
        let log_n = n.trailing_zeros();
        let psi_inv = modulus.inv(psi);
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = modulus.mul(pw, psi);
            pw_inv = modulus.mul(pw_inv, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64);
        Self {
            modulus,
            n,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        }
    }

    /// In-place forward negacyclic NTT (Cooley-Tukey, bit-reversed output).
    pub fn forward(&self, a: &mut [u64]) {
        let md = &self.modulus;
        let p = md.p;
        let n = self.n;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let j1 = 2 * i * t;
                let w = self.psi_rev[m + i];
                let ws = self.psi_rev_shoup[m + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = md.mul_shoup(*y, w, ws);
                    let s = u + v;
                    *x = if s >= p { s - p } else { s };
                    *y = if u >= v { u - v } else { u + p - v };
                }
            }
            m <<= 1;
        }
    }

    /// In-place inverse negacyclic NTT (Gentleman-Sande), including `1/N`.
    pub fn backward(&self, a: &mut [u64]) {
        let md = &self.modulus;
        let p = md.p;
        let n = self.n;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.psi_inv_rev[h + i];
                let ws = self.psi_inv_rev_shoup[h + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let s = u + v;
                    *x = if s >= p { s - p } else { s };
                    let d = if u >= v { u - v } else { u + p - v };
                    *y = md.mul_shoup(d, w, ws);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = md.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes_are_ntt_friendly() {
        let ps = aux_primes(8);
        for p in &ps {
            assert!(is_prime(*p));
            assert_eq!((p - 1) % MAX_TWO_N, 0);
            assert!(*p > (1 << 61) && *p < (1 << 62));
        }
        let mut sorted = ps.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), ps.len());
    }

    #[test]
    fn miller_rabin_known_values() {
        assert!(is_prime(2305843009213693951)); // 2^61 - 1
        assert!(!is_prime(2305843009213693953));
        assert!(!is_prime(1));
        assert!(is_prime(97));
    }

    #[test]
    fn barrett_matches_u128_mod() {
        let p = aux_primes(1)[0];
        let m = Modulus::new(p);
        let samples = [0u128, 1, p as u128 - 1, (p as u128 - 1) * (p as u128 - 1), (1u128 << 123) + 12345];
        for x in samples {
            assert_eq!(m.reduce_u128(x) as u128, x % p as u128);
        }
    }

    #[test]
    fn ntt_multiplication_is_negacyclic() {
        let n = 16;
        let p = aux_primes(1)[0];
        let table = NttTable::new(p, n);
        let md = table.modulus;
        let a: Vec<u64> = (0..n as u64).map(|i| i * 3 + 1).collect();
        let b: Vec<u64> = (0..n as u64).map(|i| (i * i) % 7).collect();
        let mut expect = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let prod = md.mul(a[i], b[j]);
                let k = i + j;
                if k < n {
                    expect[k] = md.add(expect[k], prod);
                } else {
                    expect[k - n] = md.sub(expect[k - n], prod);
                }
            }
        }
        let mut fa = a.clone();
        let mut fb = b.clone();
        table.forward(&mut fa);
        table.forward(&mut fb);
        let mut fc: Vec<u64> = fa.iter().zip(&fb).map(|(x, y)| md.mul(*x, *y)).collect();
        table.backward(&mut fc);
        assert_eq!(fc, expect);
    }
}
