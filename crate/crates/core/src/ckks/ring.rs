//! Elements of `Z_{2^bits}[X]/(X^N + 1)` with arbitrary-precision coefficients.
//!
//! Coefficients are stored as fixed-width little-endian limb runs. Products
//! are computed exactly over the integers by reducing both operands into an
//! auxiliary prime basis, multiplying in the NTT domain and lifting the
//! result back with an explicit CRT taken modulo the target power of two.

use std::sync::{Arc, OnceLock};

use super::arith::{aux_primes, NttTable, PRIME_BITS_FLOOR};

#[inline]
fn limbs_for(bits: u32) -> usize {
    (bits as usize).div_ceil(64).max(1)
}

#[inline]
fn top_mask(bits: u32) -> u64 {
    match bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A polynomial whose `N` coefficients live in `[0, 2^bits)`.
#[derive(Clone, PartialEq, Eq)]
pub struct RingElement {
    n: usize,
    bits: u32,
    width: usize,
    data: Vec<u64>,
}

impl std::fmt::Debug for RingElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RingElement")
            .field("n", &self.n)
            .field("bits", &self.bits)
            .finish_non_exhaustive()
    }
}

impl RingElement {
    pub fn zero(n: usize, bits: u32) -> Self {
        let width = limbs_for(bits);
        Self {
            n,
            bits,
            width,
            data: vec![0; n * width],
        }
    }

    /// Builds an element from raw limbs (`n * ceil(bits/64)` words).
    pub fn from_limbs(n: usize, bits: u32, data: Vec<u64>) -> Option<Self> {
        let width = limbs_for(bits);
        if data.len() != n * width || bits == 0 {
            return None;
        }
        let mut e = Self { n, bits, width, data };
        e.normalize();
        Some(e)
    }

    /// Reduces small signed coefficients modulo `2^bits`.
    pub fn from_i64(coeffs: &[i64], bits: u32) -> Self {
        let mut e = Self::zero(coeffs.len(), bits);
        for (i, &c) in coeffs.iter().enumerate() {
            e.set_i128(i, c as i128);
        }
        e
    }

    /// Rounds each real coefficient to the nearest integer and reduces it
    /// modulo `2^bits`. Magnitudes beyond `2^63` are handled exactly through
    /// the binary exponent of the float.
    pub fn from_f64_rounded(coeffs: &[f64], bits: u32) -> Self {
        let mut e = Self::zero(coeffs.len(), bits);
        for (i, &c) in coeffs.iter().enumerate() {
            let r = c.round();
            if r.abs() < 9.0e18 {
                e.set_i128(i, r as i128);
            } else {
                e.set_big_float(i, r);
            }
        }
        e
    }

    fn set_i128(&mut self, i: usize, v: i128) {
        let w = self.width;
        let neg = v < 0;
        let mag = v.unsigned_abs();
        let slot = &mut self.data[i * w..(i + 1) * w];
        slot.fill(0);
        slot[0] = mag as u64;
        if w > 1 {
            slot[1] = (mag >> 64) as u64;
        }
        if neg {
            negate_limbs(slot);
        }
        slot[w - 1] &= top_mask(self.bits);
    }

    fn set_big_float(&mut self, i: usize, r: f64) {
        let w = self.width;
        let neg = r < 0.0;
        let bits = r.abs().to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64 - 1075;
        let mant = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
        debug_assert!(exp > 0);
        let slot = &mut self.data[i * w..(i + 1) * w];
        slot.fill(0);
        let limb = (exp / 64) as usize;
        let shift = (exp % 64) as u32;
        if limb < w {
            slot[limb] = mant << shift;
        }
        if shift > 0 && limb + 1 < w {
            slot[limb + 1] = mant >> (64 - shift);
        }
        if neg {
            negate_limbs(slot);
        }
        slot[w - 1] &= top_mask(self.bits);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn limbs(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn coeff(&self, i: usize) -> &[u64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    fn normalize(&mut self) {
        let m = top_mask(self.bits);
        let w = self.width;
        for i in 0..self.n {
            self.data[i * w + w - 1] &= m;
        }
    }

    fn is_negative(&self, i: usize) -> bool {
        let top = self.bits - 1;
        let limb = self.data[i * self.width + (top / 64) as usize];
        (limb >> (top % 64)) & 1 == 1
    }

    /// Centered value of coefficient `i` as a float.
    pub fn coeff_f64(&self, i: usize) -> f64 {
        let mut mag = self.coeff(i).to_vec();
        let neg = self.is_negative(i);
        if neg {
            negate_limbs(&mut mag);
            let w = mag.len();
            mag[w - 1] &= top_mask(self.bits);
        }
        let mut acc = 0.0f64;
        for &l in mag.iter().rev() {
            acc = acc * 18446744073709551616.0 + l as f64;
        }
        if neg {
            -acc
        } else {
            acc
        }
    }

    /// Centered value of coefficient `i` when it fits an `i128`.
    pub fn coeff_i128(&self, i: usize) -> Option<i128> {
        let neg = self.is_negative(i);
        let mut mag = self.coeff(i).to_vec();
        if neg {
            negate_limbs(&mut mag);
            let w = mag.len();
            mag[w - 1] &= top_mask(self.bits);
        }
        if mag.iter().skip(2).any(|&l| l != 0) {
            return None;
        }
        let lo = mag[0] as u128;
        let hi = mag.get(1).copied().unwrap_or(0) as u128;
        let v = (hi << 64) | lo;
        if v > i128::MAX as u128 {
            return None;
        }
        Some(if neg { -(v as i128) } else { v as i128 })
    }

    /// Largest bit length among the centered coefficient magnitudes.
    pub fn centered_bits(&self) -> u32 {
        let w = self.width;
        let mut best = 0u32;
        let mut scratch = vec![0u64; w];
        for i in 0..self.n {
            let c = self.coeff(i);
            let bl = if self.is_negative(i) {
                scratch.copy_from_slice(c);
                negate_limbs(&mut scratch);
                scratch[w - 1] &= top_mask(self.bits);
                bit_len(&scratch)
            } else {
                bit_len(c)
            };
            best = best.max(bl);
            if best >= self.bits {
                break;
            }
        }
        best
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&l| l == 0)
    }

    /// Number of nonzero coefficients.
    pub fn weight(&self) -> usize {
        (0..self.n)
            .filter(|&i| self.coeff(i).iter().any(|&l| l != 0))
            .count()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.bits, other.bits, "modulus mismatch in ring addition");
        assert_eq!(self.n, other.n);
        let w = self.width;
        for (a, b) in self.data.chunks_exact_mut(w).zip(other.data.chunks_exact(w)) {
            let mut carry = 0u64;
            for (x, &y) in a.iter_mut().zip(b) {
                let (s1, c1) = x.overflowing_add(y);
                let (s2, c2) = s1.overflowing_add(carry);
                *x = s2;
                carry = (c1 | c2) as u64;
            }
        }
        self.normalize();
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.sub_assign(other);
        out
    }

    pub fn sub_assign(&mut self, other: &Self) {
        assert_eq!(self.bits, other.bits, "modulus mismatch in ring subtraction");
        assert_eq!(self.n, other.n);
        let w = self.width;
        for (a, b) in self.data.chunks_exact_mut(w).zip(other.data.chunks_exact(w)) {
            let mut borrow = 0u64;
            for (x, &y) in a.iter_mut().zip(b) {
                let (s1, b1) = x.overflowing_sub(y);
                let (s2, b2) = s1.overflowing_sub(borrow);
                *x = s2;
                borrow = (b1 | b2) as u64;
            }
        }
        self.normalize();
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.data.chunks_exact_mut(self.width) {
            negate_limbs(c);
        }
        out.normalize();
        out
    }

    /// Multiplies every coefficient by a signed word.
    pub fn mul_scalar(&self, k: i64) -> Self {
        let mag = k.unsigned_abs();
        let mut out = self.clone();
        for c in out.data.chunks_exact_mut(self.width) {
            let mut carry = 0u128;
            for x in c.iter_mut() {
                let t = *x as u128 * mag as u128 + carry;
                *x = t as u64;
                carry = t >> 64;
            }
        }
        if k < 0 {
            for c in out.data.chunks_exact_mut(self.width) {
                negate_limbs(c);
            }
        }
        out.normalize();
        out
    }

    /// Multiplies by `2^shift`.
    pub fn shl(&self, shift: u32) -> Self {
        let mut out = Self::zero(self.n, self.bits);
        let w = self.width;
        let limb = (shift / 64) as usize;
        let s = shift % 64;
        for i in 0..self.n {
            let src = self.coeff(i);
            let dst = &mut out.data[i * w..(i + 1) * w];
            for j in (limb..w).rev() {
                let k = j - limb;
                let mut v = src[k] << s;
                if s > 0 && k > 0 {
                    v |= src[k - 1] >> (64 - s);
                }
                dst[j] = v;
            }
        }
        out.normalize();
        out
    }

    /// Reduces modulo `2^bits` for a smaller `bits`.
    pub fn mod_down(&self, bits: u32) -> Self {
        assert!(bits <= self.bits && bits > 0);
        let w = limbs_for(bits);
        let mut out = Self::zero(self.n, bits);
        for i in 0..self.n {
            out.data[i * w..(i + 1) * w].copy_from_slice(&self.coeff(i)[..w]);
        }
        out.normalize();
        out
    }

    /// Reinterprets the centered coefficients modulo a larger `2^bits`.
    pub fn lift(&self, bits: u32) -> Self {
        assert!(bits >= self.bits);
        let w = limbs_for(bits);
        let mut out = Self::zero(self.n, bits);
        for i in 0..self.n {
            let dst = &mut out.data[i * w..(i + 1) * w];
            dst[..self.width].copy_from_slice(self.coeff(i));
            if self.is_negative(i) {
                // sign-extend
                let sb = self.bits % 64;
                if sb != 0 {
                    dst[self.width - 1] |= !top_mask(self.bits);
                }
                for l in dst[self.width..].iter_mut() {
                    *l = u64::MAX;
                }
            }
        }
        out.normalize();
        out
    }

    /// `round(x / 2^shift) mod 2^(bits - shift)` coefficient-wise.
    pub fn rescale(&self, shift: u32) -> Self {
        if shift == 0 {
            return self.clone();
        }
        assert!(shift < self.bits);
        let new_bits = self.bits - shift;
        let nw = limbs_for(new_bits);
        let mut out = Self::zero(self.n, new_bits);
        let limb = (shift / 64) as usize;
        let s = shift % 64;
        let rb = shift - 1;
        for i in 0..self.n {
            let src = self.coeff(i);
            let round_bit = (src[(rb / 64) as usize] >> (rb % 64)) & 1;
            let dst = &mut out.data[i * nw..(i + 1) * nw];
            for (j, d) in dst.iter_mut().enumerate() {
                let k = j + limb;
                let lo = src.get(k).copied().unwrap_or(0);
                let hi = src.get(k + 1).copied().unwrap_or(0);
                *d = if s == 0 { lo } else { (lo >> s) | (hi << (64 - s)) };
            }
            let mut carry = round_bit;
            for d in dst.iter_mut() {
                if carry == 0 {
                    break;
                }
                let (v, c) = d.overflowing_add(carry);
                *d = v;
                carry = c as u64;
            }
        }
        out.normalize();
        out
    }

    /// Applies `X -> X^g` for odd `g`.
    pub fn automorphism(&self, g: usize) -> Self {
        let n = self.n;
        let two_n = 2 * n;
        let w = self.width;
        let mut out = Self::zero(n, self.bits);
        for i in 0..n {
            let t = (i * g) % two_n;
            let (dst, neg) = if t < n { (t, false) } else { (t - n, true) };
            let d = &mut out.data[dst * w..(dst + 1) * w];
            d.copy_from_slice(self.coeff(i));
            if neg {
                negate_limbs(d);
            }
        }
        out.normalize();
        out
    }

    /// Product with a sparse ternary element (used for decryption).
    pub fn mul_ternary(&self, ternary: &[i8]) -> Self {
        let n = self.n;
        let w = self.width;
        let mut out = Self::zero(n, self.bits);
        for (j, &t) in ternary.iter().enumerate() {
            if t == 0 {
                continue;
            }
            for i in 0..n {
                let k = i + j;
                let (dst, wrap) = if k < n { (k, false) } else { (k - n, true) };
                let negate = (t < 0) ^ wrap;
                let d = &mut out.data[dst * w..(dst + 1) * w];
                if negate {
                    sub_limbs(d, self.coeff(i));
                } else {
                    add_limbs(d, self.coeff(i));
                }
            }
        }
        out.normalize();
        out
    }
}

fn bit_len(limbs: &[u64]) -> u32 {
    for (j, &l) in limbs.iter().enumerate().rev() {
        if l != 0 {
            return 64 * j as u32 + (64 - l.leading_zeros());
        }
    }
    0
}

fn negate_limbs(c: &mut [u64]) {
    let mut carry = 1u64;
    for x in c.iter_mut() {
        let (v, o) = (!*x).overflowing_add(carry);
        *x = v;
        carry = o as u64;
    }
}

fn add_limbs(a: &mut [u64], b: &[u64]) {
    let mut carry = 0u64;
    for (x, &y) in a.iter_mut().zip(b) {
        let (s1, c1) = x.overflowing_add(y);
        let (s2, c2) = s1.overflowing_add(carry);
        *x = s2;
        carry = (c1 | c2) as u64;
    }
}

fn sub_limbs(a: &mut [u64], b: &[u64]) {
    let mut borrow = 0u64;
    for (x, &y) in a.iter_mut().zip(b) {
        let (s1, b1) = x.overflowing_sub(y);
        let (s2, b2) = s1.overflowing_sub(borrow);
        *x = s2;
        borrow = (b1 | b2) as u64;
    }
}

/// `log2(2^a + 2^b)`, nudged up against rounding.
fn log2_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (1.0 + (lo - hi).exp2()).log2() + 1e-9
}

/// An element in NTT form over the first `k` auxiliary primes.
#[derive(Clone, Debug)]
pub struct RnsPoly {
    n: usize,
    /// `residues[i]` holds the NTT evaluations modulo prime `i`.
    residues: Vec<Vec<u64>>,
    /// `log2` of a bound on the centered magnitude of the represented integers.
    log_bound: f64,
}

impl RnsPoly {
    pub fn primes(&self) -> usize {
        self.residues.len()
    }

    pub fn bound_bits(&self) -> u32 {
        self.log_bound.max(0.0).ceil() as u32
    }

    /// Restricts to the first `k` primes.
    pub fn truncated(&self, k: usize) -> RnsPoly {
        RnsPoly {
            n: self.n,
            residues: self.residues[..k].to_vec(),
            log_bound: self.log_bound,
        }
    }
}

struct CrtBasis {
    /// `(M / m_i)^{-1} mod m_i` with Shoup companions.
    inv_hat: Vec<(u64, u64)>,
    /// `M / m_i` as little-endian limbs.
    hat: Vec<Vec<u64>>,
    /// `M` as little-endian limbs.
    product: Vec<u64>,
}

fn mul_limbs_word(a: &[u64], w: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + 1);
    let mut carry = 0u128;
    for &x in a {
        let t = x as u128 * w as u128 + carry;
        out.push(t as u64);
        carry = t >> 64;
    }
    out.push(carry as u64);
    out
}

impl CrtBasis {
    fn new(tables: &[Arc<NttTable>]) -> Self {
        let k = tables.len();
        let mut hat = Vec::with_capacity(k);
        let mut inv_hat = Vec::with_capacity(k);
        for i in 0..k {
            let mut acc = vec![1u64];
            for (j, t) in tables.iter().enumerate() {
                if j != i {
                    acc = mul_limbs_word(&acc, t.modulus.p);
                }
            }
            let md = tables[i].modulus;
            let mut r = 1u64;
            for t in tables.iter().enumerate().filter(|(j, _)| *j != i) {
                r = md.mul(r, t.1.modulus.p % md.p);
            }
            let inv = md.inv(r);
            inv_hat.push((inv, md.shoup(inv)));
            hat.push(acc);
        }
        let product = mul_limbs_word(&hat[0], tables[0].modulus.p);
        Self {
            inv_hat,
            hat,
            product,
        }
    }
}

/// Precomputed material for one ring degree.
pub struct RingContext {
    n: usize,
    max_primes: usize,
    tables: Vec<Arc<NttTable>>,
    /// `pow32[i][j] = 2^(32 j) mod p_i`.
    pow32: Vec<Vec<u64>>,
    crt: Vec<OnceLock<CrtBasis>>,
}

impl std::fmt::Debug for RingContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RingContext")
            .field("n", &self.n)
            .field("max_primes", &self.max_primes)
            .finish()
    }
}

impl RingContext {
    /// Prepares enough primes for exact products of up to `max_product_bits`.
    pub fn new(n: usize, max_product_bits: u32) -> Self {
        let max_primes = Self::primes_needed(max_product_bits);
        let primes = aux_primes(max_primes);
        let tables: Vec<Arc<NttTable>> =
            primes.iter().map(|&p| Arc::new(NttTable::new(p, n))).collect();
        // enough powers for an operand of max_product_bits
        let half_limbs = 2 * limbs_for(max_product_bits) + 2;
        let pow32 = tables
            .iter()
            .map(|t| {
                let md = t.modulus;
                let base = md.pow(2, 32);
                let mut v = Vec::with_capacity(half_limbs);
                let mut acc = 1u64;
                for _ in 0..half_limbs {
                    v.push(acc);
                    acc = md.mul(acc, base);
                }
                v
            })
            .collect();
        Self {
            n,
            max_primes,
            tables,
            pow32,
            crt: (0..max_primes).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_primes(&self) -> usize {
        self.max_primes
    }

    /// Number of auxiliary primes for integers of centered magnitude below
    /// `2^bound_bits`, keeping a factor four of headroom for the CRT lift.
    pub fn primes_needed(bound_bits: u32) -> usize {
        ((bound_bits + 3) as usize).div_ceil(PRIME_BITS_FLOOR as usize)
    }

    fn crt_basis(&self, k: usize) -> &CrtBasis {
        self.crt[k - 1].get_or_init(|| CrtBasis::new(&self.tables[..k]))
    }

    /// Reduces into `k` primes and transforms to NTT form.
    pub fn to_rns(&self, a: &RingElement, k: usize) -> RnsPoly {
        assert_eq!(a.n, self.n);
        assert!(k <= self.max_primes, "requested {k} primes, context holds {}", self.max_primes);
        let bound_bits = a.centered_bits();
        let w = a.width;
        let halves = 2 * w;
        assert!(halves <= self.pow32[0].len(), "operand wider than the context supports");
        let neg: Vec<bool> = (0..a.n).map(|i| a.is_negative(i)).collect();
        let residues = (0..k)
            .map(|pi| {
                let table = &self.tables[pi];
                let md = table.modulus;
                let pw = &self.pow32[pi];
                // 2^bits mod p, subtracted from negative representatives
                let wrap = md.pow(2, a.bits as u64);
                let mut out = Vec::with_capacity(a.n);
                for i in 0..a.n {
                    let c = a.coeff(i);
                    let mut acc = 0u128;
                    for (j, &limb) in c.iter().enumerate() {
                        acc += (limb & 0xffff_ffff) as u128 * pw[2 * j] as u128;
                        acc += (limb >> 32) as u128 * pw[2 * j + 1] as u128;
                    }
                    let mut r = md.reduce_u128(acc);
                    if neg[i] {
                        r = md.sub(r, wrap);
                    }
                    out.push(r);
                }
                table.forward(&mut out);
                out
            })
            .collect();
        RnsPoly {
            n: a.n,
            residues,
            log_bound: bound_bits as f64,
        }
    }

    /// Pointwise product; the bound tracks the exact integer product.
    pub fn rns_mul(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        let k = a.primes().min(b.primes());
        let residues = (0..k)
            .map(|pi| {
                let md = self.tables[pi].modulus;
                a.residues[pi]
                    .iter()
                    .zip(&b.residues[pi])
                    .map(|(&x, &y)| md.mul(x, y))
                    .collect()
            })
            .collect();
        RnsPoly {
            n: a.n,
            residues,
            log_bound: a.log_bound + b.log_bound + self.n.trailing_zeros() as f64,
        }
    }

    /// Accumulates `a * b` into `acc`.
    pub fn rns_mul_acc(&self, acc: &mut RnsPoly, a: &RnsPoly, b: &RnsPoly) {
        let k = acc.primes();
        assert!(a.primes() >= k && b.primes() >= k);
        for pi in 0..k {
            let md = self.tables[pi].modulus;
            for ((z, &x), &y) in acc.residues[pi]
                .iter_mut()
                .zip(&a.residues[pi])
                .zip(&b.residues[pi])
            {
                *z = md.add(*z, md.mul(x, y));
            }
        }
        let term = a.log_bound + b.log_bound + self.n.trailing_zeros() as f64;
        acc.log_bound = log2_add(acc.log_bound, term);
    }

    pub fn rns_zero(&self, k: usize) -> RnsPoly {
        RnsPoly {
            n: self.n,
            residues: vec![vec![0; self.n]; k],
            log_bound: f64::NEG_INFINITY,
        }
    }

    pub fn rns_add(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        let k = a.primes().min(b.primes());
        let residues = (0..k)
            .map(|pi| {
                let md = self.tables[pi].modulus;
                a.residues[pi]
                    .iter()
                    .zip(&b.residues[pi])
                    .map(|(&x, &y)| md.add(x, y))
                    .collect()
            })
            .collect();
        RnsPoly {
            n: a.n,
            residues,
            log_bound: log2_add(a.log_bound, b.log_bound),
        }
    }

    pub fn rns_sub(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        let k = a.primes().min(b.primes());
        let residues = (0..k)
            .map(|pi| {
                let md = self.tables[pi].modulus;
                a.residues[pi]
                    .iter()
                    .zip(&b.residues[pi])
                    .map(|(&x, &y)| md.sub(x, y))
                    .collect()
            })
            .collect();
        RnsPoly {
            n: a.n,
            residues,
            log_bound: log2_add(a.log_bound, b.log_bound),
        }
    }

    /// Inverse NTT and CRT lift, returning the exact integers modulo `2^out_bits`.
    ///
    /// Panics if the prime basis is too small for the tracked bound.
    pub fn from_rns(&self, a: &RnsPoly, out_bits: u32) -> RingElement {
        let k = a.primes();
        assert!(
            Self::primes_needed(a.bound_bits()) <= k,
            "prime basis of {k} too small for {}-bit integers",
            a.bound_bits()
        );
        let basis = self.crt_basis(k);
        let ys: Vec<Vec<u64>> = (0..k)
            .map(|pi| {
                let table = &self.tables[pi];
                let md = table.modulus;
                let mut v = a.residues[pi].clone();
                table.backward(&mut v);
                let (inv, inv_s) = basis.inv_hat[pi];
                for x in v.iter_mut() {
                    *x = md.mul_shoup(*x, inv, inv_s);
                }
                v
            })
            .collect();
        let recips: Vec<f64> = self.tables[..k]
            .iter()
            .map(|t| 1.0 / t.modulus.p as f64)
            .collect();
        let w = limbs_for(out_bits);
        let mut out = RingElement::zero(self.n, out_bits);
        let hats: Vec<&[u64]> = basis
            .hat
            .iter()
            .map(|h| &h[..w.min(h.len())])
            .collect();
        let prod = &basis.product[..w.min(basis.product.len())];
        let mut acc = vec![0u64; w];
        for c in 0..self.n {
            acc.fill(0);
            let mut frac = 0.0f64;
            for pi in 0..k {
                let y = ys[pi][c];
                frac += y as f64 * recips[pi];
                let mut carry = 0u128;
                let h = hats[pi];
                for (j, slot) in acc.iter_mut().enumerate() {
                    let hv = h.get(j).copied().unwrap_or(0);
                    let t = *slot as u128 + y as u128 * hv as u128 + carry;
                    *slot = t as u64;
                    carry = t >> 64;
                }
            }
            let v = frac.round() as u64;
            if v != 0 {
                let mut borrow = 0u128;
                for (j, slot) in acc.iter_mut().enumerate() {
                    let pv = prod.get(j).copied().unwrap_or(0);
                    let t = v as u128 * pv as u128 + borrow;
                    let (r, b) = slot.overflowing_sub(t as u64);
                    *slot = r;
                    borrow = (t >> 64) + b as u128;
                }
            }
            out.data[c * w..(c + 1) * w].copy_from_slice(&acc);
        }
        out.normalize();
        out
    }

    /// Exact product reduced modulo `2^out_bits`.
    pub fn mul(&self, a: &RingElement, b: &RingElement, out_bits: u32) -> RingElement {
        let bound = a.centered_bits() + b.centered_bits() + self.n.trailing_zeros();
        let k = Self::primes_needed(bound);
        let ar = self.to_rns(a, k);
        let br = self.to_rns(b, k);
        self.from_rns(&self.rns_mul(&ar, &br), out_bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_roundtrip_through_limbs() {
        let e = RingElement::from_i64(&[-3, 0, 7, i64::MIN + 1], 200);
        assert_eq!(e.coeff_i128(0), Some(-3));
        assert_eq!(e.coeff_i128(2), Some(7));
        assert_eq!(e.coeff_i128(3), Some(i64::MIN as i128 + 1));
        assert_eq!(e.centered_bits(), 63);
    }

    #[test]
    fn big_float_coefficients_are_exact() {
        let v = 2f64.powi(100) * 1.5;
        let e = RingElement::from_f64_rounded(&[v, -v], 180);
        assert_eq!(e.coeff_f64(0), v);
        assert_eq!(e.coeff_f64(1), -v);
    }

    #[test]
    fn rescale_rounds_to_nearest() {
        let e = RingElement::from_i64(&[5, -5, 6, -6, 7], 70);
        let r = e.rescale(2);
        let got: Vec<i128> = (0..5).map(|i| r.coeff_i128(i).unwrap()).collect();
        // 1.25 -> 1, -1.25 -> -1, 1.5 -> 2, -1.5 -> -1, 1.75 -> 2
        assert_eq!(got, vec![1, -1, 2, -1, 2]);
        assert_eq!(r.bits(), 68);
    }

    #[test]
    fn lift_preserves_centered_values() {
        let e = RingElement::from_i64(&[-9, 4], 65);
        let l = e.lift(300);
        assert_eq!(l.coeff_i128(0), Some(-9));
        assert_eq!(l.coeff_i128(1), Some(4));
    }

    #[test]
    fn automorphism_composes() {
        let coeffs: Vec<i64> = (0..16).map(|i| i * 2 - 7).collect();
        let e = RingElement::from_i64(&coeffs, 64);
        let twice = e.automorphism(5).automorphism(5);
        assert_eq!(twice, e.automorphism(25));
        assert_eq!(e.automorphism(31).automorphism(31), e);
    }

    #[test]
    fn small_product_matches_i128_schoolbook() {
        let n = 8;
        let ctx = RingContext::new(n, 400);
        let a: Vec<i64> = vec![3, -1, 4, -1, 5, -9, 2, 6];
        let b: Vec<i64> = vec![-2, 7, 1, 8, -2, 8, 1, -8];
        let mut expect = [0i128; 8];
        for i in 0..n {
            for j in 0..n {
                let p = a[i] as i128 * b[j] as i128;
                if i + j < n {
                    expect[i + j] += p;
                } else {
                    expect[i + j - n] -= p;
                }
            }
        }
        let got = ctx.mul(&RingElement::from_i64(&a, 90), &RingElement::from_i64(&b, 90), 90);
        for i in 0..n {
            assert_eq!(got.coeff_i128(i), Some(expect[i]));
        }
    }
}
