//! Key material and the samplers used to produce it.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::ring::{RingContext, RingElement, RnsPoly};

/// Secret `s` with exactly `h` coefficients in `{-1, +1}`.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i8>,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey")
            .field("n", &self.coeffs.len())
            .field("weight", &self.hamming_weight())
            .finish()
    }
}

impl SecretKey {
    pub fn from_coeffs(coeffs: Vec<i8>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[i8] {
        &self.coeffs
    }

    pub fn hamming_weight(&self) -> usize {
        self.coeffs.iter().filter(|&&c| c != 0).count()
    }

    pub fn as_ring(&self, bits: u32) -> RingElement {
        let v: Vec<i64> = self.coeffs.iter().map(|&c| c as i64).collect();
        RingElement::from_i64(&v, bits)
    }
}

/// `(b, a)` with `b = -a s + e mod 2^L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub b: RingElement,
    pub a: RingElement,
}

/// Key-switching material `(b, a)` modulo `2^(2L)` with
/// `b = -a s + e + 2^L s'` for some target secret `s'`.
#[derive(Debug)]
pub struct KeySwitchKey {
    pub b: RingElement,
    pub a: RingElement,
    rns: OnceLock<(RnsPoly, RnsPoly)>,
}

impl Clone for KeySwitchKey {
    fn clone(&self) -> Self {
        Self::new(self.b.clone(), self.a.clone())
    }
}

impl PartialEq for KeySwitchKey {
    fn eq(&self, other: &Self) -> bool {
        self.b == other.b && self.a == other.a
    }
}

impl KeySwitchKey {
    pub fn new(b: RingElement, a: RingElement) -> Self {
        Self {
            b,
            a,
            rns: OnceLock::new(),
        }
    }

    /// NTT form of both halves over the full prime basis, cached.
    pub(crate) fn rns(&self, ring: &RingContext) -> &(RnsPoly, RnsPoly) {
        self.rns.get_or_init(|| {
            let k = ring.max_primes();
            (ring.to_rns(&self.b, k), ring.to_rns(&self.a, k))
        })
    }
}

/// Relinearization key, switching `s^2` back to `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationKey(pub KeySwitchKey);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RotationDirection {
    Right,
    Left,
}

/// Keys for power-of-two slot rotations in both directions plus the
/// conjugation automorphism.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationKeySet {
    pub(crate) right: BTreeMap<usize, KeySwitchKey>,
    pub(crate) left: BTreeMap<usize, KeySwitchKey>,
    pub(crate) conj: Option<KeySwitchKey>,
}

impl RotationKeySet {
    pub fn empty() -> Self {
        Self {
            right: BTreeMap::new(),
            left: BTreeMap::new(),
            conj: None,
        }
    }

    pub fn get(&self, dir: RotationDirection, amount: usize) -> Option<&KeySwitchKey> {
        match dir {
            RotationDirection::Right => self.right.get(&amount),
            RotationDirection::Left => self.left.get(&amount),
        }
    }

    pub fn conjugation(&self) -> Option<&KeySwitchKey> {
        self.conj.as_ref()
    }

    pub fn amounts(&self, dir: RotationDirection) -> Vec<usize> {
        match dir {
            RotationDirection::Right => self.right.keys().copied().collect(),
            RotationDirection::Left => self.left.keys().copied().collect(),
        }
    }

    pub fn insert(&mut self, dir: RotationDirection, amount: usize, key: KeySwitchKey) {
        match dir {
            RotationDirection::Right => self.right.insert(amount, key),
            RotationDirection::Left => self.left.insert(amount, key),
        };
    }

    pub fn set_conjugation(&mut self, key: Option<KeySwitchKey>) {
        self.conj = key;
    }

    /// Drops every key except the listed ones (for tests of error paths).
    pub fn without(&self, dir: RotationDirection, amount: usize) -> Self {
        let mut out = self.clone();
        match dir {
            RotationDirection::Right => out.right.remove(&amount),
            RotationDirection::Left => out.left.remove(&amount),
        };
        out
    }
}

/// Everything produced by key generation.
#[derive(Debug, Clone)]
pub struct KeySet {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub evaluation: EvaluationKey,
    pub rotation: RotationKeySet,
}

pub(crate) fn sample_hwt<R: RngCore>(rng: &mut R, n: usize, h: usize) -> Vec<i8> {
    let mut s = vec![0i8; n];
    for pos in sample(rng, n, h).into_iter() {
        s[pos] = if rng.gen::<bool>() { 1 } else { -1 };
    }
    s
}

/// Rounded Gaussian, rejecting samples beyond six standard deviations.
pub(crate) fn sample_gaussian<R: RngCore>(rng: &mut R, n: usize, sigma: f64) -> Vec<i64> {
    let normal = Normal::new(0.0, sigma).expect("sigma validated positive");
    let bound = (6.0 * sigma).ceil();
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            let r = x.round();
            if r.abs() <= bound {
                break r as i64;
            }
        })
        .collect()
}

/// Ternary with `P(0) = 1/2`, `P(+1) = P(-1) = 1/4`.
pub(crate) fn sample_zo<R: RngCore>(rng: &mut R, n: usize) -> Vec<i64> {
    (0..n)
        .map(|_| match rng.gen_range(0..4u8) {
            0 => 1,
            1 => -1,
            _ => 0,
        })
        .collect()
}

pub(crate) fn sample_uniform<R: RngCore>(rng: &mut R, n: usize, bits: u32) -> RingElement {
    let w = (bits as usize).div_ceil(64);
    let data: Vec<u64> = (0..n * w).map(|_| rng.next_u64()).collect();
    RingElement::from_limbs(n, bits, data).expect("sized above")
}
