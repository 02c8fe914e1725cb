use serde::{Deserialize, Serialize};

use super::ring::RingElement;

/// Rescales accumulated along the deepest path that produced a ciphertext,
/// split by rescale amount (`log_p` versus `log_p_small`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Depth {
    pub ct: u32,
    pub pt: u32,
}

impl Depth {
    pub fn max(self, other: Depth) -> Depth {
        Depth {
            ct: self.ct.max(other.ct),
            pt: self.pt.max(other.pt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plaintext {
    pub m: RingElement,
    pub scale_bits: u32,
    pub slots: usize,
}

impl Plaintext {
    pub fn level_bits(&self) -> u32 {
        self.m.bits()
    }
}

/// A pair `(c0, c1)` modulo `2^level_bits` with `c0 + c1 s ~ Delta m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub c0: RingElement,
    pub c1: RingElement,
    pub scale_bits: u32,
    pub slots: usize,
    pub depth: Depth,
}

impl Ciphertext {
    pub fn level_bits(&self) -> u32 {
        self.c0.bits()
    }

    pub fn log_n(&self) -> u32 {
        self.c0.n().trailing_zeros()
    }

    /// Exhausted ciphertexts can no longer be decrypted meaningfully.
    pub fn is_exhausted(&self) -> bool {
        self.level_bits() < self.scale_bits
    }

    /// Approximate in-memory footprint.
    pub fn byte_size(&self) -> usize {
        8 * (self.c0.limbs().len() + self.c1.limbs().len())
    }
}
