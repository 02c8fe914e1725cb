use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scheme parameters. All moduli are powers of two; `log_l` is the fresh
/// ciphertext modulus and evaluation keys live modulo `2^(2 * log_l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CkksParams {
    pub log_n: u32,
    pub log_l: u32,
    /// Rescale amount after ciphertext-ciphertext products; also the default
    /// encoding scale.
    pub log_p: u32,
    /// Rescale amount after plaintext products (masks and constants).
    pub log_p_small: u32,
    pub sigma: f64,
    /// Hamming weight of the secret.
    pub h: usize,
}

impl CkksParams {
    pub fn new(log_n: u32, log_l: u32, log_p: u32, log_p_small: u32) -> Result<Self> {
        let p = Self {
            log_n,
            log_l,
            log_p,
            log_p_small,
            sigma: 3.2,
            h: 64.min(1 << log_n),
        };
        p.validate()?;
        Ok(p)
    }

    /// Desk-scale parameters for the full pipeline on up to 32 samples.
    pub fn desk() -> Self {
        Self {
            log_n: 13,
            log_l: 1600,
            log_p: 45,
            log_p_small: 30,
            sigma: 3.2,
            h: 64,
        }
    }

    /// The parameter set of the original HEAAN deployment (`2^16` slots).
    pub fn reference_deployment() -> Self {
        Self {
            log_n: 17,
            log_l: 2440,
            log_p: 45,
            log_p_small: 10,
            sigma: 3.2,
            h: 64,
        }
    }

    pub fn n(&self) -> usize {
        1 << self.log_n
    }

    pub fn slot_count(&self) -> usize {
        self.n() / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(2..=17).contains(&self.log_n) {
            return bad(format!("log_n = {} outside 2..=17", self.log_n));
        }
        if self.log_p_small == 0 || self.log_p_small > self.log_p {
            return bad(format!(
                "need 0 < log_p_small ({}) <= log_p ({})",
                self.log_p_small, self.log_p
            ));
        }
        if self.log_p >= self.log_l {
            return bad(format!("need log_p ({}) < log_l ({})", self.log_p, self.log_l));
        }
        if self.h == 0 || self.h > self.n() {
            return bad(format!("secret weight h = {} must be in 1..={}", self.h, self.n()));
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma = {} must be positive", self.sigma));
        }
        Ok(())
    }

    /// Checks performed before key generation: a fresh ciphertext at scale
    /// `log_p` must survive at least one product and rescale.
    pub fn validate_for_keygen(&self) -> Result<()> {
        self.validate()?;
        if self.log_l < 2 * self.log_p {
            return Err(Error::InvalidParams(format!(
                "log_l = {} cannot hold one rescale by log_p = {}",
                self.log_l, self.log_p
            )));
        }
        Ok(())
    }

    /// Number of product-then-rescale steps a fresh ciphertext supports.
    pub fn mult_depth(&self) -> u32 {
        (self.log_l - self.log_p) / self.log_p
    }

    /// Bit bound on the largest exact integer product the evaluator forms:
    /// a `log_l`-bit operand against a `2 log_l`-bit key, or an accumulated
    /// tensor of two `log_l`-bit operands.
    pub(crate) fn max_product_bits(&self) -> u32 {
        3 * self.log_l + self.log_n + 12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_budgets() {
        assert!(CkksParams::new(4, 100, 40, 50).is_err());
        assert!(CkksParams::new(4, 40, 40, 10).is_err());
        assert!(CkksParams::new(4, 100, 40, 0).is_err());
        assert!(CkksParams::new(4, 100, 40, 10).is_ok());
    }

    #[test]
    fn rejects_heavy_secret() {
        let mut p = CkksParams::new(4, 100, 40, 10).unwrap();
        p.h = 17;
        assert!(p.validate().is_err());
    }

    #[test]
    fn keygen_needs_one_rescale_of_room() {
        let p = CkksParams::new(4, 60, 40, 10).unwrap();
        assert!(p.validate_for_keygen().is_err());
    }

    #[test]
    fn slot_count_is_half_degree() {
        let p = CkksParams::desk();
        assert_eq!(p.slot_count(), 4096);
        assert_eq!(CkksParams::reference_deployment().slot_count(), 1 << 16);
    }
}
