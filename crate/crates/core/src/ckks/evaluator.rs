//! Homomorphic operations on ciphertexts.

use std::sync::Arc;

use super::cipher::{Ciphertext, Depth, Plaintext};
use super::context::CkksContext;
use super::keys::{EvaluationKey, KeySwitchKey, RotationDirection, RotationKeySet};
use super::ring::{RingContext, RingElement};
use super::stats::OpStats;
use crate::error::{Error, Result};

/// Evaluation-side handle: holds only public material.
#[derive(Debug, Clone)]
pub struct Evaluator {
    ctx: Arc<CkksContext>,
    evk: Arc<EvaluationKey>,
    rot: Arc<RotationKeySet>,
    stats: Arc<OpStats>,
}

impl Evaluator {
    pub fn new(ctx: Arc<CkksContext>, evk: Arc<EvaluationKey>, rot: Arc<RotationKeySet>) -> Self {
        Self {
            ctx,
            evk,
            rot,
            stats: Arc::new(OpStats::default()),
        }
    }

    pub fn context(&self) -> &Arc<CkksContext> {
        &self.ctx
    }

    pub fn stats(&self) -> &Arc<OpStats> {
        &self.stats
    }

    pub fn rotation_keys(&self) -> &RotationKeySet {
        &self.rot
    }

    pub fn slots(&self) -> usize {
        self.ctx.slots()
    }

    fn ring(&self) -> &RingContext {
        self.ctx.ring()
    }

    fn check_pair(a: &Ciphertext, b: &Ciphertext) -> Result<()> {
        if a.level_bits() != b.level_bits() {
            return Err(Error::LevelMismatch(a.level_bits(), b.level_bits()));
        }
        if a.scale_bits != b.scale_bits {
            return Err(Error::ScaleMismatch(a.scale_bits, b.scale_bits));
        }
        Ok(())
    }

    /// Brings two ciphertexts to the lower of their levels.
    pub fn align(&self, a: &Ciphertext, b: &Ciphertext) -> Result<(Ciphertext, Ciphertext)> {
        let l = a.level_bits().min(b.level_bits());
        Ok((self.mod_down_to(a, l)?, self.mod_down_to(b, l)?))
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        Self::check_pair(a, b)?;
        Ok(Ciphertext {
            c0: a.c0.add(&b.c0),
            c1: a.c1.add(&b.c1),
            scale_bits: a.scale_bits,
            slots: a.slots,
            depth: a.depth.max(b.depth),
        })
    }

    pub fn add_assign(&self, a: &mut Ciphertext, b: &Ciphertext) -> Result<()> {
        Self::check_pair(a, b)?;
        a.c0.add_assign(&b.c0);
        a.c1.add_assign(&b.c1);
        a.depth = a.depth.max(b.depth);
        Ok(())
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        Self::check_pair(a, b)?;
        Ok(Ciphertext {
            c0: a.c0.sub(&b.c0),
            c1: a.c1.sub(&b.c1),
            scale_bits: a.scale_bits,
            slots: a.slots,
            depth: a.depth.max(b.depth),
        })
    }

    /// Adds after aligning levels.
    pub fn add_any(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let (a, b) = self.align(a, b)?;
        self.add(&a, &b)
    }

    pub fn sub_any(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let (a, b) = self.align(a, b)?;
        self.sub(&a, &b)
    }

    pub fn neg(&self, a: &Ciphertext) -> Ciphertext {
        Ciphertext {
            c0: a.c0.neg(),
            c1: a.c1.neg(),
            ..a.clone()
        }
    }

    fn plain_at(pt: &Plaintext, level: u32) -> RingElement {
        if pt.level_bits() >= level {
            pt.m.mod_down(level)
        } else {
            pt.m.lift(level)
        }
    }

    pub fn add_plain(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        if a.scale_bits != pt.scale_bits {
            return Err(Error::ScaleMismatch(a.scale_bits, pt.scale_bits));
        }
        let mut out = a.clone();
        out.c0.add_assign(&Self::plain_at(pt, a.level_bits()));
        Ok(out)
    }

    pub fn sub_plain(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        if a.scale_bits != pt.scale_bits {
            return Err(Error::ScaleMismatch(a.scale_bits, pt.scale_bits));
        }
        let mut out = a.clone();
        out.c0.sub_assign(&Self::plain_at(pt, a.level_bits()));
        Ok(out)
    }

    /// Adds the real constant `c` to every slot.
    pub fn add_const(&self, a: &Ciphertext, c: f64) -> Result<Ciphertext> {
        let limit = a.level_bits() as i64 - a.scale_bits as i64 - 1;
        if !c.is_finite() || c.abs() >= 2f64.powi(limit.clamp(-1000, 1000) as i32) {
            return Err(Error::EncodingOverflow {
                magnitude: c.abs(),
                limit_bits: limit,
            });
        }
        let mut v = vec![0.0; self.ctx.n()];
        v[0] = c * 2f64.powi(a.scale_bits as i32);
        let mut out = a.clone();
        out.c0
            .add_assign(&RingElement::from_f64_rounded(&v, a.level_bits()));
        Ok(out)
    }

    fn product_room(&self, level: u32, scale: u32) -> Result<()> {
        if scale >= level {
            return Err(Error::BudgetDepleted { level, scale });
        }
        Ok(())
    }

    /// Slot-wise product with a plaintext; the scale grows by the
    /// plaintext's scale until the next rescale.
    pub fn mult_plain(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        let l = a.level_bits();
        let scale = a.scale_bits + pt.scale_bits;
        self.product_room(l, scale)?;
        let m = Self::plain_at(pt, l);
        let ring = self.ring();
        let bound = l + m.centered_bits() + ring.n().trailing_zeros();
        let k = RingContext::primes_needed(bound);
        let mr = ring.to_rns(&m, k);
        let c0 = ring.from_rns(&ring.rns_mul(&ring.to_rns(&a.c0, k), &mr), l);
        let c1 = ring.from_rns(&ring.rns_mul(&ring.to_rns(&a.c1, k), &mr), l);
        self.stats.pt_mult();
        Ok(Ciphertext {
            c0,
            c1,
            scale_bits: scale,
            slots: a.slots,
            depth: a.depth,
        })
    }

    /// Multiplies every slot by `round(c * 2^scale_bits) / 2^scale_bits`;
    /// the scale grows by `scale_bits`.
    pub fn mult_const(&self, a: &Ciphertext, c: f64, scale_bits: u32) -> Result<Ciphertext> {
        let scale = a.scale_bits + scale_bits;
        self.product_room(a.level_bits(), scale)?;
        let k = (c * 2f64.powi(scale_bits as i32)).round();
        if !k.is_finite() || k.abs() >= 9.2e18 {
            return Err(Error::EncodingOverflow {
                magnitude: c.abs(),
                limit_bits: 63 - scale_bits as i64,
            });
        }
        let k = k as i64;
        self.stats.const_mult();
        Ok(Ciphertext {
            c0: a.c0.mul_scalar(k),
            c1: a.c1.mul_scalar(k),
            scale_bits: scale,
            slots: a.slots,
            depth: a.depth,
        })
    }

    /// Multiplies by an integer without touching the scale.
    pub fn mult_int(&self, a: &Ciphertext, k: i64) -> Ciphertext {
        Ciphertext {
            c0: a.c0.mul_scalar(k),
            c1: a.c1.mul_scalar(k),
            ..a.clone()
        }
    }

    /// `(d0, d1) + round(2^-L * d * key mod 2^(l+L))` at level `l = d.bits()`.
    fn key_switch(&self, d: &RingElement, key: &KeySwitchKey) -> (RingElement, RingElement) {
        let ring = self.ring();
        let big_l = self.ctx.params().log_l;
        let l = d.bits();
        let (kb, ka) = key.rns(ring);
        let bound = d.centered_bits() + kb.bound_bits().max(ka.bound_bits()) + ring.n().trailing_zeros();
        let k = RingContext::primes_needed(bound).min(ring.max_primes());
        let dr = ring.to_rns(d, k);
        let b = ring.from_rns(&ring.rns_mul(&dr, kb), l + big_l).rescale(big_l);
        let a = ring.from_rns(&ring.rns_mul(&dr, ka), l + big_l).rescale(big_l);
        self.stats.key_switch();
        (b, a)
    }

    /// Relinearized product without rescaling.
    pub fn mult(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.inner_product(&[(a, b)])
    }

    pub fn square(&self, a: &Ciphertext) -> Result<Ciphertext> {
        self.mult(a, a)
    }

    /// `sum_i a_i * b_i` with one relinearization for the whole sum.
    pub fn inner_product(&self, pairs: &[(&Ciphertext, &Ciphertext)]) -> Result<Ciphertext> {
        let (first_a, first_b) = pairs
            .first()
            .ok_or_else(|| Error::dim("empty inner product"))?;
        let l = first_a.level_bits();
        let scale = first_a.scale_bits + first_b.scale_bits;
        let mut depth = Depth::default();
        for (a, b) in pairs {
            if a.level_bits() != l || b.level_bits() != l {
                return Err(Error::LevelMismatch(
                    l,
                    if a.level_bits() != l { a.level_bits() } else { b.level_bits() },
                ));
            }
            if a.scale_bits + b.scale_bits != scale {
                return Err(Error::ScaleMismatch(scale, a.scale_bits + b.scale_bits));
            }
            depth = depth.max(a.depth).max(b.depth);
        }
        self.product_room(l, scale)?;
        let ring = self.ring();
        let extra = 64 - (2 * pairs.len() as u64).leading_zeros();
        let k = RingContext::primes_needed(2 * l + ring.n().trailing_zeros() + extra + 1);
        let mut d0 = ring.rns_zero(k);
        let mut d1 = ring.rns_zero(k);
        let mut d2 = ring.rns_zero(k);
        for (a, b) in pairs {
            let a0 = ring.to_rns(&a.c0, k);
            let a1 = ring.to_rns(&a.c1, k);
            let (b0, b1) = if std::ptr::eq(*a, *b) {
                (a0.clone(), a1.clone())
            } else {
                (ring.to_rns(&b.c0, k), ring.to_rns(&b.c1, k))
            };
            ring.rns_mul_acc(&mut d0, &a0, &b0);
            ring.rns_mul_acc(&mut d1, &a0, &b1);
            ring.rns_mul_acc(&mut d1, &a1, &b0);
            ring.rns_mul_acc(&mut d2, &a1, &b1);
            self.stats.ct_mult();
        }
        let mut c0 = ring.from_rns(&d0, l);
        let mut c1 = ring.from_rns(&d1, l);
        let d2 = ring.from_rns(&d2, l);
        let (kb, ka) = self.key_switch(&d2, &self.evk.0);
        c0.add_assign(&kb);
        c1.add_assign(&ka);
        Ok(Ciphertext {
            c0,
            c1,
            scale_bits: scale,
            slots: first_a.slots,
            depth,
        })
    }

    /// Divides by `2^bits`, consuming `bits` of modulus. Counted as a
    /// plaintext-product rescale when `bits` equals `log_p_small` (and that
    /// differs from `log_p`), otherwise as a ciphertext-product rescale.
    pub fn rescale(&self, a: &Ciphertext, bits: u32) -> Result<Ciphertext> {
        if bits >= a.level_bits() || bits > a.scale_bits {
            return Err(Error::BudgetDepleted {
                level: a.level_bits(),
                scale: a.scale_bits,
            });
        }
        let level = a.level_bits() - bits;
        let scale = a.scale_bits - bits;
        if level < scale {
            return Err(Error::BudgetDepleted { level, scale });
        }
        let p = self.ctx.params();
        let small = bits == p.log_p_small && p.log_p_small != p.log_p;
        let mut depth = a.depth;
        if small {
            depth.pt += 1;
        } else {
            depth.ct += 1;
        }
        self.stats.rescale(small);
        Ok(Ciphertext {
            c0: a.c0.rescale(bits),
            c1: a.c1.rescale(bits),
            scale_bits: scale,
            slots: a.slots,
            depth,
        })
    }

    /// Product followed by a `log_p` rescale.
    pub fn mult_rescale(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let (a, b) = self.align(a, b)?;
        let p = self.ctx.params().log_p;
        self.rescale(&self.mult(&a, &b)?, p)
    }

    /// Plaintext product followed by a rescale by the plaintext's scale.
    pub fn mult_plain_rescale(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        self.rescale(&self.mult_plain(a, pt)?, pt.scale_bits)
    }

    /// Constant product at scale `log_p_small` followed by its rescale.
    pub fn mult_const_rescale(&self, a: &Ciphertext, c: f64) -> Result<Ciphertext> {
        let s = self.ctx.params().log_p_small;
        self.rescale(&self.mult_const(a, c, s)?, s)
    }

    /// Drops to a lower modulus without changing the message.
    pub fn mod_down_to(&self, a: &Ciphertext, level: u32) -> Result<Ciphertext> {
        if level == a.level_bits() {
            return Ok(a.clone());
        }
        if level > a.level_bits() || level < a.scale_bits {
            return Err(Error::BudgetDepleted {
                level,
                scale: a.scale_bits,
            });
        }
        Ok(Ciphertext {
            c0: a.c0.mod_down(level),
            c1: a.c1.mod_down(level),
            ..a.clone()
        })
    }

    fn apply_galois(&self, a: &Ciphertext, g: usize, key: &KeySwitchKey) -> Ciphertext {
        let c0 = a.c0.automorphism(g);
        let c1 = a.c1.automorphism(g);
        let (kb, ka) = self.key_switch(&c1, key);
        Ciphertext {
            c0: c0.add(&kb),
            c1: ka,
            ..a.clone()
        }
    }

    fn rotate_dir(&self, a: &Ciphertext, amount: usize, dir: RotationDirection) -> Result<Ciphertext> {
        let s = self.slots();
        let r = amount % s;
        self.stats.rotation(match dir {
            RotationDirection::Right => r as i64,
            RotationDirection::Left => -(r as i64),
        });
        let mut out = a.clone();
        let mut bit = 1usize;
        while bit < s {
            if r & bit != 0 {
                let key = self.rot.get(dir, bit).ok_or(Error::MissingRotationKey {
                    direction: match dir {
                        RotationDirection::Right => "right",
                        RotationDirection::Left => "left",
                    },
                    amount: bit,
                })?;
                let g = match dir {
                    RotationDirection::Right => self.ctx.galois_right(bit),
                    RotationDirection::Left => self.ctx.galois_left(bit),
                };
                out = self.apply_galois(&out, g, key);
            }
            bit <<= 1;
        }
        Ok(out)
    }

    /// Cyclic right rotation: slot `i` moves to slot `i + amount`.
    pub fn rotate(&self, a: &Ciphertext, amount: usize) -> Result<Ciphertext> {
        self.rotate_dir(a, amount, RotationDirection::Right)
    }

    /// Cyclic left rotation: slot `i + amount` moves to slot `i`.
    pub fn rotate_left(&self, a: &Ciphertext, amount: usize) -> Result<Ciphertext> {
        self.rotate_dir(a, amount, RotationDirection::Left)
    }

    /// Slot-wise complex conjugation.
    pub fn conjugate(&self, a: &Ciphertext) -> Result<Ciphertext> {
        let key = self.rot.conjugation().ok_or(Error::MissingConjugationKey)?;
        self.stats.conjugation();
        Ok(self.apply_galois(a, self.ctx.galois_conj(), key))
    }
}
