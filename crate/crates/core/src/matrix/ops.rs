use std::ops::Deref;

use crate::ckks::{Ciphertext, Evaluator, Plaintext};
use crate::error::{Error, Result};

use super::{CcpMatrix, CpMatrix, RepMatrix, RpMatrix};

/// Matrix algorithms on top of an [`Evaluator`]. Every rotation it issues is
/// by a power of two.
#[derive(Debug, Clone)]
pub struct MatrixEvaluator {
    ev: Evaluator,
}

impl Deref for MatrixEvaluator {
    type Target = Evaluator;
    fn deref(&self) -> &Evaluator {
        &self.ev
    }
}

impl MatrixEvaluator {
    pub fn new(ev: Evaluator) -> Self {
        Self { ev }
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.ev
    }

    /// Plaintext mask with the given slot values at scale `log_p_small`.
    pub fn mask(&self, values: &[f64]) -> Result<Plaintext> {
        let p = self.context().params();
        self.context().encode(values, p.log_p_small, p.log_l)
    }

    fn one_hot(&self, slot: usize, value: f64) -> Result<Plaintext> {
        let mut v = vec![0.0; slot + 1];
        v[slot] = value;
        self.mask(&v)
    }

    /// Multiplies by a mask and rescales by `log_p_small`.
    pub fn apply_mask(&self, ct: &Ciphertext, mask: &Plaintext) -> Result<Ciphertext> {
        self.mult_plain_rescale(ct, mask)
    }

    /// Keeps slots `[start, start + len)` and zeroes the rest.
    pub fn mask_range(&self, ct: &Ciphertext, start: usize, len: usize) -> Result<Ciphertext> {
        let mut v = vec![0.0; start + len];
        v[start..].fill(1.0);
        self.apply_mask(ct, &self.mask(&v)?)
    }

    /// `x + rot(x, s) + rot(x, 2s) + ...` over `steps` doublings, right-rotating.
    fn rotate_add_right(&self, ct: &Ciphertext, first: usize, steps: u32) -> Result<Ciphertext> {
        let mut acc = ct.clone();
        let mut shift = first;
        for _ in 0..steps {
            let r = self.rotate(&acc, shift)?;
            self.add_assign(&mut acc, &r)?;
            shift <<= 1;
        }
        Ok(acc)
    }

    fn rotate_add_left(&self, ct: &Ciphertext, first: usize, steps: u32) -> Result<Ciphertext> {
        let mut acc = ct.clone();
        let mut shift = first;
        for _ in 0..steps {
            let r = self.rotate_left(&acc, shift)?;
            self.add_assign(&mut acc, &r)?;
            shift <<= 1;
        }
        Ok(acc)
    }

    fn log_slots(&self) -> u32 {
        self.slots().trailing_zeros()
    }

    /// Broadcasts each of the first `n` slots into its own ciphertext: mask
    /// out slot `i`, then `log2(slots)` right rotate-adds.
    pub fn replicate(&self, ct: &Ciphertext, n: usize) -> Result<Vec<Ciphertext>> {
        self.replicate_scaled(ct, n, 1.0)
    }

    /// As [`Self::replicate`], with the mask carrying an extra factor.
    pub fn replicate_scaled(&self, ct: &Ciphertext, n: usize, factor: f64) -> Result<Vec<Ciphertext>> {
        if n > self.slots() {
            return Err(Error::dim(format!("replicate of {n} > {} slots", self.slots())));
        }
        (0..n)
            .map(|i| {
                let m = self.apply_mask(ct, &self.one_hot(i, factor)?)?;
                self.rotate_add_right(&m, 1, self.log_slots())
            })
            .collect()
    }

    /// Broadcast that is only exact on slots `[0, width)`; slots beyond hold
    /// garbage. Needs `2 * width <= slots`, costs `log2(width) + 1` rotations.
    fn replicate_window(
        &self,
        ct: &Ciphertext,
        n: usize,
        width: usize,
        factor: f64,
    ) -> Result<Vec<Ciphertext>> {
        debug_assert!(width.is_power_of_two() && 2 * width <= self.slots() && n <= width);
        (0..n)
            .map(|i| {
                let m = self.apply_mask(ct, &self.one_hot(i, factor)?)?;
                // covers [i, i + width)
                let fwd = self.rotate_add_right(&m, 1, width.trailing_zeros())?;
                // and [i - width, i)
                let back = self.rotate_left(&fwd, width)?;
                self.add(&fwd, &back)
            })
            .collect()
    }

    /// Broadcasts suited to multiplying against columns of height `rows`.
    fn broadcast_for(&self, b: &Ciphertext, n: usize, rows: usize, factor: f64) -> Result<Vec<Ciphertext>> {
        let width = rows.max(n).next_power_of_two();
        if 2 * width <= self.slots() {
            self.replicate_window(b, n, width, factor)
        } else {
            self.replicate_scaled(b, n, factor)
        }
    }

    /// `sum_i a_i * b_i` after aligning every operand to the lowest level,
    /// rescaled by `log_p`.
    pub fn sum_of_products(&self, pairs: &[(&Ciphertext, &Ciphertext)]) -> Result<Ciphertext> {
        let level = pairs
            .iter()
            .flat_map(|(a, b)| [a.level_bits(), b.level_bits()])
            .min()
            .ok_or_else(|| Error::dim("empty product"))?;
        let aligned: Vec<(Ciphertext, Ciphertext)> = pairs
            .iter()
            .map(|(a, b)| Ok((self.mod_down_to(a, level)?, self.mod_down_to(b, level)?)))
            .collect::<Result<_>>()?;
        let refs: Vec<(&Ciphertext, &Ciphertext)> = aligned.iter().map(|(a, b)| (a, b)).collect();
        let prod = self.inner_product(&refs)?;
        self.rescale(&prod, self.context().params().log_p)
    }

    /// `A v` where `b` holds `v` in its first `A.num_cols()` slots.
    pub fn cp_matvec(&self, a: &CpMatrix, b: &Ciphertext) -> Result<Ciphertext> {
        self.cp_matvec_scaled(a, b, 1.0)
    }

    /// `factor * A v`, the factor riding on the broadcast masks.
    pub fn cp_matvec_scaled(&self, a: &CpMatrix, b: &Ciphertext, factor: f64) -> Result<Ciphertext> {
        if a.num_cols() == 0 {
            return Err(Error::dim("matrix without columns"));
        }
        let reps = self.broadcast_for(b, a.num_cols(), a.rows, factor)?;
        let pairs: Vec<(&Ciphertext, &Ciphertext)> = a.cols.iter().zip(&reps).collect();
        self.sum_of_products(&pairs)
    }

    pub fn cp_matmul(&self, a: &CpMatrix, b: &CpMatrix) -> Result<CpMatrix> {
        if a.num_cols() != b.rows {
            return Err(Error::dim(format!(
                "{}x{} times {}x{}",
                a.rows,
                a.num_cols(),
                b.rows,
                b.num_cols()
            )));
        }
        let cols = b
            .cols
            .iter()
            .map(|c| self.cp_matvec(a, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(CpMatrix { cols, rows: a.rows })
    }

    /// Column sums of a CCP matrix, landing at slots `j * col_size`; other
    /// slots hold partial sums.
    pub fn col_sum(&self, m: &CcpMatrix) -> Result<Ciphertext> {
        if !m.col_size.is_power_of_two() {
            return Err(Error::dim(format!("column size {} is not a power of two", m.col_size)));
        }
        self.col_sum_ct(&m.ct, m.col_size)
    }

    pub fn col_sum_ct(&self, ct: &Ciphertext, col_size: usize) -> Result<Ciphertext> {
        self.rotate_add_left(ct, 1, col_size.trailing_zeros())
    }

    /// Inner product of the first `length` slots, placed in every slot.
    /// Both inputs must be zero beyond `length`.
    pub fn dot_prod(&self, a: &Ciphertext, b: &Ciphertext, length: usize) -> Result<Ciphertext> {
        let padded = length.max(1).next_power_of_two();
        if padded > self.slots() {
            return Err(Error::dim(format!("length {length} exceeds {} slots", self.slots())));
        }
        let prod = self.sum_of_products(&[(a, b)])?;
        self.rotate_add_right(&prod, 1, self.log_slots())
    }

    /// `A v` with `A` row-packed; slot `i` of the result is row `i` dotted with `v`.
    pub fn rp_matvec(&self, a: &RpMatrix, b: &Ciphertext) -> Result<Ciphertext> {
        if a.rows() == 0 {
            return Err(Error::dim("matrix without rows"));
        }
        let mut acc: Option<Ciphertext> = None;
        for (i, row) in a.rows_ct.iter().enumerate() {
            let d = self.dot_prod(row, b, a.cols)?;
            let picked = self.mult_plain(&d, &self.one_hot(i, 1.0)?)?;
            acc = Some(match acc {
                None => picked,
                Some(x) => self.add_any(&x, &picked)?,
            });
        }
        self.rescale(&acc.unwrap(), self.context().params().log_p_small)
    }

    /// Tiles the first `next_pow2(k)` slots across the whole ciphertext.
    /// Slots beyond that block must be zero.
    pub fn duplicate(&self, ct: &Ciphertext, k: usize) -> Result<Ciphertext> {
        let block = k.max(1).next_power_of_two();
        if block > self.slots() {
            return Err(Error::dim(format!("block {block} exceeds {} slots", self.slots())));
        }
        let steps = self.log_slots() - block.trailing_zeros();
        self.rotate_add_right(ct, block, steps)
    }

    /// Columns of `A` duplicated with period `next_pow2(A.rows)`, reusable
    /// across several [`Self::cp_rep_matmul_predup`] calls.
    pub fn duplicate_columns(&self, a: &CpMatrix) -> Result<Vec<Ciphertext>> {
        a.cols.iter().map(|c| self.duplicate(c, a.rows)).collect()
    }

    /// `A B` with `A` column-packed and `B` row-expanded; the result is
    /// column-compact with `col_size = next_pow2(A.rows)`.
    pub fn cp_rep_matmul(&self, a: &CpMatrix, b: &RepMatrix) -> Result<CcpMatrix> {
        let dups = self.duplicate_columns(a)?;
        self.cp_rep_matmul_predup(&dups, a.rows, b)
    }

    pub fn cp_rep_matmul_predup(&self, a_dup: &[Ciphertext], rows: usize, b: &RepMatrix) -> Result<CcpMatrix> {
        let col_size = rows.next_power_of_two();
        if a_dup.len() != b.rows() {
            return Err(Error::dim(format!(
                "{} columns against {} rows",
                a_dup.len(),
                b.rows()
            )));
        }
        if b.repeat != col_size {
            return Err(Error::dim(format!(
                "repeat {} does not match padded height {col_size}",
                b.repeat
            )));
        }
        let pairs: Vec<(&Ciphertext, &Ciphertext)> = a_dup.iter().zip(&b.rows_ct).collect();
        Ok(CcpMatrix {
            ct: self.sum_of_products(&pairs)?,
            rows,
            col_size,
            num_cols: b.cols,
        })
    }

    /// Splits a CCP matrix into one ciphertext per column: mask column `j`'s
    /// slot range, then rotate it left by `j * col_size` in power-of-two steps.
    pub fn ccp_to_cp(&self, m: &CcpMatrix) -> Result<CpMatrix> {
        let cols = (0..m.num_cols)
            .map(|j| {
                let start = j * m.col_size;
                let mut c = self.mask_range(&m.ct, start, m.rows)?;
                let mut bit = 1usize;
                while bit <= start {
                    if start & bit != 0 {
                        c = self.rotate_left(&c, bit)?;
                    }
                    bit <<= 1;
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CpMatrix { cols, rows: m.rows })
    }
}
