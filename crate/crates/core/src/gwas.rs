//! Semi-parallel GWAS on encrypted data.
//!
//! The server runs logistic regression on the covariates, builds the
//! projector `M = I - X (X^T X)^{-1} X^T`, and then streams SNP batches
//! through `S' = M S` to produce per-SNP numerators and denominators. The
//! client divides after decryption.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheHandle, CiphertextCache};
use crate::ckks::{Ciphertext, CkksContext, Depth, PublicKey, SecretKey};
use crate::error::{Error, Result};
use crate::logreg::{hom_logreg, LogRegInputs};
use crate::matrix::{encrypt_cp, encrypt_rep, encrypt_vector, CcpMatrix, CpMatrix, MatrixEvaluator, RepMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwasConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub kappa: usize,
    /// Real SNPs per batch.
    pub tau: usize,
    pub inverse_iters: usize,
    pub inverse_guess: f64,
    /// Pack SNP pairs into the real and imaginary parts of one slot.
    pub complex_packing: bool,
}

impl GwasConfig {
    /// Defaults with the widest batch that fits.
    pub fn new(n: usize, d: usize, k: usize, slots: usize) -> Self {
        Self {
            n,
            d,
            k,
            kappa: 3,
            tau: Self::max_tau(n, slots, true),
            inverse_iters: 3,
            inverse_guess: 3.0,
            complex_packing: true,
        }
    }

    /// `2 * slots / next_pow2(n)` with complex pairs, half that without.
    pub fn max_tau(n: usize, slots: usize, complex: bool) -> usize {
        let per_ct = slots / n.max(1).next_power_of_two();
        if complex {
            2 * per_ct
        } else {
            per_ct
        }
    }

    /// Row stride of each SNP column in the packed slots.
    pub fn col_size(&self) -> usize {
        self.n.max(1).next_power_of_two()
    }

    /// Packed columns per batch ciphertext.
    pub fn packed_cols(&self) -> usize {
        if self.complex_packing {
            self.tau / 2
        } else {
            self.tau
        }
    }

    pub fn batches(&self) -> usize {
        self.k.div_ceil(self.tau)
    }

    pub fn validate(&self, slots: usize) -> Result<()> {
        if self.n == 0 || self.kappa == 0 || self.tau == 0 {
            return Err(Error::InvalidParams("n, kappa and tau must be positive".into()));
        }
        if self.complex_packing && self.tau % 2 != 0 {
            return Err(Error::InvalidParams(format!("tau {} must be even with complex packing", self.tau)));
        }
        let max = Self::max_tau(self.n, slots, self.complex_packing);
        if self.tau > max {
            return Err(Error::InvalidParams(format!(
                "tau {} exceeds {max} SNPs per batch for n = {} and {slots} slots",
                self.tau, self.n
            )));
        }
        if self.n * self.col_size() > slots {
            return Err(Error::InvalidParams(format!(
                "n = {} needs {} slots for the projector, only {slots} available",
                self.n,
                self.n * self.col_size()
            )));
        }
        if !(self.inverse_guess > 0.0 && self.inverse_guess < 8.0) {
            return Err(Error::InvalidParams("inverse guess must lie in (0, 8)".into()));
        }
        Ok(())
    }
}

/// One batch of SNP columns, row-expanded with period `col_size`.
#[derive(Debug, Clone)]
pub struct SnpBatch {
    pub index: usize,
    pub packed: RepMatrix,
    /// Real SNPs carried, at most `tau`; the remainder is zero padding.
    pub snp_count: usize,
    pub complex: bool,
}

/// Covariate-side inputs the server needs for the prepare step.
#[derive(Debug, Clone)]
pub struct GwasInputs {
    pub logreg: LogRegInputs,
    /// `X^T` row-expanded with period `next_pow2(n)`.
    pub xt_rep: RepMatrix,
}

#[derive(Debug, Clone)]
pub struct GwasIntermediate {
    pub beta: Ciphertext,
    pub p_prev: Ciphertext,
    /// `p (1 - p)`.
    pub w: Ciphertext,
    pub w_inv: Ciphertext,
    pub z: Ciphertext,
    pub m: CpMatrix,
    pub z_prime: Ciphertext,
}

/// Everything a batch needs, tiled across the slot blocks.
#[derive(Debug, Clone)]
pub struct BatchOperands {
    pub m_dup: Vec<Ciphertext>,
    /// `w`, halved under complex packing.
    pub w_dup: Ciphertext,
    pub wz_dup: Ciphertext,
    pub n: usize,
    pub complex: bool,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub index: usize,
    pub snp_count: usize,
    pub complex: bool,
    pub numerator: Ciphertext,
    /// Even-SNP denominators under complex packing.
    pub denominator: Ciphertext,
    pub denominator_odd: Option<Ciphertext>,
}

impl BatchOutput {
    pub fn ciphertexts(&self) -> Vec<&Ciphertext> {
        let mut v = vec![&self.numerator, &self.denominator];
        v.extend(self.denominator_odd.as_ref());
        v
    }

    pub fn depth(&self) -> Depth {
        self.ciphertexts()
            .into_iter()
            .fold(Depth::default(), |d, c| d.max(c.depth))
    }
}

/// Denominators at or below this are treated as zero: a SNP with no
/// variance left after projection decrypts to noise around zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GwasResult {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub effects: Vec<f64>,
    pub std_err: Vec<f64>,
    pub p_values: Vec<f64>,
}

impl GwasResult {
    /// Divides after decryption. A denominator not above
    /// [`DENOMINATOR_FLOOR`] leaves that SNP's effect, error and p-value as NaN.
    pub fn assemble(numerator: Vec<f64>, denominator: Vec<f64>) -> Self {
        let n = numerator.len();
        let (mut effects, mut std_err, mut p_values) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (&num, &den) in numerator.iter().zip(&denominator) {
            if den.is_finite() && den > DENOMINATOR_FLOOR {
                let b = num / den;
                let se = den.recip().sqrt();
                effects.push(b);
                std_err.push(se);
                p_values.push(statrs::function::erf::erfc(b.abs() / (se * std::f64::consts::SQRT_2)));
            } else {
                effects.push(f64::NAN);
                std_err.push(f64::NAN);
                p_values.push(f64::NAN);
            }
        }
        Self {
            numerator,
            denominator,
            effects,
            std_err,
            p_values,
        }
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    /// SNPs whose statistics could not be formed.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.effects[i].is_finite()).collect()
    }
}

/// Slotwise `1 / w` by Newton's iteration `x <- x (2 - w x)` from `guess`.
/// Slots must lie in `(0, 2 / guess)`; two ciphertext levels per step
/// after the first.
pub fn inverse_slots(mev: &MatrixEvaluator, w: &Ciphertext, iters: usize, guess: f64) -> Result<Ciphertext> {
    if iters == 0 {
        return Err(Error::InvalidParams("inverse needs at least one iteration".into()));
    }
    // x1 = 2g - g^2 w, with no ciphertext product
    let g2 = guess * guess;
    let first = if g2.fract() == 0.0 && g2 < 1e15 {
        mev.mult_int(w, -(g2 as i64))
    } else {
        mev.mult_const_rescale(w, -g2)?
    };
    let mut x = mev.add_const(&first, 2.0 * guess)?;
    for _ in 1..iters {
        let wx = mev.mult_rescale(w, &x)?;
        let two_minus = mev.add_const(&mev.neg(&wx), 2.0)?;
        x = mev.mult_rescale(&x, &two_minus)?;
    }
    Ok(x)
}

/// `p (1 - p)`.
pub fn weights(mev: &MatrixEvaluator, p: &Ciphertext) -> Result<Ciphertext> {
    let p2 = mev.mult_rescale(p, p)?;
    mev.sub_any(p, &p2)
}

/// `X beta + w^{-1} (y - p)`.
pub fn compute_z(
    mev: &MatrixEvaluator,
    x: &CpMatrix,
    beta: &Ciphertext,
    y: &Ciphertext,
    p_prev: &Ciphertext,
    w_inv: &Ciphertext,
) -> Result<Ciphertext> {
    let xb = mev.cp_matvec(x, beta)?;
    let resid = mev.sub_any(y, p_prev)?;
    let scaled = mev.mult_rescale(w_inv, &resid)?;
    mev.add_any(&xb, &scaled)
}

/// `I - X (X^T X)^{-1} X^T` as an `n x n` column-packed matrix.
pub fn compute_m(mev: &MatrixEvaluator, x: &CpMatrix, xtx_inv: &CpMatrix, xt_rep: &RepMatrix) -> Result<CpMatrix> {
    if xt_rep.rows() != x.num_cols() || xt_rep.cols != x.rows {
        return Err(Error::dim(format!(
            "X^T is {}x{}, expected {}x{}",
            xt_rep.rows(),
            xt_rep.cols,
            x.num_cols(),
            x.rows
        )));
    }
    let a = mev.cp_matmul(x, xtx_inv)?;
    let hat = mev.ccp_to_cp(&mev.cp_rep_matmul(&a, xt_rep)?)?;
    let params = mev.context().params();
    let cols = hat
        .cols
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let mut e = vec![0.0; j + 1];
            e[j] = 1.0;
            let pt = mev.context().encode(&e, h.scale_bits, h.level_bits().max(params.log_p + 1))?;
            mev.add_plain(&mev.neg(h), &pt)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CpMatrix { cols, rows: x.rows })
}

pub fn orthogonalize_z(mev: &MatrixEvaluator, m: &CpMatrix, z: &Ciphertext) -> Result<Ciphertext> {
    mev.cp_matvec(m, z)
}

/// `M S` for one batch, given `M`'s columns already tiled.
pub fn orthogonalize_snps(mev: &MatrixEvaluator, m_dup: &[Ciphertext], n: usize, batch: &SnpBatch) -> Result<CcpMatrix> {
    let need = batch.packed.cols * n.next_power_of_two();
    if need > mev.slots() {
        return Err(Error::dim(format!("batch needs {need} slots, only {} available", mev.slots())));
    }
    mev.cp_rep_matmul_predup(m_dup, n, &batch.packed)
}

/// Logistic regression, weights and their inverse, `z`, `M` and `z' = M z`.
pub fn prepare(mev: &MatrixEvaluator, inputs: &GwasInputs, cfg: &GwasConfig) -> Result<GwasIntermediate> {
    cfg.validate(mev.slots())?;
    let fit = hom_logreg(mev, &inputs.logreg, cfg.kappa)?;
    log::info!("logistic regression done at level {}", fit.beta.level_bits());
    let w = weights(mev, &fit.p_prev)?;
    let w_inv = inverse_slots(mev, &w, cfg.inverse_iters, cfg.inverse_guess)?;
    let z = compute_z(mev, &inputs.logreg.x, &fit.beta, &inputs.logreg.y, &fit.p_prev, &w_inv)?;
    let m = compute_m(mev, &inputs.logreg.x, &inputs.logreg.xtx_inv, &inputs.xt_rep)?;
    let z_prime = orthogonalize_z(mev, &m, &z)?;
    log::info!("z' at level {}, depth {:?}", z_prime.level_bits(), z_prime.depth);
    Ok(GwasIntermediate {
        beta: fit.beta,
        p_prev: fit.p_prev,
        w,
        w_inv,
        z,
        m,
        z_prime,
    })
}

/// Tiles `M`, `w` and `w z'` for the batch loop.
pub fn batch_operands(mev: &MatrixEvaluator, inter: &GwasIntermediate, complex: bool) -> Result<BatchOperands> {
    let n = inter.m.rows;
    let m_dup = mev.duplicate_columns(&inter.m)?;
    // halving here turns (z z^* +- z^2) into the x^2 and y^2 sums directly
    let factor = if complex { 0.5 } else { 1.0 };
    let w_masked = mev.apply_mask(&inter.w, &mev.mask(&vec![factor; n])?)?;
    let w_dup = mev.duplicate(&w_masked, n)?;
    let wz = mev.mult_rescale(&inter.w, &inter.z_prime)?;
    let wz_dup = mev.duplicate(&wz, n)?;
    Ok(BatchOperands {
        m_dup,
        w_dup,
        wz_dup,
        n,
        complex,
    })
}

/// Numerators and denominators of one batch, at slots `c * col_size`.
pub fn batch_statistics(mev: &MatrixEvaluator, ops: &BatchOperands, batch: &SnpBatch) -> Result<BatchOutput> {
    if batch.complex != ops.complex {
        return Err(Error::InvalidParams("batch packing differs from the prepared operands".into()));
    }
    let s = orthogonalize_snps(mev, &ops.m_dup, ops.n, batch)?;
    let col_size = s.col_size;
    let num = mev.col_sum_ct(&mev.mult_rescale(&ops.wz_dup, &s.ct)?, col_size)?;
    let ws = mev.mult_rescale(&ops.w_dup, &s.ct)?;
    let (denominator, denominator_odd) = if batch.complex {
        let s_conj = mev.conjugate(&s.ct)?;
        let wss = mev.mult_rescale(&ws, &s.ct)?;
        let wsc = mev.mult_rescale(&ws, &s_conj)?;
        let even = mev.col_sum_ct(&mev.add(&wsc, &wss)?, col_size)?;
        let odd = mev.col_sum_ct(&mev.sub(&wsc, &wss)?, col_size)?;
        (even, Some(odd))
    } else {
        (mev.col_sum_ct(&mev.mult_rescale(&ws, &s.ct)?, col_size)?, None)
    };
    Ok(BatchOutput {
        index: batch.index,
        snp_count: batch.snp_count,
        complex: batch.complex,
        numerator: num,
        denominator,
        denominator_odd,
    })
}

/// Runs every batch through the cache on up to `workers` threads. Batches
/// must already be stored as one handle per packed row; each batch is
/// prefetched ahead of use and dropped from the cache once read. Outputs
/// keep batch order.
pub fn process_batches(
    mev: &MatrixEvaluator,
    ops: &BatchOperands,
    cache: &CiphertextCache,
    batches: &[CachedBatch],
    workers: usize,
) -> Result<Vec<BatchOutput>> {
    let workers = workers.clamp(1, batches.len().max(1));
    let plan: Vec<CacheHandle> = batches.iter().flat_map(|b| b.rows.iter().copied()).collect();
    cache.schedule(&plan);
    for b in batches.iter().take(workers) {
        cache.prefetch(&b.rows)?;
    }
    let run_one = |i: usize| -> Result<BatchOutput> {
        let b = &batches[i];
        let rows = b
            .rows
            .iter()
            .map(|h| cache.get(*h).map(|ct| (*ct).clone()))
            .collect::<Result<Vec<_>>>()?;
        for h in &b.rows {
            cache.remove(*h)?;
        }
        if let Some(next) = batches.get(i + workers) {
            cache.prefetch(&next.rows)?;
        }
        let batch = SnpBatch {
            index: b.index,
            packed: RepMatrix {
                rows_ct: rows,
                repeat: b.repeat,
                cols: b.cols,
            },
            snp_count: b.snp_count,
            complex: b.complex,
        };
        let res = batch_statistics(mev, ops, &batch)?;
        log::debug!("batch {} done, depth {:?}", b.index, res.depth());
        Ok(res)
    };

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<BatchOutput>>>> = Mutex::new((0..batches.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= batches.len() {
                    break;
                }
                let res = run_one(i);
                if res.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock().unwrap()[i] = Some(res);
            });
        }
    });
    let mut out = Vec::with_capacity(batches.len());
    for r in slots.into_inner().unwrap() {
        match r {
            Some(r) => out.push(r?),
            None => return Err(Error::Cache("batch abandoned after an earlier failure".into())),
        }
    }
    Ok(out)
}

/// A batch whose row ciphertexts live in the cache.
#[derive(Debug, Clone)]
pub struct CachedBatch {
    pub index: usize,
    pub rows: Vec<CacheHandle>,
    pub repeat: usize,
    pub cols: usize,
    pub snp_count: usize,
    pub complex: bool,
}

impl CachedBatch {
    pub fn store(cache: &CiphertextCache, batch: SnpBatch) -> Result<Self> {
        let SnpBatch {
            index,
            packed,
            snp_count,
            complex,
        } = batch;
        let rows = packed
            .rows_ct
            .into_iter()
            .map(|ct| cache.put(ct))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            index,
            rows,
            repeat: packed.repeat,
            cols: packed.cols,
            snp_count,
            complex,
        })
    }
}

/// Client side: encrypts `X`, `X^T`, `(X^T X)^{-1}`, `y` and a zero `beta`.
pub fn encrypt_inputs<R: RngCore>(
    ctx: &CkksContext,
    pk: &PublicKey,
    x: &DMatrix<f64>,
    xtx_inv: &DMatrix<f64>,
    y: &[f64],
    rng: &mut R,
) -> Result<GwasInputs> {
    if y.len() != x.nrows() || xtx_inv.nrows() != x.ncols() || !xtx_inv.is_square() {
        return Err(Error::dim("inconsistent design matrix, inverse and response"));
    }
    let col_size = x.nrows().next_power_of_two();
    Ok(GwasInputs {
        logreg: LogRegInputs {
            x: encrypt_cp(ctx, pk, x, rng)?,
            xtx_inv: encrypt_cp(ctx, pk, xtx_inv, rng)?,
            y: encrypt_vector(ctx, pk, y, rng)?,
            beta0: encrypt_vector(ctx, pk, &vec![0.0; x.ncols()], rng)?,
        },
        xt_rep: encrypt_rep(ctx, pk, &x.transpose(), col_size, rng)?,
    })
}

/// Client side: splits `S` into batches of `tau` SNPs and encrypts each
/// sample's row of a batch as one ciphertext.
pub fn pack_batches<R: RngCore>(
    ctx: &CkksContext,
    pk: &PublicKey,
    s: &DMatrix<f64>,
    cfg: &GwasConfig,
    rng: &mut R,
) -> Result<Vec<SnpBatch>> {
    cfg.validate(ctx.slots())?;
    if s.nrows() != cfg.n || s.ncols() != cfg.k {
        return Err(Error::dim(format!(
            "SNP matrix is {}x{}, expected {}x{}",
            s.nrows(),
            s.ncols(),
            cfg.n,
            cfg.k
        )));
    }
    let p = ctx.params();
    let col_size = cfg.col_size();
    let cols = cfg.packed_cols();
    let at = |i: usize, j: usize| if j < cfg.k { s[(i, j)] } else { 0.0 };
    (0..cfg.batches())
        .map(|b| {
            let first = b * cfg.tau;
            let rows_ct = (0..cfg.n)
                .map(|i| {
                    let mut slots = vec![Complex64::new(0.0, 0.0); cols * col_size];
                    for c in 0..cols {
                        let v = if cfg.complex_packing {
                            Complex64::new(at(i, first + 2 * c), at(i, first + 2 * c + 1))
                        } else {
                            Complex64::new(at(i, first + c), 0.0)
                        };
                        slots[c * col_size..(c + 1) * col_size].fill(v);
                    }
                    let pt = ctx.encode_complex(&slots, p.log_p, p.log_l)?;
                    ctx.encrypt(&pt, pk, rng)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SnpBatch {
                index: b,
                packed: RepMatrix {
                    rows_ct,
                    repeat: col_size,
                    cols,
                },
                snp_count: cfg.tau.min(cfg.k - first),
                complex: cfg.complex_packing,
            })
        })
        .collect()
}

/// Client side: decrypts batch outputs and restores SNP order.
pub fn decrypt_outputs(
    ctx: &CkksContext,
    sk: &SecretKey,
    cfg: &GwasConfig,
    outputs: &[BatchOutput],
) -> Result<GwasResult> {
    let col_size = cfg.col_size();
    let mut numerator = vec![f64::NAN; cfg.k];
    let mut denominator = vec![f64::NAN; cfg.k];
    for out in outputs {
        let first = out.index * cfg.tau;
        let num = ctx.decode_complex(&ctx.decrypt(&out.numerator, sk)?);
        let den = ctx.decode_complex(&ctx.decrypt(&out.denominator, sk)?);
        let mut place = |j: usize, nv: f64, dv: f64| {
            let snp = first + j;
            if j < out.snp_count && snp < cfg.k {
                numerator[snp] = nv;
                denominator[snp] = dv;
            }
        };
        if out.complex {
            let odd = out
                .denominator_odd
                .as_ref()
                .ok_or_else(|| Error::Format("complex batch without odd denominators".into()))?;
            let den_odd = ctx.decode_complex(&ctx.decrypt(odd, sk)?);
            for c in 0..out.snp_count.div_ceil(2) {
                let slot = c * col_size;
                place(2 * c, num[slot].re, den[slot].re);
                place(2 * c + 1, num[slot].im, den_odd[slot].re);
            }
        } else {
            for c in 0..out.snp_count {
                let slot = c * col_size;
                place(c, num[slot].re, den[slot].re);
            }
        }
    }
    Ok(GwasResult::assemble(numerator, denominator))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_matches_slot_budget() {
        // 2^16 slots and n = 245 give 512 real SNPs per batch
        assert_eq!(GwasConfig::max_tau(245, 1 << 16, true), 512);
        assert_eq!(GwasConfig::max_tau(245, 1 << 16, false), 256);
        assert_eq!(GwasConfig::max_tau(32, 4096, true), 256);
    }

    #[test]
    fn batch_count_rounds_up() {
        let mut c = GwasConfig::new(245, 3, 10643, 1 << 16);
        assert_eq!(c.batches(), 21);
        c.tau = 64;
        assert!(c.validate(1 << 16).is_ok());
        c.tau = 63;
        assert!(c.validate(1 << 16).is_err());
    }

    #[test]
    fn assemble_flags_bad_denominators() {
        let r = GwasResult::assemble(vec![1.0, 2.0, 3.0, 1e-8], vec![4.0, 0.0, -1.0, 1e-8]);
        assert_eq!(r.effects[0], 0.25);
        assert_eq!(r.std_err[0], 0.5);
        assert_eq!(r.flagged(), vec![1, 2, 3]);
    }
}
