//! Encrypted matrices under four packing layouts.
//!
//! * CP: one ciphertext per column, entries in the first `rows` slots.
//! * CCP: all columns in one ciphertext, column `j` at
//!   `[j * col_size, (j + 1) * col_size)` with `col_size` a power of two.
//! * RP: one ciphertext per row.
//! * REP: one ciphertext per row, entry `j` repeated over
//!   `[j * repeat, (j + 1) * repeat)`.
//!
//! Columns are zero-padded to the next power of two at encryption time.

mod ops;
mod store;

pub use ops::MatrixEvaluator;
pub use store::{load_packed, save_packed, PackedMatrix};

use nalgebra::DMatrix;
use rand::RngCore;

use crate::ckks::{Ciphertext, CkksContext, PublicKey, SecretKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CpMatrix {
    pub cols: Vec<Ciphertext>,
    pub rows: usize,
}

impl CpMatrix {
    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Debug, Clone)]
pub struct CcpMatrix {
    pub ct: Ciphertext,
    pub rows: usize,
    pub col_size: usize,
    pub num_cols: usize,
}

#[derive(Debug, Clone)]
pub struct RpMatrix {
    pub rows_ct: Vec<Ciphertext>,
    pub cols: usize,
}

impl RpMatrix {
    pub fn rows(&self) -> usize {
        self.rows_ct.len()
    }
}

#[derive(Debug, Clone)]
pub struct RepMatrix {
    pub rows_ct: Vec<Ciphertext>,
    pub repeat: usize,
    pub cols: usize,
}

impl RepMatrix {
    pub fn rows(&self) -> usize {
        self.rows_ct.len()
    }
}

/// Slot layout of a CCP matrix with the given column height.
pub fn ccp_slots(m: &DMatrix<f64>, col_size: usize) -> Vec<f64> {
    let mut v = vec![0.0; col_size * m.ncols()];
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v[j * col_size + i] = m[(i, j)];
        }
    }
    v
}

/// Slot layout of one REP row.
pub fn rep_row_slots(row: &[f64], repeat: usize) -> Vec<f64> {
    row.iter()
        .flat_map(|&x| std::iter::repeat(x).take(repeat))
        .collect()
}

fn check_fits(ctx: &CkksContext, len: usize) -> Result<()> {
    if len > ctx.slots() {
        return Err(Error::dim(format!(
            "{len} slots needed, only {} available",
            ctx.slots()
        )));
    }
    Ok(())
}

pub fn encrypt_vector<R: RngCore>(
    ctx: &CkksContext,
    pk: &PublicKey,
    v: &[f64],
    rng: &mut R,
) -> Result<Ciphertext> {
    check_fits(ctx, v.len())?;
    ctx.encrypt_values(v, pk, rng)
}

pub fn encrypt_cp<R: RngCore>(
    ctx: &CkksContext,
    pk: &PublicKey,
    m: &DMatrix<f64>,
    rng: &mut R,
) -> Result<CpMatrix> {
    check_fits(ctx, m.nrows())?;
    let cols = m
        .column_iter()
        .map(|c| ctx.encrypt_values(c.as_slice(), pk, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(CpMatrix {
        cols,
        rows: m.nrows(),
    })
}

pub fn encrypt_ccp<R: RngCore>(
    ctx: &CkksContext,
    pk: &PublicKey,
    m: &DMatrix<f64>,
    rng: &mut R,
) -> Result<CcpMatrix> {
    let col_size = m.nrows().next_power_of_two();
    let v = ccp_slots(m, col_size);
    check_fits(ctx, v.len())?;
    Ok(CcpMatrix {
        ct: ctx.encrypt_values(&v, pk, rng)?,
        rows: m.nrows(),
        col_size,
        num_cols: m.ncols(),
    })
}

pub fn encrypt_rp<R: RngCore>(
    ctx: &CkksContext,
    pk: &PublicKey,
    m: &DMatrix<f64>,
    rng: &mut R,
) -> Result<RpMatrix> {
    check_fits(ctx, m.ncols())?;
    let rows_ct = m
        .row_iter()
        .map(|r| {
            let v: Vec<f64> = r.iter().copied().collect();
            ctx.encrypt_values(&v, pk, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RpMatrix {
        rows_ct,
        cols: m.ncols(),
    })
}

pub fn encrypt_rep<R: RngCore>(
    ctx: &CkksContext,
    pk: &PublicKey,
    m: &DMatrix<f64>,
    repeat: usize,
    rng: &mut R,
) -> Result<RepMatrix> {
    if !repeat.is_power_of_two() {
        return Err(Error::dim(format!("repeat {repeat} is not a power of two")));
    }
    check_fits(ctx, m.ncols() * repeat)?;
    let rows_ct = m
        .row_iter()
        .map(|r| {
            let row: Vec<f64> = r.iter().copied().collect();
            ctx.encrypt_values(&rep_row_slots(&row, repeat), pk, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RepMatrix {
        rows_ct,
        repeat,
        cols: m.ncols(),
    })
}

pub fn decrypt_vector(ctx: &CkksContext, sk: &SecretKey, ct: &Ciphertext, len: usize) -> Result<Vec<f64>> {
    let mut v = ctx.decrypt_values(ct, sk)?;
    v.truncate(len);
    Ok(v)
}

pub fn decrypt_cp(ctx: &CkksContext, sk: &SecretKey, m: &CpMatrix) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(m.rows, m.num_cols());
    for (j, ct) in m.cols.iter().enumerate() {
        let v = ctx.decrypt_values(ct, sk)?;
        for i in 0..m.rows {
            out[(i, j)] = v[i];
        }
    }
    Ok(out)
}

pub fn decrypt_ccp(ctx: &CkksContext, sk: &SecretKey, m: &CcpMatrix) -> Result<DMatrix<f64>> {
    let v = ctx.decrypt_values(&m.ct, sk)?;
    Ok(DMatrix::from_fn(m.rows, m.num_cols, |i, j| v[j * m.col_size + i]))
}

pub fn decrypt_rp(ctx: &CkksContext, sk: &SecretKey, m: &RpMatrix) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(m.rows(), m.cols);
    for (i, ct) in m.rows_ct.iter().enumerate() {
        let v = ctx.decrypt_values(ct, sk)?;
        for j in 0..m.cols {
            out[(i, j)] = v[j];
        }
    }
    Ok(out)
}

/// Reads entry `(i, j)` from the first slot of each repeated run.
pub fn decrypt_rep(ctx: &CkksContext, sk: &SecretKey, m: &RepMatrix) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(m.rows(), m.cols);
    for (i, ct) in m.rows_ct.iter().enumerate() {
        let v = ctx.decrypt_values(ct, sk)?;
        for j in 0..m.cols {
            out[(i, j)] = v[j * m.repeat];
        }
    }
    Ok(out)
}
