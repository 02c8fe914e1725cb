//! Encrypted logistic regression with a degree-7 sigmoid and the fixed
//! Hessian bound `-X^T X / 4`.

use crate::ckks::Ciphertext;
use crate::error::{Error, Result};
use crate::matrix::{CpMatrix, MatrixEvaluator, RpMatrix};

/// Coefficients of the odd polynomial in `t = x / 8`, lowest degree first:
/// `0.5 + c1 t + c3 t^3 + c5 t^5 + c7 t^7`.
pub const SIGMOID7: [f64; 5] = [0.5, -1.73496, 4.19407, -5.43402, 2.50739];

/// Cleartext evaluation of the polynomial. It decreases in `x`: it tracks
/// `1 / (1 + e^x)`, so logistic probabilities are `sigmoid7_plain(-x)`.
pub fn sigmoid7_plain(x: f64) -> f64 {
    let t = x / 8.0;
    let t2 = t * t;
    SIGMOID7[0] + t * (SIGMOID7[1] + t2 * (SIGMOID7[2] + t2 * (SIGMOID7[3] + t2 * SIGMOID7[4])))
}

#[derive(Debug, Clone)]
pub struct LogRegInputs {
    /// `n x (d+1)` design matrix with a leading ones column.
    pub x: CpMatrix,
    /// `(X^T X)^{-1}`, computed and verified before encryption.
    pub xtx_inv: CpMatrix,
    /// Binary response in the first `n` slots.
    pub y: Ciphertext,
    /// Starting coefficients (an encryption of zeros).
    pub beta0: Ciphertext,
}

#[derive(Debug, Clone)]
pub struct LogRegOutput {
    /// Coefficients after the last iteration.
    pub beta: Ciphertext,
    /// Probabilities evaluated during the last iteration, i.e. at the
    /// coefficients of the iteration before it.
    pub p_prev: Ciphertext,
}

/// Evaluates the approximation on `t = x / 8`, already scaled.
pub fn sigmoid7_of_scaled(mev: &MatrixEvaluator, t: &Ciphertext) -> Result<Ciphertext> {
    let [c0, c1, c3, c5, c7] = SIGMOID7;
    let t2 = mev.mult_rescale(t, t)?;
    let t3 = mev.mult_rescale(&t2, t)?;
    let t4 = mev.mult_rescale(&t2, &t2)?;
    let small = mev.context().params().log_p_small;
    let lin = |a: &Ciphertext, ca: f64, b: &Ciphertext, cb: f64| -> Result<Ciphertext> {
        let x = mev.mult_const(a, ca, small)?;
        let y = mev.mult_const(b, cb, small)?;
        mev.rescale(&mev.add_any(&x, &y)?, small)
    };
    // t^4 (c5 t + c7 t^3) + (c1 t + c3 t^3) + c0
    let high = mev.mult_rescale(&t4, &lin(t, c5, &t3, c7)?)?;
    let low = lin(t, c1, &t3, c3)?;
    mev.add_const(&mev.add_any(&high, &low)?, c0)
}

/// Slotwise evaluation of the degree-7 polynomial, valid on `[-8, 8]`.
pub fn sigmoid7(mev: &MatrixEvaluator, x: &Ciphertext) -> Result<Ciphertext> {
    let t = mev.mult_const_rescale(x, 0.125)?;
    sigmoid7_of_scaled(mev, &t)
}

/// `X^T` in row-packed form, reusing the column ciphertexts of `X`.
pub fn transpose_view(x: &CpMatrix) -> RpMatrix {
    RpMatrix {
        rows_ct: x.cols.clone(),
        cols: x.rows,
    }
}

/// Approximate logistic probability `1 / (1 + e^-x)`.
pub fn logistic7_plain(x: f64) -> f64 {
    sigmoid7_plain(-x)
}

/// Runs `kappa` Newton iterations
/// `beta <- beta + 4 (X^T X)^{-1} X^T (y - p)` with `p = sigmoid7(-X beta)`.
pub fn hom_logreg(mev: &MatrixEvaluator, inputs: &LogRegInputs, kappa: usize) -> Result<LogRegOutput> {
    if kappa == 0 {
        return Err(Error::InvalidParams("at least one iteration is required".into()));
    }
    let xt = transpose_view(&inputs.x);
    let mut beta = inputs.beta0.clone();
    let mut p_prev = None;
    for it in 1..=kappa {
        let step = || -> Result<(Ciphertext, Ciphertext)> {
            // t = -X beta / 8, the scaling carried by the broadcast masks
            let t = mev.cp_matvec_scaled(&inputs.x, &beta, -0.125)?;
            let p = sigmoid7_of_scaled(mev, &t)?;
            let resid = mev.sub_any(&inputs.y, &p)?;
            let grad = mev.rp_matvec(&xt, &resid)?;
            let delta = mev.cp_matvec_scaled(&inputs.xtx_inv, &grad, 4.0)?;
            Ok((mev.add_any(&beta, &delta)?, p))
        };
        let (b, p) = step().map_err(|e| Error::IterationFailed {
            iteration: it,
            total: kappa,
            source: Box::new(e),
        })?;
        log::debug!(
            "logreg iteration {it}/{kappa}: level {} bits, depth {:?}",
            b.level_bits(),
            b.depth
        );
        beta = b;
        p_prev = Some(p);
    }
    Ok(LogRegOutput {
        beta,
        p_prev: p_prev.expect("kappa >= 1"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid7_anchor_values() {
        assert_eq!(sigmoid7_plain(0.0), 0.5);
        let at8 = 0.5 - 1.73496 + 4.19407 - 5.43402 + 2.50739;
        assert!((sigmoid7_plain(8.0) - at8).abs() < 1e-12);
        assert!((at8 - 0.03248).abs() < 1e-9);
    }

    #[test]
    fn sigmoid7_is_odd_about_half() {
        for i in 0..50 {
            let x = -8.0 + 16.0 * i as f64 / 49.0;
            assert!((sigmoid7_plain(-x) - (1.0 - sigmoid7_plain(x))).abs() < 1e-9);
        }
    }
}
