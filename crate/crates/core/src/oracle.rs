//! Cleartext reference implementations and accuracy reporting.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gwas::DENOMINATOR_FLOOR;
use crate::logreg::logistic7_plain;

#[derive(Debug, Clone, PartialEq)]
pub struct CleartextDataset {
    /// `n x (d+1)`, first column all ones.
    pub x: DMatrix<f64>,
    /// `n x k` SNP matrix.
    pub s: DMatrix<f64>,
    /// Binary phenotype.
    pub y: DVector<f64>,
}

impl CleartextDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of covariates excluding the intercept.
    pub fn d(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn k(&self) -> usize {
        self.s.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.x.ncols() == 0 || self.s.nrows() != n || self.y.len() != n {
            return Err(Error::dim(format!(
                "X is {}x{}, S is {}x{}, y has {}",
                n,
                self.x.ncols(),
                self.s.nrows(),
                self.s.ncols(),
                self.y.len()
            )));
        }
        if self.x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::dim("first column of X must be all ones"));
        }
        if self.y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::dim("phenotype must be binary"));
        }
        Ok(())
    }

    /// Same samples and covariates, SNP columns `range` only.
    pub fn snp_subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            x: self.x.clone(),
            s: self.s.columns(range.start, range.len()).into_owned(),
            y: self.y.clone(),
        }
    }
}

/// Dense inverse via LU with partial pivoting, rejecting singular or badly
/// conditioned inputs and verifying `A * inv ~ I`.
pub fn inverse_checked(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::dim("inverse of a non-square matrix"));
    }
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= f64::EPSILON * smax * a.nrows() as f64 {
        return Err(Error::Numerical(
            "matrix is singular; remove constant or collinear covariates".into(),
        ));
    }
    let cond = smax / smin;
    if cond > 1e8 {
        log::warn!("ill-conditioned matrix, condition number {cond:.3e}");
    }
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("LU inversion failed".into()))?;
    let resid = (a * &inv - DMatrix::identity(a.nrows(), a.ncols())).amax();
    if resid >= 1e-8 {
        return Err(Error::Numerical(format!(
            "inverse residual {resid:.3e} exceeds 1e-8"
        )));
    }
    Ok(inv)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `sum y_i (beta . x_i) - sum log(1 + e^(beta . x_i))`.
pub fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &yi)| {
            // log(1 + e^e) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct ExactFit {
    pub beta: DVector<f64>,
    pub log_likelihood: Vec<f64>,
    /// Set when the coefficients blow up (separable data).
    pub diverged: bool,
}

/// Newton-Raphson with the exact Hessian `X^T W X`.
pub fn oracle_logreg_exact(x: &DMatrix<f64>, y: &DVector<f64>, iters: usize) -> Result<ExactFit> {
    oracle_logreg_exact_damped(x, y, iters, 1.0)
}

/// As [`oracle_logreg_exact`] with each Newton step scaled by `step`.
pub fn oracle_logreg_exact_damped(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    iters: usize,
    step: f64,
) -> Result<ExactFit> {
    let mut beta = DVector::zeros(x.ncols());
    let mut ll = vec![log_likelihood(x, y, &beta)];
    let mut diverged = false;
    for _ in 0..iters {
        let p = (x * &beta).map(sigmoid);
        let w = p.map(|v| v * (1.0 - v));
        let g = x.transpose() * (y - &p);
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let h = x.transpose() * xw;
        let delta = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => {
                diverged = true;
                break;
            }
        };
        beta += delta * step;
        ll.push(log_likelihood(x, y, &beta));
        if beta.amax() > 30.0 || !beta.iter().all(|v| v.is_finite()) {
            diverged = true;
            break;
        }
    }
    Ok(ExactFit {
        beta,
        log_likelihood: ll,
        diverged,
    })
}

#[derive(Debug, Clone)]
pub struct ApproxFit {
    /// `beta^(0) .. beta^(kappa)`.
    pub betas: Vec<DVector<f64>>,
    /// Probabilities computed in the last iteration (at `beta^(kappa-1)`).
    pub p_prev: DVector<f64>,
    /// Exact log-likelihood at each `beta^(i)`.
    pub log_likelihood: Vec<f64>,
}

impl ApproxFit {
    pub fn beta(&self) -> &DVector<f64> {
        self.betas.last().unwrap()
    }
}

/// The encrypted algorithm in the clear: degree-7 sigmoid and the fixed
/// Hessian bound, `beta <- beta + 4 (X^T X)^{-1} X^T (y - p)`.
pub fn oracle_logreg_approx(x: &DMatrix<f64>, y: &DVector<f64>, kappa: usize) -> Result<ApproxFit> {
    if kappa == 0 {
        return Err(Error::InvalidParams("at least one iteration is required".into()));
    }
    let hinv = inverse_checked(&(x.transpose() * x))? * 4.0;
    let mut beta = DVector::zeros(x.ncols());
    let mut betas = vec![beta.clone()];
    let mut ll = vec![log_likelihood(x, y, &beta)];
    let mut p_prev = DVector::zeros(x.nrows());
    for _ in 0..kappa {
        let p = (x * &beta).map(logistic7_plain);
        beta = &beta + &hinv * (x.transpose() * (y - &p));
        p_prev = p;
        betas.push(beta.clone());
        ll.push(log_likelihood(x, y, &beta));
    }
    Ok(ApproxFit {
        betas,
        p_prev,
        log_likelihood: ll,
    })
}

/// Newton iterates of `x <- x (2 - w x)` from `guess`.
pub fn inverse_newton(w: f64, iters: usize, guess: f64) -> f64 {
    let mut x = guess;
    for _ in 0..iters {
        x *= 2.0 - w * x;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInverse {
    Exact,
    Newton { iters: usize, guess: f64 },
}

impl WeightInverse {
    fn apply(&self, w: f64) -> f64 {
        match *self {
            WeightInverse::Exact => 1.0 / w,
            WeightInverse::Newton { iters, guess } => inverse_newton(w, iters, guess),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GwasStats {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub effects: Vec<f64>,
    pub std_err: Vec<f64>,
    pub p_values: Vec<f64>,
}

/// Two-sided Wald p-value.
pub fn wald_p_value(effect: f64, std_err: f64) -> f64 {
    if !(effect.is_finite() && std_err.is_finite() && std_err > 0.0) {
        return f64::NAN;
    }
    erfc(effect.abs() / (std_err * std::f64::consts::SQRT_2))
}

impl GwasStats {
    /// Derives effects, standard errors and p-values; denominators at or
    /// below the GWAS floor yield NaN entries.
    pub fn from_parts(numerator: Vec<f64>, denominator: Vec<f64>) -> Self {
        let mut effects = Vec::with_capacity(numerator.len());
        let mut std_err = Vec::with_capacity(numerator.len());
        let mut p_values = Vec::with_capacity(numerator.len());
        for (&num, &den) in numerator.iter().zip(&denominator) {
            if den > DENOMINATOR_FLOOR && den.is_finite() {
                let b = num / den;
                let se = (1.0 / den).sqrt();
                effects.push(b);
                std_err.push(se);
                p_values.push(wald_p_value(b, se));
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

    pub fn flagged(&self) -> Vec<usize> {
        (0..self.effects.len())
            .filter(|&i| !self.effects[i].is_finite())
            .collect()
    }
}

fn z_vector(ds: &CleartextDataset, beta: &DVector<f64>, p: &DVector<f64>, inv: WeightInverse) -> (DVector<f64>, DVector<f64>) {
    let w = p.map(|v| v * (1.0 - v));
    let winv = w.map(|v| inv.apply(v));
    let z = &ds.x * beta + winv.component_mul(&(&ds.y - p));
    (w, z)
}

/// Semi-parallel statistics with the `W`-weighted projection
/// `S* = S - X (X^T W X)^{-1} X^T W S`.
pub fn oracle_gwas_original(
    ds: &CleartextDataset,
    beta: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<GwasStats> {
    let (w, z) = z_vector(ds, beta, p, WeightInverse::Exact);
    let wd = DMatrix::from_diagonal(&w);
    let xtw = ds.x.transpose() * &wd;
    let inv = inverse_checked(&(&xtw * &ds.x))?;
    let proj = &ds.x * inv * &xtw;
    let s_star = &ds.s - &proj * &ds.s;
    let z_star = &z - &proj * &z;
    let wz = w.component_mul(&z_star);
    let numerator: Vec<f64> = s_star.column_iter().map(|c| c.dot(&wz)).collect();
    let denominator: Vec<f64> = s_star
        .column_iter()
        .map(|c| c.iter().zip(w.iter()).map(|(s, wi)| wi * s * s).sum())
        .collect();
    Ok(GwasStats::from_parts(numerator, denominator))
}

/// `M = I - X (X^T X)^{-1} X^T`.
pub fn projection(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = inverse_checked(&(x.transpose() * x))?;
    Ok(DMatrix::identity(x.nrows(), x.nrows()) - x * inv * x.transpose())
}

/// Statistics with the unweighted projection `M`: `S' = M S`, `z' = M z`,
/// numerator `S'^T (w * z')`, denominator `colsum(w * S' * S')`.
pub fn oracle_gwas_modified(
    ds: &CleartextDataset,
    beta: &DVector<f64>,
    p: &DVector<f64>,
    inverse: WeightInverse,
) -> Result<GwasStats> {
    let (w, z) = z_vector(ds, beta, p, inverse);
    let m = projection(&ds.x)?;
    Ok(modified_statistics(&m, &w, &z, &ds.s))
}

pub fn modified_statistics(m: &DMatrix<f64>, w: &DVector<f64>, z: &DVector<f64>, s: &DMatrix<f64>) -> GwasStats {
    let zp = m * z;
    let sp = m * s;
    let wz = w.component_mul(&zp);
    let numerator: Vec<f64> = sp.column_iter().map(|c| c.dot(&wz)).collect();
    let denominator: Vec<f64> = sp
        .column_iter()
        .map(|c| c.iter().zip(w.iter()).map(|(s, wi)| wi * s * s).sum())
        .collect();
    GwasStats::from_parts(numerator, denominator)
}

/// Cleartext twin of the encrypted pipeline: approximate logistic
/// regression for `kappa` iterations, Newton inverse of `w`, modified
/// statistics.
pub fn oracle_pipeline(
    ds: &CleartextDataset,
    kappa: usize,
    inverse_iters: usize,
    inverse_guess: f64,
) -> Result<GwasStats> {
    let fit = oracle_logreg_approx(&ds.x, &ds.y, kappa)?;
    let beta = &fit.betas[kappa];
    oracle_gwas_modified(
        ds,
        beta,
        &fit.p_prev,
        WeightInverse::Newton {
            iters: inverse_iters,
            guess: inverse_guess,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub thresholds: Vec<f64>,
    /// Number of entries with `|test - reference| > e`, keyed by threshold.
    pub diff_counts: Vec<usize>,
    pub total: usize,
    pub fit_slope: f64,
    pub fit_intercept: f64,
    pub scatter: Vec<(f64, f64)>,
}

impl AccuracyReport {
    pub fn count_at(&self, e: f64) -> Option<usize> {
        self.thresholds
            .iter()
            .position(|&t| t == e)
            .map(|i| self.diff_counts[i])
    }

    /// Fraction of entries within `e`.
    pub fn within(&self, e: f64) -> Option<f64> {
        self.count_at(e)
            .map(|c| 1.0 - c as f64 / self.total.max(1) as f64)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("reference\ttest\n");
        for (r, t) in &self.scatter {
            out.push_str(&format!("{r}\t{t}\n"));
        }
        out
    }

    /// Table of `threshold / count / percent within`, plus the fit line.
    pub fn summary(&self) -> String {
        let mut out = String::from("threshold\tdifferent\tpercent_within\n");
        for (e, c) in self.thresholds.iter().zip(&self.diff_counts) {
            let pct = 100.0 * (1.0 - *c as f64 / self.total.max(1) as f64);
            out.push_str(&format!("{e}\t{c}\t{pct:.2}\n"));
        }
        out.push_str(&format!(
            "best fit: y = {:.6}x + {:.6} over {} entries\n",
            self.fit_slope, self.fit_intercept, self.total
        ));
        out
    }
}

/// Counts entries differing by more than each threshold and fits
/// `test = slope * reference + intercept` by least squares. Pairs with a
/// non-finite member are skipped.
pub fn compare(reference: &[f64], test: &[f64], thresholds: &[f64]) -> Result<AccuracyReport> {
    if reference.len() != test.len() {
        return Err(Error::dim(format!(
            "reference has {} entries, test has {}",
            reference.len(),
            test.len()
        )));
    }
    let scatter: Vec<(f64, f64)> = reference
        .iter()
        .zip(test)
        .filter(|(r, t)| r.is_finite() && t.is_finite())
        .map(|(&r, &t)| (r, t))
        .collect();
    let diff_counts = thresholds
        .iter()
        .map(|&e| scatter.iter().filter(|(r, t)| (t - r).abs() > e).count())
        .collect();
    let m = scatter.len() as f64;
    let (mx, my) = scatter
        .iter()
        .fold((0.0, 0.0), |(a, b), (r, t)| (a + r / m, b + t / m));
    let (sxy, sxx) = scatter.iter().fold((0.0, 0.0), |(a, b), (r, t)| {
        (a + (r - mx) * (t - my), b + (r - mx) * (r - mx))
    });
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    Ok(AccuracyReport {
        thresholds: thresholds.to_vec(),
        diff_counts,
        total: scatter.len(),
        fit_slope: slope,
        fit_intercept: my - slope * mx,
        scatter,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    num / (da * db).sqrt()
}

/// Column-wise z-scores with population standard deviation; constant
/// columns become zero.
pub fn standardize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let mean = c.sum() / n;
        let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for v in c.iter_mut() {
            *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Standardized dataset ready for the pipeline.
    pub dataset: CleartextDataset,
    /// Raw covariates before z-scoring.
    pub covariates: DMatrix<f64>,
    /// Raw dosages in `{0, 1, 2}`.
    pub dosages: DMatrix<f64>,
    /// Indices of SNPs with a planted effect.
    pub causal: Vec<usize>,
}

/// Covariates from a standard normal, dosages from `Binomial(2, maf)` with
/// `maf ~ U(0.1, 0.5)`, phenotype from a logistic model with a planted
/// effect of 0.5 on a fraction of SNPs.
pub fn synth_dataset(n: usize, d: usize, k: usize, seed: u64, effect_fraction: f64) -> SyntheticData {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let covariates = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mafs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..0.5)).collect();
    let dosages = DMatrix::from_fn(n, k, |_, j| {
        Binomial::new(2, mafs[j]).unwrap().sample(&mut rng) as f64
    });
    let n_causal = ((k as f64) * effect_fraction).round() as usize;
    let causal: Vec<usize> = rand::seq::index::sample(&mut rng, k, n_causal.min(k)).into_vec();
    let cov_effects: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let intercept = rng.gen_range(-0.3..0.3);
    let cz = standardize_columns(&covariates);
    let sz = standardize_columns(&dosages);
    let y = DVector::from_fn(n, |i, _| {
        let mut eta = intercept;
        for j in 0..d {
            eta += cov_effects[j] * cz[(i, j)];
        }
        for &j in &causal {
            eta += 0.5 * sz[(i, j)];
        }
        if rng.gen::<f64>() < sigmoid(eta) {
            1.0
        } else {
            0.0
        }
    });
    let mut x = DMatrix::from_element(n, d + 1, 1.0);
    x.columns_mut(1, d).copy_from(&cz);
    SyntheticData {
        dataset: CleartextDataset { x, s: sz, y },
        covariates,
        dosages,
        causal,
    }
}

/// Counts per threshold, as a map for serialization.
pub fn counts_map(report: &AccuracyReport) -> BTreeMap<String, usize> {
    report
        .thresholds
        .iter()
        .zip(&report.diff_counts)
        .map(|(e, c)| (e.to_string(), *c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_newton_matches_hand_iterates() {
        assert_eq!(inverse_newton(0.25, 1, 3.0), 3.75);
        assert_eq!(inverse_newton(0.25, 2, 3.0), 3.984375);
        assert_eq!(inverse_newton(0.25, 3, 3.0), 3.99993896484375);
        assert!((inverse_newton(0.2, 3, 3.0) - 5.0).abs() < 0.15);
    }

    #[test]
    fn compare_identical_is_perfect() {
        let v: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let r = compare(&v, &v, &[0.1, 0.01, 0.005]).unwrap();
        assert_eq!(r.diff_counts, vec![0, 0, 0]);
        assert!((r.fit_slope - 1.0).abs() < 1e-12);
        assert!(r.fit_intercept.abs() < 1e-12);
    }

    #[test]
    fn compare_offset_counts() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let t: Vec<f64> = v.iter().map(|x| x + 0.02).collect();
        let r = compare(&v, &t, &[0.1, 0.01]).unwrap();
        assert_eq!(r.count_at(0.01), Some(10));
        assert_eq!(r.count_at(0.1), Some(0));
        assert!(r.summary().contains("0.1\t0\t100.00"));
    }

    #[test]
    fn compare_rejects_length_mismatch() {
        assert!(compare(&[1.0], &[1.0, 2.0], &[0.1]).is_err());
    }

    #[test]
    fn spearman_of_monotone_map_is_one() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x.powi(3)).collect();
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_of_intercept_is_centering() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let m = projection(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 0.75 } else { -0.25 };
                assert!((m[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn synthetic_dosages_are_genotypes() {
        let a = synth_dataset(20, 2, 10, 3, 0.2);
        let b = synth_dataset(20, 2, 10, 3, 0.2);
        assert_eq!(a.dataset, b.dataset);
        assert!(a.dosages.iter().all(|&v| v == 0.0 || v == 1.0 || v == 2.0));
        a.dataset.validate().unwrap();
    }

    #[test]
    fn singular_gram_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inverse_checked(&(x.transpose() * &x)), Err(Error::Numerical(_))));
    }
}
