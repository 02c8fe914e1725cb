//! CSV ingestion and cleartext preprocessing.
//!
//! `covariates.csv`: header, `sample_id` then one column per covariate.
//! `pheno.csv`: `sample_id,pheno` with phenotype 0 or 1.
//! `snps.csv`: `sample_id` then one dosage column per SNP, values 0, 1, 2
//! or `NA`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use hegwas::oracle::{inverse_checked, SyntheticData};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPaths {
    pub covariates: PathBuf,
    pub pheno: PathBuf,
    pub snps: PathBuf,
}

impl InputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            covariates: dir.join("covariates.csv"),
            pheno: dir.join("pheno.csv"),
            snps: dir.join("snps.csv"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RawInputs {
    pub sample_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    pub covariates: DMatrix<f64>,
    pub pheno: Vec<f64>,
    pub snp_ids: Vec<String>,
    /// Dosages with `NaN` for missing calls.
    pub snps: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// Intercept column followed by z-scored covariates.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Mean-imputed, z-scored dosages.
    pub s: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub snp_ids: Vec<String>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, String, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io {
                path: path.to_path_buf(),
                source: io,
            },
            other => CliError::Input(format!("{}: {other:?}", path.display())),
        })?;
    let csv_err = |line: u64, msg: String| CliError::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header[0].is_empty() {
        return Err(csv_err(1, "missing header row".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(csv_err(
                line,
                format!("expected {} columns, found {}", header.len(), rec.len()),
            ));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(csv_err(line, "empty sample id".into()));
        }
        rows.push((line, id, rec.iter().skip(1).map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_f64(path: &Path, line: u64, col: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Csv {
            path: path.to_path_buf(),
            line,
            msg: format!("column `{col}`: `{v}` is not a finite number"),
        })
}

/// Maps each sample of `reference` to its row in `rows`.
fn align(
    path: &Path,
    reference: &[String],
    rows: &[(u64, String, Vec<String>)],
) -> Result<Vec<usize>> {
    let mut index = HashMap::new();
    for (i, (line, id, _)) in rows.iter().enumerate() {
        if index.insert(id.as_str(), i).is_some() {
            return Err(CliError::Csv {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("duplicate sample id `{id}`"),
            });
        }
    }
    if rows.len() != reference.len() {
        return Err(CliError::Input(format!(
            "{}: {} samples, covariates have {}",
            path.display(),
            rows.len(),
            reference.len()
        )));
    }
    reference
        .iter()
        .map(|id| {
            index.get(id.as_str()).copied().ok_or_else(|| {
                CliError::Input(format!("{}: sample `{id}` missing", path.display()))
            })
        })
        .collect()
}

pub fn read_inputs(paths: &InputPaths) -> Result<RawInputs> {
    let cov = read_table(&paths.covariates)?;
    let n = cov.rows.len();
    if n == 0 {
        return Err(CliError::Input(format!("{}: no samples", paths.covariates.display())));
    }
    let covariate_names: Vec<String> = cov.header[1..].to_vec();
    let mut covariates = DMatrix::zeros(n, covariate_names.len());
    let mut seen = HashMap::new();
    for (i, (line, id, vals)) in cov.rows.iter().enumerate() {
        if seen.insert(id.clone(), *line).is_some() {
            return Err(CliError::Csv {
                path: paths.covariates.clone(),
                line: *line,
                msg: format!("duplicate sample id `{id}`"),
            });
        }
        for (j, v) in vals.iter().enumerate() {
            covariates[(i, j)] = parse_f64(&paths.covariates, *line, &covariate_names[j], v)?;
        }
    }
    let sample_ids: Vec<String> = cov.rows.iter().map(|r| r.1.clone()).collect();

    let ph = read_table(&paths.pheno)?;
    if ph.header.len() != 2 {
        return Err(CliError::Csv {
            path: paths.pheno.clone(),
            line: 1,
            msg: format!("expected `sample_id,pheno`, found {} columns", ph.header.len()),
        });
    }
    let order = align(&paths.pheno, &sample_ids, &ph.rows)?;
    let pheno = order
        .iter()
        .map(|&r| {
            let (line, _, vals) = &ph.rows[r];
            match vals[0].as_str() {
                "0" => Ok(0.0),
                "1" => Ok(1.0),
                other => Err(CliError::Csv {
                    path: paths.pheno.clone(),
                    line: *line,
                    msg: format!("phenotype must be 0 or 1, found `{other}`"),
                }),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let sn = read_table(&paths.snps)?;
    let snp_ids: Vec<String> = sn.header[1..].to_vec();
    let order = align(&paths.snps, &sample_ids, &sn.rows)?;
    let mut snps = DMatrix::zeros(n, snp_ids.len());
    for (i, &r) in order.iter().enumerate() {
        let (line, _, vals) = &sn.rows[r];
        for (j, v) in vals.iter().enumerate() {
            snps[(i, j)] = match v.as_str() {
                "NA" | "na" | "" => f64::NAN,
                "0" => 0.0,
                "1" => 1.0,
                "2" => 2.0,
                other => {
                    return Err(CliError::Csv {
                        path: paths.snps.clone(),
                        line: *line,
                        msg: format!("SNP `{}`: dosage must be 0, 1, 2 or NA, found `{other}`", snp_ids[j]),
                    })
                }
            };
        }
    }
    Ok(RawInputs {
        sample_ids,
        covariate_names,
        covariates,
        pheno,
        snp_ids,
        snps,
    })
}

/// Centers and scales to unit population variance; a constant column
/// becomes zero.
pub fn zscore(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    col.iter()
        .map(|v| if sd > 1e-12 { (v - mean) / sd } else { 0.0 })
        .collect()
}

/// Imputes missing dosages with the column mean.
pub fn impute_mean(col: &[f64]) -> Vec<f64> {
    let observed: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
    let mean = if observed.is_empty() {
        0.0
    } else {
        observed.iter().sum::<f64>() / observed.len() as f64
    };
    col.iter().map(|&v| if v.is_nan() { mean } else { v }).collect()
}

pub fn preprocess(raw: &RawInputs) -> Result<Preprocessed> {
    let n = raw.sample_ids.len();
    let d = raw.covariates.ncols();
    let mut x = DMatrix::from_element(n, d + 1, 1.0);
    for j in 0..d {
        let col: Vec<f64> = raw.covariates.column(j).iter().copied().collect();
        for (i, v) in zscore(&col).into_iter().enumerate() {
            x[(i, j + 1)] = v;
        }
    }
    let xtx_inv = inverse_checked(&(x.transpose() * &x)).map_err(|e| {
        CliError::Input(format!(
            "covariate matrix is not invertible ({e}); covariates: {}",
            raw.covariate_names.join(", ")
        ))
    })?;
    let mut s = DMatrix::zeros(n, raw.snps.ncols());
    for j in 0..raw.snps.ncols() {
        let col: Vec<f64> = raw.snps.column(j).iter().copied().collect();
        for (i, v) in zscore(&impute_mean(&col)).into_iter().enumerate() {
            s[(i, j)] = v;
        }
    }
    Ok(Preprocessed {
        x,
        y: DVector::from_vec(raw.pheno.clone()),
        s,
        xtx_inv,
        snp_ids: raw.snp_ids.clone(),
    })
}

/// Writes a synthetic dataset in the three input formats.
pub fn write_synthetic(dir: &Path, data: &SyntheticData) -> Result<InputPaths> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let paths = InputPaths::in_dir(dir);
    let n = data.dataset.n();
    let write = |path: &Path, header: Vec<String>, row: &dyn Fn(usize) -> Vec<String>| -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Input(e.to_string()))?;
        w.write_record(&header).map_err(|e| CliError::Input(e.to_string()))?;
        for i in 0..n {
            let mut rec = vec![format!("s{i:04}")];
            rec.extend(row(i));
            w.write_record(&rec).map_err(|e| CliError::Input(e.to_string()))?;
        }
        w.flush().map_err(CliError::io(path))
    };
    let cov = &data.covariates;
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..cov.ncols()).map(|j| format!("cov{j}")));
    write(&paths.covariates, header, &|i| {
        (0..cov.ncols()).map(|j| format!("{}", cov[(i, j)])).collect()
    })?;
    write(&paths.pheno, vec!["sample_id".into(), "pheno".into()], &|i| {
        vec![format!("{}", data.dataset.y[i] as u8)]
    })?;
    let dos = &data.dosages;
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..dos.ncols()).map(|j| format!("rs{j}")));
    write(&paths.snps, header, &|i| {
        (0..dos.ncols()).map(|j| format!("{}", dos[(i, j)] as u8)).collect()
    })?;
    Ok(paths)
}
