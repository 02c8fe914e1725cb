//! CSV ingestion and preprocessing.

use std::path::Path;

use hegwas::oracle::synth_dataset;
use hegwas_cli::input::{preprocess, read_inputs, write_synthetic, InputPaths};
use hegwas_cli::CliError;
use nalgebra::DMatrix;

fn write(dir: &Path, cov: &str, pheno: &str, snps: &str) -> InputPaths {
    let p = InputPaths::in_dir(dir);
    std::fs::write(&p.covariates, cov).unwrap();
    std::fs::write(&p.pheno, pheno).unwrap();
    std::fs::write(&p.snps, snps).unwrap();
    p
}

const COV: &str = "sample_id,age,bmi\na,1.0,20\nb,2.0,25\nc,4.0,22\nd,3.0,30\n";
const PHENO: &str = "sample_id,pheno\nb,1\na,0\nd,1\nc,0\n";
const SNPS: &str = "sample_id,rs1,rs2\na,0,1\nb,1,NA\nc,2,2\nd,0,1\n";

#[test]
fn well_formed_inputs_align_by_sample() {
    let dir = tempfile::tempdir().unwrap();
    let raw = read_inputs(&write(dir.path(), COV, PHENO, SNPS)).unwrap();
    assert_eq!(raw.sample_ids, ["a", "b", "c", "d"]);
    assert_eq!(raw.pheno, [0.0, 1.0, 0.0, 1.0]);
    assert_eq!(raw.covariate_names, ["age", "bmi"]);
    assert!(raw.snps[(1, 1)].is_nan());
}

#[test]
fn missing_dosage_takes_the_column_mean() {
    let dir = tempfile::tempdir().unwrap();
    let pre = preprocess(&read_inputs(&write(dir.path(), COV, PHENO, SNPS)).unwrap()).unwrap();
    // rs2 imputes to 4/3; z-score by hand
    let col = [1.0, 4.0 / 3.0, 2.0, 1.0];
    let mean = col.iter().sum::<f64>() / 4.0;
    let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0).sqrt();
    for i in 0..4 {
        assert!((pre.s[(i, 1)] - (col[i] - mean) / sd).abs() < 1e-12);
    }
}

#[test]
fn bad_dosage_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let snps = "sample_id,rs1\na,0\nb,3\nc,1\nd,0\n";
    match read_inputs(&write(dir.path(), COV, PHENO, snps)) {
        Err(e @ CliError::Csv { line: 3, .. }) => {
            assert!(e.to_string().contains("snps.csv:3"), "{e}");
            assert_eq!(e.exit_code(), 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (COV, "sample_id,pheno\na,0\nb,2\nc,0\nd,1\n", SNPS, 3),
        ("sample_id,age,bmi\na,1,2\nb,x,3\nc,1,1\nd,2,2\n", PHENO, SNPS, 3),
        ("sample_id,age,bmi\na,1,2\na,2,3\nc,1,1\nd,2,2\n", PHENO, SNPS, 3),
        (COV, PHENO, "sample_id,rs1,rs2\na,0,1\nb,1\nc,2,2\nd,0,1\n", 3),
    ];
    for (cov, pheno, snps, line) in cases {
        match read_inputs(&write(dir.path(), cov, pheno, snps)) {
            Err(CliError::Csv { line: l, .. }) => assert_eq!(l, line),
            other => panic!("{other:?}"),
        }
    }
    let missing = "sample_id,pheno\na,0\nb,1\nc,0\ne,1\n";
    assert!(matches!(read_inputs(&write(dir.path(), COV, missing, SNPS)), Err(CliError::Input(_))));
    let absent = InputPaths::in_dir(&dir.path().join("nowhere"));
    assert!(matches!(read_inputs(&absent), Err(CliError::Io { .. })));
}

#[test]
fn constant_covariate_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let cov = "sample_id,age,site\na,1.0,7\nb,2.0,7\nc,4.0,7\nd,3.0,7\n";
    let err = preprocess(&read_inputs(&write(dir.path(), cov, PHENO, SNPS)).unwrap()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("not invertible") && msg.contains("site"), "{msg}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn synthetic_files_roundtrip_to_the_standardized_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dataset(24, 2, 9, 4, 0.2);
    let paths = write_synthetic(dir.path(), &data).unwrap();
    let pre = preprocess(&read_inputs(&paths).unwrap()).unwrap();
    assert!((&pre.x - &data.dataset.x).amax() < 1e-9);
    assert!((&pre.s - &data.dataset.s).amax() < 1e-9);
    assert_eq!(pre.y, data.dataset.y);
    assert_eq!(pre.snp_ids[0], "rs0");
}

#[test]
fn gram_inverse_matches_adjugate() {
    let dir = tempfile::tempdir().unwrap();
    let pre = preprocess(&read_inputs(&write(dir.path(), COV, PHENO, SNPS)).unwrap()).unwrap();
    let g = pre.x.transpose() * &pre.x;
    let m = |i: usize, j: usize| g[(i, j)];
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    let adj = DMatrix::from_fn(3, 3, |i, j| {
        let rs: Vec<usize> = (0..3).filter(|&x| x != j).collect();
        let cs: Vec<usize> = (0..3).filter(|&x| x != i).collect();
        let minor = m(rs[0], cs[0]) * m(rs[1], cs[1]) - m(rs[0], cs[1]) * m(rs[1], cs[0]);
        if (i + j) % 2 == 0 {
            minor
        } else {
            -minor
        }
    });
    assert!((&pre.xtx_inv - adj / det).amax() < 1e-10);
}
