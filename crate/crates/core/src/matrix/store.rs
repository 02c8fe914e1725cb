//! On-disk form of packed matrices: `<name>.json` manifest plus one
//! ciphertext file per member.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CcpMatrix, CpMatrix, RepMatrix, RpMatrix};
use crate::ckks::serialize::{load, read_ciphertext, save, write_ciphertext};
use crate::ckks::Ciphertext;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum PackedMatrix {
    Cp(CpMatrix),
    Ccp(CcpMatrix),
    Rp(RpMatrix),
    Rep(RepMatrix),
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    layout: String,
    rows: usize,
    cols: usize,
    col_size: usize,
    repeat: usize,
    files: Vec<String>,
}

impl PackedMatrix {
    fn parts(&self) -> (Manifest, Vec<&Ciphertext>) {
        let (layout, rows, cols, col_size, repeat, cts): (_, _, _, _, _, Vec<&Ciphertext>) = match self {
            PackedMatrix::Cp(m) => ("CP", m.rows, m.num_cols(), 0, 0, m.cols.iter().collect()),
            PackedMatrix::Ccp(m) => ("CCP", m.rows, m.num_cols, m.col_size, 0, vec![&m.ct]),
            PackedMatrix::Rp(m) => ("RP", m.rows(), m.cols, 0, 0, m.rows_ct.iter().collect()),
            PackedMatrix::Rep(m) => ("REP", m.rows(), m.cols, 0, m.repeat, m.rows_ct.iter().collect()),
        };
        (
            Manifest {
                layout: layout.into(),
                rows,
                cols,
                col_size,
                repeat,
                files: Vec::new(),
            },
            cts,
        )
    }
}

pub fn save_packed(dir: &Path, name: &str, m: &PackedMatrix) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (mut manifest, cts) = m.parts();
    for (i, ct) in cts.iter().enumerate() {
        let file = format!("{name}.{i}.ct");
        save(&dir.join(&file), *ct, |w, c| write_ciphertext(w, c))?;
        manifest.files.push(file);
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join(format!("{name}.json")), json)?;
    Ok(())
}

pub fn load_packed(dir: &Path, name: &str) -> Result<PackedMatrix> {
    let text = std::fs::read_to_string(dir.join(format!("{name}.json")))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let mut cts = m
        .files
        .iter()
        .map(|f| load(&dir.join(f), |r| read_ciphertext(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(match m.layout.as_str() {
        "CP" => PackedMatrix::Cp(CpMatrix { cols: cts, rows: m.rows }),
        "CCP" => {
            if cts.len() != 1 {
                return Err(Error::Format("CCP matrix needs exactly one ciphertext".into()));
            }
            PackedMatrix::Ccp(CcpMatrix {
                ct: cts.pop().unwrap(),
                rows: m.rows,
                col_size: m.col_size,
                num_cols: m.cols,
            })
        }
        "RP" => PackedMatrix::Rp(RpMatrix { rows_ct: cts, cols: m.cols }),
        "REP" => PackedMatrix::Rep(RepMatrix {
            rows_ct: cts,
            repeat: m.repeat,
            cols: m.cols,
        }),
        other => return Err(Error::Format(format!("unknown layout {other}"))),
    })
}
