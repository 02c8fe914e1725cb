use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use hegwas::ckks::{CkksParams, Depth, OpCounts};
use hegwas::gwas::GwasConfig;

use crate::error::{CliError, Result};
use crate::input::InputPaths;

pub const PHASES: [&str; 5] = ["preprocess", "context", "encrypt", "compute", "decrypt"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhaseStatus {
    Ok,
    Failed(String),
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub name: String,
    pub status: PhaseStatus,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ops: Option<OpCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<Depth>,
}

impl PhaseRecord {
    pub fn skipped(name: &str) -> Self {
        Self {
            name: name.into(),
            status: PhaseStatus::Skipped,
            seconds: 0.0,
            ops: None,
            depth: None,
        }
    }
}

/// Times a phase.
pub struct PhaseTimer {
    name: &'static str,
    start: Instant,
}

impl PhaseTimer {
    pub fn start(name: &'static str) -> Self {
        Self {
            name,
            start: Instant::now(),
        }
    }

    pub fn finish(self) -> PhaseRecord {
        PhaseRecord {
            name: self.name.into(),
            status: PhaseStatus::Ok,
            seconds: self.start.elapsed().as_secs_f64(),
            ops: None,
            depth: None,
        }
    }

    pub fn fail(self, err: &CliError) -> PhaseRecord {
        PhaseRecord {
            status: PhaseStatus::Failed(err.to_string()),
            ..self.finish()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub params: CkksParams,
    pub config: Option<GwasConfig>,
    pub inputs: InputPaths,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub phases: Vec<PhaseRecord>,
}

impl RunManifest {
    pub fn phase(&self, name: &str) -> Option<&PhaseRecord> {
        self.phases.iter().find(|p| p.name == name)
    }

    /// Fills in phases that never ran, in the canonical order.
    pub fn complete(&mut self) {
        let mut out = Vec::with_capacity(PHASES.len());
        for name in PHASES {
            out.push(
                self.phase(name)
                    .cloned()
                    .unwrap_or_else(|| PhaseRecord::skipped(name)),
            );
        }
        self.phases = out;
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Input(e.to_string()))?;
        std::fs::write(path, json).map_err(CliError::io(path))
    }

    /// Timing table, one row per phase.
    pub fn timing_table(&self) -> String {
        let mut s = String::from("phase\tstatus\tseconds\n");
        for p in &self.phases {
            let status = match &p.status {
                PhaseStatus::Ok => "ok".to_string(),
                PhaseStatus::Failed(m) => format!("failed: {m}"),
                PhaseStatus::Skipped => "skipped".to_string(),
            };
            s.push_str(&format!("{}\t{status}\t{:.3}\n", p.name, p.seconds));
        }
        s
    }
}

/// Operation counts and critical-path depth per phase.
pub fn ops_table(phases: &[PhaseRecord]) -> String {
    let mut s = String::from(
        "phase\tct_mults\tpt_mults\tconst_mults\trotations\tconjugations\tct_rescale_depth\tpt_rescale_depth\n",
    );
    for p in phases {
        if let Some(o) = &p.ops {
            let d = p.depth.unwrap_or_default();
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                p.name, o.ct_mults, o.pt_mults, o.const_mults, o.rotations, o.conjugations, d.ct, d.pt
            ));
        }
    }
    s
}
