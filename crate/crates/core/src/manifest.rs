//! Run manifests: what was computed, with which settings, and where the
//! files went.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decomp::FallbackCounts;
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub labels: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    pub periodic: Vec<bool>,
}

impl GridRecord {
    pub fn of(grid: &Grid) -> GridRecord {
        GridRecord {
            labels: grid.labels().to_vec(),
            lower: (0..grid.dim()).map(|d| grid.lower(d)).collect(),
            upper: (0..grid.dim()).map(|d| grid.upper(d)).collect(),
            counts: grid.counts().to_vec(),
            periodic: grid.periodic().to_vec(),
        }
    }

    pub fn to_grid(&self) -> Result<Grid> {
        let bounds: Vec<(f64, f64)> = self.lower.iter().copied().zip(self.upper.iter().copied()).collect();
        Grid::new(&bounds, &self.counts, &self.periodic, &self.labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub time: f64,
    /// Path relative to the manifest's directory.
    pub file: String,
}

/// Checkpoints of one value function: the full state or one subsystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub labels: Vec<String>,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackRecord {
    pub total: usize,
    pub in_tube: usize,
    pub per_subsystem: Vec<usize>,
}

impl From<&FallbackCounts> for FallbackRecord {
    fn from(f: &FallbackCounts) -> Self {
        FallbackRecord { total: f.total, in_tube: f.in_tube, per_subsystem: f.per_subsystem.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Full,
    Decomposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub mode: SolveMode,
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub grid: GridRecord,
    pub target: Vec<String>,
    pub plan: Option<String>,
    pub horizon: f64,
    pub scheme: String,
    pub cfl: f64,
    pub checkpoint_dt: Option<f64>,
    pub seed: u64,
    pub mem_cap_points: usize,
    pub dt_history: Vec<f64>,
    pub fallbacks: Option<FallbackRecord>,
    pub degenerate_subsystems: Vec<usize>,
    pub series: Vec<Series>,
}

pub const MANIFEST_FORMAT: &str = "chainreach-run-1";
pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    /// Every file the run emitted, relative to the output directory.
    pub fn files(&self) -> Vec<&str> {
        self.series
            .iter()
            .flat_map(|s| s.checkpoints.iter().map(|c| c.file.as_str()))
            .collect()
    }

    /// Fails when a listed file is absent from `dir`.
    pub fn check_files(&self, dir: &Path) -> Result<()> {
        for f in self.files() {
            if !dir.join(f).is_file() {
                return Err(Error::Format(format!("manifest lists '{f}', which does not exist")));
            }
        }
        Ok(())
    }
}

/// Checkpoint file name from model, series, time and grid signature.
pub fn checkpoint_name(model: &str, series: &str, time: f64, grid: &Grid) -> String {
    format!("{model}_{series}_t{time:+.4}_{}.rdv", grid.signature())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_grid_records() {
        let g = Grid::new(&[(-1.0, 1.0), (0.0, 2.0)], &[5, 7], &[false, true], &["a", "b"]).unwrap();
        assert_eq!(checkpoint_name("quad4", "s1", -0.5, &g), "quad4_s1_t-0.5000_5x7.rdv");
        assert_eq!(checkpoint_name("quad4", "full", 0.0, &g), "quad4_full_t+0.0000_5x7.rdv");
        let r = GridRecord::of(&g);
        assert_eq!(r.to_grid().unwrap(), g);
    }
}
