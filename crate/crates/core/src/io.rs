//! On-disk artifacts: prior plans, mission results, and quality reports.
//!
//! Everything is JSON with a stable field order, so identical runs produce
//! byte-identical files. Step wall times are deliberately not persisted
//! (they are the only nondeterministic part of a mission).

use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::metrics::QualityReport;
use crate::prior::{PriorPlan, Trajectory};
use crate::realtime::{MissionResult, ViewRecord};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::path::Path;

/// Serialized prior plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub seed: u64,
    pub config: ConfigFile,
    pub views: Vec<ViewRecord>,
    pub trajectory: Trajectory,
    pub n_samples: usize,
    pub uncoverable_samples: usize,
    pub candidates_generated: usize,
}

impl PlanFile {
    pub fn from_plan(plan: &PriorPlan, config: ConfigFile, seed: u64) -> PlanFile {
        PlanFile {
            seed,
            config,
            views: plan
                .views
                .iter()
                .map(|v| ViewRecord {
                    id: v.id,
                    position: v.position,
                    orientation: v.orientation,
                    rig_slot: v.rig_slot,
                })
                .collect(),
            trajectory: plan.trajectory.clone(),
            n_samples: plan.samples.len(),
            uncoverable_samples: plan.uncoverable_samples.len(),
            candidates_generated: plan.candidates_generated,
        }
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Parse {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_results(path: impl AsRef<Path>, result: &MissionResult) -> Result<()> {
    write_json(path, result)
}

pub fn load_results(path: impl AsRef<Path>) -> Result<MissionResult> {
    read_json(path)
}

pub fn save_report(json_path: impl AsRef<Path>, txt_path: impl AsRef<Path>, report: &QualityReport) -> Result<()> {
    write_json(json_path, report)?;
    let txt_path = txt_path.as_ref();
    std::fs::write(txt_path, report.to_table()).map_err(|source| Error::Io {
        path: txt_path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PlannerConfig;
    use crate::math::{v2, Rect};
    use crate::oracle::OracleNoise;
    use crate::realtime::run_mission;
    use crate::scene::Scene;

    #[test]
    fn results_roundtrip_is_byte_stable() {
        let scene = Scene::new(Vec::new(), Rect::new(v2(0.0, 0.0), v2(60.0, 60.0))).unwrap();
        let cfg = PlannerConfig::default();
        let result = run_mission(&scene, &scene, &cfg, &OracleNoise::NONE, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        save_results(&p1, &result).unwrap();
        let loaded = load_results(&p1).unwrap();
        save_results(&p2, &loaded).unwrap();
        let a = std::fs::read(&p1).unwrap();
        let b = std::fs::read(&p2).unwrap();
        assert_eq!(a, b);
    }
}
