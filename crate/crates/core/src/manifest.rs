//! Run manifests: one TOML file tying inputs, configuration, per-tile status,
//! outputs and timings together. Fields this version does not know about are
//! kept and written back unchanged.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autolabel::SegmentationScheme;
use crate::engine::{JobOutput, PhaseTiming};
use crate::filter::FilterConfig;
use crate::tiling::TileGrid;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{path}: {source}")]
    Serialize {
        path: PathBuf,
        source: toml::ser::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub mode: String,
    pub workers: usize,
    pub chunk_size: usize,
    pub tile_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bind: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub root: PathBuf,
    pub filtered: PathBuf,
    pub labels: PathBuf,
    pub reports: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileState {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileStatus {
    pub index: usize,
    pub scene_id: String,
    pub row: usize,
    pub col: usize,
    pub status: TileState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub grid: TileGrid,
    /// Stitched label image, relative to the manifest directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub inputs: Vec<PathBuf>,
    /// Directory of ground-truth label images, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    pub filter: FilterConfig,
    pub scheme: SegmentationScheme,
    pub engine: EngineSettings,
    pub outputs: OutputPaths,
    pub timing: PhaseTiming,
    #[serde(default)]
    pub scenes: Vec<SceneRecord>,
    #[serde(default)]
    pub tiles: Vec<TileStatus>,
    #[serde(flatten)]
    pub extra: toml::Table,
}

impl RunManifest {
    /// Records per-tile status and timings from a finished job.
    pub fn record(&mut self, out: &JobOutput) {
        self.timing = out.timing;
        self.tiles = out
            .tiles
            .iter()
            .map(|t| TileStatus {
                index: t.index,
                scene_id: t.scene_id.clone(),
                row: t.grid_row,
                col: t.grid_col,
                status: if t.result.is_ok() { TileState::Ok } else { TileState::Failed },
                affected_fraction: t.result.as_ref().ok().map(|p| p.affected_fraction),
                reason: t.result.as_ref().err().cloned(),
            })
            .collect();
    }

    /// True when every tile of every recorded scene appears exactly once and
    /// succeeded.
    pub fn is_complete(&self) -> bool {
        let expected: usize = self.scenes.iter().map(|s| s.grid.tile_count()).sum();
        let mut seen = std::collections::HashSet::new();
        self.tiles.len() == expected
            && self.tiles.iter().all(|t| {
                t.status == TileState::Ok && seen.insert((t.scene_id.clone(), t.row, t.col))
            })
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), ManifestError> {
    let text = toml::to_string_pretty(manifest).map_err(|source| ManifestError::Serialize {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| ManifestError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| ManifestError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> RunManifest {
        RunManifest {
            run_id: "r1".into(),
            inputs: vec![PathBuf::from("scenes/a.png")],
            truth: None,
            filter: FilterConfig::default(),
            scheme: SegmentationScheme::default(),
            engine: EngineSettings {
                mode: "local".into(),
                workers: 4,
                chunk_size: 8,
                tile_size: 256,
                bind: None,
            },
            outputs: OutputPaths {
                root: "out/run/r1".into(),
                filtered: "out/run/r1/filtered".into(),
                labels: "out/run/r1/labels".into(),
                reports: "out/run/r1/reports".into(),
            },
            timing: PhaseTiming {
                load_seconds: 0.5,
                map_seconds: 1.25,
                reduce_seconds: 0.125,
                tiles_processed: 1,
                workers: 4,
            },
            scenes: vec![SceneRecord {
                grid: TileGrid::new("a", 256, 256, 256),
                labels: Some("labels/a.png".into()),
                filtered: Some("filtered/a.png".into()),
            }],
            tiles: vec![TileStatus {
                index: 0,
                scene_id: "a".into(),
                row: 0,
                col: 0,
                status: TileState::Ok,
                affected_fraction: Some(0.25),
                reason: None,
            }],
            extra: toml::Table::new(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        let m = sample();
        write_manifest(&path, &m).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
        assert!(m.is_complete());
    }

    #[test]
    fn missing_scheme_names_the_field() {
        let text = toml::to_string(&sample()).unwrap();
        let mut doc: toml::Table = toml::from_str(&text).unwrap();
        doc.remove("scheme");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        fs::write(&path, toml::to_string(&doc).unwrap()).unwrap();
        let err = read_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("scheme"), "{err}");
    }

    #[test]
    fn unknown_fields_survive_rewrite() {
        let mut text = toml::to_string(&sample()).unwrap();
        text = format!("operator = \"night shift\"\n{text}\n[provenance]\nsatellite = \"S2B\"\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        fs::write(&path, text).unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.extra["operator"].as_str(), Some("night shift"));
        write_manifest(&path, &m).unwrap();
        let again = read_manifest(&path).unwrap();
        assert_eq!(again.extra, m.extra);
        assert_eq!(again.extra["provenance"]["satellite"].as_str(), Some("S2B"));
    }

    #[test]
    fn parse_error_has_line_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        fs::write(&path, "run_id = \"x\"\ninputs = [\n").unwrap();
        let err = read_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }
}
