//! TOML dataset files.
//!
//! ```toml
//! format = "radcal-dataset"
//! version = 1
//!
//! [ground_truth]            # optional, written by `simulate`
//! rotation = [0.0, 0.0, 0.0]
//! translation = [0.5, -0.25, 0.05]
//!
//! [[frames]]
//! id = 0
//! lidar = { rotation = [..], translation = [..] }
//! targets = [{ target = 0, rotation = [..], translation = [..] }]
//! observations = [{ target = 0, center = [..], radar_range = 5.1, radar_azimuth = 0.3 }]
//! samples = [{ target = 0, position = [..], direction = [..], energy = 0.4 }]
//! ```
//!
//! Rotations are axis-angle vectors in radians, distances in meters.

use std::fs;
use std::path::Path;

use radcal_core::dataset::{CalibDataset, DatasetError, Frame, FramePoseSet, LidarTargetObservation, RadarSample, TargetPose};
use radcal_core::geometry::{Extrinsics, GeometryError, Pose};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "radcal-dataset";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema: {0}")]
    Schema(String),
    #[error("unsupported format `{format}` version {version}")]
    Format { format: String, version: u32 },
    #[error("frame {frame}: {what}: {source}")]
    Pose { frame: u32, what: &'static str, source: GeometryError },
    #[error(transparent)]
    Invalid(#[from] DatasetError),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    rotation: [f64; 3],
    translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetDoc {
    target: u32,
    rotation: [f64; 3],
    translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationDoc {
    target: u32,
    center: [f64; 3],
    radar_range: f64,
    radar_azimuth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleDoc {
    target: u32,
    position: [f64; 3],
    direction: [f64; 3],
    energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    id: u32,
    lidar: PoseDoc,
    #[serde(default)]
    targets: Vec<TargetDoc>,
    #[serde(default)]
    observations: Vec<ObservationDoc>,
    #[serde(default)]
    samples: Vec<SampleDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<PoseDoc>,
    #[serde(default)]
    frames: Vec<FrameDoc>,
}

/// A dataset plus the extrinsics it was generated with, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub dataset: CalibDataset,
    pub ground_truth: Option<Extrinsics>,
}

fn pose_doc(p: &Pose) -> PoseDoc {
    PoseDoc { rotation: p.rotation.vector(), translation: p.translation }
}

fn pose_of(d: &PoseDoc, frame: u32, what: &'static str) -> Result<Pose, LoadError> {
    Pose::from_vectors(d.rotation, d.translation).map_err(|source| LoadError::Pose { frame, what, source })
}

pub fn to_toml(file: &DatasetFile) -> String {
    let doc = DatasetDoc {
        format: FORMAT.into(),
        version: VERSION,
        ground_truth: file.ground_truth.as_ref().map(pose_doc),
        frames: file
            .dataset
            .frames
            .iter()
            .map(|f| FrameDoc {
                id: f.id,
                lidar: pose_doc(&f.poses.lidar),
                targets: f
                    .poses
                    .targets
                    .iter()
                    .map(|t| TargetDoc { target: t.target, rotation: t.pose.rotation.vector(), translation: t.pose.translation })
                    .collect(),
                observations: f
                    .observations
                    .iter()
                    .map(|o| ObservationDoc {
                        target: o.target,
                        center: o.center,
                        radar_range: o.radar_range,
                        radar_azimuth: o.radar_azimuth,
                    })
                    .collect(),
                samples: f
                    .samples
                    .iter()
                    .map(|s| SampleDoc { target: s.target, position: s.position, direction: s.direction, energy: s.energy })
                    .collect(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("dataset documents always serialize")
}

/// Parses and validates a dataset document.
pub fn from_toml(text: &str) -> Result<DatasetFile, LoadError> {
    let doc: DatasetDoc = toml::from_str(text).map_err(|e| LoadError::Schema(e.message().to_string()))?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(LoadError::Format { format: doc.format, version: doc.version });
    }
    let ground_truth = doc.ground_truth.as_ref().map(|p| pose_of(p, 0, "ground truth")).transpose()?;
    let mut frames = Vec::with_capacity(doc.frames.len());
    for f in doc.frames {
        let lidar = pose_of(&f.lidar, f.id, "lidar pose")?;
        let targets = f
            .targets
            .iter()
            .map(|t| {
                Pose::from_vectors(t.rotation, t.translation)
                    .map(|pose| TargetPose { target: t.target, pose })
                    .map_err(|source| LoadError::Pose { frame: f.id, what: "target pose", source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        frames.push(Frame {
            id: f.id,
            poses: FramePoseSet { lidar, targets },
            observations: f
                .observations
                .into_iter()
                .map(|o| LidarTargetObservation {
                    target: o.target,
                    center: o.center,
                    radar_range: o.radar_range,
                    radar_azimuth: o.radar_azimuth,
                })
                .collect(),
            samples: f
                .samples
                .into_iter()
                .map(|s| RadarSample { target: s.target, position: s.position, direction: s.direction, energy: s.energy })
                .collect(),
        });
    }
    let dataset = CalibDataset { frames };
    dataset.validate()?;
    Ok(DatasetFile { dataset, ground_truth })
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    from_toml(&text)
}

pub fn write_dataset(path: &Path, file: &DatasetFile) -> std::io::Result<()> {
    fs::write(path, to_toml(file))
}
