//! In-memory calibration dataset and its validation rules.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{is_finite3, norm, Pose, Vec3};

/// Maximum deviation of a ray direction from unit norm accepted on ingestion.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// A target center seen by the LIDAR, paired with the RADAR's detection of
/// the same target.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarTargetObservation {
    pub target: u32,
    /// Target center in the LIDAR frame, meters.
    pub center: Vec3,
    /// Detected slant range, meters.
    pub radar_range: f64,
    /// Detected azimuth, radians.
    pub radar_azimuth: f64,
}

/// One raw RADAR return near a target.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarSample {
    pub target: u32,
    /// Cell position in the RADAR frame, meters.
    pub position: Vec3,
    /// Unit ray direction from the sensor origin, RADAR frame.
    pub direction: Vec3,
    /// Return energy normalized to [0, 1].
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetPose {
    pub target: u32,
    /// world ← target
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePoseSet {
    /// world ← LIDAR
    pub lidar: Pose,
    pub targets: Vec<TargetPose>,
}

impl FramePoseSet {
    pub fn target_pose(&self, target: u32) -> Option<&Pose> {
        self.targets.iter().find(|t| t.target == target).map(|t| &t.pose)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: u32,
    pub poses: FramePoseSet,
    pub observations: Vec<LidarTargetObservation>,
    pub samples: Vec<RadarSample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibDataset {
    pub frames: Vec<Frame>,
}

/// Where a bad record sits in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordLocation {
    pub frame: u32,
    pub kind: RecordKind,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    LidarPose,
    TargetPose,
    Observation,
    Sample,
}

impl fmt::Display for RecordLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            RecordKind::LidarPose => "lidar pose",
            RecordKind::TargetPose => "target pose",
            RecordKind::Observation => "observation",
            RecordKind::Sample => "sample",
        };
        write!(f, "frame {} {} #{}", self.frame, kind, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("empty dataset")]
    Empty,
    #[error("{0}: non-finite field")]
    NonFinite(RecordLocation),
    #[error("{location}: direction norm {norm} is not unit")]
    NonUnitDirection { location: RecordLocation, norm: f64 },
    #[error("{location}: energy {energy} outside [0, 1]")]
    EnergyOutOfRange { location: RecordLocation, energy: f64 },
    #[error("{location}: references unknown target {target}")]
    DanglingTarget { location: RecordLocation, target: u32 },
    #[error("frame id {0} appears more than once")]
    DuplicateFrame(u32),
}

impl CalibDataset {
    pub fn observation_count(&self) -> usize {
        self.frames.iter().map(|f| f.observations.len()).sum()
    }

    pub fn sample_count(&self) -> usize {
        self.frames.iter().map(|f| f.samples.len()).sum()
    }

    /// Checks every record; reports the first violation with its location.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.frames.is_empty() {
            return Err(DatasetError::Empty);
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if self.frames[..i].iter().any(|f| f.id == frame.id) {
                return Err(DatasetError::DuplicateFrame(frame.id));
            }
            let loc = |kind, index| RecordLocation { frame: frame.id, kind, index };
            if !is_finite3(&frame.poses.lidar.translation) {
                return Err(DatasetError::NonFinite(loc(RecordKind::LidarPose, 0)));
            }
            for (k, tp) in frame.poses.targets.iter().enumerate() {
                if !is_finite3(&tp.pose.translation) {
                    return Err(DatasetError::NonFinite(loc(RecordKind::TargetPose, k)));
                }
            }
            for (k, obs) in frame.observations.iter().enumerate() {
                let location = loc(RecordKind::Observation, k);
                if !is_finite3(&obs.center) || !obs.radar_range.is_finite() || !obs.radar_azimuth.is_finite() {
                    return Err(DatasetError::NonFinite(location));
                }
                if frame.poses.target_pose(obs.target).is_none() {
                    return Err(DatasetError::DanglingTarget { location, target: obs.target });
                }
            }
            for (k, s) in frame.samples.iter().enumerate() {
                let location = loc(RecordKind::Sample, k);
                if !is_finite3(&s.position) || !is_finite3(&s.direction) || !s.energy.is_finite() {
                    return Err(DatasetError::NonFinite(location));
                }
                let n = norm(&s.direction);
                if (n - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(DatasetError::NonUnitDirection { location, norm: n });
                }
                if !(0.0..=1.0).contains(&s.energy) {
                    return Err(DatasetError::EnergyOutOfRange { location, energy: s.energy });
                }
                if frame.poses.target_pose(s.target).is_none() {
                    return Err(DatasetError::DanglingTarget { location, target: s.target });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn frame() -> Frame {
        Frame {
            id: 7,
            poses: FramePoseSet {
                lidar: Pose::IDENTITY,
                targets: vec![TargetPose { target: 1, pose: Pose::IDENTITY }],
            },
            observations: vec![LidarTargetObservation {
                target: 1,
                center: [3.0, 0.0, 0.0],
                radar_range: 3.0,
                radar_azimuth: 0.0,
            }],
            samples: vec![RadarSample {
                target: 1,
                position: [3.0, 0.0, 0.0],
                direction: [1.0, 0.0, 0.0],
                energy: 0.5,
            }],
        }
    }

    #[test]
    fn empty_is_rejected() {
        assert_eq!(CalibDataset::default().validate(), Err(DatasetError::Empty));
    }

    #[test]
    fn valid_frame_passes() {
        let d = CalibDataset { frames: vec![frame()] };
        assert!(d.validate().is_ok());
        assert_eq!((d.observation_count(), d.sample_count()), (1, 1));
    }

    #[test]
    fn non_unit_direction_names_record() {
        let mut f = frame();
        f.samples[0].direction = [0.9, 0.0, 0.0];
        let err = CalibDataset { frames: vec![f] }.validate().unwrap_err();
        match &err {
            DatasetError::NonUnitDirection { location, norm } => {
                assert_eq!(location.kind, RecordKind::Sample);
                assert_eq!((location.frame, location.index), (7, 0));
                assert!((norm - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(alloc::format!("{err}").contains("frame 7 sample #0"));
    }

    #[test]
    fn energy_and_dangling_target() {
        let mut f = frame();
        f.samples[0].energy = 1.5;
        assert!(matches!(
            CalibDataset { frames: vec![f] }.validate(),
            Err(DatasetError::EnergyOutOfRange { .. })
        ));
        let mut f = frame();
        f.observations[0].target = 9;
        assert!(matches!(
            CalibDataset { frames: vec![f] }.validate(),
            Err(DatasetError::DanglingTarget { target: 9, .. })
        ));
        let mut f = frame();
        f.observations[0].radar_range = f64::NAN;
        assert!(matches!(CalibDataset { frames: vec![f] }.validate(), Err(DatasetError::NonFinite(_))));
    }

    #[test]
    fn duplicate_frame_ids() {
        let d = CalibDataset { frames: vec![frame(), frame()] };
        assert_eq!(d.validate(), Err(DatasetError::DuplicateFrame(7)));
    }
}
