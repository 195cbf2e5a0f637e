//! Per-stream driver: confidence split, tracking, background model update,
//! foreground selection and (optionally) abandoned-object detection, one
//! frame at a time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aod::{AbandonedObjectDetector, AodEvent, AodParams};
use crate::bgmodel::{BackgroundEntry, BackgroundModel, UpdateOutcome};
use crate::config::{Config, ConfigError};
use crate::selector::{select, Candidate, FrameResult};
use crate::stream::{split_by_confidence, FrameDetections, StreamErrorKind, StreamHeader};
use crate::tracker::{TrackId, TrackRecord, Tracker, TrackerError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid frame {frame}: {kind}")]
    Frame { frame: u64, kind: StreamErrorKind },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutput {
    pub result: FrameResult,
    /// `(track_id, detection_index)` for detections that entered the tracker.
    pub assignments: Vec<(TrackId, usize)>,
    pub model_update: Option<ModelUpdate>,
    pub events: Vec<AodEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelUpdate {
    pub frame: u64,
    pub admitted: Vec<TrackId>,
    pub removed: Vec<TrackId>,
    pub entries: Vec<TrackId>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: Config,
    header: StreamHeader,
    tracker: Tracker,
    model: BackgroundModel,
    aod: Option<AbandonedObjectDetector>,
}

impl Pipeline {
    pub fn new(header: StreamHeader, cfg: Config, aod: Option<AodParams>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        if let Some(p) = &aod {
            p.validate()?;
        }
        header.validate().map_err(|kind| PipelineError::Frame { frame: 0, kind })?;
        Ok(Self {
            tracker: Tracker::new(cfg.tracker.clone()),
            cfg,
            header,
            model: BackgroundModel::new(),
            aod: aod.map(AbandonedObjectDetector::new),
        })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn model(&self) -> &BackgroundModel {
        &self.model
    }

    pub fn snapshot(&self) -> Vec<BackgroundEntry> {
        self.model.snapshot()
    }

    pub fn track_records(&self) -> Vec<TrackRecord> {
        self.tracker.tracks().iter().map(|t| t.to_record()).collect()
    }

    pub fn process(&mut self, frame: &FrameDetections) -> Result<FrameOutput, PipelineError> {
        frame.validate(&self.header).map_err(|kind| PipelineError::Frame {
            frame: frame.frame,
            kind,
        })?;
        let split = split_by_confidence(frame, &self.cfg);

        let tracked: Vec<_> = split.background.iter().map(|&i| &frame.detections[i]).collect();
        let step = self.tracker.step(frame.frame, &tracked)?;
        let assignments: Vec<(TrackId, usize)> = step
            .assignments
            .iter()
            .map(|&(id, k)| (id, split.background[k]))
            .collect();

        let model_update = self
            .model
            .maybe_update(&self.tracker, frame.frame, &self.cfg)
            .map(|UpdateOutcome { frame, admitted, removed }| ModelUpdate {
                frame,
                admitted,
                removed,
                entries: self.model.snapshot().iter().map(|e| e.track_id).collect(),
            });

        let snapshot = self.model.snapshot();
        let candidates: Vec<Candidate> = split
            .foreground
            .iter()
            .map(|&i| Candidate {
                track_id: assignments.iter().find(|(_, d)| *d == i).map(|(t, _)| *t),
                detection: &frame.detections[i],
            })
            .collect();
        let result = select(
            frame.frame,
            &candidates,
            &snapshot,
            &self.cfg,
            self.header.height,
            self.header.width,
        );

        let events = match &mut self.aod {
            Some(aod) => aod.observe(&self.tracker, &self.model, frame.frame, &self.cfg),
            None => Vec::new(),
        };

        Ok(FrameOutput {
            result,
            assignments,
            model_update,
            events,
        })
    }
}

/// Run a whole in-memory stream.
pub fn run_frames(
    header: &StreamHeader,
    frames: &[FrameDetections],
    cfg: &Config,
    aod: Option<AodParams>,
) -> Result<Vec<FrameOutput>, PipelineError> {
    let mut p = Pipeline::new(header.clone(), cfg.clone(), aod)?;
    frames.iter().map(|f| p.process(f)).collect()
}

/// Deterministic run summary. Wall-clock timings are kept out of it so two
/// runs over the same input serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: Config,
    pub aod: Option<AodParams>,
    pub header: StreamHeader,
    pub frames: u64,
    pub foreground_instances: u64,
    pub foreground_pixels: u64,
    /// Foreground instance count per processed frame, in stream order.
    pub per_frame_foreground: Vec<usize>,
    pub model_updates: Vec<ModelUpdate>,
    pub events: usize,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(header: &StreamHeader, cfg: &Config, aod: Option<&AodParams>) -> Self {
        Self {
            config: cfg.clone(),
            aod: aod.cloned(),
            header: header.clone(),
            frames: 0,
            foreground_instances: 0,
            foreground_pixels: 0,
            per_frame_foreground: Vec::new(),
            model_updates: Vec::new(),
            events: 0,
            artifacts: Vec::new(),
        }
    }

    pub fn record(&mut self, out: &FrameOutput) {
        self.frames += 1;
        let n = out.result.foreground.len();
        self.foreground_instances += n as u64;
        self.foreground_pixels += out.result.mask.area();
        self.per_frame_foreground.push(n);
        if let Some(u) = &out.model_update {
            self.model_updates.push(u.clone());
        }
        self.events += out.events.len();
    }
}
