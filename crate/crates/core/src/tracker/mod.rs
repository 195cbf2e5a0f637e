//! SORT-style multi-object tracking with per-track trajectory history.

pub mod assignment;
pub mod kalman;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::geometry::{iou, mean_box, BBox, GeometryError};
use crate::stream::Detection;
use kalman::BoxKalman;

pub type TrackId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("frame {got} is not after the last stepped frame {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// Pairs with a lower IoU are never associated.
    pub match_iou_min: f64,
    /// Frames a track may go unmatched before it is retired.
    pub max_age: u32,
    /// Matches needed before a track counts as confirmed.
    pub min_hits: u32,
    /// Trajectory entries kept per track, oldest evicted first.
    pub history_cap: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            match_iou_min: 0.3,
            max_age: 30,
            min_hits: 3,
            history_cap: 1000,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.match_iou_min) {
            return Err(ConfigError::OutOfUnitRange {
                name: "match_iou_min",
                value: self.match_iou_min,
            });
        }
        if self.max_age == 0 {
            return Err(ConfigError::NotPositive { name: "max_age" });
        }
        if self.min_hits == 0 {
            return Err(ConfigError::NotPositive { name: "min_hits" });
        }
        if self.history_cap == 0 {
            return Err(ConfigError::NotPositive {
                name: "history_cap",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    id: TrackId,
    kalman: BoxKalman,
    history: VecDeque<(u64, BBox)>,
    label: String,
    hits: u32,
    age: u32,
    time_since_update: u32,
    first_seen: u64,
}

impl Track {
    fn spawn(id: TrackId, frame: u64, det: &Detection) -> Self {
        let mut history = VecDeque::new();
        history.push_back((frame, det.bbox));
        Self {
            id,
            kalman: BoxKalman::new(&det.bbox),
            history,
            label: det.label.clone(),
            hits: 1,
            age: 0,
            time_since_update: 0,
            first_seen: frame,
        }
    }

    pub fn id(&self) -> TrackId {
        self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn hits(&self) -> u32 {
        self.hits
    }

    pub fn age(&self) -> u32 {
        self.age
    }

    pub fn time_since_update(&self) -> u32 {
        self.time_since_update
    }

    /// Frame of the first association, kept even after history eviction.
    pub fn first_seen(&self) -> u64 {
        self.first_seen
    }

    pub fn history(&self) -> &VecDeque<(u64, BBox)> {
        &self.history
    }

    /// Most recent matched box and its frame.
    pub fn last(&self) -> (u64, BBox) {
        *self.history.back().expect("tracks always hold one entry")
    }

    pub fn kalman_state(&self) -> [f64; 7] {
        self.kalman.state()
    }

    pub fn is_confirmed(&self, params: &TrackerParams) -> bool {
        self.hits >= params.min_hits
    }

    pub fn boxes(&self) -> impl Iterator<Item = &BBox> + '_ {
        self.history.iter().map(|(_, b)| b)
    }

    /// Boxes observed in frames `> after`.
    pub fn boxes_since(&self, after: u64) -> Vec<BBox> {
        self.history
            .iter()
            .filter(|(f, _)| *f > after)
            .map(|(_, b)| *b)
            .collect()
    }

    pub fn to_record(&self) -> TrackRecord {
        TrackRecord {
            track_id: self.id,
            label: self.label.clone(),
            hits: self.hits,
            age: self.age,
            time_since_update: self.time_since_update,
            first_seen: self.first_seen,
            history: self.history.iter().map(|(f, b)| (*f, *b)).collect(),
        }
    }
}

/// Debug dump of one track, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: TrackId,
    pub label: String,
    pub hits: u32,
    pub age: u32,
    pub time_since_update: u32,
    pub first_seen: u64,
    pub history: Vec<(u64, BBox)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    /// `(track_id, detection_index)` for every accepted detection, matched or
    /// spawned, sorted by detection index.
    pub assignments: Vec<(TrackId, usize)>,
    pub spawned: Vec<TrackId>,
    pub removed: Vec<TrackId>,
}

impl StepOutput {
    pub fn track_of(&self, detection_index: usize) -> Option<TrackId> {
        self.assignments
            .iter()
            .find(|(_, d)| *d == detection_index)
            .map(|(t, _)| *t)
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_id: TrackId,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    /// Live tracks in ascending id order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn get(&self, id: TrackId) -> Option<&Track> {
        self.tracks
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.tracks[i])
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Predict, associate, update, spawn and retire for one frame.
    ///
    /// Zero-area detections are ignored: they cannot overlap anything.
    pub fn step(
        &mut self,
        frame_index: u64,
        detections: &[&Detection],
    ) -> Result<StepOutput, TrackerError> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(TrackerError::OutOfOrder {
                    last,
                    got: frame_index,
                });
            }
        }
        self.last_frame = Some(frame_index);

        let predicted: Vec<BBox> = self
            .tracks
            .iter_mut()
            .map(|t| {
                t.age += 1;
                t.time_since_update += 1;
                t.kalman.predict()
            })
            .collect();

        let usable: Vec<usize> = (0..detections.len())
            .filter(|&i| detections[i].bbox.area() > 0.0)
            .collect();

        let mut det_taken = vec![false; detections.len()];
        let mut out = StepOutput::default();

        if !self.tracks.is_empty() && !usable.is_empty() {
            let costs: Vec<Vec<f64>> = predicted
                .iter()
                .map(|p| {
                    usable
                        .iter()
                        .map(|&d| 1.0 - iou(p, &detections[d].bbox))
                        .collect()
                })
                .collect();
            for (row, col) in assignment::solve(&costs) {
                let d = usable[col];
                if 1.0 - costs[row][col] < self.params.match_iou_min {
                    continue;
                }
                let det = detections[d];
                let track = &mut self.tracks[row];
                track.kalman.update(&det.bbox);
                track.history.push_back((frame_index, det.bbox));
                while track.history.len() > self.params.history_cap {
                    track.history.pop_front();
                }
                track.label.clone_from(&det.label);
                track.hits += 1;
                track.time_since_update = 0;
                det_taken[d] = true;
                out.assignments.push((track.id, d));
            }
        }

        for &d in &usable {
            if det_taken[d] {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track::spawn(id, frame_index, detections[d]));
            out.spawned.push(id);
            out.assignments.push((id, d));
        }
        out.assignments.sort_by_key(|&(_, d)| d);

        let max_age = self.params.max_age;
        self.tracks.retain(|t| {
            let keep = t.time_since_update <= max_age;
            if !keep {
                out.removed.push(t.id);
            }
            keep
        });
        Ok(out)
    }
}

/// Sliding median with windows truncated at the edges. Even-length windows
/// take the upper median.
pub fn median_filter(values: &[f64], window: usize) -> Vec<f64> {
    let half = window.max(1) / 2;
    let mut buf = Vec::with_capacity(window);
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            buf.clear();
            buf.extend_from_slice(&values[lo..hi]);
            buf.sort_by(f64::total_cmp);
            buf[buf.len() / 2]
        })
        .collect()
}

/// Minimum of the median-filtered IoU between each box and the mean box.
pub fn min_filtered_iou(boxes: &[BBox], window: usize) -> Result<f64, GeometryError> {
    let mean = mean_box(boxes)?;
    let ious: Vec<f64> = boxes.iter().map(|b| iou(b, &mean)).collect();
    Ok(median_filter(&ious, window)
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Largest departure of a track from its trajectory mean, as an IoU in `[0, 1]`.
pub fn trajectory_min_iou(track: &Track, window: usize) -> Result<f64, GeometryError> {
    let boxes: Vec<BBox> = track.boxes().copied().collect();
    min_filtered_iou(&boxes, window)
}
