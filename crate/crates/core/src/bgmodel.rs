//! Instance-level background model: the set of mean boxes of instances whose
//! trajectories stayed put.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::geometry::{mean_box, BBox};
use crate::tracker::{trajectory_min_iou, TrackId, Tracker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundEntry {
    pub track_id: TrackId,
    #[serde(rename = "bbox")]
    pub mean_box: BBox,
    pub label: String,
    /// Frame of the update that last (re)admitted the entry.
    pub last_confirmed: u64,
}

/// What one update tick changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub frame: u64,
    /// Tracks classified static (inserted or refreshed).
    pub admitted: Vec<TrackId>,
    /// Entries dropped because their track moved.
    pub removed: Vec<TrackId>,
}

#[derive(Debug, Clone, Default)]
pub struct BackgroundModel {
    entries: BTreeMap<TrackId, BackgroundEntry>,
    anchor_frame: Option<u64>,
    last_update_frame: Option<u64>,
    first_update_frame: Option<u64>,
}

impl BackgroundModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: TrackId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn get(&self, id: TrackId) -> Option<&BackgroundEntry> {
        self.entries.get(&id)
    }

    pub fn last_update_frame(&self) -> Option<u64> {
        self.last_update_frame
    }

    /// Frame at which the initial model was built, if it has been.
    pub fn initialized_at(&self) -> Option<u64> {
        self.first_update_frame
    }

    /// Entries in ascending track id order.
    pub fn snapshot(&self) -> Vec<BackgroundEntry> {
        self.entries.values().cloned().collect()
    }

    pub fn reset(&mut self) {
        self.entries.clear();
    }

    /// Run an update tick if one is due at `frame_index`.
    ///
    /// The first tick happens `update_period` frames after the first frame the
    /// model sees, then every `update_period` frames. On a tick every live,
    /// confirmed track is classified: static ones enter (or refresh) the model
    /// with their current trajectory mean, moving ones are dropped. Entries of
    /// retired tracks are left alone.
    pub fn maybe_update(
        &mut self,
        tracker: &Tracker,
        frame_index: u64,
        cfg: &Config,
    ) -> Option<UpdateOutcome> {
        let anchor = *self.anchor_frame.get_or_insert(frame_index);
        let since = self.last_update_frame.unwrap_or(anchor);
        if frame_index < since || frame_index - since < cfg.update_period {
            return None;
        }

        let mut outcome = UpdateOutcome {
            frame: frame_index,
            ..Default::default()
        };
        for track in tracker.tracks() {
            if !track.is_confirmed(tracker.params()) {
                continue;
            }
            let Ok(min_iou) = trajectory_min_iou(track, cfg.filter_window) else {
                continue;
            };
            if min_iou >= cfg.tau_move {
                let mean = mean_box(track.boxes()).expect("history is non-empty");
                self.entries.insert(
                    track.id(),
                    BackgroundEntry {
                        track_id: track.id(),
                        mean_box: mean,
                        label: track.label().to_owned(),
                        last_confirmed: frame_index,
                    },
                );
                outcome.admitted.push(track.id());
            } else if self.entries.remove(&track.id()).is_some() {
                outcome.removed.push(track.id());
            }
        }
        self.last_update_frame = Some(frame_index);
        self.first_update_frame.get_or_insert(frame_index);
        Some(outcome)
    }
}
