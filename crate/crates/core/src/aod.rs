//! Abandoned-object detection on top of the tracker and background model.
//!
//! Two rules, each firing at most once per track:
//!
//! * `isolated_static`: a non-carrier object that showed up after the initial
//!   background model was built, has stayed static for `dwell_frames`, and had
//!   no carrier overlapping it during that time.
//! * `carrier_split`: a non-carrier object that moved in sync with a carrier
//!   (sustained IoF against the carrier box) and then stayed static while the
//!   carrier walked or drove away.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bgmodel::BackgroundModel;
use crate::config::Config;
use crate::geometry::{iof, BBox};
use crate::tracker::{min_filtered_iou, Track, TrackId, Tracker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AodParams {
    /// Labels that can carry or drop objects. They never raise events.
    pub carrier_labels: BTreeSet<String>,
    /// Frames an object must stay static before it is flagged.
    pub dwell_frames: u64,
    /// IoF of object against carrier that counts as "in sync".
    pub sync_iof_min: f64,
    /// Consecutive in-sync frames that establish a carrier relationship.
    pub sync_frames: u32,
    /// Carrier-to-object center distance, in object diagonals, that counts as
    /// having left.
    pub depart_diag_factor: f64,
}

impl Default for AodParams {
    fn default() -> Self {
        Self {
            carrier_labels: ["person", "car", "truck", "bus"]
                .into_iter()
                .map(String::from)
                .collect(),
            dwell_frames: 50,
            sync_iof_min: 0.2,
            sync_frames: 10,
            depart_diag_factor: 1.5,
        }
    }
}

impl AodParams {
    pub fn validate(&self) -> Result<(), crate::config::ConfigError> {
        use crate::config::ConfigError;
        if self.dwell_frames == 0 {
            return Err(ConfigError::NotPositive {
                name: "dwell_frames",
            });
        }
        if self.sync_frames == 0 {
            return Err(ConfigError::NotPositive {
                name: "sync_frames",
            });
        }
        if !(0.0..=1.0).contains(&self.sync_iof_min) {
            return Err(ConfigError::OutOfUnitRange {
                name: "sync_iof_min",
                value: self.sync_iof_min,
            });
        }
        if !(self.depart_diag_factor >= 0.0) {
            return Err(ConfigError::OutOfUnitRange {
                name: "depart_diag_factor",
                value: self.depart_diag_factor,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AodRule {
    IsolatedStatic,
    CarrierSplit,
}

impl std::fmt::Display for AodRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AodRule::IsolatedStatic => "isolated_static",
            AodRule::CarrierSplit => "carrier_split",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AodEvent {
    pub frame: u64,
    pub track_id: TrackId,
    pub label: String,
    pub bbox: BBox,
    pub rule: AodRule,
}

#[derive(Debug, Clone, Default)]
struct ObjectState {
    /// Current consecutive in-sync run per carrier.
    runs: BTreeMap<TrackId, u32>,
    /// Carrier the object last moved in sync with for `sync_frames`.
    carrier: Option<TrackId>,
    last_overlap: Option<u64>,
    overlapping_now: BTreeSet<TrackId>,
}

#[derive(Debug, Clone)]
pub struct AbandonedObjectDetector {
    params: AodParams,
    objects: BTreeMap<TrackId, ObjectState>,
    carrier_centers: BTreeMap<TrackId, (f64, f64)>,
    fired: BTreeSet<TrackId>,
}

fn updated_at(track: &Track, frame: u64) -> Option<BBox> {
    let (f, b) = track.last();
    (f == frame).then_some(b)
}

impl AbandonedObjectDetector {
    pub fn new(params: AodParams) -> Self {
        Self {
            params,
            objects: BTreeMap::new(),
            carrier_centers: BTreeMap::new(),
            fired: BTreeSet::new(),
        }
    }

    pub fn params(&self) -> &AodParams {
        &self.params
    }

    fn is_carrier(&self, t: &Track) -> bool {
        self.params.carrier_labels.contains(t.label())
    }

    /// Whether `track` has stayed put over the last `dwell_frames` frames.
    fn static_for_dwell(&self, track: &Track, frame: u64, cfg: &Config) -> bool {
        let w = self.params.dwell_frames;
        if track.first_seen() + w > frame {
            return false;
        }
        let recent = track.boxes_since(frame - w);
        !recent.is_empty()
            && min_filtered_iou(&recent, cfg.filter_window).is_ok_and(|m| m >= cfg.tau_move)
    }

    /// Observe the state after frame `frame` and return newly fired events.
    pub fn observe(
        &mut self,
        tracker: &Tracker,
        model: &BackgroundModel,
        frame: u64,
        cfg: &Config,
    ) -> Vec<AodEvent> {
        let (carriers, objects): (Vec<&Track>, Vec<&Track>) =
            tracker.tracks().iter().partition(|t| self.is_carrier(t));

        let live_carriers: Vec<(TrackId, BBox)> = carriers
            .iter()
            .filter_map(|t| updated_at(t, frame).map(|b| (t.id(), b)))
            .collect();
        for &(id, b) in &live_carriers {
            self.carrier_centers.insert(id, b.center());
        }
        let alive: BTreeSet<TrackId> = tracker.tracks().iter().map(|t| t.id()).collect();
        self.carrier_centers.retain(|id, _| alive.contains(id));
        self.objects.retain(|id, _| alive.contains(id));

        for obj in &objects {
            let Some(ob) = updated_at(obj, frame) else {
                continue;
            };
            let state = self.objects.entry(obj.id()).or_default();
            state.overlapping_now = live_carriers
                .iter()
                .filter(|(_, cb)| iof(&ob, cb) >= self.params.sync_iof_min)
                .map(|(id, _)| *id)
                .collect();
            state.runs.retain(|id, _| state.overlapping_now.contains(id));
            for &c in &state.overlapping_now {
                let run = state.runs.entry(c).or_insert(0);
                *run += 1;
                if *run >= self.params.sync_frames {
                    state.carrier = Some(c);
                }
            }
            if !state.overlapping_now.is_empty() {
                state.last_overlap = Some(frame);
            }
        }

        let mut events = Vec::new();
        for obj in objects {
            if self.fired.contains(&obj.id()) || !obj.is_confirmed(tracker.params()) {
                continue;
            }
            let Some(ob) = updated_at(obj, frame) else {
                continue;
            };
            if !self.static_for_dwell(obj, frame, cfg) {
                continue;
            }
            let state = self.objects.get(&obj.id()).cloned().unwrap_or_default();

            let split = state.carrier.is_some_and(|c| {
                if state.overlapping_now.contains(&c) {
                    return false;
                }
                match self.carrier_centers.get(&c) {
                    None => true,
                    Some(&(cx, cy)) => {
                        let (ox, oy) = ob.center();
                        (cx - ox).hypot(cy - oy) >= self.params.depart_diag_factor * ob.diagonal()
                    }
                }
            });
            let rule = if split {
                Some(AodRule::CarrierSplit)
            } else {
                let after_init = model
                    .initialized_at()
                    .is_some_and(|init| obj.first_seen() > init);
                let alone = state
                    .last_overlap
                    .is_none_or(|l| frame - l >= self.params.dwell_frames);
                (after_init && alone).then_some(AodRule::IsolatedStatic)
            };
            if let Some(rule) = rule {
                self.fired.insert(obj.id());
                events.push(AodEvent {
                    frame,
                    track_id: obj.id(),
                    label: obj.label().to_owned(),
                    bbox: ob,
                    rule,
                });
            }
        }
        events
    }
}
