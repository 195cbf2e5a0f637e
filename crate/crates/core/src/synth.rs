//! Scripted synthetic scenarios: detection streams, pixel ground truth and a
//! manifest of what the pipeline is expected to do with them.
//!
//! Each actor follows a piecewise-linear box path and is "detected" on the
//! frames where it is visible. Uniform coordinate jitter is drawn from a
//! seeded ChaCha stream, so a given scenario and seed always yields the same
//! bytes.

use std::collections::BTreeSet;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aod::AodRule;
use crate::evaluator::{GtFrame, GT_MOVING, GT_SHADOW, GT_STATIC};
use crate::geometry::{iof, iou, mean_box, pixel_span, BBox, GeometryError};
use crate::stream::{Detection, FrameDetections, StreamHeader};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("actor '{actor}': {reason}")]
    InvalidTrajectory { actor: String, reason: String },
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("actor '{actor}': jitter {amplitude} lets overlap with its mean box fall to {overlap:.3}")]
    JitterTooLarge {
        actor: String,
        amplitude: f64,
        overlap: f64,
    },
    #[error("scenario canvas must be at least 1x1")]
    EmptyCanvas,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Minimum visible fraction of an actor's box for it to be detected.
const MIN_VISIBLE_FRACTION: f64 = 0.3;
/// Fraction of the width kept on a glitch frame.
const GLITCH_KEEP: f64 = 0.4;
/// Safety margin over the selection thresholds for the jitter check.
const JITTER_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreProfile {
    Constant { score: f64 },
    /// `peak` on frames where `(frame + phase) % period == 0`, `base` otherwise.
    Spiking {
        base: f64,
        peak: f64,
        period: u64,
        phase: u64,
    },
}

impl ScoreProfile {
    fn at(&self, frame: u64) -> f64 {
        match *self {
            ScoreProfile::Constant { score } => score,
            ScoreProfile::Spiking {
                base,
                peak,
                period,
                phase,
            } => {
                if (frame + phase) % period.max(1) == 0 {
                    peak
                } else {
                    base
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub name: String,
    pub label: String,
    /// Keyframes `(frame, box)`; linear in between, held outside.
    pub path: Vec<(u64, BBox)>,
    /// Frames on which the actor exists.
    pub visible: Range<u64>,
    pub score: ScoreProfile,
    #[serde(default)]
    pub dropouts: Vec<Range<u64>>,
    /// Frames where only the left part of the box is detected.
    #[serde(default)]
    pub glitches: Vec<u64>,
    /// Uniform per-coordinate noise amplitude in pixels.
    #[serde(default)]
    pub jitter: f64,
    /// Index of an actor that passes in front of this one.
    #[serde(default)]
    pub occluder: Option<usize>,
    /// Frames on which the actor counts as moving foreground.
    #[serde(default)]
    pub foreground: Vec<Range<u64>>,
    /// Height of a shadow band painted under the actor's box.
    #[serde(default)]
    pub shadow: Option<f64>,
    /// Declared static: checked against the jitter bound at generation time.
    #[serde(default)]
    pub is_static: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedEvent {
    pub actor: usize,
    pub rule: AodRule,
    pub earliest: u64,
    pub latest: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub frames: u64,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// First frame scored; matches the background update period.
    pub eval_from: u64,
    pub actors: Vec<Actor>,
    #[serde(default)]
    pub expected_events: Vec<ExpectedEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestActor {
    pub id: usize,
    pub name: String,
    pub label: String,
    pub is_static: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub frame: u64,
    /// Actor id of each detection, in stream order.
    pub detections: Vec<usize>,
    pub foreground: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterCheck {
    pub actor: usize,
    pub amplitude: f64,
    pub min_iou: f64,
    pub min_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseInfo {
    pub kind: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub width: u32,
    pub height: u32,
    pub frames: u64,
    pub eval_from: u64,
    pub noise: NoiseInfo,
    pub actors: Vec<ManifestActor>,
    pub per_frame: Vec<ManifestFrame>,
    pub events: Vec<ExpectedEvent>,
    pub jitter_checks: Vec<JitterCheck>,
}

impl Manifest {
    pub fn actor_id(&self, name: &str) -> Option<usize> {
        self.actors.iter().find(|a| a.name == name).map(|a| a.id)
    }

    pub fn frame(&self, frame: u64) -> Option<&ManifestFrame> {
        self.per_frame
            .binary_search_by_key(&frame, |f| f.frame)
            .ok()
            .map(|i| &self.per_frame[i])
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub header: StreamHeader,
    pub frames: Vec<FrameDetections>,
    pub gt: Vec<GtFrame>,
    pub manifest: Manifest,
}

impl SynthOutput {
    pub fn stream_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        crate::stream::write_stream(&mut buf, &self.header, &self.frames)
            .expect("writing to memory");
        buf
    }
}

fn in_any(ranges: &[Range<u64>], f: u64) -> bool {
    ranges.iter().any(|r| r.contains(&f))
}

impl Actor {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |reason: &str| SynthError::InvalidTrajectory {
            actor: self.name.clone(),
            reason: reason.to_owned(),
        };
        if self.path.is_empty() {
            return Err(bad("empty path"));
        }
        if self.path.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(bad("keyframes must strictly increase"));
        }
        if !(self.jitter >= 0.0) {
            return Err(bad("jitter must be non-negative"));
        }
        Ok(())
    }

    /// Nominal (noise-free, unclipped) box at `frame`.
    pub fn box_at(&self, frame: u64) -> BBox {
        let first = self.path[0];
        if frame <= first.0 {
            return first.1;
        }
        for w in self.path.windows(2) {
            let ((f0, b0), (f1, b1)) = (w[0], w[1]);
            if frame <= f1 {
                let t = (frame - f0) as f64 / (f1 - f0) as f64;
                let lerp = |a: f64, b: f64| a + (b - a) * t;
                let [a, b, c, d] = b0.coords();
                let [e, f, g, h] = b1.coords();
                return BBox::new(lerp(a, e), lerp(b, f), lerp(c, g), lerp(d, h))
                    .expect("interpolation of valid boxes");
            }
        }
        self.path.last().expect("non-empty").1
    }
}

/// Remove the horizontal span of `occluder` from `target` when it covers the
/// target's full height. `None` when nothing visible remains.
fn visible_part(target: &BBox, occluder: &BBox) -> Option<BBox> {
    let covers_height = occluder.y1() <= target.y1() && occluder.y2() >= target.y2();
    let overlaps = occluder.x1() < target.x2() && occluder.x2() > target.x1();
    if !covers_height || !overlaps {
        return Some(*target);
    }
    let left = (target.x1(), occluder.x1().min(target.x2()));
    let right = (occluder.x2().max(target.x1()), target.x2());
    let spans: Vec<(f64, f64)> = [left, right]
        .into_iter()
        .filter(|(a, b)| b - a >= 1.0)
        .collect();
    let lo = spans.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = spans.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    (hi > lo).then(|| BBox::new(lo, target.y1(), hi, target.y2()).expect("sub-span of a valid box"))
}

fn paint(labels: &mut [u8], width: u32, height: u32, b: &BBox, value: u8) {
    let (c0, c1) = pixel_span(b.x1(), b.x2(), width);
    let (r0, r1) = pixel_span(b.y1(), b.y2(), height);
    for r in r0..r1 {
        let row = r * width as usize;
        labels[row + c0..row + c1].fill(value);
    }
}

pub fn generate(s: &Scenario) -> Result<SynthOutput, SynthError> {
    if s.width == 0 || s.height == 0 {
        return Err(SynthError::EmptyCanvas);
    }
    for a in &s.actors {
        a.validate()?;
        if let Some(o) = a.occluder {
            if o >= s.actors.len() {
                return Err(SynthError::InvalidTrajectory {
                    actor: a.name.clone(),
                    reason: format!("occluder index {o} out of range"),
                });
            }
        }
    }
    let (w, h) = (s.width as f64, s.height as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut frames = Vec::with_capacity(s.frames as usize);
    let mut gt = Vec::with_capacity(s.frames as usize);
    let mut per_frame = Vec::with_capacity(s.frames as usize);
    let mut observed: Vec<Vec<BBox>> = vec![Vec::new(); s.actors.len()];

    for f in 0..s.frames {
        let mut detections = Vec::new();
        let mut ids = Vec::new();
        let mut fg = Vec::new();
        let mut labels = vec![GT_STATIC; s.width as usize * s.height as usize];
        let mut moving_boxes = Vec::new();

        for (id, a) in s.actors.iter().enumerate() {
            if !a.visible.contains(&f) {
                continue;
            }
            let nominal = a.box_at(f);
            let noisy = if a.jitter > 0.0 {
                let mut d = [0.0; 4];
                for v in &mut d {
                    *v = rng.random_range(-a.jitter..=a.jitter);
                }
                let [x1, y1, x2, y2] = nominal.coords();
                let (x1, x2) = (x1 + d[0], (x2 + d[2]).max(x1 + d[0]));
                let (y1, y2) = (y1 + d[1], (y2 + d[3]).max(y1 + d[1]));
                BBox::new(x1, y1, x2, y2)?
            } else {
                nominal
            };

            let Some(clipped_nominal) = nominal.clip(w, h) else {
                continue;
            };
            if let Some(band) = a.shadow {
                let shadow = BBox::new(nominal.x1(), nominal.y2(), nominal.x2(), nominal.y2() + band)?;
                paint(&mut labels, s.width, s.height, &shadow, GT_SHADOW);
            }

            let visible_enough = clipped_nominal.area() >= MIN_VISIBLE_FRACTION * nominal.area();
            let mut detected = noisy.clip(w, h).filter(|_| visible_enough);
            if in_any(&a.dropouts, f) {
                detected = None;
            }
            if let (Some(b), Some(o)) = (detected, a.occluder) {
                let occ = &s.actors[o];
                if occ.visible.contains(&f) {
                    detected = match occ.box_at(f).clip(w, h) {
                        Some(ob) => visible_part(&b, &ob),
                        None => Some(b),
                    };
                }
            }
            if let Some(b) = detected {
                let b = if a.glitches.contains(&f) {
                    BBox::new(b.x1(), b.y1(), b.x1() + GLITCH_KEEP * b.width(), b.y2())?
                } else {
                    b
                };
                detections.push(Detection {
                    bbox: b,
                    score: a.score.at(f),
                    label: a.label.clone(),
                    mask: None,
                });
                ids.push(id);
                observed[id].push(b);
                if in_any(&a.foreground, f) {
                    fg.push(id);
                    moving_boxes.push(clipped_nominal);
                }
            }
        }
        for b in &moving_boxes {
            paint(&mut labels, s.width, s.height, b, GT_MOVING);
        }

        frames.push(FrameDetections {
            frame: f,
            detections,
        });
        gt.push(GtFrame::new(s.height, s.width, labels).expect("painted with legal levels"));
        per_frame.push(ManifestFrame {
            frame: f,
            detections: ids,
            foreground: fg,
        });
    }

    let mut jitter_checks = Vec::new();
    let defaults = crate::config::Config::default();
    for (id, a) in s.actors.iter().enumerate() {
        if !a.is_static || a.jitter == 0.0 || observed[id].is_empty() {
            continue;
        }
        let mean = mean_box(&observed[id])?;
        let min_iou = observed[id]
            .iter()
            .map(|b| iou(b, &mean))
            .fold(f64::INFINITY, f64::min);
        let min_overlap = observed[id]
            .iter()
            .map(|b| iou(b, &mean).max(iof(b, &mean)))
            .fold(f64::INFINITY, f64::min);
        if min_iou < defaults.tau_move + JITTER_MARGIN || min_overlap < defaults.tau_fore + JITTER_MARGIN {
            return Err(SynthError::JitterTooLarge {
                actor: a.name.clone(),
                amplitude: a.jitter,
                overlap: min_overlap.min(min_iou),
            });
        }
        jitter_checks.push(JitterCheck {
            actor: id,
            amplitude: a.jitter,
            min_iou,
            min_overlap,
        });
    }

    let manifest = Manifest {
        scenario: s.name.clone(),
        width: s.width,
        height: s.height,
        frames: s.frames,
        eval_from: s.eval_from,
        noise: NoiseInfo {
            kind: "uniform".into(),
            seed: s.seed,
        },
        actors: s
            .actors
            .iter()
            .enumerate()
            .map(|(id, a)| ManifestActor {
                id,
                name: a.name.clone(),
                label: a.label.clone(),
                is_static: a.is_static,
            })
            .collect(),
        per_frame,
        events: s.expected_events.clone(),
        jitter_checks,
    };
    Ok(SynthOutput {
        header: StreamHeader {
            width: s.width,
            height: s.height,
            fps: Some(25.0),
            source: format!("synth:{}:seed={}", s.name, s.seed),
        },
        frames,
        gt,
        manifest,
    })
}

// ---- presets ----

const W: u32 = 320;
const H: u32 = 240;
const PERIOD: u64 = 100;
const DWELL: u64 = 50;

fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2).expect("preset boxes are valid")
}

fn fixed(name: &str, label: &str, bx: BBox, frames: u64, score: f64) -> Actor {
    Actor {
        name: name.into(),
        label: label.into(),
        path: vec![(0, bx)],
        visible: 0..frames,
        score: ScoreProfile::Constant { score },
        dropouts: vec![],
        glitches: vec![],
        jitter: 0.0,
        occluder: None,
        foreground: vec![],
        shadow: None,
        is_static: true,
    }
}

/// Walks horizontally at `speed` px/frame from `x0` starting at `start`.
fn walker(name: &str, label: &str, start: u64, end: u64, x0: f64, speed: f64, y: (f64, f64), w: f64) -> Actor {
    let x_end = x0 + speed * (end - 1 - start) as f64;
    Actor {
        name: name.into(),
        label: label.into(),
        path: vec![(start, b(x0, y.0, x0 + w, y.1)), (end - 1, b(x_end, y.0, x_end + w, y.1))],
        visible: start..end,
        score: ScoreProfile::Constant { score: 0.9 },
        dropouts: vec![],
        glitches: vec![],
        jitter: 0.0,
        occluder: None,
        foreground: vec![start..end],
        shadow: None,
        is_static: false,
    }
}

fn scene(name: &str, frames: u64, actors: Vec<Actor>, events: Vec<ExpectedEvent>) -> Scenario {
    Scenario {
        name: name.into(),
        frames,
        width: W,
        height: H,
        seed: 0,
        eval_from: PERIOD,
        actors,
        expected_events: events,
    }
}

pub const PRESETS: &[&str] = &[
    "static_scene",
    "new_arrival",
    "departure",
    "occlusion",
    "drop_and_leave",
    "carried_then_dropped",
    "jitter",
    "dropout",
    "low_score_static",
];

/// Built-in scenario by name, with the given seed.
pub fn preset(name: &str, seed: u64) -> Result<Scenario, SynthError> {
    let mut s = match name {
        "static_scene" => scene(
            name,
            200,
            vec![
                fixed("parked_car", "car", b(40., 150., 100., 186.), 200, 0.9),
                fixed("bench", "bench", b(200., 160., 270., 190.), 200, 0.85),
            ],
            vec![],
        ),
        "new_arrival" => {
            let mut car = walker("car", "car", 0, 150, -70.0, 3.0, (120.0, 156.0), 70.0);
            car.shadow = Some(8.0);
            let mut person = walker("person", "person", 150, 300, 330.0, -2.5, (60.0, 140.0), 28.0);
            person.shadow = Some(6.0);
            scene(
                name,
                300,
                vec![fixed("bench", "bench", b(230., 180., 300., 210.), 300, 0.85), car, person],
                vec![],
            )
        }
        "departure" => {
            let mut car = fixed("car", "car", b(40., 100., 100., 136.), 300, 0.9);
            let depart = 150;
            car.path = vec![
                (0, b(40., 100., 100., 136.)),
                (depart, b(40., 100., 100., 136.)),
                (299, b(338., 100., 398., 136.)),
            ];
            car.foreground = vec![depart + 1..300];
            car.is_static = false;
            scene(
                name,
                300,
                vec![car, fixed("bench", "bench", b(200., 180., 270., 210.), 300, 0.85)],
                vec![],
            )
        }
        "occlusion" => {
            let mut bicycle = fixed("bicycle", "bicycle", b(120., 110., 200., 170.), 300, 0.85);
            bicycle.occluder = Some(1);
            let person = walker("person", "person", 120, 300, -30.0, 3.0, (80.0, 190.0), 30.0);
            scene(name, 300, vec![bicycle, person], vec![])
        }
        "drop_and_leave" => {
            let person = walker("person", "person", 60, 300, -30.0, 3.0, (40.0, 150.0), 30.0);
            let appear = 120;
            let mut bag = fixed("bag", "backpack", b(150., 152., 175., 172.), 300, 0.8);
            bag.visible = appear..300;
            bag.foreground = vec![appear..2 * PERIOD];
            scene(
                name,
                300,
                vec![person, bag],
                vec![ExpectedEvent {
                    actor: 1,
                    rule: AodRule::IsolatedStatic,
                    earliest: appear + DWELL,
                    latest: appear + DWELL + PERIOD,
                }],
            )
        }
        "carried_then_dropped" => {
            let start = 20;
            let drop = 100;
            let person = walker("person", "person", start, 300, -30.0, 3.0, (60.0, 170.0), 30.0);
            let x_drop = -30.0 + 3.0 * (drop - start) as f64 + 3.0;
            let mut bag = fixed("bag", "suitcase", b(x_drop, 140., x_drop + 24., 160.), 300, 0.8);
            bag.path = vec![
                (start, b(-27., 140., -3., 160.)),
                (drop, b(x_drop, 140., x_drop + 24., 160.)),
            ];
            bag.visible = start..300;
            bag.foreground = vec![start..300];
            bag.is_static = false;
            scene(
                name,
                300,
                vec![person, bag],
                vec![ExpectedEvent {
                    actor: 1,
                    rule: AodRule::CarrierSplit,
                    earliest: drop,
                    latest: drop + DWELL + PERIOD,
                }],
            )
        }
        "jitter" => {
            let mut actors = vec![
                fixed("parked_car", "car", b(30., 150., 100., 190.), 300, 0.9),
                fixed("bench", "bench", b(200., 170., 280., 206.), 300, 0.85),
                walker("person", "person", 110, 300, -30.0, 3.0, (40.0, 140.0), 30.0),
            ];
            for a in &mut actors {
                a.jitter = 2.0;
            }
            scene(name, 300, actors, vec![])
        }
        "dropout" => {
            let mut chair = fixed("chair", "chair", b(60., 100., 120., 160.), 300, 0.9);
            chair.dropouts = vec![120..140];
            chair.glitches = vec![150, 170];
            let person = walker("person", "person", 110, 300, -30.0, 3.0, (10.0, 90.0), 30.0);
            scene(name, 300, vec![chair, person], vec![])
        }
        "low_score_static" => {
            let mut plant = fixed("plant", "potted_plant", b(150., 120., 190., 170.), 300, 0.55);
            plant.score = ScoreProfile::Spiking {
                base: 0.55,
                peak: 0.65,
                period: 40,
                phase: 30,
            };
            scene(
                name,
                300,
                vec![fixed("parked_car", "car", b(30., 150., 100., 190.), 300, 0.9), plant],
                vec![],
            )
        }
        other => return Err(SynthError::UnknownScenario(other.to_owned())),
    };
    s.seed = seed;
    Ok(s)
}

/// Names of actors declared foreground at some frame.
pub fn foreground_actor_names(m: &Manifest) -> BTreeSet<String> {
    m.per_frame
        .iter()
        .flat_map(|f| f.foreground.iter())
        .map(|&id| m.actors[id].name.clone())
        .collect()
}
