//! Foreground instance selection against the background model.

use serde::{Deserialize, Serialize};

use crate::bgmodel::BackgroundEntry;
use crate::config::{Config, MatchMode};
use crate::geometry::{iof, iou, union_masks, BBox, RleMask};
use crate::stream::Detection;
use crate::tracker::TrackId;

/// A confident detection together with the track it was associated with.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub track_id: Option<TrackId>,
    pub detection: &'a Detection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForegroundInstance {
    pub track_id: Option<TrackId>,
    pub detection: Detection,
    pub max_iou: f64,
    pub max_iof: f64,
}

impl ForegroundInstance {
    /// The instance mask, or its filled box when the detector gave none.
    pub fn mask(&self, height: u32, width: u32) -> RleMask {
        match &self.detection.mask {
            Some(m) => m.clone(),
            None => RleMask::from_box(height, width, &self.detection.bbox),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: u64,
    pub foreground: Vec<ForegroundInstance>,
    /// Confident detections classified as background.
    pub background_count: usize,
    pub mask: RleMask,
}

/// Highest IoU and IoF of `bbox` against the relevant model entries.
pub fn overlap_with_model(
    bbox: &BBox,
    track_id: Option<TrackId>,
    model: &[BackgroundEntry],
    mode: MatchMode,
) -> (f64, f64) {
    model
        .iter()
        .filter(|e| match mode {
            MatchMode::MaxOverModel => true,
            MatchMode::ById => track_id == Some(e.track_id),
        })
        .fold((0.0f64, 0.0f64), |(u, f), e| {
            (u.max(iou(bbox, &e.mean_box)), f.max(iof(bbox, &e.mean_box)))
        })
}

/// Foreground iff both overlaps stay below `tau_fore`. A threshold of 1 or
/// more disables the test and keeps every instance.
pub fn is_foreground(max_iou: f64, max_iof: f64, cfg: &Config) -> bool {
    if cfg.tau_fore >= 1.0 {
        return true;
    }
    max_iou < cfg.tau_fore && (!cfg.use_iof || max_iof < cfg.tau_fore)
}

pub fn select(
    frame: u64,
    candidates: &[Candidate<'_>],
    model: &[BackgroundEntry],
    cfg: &Config,
    height: u32,
    width: u32,
) -> FrameResult {
    let mut foreground = Vec::new();
    let mut background_count = 0;
    for c in candidates {
        let (max_iou, max_iof) =
            overlap_with_model(&c.detection.bbox, c.track_id, model, cfg.match_mode);
        if is_foreground(max_iou, max_iof, cfg) {
            foreground.push(ForegroundInstance {
                track_id: c.track_id,
                detection: c.detection.clone(),
                max_iou,
                max_iof,
            });
        } else {
            background_count += 1;
        }
    }
    let masks: Vec<RleMask> = foreground.iter().map(|f| f.mask(height, width)).collect();
    let mask = union_masks(&masks, height, width)
        .expect("instance masks are validated against the frame size");
    FrameResult {
        frame,
        foreground,
        background_count,
        mask,
    }
}

/// One foreground instance in the per-instance output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub frame: u64,
    pub track_id: Option<TrackId>,
    pub label: String,
    pub bbox: BBox,
    pub score: f64,
    pub max_iou: f64,
    pub max_iof: f64,
    pub mask: RleMask,
}

pub fn render_instance_output(result: &FrameResult) -> Vec<InstanceRecord> {
    let (h, w) = (result.mask.height(), result.mask.width());
    result
        .foreground
        .iter()
        .map(|f| InstanceRecord {
            frame: result.frame,
            track_id: f.track_id,
            label: f.detection.label.clone(),
            bbox: f.detection.bbox,
            score: f.detection.score,
            max_iou: f.max_iou,
            max_iof: f.max_iof,
            mask: f.mask(h, w),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(b: BBox) -> Detection {
        Detection { bbox: b, score: 0.9, label: "bicycle".into(), mask: None }
    }

    fn entry(id: TrackId, b: BBox) -> BackgroundEntry {
        BackgroundEntry { track_id: id, mean_box: b, label: "bicycle".into(), last_confirmed: 100 }
    }

    fn run(dets: &[Detection], model: &[BackgroundEntry], cfg: &Config) -> FrameResult {
        let cands: Vec<Candidate> = dets
            .iter()
            .map(|d| Candidate { track_id: None, detection: d })
            .collect();
        select(0, &cands, model, cfg, 32, 32)
    }

    #[test]
    fn cold_model_keeps_everything() {
        let r = run(&[det(bx(1., 1., 5., 5.))], &[], &Config::default());
        assert_eq!(r.foreground.len(), 1);
        assert_eq!((r.foreground[0].max_iou, r.foreground[0].max_iof), (0.0, 0.0));
        assert_eq!(r.mask.area(), 16);
    }

    #[test]
    fn identical_box_is_background() {
        let b = bx(0., 0., 10., 10.);
        let r = run(&[det(b)], &[entry(1, b)], &Config::default());
        assert!(r.foreground.is_empty());
        assert_eq!(r.background_count, 1);
        assert_eq!(r.mask.area(), 0);
    }

    #[test]
    fn half_occluded_static_object() {
        let model = [entry(1, bx(0., 0., 10., 20.))];
        let d = [det(bx(0., 0., 10., 10.))];
        let cfg = Config::default();
        let (u, f) = overlap_with_model(&d[0].bbox, None, &model, cfg.match_mode);
        assert_eq!((u, f), (0.5, 1.0));
        assert!(run(&d, &model, &cfg).foreground.is_empty());
        // IoU alone would call it foreground.
        let iou_only = Config { use_iof: false, ..cfg };
        assert_eq!(run(&d, &model, &iou_only).foreground.len(), 1);
    }

    #[test]
    fn by_id_mode_ignores_other_entries() {
        let b = bx(0., 0., 10., 10.);
        let d = det(b);
        let model = [entry(9, b)];
        let cfg = Config { match_mode: MatchMode::ById, ..Config::default() };
        let other = [Candidate { track_id: Some(2), detection: &d }];
        assert_eq!(select(0, &other, &model, &cfg, 16, 16).foreground.len(), 1);
        let same = [Candidate { track_id: Some(9), detection: &d }];
        assert!(select(0, &same, &model, &cfg, 16, 16).foreground.is_empty());
    }

    #[test]
    fn tau_fore_one_keeps_everything() {
        let b = bx(0., 0., 10., 10.);
        let cfg = Config { tau_fore: 1.0, ..Config::default() };
        assert_eq!(run(&[det(b)], &[entry(1, b)], &cfg).foreground.len(), 1);
    }

    #[test]
    fn instance_output() {
        let empty = run(&[], &[], &Config::default());
        assert!(render_instance_output(&empty).is_empty());
        assert_eq!(empty.mask.area(), 0);

        let mut with_mask = det(bx(20., 20., 30., 30.));
        with_mask.mask = Some(RleMask::from_box(32, 32, &bx(21., 21., 23., 23.)));
        let r = run(&[det(bx(0., 0., 4., 4.)), with_mask], &[], &Config::default());
        let recs = render_instance_output(&r);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].mask, RleMask::from_box(32, 32, &bx(0., 0., 4., 4.)));
        assert_eq!(recs[1].mask.area(), 4);
        assert_eq!(r.mask, union_masks(&[recs[0].mask.clone(), recs[1].mask.clone()], 32, 32).unwrap());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..28.0f64, 0.0..28.0f64, 1.0..12.0f64, 1.0..12.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn lowering_tau_fore_never_adds_foreground(
            dets in prop::collection::vec(arb_box(), 0..6),
            model in prop::collection::vec(arb_box(), 0..6),
            hi in 0.0..=1.0f64, frac in 0.0..=1.0f64,
        ) {
            let lo = hi * frac;
            let dets: Vec<Detection> = dets.into_iter().map(det).collect();
            let model: Vec<_> = model.into_iter().enumerate().map(|(i, b)| entry(i as u64, b)).collect();
            let at = |t: f64| run(&dets, &model, &Config { tau_fore: t, ..Config::default() });
            let (a, b) = (at(hi), at(lo));
            for f in &b.foreground {
                prop_assert!(a.foreground.iter().any(|g| g.detection == f.detection));
            }
            prop_assert!(b.mask.area() <= a.mask.area());
        }

        #[test]
        fn extra_entry_never_adds_foreground(
            dets in prop::collection::vec(arb_box(), 0..6),
            model in prop::collection::vec(arb_box(), 0..6),
            extra in arb_box(),
        ) {
            let dets: Vec<Detection> = dets.into_iter().map(det).collect();
            let mut model: Vec<_> = model.into_iter().enumerate().map(|(i, b)| entry(i as u64, b)).collect();
            let before = run(&dets, &model, &Config::default());
            model.push(entry(99, extra));
            let after = run(&dets, &model, &Config::default());
            prop_assert!(after.foreground.len() <= before.foreground.len());
            for f in &after.foreground {
                prop_assert!(before.foreground.iter().any(|g| g.detection == f.detection));
            }
        }

        #[test]
        fn mask_is_union_of_instance_boxes(dets in prop::collection::vec(arb_box(), 0..6)) {
            let dets: Vec<Detection> = dets.into_iter().map(det).collect();
            let r = run(&dets, &[], &Config::default());
            let cells = r.mask.decode();
            for y in 0..32u32 {
                for x in 0..32u32 {
                    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                    let inside = dets.iter().any(|d| {
                        let b = d.bbox;
                        cx >= b.x1() && cx < b.x2() && cy >= b.y1() && cy < b.y2()
                    });
                    prop_assert_eq!(cells[(y * 32 + x) as usize], inside);
                }
            }
        }
    }
}
