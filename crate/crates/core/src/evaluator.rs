//! Change-detection scoring against 5-level ground truth.
//!
//! Ground-truth pixels: 0 static, 50 shadow, 85 outside the region of
//! interest, 170 unknown, 255 moving. Static and shadow count as negatives,
//! moving as positives; the other two are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RleMask;

pub const GT_STATIC: u8 = 0;
pub const GT_SHADOW: u8 = 50;
pub const GT_NON_ROI: u8 = 85;
pub const GT_UNKNOWN: u8 = 170;
pub const GT_MOVING: u8 = 255;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ground truth is {gt_h}x{gt_w} but prediction is {pred_h}x{pred_w}")]
    DimensionMismatch {
        gt_h: u32,
        gt_w: u32,
        pred_h: u32,
        pred_w: u32,
    },
    #[error("illegal ground-truth value {value} at pixel {index}")]
    IllegalValue { value: u8, index: usize },
    #[error("ground-truth buffer has {got} pixels, expected {expected}")]
    BufferSize { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtFrame {
    height: u32,
    width: u32,
    labels: Vec<u8>,
}

impl GtFrame {
    pub fn new(height: u32, width: u32, labels: Vec<u8>) -> Result<Self, EvalError> {
        let expected = height as usize * width as usize;
        if labels.len() != expected {
            return Err(EvalError::BufferSize {
                got: labels.len(),
                expected,
            });
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, v)| {
            !matches!(
                **v,
                GT_STATIC | GT_SHADOW | GT_NON_ROI | GT_UNKNOWN | GT_MOVING
            )
        }) {
            return Err(EvalError::IllegalValue { value, index });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub ignored: u64,
    pub nb_shadow: u64,
    pub nb_shadow_error: u64,
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.ignored += o.ignored;
        self.nb_shadow += o.nb_shadow;
        self.nb_shadow_error += o.nb_shadow_error;
    }
}

impl Add for EvalCounts {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for EvalCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

impl EvalCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn + self.ignored
    }
}

/// Score one predicted mask against its ground truth, adding into `counts`.
pub fn accumulate(gt: &GtFrame, pred: &RleMask, counts: &mut EvalCounts) -> Result<(), EvalError> {
    if gt.height != pred.height() || gt.width != pred.width() {
        return Err(EvalError::DimensionMismatch {
            gt_h: gt.height,
            gt_w: gt.width,
            pred_h: pred.height(),
            pred_w: pred.width(),
        });
    }
    let mut pos = 0usize;
    let mut set = false;
    for &run in pred.counts() {
        for &label in &gt.labels[pos..pos + run as usize] {
            match (label, set) {
                (GT_MOVING, true) => counts.tp += 1,
                (GT_MOVING, false) => counts.fn_ += 1,
                (GT_STATIC, true) => counts.fp += 1,
                (GT_STATIC, false) => counts.tn += 1,
                (GT_SHADOW, true) => {
                    counts.fp += 1;
                    counts.nb_shadow += 1;
                    counts.nb_shadow_error += 1;
                }
                (GT_SHADOW, false) => {
                    counts.tn += 1;
                    counts.nb_shadow += 1;
                }
                _ => counts.ignored += 1,
            }
        }
        pos += run as usize;
        set = !set;
    }
    Ok(())
}

/// Recall, precision, F-measure and shadow false-positive rate. `None` marks
/// a 0/0 ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f_measure: Option<f64>,
    pub fpr_s: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &EvalCounts) -> Metrics {
    let recall = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f_measure = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Metrics {
        recall,
        precision,
        f_measure,
        fpr_s: ratio(c.nb_shadow_error, c.nb_shadow),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoCounts {
    pub name: String,
    pub category: String,
    pub counts: EvalCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub videos: Vec<ReportRow>,
    pub categories: Vec<ReportRow>,
    pub overall: ReportRow,
}

fn mean_defined<'a>(vals: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let (sum, n) = vals
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn mean_metrics(rows: &[Metrics]) -> Metrics {
    Metrics {
        recall: mean_defined(rows.iter().map(|m| &m.recall)),
        precision: mean_defined(rows.iter().map(|m| &m.precision)),
        f_measure: mean_defined(rows.iter().map(|m| &m.f_measure)),
        fpr_s: mean_defined(rows.iter().map(|m| &m.fpr_s)),
    }
}

/// Per-video metrics, unweighted per-category means of the defined values,
/// and the unweighted mean of category means as the overall row.
pub fn aggregate(videos: &[VideoCounts]) -> Report {
    let video_rows: Vec<ReportRow> = videos
        .iter()
        .map(|v| ReportRow {
            name: v.name.clone(),
            metrics: metrics(&v.counts),
        })
        .collect();

    let mut groups: BTreeMap<&str, Vec<Metrics>> = BTreeMap::new();
    for (v, row) in videos.iter().zip(&video_rows) {
        groups.entry(&v.category).or_default().push(row.metrics);
    }
    let categories: Vec<ReportRow> = groups
        .into_iter()
        .map(|(name, rows)| ReportRow {
            name: name.to_owned(),
            metrics: mean_metrics(&rows),
        })
        .collect();
    let cat_metrics: Vec<Metrics> = categories.iter().map(|r| r.metrics).collect();
    Report {
        videos: video_rows,
        categories,
        overall: ReportRow {
            name: "overall".into(),
            metrics: mean_metrics(&cat_metrics),
        },
    }
}

impl Report {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undef".to_string(), |x| format!("{x:.4}"));
        let rows: Vec<(&str, &str, &ReportRow)> = self
            .videos
            .iter()
            .map(|r| ("video", "", r))
            .chain(self.categories.iter().map(|r| ("category", "", r)))
            .chain(std::iter::once(("overall", "", &self.overall)))
            .collect();
        let name_w = rows
            .iter()
            .map(|(_, _, r)| r.name.len())
            .max()
            .unwrap_or(0)
            .max(4);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8}  {:<name_w$}  {:>8}  {:>8}  {:>8}  {:>8}",
            "level", "name", "Re", "Pr", "F-M", "FPR-S"
        );
        for (level, _, r) in rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:<8}  {:<name_w$}  {:>8}  {:>8}  {:>8}  {:>8}",
                level,
                r.name,
                fmt(m.recall),
                fmt(m.precision),
                fmt(m.f_measure),
                fmt(m.fpr_s)
            );
        }
        out
    }
}
