//! Scoring pipeline output against ground truth, and threshold sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::evaluator::{accumulate, metrics, EvalCounts, EvalError, GtFrame, Metrics};
use crate::pipeline::{run_frames, FrameOutput, PipelineError};
use crate::stream::{split_by_confidence, FrameDetections, StreamHeader};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("no ground truth for frame {0}")]
    MissingGt(u64),
    #[error("frame {frame}: {source}")]
    Eval {
        frame: u64,
        #[source]
        source: EvalError,
    },
    #[error("grid point tau_conf={tau_conf} tau_move={tau_move} tau_fore={tau_fore}: {source}")]
    Point {
        tau_conf: f64,
        tau_move: f64,
        tau_fore: f64,
        #[source]
        source: PipelineError,
    },
}

/// Score frames at or after `first_frame`; `gt[i]` is the ground truth of
/// frame `i`.
pub fn score_outputs(outputs: &[FrameOutput], gt: &[GtFrame], first_frame: u64) -> Result<EvalCounts, SweepError> {
    let mut counts = EvalCounts::default();
    for out in outputs.iter().filter(|o| o.result.frame >= first_frame) {
        let f = out.result.frame;
        let g = gt.get(f as usize).ok_or(SweepError::MissingGt(f))?;
        accumulate(g, &out.result.mask, &mut counts).map_err(|source| SweepError::Eval { frame: f, source })?;
    }
    Ok(counts)
}

/// Values to try for each threshold. An empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub tau_conf: Vec<f64>,
    pub tau_move: Vec<f64>,
    pub tau_fore: Vec<f64>,
}

impl Grid {
    pub fn points(&self, base: &Config) -> Vec<Config> {
        let axis = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let mut out = Vec::new();
        for &c in &axis(&self.tau_conf, base.tau_conf) {
            for &m in &axis(&self.tau_move, base.tau_move) {
                for &f in &axis(&self.tau_fore, base.tau_fore) {
                    out.push(Config {
                        tau_conf: c,
                        tau_move: m,
                        tau_fore: f,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_conf: f64,
    pub tau_move: f64,
    pub tau_fore: f64,
    /// Detections at or above `tau_conf` in scored frames.
    pub confident_detections: u64,
    pub foreground_instances: u64,
    pub foreground_pixels: u64,
    pub counts: Option<EvalCounts>,
    pub metrics: Option<Metrics>,
}

/// One row per grid point, in grid order. Rows are scored when `gt` is given.
pub fn sweep(
    header: &StreamHeader,
    frames: &[FrameDetections],
    base: &Config,
    grid: &Grid,
    gt: Option<&[GtFrame]>,
    first_frame: u64,
) -> Result<Vec<SweepRow>, SweepError> {
    grid.points(base)
        .par_iter()
        .map(|cfg| {
            let point_err = |source| SweepError::Point {
                tau_conf: cfg.tau_conf,
                tau_move: cfg.tau_move,
                tau_fore: cfg.tau_fore,
                source,
            };
            let outputs = run_frames(header, frames, cfg, None).map_err(point_err)?;
            let scored = |o: &&FrameOutput| o.result.frame >= first_frame;
            let confident_detections = frames
                .iter()
                .filter(|f| f.frame >= first_frame)
                .map(|f| split_by_confidence(f, cfg).foreground.len() as u64)
                .sum();
            let foreground_instances = outputs.iter().filter(scored).map(|o| o.result.foreground.len() as u64).sum();
            let foreground_pixels = outputs.iter().filter(scored).map(|o| o.result.mask.area()).sum();
            let counts = gt.map(|g| score_outputs(&outputs, g, first_frame)).transpose()?;
            Ok(SweepRow {
                tau_conf: cfg.tau_conf,
                tau_move: cfg.tau_move,
                tau_fore: cfg.tau_fore,
                confident_detections,
                foreground_instances,
                foreground_pixels,
                metrics: counts.as_ref().map(metrics),
                counts,
            })
        })
        .collect()
}

/// Plain-text rendering of sweep rows.
pub fn rows_to_table(rows: &[SweepRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "undef".to_string(), |x| format!("{x:.4}"));
    let mut out = format!(
        "{:>8}  {:>8}  {:>8}  {:>10}  {:>10}  {:>8}  {:>8}  {:>8}\n",
        "conf", "move", "fore", "fg_inst", "fg_px", "Pr", "Re", "F-M"
    );
    for r in rows {
        let m = r.metrics.unwrap_or_default();
        out.push_str(&format!(
            "{:>8.3}  {:>8.3}  {:>8.3}  {:>10}  {:>10}  {:>8}  {:>8}  {:>8}\n",
            r.tau_conf,
            r.tau_move,
            r.tau_fore,
            r.foreground_instances,
            r.foreground_pixels,
            fmt(m.precision),
            fmt(m.recall),
            fmt(m.f_measure)
        ));
    }
    out
}
