//! Instance-level background subtraction downstream of an object detector.
//!
//! Detections arrive per frame through [`stream`]. Confident instances are
//! candidates for foreground; a slightly wider set feeds the [`tracker`],
//! whose static tracks make up the [`bgmodel`]. The [`selector`] keeps the
//! candidates that overlap no background entry and renders them to a mask.
//! [`pipeline::Pipeline`] wires these stages together for one stream.

pub mod aod;
pub mod api;
pub mod bgmodel;
pub mod config;
pub mod evaluator;
pub mod geometry;
pub mod imageio;
pub mod pipeline;
pub mod selector;
pub mod stream;
pub mod sweep;
pub mod synth;
pub mod tracker;

pub use config::{Config, MatchMode};
pub use geometry::{iof, iou, BBox, RleMask};
pub use pipeline::{FrameOutput, Pipeline, RunReport};
pub use stream::{Detection, FrameDetections, StreamHeader};
