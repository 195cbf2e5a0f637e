//! Request and response bodies of the HTTP service.

use serde::{Deserialize, Serialize};

use crate::aod::AodParams;
use crate::bgmodel::BackgroundEntry;
use crate::config::Config;
use crate::evaluator::{EvalError, GtFrame, Report, VideoCounts};
use crate::geometry::RleMask;
use crate::stream::StreamHeader;
use crate::sweep::Grid;
use crate::synth::{Manifest, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub header: StreamHeader,
    #[serde(default)]
    pub config: Config,
    #[serde(default)]
    pub aod: Option<AodParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: u64,
    pub frames_processed: u64,
    pub last_frame: Option<u64>,
    pub model: Vec<BackgroundEntry>,
}

/// Ground-truth frame as `(value, run length)` pairs in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtRuns {
    pub size: [u32; 2],
    pub runs: Vec<(u8, u32)>,
}

impl GtRuns {
    pub fn from_gt(gt: &GtFrame) -> Self {
        let mut runs: Vec<(u8, u32)> = Vec::new();
        for &v in gt.labels() {
            match runs.last_mut() {
                Some((last, n)) if *last == v => *n += 1,
                _ => runs.push((v, 1)),
            }
        }
        Self {
            size: [gt.height(), gt.width()],
            runs,
        }
    }

    pub fn to_gt(&self) -> Result<GtFrame, EvalError> {
        let mut labels = Vec::with_capacity(self.size[0] as usize * self.size[1] as usize);
        for &(v, n) in &self.runs {
            labels.extend(std::iter::repeat_n(v, n as usize));
        }
        GtFrame::new(self.size[0], self.size[1], labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFrame {
    pub frame: u64,
    pub gt: GtRuns,
    pub pred: RleMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalVideo {
    pub name: String,
    pub category: String,
    /// Frames before this one are not scored.
    #[serde(default)]
    pub first_frame: u64,
    pub frames: Vec<EvalFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub videos: Vec<EvalVideo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub counts: Vec<VideoCounts>,
    pub report: Report,
}

/// Either a built-in preset by name or a full scenario script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRequest {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthResponse {
    /// Line-delimited JSON detection stream.
    pub stream: String,
    pub gt: Vec<GtRuns>,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub stream: String,
    #[serde(default)]
    pub config: Config,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub gt: Option<Vec<GtRuns>>,
    #[serde(default)]
    pub first_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Machine-readable class: `parse`, `config`, `not_found`, `invalid`.
    pub kind: String,
    pub error: String,
}
