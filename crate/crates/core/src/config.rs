//! Pipeline thresholds and switches.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracker::TrackerParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfUnitRange { name: &'static str, value: f64 },
    #[error("delta_conf = {delta} exceeds tau_conf = {tau}")]
    SlackTooLarge { tau: f64, delta: f64 },
    #[error("delta_conf must be non-negative, got {0}")]
    NegativeSlack(f64),
    #[error("{name} must be at least 1")]
    NotPositive { name: &'static str },
    #[error("filter_window must be odd, got {0}")]
    EvenWindow(usize),
}

/// How a detection is compared against the background model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Maxima over every model entry.
    #[default]
    MaxOverModel,
    /// Only the entry keyed by the detection's own track id.
    ById,
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max-over-model" => Ok(Self::MaxOverModel),
            "by-id" => Ok(Self::ById),
            other => Err(format!("unknown match mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Confidence floor for foreground selection.
    pub tau_conf: f64,
    /// Static/moving split on the filtered trajectory IoU.
    pub tau_move: f64,
    /// Foreground decision threshold for both IoU and IoF.
    pub tau_fore: f64,
    /// Confidence slack for the tracking / background-modeling branch.
    pub delta_conf: f64,
    /// Frames between background model updates.
    pub update_period: u64,
    /// Median filter width over the trajectory IoU sequence; 1 disables it.
    pub filter_window: usize,
    pub match_mode: MatchMode,
    /// When false the selector decides on IoU alone.
    pub use_iof: bool,
    pub tracker: TrackerParams,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            tau_conf: 0.6,
            tau_move: 0.5,
            tau_fore: 0.8,
            delta_conf: 0.1,
            update_period: 100,
            filter_window: 5,
            match_mode: MatchMode::MaxOverModel,
            use_iof: true,
            tracker: TrackerParams::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("tau_conf", self.tau_conf),
            ("tau_move", self.tau_move),
            ("tau_fore", self.tau_fore),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::OutOfUnitRange { name, value });
            }
        }
        if !(self.delta_conf >= 0.0) {
            return Err(ConfigError::NegativeSlack(self.delta_conf));
        }
        if self.tau_conf - self.delta_conf < -1e-12 {
            return Err(ConfigError::SlackTooLarge {
                tau: self.tau_conf,
                delta: self.delta_conf,
            });
        }
        if self.update_period == 0 {
            return Err(ConfigError::NotPositive {
                name: "update_period",
            });
        }
        if self.filter_window == 0 {
            return Err(ConfigError::NotPositive {
                name: "filter_window",
            });
        }
        if self.filter_window % 2 == 0 {
            return Err(ConfigError::EvenWindow(self.filter_window));
        }
        self.tracker.validate()
    }

    /// Lower confidence bound used by the tracking branch.
    pub fn background_conf(&self) -> f64 {
        (self.tau_conf - self.delta_conf).max(0.0)
    }
}
