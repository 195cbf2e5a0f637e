//! Pipeline settings: optional JSON file, then flag overrides.

use std::path::PathBuf;

use clap::Args;

use crate::error::{io_at, CliError};
use zbs_core::aod::AodParams;
use zbs_core::{Config, MatchMode};

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Confidence floor for foreground candidates.
    #[arg(long = "conf")]
    pub tau_conf: Option<f64>,
    /// Confidence slack for tracking and background modeling.
    #[arg(long)]
    pub delta_conf: Option<f64>,
    /// Static/moving threshold on the filtered trajectory IoU.
    #[arg(long = "move")]
    pub tau_move: Option<f64>,
    /// Foreground threshold on IoU and IoF against the model.
    #[arg(long = "fore")]
    pub tau_fore: Option<f64>,
    /// Frames between background model updates.
    #[arg(long)]
    pub period: Option<u64>,
    /// Median filter width over trajectory IoU (odd; 1 disables).
    #[arg(long)]
    pub filter_window: Option<usize>,
    #[arg(long, value_parser = parse_match_mode)]
    pub match_mode: Option<MatchMode>,
    /// Decide on IoU only.
    #[arg(long)]
    pub no_iof: bool,
}

fn parse_match_mode(s: &str) -> Result<MatchMode, String> {
    s.parse()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(anyhow::anyhow!("{}: {e}", path.display())))
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(p) => read_json(p)?,
            None => Config::default(),
        };
        if let Some(v) = self.tau_conf {
            cfg.tau_conf = v;
        }
        if let Some(v) = self.delta_conf {
            cfg.delta_conf = v;
        }
        if let Some(v) = self.tau_move {
            cfg.tau_move = v;
        }
        if let Some(v) = self.tau_fore {
            cfg.tau_fore = v;
        }
        if let Some(v) = self.period {
            cfg.update_period = v;
        }
        if let Some(v) = self.filter_window {
            cfg.filter_window = v;
        }
        if let Some(v) = self.match_mode {
            cfg.match_mode = v;
        }
        if self.no_iof {
            cfg.use_iof = false;
        }
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }
}

pub fn resolve_aod(path: Option<&PathBuf>, dwell: Option<u64>) -> Result<AodParams, CliError> {
    let mut p = match path {
        Some(p) => read_json(p)?,
        None => AodParams::default(),
    };
    if let Some(d) = dwell {
        p.dwell_frames = d;
    }
    p.validate().map_err(CliError::config)?;
    Ok(p)
}
