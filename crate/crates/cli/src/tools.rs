use std::path::PathBuf;

use clap::Args;

use crate::error::{io_at, CliError};
use crate::settings::ConfigArgs;
use zbs_client::Client;
use zbs_core::api::{GtRuns, SweepRequest, SynthRequest};
use zbs_core::evaluator::{GtFrame, GT_UNKNOWN};
use zbs_core::imageio::{frame_file_name, gt_to_pgm, list_frames, read_gt, ImageIoError};
use zbs_core::sweep::{rows_to_table, Grid};
use zbs_core::synth::{Scenario, PRESETS};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Built-in scenario name.
    pub preset: Option<String>,
    /// Scenario script (JSON) instead of a preset.
    #[arg(long, conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synth-out")]
    pub out: PathBuf,
    /// List built-in scenarios and exit.
    #[arg(long)]
    pub list: bool,
}

pub async fn synth(client: &Client, args: SynthArgs) -> Result<(), CliError> {
    if args.list {
        for p in PRESETS {
            println!("{p}");
        }
        return Ok(());
    }
    let scenario = match &args.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_at(p))?;
            let s: Scenario = serde_json::from_str(&text)
                .map_err(|e| CliError::parse(anyhow::anyhow!("{}: {e}", p.display())))?;
            Some(s)
        }
        None => None,
    };
    if let Some(name) = args.preset.as_deref().filter(|n| !PRESETS.contains(n)) {
        return Err(CliError::config(anyhow::anyhow!(
            "unknown scenario '{name}'; choose one of {}",
            PRESETS.join(", ")
        )));
    }
    if scenario.is_none() && args.preset.is_none() {
        return Err(CliError::config(anyhow::anyhow!(
            "name a preset ({}) or pass --scenario",
            PRESETS.join(", ")
        )));
    }
    let resp = client
        .synth(&SynthRequest {
            preset: args.preset.clone(),
            scenario,
            seed: args.seed,
        })
        .await?;

    let gt_dir = args.out.join("gt");
    crate::ensure_dir(&gt_dir)?;
    let stream_path = args.out.join("stream.jsonl");
    std::fs::write(&stream_path, &resp.stream).map_err(io_at(&stream_path))?;
    let manifest_path = args.out.join("manifest.json");
    let manifest = serde_json::to_vec_pretty(&resp.manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, manifest).map_err(io_at(&manifest_path))?;
    for (i, runs) in resp.gt.iter().enumerate() {
        let gt = runs.to_gt().map_err(|e| CliError::new(crate::error::EXIT_OTHER, e))?;
        let path = gt_dir.join(frame_file_name(i as u64));
        std::fs::write(&path, gt_to_pgm(&gt)).map_err(io_at(&path))?;
    }
    println!(
        "{}: {} frames, {} actors -> {}",
        resp.manifest.scenario,
        resp.manifest.frames,
        resp.manifest.actors.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    pub stream: PathBuf,
    /// Ground-truth folder; without it rows carry no metrics.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub first_frame: u64,
    /// Grid file (JSON): {"tau_conf": [...], "tau_move": [...], "tau_fore": [...]}.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub conf_values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub move_values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub fore_values: Vec<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Write rows as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Ground truth indexed by frame number. Gaps before `first_frame` are
/// filled with ignored frames.
fn load_gt(dir: &PathBuf, first_frame: u64) -> Result<Vec<GtRuns>, CliError> {
    let image_err = |e: ImageIoError| match e {
        ImageIoError::Io { .. } => CliError::io(e),
        _ => CliError::parse(e),
    };
    let mut out: Vec<GtRuns> = Vec::new();
    for (frame, path) in list_frames(dir).map_err(image_err)? {
        let gt = read_gt(&path).map_err(image_err)?;
        while (out.len() as u64) < frame {
            let missing = out.len() as u64;
            if missing >= first_frame {
                return Err(CliError::io(anyhow::anyhow!(
                    "missing ground truth for frame {missing} in {}",
                    dir.display()
                )));
            }
            let filler = GtFrame::new(gt.height(), gt.width(), vec![GT_UNKNOWN; gt.labels().len()])
                .expect("uniform legal frame");
            out.push(GtRuns::from_gt(&filler));
        }
        out.push(GtRuns::from_gt(&gt));
    }
    Ok(out)
}

pub async fn sweep(client: &Client, args: SweepArgs) -> Result<(), CliError> {
    let config = args.config.resolve()?;
    let mut grid = match &args.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_at(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::config(anyhow::anyhow!("{}: {e}", p.display())))?
        }
        None => Grid::default(),
    };
    for (axis, values) in [
        (&mut grid.tau_conf, &args.conf_values),
        (&mut grid.tau_move, &args.move_values),
        (&mut grid.tau_fore, &args.fore_values),
    ] {
        if !values.is_empty() {
            axis.clone_from(values);
        }
    }
    let stream = std::fs::read_to_string(&args.stream).map_err(io_at(&args.stream))?;
    let gt = args.gt.as_ref().map(|d| load_gt(d, args.first_frame)).transpose()?;
    let rows = client
        .sweep(&SweepRequest {
            stream,
            config,
            grid,
            gt,
            first_frame: args.first_frame,
        })
        .await?;
    print!("{}", rows_to_table(&rows));
    if let Some(p) = &args.out {
        std::fs::write(p, serde_json::to_vec_pretty(&rows).expect("rows serialize")).map_err(io_at(p))?;
    }
    Ok(())
}
