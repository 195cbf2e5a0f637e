use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use crate::error::{io_at, CliError};
use zbs_client::Client;
use zbs_core::api::{EvalFrame, EvalVideo, EvaluateRequest, GtRuns};
use zbs_core::imageio::{find_mask, list_frames, read_gt, read_mask, ImageIoError};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted masks: one folder per video with a grouping file, else one folder.
    #[arg(long)]
    pub masks: PathBuf,
    /// Ground-truth frames, laid out like `--masks`.
    #[arg(long)]
    pub gt: PathBuf,
    /// JSON file: {"videos": [{"name", "category", "first_frame"?}]}.
    #[arg(long)]
    pub grouping: Option<PathBuf>,
    /// First scored frame when no grouping file is given.
    #[arg(long, default_value_t = 0)]
    pub first_frame: u64,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the plain-text table here as well as to stdout.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Grouping {
    videos: Vec<GroupEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupEntry {
    name: String,
    category: String,
    #[serde(default)]
    first_frame: u64,
}

fn image_error(e: ImageIoError) -> CliError {
    match e {
        ImageIoError::Io { .. } => CliError::io(e),
        _ => CliError::parse(e),
    }
}

fn load_video(name: &str, category: &str, first_frame: u64, masks: &Path, gt: &Path) -> Result<EvalVideo, CliError> {
    let mut frames = Vec::new();
    for (frame, gt_path) in list_frames(gt).map_err(image_error)? {
        if frame < first_frame {
            continue;
        }
        let mask_path = find_mask(masks, frame).ok_or_else(|| {
            CliError::io(anyhow::anyhow!(
                "video '{name}': missing mask for frame {frame} in {}",
                masks.display()
            ))
        })?;
        let g = read_gt(&gt_path).map_err(image_error)?;
        let pred = read_mask(&mask_path).map_err(image_error)?;
        frames.push(EvalFrame {
            frame,
            gt: GtRuns::from_gt(&g),
            pred,
        });
    }
    Ok(EvalVideo {
        name: name.to_owned(),
        category: category.to_owned(),
        first_frame,
        frames,
    })
}

pub async fn eval(client: &Client, args: EvalArgs) -> Result<(), CliError> {
    let videos = match &args.grouping {
        None => vec![load_video("default", "default", args.first_frame, &args.masks, &args.gt)?],
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_at(path))?;
            let g: Grouping = serde_json::from_str(&text)
                .map_err(|e| CliError::parse(anyhow::anyhow!("{}: {e}", path.display())))?;
            g.videos
                .iter()
                .map(|v| load_video(&v.name, &v.category, v.first_frame, &args.masks.join(&v.name), &args.gt.join(&v.name)))
                .collect::<Result<_, _>>()?
        }
    };
    let resp = client.evaluate(&EvaluateRequest { videos }).await?;
    let table = resp.report.to_table();
    print!("{table}");
    if let Some(p) = &args.table {
        std::fs::write(p, &table).map_err(io_at(p))?;
    }
    if let Some(p) = &args.report {
        let bytes = serde_json::to_vec_pretty(&resp).expect("report serializes");
        std::fs::write(p, bytes).map_err(io_at(p))?;
    }
    Ok(())
}
