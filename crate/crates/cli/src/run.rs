use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::JoinHandle;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use crate::error::{io_at, CliError};
use crate::settings::{resolve_aod, ConfigArgs};
use zbs_client::Client;
use zbs_core::api::CreateSession;
use zbs_core::imageio::{frame_file_name, mask_to_pgm};
use zbs_core::pipeline::RunReport;
use zbs_core::selector::render_instance_output;
use zbs_core::stream::{parse_stream, FrameDetections, StreamError};

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Detection stream (line-delimited JSON).
    pub stream: PathBuf,
    /// Output directory for everything not redirected below.
    #[arg(long, default_value = "zbs-out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub masks_out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub events_out: Option<PathBuf>,
    #[arg(long)]
    pub instances_out: Option<PathBuf>,
    /// Abandoned-object parameters (JSON).
    #[arg(long)]
    pub aod_config: Option<PathBuf>,
    /// Override the abandoned-object dwell time in frames.
    #[arg(long)]
    pub dwell: Option<u64>,
    /// Write per-frame wall-clock timings here.
    #[arg(long)]
    pub timings: Option<PathBuf>,
    /// Frames per request to the service.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
}

fn stream_error(e: StreamError) -> CliError {
    if e.is_io() {
        CliError::io(e)
    } else {
        CliError::parse(e)
    }
}

/// Writes mask files off the pipeline thread through a bounded queue.
struct MaskWriter {
    tx: Option<std::sync::mpsc::SyncSender<(PathBuf, Vec<u8>)>>,
    handle: Option<JoinHandle<Result<(), CliError>>>,
}

impl MaskWriter {
    fn start() -> Self {
        let (tx, rx) = sync_channel(256);
        let handle = std::thread::spawn(move || write_all(rx));
        Self {
            tx: Some(tx),
            handle: Some(handle),
        }
    }

    fn push(&self, path: PathBuf, bytes: Vec<u8>) -> Result<(), CliError> {
        let tx = self.tx.as_ref().expect("writer open");
        if tx.send((path, bytes)).is_err() {
            // The writer stopped on an error; `finish` reports it.
            return Err(CliError::io(anyhow::anyhow!("mask writer stopped")));
        }
        Ok(())
    }

    fn finish(mut self) -> Result<(), CliError> {
        drop(self.tx.take());
        self.handle
            .take()
            .expect("joined once")
            .join()
            .map_err(|_| CliError::io(anyhow::anyhow!("mask writer panicked")))?
    }
}

fn write_all(rx: Receiver<(PathBuf, Vec<u8>)>) -> Result<(), CliError> {
    for (path, bytes) in rx {
        std::fs::write(&path, bytes).map_err(io_at(&path))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

fn write_jsonl<T: Serialize>(w: &mut impl Write, v: &T, path: &Path) -> Result<(), CliError> {
    serde_json::to_writer(&mut *w, v).map_err(|e| CliError::io(anyhow::anyhow!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(io_at(path))
}

fn artifact_name(path: &Path, out: &Path) -> String {
    path.strip_prefix(out).unwrap_or(path).display().to_string()
}

#[derive(Serialize)]
struct FrameTiming {
    frame: u64,
    millis: f64,
}

pub async fn run(client: &Client, args: RunArgs, aod: bool) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let aod_params = if aod || args.aod_config.is_some() {
        Some(resolve_aod(args.aod_config.as_ref(), args.dwell)?)
    } else {
        None
    };
    let file = File::open(&args.stream).map_err(io_at(&args.stream))?;
    let (header, mut frames) = parse_stream(BufReader::new(file)).map_err(stream_error)?;

    let out = &args.out;
    crate::ensure_dir(out)?;
    let masks_dir = args.masks_out.clone().unwrap_or_else(|| out.join("masks"));
    crate::ensure_dir(&masks_dir)?;
    let report_path = args.report.clone().unwrap_or_else(|| out.join("report.json"));
    let instances_path = args.instances_out.clone().unwrap_or_else(|| out.join("instances.jsonl"));
    let events_path = args.events_out.clone().unwrap_or_else(|| out.join("events.jsonl"));
    let config_path = out.join("config.json");
    std::fs::write(&config_path, serde_json::to_vec_pretty(&cfg).expect("config serializes")).map_err(io_at(&config_path))?;

    let mut instances = create(&instances_path)?;
    let mut events = aod_params.as_ref().map(|_| create(&events_path)).transpose()?;
    let mut report = RunReport::new(&header, &cfg, aod_params.as_ref());
    report.artifacts.push(artifact_name(&config_path, out));
    report.artifacts.push(artifact_name(&masks_dir, out));
    report.artifacts.push(artifact_name(&instances_path, out));
    if events.is_some() {
        report.artifacts.push(artifact_name(&events_path, out));
    }
    let mut timings = Vec::new();

    let session = client
        .create_session(&CreateSession {
            header,
            config: cfg.clone(),
            aod: aod_params.clone(),
        })
        .await?;
    let writer = MaskWriter::start();
    let batch_size = args.batch.max(1);

    let result: Result<(), CliError> = async {
        loop {
            let batch: Vec<FrameDetections> = frames
                .by_ref()
                .take(batch_size)
                .collect::<Result<_, _>>()
                .map_err(stream_error)?;
            if batch.is_empty() {
                break;
            }
            let started = Instant::now();
            let outputs = client.process_batch(session, &batch).await?;
            let per_frame = started.elapsed().as_secs_f64() * 1000.0 / outputs.len() as f64;
            for o in &outputs {
                let frame = o.result.frame;
                writer.push(masks_dir.join(frame_file_name(frame)), mask_to_pgm(&o.result.mask))?;
                for rec in render_instance_output(&o.result) {
                    write_jsonl(&mut instances, &rec, &instances_path)?;
                }
                if let Some(ev) = events.as_mut() {
                    for e in &o.events {
                        write_jsonl(ev, e, &events_path)?;
                        println!("frame {} track {} {} {}", e.frame, e.track_id, e.label, e.rule);
                    }
                }
                report.record(o);
                timings.push(FrameTiming { frame, millis: per_frame });
            }
        }
        Ok(())
    }
    .await;
    let closed = client.close_session(session).await;
    let written = writer.finish();
    result?;
    written?;
    closed?;

    instances.flush().map_err(io_at(&instances_path))?;
    if let Some(ev) = events.as_mut() {
        ev.flush().map_err(io_at(&events_path))?;
    }
    if let Some(p) = &args.timings {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &timings).map_err(|e| CliError::io(anyhow::anyhow!("{e}")))?;
        w.flush().map_err(io_at(p))?;
    }
    let mut w = create(&report_path)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| CliError::io(anyhow::anyhow!("{e}")))?;
    w.flush().map_err(io_at(&report_path))?;

    println!(
        "{} frames, {} foreground instances, {} model updates, {} events",
        report.frames,
        report.foreground_instances,
        report.model_updates.len(),
        report.events
    );
    Ok(())
}
