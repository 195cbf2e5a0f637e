//! Line-delimited detection stream: one JSON header line followed by one
//! JSON record per frame.
//!
//! ```text
//! {"type":"header","width":320,"height":240,"fps":25.0,"source":"cam0"}
//! {"type":"frame","frame":0,"detections":[{"bbox":[1,2,30,40],"score":0.9,"label":"car","mask":null}]}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::geometry::{BBox, RleMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub fps: Option<f64>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub label: String,
    #[serde(default)]
    pub mask: Option<RleMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Record {
    Header(StreamHeader),
    Frame(FrameDetections),
}

#[derive(Debug, Error)]
pub enum StreamErrorKind {
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("stream is empty, expected a header line")]
    MissingHeader,
    #[error("first record must be a header")]
    HeaderNotFirst,
    #[error("unexpected second header")]
    DuplicateHeader,
    #[error("header dimensions must be at least 1x1, got {width}x{height}")]
    BadDimensions { width: u32, height: u32 },
    #[error("score out of range: {0}")]
    ScoreOutOfRange(f64),
    #[error("frame index {got} does not follow {prev}")]
    NonMonotone { prev: u64, got: u64 },
    #[error("mask is {got_h}x{got_w}, frame is {want_h}x{want_w}")]
    MaskDims {
        got_h: u32,
        got_w: u32,
        want_h: u32,
        want_w: u32,
    },
}

#[derive(Debug, Error)]
#[error("line {line}: {kind}")]
pub struct StreamError {
    pub line: usize,
    #[source]
    pub kind: StreamErrorKind,
}

impl StreamError {
    fn at(line: usize, kind: StreamErrorKind) -> Self {
        Self { line, kind }
    }

    pub fn is_io(&self) -> bool {
        matches!(self.kind, StreamErrorKind::Io(_))
    }
}

impl StreamHeader {
    pub fn validate(&self) -> Result<(), StreamErrorKind> {
        if self.width == 0 || self.height == 0 {
            return Err(StreamErrorKind::BadDimensions {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

impl FrameDetections {
    /// Per-record invariants against the stream dimensions.
    pub fn validate(&self, header: &StreamHeader) -> Result<(), StreamErrorKind> {
        for d in &self.detections {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(StreamErrorKind::ScoreOutOfRange(d.score));
            }
            if let Some(m) = &d.mask {
                if m.height() != header.height || m.width() != header.width {
                    return Err(StreamErrorKind::MaskDims {
                        got_h: m.height(),
                        got_w: m.width(),
                        want_h: header.height,
                        want_w: header.width,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Lazily parsed frames following the header.
pub struct FrameReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    header: StreamHeader,
    last_frame: Option<u64>,
    failed: bool,
}

/// Parse the header eagerly and return an iterator over the frame records.
pub fn parse_stream<R: BufRead>(input: R) -> Result<(StreamHeader, FrameReader<R>), StreamError> {
    let mut lines = input.lines();
    let mut line = 0;
    let header = loop {
        line += 1;
        let text = match lines.next() {
            None => return Err(StreamError::at(line, StreamErrorKind::MissingHeader)),
            Some(r) => r.map_err(|e| StreamError::at(line, e.into()))?,
        };
        if text.trim().is_empty() {
            continue;
        }
        match parse_record(&text).map_err(|k| StreamError::at(line, k))? {
            Record::Header(h) => {
                h.validate().map_err(|k| StreamError::at(line, k))?;
                break h;
            }
            Record::Frame(_) => return Err(StreamError::at(line, StreamErrorKind::HeaderNotFirst)),
        }
    };
    Ok((
        header.clone(),
        FrameReader {
            lines,
            line,
            header,
            last_frame: None,
            failed: false,
        },
    ))
}

/// Convenience for in-memory streams.
pub fn parse_all<R: BufRead>(
    input: R,
) -> Result<(StreamHeader, Vec<FrameDetections>), StreamError> {
    let (header, frames) = parse_stream(input)?;
    let frames = frames.collect::<Result<Vec<_>, _>>()?;
    Ok((header, frames))
}

fn parse_record(text: &str) -> Result<Record, StreamErrorKind> {
    serde_json::from_str(text).map_err(|e| StreamErrorKind::Malformed(e.to_string()))
}

impl<R: BufRead> FrameReader<R> {
    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    fn next_frame(&mut self) -> Option<Result<FrameDetections, StreamErrorKind>> {
        loop {
            self.line += 1;
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            if text.trim().is_empty() {
                continue;
            }
            let frame = match parse_record(&text) {
                Ok(Record::Frame(f)) => f,
                Ok(Record::Header(_)) => return Some(Err(StreamErrorKind::DuplicateHeader)),
                Err(k) => return Some(Err(k)),
            };
            if let Some(prev) = self.last_frame {
                if frame.frame <= prev {
                    return Some(Err(StreamErrorKind::NonMonotone {
                        prev,
                        got: frame.frame,
                    }));
                }
            }
            if let Err(k) = frame.validate(&self.header) {
                return Some(Err(k));
            }
            self.last_frame = Some(frame.frame);
            return Some(Ok(frame));
        }
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<FrameDetections, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_frame()?;
        Some(item.map_err(|k| {
            self.failed = true;
            StreamError::at(self.line, k)
        }))
    }
}

/// Serialize a whole stream in wire form.
pub fn write_stream<W: Write>(
    mut out: W,
    header: &StreamHeader,
    frames: &[FrameDetections],
) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, &Record::Header(header.clone()))?;
    out.write_all(b"\n")?;
    for f in frames {
        write_frame(&mut out, f)?;
    }
    Ok(())
}

pub fn write_frame<W: Write>(mut out: W, frame: &FrameDetections) -> std::io::Result<()> {
    // Serializing through the tagged enum needs an owned value; avoid the clone
    // by writing the tag by hand.
    #[derive(Serialize)]
    struct Tagged<'a> {
        #[serde(rename = "type")]
        kind: &'static str,
        #[serde(flatten)]
        frame: &'a FrameDetections,
    }
    serde_json::to_writer(
        &mut out,
        &Tagged {
            kind: "frame",
            frame,
        },
    )?;
    out.write_all(b"\n")
}

/// Indices into a frame's detections, split by the two confidence floors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfidenceSplit {
    /// `score >= tau_conf`, fed to the foreground selector.
    pub foreground: Vec<usize>,
    /// `score >= tau_conf - delta_conf`, fed to the tracker and background model.
    pub background: Vec<usize>,
}

// Absorbs rounding in `tau_conf - delta_conf` (0.6 - 0.1 < 0.5 in binary).
const CONF_EPS: f64 = 1e-9;

pub fn split_by_confidence(frame: &FrameDetections, cfg: &Config) -> ConfidenceSplit {
    let floor = cfg.background_conf() - CONF_EPS;
    let mut split = ConfidenceSplit::default();
    for (i, d) in frame.detections.iter().enumerate() {
        if d.score >= cfg.tau_conf {
            split.foreground.push(i);
        }
        if d.score >= cfg.tau_conf || d.score >= floor {
            split.background.push(i);
        }
    }
    split
}
