//! Single-channel 8-bit image files: predicted masks out, ground truth in.

use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder};
use thiserror::Error;

use crate::evaluator::{EvalError, GtFrame};
use crate::geometry::RleMask;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Gt {
        path: PathBuf,
        #[source]
        source: EvalError,
    },
}

pub const MASK_EXTENSION: &str = "pgm";

/// `frame000042.pgm`
pub fn frame_file_name(frame: u64) -> String {
    format!("frame{frame:06}.{MASK_EXTENSION}")
}

/// Binary P5 graymap of a mask: 0 background, 255 foreground.
pub fn mask_to_pgm(mask: &RleMask) -> Vec<u8> {
    let pixels: Vec<u8> = mask.decode().into_iter().map(|b| if b { 255 } else { 0 }).collect();
    gray_to_pgm(mask.height(), mask.width(), &pixels)
}

pub fn gt_to_pgm(gt: &GtFrame) -> Vec<u8> {
    gray_to_pgm(gt.height(), gt.width(), gt.labels())
}

fn gray_to_pgm(height: u32, width: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(pixels.len() + 20);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width, height, ExtendedColorType::L8)
        .expect("in-memory encode of a sized buffer");
    out
}

/// Read any supported image as 8-bit luma.
pub fn read_gray(path: &Path) -> Result<GrayImage, ImageIoError> {
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => ImageIoError::Io {
            path: path.to_owned(),
            source: e,
        },
        source => ImageIoError::Image {
            path: path.to_owned(),
            source,
        },
    })?;
    Ok(img.into_luma8())
}

pub fn read_gt(path: &Path) -> Result<GtFrame, ImageIoError> {
    let img = read_gray(path)?;
    let (w, h) = img.dimensions();
    GtFrame::new(h, w, img.into_raw()).map_err(|source| ImageIoError::Gt {
        path: path.to_owned(),
        source,
    })
}

/// Any non-zero pixel is foreground.
pub fn read_mask(path: &Path) -> Result<RleMask, ImageIoError> {
    let img = read_gray(path)?;
    let (w, h) = img.dimensions();
    let cells: Vec<bool> = img.into_raw().into_iter().map(|v| v != 0).collect();
    Ok(RleMask::encode(h, w, &cells).expect("buffer sized from image"))
}

/// Image files in `dir` whose stem ends in a frame number, sorted by frame.
pub fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>, ImageIoError> {
    let io = |source| ImageIoError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png" | "pgm" | "pbm" | "bmp")) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let digits: String = stem
            .chars()
            .rev()
            .take_while(char::is_ascii_digit)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        if let Ok(frame) = digits.parse() {
            out.push((frame, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Find the mask file for `frame` in `dir`, trying the usual extensions.
pub fn find_mask(dir: &Path, frame: u64) -> Option<PathBuf> {
    ["pgm", "png", "pbm", "bmp"]
        .iter()
        .map(|ext| dir.join(format!("frame{frame:06}.{ext}")))
        .find(|p| p.exists())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = RleMask::from_box(6, 8, &BBox::new(1., 2., 5., 4.).unwrap());
        let bytes = mask_to_pgm(&mask);
        assert!(bytes.starts_with(b"P5"));
        let path = dir.path().join(frame_file_name(7));
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
        assert_eq!(find_mask(dir.path(), 7), Some(path.clone()));
        assert_eq!(list_frames(dir.path()).unwrap(), vec![(7, path)]);
    }

    #[test]
    fn gt_validation_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let gt = GtFrame::new(2, 3, vec![0, 50, 85, 170, 255, 0]).unwrap();
        let p = dir.path().join("gt000001.pgm");
        std::fs::write(&p, gt_to_pgm(&gt)).unwrap();
        assert_eq!(read_gt(&p).unwrap(), gt);

        let bad = dir.path().join("gt000002.pgm");
        std::fs::write(&bad, gray_to_pgm(1, 2, &[0, 99])).unwrap();
        assert!(matches!(read_gt(&bad), Err(ImageIoError::Gt { .. })));
        assert!(matches!(read_gt(&dir.path().join("nope.pgm")), Err(ImageIoError::Io { .. })));
    }
}
