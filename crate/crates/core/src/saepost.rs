//! Pre- and post-processing for pixel-wise (auto-encoder) region models.
//!
//! Such models cannot separate touching regions, so training boxes are
//! shrunk vertically about their center; predicted boxes are recovered from
//! per-class probability maps by connected-component analysis and grown back
//! by the inverse factor.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::corpus::{ClassId, Detection, Region};
use crate::imaging::{self, connected_components, BinaryMask, Connectivity, GrayImage, ImagingError};

/// Default vertical shrink ratio applied to ground truth.
pub const DEFAULT_RATIO: f64 = 0.2;

#[derive(Debug, Error)]
pub enum SaeError {
    #[error("shrink ratio must lie in [0, 1), got {0}")]
    Ratio(f64),
    #[error("box height {0} would fall below one pixel")]
    Degenerate(f64),
    #[error("probability {value} at index {index} is outside [0, 1]")]
    Probability { index: usize, value: f32 },
    #[error("probability map file name {0:?} is not <page_id>.<class>.png")]
    FileName(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_ratio(ratio: f64) -> Result<(), SaeError> {
    if (0.0..1.0).contains(&ratio) {
        Ok(())
    } else {
        Err(SaeError::Ratio(ratio))
    }
}

/// Scales the box height by `1 - ratio`, keeping its vertical center.
pub fn shrink_gt_vertical(region: &Region, ratio: f64) -> Result<Region, SaeError> {
    check_ratio(ratio)?;
    let b = region.bbox;
    let h = b.h() * (1.0 - ratio);
    if h < 1.0 {
        return Err(SaeError::Degenerate(h));
    }
    let bbox = BBox::new(b.x(), b.y() + ratio * b.h() / 2.0, b.w(), h)
        .map_err(|_| SaeError::Degenerate(h))?;
    Ok(Region { bbox, ..region.clone() })
}

/// Inverse of [`shrink_gt_vertical`], clipped to a `page_w x page_h` page.
pub fn expand_pred_vertical(
    det: &Detection,
    ratio: f64,
    page_w: f64,
    page_h: f64,
) -> Result<Detection, SaeError> {
    check_ratio(ratio)?;
    let b = det.bbox;
    let h = b.h() / (1.0 - ratio);
    let y0 = (b.y() - (h - b.h()) / 2.0).max(0.0);
    let y1 = (b.y() + b.h() + (h - b.h()) / 2.0).min(page_h);
    let x0 = b.x().max(0.0);
    let x1 = b.right().min(page_w);
    let bbox = BBox::from_corners(x0, y0, x1, y1).map_err(|_| SaeError::Degenerate(y1 - y0))?;
    Ok(Detection { bbox, ..det.clone() })
}

/// Per-pixel probability of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl ProbMap {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self, SaeError> {
        if data.len() != width as usize * height as usize {
            return Err(ImagingError::InvalidParameter(format!(
                "{} probabilities cannot fill a {width}x{height} map",
                data.len()
            ))
            .into());
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(SaeError::Probability { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Probability is the pixel value divided by 255.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::from_raw(self.width, self.height, data).expect("dimensions already checked")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractOptions {
    pub prob_thr: f32,
    /// Components smaller than this fraction of the page are discarded.
    pub min_area_frac: f64,
    pub eight_connected: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            prob_thr: 0.5,
            min_area_frac: 0.001,
            eight_connected: true,
        }
    }
}

/// Thresholds the map, labels connected components and turns each large
/// enough component into a detection whose confidence is the mean
/// probability over its pixels.
pub fn probmap_to_boxes(
    map: &ProbMap,
    class: ClassId,
    page_id: u64,
    opts: &ExtractOptions,
) -> Vec<Detection> {
    let mask = BinaryMask::from_fn(map.width, map.height, |x, y| map.get(x, y) >= opts.prob_thr);
    let connectivity = if opts.eight_connected {
        Connectivity::Eight
    } else {
        Connectivity::Four
    };
    let min_area = opts.min_area_frac * map.width as f64 * map.height as f64;
    connected_components(&mask, connectivity)
        .into_iter()
        .filter(|c| c.area as f64 >= min_area)
        .map(|c| {
            let total: f64 = c.pixels.iter().map(|&(x, y)| map.get(x, y) as f64).sum();
            Detection {
                id: None,
                page_id,
                class,
                bbox: c.bbox,
                confidence: (total / c.area as f64).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// [`probmap_to_boxes`] followed by vertical expansion of every box.
pub fn extract_detections(
    map: &ProbMap,
    class: ClassId,
    page_id: u64,
    opts: &ExtractOptions,
    ratio: f64,
) -> Result<Vec<Detection>, SaeError> {
    probmap_to_boxes(map, class, page_id, opts)
        .iter()
        .map(|d| expand_pred_vertical(d, ratio, map.width as f64, map.height as f64))
        .collect()
}

/// Parses `<page_id>.<class>.png`.
pub fn parse_probmap_name(name: &str) -> Result<(u64, String), SaeError> {
    let bad = || SaeError::FileName(name.to_string());
    let stem = name.strip_suffix(".png").ok_or_else(bad)?;
    let (page, class) = stem.split_once('.').ok_or_else(bad)?;
    let page = page.parse().map_err(|_| bad())?;
    if class.is_empty() {
        return Err(bad());
    }
    Ok((page, class.to_string()))
}

pub fn probmap_file_name(page_id: u64, class_name: &str) -> String {
    format!("{page_id}.{class_name}.png")
}

/// Loads every `<page_id>.<class>.png` in `dir`, keyed by (page, class
/// name) in sorted order. Other files are ignored.
pub fn load_probmaps(dir: &Path) -> Result<BTreeMap<(u64, String), ProbMap>, SaeError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".png") {
            continue;
        }
        let key = parse_probmap_name(&name)?;
        let img = imaging::load_gray(&entry.path())?;
        out.insert(key, ProbMap::from_gray(&img));
    }
    Ok(out)
}

pub fn save_probmap(map: &ProbMap, path: &Path) -> Result<(), SaeError> {
    imaging::save_png(&map.to_gray(), path)?;
    Ok(())
}
