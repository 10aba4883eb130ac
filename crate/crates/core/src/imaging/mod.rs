//! Raster primitives shared by page generation and post-processing.

mod affine;
mod blur;
mod components;
mod sauvola;

use std::path::Path;

use thiserror::Error;

pub use affine::{
    border_median, rotate_patch, rotated_extent, rotate_patch_with_coverage, transform_bbox, AffineTransform,
    Interpolation, RotatedPatch,
};
pub use blur::{estimate_background, gaussian_blur, largest_component_fraction, BackgroundConfig};
pub use components::{connected_components, Component, Connectivity};
pub use sauvola::{sauvola_binarize, sauvola_thresholds, SauvolaParams};

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: u32, height: u32 },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("transform is singular")]
    Singular,
    #[error(transparent)]
    Codec(#[from] image::ImageError),
}

/// Row-major 8-bit luminance raster.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: u32, height: u32, fill: u8) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if data.len() != width as usize * height as usize {
            return Err(ImagingError::InvalidParameter(format!(
                "{} bytes cannot fill a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as u64).sum::<u64>() as f64 / self.data.len() as f64
    }

    /// Copies the `[x0, x1) x [y0, y1)` window. Bounds must lie inside.
    pub fn crop(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> GrayImage {
        assert!(x0 <= x1 && x1 <= self.width && y0 <= y1 && y1 <= self.height);
        let w = (x1 - x0) as usize;
        let mut data = Vec::with_capacity(w * (y1 - y0) as usize);
        for y in y0..y1 {
            let start = y as usize * self.width as usize + x0 as usize;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        GrayImage {
            width: x1 - x0,
            height: y1 - y0,
            data,
        }
    }

    fn ensure_nonempty(&self) -> Result<(), ImagingError> {
        if self.width == 0 || self.height == 0 {
            return Err(ImagingError::ZeroDimension {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// Row-major boolean raster; `true` marks ink / foreground.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.width,
            self.height,
            self.count()
        )
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Element-wise AND with a mask of the same size.
    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask, ImagingError> {
        if self.dimensions() != other.dimensions() {
            return Err(ImagingError::DimensionMismatch {
                expected: self.dimensions(),
                actual: other.dimensions(),
            });
        }
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    /// 255 for set pixels, 0 elsewhere.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    /// Pixels with value/255 >= 0.5 become set.
    pub fn from_gray(img: &GrayImage) -> BinaryMask {
        BinaryMask {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| v >= 128).collect(),
        }
    }
}

/// ITU-R BT.601 luma, rounded to the nearest level.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Converts any decoded image to 8-bit luminance. 8-bit grayscale passes
/// through untouched; alpha is ignored.
pub fn to_grayscale(image: &image::DynamicImage) -> Result<GrayImage, ImagingError> {
    let (width, height) = (image.width(), image.height());
    if width == 0 || height == 0 {
        return Err(ImagingError::ZeroDimension { width, height });
    }
    let data = match image {
        image::DynamicImage::ImageLuma8(buf) => buf.as_raw().clone(),
        image::DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    GrayImage::from_raw(width, height, data)
}

pub fn load_gray(path: &Path) -> Result<GrayImage, ImagingError> {
    let img = image::open(path)?;
    to_grayscale(&img)
}

/// Writes an 8-bit grayscale PNG. Output bytes depend only on the pixels.
pub fn save_png(img: &GrayImage, path: &Path) -> Result<(), ImagingError> {
    img.ensure_nonempty()?;
    image::save_buffer_with_format(
        path,
        &img.data,
        img.width,
        img.height,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )?;
    Ok(())
}

/// Outcome of [`transfer_ink`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransferStats {
    pub written: usize,
    /// Ink pixels whose destination fell outside `dst`.
    pub clipped: usize,
}

/// Copies the mask-selected pixels of `patch` onto `dst` with the patch's
/// origin at `(offset_x, offset_y)`. Pixels outside the mask and targets
/// outside `dst` are left alone.
pub fn transfer_ink(
    dst: &mut GrayImage,
    patch: &GrayImage,
    mask: &BinaryMask,
    offset_x: i64,
    offset_y: i64,
) -> Result<TransferStats, ImagingError> {
    if patch.dimensions() != mask.dimensions() {
        return Err(ImagingError::DimensionMismatch {
            expected: patch.dimensions(),
            actual: mask.dimensions(),
        });
    }
    let mut stats = TransferStats::default();
    for ys in 0..patch.height {
        for xs in 0..patch.width {
            if !mask.get(xs, ys) {
                continue;
            }
            let xd = offset_x + xs as i64;
            let yd = offset_y + ys as i64;
            if xd < 0 || yd < 0 || xd >= dst.width as i64 || yd >= dst.height as i64 {
                stats.clipped += 1;
                continue;
            }
            dst.set(xd as u32, yd as u32, patch.get(xs, ys));
            stats.written += 1;
        }
    }
    Ok(stats)
}
