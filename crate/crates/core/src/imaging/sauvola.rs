use serde::{Deserialize, Serialize};

use super::{BinaryMask, GrayImage, ImagingError};

/// Parameters of Sauvola local thresholding,
/// `T = m * (1 + k * (s / r - 1))` over a square window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SauvolaParams {
    /// Odd window side in pixels.
    pub window: u32,
    pub k: f64,
    /// Dynamic range of the standard deviation.
    pub r: f64,
}

impl Default for SauvolaParams {
    fn default() -> Self {
        Self {
            window: 25,
            k: 0.2,
            r: 128.0,
        }
    }
}

impl SauvolaParams {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(ImagingError::InvalidParameter(format!(
                "sauvola window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.k > 0.0 && self.k <= 1.0) {
            return Err(ImagingError::InvalidParameter(format!(
                "sauvola k must lie in (0, 1], got {}",
                self.k
            )));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(ImagingError::InvalidParameter(format!(
                "sauvola dynamic range must be positive, got {}",
                self.r
            )));
        }
        Ok(())
    }
}

/// Per-pixel Sauvola thresholds, row-major.
///
/// Window statistics come from integral images of the values and their
/// squares. Windows are clipped at the borders. The variance numerator
/// `n * sum_sq - sum^2` is formed in integers so the only rounding is the
/// final division and square root.
pub fn sauvola_thresholds(
    img: &GrayImage,
    params: &SauvolaParams,
) -> Result<Vec<f64>, ImagingError> {
    params.validate()?;
    img.ensure_nonempty()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let stride = w + 1;
    let mut sum = vec![0u64; stride * (h + 1)];
    let mut sq = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u64;
        let mut row_sq = 0u64;
        for x in 0..w {
            let v = img.data()[y * w + x] as u64;
            row_sum += v;
            row_sq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row_sum;
            sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
        }
    }
    let rect = |t: &[u64], x0: usize, y0: usize, x1: usize, y1: usize| -> u64 {
        t[y1 * stride + x1] + t[y0 * stride + x0] - t[y0 * stride + x1] - t[y1 * stride + x0]
    };

    let half = (params.window / 2) as usize;
    let mut out = vec![0.0f64; w * h];
    crate::par::for_each_row(&mut out, w, |y, row| {
        let y0 = y.saturating_sub(half);
        let y1 = (y + half + 1).min(h);
        for (x, t) in row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(half);
            let x1 = (x + half + 1).min(w);
            let n = ((x1 - x0) * (y1 - y0)) as u128;
            let s = rect(&sum, x0, y0, x1, y1) as u128;
            let q = rect(&sq, x0, y0, x1, y1) as u128;
            let mean = s as f64 / n as f64;
            let std = ((n * q - s * s) as f64).sqrt() / n as f64;
            *t = mean * (1.0 + params.k * (std / params.r - 1.0));
        }
    });
    Ok(out)
}

/// Marks pixels strictly darker than their local Sauvola threshold.
pub fn sauvola_binarize(
    img: &GrayImage,
    params: &SauvolaParams,
) -> Result<BinaryMask, ImagingError> {
    let thresholds = sauvola_thresholds(img, params)?;
    let data = img
        .data()
        .iter()
        .zip(&thresholds)
        .map(|(&v, &t)| (v as f64) < t)
        .collect();
    Ok(BinaryMask {
        width: img.width(),
        height: img.height(),
        data,
    })
}
