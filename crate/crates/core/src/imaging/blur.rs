use serde::{Deserialize, Serialize};

use super::{connected_components, sauvola_binarize, Connectivity, GrayImage, ImagingError, SauvolaParams};

/// Controls how a page is faded into an empty background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    /// Gaussian sigma in pixels. `None` means `max(width, height) / 100`.
    pub sigma: Option<f64>,
    /// Blur passes always applied.
    pub passes: u32,
    /// Largest Sauvola foreground component tolerated in the result, as a
    /// fraction of the page area.
    pub residual_area_frac: f64,
    /// Extra passes are added until the residual criterion holds or this
    /// many passes have run.
    pub max_passes: u32,
    /// Binarization used to measure residual content.
    pub binarization: SauvolaParams,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            passes: 2,
            residual_area_frac: 0.001,
            max_passes: 8,
            binarization: SauvolaParams::default(),
        }
    }
}

impl BackgroundConfig {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ImagingError::InvalidParameter(format!(
                    "blur sigma must be positive, got {s}"
                )));
            }
        }
        if self.passes == 0 || self.max_passes < self.passes {
            return Err(ImagingError::InvalidParameter(format!(
                "need 1 <= passes <= max_passes, got {} and {}",
                self.passes, self.max_passes
            )));
        }
        if !(0.0..=1.0).contains(&self.residual_area_frac) {
            return Err(ImagingError::InvalidParameter(format!(
                "residual_area_frac must lie in [0, 1], got {}",
                self.residual_area_frac
            )));
        }
        self.binarization.validate()
    }

    pub fn sigma_for(&self, width: u32, height: u32) -> f64 {
        self.sigma
            .unwrap_or_else(|| width.max(height) as f64 / 100.0)
            .max(0.5)
    }
}

fn kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / total) as f32).collect()
}

/// One separable Gaussian pass over a float buffer, replicating edge pixels.
fn blur_pass(buf: &mut Vec<f32>, w: usize, h: usize, taps: &[f32]) {
    let radius = (taps.len() / 2) as i64;
    let mut tmp = vec![0.0f32; w * h];
    {
        let src = &*buf;
        crate::par::for_each_row(&mut tmp, w, |y, row| {
            let line = &src[y * w..(y + 1) * w];
            for (x, out) in row.iter_mut().enumerate() {
                let mut acc = 0.0f32;
                for (k, &wt) in taps.iter().enumerate() {
                    let xi = (x as i64 + k as i64 - radius).clamp(0, w as i64 - 1) as usize;
                    acc += wt * line[xi];
                }
                *out = acc;
            }
        });
    }
    crate::par::for_each_row(buf, w, |y, row| {
        row.fill(0.0);
        for (k, &wt) in taps.iter().enumerate() {
            let yi = (y as i64 + k as i64 - radius).clamp(0, h as i64 - 1) as usize;
            let line = &tmp[yi * w..(yi + 1) * w];
            for (o, &v) in row.iter_mut().zip(line) {
                *o += wt * v;
            }
        }
    });
}

fn quantize(buf: &[f32], w: u32, h: u32) -> GrayImage {
    let data = buf
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

/// Separable Gaussian blur with edge replication, repeated `passes` times.
pub fn gaussian_blur(img: &GrayImage, sigma: f64, passes: u32) -> Result<GrayImage, ImagingError> {
    img.ensure_nonempty()?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ImagingError::InvalidParameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let (w, h) = (img.width as usize, img.height as usize);
    let taps = kernel(sigma);
    let mut buf: Vec<f32> = img.data.iter().map(|&v| v as f32).collect();
    for _ in 0..passes {
        blur_pass(&mut buf, w, h, &taps);
    }
    Ok(quantize(&buf, img.width, img.height))
}

/// Area of the largest 8-connected Sauvola foreground component, relative
/// to the page area.
pub fn largest_component_fraction(
    img: &GrayImage,
    params: &SauvolaParams,
) -> Result<f64, ImagingError> {
    let mask = sauvola_binarize(img, params)?;
    let largest = connected_components(&mask, Connectivity::Eight)
        .iter()
        .map(|c| c.area)
        .max()
        .unwrap_or(0);
    Ok(largest as f64 / (img.width as f64 * img.height as f64))
}

/// Fades page content into a plain background of the same tone.
///
/// Blurs `cfg.passes` times, then keeps blurring while some Sauvola
/// component of the result still covers more than
/// `cfg.residual_area_frac` of the page, up to `cfg.max_passes`.
pub fn estimate_background(
    img: &GrayImage,
    cfg: &BackgroundConfig,
) -> Result<GrayImage, ImagingError> {
    cfg.validate()?;
    img.ensure_nonempty()?;
    let (w, h) = (img.width as usize, img.height as usize);
    let taps = kernel(cfg.sigma_for(img.width, img.height));
    let mut buf: Vec<f32> = img.data.iter().map(|&v| v as f32).collect();
    for _ in 0..cfg.passes {
        blur_pass(&mut buf, w, h, &taps);
    }
    let mut done = cfg.passes;
    loop {
        let out = quantize(&buf, img.width, img.height);
        if done >= cfg.max_passes
            || largest_component_fraction(&out, &cfg.binarization)? <= cfg.residual_area_frac
        {
            return Ok(out);
        }
        blur_pass(&mut buf, w, h, &taps);
        done += 1;
    }
}
