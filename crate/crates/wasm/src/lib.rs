//! Browser demo: Sauvola binarization, synthetic page generation and a
//! threshold-sweep heatmap over procedural fixture pages.

use wasm_bindgen::prelude::*;

use scoreforge::fixture::{fake_detections, make_fixture, FakeDetector, FixtureConfig, STAFF};
use scoreforge::imaging::{sauvola_binarize, SauvolaParams};
use scoreforge::metrics::{sweep_conf_thresholds, sweep_iou_thresholds, sweep_thresholds};
use scoreforge::synthgen::{generate, GenConfig, MemoryImages};
use scoreforge::{AnnotatedCorpus, GrayImage, Region};

const STAFF_RGB: [u8; 3] = [220, 40, 60];
const TEXT_RGB: [u8; 3] = [30, 110, 220];

fn to_rgba(img: &GrayImage) -> Vec<u8> {
    img.data().iter().flat_map(|&v| [v, v, v, 255]).collect()
}

fn draw_boxes(rgba: &mut [u8], width: u32, height: u32, regions: &[Region]) {
    for r in regions {
        let Some((x0, y0, x1, y1)) = r.bbox.pixel_rect(width, height) else {
            continue;
        };
        let color = if r.class == STAFF { STAFF_RGB } else { TEXT_RGB };
        let mut put = |x: u32, y: u32| {
            let i = ((y * width + x) * 4) as usize;
            rgba[i..i + 3].copy_from_slice(&color);
        };
        for t in 0..2 {
            for x in x0..x1 {
                put(x, (y0 + t).min(y1 - 1));
                put(x, (y1 - 1).saturating_sub(t).max(y0));
            }
            for y in y0..y1 {
                put((x0 + t).min(x1 - 1), y);
                put((x1 - 1).saturating_sub(t).max(x0), y);
            }
        }
    }
}

#[wasm_bindgen]
pub struct Demo {
    corpus: AnnotatedCorpus,
    images: MemoryImages,
    synthetic_regions: Vec<Region>,
    synthetic_angle: f64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(pages: usize, width: u32, height: u32, seed: u64) -> Demo {
        let (corpus, images) = make_fixture(&FixtureConfig {
            pages: pages.max(1),
            width: width.max(64),
            height: height.max(64),
            seed,
        });
        let images = MemoryImages::new(corpus.pages.iter().map(|p| p.id).zip(images));
        Demo {
            corpus,
            images,
            synthetic_regions: Vec::new(),
            synthetic_angle: 0.0,
        }
    }

    pub fn width(&self) -> u32 {
        self.corpus.pages[0].width
    }

    pub fn height(&self) -> u32 {
        self.corpus.pages[0].height
    }

    pub fn page_count(&self) -> usize {
        self.corpus.pages.len()
    }

    fn page_image(&self, page: usize) -> &GrayImage {
        let id = self.corpus.pages[page.min(self.corpus.pages.len() - 1)].id;
        &self.images.0[&id]
    }

    /// Source page as RGBA with its annotated boxes.
    pub fn page_rgba(&self, page: usize) -> Vec<u8> {
        let page = page.min(self.corpus.pages.len() - 1);
        let img = self.page_image(page);
        let mut rgba = to_rgba(img);
        draw_boxes(&mut rgba, img.width(), img.height(), &self.corpus.pages[page].regions);
        rgba
    }

    /// Sauvola ink mask of a source page as RGBA, ink black on white.
    /// Invalid parameters give an empty vector.
    pub fn binarize(&self, page: usize, window: u32, k: f64, r: f64) -> Vec<u8> {
        let params = SauvolaParams { window, k, r };
        match sauvola_binarize(self.page_image(page), &params) {
            Ok(mask) => mask
                .data()
                .iter()
                .flat_map(|&ink| if ink { [0, 0, 0, 255] } else { [255, 255, 255, 255] })
                .collect(),
            Err(_) => Vec::new(),
        }
    }

    /// One synthetic page as RGBA with its boxes drawn.
    pub fn synthesize(&mut self, seed: u64, rotation_range: f64) -> Result<Vec<u8>, JsError> {
        let cfg = GenConfig {
            n: 1,
            seed,
            rotation_range,
            ..Default::default()
        };
        let page = generate(&self.corpus, &self.images, &cfg)?.remove(0);
        let (w, h) = page.image.dimensions();
        let mut rgba = to_rgba(&page.image);
        draw_boxes(&mut rgba, w, h, &page.regions);
        self.synthetic_angle = page.provenance.angle_deg;
        self.synthetic_regions = page.regions;
        Ok(rgba)
    }

    /// Rotation of the last synthetic page in degrees.
    pub fn synthetic_angle(&self) -> f64 {
        self.synthetic_angle
    }

    pub fn synthetic_region_count(&self) -> usize {
        self.synthetic_regions.len()
    }

    /// Macro F1 over the sweep grid for a fake detector with the given
    /// jitter: confidence rows, IoU columns, row-major.
    pub fn sweep_grid(&self, jitter: f64, seed: u64) -> Vec<f64> {
        let det = FakeDetector {
            seed,
            jitter: jitter.max(0.0),
            ..Default::default()
        };
        let dets = fake_detections(&self.corpus, &det);
        let gts: Vec<Region> = self.corpus.regions().cloned().collect();
        sweep_thresholds(&dets, &gts).grid.iter().map(|c| c.mf1).collect()
    }

    /// Row labels of [`Demo::sweep_grid`].
    pub fn conf_thresholds() -> Vec<f64> {
        sweep_conf_thresholds()
    }

    /// Column labels of [`Demo::sweep_grid`].
    pub fn iou_thresholds() -> Vec<f64> {
        sweep_iou_thresholds()
    }
}
