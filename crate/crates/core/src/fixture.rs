//! Procedural stand-ins for real data: score pages with staff and text
//! regions, a fake detector and fake transcriptions.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::corpus::{self, AnnotatedCorpus, Category, ClassId, CorpusError, Detection, Page, Region};
use crate::goaleval::{detection_key, SymbolSequence, Transcriptions};
use crate::imaging::{save_png, GrayImage};
use crate::metrics::iou;

pub const STAFF: ClassId = ClassId(1);
pub const TEXT: ClassId = ClassId(2);

pub fn fixture_categories() -> Vec<Category> {
    vec![
        Category {
            id: STAFF,
            name: "staff".into(),
        },
        Category {
            id: TEXT,
            name: "text".into(),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub pages: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            pages: 4,
            width: 800,
            height: 600,
            seed: 7,
        }
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Canvas {
    img: GrayImage,
}

impl Canvas {
    /// Darkens the pixel to `v` if it is lighter.
    fn ink(&mut self, x: i64, y: i64, v: u8) {
        let (w, h) = self.img.dimensions();
        if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
            let cur = self.img.get(x as u32, y as u32);
            self.img.set(x as u32, y as u32, cur.min(v));
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, v: u8) {
        for y in y0..y1 {
            for x in x0..x1 {
                self.ink(x, y, v);
            }
        }
    }

    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, v: u8) {
        let (x0, x1) = ((cx - rx).floor() as i64, (cx + rx).ceil() as i64);
        let (y0, y1) = ((cy - ry).floor() as i64, (cy + ry).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.ink(x, y, v);
                }
            }
        }
    }
}

fn paper(width: u32, height: u32, rng: &mut ChaCha8Rng) -> GrayImage {
    let base: f64 = rng.gen_range(205.0..235.0);
    let gx: f64 = rng.gen_range(-15.0..15.0);
    let gy: f64 = rng.gen_range(-10.0..10.0);
    let mut img = GrayImage::new(width, height, 0);
    for y in 0..height {
        for x in 0..width {
            let v = base
                + gx * x as f64 / width as f64
                + gy * y as f64 / height as f64
                + rng.gen_range(-4.0..4.0);
            img.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    img
}

/// Five lines with notes and bar lines. Everything stays inside the box.
fn draw_staff(c: &mut Canvas, x: i64, y: i64, w: i64, spacing: f64, rng: &mut ChaCha8Rng) {
    let pad = 1.5 * spacing;
    let top = y as f64 + pad;
    let ink: u8 = rng.gen_range(20..60);
    let thick = if spacing > 7.0 { 2 } else { 1 };
    for i in 0..5 {
        let ly = (top + i as f64 * spacing).round() as i64;
        c.rect(x, ly, x + w, ly + thick, ink);
    }
    let bottom_line = (top + 4.0 * spacing).round() as i64 + thick;
    let bar = |c: &mut Canvas, bx: i64| c.rect(bx, top.round() as i64, bx + thick, bottom_line, ink);
    bar(c, x);
    let mut nx = x as f64 + 2.0 * spacing;
    let mut since_bar = 0;
    while nx + 2.0 * spacing < (x + w) as f64 {
        let step: i32 = rng.gen_range(0..=8);
        let ny = top + step as f64 * spacing / 2.0;
        let (rx, ry) = (0.65 * spacing, 0.45 * spacing);
        c.ellipse(nx, ny, rx, ry, ink);
        let stem = 2.5 * spacing;
        if step < 4 {
            let sx = (nx - rx).round() as i64;
            c.rect(sx, ny.round() as i64, sx + 1, (ny + stem).round() as i64, ink);
        } else {
            let sx = (nx + rx).round() as i64 - 1;
            c.rect(sx, (ny - stem).round() as i64, sx + 1, ny.round() as i64, ink);
        }
        since_bar += 1;
        nx += rng.gen_range(2.0..4.0) * spacing;
        if since_bar >= 6 && rng.gen_bool(0.4) && nx + spacing < (x + w) as f64 {
            bar(c, (nx - spacing).round() as i64);
            since_bar = 0;
        }
    }
    bar(c, x + w - thick);
}

/// Rows of glyph-like blocks separated into words.
fn draw_text(c: &mut Canvas, x: i64, y: i64, w: i64, h: i64, rng: &mut ChaCha8Rng) {
    let ink: u8 = rng.gen_range(25..70);
    let xh = (h as f64 * 0.45).round() as i64;
    let base = y + h - (h as f64 * 0.2).round() as i64;
    let mut gx = x + 1;
    while gx < x + w - 4 {
        let gw = rng.gen_range(3..8).min(x + w - 1 - gx);
        let tall = rng.gen_bool(0.3);
        let top = if tall { y + 1 } else { base - xh };
        c.rect(gx, top, gx + gw, base, ink);
        if rng.gen_bool(0.15) {
            c.rect(gx, base, gx + 2.min(gw), y + h - 1, ink);
        }
        gx += gw + rng.gen_range(1..3);
        if rng.gen_bool(0.18) {
            gx += rng.gen_range(5..10);
        }
    }
}

/// Draws one page and its regions. Regions are stacked top to bottom
/// with gaps, so they never overlap.
pub fn render_page(id: u64, width: u32, height: u32, seed: u64) -> (GrayImage, Vec<Region>) {
    let mut rng = stream(seed, id);
    let mut canvas = Canvas {
        img: paper(width, height, &mut rng),
    };
    let (w, h) = (width as i64, height as i64);
    let margin_x = (w / 20).max(2);
    let margin_y = (h / 20).max(2);
    let usable = w - 2 * margin_x;
    let mut regions = Vec::new();
    let mut y = margin_y;
    loop {
        let staff = regions.is_empty() || rng.gen_bool(0.65);
        let (rw, rh, spacing) = if staff {
            let spacing = rng.gen_range(5.0..9.0_f64) * height as f64 / 600.0;
            let rh = (7.0 * spacing).ceil() as i64 + 2;
            let frac = rng.gen_range(0.55..0.92);
            ((usable as f64 * frac) as i64, rh, spacing)
        } else {
            let rh = (rng.gen_range(14.0..28.0) * height as f64 / 600.0).round() as i64;
            let frac = rng.gen_range(0.15..0.5);
            ((usable as f64 * frac) as i64, rh, 0.0)
        };
        if y + rh > h - margin_y || rw < 8 || rh < 6 {
            break;
        }
        let x = margin_x + rng.gen_range(0..=(usable - rw).max(0));
        if staff {
            draw_staff(&mut canvas, x, y, rw, spacing, &mut rng);
        } else {
            draw_text(&mut canvas, x, y, rw, rh, &mut rng);
        }
        regions.push(Region {
            id: 0,
            page_id: id,
            class: if staff { STAFF } else { TEXT },
            bbox: BBox::new(x as f64, y as f64, rw as f64, rh as f64).expect("positive size"),
        });
        y += rh + rng.gen_range(6..30) * h / 600;
    }
    (canvas.img, regions)
}

/// In-memory fixture corpus and its page rasters (indexed like `pages`).
/// Region ids run from 1 across the corpus; page ids from 0.
pub fn make_fixture(cfg: &FixtureConfig) -> (AnnotatedCorpus, Vec<GrayImage>) {
    let mut pages = Vec::with_capacity(cfg.pages);
    let mut images = Vec::with_capacity(cfg.pages);
    let mut next_id = 1;
    for i in 0..cfg.pages as u64 {
        let (img, mut regions) = render_page(i, cfg.width, cfg.height, cfg.seed);
        for r in &mut regions {
            r.id = next_id;
            next_id += 1;
        }
        pages.push(Page {
            id: i,
            file_name: format!("images/page_{i:04}.png"),
            width: cfg.width,
            height: cfg.height,
            regions,
        });
        images.push(img);
    }
    let corpus = AnnotatedCorpus {
        pages,
        categories: fixture_categories(),
        root: PathBuf::new(),
    };
    (corpus, images)
}

/// Writes the fixture as images plus `annotations.json` under `dir` and
/// returns the corpus rooted there.
pub fn write_fixture(cfg: &FixtureConfig, dir: &Path) -> Result<AnnotatedCorpus, CorpusError> {
    let (mut corpus, images) = make_fixture(cfg);
    corpus.root = dir.to_path_buf();
    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|source| CorpusError::Io {
        path: image_dir.clone(),
        source,
    })?;
    for (page, img) in corpus.pages.iter().zip(&images) {
        save_png(img, &dir.join(&page.file_name)).map_err(|e| CorpusError::Image {
            page_id: page.id,
            source: e,
        })?;
    }
    corpus::save_corpus(&corpus, dir.join("annotations.json"))?;
    Ok(corpus)
}

/// Noise model of the fake detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FakeDetector {
    pub seed: u64,
    /// Each box edge moves by up to this fraction of the box size.
    pub jitter: f64,
    /// Probability that a ground-truth region gets no detection.
    pub miss_rate: f64,
    /// Upper bound on spurious detections per page.
    pub max_false_positives: u32,
}

impl Default for FakeDetector {
    fn default() -> Self {
        Self {
            seed: 0,
            jitter: 0.08,
            miss_rate: 0.05,
            max_false_positives: 2,
        }
    }
}

/// Jittered copies of the ground truth plus a few low-confidence spurious
/// boxes. Confidence tracks the IoU of the jittered box with its source, so
/// worse boxes score lower. Detections carry sequential ids.
pub fn fake_detections(corpus: &AnnotatedCorpus, det: &FakeDetector) -> Vec<Detection> {
    let jitter = det.jitter.max(0.0);
    let mut out = Vec::new();
    for page in &corpus.pages {
        let mut rng = stream(det.seed, page.id);
        let (pw, ph) = (page.width as f64, page.height as f64);
        for r in &page.regions {
            if rng.gen_bool(det.miss_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let b = r.bbox;
            let mut d = || if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
            let x0 = (b.x() + d() * b.w()).clamp(0.0, pw);
            let x1 = (b.right() + d() * b.w()).clamp(0.0, pw);
            let y0 = (b.y() + d() * b.h()).clamp(0.0, ph);
            let y1 = (b.bottom() + d() * b.h()).clamp(0.0, ph);
            let Ok(bbox) = BBox::from_corners(x0, y0, x1, y1) else {
                continue;
            };
            let quality = iou(&bbox, &b);
            let confidence = (quality + rng.gen_range(-0.15..0.05)).clamp(0.01, 0.99);
            out.push(Detection {
                id: None,
                page_id: page.id,
                class: r.class,
                bbox,
                confidence,
            });
        }
        let classes: Vec<ClassId> = corpus.categories.iter().map(|c| c.id).collect();
        for _ in 0..rng.gen_range(0..=det.max_false_positives) {
            let Some(&class) = classes.choose(&mut rng) else {
                break;
            };
            let w = rng.gen_range(0.1..0.5) * pw;
            let h = rng.gen_range(0.03..0.1) * ph;
            let x = rng.gen_range(0.0..pw - w);
            let y = rng.gen_range(0.0..ph - h);
            out.push(Detection {
                id: None,
                page_id: page.id,
                class,
                bbox: BBox::new(x, y, w, h).expect("positive size"),
                confidence: rng.gen_range(0.02..0.45),
            });
        }
    }
    for (i, d) in out.iter_mut().enumerate() {
        d.id = Some(i as u64);
    }
    out
}

/// Reference transcriptions with two recognizer outputs: one reading the
/// ground-truth crops and one reading the detected crops.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeTranscriptions {
    pub reference: Transcriptions,
    pub hyp_gt: Transcriptions,
    pub hyp_det: Transcriptions,
}

const TOKENS: &[&str] = &[
    "clef.c", "clef.f", "n.c", "n.d", "n.e", "n.f", "n.g", "n.a", "n.b", "rest", "bar", "custos",
];

fn random_tokens(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    (0..len)
        .map(|_| TOKENS.choose(rng).expect("non-empty").to_string())
        .collect()
}

/// Substitutes, deletes or inserts each token with total probability `rate`.
fn corrupt(tokens: &[String], rate: f64, rng: &mut ChaCha8Rng) -> Vec<String> {
    let rate = rate.clamp(0.0, 1.0);
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        if !rng.gen_bool(rate) {
            out.push(t.clone());
            continue;
        }
        match rng.gen_range(0..3) {
            0 => out.push(TOKENS.choose(rng).expect("non-empty").to_string()),
            1 => {}
            _ => {
                out.push(t.clone());
                out.push(TOKENS.choose(rng).expect("non-empty").to_string());
            }
        }
    }
    out
}

/// `base_error` is the recognizer's token error rate on a perfect crop.
/// Detected crops get extra errors growing with `1 - IoU` against their
/// best-overlapping same-class region; detections overlapping nothing
/// read random symbols.
pub fn fake_transcriptions(
    corpus: &AnnotatedCorpus,
    dets: &[Detection],
    seed: u64,
    base_error: f64,
) -> FakeTranscriptions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reference = Transcriptions::default();
    let mut hyp_gt = Transcriptions::default();
    for r in corpus.regions() {
        let len = rng.gen_range(8..=30);
        let tokens = random_tokens(&mut rng, len);
        let hyp = corrupt(&tokens, base_error, &mut rng);
        hyp_gt.0.insert(r.id, SymbolSequence::new(r.id, hyp));
        reference.0.insert(r.id, SymbolSequence::new(r.id, tokens));
    }
    let mut hyp_det = Transcriptions::default();
    for (i, d) in dets.iter().enumerate() {
        let key = detection_key(dets, i);
        let best = corpus
            .page(d.page_id)
            .into_iter()
            .flat_map(|p| &p.regions)
            .filter(|r| r.class == d.class)
            .map(|r| (iou(&d.bbox, &r.bbox), r.id))
            .filter(|(v, _)| *v > 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let tokens = match best {
            Some((v, gt)) => {
                let src = &reference.0[&gt].tokens;
                corrupt(src, base_error + 0.8 * (1.0 - v), &mut rng)
            }
            None => {
                let len = rng.gen_range(4..=20);
                random_tokens(&mut rng, len)
            }
        };
        hyp_det.0.insert(key, SymbolSequence::new(key, tokens));
    }
    FakeTranscriptions {
        reference,
        hyp_gt,
        hyp_det,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_corpus;

    #[test]
    fn fixture_is_valid_and_deterministic() {
        let cfg = FixtureConfig::default();
        let (a, ia) = make_fixture(&cfg);
        let (b, ib) = make_fixture(&cfg);
        assert_eq!(a, b);
        assert_eq!(ia, ib);
        assert!(validate_corpus(&a).is_valid(), "{:?}", validate_corpus(&a));
        for p in &a.pages {
            assert!(!p.regions.is_empty());
            for (i, r) in p.regions.iter().enumerate() {
                for s in &p.regions[i + 1..] {
                    assert!(!r.bbox.overlaps(&s.bbox));
                }
            }
        }
        assert!(a.regions().any(|r| r.class == TEXT));
    }

    #[test]
    fn ink_stays_in_regions() {
        let (corpus, images) = make_fixture(&FixtureConfig {
            pages: 2,
            ..Default::default()
        });
        for (p, img) in corpus.pages.iter().zip(&images) {
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let inside = p.regions.iter().any(|r| {
                        let b = r.bbox;
                        (x as f64) >= b.x() && (x as f64) < b.right() && (y as f64) >= b.y() && (y as f64) < b.bottom()
                    });
                    if !inside {
                        assert!(img.get(x, y) > 150, "ink at ({x},{y}) on page {}", p.id);
                    }
                }
            }
        }
    }

    #[test]
    fn perfect_detector() {
        let (corpus, _) = make_fixture(&FixtureConfig::default());
        let det = FakeDetector {
            jitter: 0.0,
            miss_rate: 0.0,
            max_false_positives: 0,
            seed: 1,
        };
        let dets = fake_detections(&corpus, &det);
        assert_eq!(dets.len(), corpus.region_count());
        for (d, r) in dets.iter().zip(corpus.regions()) {
            assert_eq!(d.bbox, r.bbox);
            assert!(d.confidence > 0.8);
        }
    }

    #[test]
    fn transcriptions_cover_every_key() {
        let (corpus, _) = make_fixture(&FixtureConfig::default());
        let dets = fake_detections(&corpus, &FakeDetector::default());
        let t = fake_transcriptions(&corpus, &dets, 3, 0.05);
        assert_eq!(t.reference.0.len(), corpus.region_count());
        assert_eq!(t.hyp_gt.0.len(), corpus.region_count());
        assert_eq!(t.hyp_det.0.len(), dets.len());
        let zero = fake_transcriptions(&corpus, &[], 3, 0.0);
        assert_eq!(zero.reference, zero.hyp_gt);
    }
}
