//! Semi-synthetic page generation.
//!
//! Each generated page starts from a randomly chosen corpus page. The page
//! is blurred into an empty background, then every annotated region of the
//! page is refilled with the ink of a random same-class region drawn from
//! the whole corpus. The replacement keeps the upper-left corner of the slot
//! it fills, is rotated about its center by an angle shared by the whole
//! page, and only its Sauvola ink pixels are copied. A replacement whose box
//! would leave the page or overlap an already placed box is rejected; after
//! `max_retries` further rejected candidates the slot stays empty.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::corpus::{self, AnnotatedCorpus, Category, ClassId, CorpusError, Page, Region};
use crate::imaging::{
    self, border_median, estimate_background, rotate_patch_with_coverage, rotated_extent,
    sauvola_binarize, transfer_ink, BackgroundConfig, BinaryMask, GrayImage, ImagingError, Interpolation,
    SauvolaParams,
};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("corpus has no pages to generate from")]
    EmptyCorpus,
    #[error("no candidate regions of class {0}")]
    EmptyPool(ClassId),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Number of pages to generate.
    pub n: usize,
    pub seed: u64,
    /// Per-page angles are drawn uniformly from `[-rotation_range, rotation_range]` degrees.
    pub rotation_range: f64,
    /// Extra candidates tried for a slot after the first one is rejected.
    pub max_retries: u32,
    pub background: BackgroundConfig,
    pub binarization: SauvolaParams,
    pub interpolation: Interpolation,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 100,
            seed: 0,
            rotation_range: 3.0,
            max_retries: 10,
            background: BackgroundConfig::default(),
            binarization: SauvolaParams::default(),
            interpolation: Interpolation::Bilinear,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if !(self.rotation_range >= 0.0 && self.rotation_range < 180.0) {
            return Err(GenError::Config(format!(
                "rotation_range must lie in [0, 180), got {}",
                self.rotation_range
            )));
        }
        self.background
            .validate()
            .map_err(|e| GenError::Config(e.to_string()))?;
        self.binarization
            .validate()
            .map_err(|e| GenError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Where page rasters come from.
pub trait ImageSource: Sync {
    fn image(&self, page: &Page) -> Result<Arc<GrayImage>, GenError>;
}

/// Rasters held in memory, keyed by page id.
#[derive(Debug, Default, Clone)]
pub struct MemoryImages(pub HashMap<u64, Arc<GrayImage>>);

impl MemoryImages {
    pub fn new(images: impl IntoIterator<Item = (u64, GrayImage)>) -> Self {
        Self(images.into_iter().map(|(k, v)| (k, Arc::new(v))).collect())
    }
}

impl ImageSource for MemoryImages {
    fn image(&self, page: &Page) -> Result<Arc<GrayImage>, GenError> {
        self.0.get(&page.id).cloned().ok_or_else(|| {
            GenError::Corpus(CorpusError::Referential(format!(
                "no image loaded for page {}",
                page.id
            )))
        })
    }
}

/// Loads page images from the corpus directory, keeping decoded pages until
/// the cache exceeds `max_pixels`, at which point it is emptied.
pub struct DiskImages<'a> {
    corpus: &'a AnnotatedCorpus,
    cache: Mutex<HashMap<u64, Arc<GrayImage>>>,
    max_pixels: usize,
}

impl<'a> DiskImages<'a> {
    pub fn new(corpus: &'a AnnotatedCorpus) -> Self {
        Self::with_capacity(corpus, 256 << 20)
    }

    pub fn with_capacity(corpus: &'a AnnotatedCorpus, max_pixels: usize) -> Self {
        Self {
            corpus,
            cache: Mutex::new(HashMap::new()),
            max_pixels,
        }
    }
}

impl ImageSource for DiskImages<'_> {
    fn image(&self, page: &Page) -> Result<Arc<GrayImage>, GenError> {
        if let Some(img) = self.cache.lock().unwrap().get(&page.id) {
            return Ok(Arc::clone(img));
        }
        let img = Arc::new(self.corpus.load_image(page)?);
        if img.dimensions() != (page.width, page.height) {
            return Err(GenError::Corpus(CorpusError::Geometry(format!(
                "page {} is annotated as {}x{} but the image is {}x{}",
                page.id,
                page.width,
                page.height,
                img.width(),
                img.height()
            ))));
        }
        let mut cache = self.cache.lock().unwrap();
        let held: usize = cache.values().map(|i| i.data().len()).sum();
        if held + img.data().len() > self.max_pixels {
            cache.clear();
        }
        cache.insert(page.id, Arc::clone(&img));
        Ok(img)
    }
}

/// What happened to one region slot of the source page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlotChoice {
    Region(u64),
    Skipped(SkipMarker),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipMarker {
    Skipped,
}

impl SlotChoice {
    pub const SKIPPED: SlotChoice = SlotChoice::Skipped(SkipMarker::Skipped);

    pub fn region(&self) -> Option<u64> {
        match self {
            SlotChoice::Region(id) => Some(*id),
            SlotChoice::Skipped(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub slot_region_id: u64,
    #[serde(rename = "chosen_region_id")]
    pub chosen: SlotChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub synthetic_page_id: u64,
    pub source_page_id: u64,
    pub angle_deg: f64,
    pub slots: Vec<Slot>,
}

impl Provenance {
    pub fn skipped(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| s.chosen.region().is_none())
            .count()
    }
}

/// One generated page with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticPage {
    pub image: GrayImage,
    /// Pixels that received transferred ink.
    pub ink: BinaryMask,
    pub regions: Vec<Region>,
    pub provenance: Provenance,
}

/// A page being assembled: the background plus everything placed so far.
pub struct PageUnderConstruction {
    pub image: GrayImage,
    pub ink: BinaryMask,
    pub placed: Vec<BBox>,
}

impl PageUnderConstruction {
    pub fn new(background: GrayImage) -> Self {
        let (w, h) = background.dimensions();
        Self {
            image: background,
            ink: BinaryMask::new(w, h, false),
            placed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    Placed {
        chosen_region_id: u64,
        bbox: BBox,
        ink_pixels: usize,
    },
    Skipped,
}

/// A candidate region together with the page it lives on.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub page: &'a Page,
    pub region: &'a Region,
}

/// All regions of the corpus grouped by class, in corpus order.
pub fn region_pools(corpus: &AnnotatedCorpus) -> BTreeMap<ClassId, Vec<Candidate<'_>>> {
    let mut pools: BTreeMap<ClassId, Vec<Candidate<'_>>> = BTreeMap::new();
    for page in &corpus.pages {
        for region in &page.regions {
            pools
                .entry(region.class)
                .or_default()
                .push(Candidate { page, region });
        }
    }
    pools
}

/// Box occupied by `candidate` once anchored at `slot`'s upper-left corner
/// and rotated by `angle` about its own center, in whole pixels.
fn placed_box(slot: &Region, candidate: &Candidate<'_>, angle: f64) -> Option<(BBox, (u32, u32, u32, u32))> {
    let rect = candidate
        .region
        .bbox
        .pixel_rect(candidate.page.width, candidate.page.height)?;
    let (pw, ph) = (rect.2 - rect.0, rect.3 - rect.1);
    let (rw, rh) = rotated_extent(pw, ph, angle);
    let left = slot.bbox.x().floor() as i64 + (pw as i64 - rw as i64).div_euclid(2);
    let top = slot.bbox.y().floor() as i64 + (ph as i64 - rh as i64).div_euclid(2);
    let bbox = BBox::new(left as f64, top as f64, rw as f64, rh as f64).ok()?;
    Some((bbox, rect))
}

/// Fills one slot. Candidates are drawn uniformly from `pool`; the first
/// whose placed box fits inside the page without overlapping anything
/// already placed is accepted and its ink transferred.
pub fn place_region<R: Rng>(
    state: &mut PageUnderConstruction,
    slot: &Region,
    pool: &[Candidate<'_>],
    angle: f64,
    cfg: &GenConfig,
    images: &dyn ImageSource,
    rng: &mut R,
) -> Result<Placement, GenError> {
    if pool.is_empty() {
        return Err(GenError::EmptyPool(slot.class));
    }
    let (page_w, page_h) = state.image.dimensions();
    for _ in 0..=cfg.max_retries {
        let candidate = pool[rng.gen_range(0..pool.len())];
        let Some((bbox, (x0, y0, x1, y1))) = placed_box(slot, &candidate, angle) else {
            continue;
        };
        if !bbox.inside(page_w as f64, page_h as f64) || state.placed.iter().any(|p| p.overlaps(&bbox)) {
            continue;
        }

        let source = images.image(candidate.page)?;
        let patch = source.crop(x0, y0, x1, y1);
        let rotated =
            rotate_patch_with_coverage(&patch, angle, border_median(&patch), cfg.interpolation)?;
        let ink = sauvola_binarize(&rotated.image, &cfg.binarization)?.and(&rotated.coverage)?;
        let stats = transfer_ink(
            &mut state.image,
            &rotated.image,
            &ink,
            bbox.x() as i64,
            bbox.y() as i64,
        )?;
        debug_assert_eq!(stats.clipped, 0);
        let (left, top) = (bbox.x() as u32, bbox.y() as u32);
        for y in 0..ink.height() {
            for x in 0..ink.width() {
                if ink.get(x, y) {
                    state.ink.set(left + x, top + y, true);
                }
            }
        }
        state.placed.push(bbox);
        return Ok(Placement::Placed {
            chosen_region_id: candidate.region.id,
            bbox,
            ink_pixels: stats.written,
        });
    }
    Ok(Placement::Skipped)
}

/// Independent random stream for page `index`.
fn page_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Backgrounds are deterministic per source page, so each is computed once.
struct Backgrounds(Vec<OnceLock<Arc<GrayImage>>>);

impl Backgrounds {
    fn get(&self, index: usize, page: &Page, images: &dyn ImageSource, cfg: &BackgroundConfig) -> Result<GrayImage, GenError> {
        let cell = &self.0[index];
        if let Some(bg) = cell.get() {
            return Ok((**bg).clone());
        }
        let bg = estimate_background(&*images.image(page)?, cfg)?;
        let _ = cell.set(Arc::new(bg.clone()));
        Ok(bg)
    }
}

fn generate_page(
    index: usize,
    corpus: &AnnotatedCorpus,
    pools: &BTreeMap<ClassId, Vec<Candidate<'_>>>,
    backgrounds: &Backgrounds,
    images: &dyn ImageSource,
    cfg: &GenConfig,
) -> Result<SyntheticPage, GenError> {
    let mut rng = page_rng(cfg.seed, index);
    let source_index = rng.gen_range(0..corpus.pages.len());
    let source = &corpus.pages[source_index];
    let background = backgrounds.get(source_index, source, images, &cfg.background)?;
    let angle = if cfg.rotation_range > 0.0 {
        rng.gen_range(-cfg.rotation_range..=cfg.rotation_range)
    } else {
        0.0
    };

    let mut state = PageUnderConstruction::new(background);
    let mut regions = Vec::new();
    let mut slots = Vec::new();
    for slot in &source.regions {
        let pool = pools.get(&slot.class).map(Vec::as_slice).unwrap_or(&[]);
        let chosen = match place_region(&mut state, slot, pool, angle, cfg, images, &mut rng)? {
            Placement::Placed {
                chosen_region_id,
                bbox,
                ..
            } => {
                regions.push(Region {
                    id: 0,
                    page_id: index as u64,
                    class: slot.class,
                    bbox,
                });
                SlotChoice::Region(chosen_region_id)
            }
            Placement::Skipped => SlotChoice::SKIPPED,
        };
        slots.push(Slot {
            slot_region_id: slot.id,
            chosen,
        });
    }

    Ok(SyntheticPage {
        image: state.image,
        ink: state.ink,
        regions,
        provenance: Provenance {
            synthetic_page_id: index as u64,
            source_page_id: source.id,
            angle_deg: angle,
            slots,
        },
    })
}

/// Builds `cfg.n` pages. Page `i` draws from its own random stream derived
/// from `(cfg.seed, i)`, so output does not depend on scheduling. Region ids
/// are numbered consecutively across pages from 1.
pub fn generate(
    corpus: &AnnotatedCorpus,
    images: &dyn ImageSource,
    cfg: &GenConfig,
) -> Result<Vec<SyntheticPage>, GenError> {
    cfg.validate()?;
    if cfg.n == 0 {
        return Ok(Vec::new());
    }
    if corpus.pages.is_empty() {
        return Err(GenError::EmptyCorpus);
    }
    let pools = region_pools(corpus);
    let backgrounds = Backgrounds((0..corpus.pages.len()).map(|_| OnceLock::new()).collect());
    let mut pages = crate::par::map_indexed(cfg.n, |i| generate_page(i, corpus, &pools, &backgrounds, images, cfg))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut next_id = 1;
    for page in &mut pages {
        for r in &mut page.regions {
            r.id = next_id;
            next_id += 1;
        }
    }
    Ok(pages)
}

pub fn synthetic_file_name(page_id: u64) -> String {
    format!("images/synth_{page_id:05}.png")
}

/// Annotation file written by [`write_synthetic_corpus`].
pub const ANNOTATIONS_FILE: &str = "annotations.json";
/// Provenance sidecar written by [`write_synthetic_corpus`].
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Corpus view of generated pages, rooted at `root`.
pub fn synthetic_corpus(pages: &[SyntheticPage], categories: &[Category], root: &Path) -> AnnotatedCorpus {
    AnnotatedCorpus {
        pages: pages
            .iter()
            .map(|p| Page {
                id: p.provenance.synthetic_page_id,
                file_name: synthetic_file_name(p.provenance.synthetic_page_id),
                width: p.image.width(),
                height: p.image.height(),
                regions: p.regions.clone(),
            })
            .collect(),
        categories: categories.to_vec(),
        root: root.to_path_buf(),
    }
}

/// Writes one PNG per page under `images/`, the annotation file and the
/// provenance sidecar.
pub fn write_synthetic_corpus(
    pages: &[SyntheticPage],
    categories: &[Category],
    out_dir: &Path,
) -> Result<AnnotatedCorpus, GenError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| GenError::Io { path, source }
    };
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(io(&image_dir))?;
    let corpus = synthetic_corpus(pages, categories, out_dir);
    for (page, meta) in pages.iter().zip(&corpus.pages) {
        imaging::save_png(&page.image, &out_dir.join(&meta.file_name))?;
    }
    corpus::save_corpus(&corpus, out_dir.join(ANNOTATIONS_FILE))?;
    let provenance: Vec<&Provenance> = pages.iter().map(|p| &p.provenance).collect();
    let text = serde_json::to_string_pretty(&provenance).expect("provenance serialization is infallible");
    let path = out_dir.join(PROVENANCE_FILE);
    fs::write(&path, text + "\n").map_err(io(&path))?;
    Ok(corpus)
}
