//! Annotated corpora, detection files and train/validation/test splits.
//!
//! Annotations use a subset of the COCO layout:
//!
//! ```json
//! {
//!   "images": [{"id": 1, "file_name": "p1.png", "width": 800, "height": 600}],
//!   "annotations": [{"id": 7, "image_id": 1, "category_id": 1, "bbox": [x, y, w, h]}],
//!   "categories": [{"id": 1, "name": "staff"}]
//! }
//! ```
//!
//! Detections use the COCO results layout, a bare array of
//! `{"image_id", "category_id", "bbox", "score"}` records.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::imaging::{self, GrayImage, ImagingError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("referential error: {0}")]
    Referential(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("cannot split a corpus of {0} pages (need at least 3)")]
    TooFewPages(usize),
    #[error("image error for page {page_id}: {source}")]
    Image {
        page_id: u64,
        #[source]
        source: ImagingError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Category id as it appears in annotation and detection files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u64);

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: ClassId,
    pub name: String,
}

/// A labeled ground-truth box on one page.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: u64,
    pub page_id: u64,
    pub class: ClassId,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub regions: Vec<Region>,
}

/// A set of pages with their regions and the category table.
///
/// Immutable once loaded; [`load_corpus`] guarantees that
/// [`validate_corpus`] reports nothing. Hand-built values may violate the
/// invariants, which is what the validator is for.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCorpus {
    pub pages: Vec<Page>,
    pub categories: Vec<Category>,
    /// Directory page `file_name`s are resolved against.
    pub root: PathBuf,
}

impl AnnotatedCorpus {
    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.pages.iter().flat_map(|p| p.regions.iter())
    }

    pub fn region_count(&self) -> usize {
        self.pages.iter().map(|p| p.regions.len()).sum()
    }

    pub fn page(&self, id: u64) -> Option<&Page> {
        self.pages.iter().find(|p| p.id == id)
    }

    pub fn class_by_name(&self, name: &str) -> Option<ClassId> {
        self.categories.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn class_name(&self, class: ClassId) -> Option<&str> {
        self.categories
            .iter()
            .find(|c| c.id == class)
            .map(|c| c.name.as_str())
    }

    pub fn image_path(&self, page: &Page) -> PathBuf {
        self.root.join(&page.file_name)
    }

    pub fn load_image(&self, page: &Page) -> Result<GrayImage, CorpusError> {
        imaging::load_gray(&self.image_path(page)).map_err(|source| CorpusError::Image {
            page_id: page.id,
            source,
        })
    }

    /// Keeps only the listed pages, preserving corpus order.
    pub fn subset(&self, page_ids: &[u64]) -> AnnotatedCorpus {
        let keep: HashSet<u64> = page_ids.iter().copied().collect();
        AnnotatedCorpus {
            pages: self
                .pages
                .iter()
                .filter(|p| keep.contains(&p.id))
                .cloned()
                .collect(),
            categories: self.categories.clone(),
            root: self.root.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<Category>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: ClassId,
    bbox: [f64; 4],
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<AnnotatedCorpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_corpus(&text, root).map_err(|e| match e {
        CorpusError::Parse { source, .. } => CorpusError::Parse {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parses and validates annotation JSON held in memory.
pub fn parse_corpus(text: &str, root: PathBuf) -> Result<AnnotatedCorpus, CorpusError> {
    let (corpus, report) = parse_unvalidated(text, root)?;
    if let Some(first) = report.findings.first() {
        return Err(match first {
            Finding::OutOfBounds { .. } | Finding::EmptyPage { .. } => {
                CorpusError::Geometry(first.to_string())
            }
            _ => CorpusError::Referential(first.to_string()),
        });
    }
    Ok(corpus)
}

/// Loads an annotation file without rejecting validation findings, for
/// reporting. Structural problems (bad JSON, annotations pointing at
/// missing images, degenerate boxes) are still errors.
pub fn load_corpus_report(
    path: impl AsRef<Path>,
) -> Result<(AnnotatedCorpus, ValidationReport), CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_unvalidated(&text, root).map_err(|e| match e {
        CorpusError::Parse { source, .. } => CorpusError::Parse {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

fn parse_unvalidated(
    text: &str,
    root: PathBuf,
) -> Result<(AnnotatedCorpus, ValidationReport), CorpusError> {
    let file: CocoFile = serde_json::from_str(text).map_err(|source| CorpusError::Parse {
        path: PathBuf::new(),
        source,
    })?;

    let mut pages: Vec<Page> = Vec::with_capacity(file.images.len());
    let mut index: HashMap<u64, usize> = HashMap::new();
    for img in file.images {
        index.entry(img.id).or_insert(pages.len());
        pages.push(Page {
            id: img.id,
            file_name: img.file_name,
            width: img.width,
            height: img.height,
            regions: Vec::new(),
        });
    }

    for ann in file.annotations {
        let Some(&slot) = index.get(&ann.image_id) else {
            return Err(CorpusError::Referential(format!(
                "annotation {} references missing image {}",
                ann.id, ann.image_id
            )));
        };
        let [x, y, w, h] = ann.bbox;
        let bbox = BBox::new(x, y, w, h)
            .map_err(|e| CorpusError::Geometry(format!("annotation {}: {e}", ann.id)))?;
        pages[slot].regions.push(Region {
            id: ann.id,
            page_id: ann.image_id,
            class: ann.category_id,
            bbox,
        });
    }

    let corpus = AnnotatedCorpus {
        pages,
        categories: file.categories,
        root,
    };
    let report = validate_corpus(&corpus);
    Ok((corpus, report))
}

fn to_coco(corpus: &AnnotatedCorpus) -> CocoFile {
    CocoFile {
        images: corpus
            .pages
            .iter()
            .map(|p| CocoImage {
                id: p.id,
                file_name: p.file_name.clone(),
                width: p.width,
                height: p.height,
            })
            .collect(),
        annotations: corpus
            .regions()
            .map(|r| CocoAnnotation {
                id: r.id,
                image_id: r.page_id,
                category_id: r.class,
                bbox: r.bbox.into(),
            })
            .collect(),
        categories: corpus.categories.clone(),
    }
}

pub fn corpus_to_json(corpus: &AnnotatedCorpus) -> String {
    serde_json::to_string_pretty(&to_coco(corpus)).expect("corpus serialization is infallible")
}

pub fn save_corpus(corpus: &AnnotatedCorpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, corpus_to_json(corpus) + "\n").map_err(io_err(path))
}

/// One problem found by [`validate_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    DuplicatePageId { page_id: u64 },
    DuplicateRegionId { region_id: u64 },
    DuplicateCategoryId { class: ClassId },
    EmptyPage { page_id: u64 },
    UnknownClass { region_id: u64, class: ClassId },
    PageMismatch { region_id: u64, page_id: u64 },
    OutOfBounds { region_id: u64, page_id: u64 },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::DuplicatePageId { page_id } => write!(f, "duplicate page id {page_id}"),
            Finding::DuplicateRegionId { region_id } => {
                write!(f, "duplicate region id {region_id}")
            }
            Finding::DuplicateCategoryId { class } => write!(f, "duplicate category id {class}"),
            Finding::EmptyPage { page_id } => write!(f, "page {page_id} has a zero dimension"),
            Finding::UnknownClass { region_id, class } => {
                write!(f, "region {region_id} has unknown class {class}")
            }
            Finding::PageMismatch { region_id, page_id } => {
                write!(f, "region {region_id} is stored under page {page_id} but points elsewhere")
            }
            Finding::OutOfBounds { region_id, page_id } => {
                write!(f, "region {region_id} exceeds the bounds of page {page_id}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

pub fn validate_corpus(corpus: &AnnotatedCorpus) -> ValidationReport {
    let mut findings = Vec::new();

    let mut classes = HashSet::new();
    for c in &corpus.categories {
        if !classes.insert(c.id) {
            findings.push(Finding::DuplicateCategoryId { class: c.id });
        }
    }

    let mut page_ids = HashSet::new();
    let mut region_ids = HashSet::new();
    for page in &corpus.pages {
        if !page_ids.insert(page.id) {
            findings.push(Finding::DuplicatePageId { page_id: page.id });
        }
        if page.width == 0 || page.height == 0 {
            findings.push(Finding::EmptyPage { page_id: page.id });
        }
        for r in &page.regions {
            if !region_ids.insert(r.id) {
                findings.push(Finding::DuplicateRegionId { region_id: r.id });
            }
            if r.page_id != page.id {
                findings.push(Finding::PageMismatch {
                    region_id: r.id,
                    page_id: page.id,
                });
            }
            if !classes.contains(&r.class) {
                findings.push(Finding::UnknownClass {
                    region_id: r.id,
                    class: r.class,
                });
            }
            if !r.bbox.inside(page.width as f64, page.height as f64) {
                findings.push(Finding::OutOfBounds {
                    region_id: r.id,
                    page_id: page.id,
                });
            }
        }
    }
    ValidationReport { findings }
}

/// Training-set sizes, doubling from one page.
pub const TRAIN_LADDER: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Nested training subsets keyed by size.
    pub train_subsets: BTreeMap<usize, Vec<u64>>,
    pub validation: Vec<u64>,
    pub test: Vec<u64>,
    pub seed: u64,
    /// False when the corpus was too small for the full 64-page ladder.
    pub full_ladder: bool,
}

impl SplitPlan {
    /// Largest training subset; every smaller subset is a prefix of it.
    pub fn train_pool(&self) -> &[u64] {
        self.train_subsets
            .values()
            .next_back()
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Shuffles page ids with `seed` and carves them into a training ladder and
/// two evaluation partitions of equal size. Odd remainders go to validation.
pub fn make_splits(corpus: &AnnotatedCorpus, seed: u64) -> Result<SplitPlan, CorpusError> {
    let n = corpus.pages.len();
    if n < 3 {
        return Err(CorpusError::TooFewPages(n));
    }
    let mut ids: Vec<u64> = corpus.pages.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    // at least one page each for validation and test
    let max_train = TRAIN_LADDER
        .iter()
        .copied()
        .filter(|&k| k + 2 <= n)
        .max()
        .unwrap_or(1);
    let train_subsets = TRAIN_LADDER
        .iter()
        .copied()
        .filter(|&k| k <= max_train)
        .map(|k| (k, ids[..k].to_vec()))
        .collect();
    let rest = &ids[max_train..];
    let n_val = rest.len().div_ceil(2);
    Ok(SplitPlan {
        train_subsets,
        validation: rest[..n_val].to_vec(),
        test: rest[n_val..].to_vec(),
        seed,
        full_ladder: max_train == *TRAIN_LADDER.last().unwrap(),
    })
}

/// One model prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Optional identifier; detections without one are addressed by their
    /// position in the file.
    pub id: Option<u64>,
    pub page_id: u64,
    pub class: ClassId,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    image_id: u64,
    category_id: ClassId,
    bbox: [f64; 4],
    score: f64,
}

pub fn detections_to_json(dets: &[Detection]) -> String {
    let records: Vec<DetectionRecord> = dets
        .iter()
        .map(|d| DetectionRecord {
            id: d.id,
            image_id: d.page_id,
            category_id: d.class,
            bbox: d.bbox.into(),
            score: d.confidence,
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("detection serialization is infallible")
}

pub fn detections_from_json(text: &str) -> Result<Vec<Detection>, CorpusError> {
    let records: Vec<DetectionRecord> =
        serde_json::from_str(text).map_err(|source| CorpusError::Parse {
            path: PathBuf::new(),
            source,
        })?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(CorpusError::Range(format!(
                    "detection {i} has confidence {} outside [0, 1]",
                    r.score
                )));
            }
            let [x, y, w, h] = r.bbox;
            let bbox = BBox::new(x, y, w, h)
                .map_err(|e| CorpusError::Geometry(format!("detection {i}: {e}")))?;
            Ok(Detection {
                id: r.id,
                page_id: r.image_id,
                class: r.category_id,
                bbox,
                confidence: r.score,
            })
        })
        .collect()
}

pub fn write_detections(dets: &[Detection], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, detections_to_json(dets) + "\n").map_err(io_err(path))
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    detections_from_json(&text).map_err(|e| match e {
        CorpusError::Parse { source, .. } => CorpusError::Parse {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_json(pages: usize, regions_per_page: usize) -> String {
        let images: Vec<String> = (0..pages)
            .map(|i| {
                format!(r#"{{"id": {i}, "file_name": "p{i}.png", "width": 800, "height": 600}}"#)
            })
            .collect();
        let mut anns = Vec::new();
        for p in 0..pages {
            for r in 0..regions_per_page {
                let id = p * regions_per_page + r;
                let class = 1 + r % 2;
                let y = 20 + 120 * r;
                anns.push(format!(
                    r#"{{"id": {id}, "image_id": {p}, "category_id": {class}, "bbox": [40, {y}, 700, 100]}}"#
                ));
            }
        }
        format!(
            r#"{{"images": [{}], "annotations": [{}], "categories": [{{"id": 1, "name": "staff"}}, {{"id": 2, "name": "text"}}]}}"#,
            images.join(","),
            anns.join(",")
        )
    }

    fn parse(text: &str) -> Result<AnnotatedCorpus, CorpusError> {
        parse_corpus(text, PathBuf::from("."))
    }

    #[test]
    fn loads_hand_built_fixture() {
        let c = parse(&corpus_json(4, 3)).unwrap();
        assert_eq!(c.pages.len(), 4);
        assert_eq!(c.region_count(), 12);
        assert_eq!(c.class_by_name("text"), Some(ClassId(2)));
        assert!(validate_corpus(&c).is_valid());
    }

    #[test]
    fn empty_annotations_are_fine() {
        let c = parse(&corpus_json(3, 0)).unwrap();
        assert_eq!(c.pages.len(), 3);
        assert_eq!(c.region_count(), 0);
    }

    #[test]
    fn reports_page_count_of_large_descriptor() {
        let c = parse(&corpus_json(150, 0)).unwrap();
        assert_eq!(c.pages.len(), 150);
    }

    #[test]
    fn load_errors_are_classified() {
        assert!(matches!(parse("{not json"), Err(CorpusError::Parse { .. })));
        let missing_page = r#"{"images": [], "annotations": [{"id": 1, "image_id": 9, "category_id": 1, "bbox": [0,0,1,1]}], "categories": [{"id": 1, "name": "staff"}]}"#;
        assert!(matches!(parse(missing_page), Err(CorpusError::Referential(_))));
        let missing_cat = r#"{"images": [{"id": 9, "file_name": "a.png", "width": 5, "height": 5}], "annotations": [{"id": 1, "image_id": 9, "category_id": 3, "bbox": [0,0,1,1]}], "categories": []}"#;
        assert!(matches!(parse(missing_cat), Err(CorpusError::Referential(_))));
        let flat = r#"{"images": [{"id": 9, "file_name": "a.png", "width": 5, "height": 5}], "annotations": [{"id": 1, "image_id": 9, "category_id": 1, "bbox": [0,0,3,0]}], "categories": [{"id": 1, "name": "staff"}]}"#;
        assert!(matches!(parse(flat), Err(CorpusError::Geometry(_))));
        let spill = r#"{"images": [{"id": 9, "file_name": "a.png", "width": 5, "height": 5}], "annotations": [{"id": 1, "image_id": 9, "category_id": 1, "bbox": [3,0,3,1]}], "categories": [{"id": 1, "name": "staff"}]}"#;
        assert!(matches!(parse(spill), Err(CorpusError::Geometry(_))));
    }

    #[test]
    fn validator_finds_each_problem_once() {
        let mut c = parse(&corpus_json(2, 2)).unwrap();
        assert!(validate_corpus(&c).is_valid());

        let mut wide = c.clone();
        wide.pages[0].regions[0].bbox = BBox::new(700.0, 0.0, 101.0, 10.0).unwrap();
        assert_eq!(
            validate_corpus(&wide).findings,
            vec![Finding::OutOfBounds {
                region_id: 0,
                page_id: 0
            }]
        );

        c.pages[1].regions[0].id = c.pages[0].regions[0].id;
        assert_eq!(
            validate_corpus(&c).findings,
            vec![Finding::DuplicateRegionId { region_id: 0 }]
        );
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse_corpus(&corpus_json(3, 2), dir.path().to_path_buf()).unwrap();
        let path = dir.path().join("ann.json");
        save_corpus(&c, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c);
    }

    #[test]
    fn split_of_150_pages() {
        let c = parse(&corpus_json(150, 0)).unwrap();
        let plan = make_splits(&c, 7).unwrap();
        assert!(plan.full_ladder);
        assert_eq!(
            plan.train_subsets.keys().copied().collect::<Vec<_>>(),
            TRAIN_LADDER.to_vec()
        );
        assert_eq!(plan.validation.len(), 43);
        assert_eq!(plan.test.len(), 43);
        assert_eq!(plan, make_splits(&c, 7).unwrap());
        assert_ne!(plan, make_splits(&c, 8).unwrap());
    }

    #[test]
    fn split_edge_sizes() {
        let c = parse(&corpus_json(66, 0)).unwrap();
        let plan = make_splits(&c, 1).unwrap();
        assert_eq!((plan.validation.len(), plan.test.len()), (1, 1));
        assert!(plan.full_ladder);

        let c = parse(&corpus_json(67, 0)).unwrap();
        let plan = make_splits(&c, 1).unwrap();
        assert_eq!((plan.validation.len(), plan.test.len()), (2, 1));

        let c = parse(&corpus_json(10, 0)).unwrap();
        let plan = make_splits(&c, 1).unwrap();
        assert!(!plan.full_ladder);
        assert_eq!(plan.train_pool().len(), 8);
        assert_eq!((plan.validation.len(), plan.test.len()), (1, 1));

        let c = parse(&corpus_json(2, 0)).unwrap();
        assert!(matches!(make_splits(&c, 1), Err(CorpusError::TooFewPages(2))));
    }

    fn sample_detections() -> Vec<Detection> {
        vec![
            Detection {
                id: None,
                page_id: 1,
                class: ClassId(1),
                bbox: BBox::new(0.1, 0.2, 10.3, 4.0).unwrap(),
                confidence: 0.123456789012345,
            },
            Detection {
                id: Some(4),
                page_id: 2,
                class: ClassId(2),
                bbox: BBox::new(1.0 / 3.0, 7.0, 1e-3, 5.5).unwrap(),
                confidence: 1.0,
            },
            Detection {
                id: None,
                page_id: 2,
                class: ClassId(1),
                bbox: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                confidence: 0.0,
            },
        ]
    }

    #[test]
    fn detection_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dets.json");
        let dets = sample_detections();
        write_detections(&dets, &path).unwrap();
        assert_eq!(read_detections(&path).unwrap(), dets);

        write_detections(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().trim(), "[]");
        assert!(read_detections(&path).unwrap().is_empty());
    }

    #[test]
    fn detection_confidence_out_of_range() {
        let text = r#"[{"image_id": 1, "category_id": 1, "bbox": [0,0,1,1], "score": 1.5}]"#;
        assert!(matches!(
            detections_from_json(text),
            Err(CorpusError::Range(_))
        ));
    }
}
