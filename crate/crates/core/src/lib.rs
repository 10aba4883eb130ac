//! Tooling for region-based layout analysis of music score images.
//!
//! Two halves share one set of raster and geometry primitives:
//!
//! * [`synthgen`] builds semi-synthetic annotated pages from a small labeled
//!   corpus: the source page is blurred into an empty background, and each
//!   annotated region is replaced by the ink of a random same-class region
//!   taken from anywhere in the corpus.
//! * [`metrics`], [`saepost`] and [`goaleval`] score region predictions:
//!   IoU matching, macro precision/recall/F1 with threshold sweeps, COCO-style
//!   mAP, probability-map post-processing and symbol-error-rate deltas.
//!
//! [`corpus`] handles the COCO-subset annotation format, detection files and
//! train/validation/test splits. [`fixture`] draws procedural score pages so
//! everything can be exercised without the original manuscripts.

pub mod bbox;
pub mod corpus;
pub mod fixture;
pub mod goaleval;
pub mod imaging;
pub mod metrics;
pub mod saepost;
pub mod synthgen;

mod par;

pub use bbox::BBox;
pub use corpus::{AnnotatedCorpus, Category, ClassId, Detection, Page, Region};
pub use imaging::{BinaryMask, GrayImage};

/// Version string stamped into every report.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
