use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use scoreforge::corpus::{
    load_corpus, load_corpus_report, make_splits, read_detections, save_corpus, validate_corpus,
    write_detections, Finding,
};
use scoreforge::fixture::{fake_detections, fake_transcriptions, write_fixture, FakeDetector, FixtureConfig};
use scoreforge::goaleval::{run_goal_eval, scatter_csv, summarize, Transcriptions, DEFAULT_IOU_MIN};
use scoreforge::metrics::{evaluate, grid_csv, sweep_thresholds};
use scoreforge::saepost::{extract_detections, load_probmaps, ExtractOptions, DEFAULT_RATIO};
use scoreforge::synthgen::{generate as synth, write_synthetic_corpus, DiskImages, GenConfig, SyntheticPage};
use scoreforge::{AnnotatedCorpus, Detection, Region, TOOL_VERSION};

#[derive(Serialize)]
struct Report<'a, C, R> {
    tool_version: &'static str,
    command: &'a str,
    config: &'a C,
    result: R,
}

fn write_report<C: Serialize, R: Serialize>(path: &Path, command: &str, config: &C, result: R) -> Result<()> {
    let report = Report {
        tool_version: TOOL_VERSION,
        command,
        config,
        result,
    };
    write_text(path, serde_json::to_string_pretty(&report)? + "\n")
}

fn write_text(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn ground_truth(corpus: &AnnotatedCorpus) -> Vec<Region> {
    corpus.regions().cloned().collect()
}

/// Detections must refer to pages of the annotation file.
fn check_universe(corpus: &AnnotatedCorpus, dets: &[Detection]) -> Result<()> {
    if let Some(d) = dets.iter().find(|d| corpus.page(d.page_id).is_none()) {
        bail!("detections reference page {} which is not in the annotations", d.page_id);
    }
    for d in dets {
        if corpus.class_name(d.class).is_none() {
            warn!("detection on page {} has unknown class {}", d.page_id, d.class);
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub corpus: PathBuf,
    /// Left out of the report so runs into different directories produce
    /// identical trees.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    #[serde(flatten)]
    pub gen: GenConfig,
}

#[derive(Debug, Serialize)]
struct GenerateSummary {
    pages: usize,
    regions: usize,
    slots: usize,
    skipped: usize,
    skip_rate: f64,
    skipped_by_class: BTreeMap<String, usize>,
}

fn generate_summary(corpus: &AnnotatedCorpus, pages: &[SyntheticPage]) -> GenerateSummary {
    let mut skipped_by_class = BTreeMap::new();
    let mut slots = 0;
    for p in pages {
        let source = corpus.page(p.provenance.source_page_id).expect("source page exists");
        for (slot, region) in p.provenance.slots.iter().zip(&source.regions) {
            slots += 1;
            if slot.chosen.region().is_none() {
                let name = corpus.class_name(region.class).unwrap_or("?").to_string();
                *skipped_by_class.entry(name).or_insert(0) += 1;
            }
        }
    }
    let skipped = skipped_by_class.values().sum();
    GenerateSummary {
        pages: pages.len(),
        regions: pages.iter().map(|p| p.regions.len()).sum(),
        slots,
        skipped,
        skip_rate: if slots == 0 { 0.0 } else { skipped as f64 / slots as f64 },
        skipped_by_class,
    }
}

const GENERATE_REPORT: &str = "generate_report.json";

pub fn generate(cfg: GenerateConfig) -> Result<()> {
    cfg.gen.validate()?;
    let corpus = load_corpus(&cfg.corpus)?;

    // build into a sibling directory and move it into place only once
    // everything has been written and checked
    let name = cfg
        .out
        .file_name()
        .context("--out must name a directory")?
        .to_string_lossy()
        .into_owned();
    let parent = cfg.out.parent().unwrap_or(Path::new("")).to_path_buf();
    if !parent.as_os_str().is_empty() {
        create_dir(&parent)?;
    }
    let staging = parent.join(format!(".{name}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }

    let build = || -> Result<GenerateSummary> {
        let images = DiskImages::new(&corpus);
        let pages = synth(&corpus, &images, &cfg.gen)?;
        write_synthetic_corpus(&pages, &corpus.categories, &staging)?;
        let reloaded = load_corpus(staging.join("annotations.json")).context("reloading generated corpus")?;
        let report = validate_corpus(&reloaded);
        ensure!(report.is_valid(), "generated corpus is invalid: {:?}", report.findings);
        let summary = generate_summary(&corpus, &pages);
        write_report(&staging.join(GENERATE_REPORT), "generate", &cfg, &summary)?;
        Ok(summary)
    };
    let summary = match build() {
        Ok(s) => s,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };

    if cfg.out.exists() {
        let replaceable = cfg.out.join(GENERATE_REPORT).exists()
            || fs::read_dir(&cfg.out).map(|mut d| d.next().is_none()).unwrap_or(false);
        if !replaceable {
            let _ = fs::remove_dir_all(&staging);
            bail!("{} exists and does not hold generate output", cfg.out.display());
        }
        fs::remove_dir_all(&cfg.out)?;
    }
    fs::rename(&staging, &cfg.out).with_context(|| format!("moving output to {}", cfg.out.display()))?;

    println!(
        "generated {} pages with {} regions; skipped {} of {} slots ({:.1}%)",
        summary.pages,
        summary.regions,
        summary.skipped,
        summary.slots,
        summary.skip_rate * 100.0
    );
    for (class, n) in &summary.skipped_by_class {
        println!("  skipped {class}: {n}");
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitConfig {
    pub corpus: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// Writes a subset corpus whose image paths still resolve from `dir`.
fn save_subset(corpus: &AnnotatedCorpus, ids: &[u64], path: &Path) -> Result<()> {
    let mut sub = corpus.subset(ids);
    for p in &mut sub.pages {
        let abs = std::path::absolute(corpus.root.join(&p.file_name))?;
        p.file_name = abs.to_string_lossy().into_owned();
    }
    save_corpus(&sub, path)?;
    Ok(())
}

pub fn split(cfg: SplitConfig) -> Result<()> {
    let corpus = load_corpus(&cfg.corpus)?;
    let plan = make_splits(&corpus, cfg.seed)?;
    create_dir(&cfg.out)?;

    let mut csv = String::from("split,page_id\n");
    for (k, ids) in &plan.train_subsets {
        save_subset(&corpus, ids, &cfg.out.join(format!("train_{k:02}.json")))?;
        for id in ids {
            let _ = writeln!(csv, "train_{k},{id}");
        }
    }
    for (name, ids) in [("validation", &plan.validation), ("test", &plan.test)] {
        save_subset(&corpus, ids, &cfg.out.join(format!("{name}.json")))?;
        for id in ids {
            let _ = writeln!(csv, "{name},{id}");
        }
    }
    write_text(&cfg.out.join("split.csv"), csv)?;
    write_report(&cfg.out.join("split_report.json"), "split", &cfg, &plan)?;

    let ladder: Vec<String> = plan.train_subsets.keys().map(usize::to_string).collect();
    println!(
        "train ladder [{}], validation {}, test {}",
        ladder.join(", "),
        plan.validation.len(),
        plan.test.len()
    );
    if !plan.full_ladder {
        warn!("corpus too small for the full training ladder");
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalConfig {
    pub corpus: PathBuf,
    pub detections: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub conf_thr: Option<f64>,
    #[serde(default)]
    pub iou_thr: Option<f64>,
}

fn per_class_csv(corpus: &AnnotatedCorpus, report: &scoreforge::metrics::EvalReport) -> String {
    let mut out = String::from("class,name,tp,fp,fn,precision,recall,f1,ap\n");
    for (class, s) in &report.per_class {
        let ap = report.ap.per_class_ap.get(class).map(|v| v.iter().sum::<f64>() / v.len() as f64);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            class,
            corpus.class_name(*class).unwrap_or(""),
            s.tp,
            s.fp,
            s.fn_,
            s.precision,
            s.recall,
            s.f1,
            ap.map(|v| v.to_string()).unwrap_or_default()
        );
    }
    out
}

pub fn eval(cfg: EvalConfig) -> Result<()> {
    let thresholds = match (cfg.conf_thr, cfg.iou_thr) {
        (Some(c), Some(i)) => {
            ensure!((0.0..=1.0).contains(&c), "conf_thr must lie in [0, 1]");
            ensure!(i > 0.0 && i <= 1.0, "iou_thr must lie in (0, 1]");
            Some((c, i))
        }
        (None, None) => None,
        _ => bail!("conf_thr and iou_thr must be given together"),
    };
    let corpus = load_corpus(&cfg.corpus)?;
    let dets = read_detections(&cfg.detections)?;
    check_universe(&corpus, &dets)?;
    let gts = ground_truth(&corpus);
    let (report, sweep) = evaluate(&dets, &gts, thresholds);

    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("grid.csv"), grid_csv(&sweep.grid))?;
    write_text(&cfg.out.join("per_class.csv"), per_class_csv(&corpus, &report))?;
    write_report(&cfg.out.join("eval_report.json"), "eval", &cfg, &report)?;
    println!(
        "mAP {}%  mP {:.4}  mR {:.4}  mF1 {:.4}  (conf {:.2}, iou {:.2}{})",
        report.map_display,
        report.macro_precision,
        report.macro_recall,
        report.macro_f1,
        report.conf_thr,
        report.iou_thr,
        if report.thresholds_from_sweep { ", from sweep" } else { "" }
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub corpus: PathBuf,
    pub detections: PathBuf,
    pub out: PathBuf,
}

pub fn sweep(cfg: SweepConfig) -> Result<()> {
    let corpus = load_corpus(&cfg.corpus)?;
    let dets = read_detections(&cfg.detections)?;
    check_universe(&corpus, &dets)?;
    let result = sweep_thresholds(&dets, &ground_truth(&corpus));
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("sweep.csv"), grid_csv(&result.grid))?;
    write_report(&cfg.out.join("sweep_report.json"), "sweep", &cfg, &result)?;
    let b = result.best;
    println!(
        "best conf {:.2} iou {:.2}: mP {:.4} mR {:.4} mF1 {:.4}",
        b.conf_thr, b.iou_thr, b.mp, b.mr, b.mf1
    );
    Ok(())
}

fn default_ratio() -> f64 {
    DEFAULT_RATIO
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub corpus: PathBuf,
    pub probmaps: PathBuf,
    pub out: PathBuf,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(flatten)]
    pub extract: ExtractOptions,
}

pub fn postprocess(cfg: PostprocessConfig) -> Result<()> {
    ensure!((0.0..1.0).contains(&cfg.ratio), "ratio must lie in [0, 1)");
    ensure!((0.0..=1.0).contains(&cfg.extract.prob_thr), "prob_thr must lie in [0, 1]");
    ensure!((0.0..=1.0).contains(&cfg.extract.min_area_frac), "min_area_frac must lie in [0, 1]");
    let corpus = load_corpus(&cfg.corpus)?;
    let maps = load_probmaps(&cfg.probmaps)?;

    let mut dets = Vec::new();
    let mut per_class: BTreeMap<String, usize> = BTreeMap::new();
    for ((page_id, name), map) in &maps {
        let class = corpus
            .class_by_name(name)
            .with_context(|| format!("probability map for unknown class {name:?}"))?;
        let page = corpus
            .page(*page_id)
            .with_context(|| format!("probability map for unknown page {page_id}"))?;
        ensure!(
            (map.width(), map.height()) == (page.width, page.height),
            "probability map {page_id}.{name} is {}x{} but the page is {}x{}",
            map.width(),
            map.height(),
            page.width,
            page.height
        );
        let found = extract_detections(map, class, *page_id, &cfg.extract, cfg.ratio)?;
        *per_class.entry(name.clone()).or_insert(0) += found.len();
        dets.extend(found);
    }
    for (i, d) in dets.iter_mut().enumerate() {
        d.id = Some(i as u64);
    }

    create_dir(&cfg.out)?;
    write_detections(&dets, cfg.out.join("detections.json"))?;
    let mut csv = String::from("id,page_id,class,x,y,w,h,confidence\n");
    for d in &dets {
        let b = d.bbox;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            d.id.unwrap_or_default(),
            d.page_id,
            d.class,
            b.x(),
            b.y(),
            b.w(),
            b.h(),
            d.confidence
        );
    }
    write_text(&cfg.out.join("detections.csv"), csv)?;
    #[derive(Serialize)]
    struct Summary {
        maps: usize,
        detections: usize,
        per_class: BTreeMap<String, usize>,
    }
    let summary = Summary {
        maps: maps.len(),
        detections: dets.len(),
        per_class,
    };
    write_report(&cfg.out.join("postprocess_report.json"), "postprocess", &cfg, &summary)?;
    println!("{} detections from {} maps", summary.detections, summary.maps);
    Ok(())
}

fn default_iou_min() -> f64 {
    DEFAULT_IOU_MIN
}

fn default_conf_thr() -> f64 {
    0.5
}

fn default_label() -> String {
    "corpus".into()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GoalEvalConfig {
    pub corpus: PathBuf,
    pub detections: PathBuf,
    pub reference: PathBuf,
    pub hyp_gt: PathBuf,
    pub hyp_det: PathBuf,
    pub out: PathBuf,
    #[serde(default = "default_iou_min")]
    pub iou_min: f64,
    #[serde(default = "default_conf_thr")]
    pub conf_thr: f64,
    #[serde(default = "default_label")]
    pub label: String,
}

pub fn goal_eval(cfg: GoalEvalConfig) -> Result<()> {
    ensure!((0.0..1.0).contains(&cfg.iou_min), "iou_min must lie in [0, 1)");
    ensure!((0.0..=1.0).contains(&cfg.conf_thr), "conf_thr must lie in [0, 1]");
    ensure!(!cfg.label.contains([',', '\n']), "label must not contain commas or newlines");
    let corpus = load_corpus(&cfg.corpus)?;
    let dets = read_detections(&cfg.detections)?;
    check_universe(&corpus, &dets)?;
    let reference = Transcriptions::load(&cfg.reference)?;
    let hyp_gt = Transcriptions::load(&cfg.hyp_gt)?;
    let hyp_det = Transcriptions::load(&cfg.hyp_det)?;

    let run = run_goal_eval(&dets, &ground_truth(&corpus), cfg.iou_min, &reference, &hyp_gt, &hyp_det);
    let summary = summarize(&run.tuples, cfg.conf_thr);
    if !run.skipped.is_empty() {
        warn!("{} matched pairs could not be scored", run.skipped.len());
    }

    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("scatter.csv"), scatter_csv(&run.tuples, &cfg.label))?;
    #[derive(Serialize)]
    struct GoalResult<'a> {
        pairs: usize,
        summary: &'a scoreforge::goaleval::GoalSummary,
        skipped: &'a [scoreforge::goaleval::Skipped],
    }
    write_report(
        &cfg.out.join("goal_report.json"),
        "goal-eval",
        &cfg,
        GoalResult {
            pairs: run.tuples.len(),
            summary: &summary,
            skipped: &run.skipped,
        },
    )?;
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "{} pairs; conf >= {:.2}: n {} mean {} median {}; below: n {} mean {} median {}",
        run.tuples.len(),
        summary.conf_thr,
        summary.above.count,
        fmt(summary.above.mean),
        fmt(summary.above.median),
        summary.below.count,
        fmt(summary.below.mean),
        fmt(summary.below.median)
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ValidateConfig {
    pub corpus: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub no_images: bool,
}

pub fn validate(cfg: ValidateConfig) -> Result<()> {
    let (corpus, report) = load_corpus_report(&cfg.corpus)?;
    let mut image_problems = Vec::new();
    if !cfg.no_images {
        for page in &corpus.pages {
            match corpus.load_image(page) {
                Ok(img) if img.dimensions() != (page.width, page.height) => image_problems.push(format!(
                    "page {}: image is {}x{}, annotated {}x{}",
                    page.id,
                    img.width(),
                    img.height(),
                    page.width,
                    page.height
                )),
                Ok(_) => {}
                Err(e) => image_problems.push(format!("page {}: {e}", page.id)),
            }
        }
    }
    let valid = report.is_valid() && image_problems.is_empty();
    #[derive(Serialize)]
    struct Summary<'a> {
        valid: bool,
        pages: usize,
        regions: usize,
        categories: usize,
        findings: &'a [Finding],
        image_problems: &'a [String],
    }
    let summary = Summary {
        valid,
        pages: corpus.pages.len(),
        regions: corpus.region_count(),
        categories: corpus.categories.len(),
        findings: &report.findings,
        image_problems: &image_problems,
    };
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_report(&out.join("validate_report.json"), "validate", &cfg, &summary)?;
    }
    for f in &report.findings {
        println!("{f}");
    }
    for p in &image_problems {
        println!("{p}");
    }
    println!(
        "{} pages, {} regions, {} categories: {}",
        summary.pages,
        summary.regions,
        summary.categories,
        if valid { "valid" } else { "INVALID" }
    );
    ensure!(valid, "{} problems found", report.findings.len() + image_problems.len());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MakeFixtureConfig {
    pub out: PathBuf,
    #[serde(flatten)]
    pub fixture: FixtureConfig,
}

pub fn make_fixture(cfg: MakeFixtureConfig) -> Result<()> {
    let f = &cfg.fixture;
    ensure!(f.width >= 64 && f.height >= 64, "fixture pages must be at least 64x64");
    let corpus = write_fixture(f, &cfg.out)?;
    info!("fixture written to {}", cfg.out.display());
    println!("{} pages, {} regions", corpus.pages.len(), corpus.region_count());
    Ok(())
}

fn default_base_error() -> f64 {
    0.05
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FakeDetectConfig {
    pub corpus: PathBuf,
    pub out: PathBuf,
    #[serde(flatten)]
    pub detector: FakeDetector,
    #[serde(default)]
    pub transcriptions: bool,
    #[serde(default = "default_base_error")]
    pub base_error: f64,
}

pub fn fake_detect(cfg: FakeDetectConfig) -> Result<()> {
    let d = &cfg.detector;
    ensure!(d.jitter >= 0.0 && d.jitter.is_finite(), "jitter must be non-negative");
    ensure!((0.0..=1.0).contains(&d.miss_rate), "miss_rate must lie in [0, 1]");
    ensure!((0.0..=1.0).contains(&cfg.base_error), "base_error must lie in [0, 1]");
    let corpus = load_corpus(&cfg.corpus)?;
    let dets = fake_detections(&corpus, d);
    create_dir(&cfg.out)?;
    write_detections(&dets, cfg.out.join("detections.json"))?;
    if cfg.transcriptions {
        let t = fake_transcriptions(&corpus, &dets, d.seed, cfg.base_error);
        write_text(&cfg.out.join("reference.tsv"), t.reference.to_text())?;
        write_text(&cfg.out.join("hyp_gt.tsv"), t.hyp_gt.to_text())?;
        write_text(&cfg.out.join("hyp_det.tsv"), t.hyp_det.to_text())?;
    }
    println!("{} detections for {} regions", dets.len(), corpus.region_count());
    Ok(())
}
