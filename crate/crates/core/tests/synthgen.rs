use std::collections::HashMap;

use scoreforge::corpus::{load_corpus, validate_corpus};
use scoreforge::fixture::{make_fixture, FixtureConfig, STAFF};
use scoreforge::imaging::{estimate_background, sauvola_binarize, GrayImage};
use scoreforge::synthgen::{generate, write_synthetic_corpus, GenConfig, MemoryImages, SyntheticPage};
use scoreforge::{AnnotatedCorpus, BBox, Page, Region};

fn fixture(pages: usize) -> (AnnotatedCorpus, MemoryImages) {
    let (corpus, images) = make_fixture(&FixtureConfig {
        pages,
        ..Default::default()
    });
    let ids = corpus.pages.iter().map(|p| p.id);
    let images = MemoryImages::new(ids.zip(images));
    (corpus, images)
}

fn check_invariants(corpus: &AnnotatedCorpus, images: &MemoryImages, cfg: &GenConfig, pages: &[SyntheticPage]) {
    let class_of: HashMap<u64, _> = corpus.regions().map(|r| (r.id, r.class)).collect();
    for page in pages {
        let prov = &page.provenance;
        let source = corpus.page(prov.source_page_id).unwrap();
        let (w, h) = page.image.dimensions();
        assert_eq!((w, h), (source.width, source.height));
        assert!(prov.angle_deg.abs() <= cfg.rotation_range);

        for (i, r) in page.regions.iter().enumerate() {
            assert!(r.bbox.inside(w as f64, h as f64), "{:?}", r.bbox);
            for s in &page.regions[i + 1..] {
                assert!(!r.bbox.overlaps(&s.bbox), "{:?} / {:?}", r.bbox, s.bbox);
            }
        }

        // placed regions line up with the non-skipped slots, in order
        assert_eq!(prov.slots.len(), source.regions.len());
        let placed: Vec<_> = prov
            .slots
            .iter()
            .zip(&source.regions)
            .filter_map(|(slot, src)| slot.chosen.region().map(|c| (src, c)))
            .collect();
        assert_eq!(placed.len(), page.regions.len());
        for ((src, chosen), r) in placed.iter().zip(&page.regions) {
            assert_eq!(r.class, src.class);
            assert_eq!(class_of[chosen], src.class);
        }

        let background = estimate_background(&images.0[&source.id], &cfg.background).unwrap();
        let in_box = |x: u32, y: u32| {
            page.regions.iter().any(|r| {
                let b = r.bbox;
                (x as f64) >= b.x() && (x as f64) < b.right() && (y as f64) >= b.y() && (y as f64) < b.bottom()
            })
        };
        for y in 0..h {
            for x in 0..w {
                if !in_box(x, y) {
                    assert!(!page.ink.get(x, y));
                    assert_eq!(page.image.get(x, y), background.get(x, y), "({x},{y})");
                }
            }
        }
    }
}

#[test]
fn generated_pages_satisfy_invariants() {
    let (corpus, images) = fixture(4);
    let cfg = GenConfig {
        n: 6,
        seed: 42,
        ..Default::default()
    };
    let pages = generate(&corpus, &images, &cfg).unwrap();
    assert_eq!(pages.len(), 6);
    check_invariants(&corpus, &images, &cfg, &pages);
    let ids: Vec<u64> = pages.iter().flat_map(|p| p.regions.iter().map(|r| r.id)).collect();
    assert_eq!(ids, (1..=ids.len() as u64).collect::<Vec<_>>());
    assert!(pages.iter().any(|p| p.provenance.angle_deg != 0.0));
}

#[test]
fn generation_is_deterministic() {
    let (corpus, images) = fixture(3);
    let cfg = GenConfig {
        n: 4,
        seed: 9,
        ..Default::default()
    };
    let a = generate(&corpus, &images, &cfg).unwrap();
    let b = generate(&corpus, &images, &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.image, y.image);
        assert_eq!(x.regions, y.regions);
        assert_eq!(x.provenance, y.provenance);
    }
    let other = generate(&corpus, &images, &GenConfig { seed: 10, ..cfg }).unwrap();
    assert!(a.iter().zip(&other).any(|(x, y)| x.image != y.image));
}

#[test]
fn self_substitution_copies_source_ink() {
    let (full, images) = fixture(1);
    let src = &full.pages[0];
    let region = src.regions.iter().find(|r| r.class == STAFF).unwrap().clone();
    let corpus = AnnotatedCorpus {
        pages: vec![Page {
            regions: vec![region.clone()],
            ..src.clone()
        }],
        categories: full.categories.clone(),
        root: full.root.clone(),
    };
    let cfg = GenConfig {
        n: 1,
        rotation_range: 0.0,
        ..Default::default()
    };
    let out = generate(&corpus, &images, &cfg).unwrap().remove(0);
    assert_eq!(out.regions.len(), 1);
    assert_eq!(out.regions[0].bbox, region.bbox);

    let (x0, y0, x1, y1) = region.bbox.pixel_rect(src.width, src.height).unwrap();
    let patch: GrayImage = images.0[&src.id].crop(x0, y0, x1, y1);
    let expected = sauvola_binarize(&patch, &cfg.binarization).unwrap();
    for y in 0..src.height {
        for x in 0..src.width {
            let inside = x >= x0 && x < x1 && y >= y0 && y < y1;
            let want = inside && expected.get(x - x0, y - y0);
            assert_eq!(out.ink.get(x, y), want, "({x},{y})");
            if want {
                assert_eq!(out.image.get(x, y), patch.get(x - x0, y - y0));
            }
        }
    }
}

#[test]
fn written_corpus_reloads_clean() {
    let (corpus, images) = fixture(2);
    let cfg = GenConfig {
        n: 3,
        seed: 1,
        ..Default::default()
    };
    let pages = generate(&corpus, &images, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_synthetic_corpus(&pages, &corpus.categories, dir.path()).unwrap();
    let reloaded = load_corpus(dir.path().join("annotations.json")).unwrap();
    assert!(validate_corpus(&reloaded).is_valid());
    assert_eq!(reloaded.pages, written.pages);
    for (p, page) in reloaded.pages.iter().zip(&pages) {
        assert_eq!(reloaded.load_image(p).unwrap(), page.image);
    }
    let provenance = std::fs::read_to_string(dir.path().join("provenance.json")).unwrap();
    assert!(provenance.contains("\"source_page_id\""));
}

#[test]
fn oversized_pool_leaves_slots_empty() {
    // one wide region fills most of the page; the other same-class region
    // anchored at a small slot near the right edge can never fit
    let page = Page {
        id: 0,
        file_name: "p.png".into(),
        width: 200,
        height: 100,
        regions: vec![
            Region {
                id: 1,
                page_id: 0,
                class: STAFF,
                bbox: BBox::new(150.0, 10.0, 40.0, 20.0).unwrap(),
            },
            Region {
                id: 2,
                page_id: 0,
                class: STAFF,
                bbox: BBox::new(0.0, 50.0, 180.0, 40.0).unwrap(),
            },
        ],
    };
    let corpus = AnnotatedCorpus {
        pages: vec![page],
        categories: vec![],
        root: Default::default(),
    };
    let img = GrayImage::from_fn(200, 100, |x, y| if (x + y) % 9 == 0 { 20 } else { 230 });
    let images = MemoryImages::new([(0, img)]);
    let cfg = GenConfig {
        n: 5,
        rotation_range: 0.0,
        ..Default::default()
    };
    for p in generate(&corpus, &images, &cfg).unwrap() {
        // slot 1 only accepts region 1 itself
        let first = p.provenance.slots[0].chosen.region();
        assert!(matches!(first, Some(1) | None));
        assert!(p.regions.iter().all(|r| r.bbox.inside(200.0, 100.0)));
    }
}
