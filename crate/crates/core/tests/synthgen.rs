use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rectrack_core::synthgen::{coverage, generate, sample_scene, simulate, MotionScript, PatchSource, SynthConfig};
use rectrack_core::{BoundingBox, Image};

/// Counts covered sample points on a fine grid over the object.
fn raster_coverage(object: &BoundingBox, occluders: &[BoundingBox], res: usize) -> f64 {
    let mut hit = 0usize;
    for j in 0..res {
        let y = object.y1 + (j as f64 + 0.5) / res as f64 * object.height();
        for i in 0..res {
            let x = object.x1 + (i as f64 + 0.5) / res as f64 * object.width();
            if occluders.iter().any(|o| o.x1 <= x && x < o.x2 && o.y1 <= y && y < o.y2) {
                hit += 1;
            }
        }
    }
    hit as f64 / (res * res) as f64
}

#[test]
fn coverage_half_overlaps_match_raster() {
    let obj = BoundingBox::new(10.0, 10.0, 30.0, 30.0).unwrap();
    let occ = [BoundingBox::new(0.0, 0.0, 20.0, 40.0).unwrap(), BoundingBox::new(15.0, 20.0, 40.0, 40.0).unwrap()];
    let exact = coverage(&obj, &occ);
    let raster = raster_coverage(&obj, &occ, 400);
    assert!((exact - raster).abs() <= 1.0 / obj.area(), "{exact} vs {raster}");
    assert!((exact - 0.75).abs() < 1e-12);
}

#[test]
fn coverage_matches_raster_on_random_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        // integer corners so a 1-sample-per-unit raster is exact per cell
        let rb = |rng: &mut ChaCha8Rng, lo: i32, hi: i32| {
            let x1 = rng.random_range(lo..hi - 1);
            let y1 = rng.random_range(lo..hi - 1);
            let x2 = rng.random_range(x1 + 1..=hi);
            let y2 = rng.random_range(y1 + 1..=hi);
            BoundingBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64).unwrap()
        };
        let obj = rb(&mut rng, 0, 20);
        let n = rng.random_range(0..4);
        let occ: Vec<BoundingBox> = (0..n).map(|_| rb(&mut rng, -5, 25)).collect();
        let res = (obj.width().max(obj.height()) as usize) * 4;
        let exact = coverage(&obj, &occ);
        let raster = raster_coverage(&obj, &occ, res);
        assert!((exact - raster).abs() <= 1.0 / obj.area() + 1e-12, "{exact} vs {raster}");
    }
}

#[test]
fn sampled_patches_respect_min_area() {
    let cfg =
        SynthConfig { frame_width: 64, frame_height: 48, occluders_min: 1, occluders_max: 3, ..SynthConfig::default() };
    let base = rectrack_core::synthgen::procedural_image(64, 48, &mut ChaCha8Rng::seed_from_u64(0));
    let src = PatchSource::Images(vec![base]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let total = 64.0 * 48.0;
    let mut count = 0;
    while count < 10_000 {
        let scene = sample_scene(&src, &cfg, &mut rng).unwrap();
        for p in std::iter::once(&scene.object).chain(&scene.occluders) {
            assert!(p.rect.area() as f64 >= 0.01 * total, "{:?}", p.rect);
            assert!(p.rect.x + p.rect.w <= 64 && p.rect.y + p.rect.h <= 48);
            count += 1;
        }
    }
}

#[test]
fn patches_come_from_the_background_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = SynthConfig { occluders_min: 2, occluders_max: 2, ..SynthConfig::default() };
    let scene = sample_scene(&PatchSource::Procedural, &cfg, &mut rng).unwrap();
    assert_eq!(scene.occluders.len(), 2);
    for p in std::iter::once(&scene.object).chain(&scene.occluders) {
        for y in 0..p.rect.h {
            for x in 0..p.rect.w {
                assert_eq!(p.pixels.pixel(x, y), scene.background.pixel(p.rect.x + x, p.rect.y + y));
            }
        }
    }
}

#[test]
fn image_mode_resizes_to_frame() {
    let img = Image::new(300, 200, [10, 20, 30]);
    let cfg = SynthConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scene = sample_scene(&PatchSource::Images(vec![img]), &cfg, &mut rng).unwrap();
    assert_eq!((scene.background.width(), scene.background.height()), (128, 128));
}

#[test]
fn scene_is_seed_deterministic() {
    let cfg = SynthConfig::default();
    let a = sample_scene(&PatchSource::Procedural, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let b = sample_scene(&PatchSource::Procedural, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sequence_is_seed_deterministic() {
    let cfg = SynthConfig::default();
    let a = generate(&PatchSource::Procedural, &cfg, 20, 77).unwrap();
    let b = generate(&PatchSource::Procedural, &cfg, 20, 77).unwrap();
    assert_eq!(a, b);
    let c = generate(&PatchSource::Procedural, &cfg, 20, 78).unwrap();
    assert_ne!(a.frames, c.frames);
}

#[test]
fn occluded_flag_tracks_coverage_threshold() {
    // Huge stationary occluders: the object is almost surely hidden.
    let cfg = SynthConfig {
        occluders_min: 3,
        occluders_max: 3,
        min_area_fraction: 0.2,
        occluder_max_area_fraction: 0.25,
        ..SynthConfig::default()
    };
    let mut flagged = 0;
    let mut frames = 0;
    for seed in 0..10 {
        let seq = generate(&PatchSource::Procedural, &cfg, 30, seed).unwrap();
        flagged += seq.occluded.iter().filter(|&&o| o).count();
        frames += seq.len();
    }
    assert!(flagged > 0 && flagged < frames, "{flagged}/{frames}");
}

#[test]
fn occlusion_threshold_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = SynthConfig { occluders_min: 2, occluders_max: 2, ..SynthConfig::default() };
    let scene = sample_scene(&PatchSource::Procedural, &cfg, &mut rng).unwrap();
    let strict = SynthConfig { occlusion_threshold: 0.2, ..cfg.clone() };
    let a = simulate(&scene, &cfg, 60, 0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = simulate(&scene, &strict, 60, 0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a.truth, b.truth);
    for (x, y) in a.occluded.iter().zip(&b.occluded) {
        assert!(!x | y);
    }
}

fn check_sequence_invariants(cfg: &SynthConfig, seed: u64, len: usize) {
    let seq = generate(&PatchSource::Procedural, cfg, len, seed).unwrap();
    assert_eq!(seq.frames.len(), len);
    assert_eq!(seq.truth.len(), len);
    assert_eq!(seq.occluded.len(), len);
    let (fw, fh) = (cfg.frame_width as f64, cfg.frame_height as f64);
    for (f, b) in seq.frames.iter().zip(&seq.truth) {
        assert_eq!((f.width(), f.height()), (cfg.frame_width, cfg.frame_height));
        assert!(b.area() > 0.0);
        assert!(b.width() >= 8.0 - 1e-9 && b.width() <= fw / 2.0 + 1e-9, "{b:?}");
        assert!(b.height() >= 8.0 - 1e-9 && b.height() <= fh / 2.0 + 1e-9, "{b:?}");
        let frame = BoundingBox::new(0.0, 0.0, fw, fh).unwrap();
        assert!(b.intersection_area(&frame) >= 0.25 * b.area() - 1e-9, "{b:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn motion_stays_within_clamps(seed in any::<u64>(), fast in 0.0f64..12.0) {
        let cfg = SynthConfig {
            motion: MotionScript { speed_max: 4.0 + fast, sigma_scale: 0.1, sigma_aspect: 0.1, ..MotionScript::default() },
            occluders_max: 1,
            ..SynthConfig::default()
        };
        check_sequence_invariants(&cfg, seed, 80);
    }

    #[test]
    fn coverage_is_a_fraction(
        ox in -20.0f64..20.0, oy in -20.0f64..20.0, ow in 1.0f64..30.0, oh in 1.0f64..30.0,
        px in -20.0f64..20.0, py in -20.0f64..20.0, pw in 1.0f64..30.0, ph in 1.0f64..30.0,
    ) {
        let obj = BoundingBox::new(ox, oy, ox + ow, oy + oh).unwrap();
        let occ = BoundingBox::new(px, py, px + pw, py + ph).unwrap();
        let c = coverage(&obj, &[occ]);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c - obj.intersection_area(&occ) / obj.area()).abs() < 1e-9);
        // adding an occluder never lowers coverage
        let bigger = coverage(&obj, &[occ, BoundingBox::new(ox, oy, ox + ow / 2.0, oy + oh).unwrap()]);
        prop_assert!(bigger + 1e-12 >= c);
    }
}
