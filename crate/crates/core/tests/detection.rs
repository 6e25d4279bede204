use mfr_core::detect::iou;
use mfr_core::synth::{head_box, CANVAS};
use mfr_core::{
    detect_faces, generate_synthetic_identity, preprocess, DetectorParams, FaceBox, GrayImage,
};
use mfr_testkit::detection::{
    ellipse_scene, exhaustive_detect, quantize, random_params, random_scene,
};
use proptest::prelude::*;

/// Noise-free scenes have only a thin ring of gradient, so keep half of it.
fn clean_params() -> DetectorParams {
    DetectorParams {
        edge_percentile: 50.0,
        ..DetectorParams::default()
    }
}

fn center_offset(b: &FaceBox, cx: f64, cy: f64) -> f64 {
    let (x, y) = b.center();
    ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()
}

#[test]
fn blank_image_has_no_faces() {
    let img = GrayImage::filled(100, 120, 0.7).unwrap();
    assert!(detect_faces(&img, &DetectorParams::default())
        .unwrap()
        .is_empty());
}

#[test]
fn single_ellipse_on_white() {
    let img = ellipse_scene(128, 128, 1.0, &[(64.0, 64.0, 40.0, 52.0, 0.0)]);
    let params = clean_params();
    let found = detect_faces(&img, &params).unwrap();
    assert_eq!(found, exhaustive_detect(&img, &params));
    assert_eq!(found.len(), 1);
    assert!(center_offset(&found[0], 64.0, 64.0) <= 4.0, "{found:?}");
}

#[test]
fn two_separated_ellipses() {
    let img = ellipse_scene(
        160,
        100,
        1.0,
        &[
            (40.0, 50.0, 40.0, 52.0, 0.125),
            (120.0, 50.0, 44.0, 57.0, 0.25),
        ],
    );
    let params = clean_params();
    let found = detect_faces(&img, &params).unwrap();
    assert_eq!(found, exhaustive_detect(&img, &params));
    assert_eq!(found.len(), 2, "{found:?}");
    assert_eq!(iou(&found[0], &found[1]), 0.0);
    let mut centers: Vec<f64> = found.iter().map(|b| b.center().0).collect();
    centers.sort_by(f64::total_cmp);
    assert!((centers[0] - 40.0).abs() <= 4.0 && (centers[1] - 120.0).abs() <= 4.0);
}

#[test]
fn too_small_for_smallest_scale() {
    let img = GrayImage::filled(30, 200, 0.5).unwrap();
    assert!(detect_faces(&img, &DetectorParams::default()).is_err());
}

#[test]
fn generated_heads_are_found_where_drawn() {
    let params = DetectorParams::default();
    for seed in 0..12u64 {
        for (i, img) in generate_synthetic_identity(seed, 4)
            .unwrap()
            .iter()
            .enumerate()
        {
            let found = detect_faces(&preprocess(img), &params).unwrap();
            let largest = found.iter().max_by_key(|b| b.area()).expect("no face");
            let (x, y, w, h) = head_box(seed, i);
            let truth = FaceBox {
                x,
                y,
                w,
                h,
                score: 1.0,
            };
            assert!(
                iou(largest, &truth) > 0.7,
                "seed {seed} variation {i}: {largest:?} vs {truth:?}"
            );
        }
    }
}

#[test]
fn generated_images_match_oracle() {
    let params = DetectorParams::default();
    for seed in [3u64, 17, 99] {
        for img in generate_synthetic_identity(seed, 3).unwrap() {
            let gray = quantize(&preprocess(&img));
            assert_eq!(gray.width(), CANVAS);
            assert_eq!(
                detect_faces(&gray, &params).unwrap(),
                exhaustive_detect(&gray, &params)
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_exhaustive_scan(seed in any::<u64>()) {
        let mut rng = mfr_testkit::rng(seed);
        let params = random_params(&mut rng);
        let img = random_scene(&mut rng, 120, 160);
        let fast = detect_faces(&img, &params).unwrap();
        prop_assert_eq!(&fast, &exhaustive_detect(&img, &params));
        for b in &fast {
            prop_assert!(b.fits(img.width(), img.height()));
            prop_assert!(b.score >= params.score_threshold && b.score <= 1.0);
            prop_assert!(b.w >= 16 && b.h >= 16);
        }
        for pair in fast.windows(2) {
            prop_assert!(pair[0].score >= pair[1].score);
        }
    }

    #[test]
    fn every_generated_variation_has_a_face(seed in any::<u64>()) {
        let params = DetectorParams::default();
        for img in generate_synthetic_identity(seed, 4).unwrap() {
            prop_assert!(!detect_faces(&preprocess(&img), &params).unwrap().is_empty());
        }
    }
}
