use mfr_core::image::encode_pnm;
use mfr_core::lifecycle::ItemStatus;
use mfr_core::{decode_image, distance, preprocess, Embedding, FormatHint, Gallery, ImageBuffer};
use proptest::collection::vec;
use proptest::prelude::*;

fn image_strategy() -> impl Strategy<Value = ImageBuffer> {
    (1usize..24, 1usize..24, prop_oneof![Just(1u8), Just(3u8)]).prop_flat_map(|(w, h, c)| {
        vec(any::<u8>(), w * h * c as usize)
            .prop_map(move |px| ImageBuffer::new(w, h, c, px).unwrap())
    })
}

fn embeddings(dim: usize, count: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Embedding>> {
    vec(vec(-5.0f64..5.0, dim), count)
        .prop_map(|v| v.into_iter().map(|c| Embedding::new(c, 1)).collect())
}

proptest! {
    #[test]
    fn pnm_round_trip(img in image_strategy()) {
        let bytes = encode_pnm(&img);
        let back = decode_image(&bytes, FormatHint::Auto).unwrap();
        prop_assert_eq!(&back, &img);
        prop_assert_eq!(encode_pnm(&back), bytes);
    }

    #[test]
    fn preprocess_stays_in_unit_range(img in image_strategy()) {
        let out = preprocess(&img);
        prop_assert_eq!((out.width(), out.height()), (img.width(), img.height()));
        prop_assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn preprocess_ignores_affine_rescaling(
        (w, h, px) in (2usize..20, 2usize..20).prop_flat_map(|(w, h)| (Just(w), Just(h), vec(0u8..=100, w * h))),
        gain in 1u8..=2,
        offset in 0u8..=50,
    ) {
        prop_assume!(px.iter().any(|&p| p != px[0]));
        let base = ImageBuffer::new(w, h, 1, px.clone()).unwrap();
        let scaled = ImageBuffer::new(w, h, 1, px.iter().map(|&p| p * gain + offset).collect()).unwrap();
        prop_assert_eq!(preprocess(&base), preprocess(&scaled));
    }

    #[test]
    fn identify_ignores_enrollment_order(
        people in vec(embeddings(4, 3..6), 1..8),
        probe in vec(-5.0f64..5.0, 4),
        top_n in 1usize..10,
        theta in 0.5f64..20.0,
    ) {
        let probe = Embedding::new(probe, 1);
        let mut forward = Gallery::new(1);
        for (i, e) in people.iter().enumerate() {
            forward = forward.enroll_embeddings(&format!("id{i}"), e.clone()).unwrap();
        }
        let mut backward = Gallery::new(1);
        for (i, e) in people.iter().enumerate().rev() {
            backward = backward.enroll_embeddings(&format!("id{i}"), e.clone()).unwrap();
        }
        let out = forward.identify(&probe, top_n, theta).unwrap();
        prop_assert_eq!(&out, &backward.identify(&probe, top_n, theta).unwrap());
        for (i, m) in out.iter().enumerate() {
            prop_assert_eq!(m.rank, i + 1);
            prop_assert!(m.distance <= theta);
            let id: usize = m.person_id[2..].parse().unwrap();
            let brute = people[id].iter().map(|e| distance(&probe, e).unwrap()).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(m.distance, brute);
        }
        for pair in out.windows(2) {
            prop_assert!(pair[0].distance <= pair[1].distance);
        }
    }

    #[test]
    fn more_embeddings_never_increase_distance(
        base in embeddings(3, 3..6),
        extra in vec(-5.0f64..5.0, 3),
        probe in vec(-5.0f64..5.0, 3),
    ) {
        let probe = Embedding::new(probe, 1);
        let before = Gallery::new(1).enroll_embeddings("p", base.clone()).unwrap();
        let mut grown = base;
        grown.push(Embedding::new(extra, 1));
        let after = Gallery::new(1).enroll_embeddings("p", grown).unwrap();
        let d0 = before.person_distances(&probe).unwrap()[0].1;
        let d1 = after.person_distances(&probe).unwrap()[0].1;
        prop_assert!(d1 <= d0);
    }

    #[test]
    fn resolved_is_absorbing(path in vec(0usize..4, 0..30)) {
        let mut status = ItemStatus::Open;
        let mut resolved = false;
        for step in path {
            let next = ItemStatus::ALL[step];
            if status.can_transition_to(next) {
                prop_assert!(!resolved);
                status = next;
                resolved |= status == ItemStatus::Resolved;
            }
        }
    }
}
