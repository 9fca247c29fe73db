use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skillstream::segmentation::{pool_features, segment_demo, SegmentationConfig};
use skillstream::synth::blocks::{block_boundaries, block_demo, random_blocks};
use skillstream::synth::orthonormal_prototypes;
use skillstream::trajectory::{Demonstration, Frame};

fn demo(features: Vec<Vec<f64>>) -> Demonstration {
    Demonstration {
        demo_id: "d".into(),
        task_id: "t".into(),
        frames: features
            .into_iter()
            .enumerate()
            .map(|(t, f)| Frame::new(t as u64, f, vec![0.0], vec![0.0]))
            .collect(),
    }
}

fn features() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..80).prop_flat_map(|len| proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), len))
}

fn config() -> impl Strategy<Value = SegmentationConfig> {
    (2usize..8, -0.5f64..0.99, 1usize..4, 0usize..8, 1usize..8).prop_map(|(window, thr, smin, extra, lmin)| {
        SegmentationConfig {
            window,
            merge_threshold: thr,
            min_segments: smin,
            max_segments: smin + extra,
            min_length: lmin,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn segments_tile_the_demo(f in features(), cfg in config()) {
        let d = demo(f);
        let segs = segment_demo(&d, &cfg).unwrap();
        prop_assert!(!segs.is_empty());
        prop_assert_eq!(segs[0].start, 0);
        prop_assert_eq!(segs.last().unwrap().end, d.len());
        for pair in segs.windows(2) {
            prop_assert_eq!(pair[0].end, pair[1].start);
        }
        prop_assert!(segs.iter().all(|s| s.start < s.end));
    }

    #[test]
    fn pooled_matches_frames(f in features(), cfg in config()) {
        let d = demo(f);
        for s in segment_demo(&d, &cfg).unwrap() {
            let direct = pool_features(&d.frames[s.start..s.end]).unwrap();
            for (a, b) in direct.iter().zip(&s.pooled) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_input_same_output(f in features(), cfg in config()) {
        let d = demo(f);
        prop_assert_eq!(segment_demo(&d, &cfg).unwrap(), segment_demo(&d, &cfg).unwrap());
    }

    #[test]
    fn constant_demo_is_one_segment(len in 2usize..120, window in 2usize..10, x in proptest::collection::vec(0.1f64..1.0, 3)) {
        let cfg = SegmentationConfig { window, merge_threshold: 0.9, min_segments: 1, max_segments: 10, min_length: 5 };
        let segs = segment_demo(&demo(vec![x; len]), &cfg).unwrap();
        prop_assert_eq!(segs.len(), 1);
    }

    /// Reversing a demo whose length is a multiple of the window keeps the
    /// initial windows aligned, so the boundaries mirror.
    #[test]
    fn reversal_mirrors_boundaries(
        seed in any::<u64>(),
        blocks in 2usize..6,
        k in 2usize..5,
        sigma in prop_oneof![Just(0.0), 0.0f64..0.05],
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = 4;
        let lengths: Vec<usize> = (2..=10).map(|m| m * window).collect();
        let protos = orthonormal_prototypes(k, 16, &mut rng).unwrap();
        let (classes, lens) = random_blocks(k, blocks, &lengths, &mut rng);
        let d = block_demo("d", "t", &protos, &classes, &lens, sigma, &mut rng);
        let cfg = SegmentationConfig { window, merge_threshold: 0.85, ..SegmentationConfig::default() };

        let mut rev = d.clone();
        rev.frames.reverse();
        for (t, fr) in rev.frames.iter_mut().enumerate() {
            fr.t = t as u64;
        }
        let n = d.len();
        let fwd: Vec<usize> = segment_demo(&d, &cfg).unwrap().iter().skip(1).map(|s| s.start).collect();
        let mut back: Vec<usize> = segment_demo(&rev, &cfg).unwrap().iter().skip(1).map(|s| n - s.start).collect();
        back.sort_unstable();
        prop_assert_eq!(fwd, back);
    }
}

#[test]
fn noise_free_blocks_are_recovered_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let protos = orthonormal_prototypes(4, 16, &mut rng).unwrap();
    let lens = [10, 25, 5, 30];
    let d = block_demo("d", "t", &protos, &[0, 1, 2, 3], &lens, 0.0, &mut rng);
    let cfg = SegmentationConfig {
        merge_threshold: 0.5,
        ..SegmentationConfig::default()
    };
    let got: Vec<usize> = segment_demo(&d, &cfg).unwrap().iter().skip(1).map(|s| s.start).collect();
    assert_eq!(got, block_boundaries(&lens));
}
