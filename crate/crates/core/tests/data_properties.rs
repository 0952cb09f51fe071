mod common;

use common::rng;
use mgtnet::{synthesize, PoseDataset, Sample, SkeletonGraph, SynthConfig, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn random_dataset(seed: u64, count: usize, frames: usize) -> PoseDataset {
    let g = SkeletonGraph::human36m();
    let mut r = rng(seed);
    let mut f32s = |len: usize| -> Vec<f64> { (0..len).map(|_| f64::from(r.random_range(-2.0f32..2.0))).collect() };
    let samples = (0..count)
        .map(|i| Sample {
            input: Tensor::new(&[17, 2, frames], f32s(17 * 2 * frames)).unwrap(),
            target: Tensor::new(&[17, 3], f32s(51)).unwrap(),
            action: format!("action-{}", i % 3),
        })
        .collect();
    PoseDataset::new(g, "mm", frames, samples).unwrap()
}

fn assert_valid(ds: &PoseDataset) {
    let (n, t) = (ds.joints(), ds.frames());
    assert_eq!(n, ds.skeleton().num_joints());
    let root = ds.skeleton().root();
    for s in ds.samples() {
        assert_eq!(s.input.shape(), [n, 2, t]);
        assert_eq!(s.target.shape(), [n, 3]);
        assert!(s.input.is_finite() && s.target.is_finite());
        assert_eq!(s.target.row(root), [0.0, 0.0, 0.0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_load_round_trip_is_byte_identical(seed in 0u64..10_000, count in 0usize..6, frames in 1usize..5) {
        let ds = random_dataset(seed, count, frames);
        let bytes = ds.to_bytes();
        let back = PoseDataset::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back.samples(), ds.samples());
    }

    #[test]
    fn corrupted_files_fail_or_stay_valid(seed in 0u64..10_000, flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..4), cut in any::<prop::sample::Index>(), truncate in any::<bool>()) {
        let ds = synthesize(&SkeletonGraph::human36m(), &SynthConfig { count: 2, seed, noise_sigma: 0.01, ..SynthConfig::default() });
        let mut bytes = ds.to_bytes();
        for (at, value) in &flips {
            let i = at.index(bytes.len());
            bytes[i] = *value;
        }
        if truncate {
            bytes.truncate(cut.index(bytes.len()));
        }
        if let Ok(loaded) = PoseDataset::from_bytes(&bytes) {
            assert_valid(&loaded);
        }
    }
}
