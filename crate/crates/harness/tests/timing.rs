use faultsketch_core::{train_exact, train_nystrom, FeatureMatrix, KernelConfig, TrainOptions, DEFAULT_EIGEN_CUTOFF};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

#[test]
fn sketched_training_is_not_slower_than_exact() {
    let (n, d) = (1000, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = FeatureMatrix::new(n, d, data).unwrap();
    let y: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
    let cfg = KernelConfig::new(5.0, 1e-3).unwrap();
    let opts = TrainOptions::default();
    for s in [25, 100] {
        let exact = median3(std::array::from_fn(|_| train_exact(&x, &y, &cfg, &opts).unwrap().1.wall_time_train));
        let sketch = median3(std::array::from_fn(|k| {
            train_nystrom(&x, &y, &cfg, s, k as u64, DEFAULT_EIGEN_CUTOFF, &opts)
                .unwrap()
                .1
                .wall_time_train
        }));
        assert!(sketch <= exact, "s = {s}: sketched {sketch} s, exact {exact} s");
    }
}
