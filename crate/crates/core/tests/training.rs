use hif_core::autoencoder::{train, TrainConfig};
use hif_core::linalg::Matrix;
use hif_core::rng::SeededRng;
use hif_core::signal_prep::MinMaxScaler;

fn rank_one(rows: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    let direction: Vec<f64> = (0..32).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let data: Vec<f64> = (0..rows)
        .flat_map(|_| {
            let s = rng.uniform_range(-1.0, 1.0);
            direction.iter().map(move |d| s * d).collect::<Vec<_>>()
        })
        .collect();
    Matrix::new(rows, 32, data).unwrap()
}

fn variance(x: &Matrix) -> f64 {
    let v = x.as_slice();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / v.len() as f64
}

#[test]
fn rank_one_data_is_reconstructed() {
    let raw = rank_one(1000, 1);
    let x = MinMaxScaler::fit(&raw).unwrap().apply(&raw).unwrap();
    let (train_x, val_x) = hif_core::signal_prep::split(&x, 0.8, 2).unwrap();
    let var = variance(&val_x);
    for seed in 0..4 {
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let (_, history) = train(&train_x, &val_x, &[32, 15, 10, 15, 32], &config).unwrap();
        let last = history.last().unwrap().validation_loss;
        assert!(last < 0.01 * var, "seed {seed}: validation loss {last:e} vs variance {var:e}");
    }
}

#[test]
fn training_loss_decreases() {
    let mut rng = SeededRng::new(5);
    // two latent factors
    let data: Vec<f64> = (0..600)
        .flat_map(|_| {
            let (a, b) = (rng.uniform(), rng.uniform());
            (0..10).map(move |j| 0.5 * a * (j as f64 / 9.0) + 0.5 * b * (1.0 - j as f64 / 9.0))
        })
        .collect();
    let x = Matrix::new(600, 10, data).unwrap();
    let (train_x, val_x) = hif_core::signal_prep::split(&x, 0.8, 1).unwrap();
    let (_, history) = train(&train_x, &val_x, &[10, 6, 3, 6, 10], &TrainConfig::default()).unwrap();
    let first = history.epochs.first().unwrap().train_loss;
    let last = history.last().unwrap().train_loss;
    assert_eq!(history.epochs.len(), 100);
    assert!(last < first, "{last} !< {first}");
}

#[test]
fn identical_seeds_give_identical_weights() {
    let x = rank_one(300, 9);
    let config = TrainConfig { epochs: 10, seed: 42, ..TrainConfig::default() };
    let (a, ha) = train(&x, &x, &[32, 5, 3, 5, 32], &config).unwrap();
    let (b, hb) = train(&x, &x, &[32, 5, 3, 5, 32], &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let (c, _) = train(&x, &x, &[32, 5, 3, 5, 32], &TrainConfig { seed: 43, ..config }).unwrap();
    assert_ne!(a, c);
}
