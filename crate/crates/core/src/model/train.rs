use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::RegressorParams;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub shuffle_seed: u64,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            batch_size: 32,
            epochs: 400,
            l2_penalty: 1e-4,
            shuffle_seed: 7,
            patience: 60,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be finite and >= 0"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be at least 1"));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(Error::invalid("l2 penalty must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Normalized inputs and real-valued targets.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
}

impl<'a> Split<'a> {
    pub fn new(x: &'a [Vec<f64>], y: &'a [f64]) -> Self {
        Self { x, y }
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::invalid(format!("{what} split is empty")));
        }
        if self.x.len() != self.y.len() {
            return Err(Error::invalid(format!("{what} split: inputs and targets differ in length")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Training objective (Huber + penalty) after each epoch.
    pub train_loss: Vec<f64>,
    /// Validation Huber loss after each epoch.
    pub val_loss: Vec<f64>,
    /// Epoch whose parameters were returned; `None` if no epoch beat the
    /// initial parameters.
    pub best_epoch: Option<usize>,
}

/// Visiting order of training rows in `epoch`.
pub fn epoch_order(shuffle_seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

struct Adam {
    m: RegressorParams,
    v: RegressorParams,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: &RegressorParams) -> Self {
        Self {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, p: &mut RegressorParams, g: &RegressorParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((w, &gw), m), v) in p
            .values_mut()
            .zip(g.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            *m = Self::B1 * *m + (1.0 - Self::B1) * gw;
            *v = Self::B2 * *v + (1.0 - Self::B2) * gw * gw;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch training with Adam and early stopping on validation loss.
/// Returns the parameters with the lowest validation loss seen, including
/// the initial ones.
pub fn train(
    params: &RegressorParams,
    train_set: Split<'_>,
    val_set: Split<'_>,
    cfg: &TrainConfig,
) -> Result<(RegressorParams, TrainHistory)> {
    train_with_order(params, train_set, val_set, cfg, |epoch, n| {
        epoch_order(cfg.shuffle_seed, epoch, n)
    })
}

/// [`train`] with an explicit row order per epoch: `order(epoch, n)` must
/// return a permutation of `0..n`; batches are consecutive chunks of it.
pub fn train_with_order(
    params: &RegressorParams,
    train_set: Split<'_>,
    val_set: Split<'_>,
    cfg: &TrainConfig,
    mut order: impl FnMut(usize, usize) -> Vec<usize>,
) -> Result<(RegressorParams, TrainHistory)> {
    cfg.validate()?;
    params.validate()?;
    train_set.check("training")?;
    val_set.check("validation")?;
    let n = train_set.x.len();

    let mut p = params.clone();
    let mut adam = Adam::new(&p);
    let mut best = p.clone();
    let mut best_val = p.data_loss(val_set.x, val_set.y)?;
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: None,
    };
    let mut since_best = 0;
    let mut rows: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut targets: Vec<f64> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let idx = order(epoch, n);
        if idx.len() != n {
            return Err(Error::invalid("epoch order is not a permutation of the training rows"));
        }
        for batch in idx.chunks(cfg.batch_size) {
            rows.clear();
            targets.clear();
            for &k in batch {
                rows.push(&train_set.x[k]);
                targets.push(train_set.y[k]);
            }
            let (_, g) = p.loss_and_gradient_rows(&rows, &targets, cfg.l2_penalty)?;
            adam.step(&mut p, &g, cfg.learning_rate);
        }
        let penalty: f64 = p
            .layers
            .iter()
            .flat_map(|l| &l.weights)
            .map(|w| 0.5 * cfg.l2_penalty * w * w)
            .sum();
        history
            .train_loss
            .push(p.data_loss(train_set.x, train_set.y)? + penalty);
        let val = p.data_loss(val_set.x, val_set.y)?;
        history.val_loss.push(val);
        if !val.is_finite() {
            return Err(Error::Contract(format!("validation loss diverged at epoch {epoch}")));
        }
        if val < best_val {
            best_val = val;
            best.clone_from(&p);
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = x.iter().map(|r| (2.0 * r[0] - r[1]).abs()).collect();
        (x, y)
    }

    #[test]
    fn single_sample_overfits() {
        let p = RegressorParams::init(&[3, 8, 1], 1).unwrap();
        let x = vec![vec![0.3, -0.7, 1.1]];
        let y = vec![2.0];
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 1,
            epochs: 2000,
            l2_penalty: 0.0,
            patience: 0,
            ..TrainConfig::default()
        };
        let (best, h) = train(&p, Split::new(&x, &y), Split::new(&x, &y), &cfg).unwrap();
        assert!(h.train_loss.last().unwrap() < &1e-3);
        assert!(best.data_loss(&x, &y).unwrap() < 1e-3);
    }

    #[test]
    fn zero_learning_rate_leaves_params_untouched() {
        let p = RegressorParams::init(&[3, 4, 1], 5).unwrap();
        let (x, y) = toy(20, 2);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..TrainConfig::default()
        };
        let (out, h) = train(&p, Split::new(&x, &y), Split::new(&x, &y), &cfg).unwrap();
        assert_eq!(out, p);
        assert_eq!(h.best_epoch, None);
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let p = RegressorParams::init(&[3, 16, 8, 1], 3).unwrap();
        let (x, y) = toy(200, 4);
        let (vx, vy) = toy(50, 5);
        let cfg = TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        };
        let a = train(&p, Split::new(&x, &y), Split::new(&vx, &vy), &cfg).unwrap();
        let b = train(&p, Split::new(&x, &y), Split::new(&vx, &vy), &cfg).unwrap();
        assert_eq!(a, b);
        let before = p.data_loss(&vx, &vy).unwrap();
        let after = a.0.data_loss(&vx, &vy).unwrap();
        assert!(after < 0.5 * before, "{before} -> {after}");
    }

    #[test]
    fn empty_splits_rejected() {
        let p = RegressorParams::init(&[3, 1], 0).unwrap();
        let (x, y) = toy(4, 0);
        let cfg = TrainConfig::default();
        assert!(train(&p, Split::new(&[], &[]), Split::new(&x, &y), &cfg).is_err());
        assert!(train(&p, Split::new(&x, &y), Split::new(&[], &[]), &cfg).is_err());
        let bad = TrainConfig { batch_size: 0, ..cfg };
        assert!(train(&p, Split::new(&x, &y), Split::new(&x, &y), &bad).is_err());
    }

    #[test]
    fn early_stopping_truncates_history() {
        let p = RegressorParams::init(&[3, 4, 1], 0).unwrap();
        let (x, y) = toy(30, 1);
        // validation targets unrelated to inputs: stops improving quickly
        let vy: Vec<f64> = (0..30).map(|k| (k % 3) as f64 * 5.0).collect();
        let cfg = TrainConfig {
            epochs: 500,
            patience: 5,
            ..TrainConfig::default()
        };
        let (_, h) = train(&p, Split::new(&x, &y), Split::new(&x, &vy), &cfg).unwrap();
        assert!(h.val_loss.len() < 500);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn storage_order_does_not_matter(seed in any::<u64>()) {
            let p = RegressorParams::init(&[3, 6, 1], seed).unwrap();
            let (x, y) = toy(25, seed);
            let cfg = TrainConfig { epochs: 8, batch_size: 4, ..TrainConfig::default() };
            let mut perm: Vec<usize> = (0..25).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 9));
            // row j of the permuted set is row perm[j] of the original
            let px: Vec<Vec<f64>> = perm.iter().map(|&k| x[k].clone()).collect();
            let py: Vec<f64> = perm.iter().map(|&k| y[k]).collect();
            let mut inverse = vec![0; 25];
            for (j, &k) in perm.iter().enumerate() {
                inverse[k] = j;
            }
            let a = train(&p, Split::new(&x, &y), Split::new(&x, &y), &cfg).unwrap();
            let b = train_with_order(&p, Split::new(&px, &py), Split::new(&x, &y), &cfg, |e, n| {
                epoch_order(cfg.shuffle_seed, e, n).into_iter().map(|k| inverse[k]).collect()
            })
            .unwrap();
            prop_assert_eq!(&a.0, &b.0);
            prop_assert_eq!(&a.1.val_loss, &b.1.val_loss);
            // full-set training loss is summed in storage order
            for (x, y) in a.1.train_loss.iter().zip(&b.1.train_loss) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs());
            }
        }
    }
}
