//! Small dense network for authentication-mark recovery: 8 inputs, tanh(64),
//! ReLU(32), softmax(2), trained on MSE with plain gradient descent plus
//! momentum. Training is single-threaded and fully determined by the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::marks::BitMatrix;

pub const FEATURES: usize = 8;
const H1: usize = 64;
const H2: usize = 32;
const OUT: usize = 2;
const MOMENTUM: f32 = 0.9;

/// Training knobs. The epoch figure is a budget; runs stop early when the
/// validation error fails to improve for `patience` epochs or the training
/// split stays perfectly classified for a streak.
#[derive(Debug, Clone, Copy)]
pub struct MlpConfig {
    pub max_epochs: usize,
    pub learning_rate: f32,
    pub patience: usize,
    pub folds: usize,
    pub validation_fraction: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            learning_rate: 0.1,
            patience: 20,
            folds: 5,
            validation_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    w1: Vec<f32>, // FEATURES x H1
    b1: Vec<f32>,
    w2: Vec<f32>, // H1 x H2
    b2: Vec<f32>,
    w3: Vec<f32>, // H2 x OUT
    b3: Vec<f32>,
}

struct Batch {
    x: Vec<f32>,       // n x FEATURES
    target: Vec<f32>,  // n x OUT, one-hot
    bits: Vec<u8>,
    n: usize,
}

impl Batch {
    fn gather(features: &[[f64; FEATURES]], bits: &[u8], idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * FEATURES);
        let mut target = Vec::with_capacity(idx.len() * OUT);
        let mut b = Vec::with_capacity(idx.len());
        for &i in idx {
            for f in 0..FEATURES {
                x.push(features[i][f] as f32);
            }
            let bit = bits[i];
            target.push(if bit == 0 { 1.0 } else { 0.0 });
            target.push(if bit == 1 { 1.0 } else { 0.0 });
            b.push(bit);
        }
        Self {
            x,
            target,
            bits: b,
            n: idx.len(),
        }
    }
}

struct Activations {
    h1: Vec<f32>,
    h2: Vec<f32>,
    y: Vec<f32>,
}

impl MlpModel {
    /// Glorot-uniform initialization from the seed; biases start at zero.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..limit))
                .collect::<Vec<f32>>()
        };
        Self {
            w1: layer(FEATURES, H1),
            b1: vec![0.0; H1],
            w2: layer(H1, H2),
            b2: vec![0.0; H2],
            w3: layer(H2, OUT),
            b3: vec![0.0; OUT],
        }
    }

    fn forward(&self, x: &[f32], n: usize) -> Activations {
        let mut h1 = vec![0.0f32; n * H1];
        for s in 0..n {
            let xs = &x[s * FEATURES..(s + 1) * FEATURES];
            let hs = &mut h1[s * H1..(s + 1) * H1];
            hs.copy_from_slice(&self.b1);
            for (k, &xv) in xs.iter().enumerate() {
                let row = &self.w1[k * H1..(k + 1) * H1];
                for j in 0..H1 {
                    hs[j] += xv * row[j];
                }
            }
            for v in hs.iter_mut() {
                *v = v.tanh();
            }
        }
        let mut h2 = vec![0.0f32; n * H2];
        for s in 0..n {
            let hs1 = &h1[s * H1..(s + 1) * H1];
            let hs2 = &mut h2[s * H2..(s + 1) * H2];
            hs2.copy_from_slice(&self.b2);
            for (k, &hv) in hs1.iter().enumerate() {
                let row = &self.w2[k * H2..(k + 1) * H2];
                for j in 0..H2 {
                    hs2[j] += hv * row[j];
                }
            }
            for v in hs2.iter_mut() {
                *v = v.max(0.0);
            }
        }
        let mut y = vec![0.0f32; n * OUT];
        for s in 0..n {
            let hs2 = &h2[s * H2..(s + 1) * H2];
            let ys = &mut y[s * OUT..(s + 1) * OUT];
            ys.copy_from_slice(&self.b3);
            for (k, &hv) in hs2.iter().enumerate() {
                let row = &self.w3[k * OUT..(k + 1) * OUT];
                for j in 0..OUT {
                    ys[j] += hv * row[j];
                }
            }
            // softmax
            let max = ys[0].max(ys[1]);
            let e0 = (ys[0] - max).exp();
            let e1 = (ys[1] - max).exp();
            let sum = e0 + e1;
            ys[0] = e0 / sum;
            ys[1] = e1 / sum;
        }
        Activations { h1, h2, y }
    }

    /// Softmax probability pair for one feature vector.
    pub fn predict_pair(&self, features: &[f64; FEATURES]) -> [f64; 2] {
        let x: Vec<f32> = features.iter().map(|&v| v as f32).collect();
        let act = self.forward(&x, 1);
        [act.y[0] as f64, act.y[1] as f64]
    }

    /// Argmax bit; ties resolve to 0.
    pub fn predict_bit(&self, features: &[f64; FEATURES]) -> u8 {
        let p = self.predict_pair(features);
        (p[1] > p[0]) as u8
    }

    fn mse(&self, batch: &Batch) -> f32 {
        if batch.n == 0 {
            return 0.0;
        }
        let act = self.forward(&batch.x, batch.n);
        let sum: f32 = act
            .y
            .iter()
            .zip(&batch.target)
            .map(|(y, t)| (y - t) * (y - t))
            .sum();
        sum / (batch.n * OUT) as f32
    }

    fn classification_error(&self, batch: &Batch) -> f64 {
        if batch.n == 0 {
            return 0.0;
        }
        let act = self.forward(&batch.x, batch.n);
        let wrong = (0..batch.n)
            .filter(|&s| {
                let bit = (act.y[s * OUT + 1] > act.y[s * OUT]) as u8;
                bit != batch.bits[s]
            })
            .count();
        wrong as f64 / batch.n as f64
    }

    /// One full-batch gradient step; returns the pre-update training MSE.
    fn train_epoch(&mut self, batch: &Batch, lr: f32, velocity: &mut Velocity) -> f32 {
        let n = batch.n;
        let act = self.forward(&batch.x, n);
        let scale = 2.0 / (n * OUT) as f32;

        // deltas at the softmax input: dL/dz3_j = y_j (g_j - sum_i g_i y_i)
        let mut d3 = vec![0.0f32; n * OUT];
        for s in 0..n {
            let ys = &act.y[s * OUT..(s + 1) * OUT];
            let ts = &batch.target[s * OUT..(s + 1) * OUT];
            let g0 = scale * (ys[0] - ts[0]);
            let g1 = scale * (ys[1] - ts[1]);
            let dot = g0 * ys[0] + g1 * ys[1];
            d3[s * OUT] = ys[0] * (g0 - dot);
            d3[s * OUT + 1] = ys[1] * (g1 - dot);
        }

        let mut gw3 = vec![0.0f32; H2 * OUT];
        let mut gb3 = vec![0.0f32; OUT];
        let mut d2 = vec![0.0f32; n * H2];
        for s in 0..n {
            let hs2 = &act.h2[s * H2..(s + 1) * H2];
            let ds = &d3[s * OUT..(s + 1) * OUT];
            for j in 0..OUT {
                gb3[j] += ds[j];
            }
            for k in 0..H2 {
                let h = hs2[k];
                for j in 0..OUT {
                    gw3[k * OUT + j] += h * ds[j];
                }
                if h > 0.0 {
                    let mut acc = 0.0;
                    for j in 0..OUT {
                        acc += self.w3[k * OUT + j] * ds[j];
                    }
                    d2[s * H2 + k] = acc;
                }
            }
        }

        let mut gw2 = vec![0.0f32; H1 * H2];
        let mut gb2 = vec![0.0f32; H2];
        let mut d1 = vec![0.0f32; n * H1];
        for s in 0..n {
            let hs1 = &act.h1[s * H1..(s + 1) * H1];
            let ds = &d2[s * H2..(s + 1) * H2];
            for j in 0..H2 {
                gb2[j] += ds[j];
            }
            for k in 0..H1 {
                let h = hs1[k];
                let row = &self.w2[k * H2..(k + 1) * H2];
                let mut acc = 0.0;
                let grow = &mut gw2[k * H2..(k + 1) * H2];
                for j in 0..H2 {
                    grow[j] += h * ds[j];
                    acc += row[j] * ds[j];
                }
                d1[s * H1 + k] = acc * (1.0 - h * h); // tanh'
            }
        }

        let mut gw1 = vec![0.0f32; FEATURES * H1];
        let mut gb1 = vec![0.0f32; H1];
        for s in 0..n {
            let xs = &batch.x[s * FEATURES..(s + 1) * FEATURES];
            let ds = &d1[s * H1..(s + 1) * H1];
            for j in 0..H1 {
                gb1[j] += ds[j];
            }
            for (k, &xv) in xs.iter().enumerate() {
                let grow = &mut gw1[k * H1..(k + 1) * H1];
                for j in 0..H1 {
                    grow[j] += xv * ds[j];
                }
            }
        }

        let step = |w: &mut [f32], g: &[f32], v: &mut [f32]| {
            for i in 0..w.len() {
                v[i] = MOMENTUM * v[i] - lr * g[i];
                w[i] += v[i];
            }
        };
        step(&mut self.w1, &gw1, &mut velocity.w1);
        step(&mut self.b1, &gb1, &mut velocity.b1);
        step(&mut self.w2, &gw2, &mut velocity.w2);
        step(&mut self.b2, &gb2, &mut velocity.b2);
        step(&mut self.w3, &gw3, &mut velocity.w3);
        step(&mut self.b3, &gb3, &mut velocity.b3);

        let sum: f32 = act
            .y
            .iter()
            .zip(&batch.target)
            .map(|(y, t)| (y - t) * (y - t))
            .sum();
        sum / (n * OUT) as f32
    }

    /// Gradient-descent loop with validation patience; weights end at the
    /// best validation snapshot.
    fn fit(&mut self, train: &Batch, val: &Batch, cfg: &MlpConfig) {
        let mut velocity = Velocity::zeros();
        let mut best_val = f32::INFINITY;
        let mut best = self.clone();
        let mut fails = 0usize;
        let mut perfect_streak = 0usize;
        for _ in 0..cfg.max_epochs {
            self.train_epoch(train, cfg.learning_rate, &mut velocity);
            let val_err = if val.n > 0 { self.mse(val) } else { self.mse(train) };
            if val_err < best_val {
                best_val = val_err;
                best = self.clone();
                fails = 0;
            } else {
                fails += 1;
                if fails >= cfg.patience {
                    break;
                }
            }
            if self.classification_error(train) == 0.0 {
                perfect_streak += 1;
                if perfect_streak >= 10 {
                    break;
                }
            } else {
                perfect_streak = 0;
            }
        }
        *self = best;
    }
}

struct Velocity {
    w1: Vec<f32>,
    b1: Vec<f32>,
    w2: Vec<f32>,
    b2: Vec<f32>,
    w3: Vec<f32>,
    b3: Vec<f32>,
}

impl Velocity {
    fn zeros() -> Self {
        Self {
            w1: vec![0.0; FEATURES * H1],
            b1: vec![0.0; H1],
            w2: vec![0.0; H1 * H2],
            b2: vec![0.0; H2],
            w3: vec![0.0; H2 * OUT],
            b3: vec![0.0; OUT],
        }
    }
}

/// A trained extractor plus the fold diagnostics that selected it.
#[derive(Debug, Clone)]
pub struct TrainedExtractor {
    pub model: MlpModel,
    /// classification error of each fold model on its held-out test split
    pub fold_errors: Vec<f64>,
    /// test error of the selected model
    pub best_error: f64,
}

/// K-fold training: blocks are shuffled once by the seed, each fold holds
/// out 20% for testing and 15% of the remaining training data for the
/// early-stopping validation split. The fold model with the smallest test
/// error wins.
pub fn train_extractor(
    features: &[[f64; FEATURES]],
    labels: &BitMatrix,
    seed: u64,
    cfg: &MlpConfig,
) -> Result<TrainedExtractor> {
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features
        .iter()
        .any(|row| row.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::InvalidParameter(
            "non-finite block features".into(),
        ));
    }
    let n = features.len();
    let folds = cfg.folds.max(2).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let mut best: Option<(f64, MlpModel)> = None;
    let mut fold_errors = Vec::with_capacity(folds);
    for fold in 0..folds {
        let lo = fold * n / folds;
        let hi = (fold + 1) * n / folds;
        let test_idx: Vec<usize> = order[lo..hi].to_vec();
        let rest: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        let val_len = ((rest.len() as f64) * cfg.validation_fraction).round() as usize;
        let (val_idx, train_idx) = rest.split_at(val_len.min(rest.len()));

        let train = Batch::gather(features, &labels.bits, train_idx);
        let val = Batch::gather(features, &labels.bits, val_idx);
        let test = Batch::gather(features, &labels.bits, &test_idx);

        let mut model = MlpModel::init(seed.wrapping_add(fold as u64 + 1));
        model.fit(&train, &val, cfg);
        let err = model.classification_error(&test);
        fold_errors.push(err);
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, model));
        }
    }
    let (best_error, model) = best.expect("at least one fold");
    Ok(TrainedExtractor {
        model,
        fold_errors,
        best_error,
    })
}

/// Single-split training used as the optimizer's pre-training pass, and as
/// the base for per-attack fine-tuning.
pub fn pretrain(
    features: &[[f64; FEATURES]],
    labels: &BitMatrix,
    seed: u64,
    cfg: &MlpConfig,
) -> MlpModel {
    let n = features.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let val_len = ((n as f64) * cfg.validation_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(val_len.min(n));
    let train = Batch::gather(features, &labels.bits, train_idx);
    let val = Batch::gather(features, &labels.bits, val_idx);
    let mut model = MlpModel::init(seed);
    model.fit(&train, &val, cfg);
    model
}

/// Continues training an existing model on new data with a reduced budget.
pub fn fine_tune(
    model: &MlpModel,
    features: &[[f64; FEATURES]],
    labels: &BitMatrix,
    cfg: &MlpConfig,
) -> MlpModel {
    let all: Vec<usize> = (0..features.len()).collect();
    let batch = Batch::gather(features, &labels.bits, &all);
    let mut tuned = model.clone();
    tuned.fit(&batch, &Batch::gather(features, &labels.bits, &[]), cfg);
    tuned
}

/// Per-block argmax of the softmax pair, reshaped to the mark grid.
pub fn extract_bits(model: &MlpModel, features: &[[f64; FEATURES]], rows: usize, cols: usize) -> BitMatrix {
    assert_eq!(features.len(), rows * cols);
    let mut out = BitMatrix::zeros(rows, cols);
    for (i, f) in features.iter().enumerate() {
        out.bits[i] = model.predict_bit(f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_outputs_are_probabilities() {
        let model = MlpModel::init(1);
        let p = model.predict_pair(&[0.3, -1.0, 0.7, 0.0, 2.0, -0.4, 0.1, 1.2]);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
        assert!(p[0] >= 0.0 && p[1] >= 0.0);
    }

    #[test]
    fn learns_xor() {
        // classical sanity oracle: 4 points, 2 informative features padded
        // with zeros to the 8-wide input
        let pad = |a: f64, b: f64| {
            let mut row = [0.0; FEATURES];
            row[0] = a;
            row[1] = b;
            row
        };
        let features = vec![
            pad(0.0, 0.0),
            pad(0.0, 1.0),
            pad(1.0, 0.0),
            pad(1.0, 1.0),
        ];
        let labels = BitMatrix {
            rows: 2,
            cols: 2,
            bits: vec![0, 1, 1, 0],
        };
        let cfg = MlpConfig {
            max_epochs: 3000,
            patience: 3000,
            ..MlpConfig::default()
        };
        let all: Vec<usize> = (0..4).collect();
        let batch = Batch::gather(&features, &labels.bits, &all);
        let mut model = MlpModel::init(3);
        model.fit(&batch, &Batch::gather(&features, &labels.bits, &[]), &cfg);
        for (f, &bit) in features.iter().zip(&labels.bits) {
            assert_eq!(model.predict_bit(f), bit);
        }
    }

    #[test]
    fn separable_blocks_reach_high_accuracy() {
        // mimic the embedding geometry: 6 DC features displaced by the bit
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 512;
        let labels = crate::marks::gen_binary_sequence(4, 16, 32);
        let features: Vec<[f64; FEATURES]> = (0..n)
            .map(|i| {
                let sign = if labels.bits[i] == 1 { 1.0 } else { -1.0 };
                let mut row = [0.0; FEATURES];
                for item in row.iter_mut().take(6) {
                    *item = sign * 1.0 + rng.gen_range(-0.3..0.3);
                }
                row[6] = rng.gen_range(-1.0..1.0);
                row[7] = rng.gen_range(-1.0..1.0);
                row
            })
            .collect();
        let trained = train_extractor(&features, &labels, 11, &MlpConfig::default()).unwrap();
        assert!(
            trained.best_error <= 0.01,
            "test error {}",
            trained.best_error
        );
        let extracted = extract_bits(&trained.model, &features, 16, 32);
        let ber = crate::metrics::ber(&labels, &extracted).unwrap();
        assert!(ber <= 0.01, "BER {ber}");
    }

    #[test]
    fn random_features_stay_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let labels = crate::marks::gen_binary_sequence(5, 16, 32);
        let features: Vec<[f64; FEATURES]> = (0..512)
            .map(|_| {
                let mut row = [0.0; FEATURES];
                for v in row.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
                row
            })
            .collect();
        let trained = train_extractor(&features, &labels, 12, &MlpConfig::default()).unwrap();
        let extracted = extract_bits(&trained.model, &features, 16, 32);
        let ber = crate::metrics::ber(&labels, &extracted).unwrap();
        assert!(
            (0.2..=0.8).contains(&ber),
            "no signal should stay near chance, BER {ber}"
        );
    }

    #[test]
    fn training_is_deterministic() {
        let labels = crate::marks::gen_binary_sequence(6, 8, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let features: Vec<[f64; FEATURES]> = (0..128)
            .map(|i| {
                let sign = if labels.bits[i] == 1 { 1.0 } else { -1.0 };
                let mut row = [0.0; FEATURES];
                for item in row.iter_mut() {
                    *item = sign + rng.gen_range(-0.5..0.5);
                }
                row
            })
            .collect();
        let a = train_extractor(&features, &labels, 7, &MlpConfig::default()).unwrap();
        let b = train_extractor(&features, &labels, 7, &MlpConfig::default()).unwrap();
        assert_eq!(a.model.w1, b.model.w1);
        assert_eq!(a.model.w3, b.model.w3);
        assert_eq!(a.fold_errors, b.fold_errors);
    }

    #[test]
    fn rejects_non_finite_features() {
        let labels = BitMatrix::zeros(1, 2);
        let features = vec![[f64::NAN; FEATURES], [0.0; FEATURES]];
        assert!(train_extractor(&features, &labels, 0, &MlpConfig::default()).is_err());
    }
}
