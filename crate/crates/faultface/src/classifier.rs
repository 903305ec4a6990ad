//! The six-class CNN fault detector: three 3x3 convolutions with two
//! pooling stages, ReLU throughout, and six sigmoid outputs trained
//! against one-hot targets with per-class BCE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{BehaviorClass, CLASS_COUNT};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::nn::{
    adam_step, backward, forward, loss_bce, AdamParams, AdamState, Activation, LayerSpec, Mode,
    NetworkSpec, ParamSet,
};
use crate::portrait::{Portrait, PIXELS, SIDE};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
    /// Channel plan of the three convolution stages.
    pub channels: (usize, usize, usize),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            train_per_class: 300,
            val_per_class: 700,
            seed: 0,
            channels: (16, 32, 64),
        }
    }
}

/// Conv(1->c0) ReLU Pool, Conv(c0->c1) ReLU Pool, Conv(c1->c2) ReLU,
/// Flatten, Dense to 6, Sigmoid. Spatial plan 28 -> 14 -> 7.
pub fn build_cnn_spec(channels: (usize, usize, usize)) -> Result<NetworkSpec> {
    let (c0, c1, c2) = channels;
    NetworkSpec::new(
        vec![1, SIDE, SIDE],
        vec![
            LayerSpec::Conv {
                in_ch: 1,
                out_ch: c0,
                stride: 1,
            },
            LayerSpec::Act(Activation::Relu),
            LayerSpec::MaxPool,
            LayerSpec::Conv {
                in_ch: c0,
                out_ch: c1,
                stride: 1,
            },
            LayerSpec::Act(Activation::Relu),
            LayerSpec::MaxPool,
            LayerSpec::Conv {
                in_ch: c1,
                out_ch: c2,
                stride: 1,
            },
            LayerSpec::Act(Activation::Relu),
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: c2 * 7 * 7,
                output: CLASS_COUNT,
            },
            LayerSpec::Act(Activation::Sigmoid),
        ],
    )
}

pub fn build_cnn(seed: u64) -> Result<(NetworkSpec, ParamSet)> {
    build_cnn_with(seed, ClassifierConfig::default().channels)
}

pub fn build_cnn_with(
    seed: u64,
    channels: (usize, usize, usize),
) -> Result<(NetworkSpec, ParamSet)> {
    let net = build_cnn_spec(channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "cnn-init", 0));
    let params = ParamSet::init(&net, &mut rng);
    Ok((net, params))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: BehaviorClass,
    pub scores: [f64; CLASS_COUNT],
}

fn argmax_lowest(scores: &[f64; CLASS_COUNT]) -> BehaviorClass {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    BehaviorClass::from_index(best).unwrap()
}

/// Pixel batch scaled to [0,1], shaped (N, 1, 28, 28).
fn portraits_to_batch(portraits: &[&Portrait]) -> Tensor {
    let mut data = Vec::with_capacity(portraits.len() * PIXELS);
    for p in portraits {
        data.extend(p.pixels().iter().map(|&v| v as f64 / 255.0));
    }
    Tensor::from_vec(&[portraits.len(), 1, SIDE, SIDE], data).unwrap()
}

fn one_hot(labels: &[BehaviorClass]) -> Tensor {
    let mut data = vec![0.0; labels.len() * CLASS_COUNT];
    for (i, l) in labels.iter().enumerate() {
        data[i * CLASS_COUNT + l.index()] = 1.0;
    }
    Tensor::from_vec(&[labels.len(), CLASS_COUNT], data).unwrap()
}

pub fn predict(net: &NetworkSpec, params: &ParamSet, portrait: &Portrait) -> Result<Prediction> {
    Ok(predict_batch(net, params, std::slice::from_ref(portrait))?.remove(0))
}

/// Inference over many portraits in fixed-size chunks; identical to
/// mapping `predict` one by one.
pub fn predict_batch(
    net: &NetworkSpec,
    params: &ParamSet,
    portraits: &[Portrait],
) -> Result<Vec<Prediction>> {
    let refs: Vec<&Portrait> = portraits.iter().collect();
    predict_refs(net, params, &refs)
}

fn predict_refs(
    net: &NetworkSpec,
    params: &ParamSet,
    portraits: &[&Portrait],
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(portraits.len());
    for chunk in portraits.chunks(64) {
        let batch = portraits_to_batch(chunk);
        let (scores, _) = forward(net, params, &batch, Mode::Infer)?;
        for i in 0..chunk.len() {
            let mut s = [0.0; CLASS_COUNT];
            s.copy_from_slice(&scores.data()[i * CLASS_COUNT..(i + 1) * CLASS_COUNT]);
            out.push(Prediction {
                class: argmax_lowest(&s),
                scores: s,
            });
        }
    }
    Ok(out)
}

/// 6x6 confusion counts, rows predicted, columns true.
pub fn evaluate(net: &NetworkSpec, params: &ParamSet, data: &[Portrait]) -> Result<ConfusionMatrix> {
    if data.is_empty() {
        return Err(Error::Empty("evaluate over zero portraits".into()));
    }
    let predictions = predict_batch(net, params, data)?;
    let mut cm = ConfusionMatrix::new();
    for (pred, portrait) in predictions.iter().zip(data) {
        cm.record(pred.class, portrait.label);
    }
    Ok(cm)
}

pub fn accuracy(net: &NetworkSpec, params: &ParamSet, data: &[Portrait]) -> Result<f64> {
    let cm = evaluate(net, params, data)?;
    Ok(cm.trace() as f64 / cm.total() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub train_loss: f64,
}

/// Deterministic per-class split: shuffle each class's portraits with
/// the config seed, take `train_per_class` then `val_per_class`.
pub fn split_train_val(
    data: &[Portrait],
    cfg: &ClassifierConfig,
) -> Result<(Vec<Portrait>, Vec<Portrait>)> {
    let mut by_class: Vec<Vec<&Portrait>> = vec![Vec::new(); CLASS_COUNT];
    for p in data {
        by_class[p.label.index()].push(p);
    }
    let need = cfg.train_per_class + cfg.val_per_class;
    let mut train = Vec::with_capacity(cfg.train_per_class * CLASS_COUNT);
    let mut val = Vec::with_capacity(cfg.val_per_class * CLASS_COUNT);
    for class in BehaviorClass::ALL {
        let bucket = &mut by_class[class.index()];
        if bucket.len() < need {
            return Err(Error::InsufficientData {
                class: class.name().into(),
                have: bucket.len(),
                need,
            });
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "split", class.index() as u64));
        bucket.shuffle(&mut rng);
        train.extend(bucket[..cfg.train_per_class].iter().map(|p| (*p).clone()));
        val.extend(
            bucket[cfg.train_per_class..need]
                .iter()
                .map(|p| (*p).clone()),
        );
    }
    Ok((train, val))
}

/// Train with per-class BCE against one-hot targets; shuffling, the
/// split, and init are all fixed by the seed. History records both
/// accuracies every epoch.
pub fn train_cnn(
    net: &NetworkSpec,
    params: ParamSet,
    data: &[Portrait],
    cfg: &ClassifierConfig,
) -> Result<(ParamSet, Vec<EpochRecord>)> {
    let (train, val) = split_train_val(data, cfg)?;
    train_cnn_presplit(net, params, &train, &val, cfg)
}

/// Training core on an explicit train/val split.
pub fn train_cnn_presplit(
    net: &NetworkSpec,
    params: ParamSet,
    train: &[Portrait],
    val: &[Portrait],
    cfg: &ClassifierConfig,
) -> Result<(ParamSet, Vec<EpochRecord>)> {
    if cfg.epochs == 0 {
        return Ok((params, Vec::new()));
    }
    if train.is_empty() {
        return Err(Error::Empty("classifier training set is empty".into()));
    }
    let mut params = params;
    let mut opt = AdamState::new(&params, AdamParams::classifier(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "cnn-train", 0));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Portrait> = chunk.iter().map(|&i| &train[i]).collect();
            let labels: Vec<BehaviorClass> = refs.iter().map(|p| p.label).collect();
            let batch = portraits_to_batch(&refs);
            let targets = one_hot(&labels);

            let (scores, tape) = forward(net, &params, &batch, Mode::Train)?;
            let (loss, grad) = loss_bce(&scores, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    iteration: epoch,
                    reason: format!("classifier loss {}", loss),
                });
            }
            epoch_loss += loss;
            batches += 1;
            let (grads, _) = backward(net, &params, &tape, &grad)?;
            params = params.with_bn_updates(&tape);
            let (p, s) = adam_step(&params, &grads, &opt)?;
            params = p;
            opt = s;
        }

        let train_acc = accuracy(net, &params, train)?;
        let val_acc = if val.is_empty() {
            f64::NAN
        } else {
            accuracy(net, &params, val)?
        };
        history.push(EpochRecord {
            epoch,
            train_acc,
            val_acc,
            train_loss: epoch_loss / batches.max(1) as f64,
        });
    }
    Ok((params, history))
}
