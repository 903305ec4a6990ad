//! Per-class adversarial training: the convolutional GAN used for
//! dataset balancing plus the fully-connected baseline, the alternating
//! update loop, and synthetic portrait generation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{BehaviorClass, CLASS_COUNT};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, forward, loss_bce, AdamParams, AdamState, Activation, LayerSpec, Mode,
    NetworkSpec, ParamSet,
};
use crate::portrait::{Portrait, PortraitKind, PIXELS, SIDE};
use crate::tensor::Tensor;

/// Adversarial training hyperparameters. Defaults follow the full-scale
/// recipe: Adam at 1e-4 for 40000 minibatch iterations of 100, one
/// discriminator update per generator update, 100-dim Gaussian noise.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Discriminator updates per generator update (the "K" of the
    /// alternating scheme).
    pub d_steps: usize,
    pub noise_dim: usize,
    pub seed: u64,
    /// When set, the learning rate decays exponentially to
    /// `lr * lr_decay` over the run (fully-connected baseline recipe:
    /// lr 2e-4, decay 0.5).
    pub lr_decay: Option<f64>,
    /// Loss history sampling interval.
    pub log_every: usize,
    /// Checkpoint callback interval, if any.
    pub checkpoint_every: Option<usize>,
    /// Generator conv-family channel plan, seed spatial grid outward.
    pub gen_channels: (usize, usize, usize),
    /// Discriminator channel plan, input outward.
    pub disc_channels: (usize, usize, usize),
}

impl Default for AdvConfig {
    fn default() -> Self {
        AdvConfig {
            learning_rate: 1e-4,
            iterations: 40_000,
            batch_size: 100,
            d_steps: 1,
            noise_dim: 100,
            seed: 0,
            lr_decay: None,
            log_every: 100,
            checkpoint_every: None,
            gen_channels: (128, 64, 32),
            disc_channels: (32, 64, 128),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GanFlavor {
    Dcgan,
    MlpGan,
}

impl GanFlavor {
    pub fn name(self) -> &'static str {
        match self {
            GanFlavor::Dcgan => "dcgan",
            GanFlavor::MlpGan => "mlpgan",
        }
    }

    pub fn parse(s: &str) -> Option<GanFlavor> {
        match s.to_ascii_lowercase().as_str() {
            "dcgan" => Some(GanFlavor::Dcgan),
            "mlpgan" | "gan" => Some(GanFlavor::MlpGan),
            _ => None,
        }
    }
}

impl fmt::Display for GanFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A generator/discriminator pair bound to one behavior class and one
/// portrait kind.
#[derive(Clone, Debug)]
pub struct GanModel {
    pub flavor: GanFlavor,
    pub class_label: BehaviorClass,
    pub portrait_kind: PortraitKind,
    pub noise_dim: usize,
    pub gen_net: NetworkSpec,
    pub gen_params: ParamSet,
    pub disc_net: NetworkSpec,
    pub disc_params: ParamSet,
}

impl GanModel {
    pub fn id(&self) -> String {
        format!("{}-{}-{}", self.flavor, self.class_label, self.portrait_kind)
    }
}

/// Convolutional GAN. Generator: a 100-dim noise vector is projected to
/// a 7x7 seed grid, upsampled twice by fractional-stride convolutions to
/// 28x28, and squashed with Tanh; batch norm and ReLU sit on every
/// hidden stage, never on the output. Discriminator: three stride-2
/// convolutions (no pooling anywhere) with LeakyReLU, batch norm on the
/// hidden stages only, and a single fully-connected sigmoid head.
pub fn build_dcgan(
    cfg: &AdvConfig,
    class: BehaviorClass,
    kind: PortraitKind,
) -> Result<GanModel> {
    let (g0, g1, g2) = cfg.gen_channels;
    let gen_net = NetworkSpec::new(
        vec![cfg.noise_dim],
        vec![
            LayerSpec::Dense {
                input: cfg.noise_dim,
                output: 7 * 7 * g0,
            },
            LayerSpec::Reshape {
                shape: vec![g0, 7, 7],
            },
            LayerSpec::BatchNorm { ch: g0 },
            LayerSpec::Act(Activation::Relu),
            LayerSpec::TConv { in_ch: g0, out_ch: g1 },
            LayerSpec::BatchNorm { ch: g1 },
            LayerSpec::Act(Activation::Relu),
            LayerSpec::TConv { in_ch: g1, out_ch: g2 },
            LayerSpec::BatchNorm { ch: g2 },
            LayerSpec::Act(Activation::Relu),
            LayerSpec::Conv {
                in_ch: g2,
                out_ch: 1,
                stride: 1,
            },
            LayerSpec::Act(Activation::Tanh),
        ],
    )?;

    let (d0, d1, d2) = cfg.disc_channels;
    let disc_net = NetworkSpec::new(
        vec![1, SIDE, SIDE],
        vec![
            LayerSpec::Conv {
                in_ch: 1,
                out_ch: d0,
                stride: 2,
            },
            LayerSpec::Act(Activation::LeakyRelu(0.2)),
            LayerSpec::Conv {
                in_ch: d0,
                out_ch: d1,
                stride: 2,
            },
            LayerSpec::BatchNorm { ch: d1 },
            LayerSpec::Act(Activation::LeakyRelu(0.2)),
            LayerSpec::Conv {
                in_ch: d1,
                out_ch: d2,
                stride: 2,
            },
            LayerSpec::BatchNorm { ch: d2 },
            LayerSpec::Act(Activation::LeakyRelu(0.2)),
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: d2 * 4 * 4,
                output: 1,
            },
            LayerSpec::Act(Activation::Sigmoid),
        ],
    )?;

    let mut gen_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "gen-init", 0));
    let mut disc_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "disc-init", 0));
    Ok(GanModel {
        flavor: GanFlavor::Dcgan,
        class_label: class,
        portrait_kind: kind,
        noise_dim: cfg.noise_dim,
        gen_params: ParamSet::init(&gen_net, &mut gen_rng),
        gen_net,
        disc_params: ParamSet::init(&disc_net, &mut disc_rng),
        disc_net,
    })
}

/// Fully-connected baseline. Generator widens 256 -> 512 -> 1024 with
/// LeakyReLU then batch norm after each hidden stage, and emits 784
/// Tanh values reshaped to 28x28. Discriminator: 512 -> 256 LeakyReLU
/// stages and a sigmoid head.
pub fn build_mlp_gan(
    cfg: &AdvConfig,
    class: BehaviorClass,
    kind: PortraitKind,
) -> Result<GanModel> {
    let gen_net = NetworkSpec::new(
        vec![cfg.noise_dim],
        vec![
            LayerSpec::Dense {
                input: cfg.noise_dim,
                output: 256,
            },
            LayerSpec::Act(Activation::LeakyRelu(0.2)),
            LayerSpec::BatchNorm { ch: 256 },
            LayerSpec::Dense {
                input: 256,
                output: 512,
            },
            LayerSpec::Act(Activation::LeakyRelu(0.2)),
            LayerSpec::BatchNorm { ch: 512 },
            LayerSpec::Dense {
                input: 512,
                output: 1024,
            },
            LayerSpec::Act(Activation::LeakyRelu(0.2)),
            LayerSpec::BatchNorm { ch: 1024 },
            LayerSpec::Dense {
                input: 1024,
                output: PIXELS,
            },
            LayerSpec::Act(Activation::Tanh),
            LayerSpec::Reshape {
                shape: vec![1, SIDE, SIDE],
            },
        ],
    )?;

    let disc_net = NetworkSpec::new(
        vec![1, SIDE, SIDE],
        vec![
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: PIXELS,
                output: 512,
            },
            LayerSpec::Act(Activation::LeakyRelu(0.2)),
            LayerSpec::Dense {
                input: 512,
                output: 256,
            },
            LayerSpec::Act(Activation::LeakyRelu(0.2)),
            LayerSpec::Dense {
                input: 256,
                output: 1,
            },
            LayerSpec::Act(Activation::Sigmoid),
        ],
    )?;

    let mut gen_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "gen-init", 0));
    let mut disc_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "disc-init", 0));
    Ok(GanModel {
        flavor: GanFlavor::MlpGan,
        class_label: class,
        portrait_kind: kind,
        noise_dim: cfg.noise_dim,
        gen_params: ParamSet::init(&gen_net, &mut gen_rng),
        gen_net,
        disc_params: ParamSet::init(&disc_net, &mut disc_rng),
        disc_net,
    })
}

fn gaussian_noise(batch: usize, dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data: Vec<f64> = (0..batch * dim).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(&[batch, dim], data).unwrap()
}

/// Owns the Adam moments between alternating updates.
pub struct GanTrainer {
    pub model: GanModel,
    gen_opt: AdamState,
    disc_opt: AdamState,
    pub iteration: usize,
}

impl GanTrainer {
    pub fn new(model: GanModel, cfg: &AdvConfig) -> GanTrainer {
        let gen_opt = AdamState::new(&model.gen_params, AdamParams::adversarial(cfg.learning_rate));
        let disc_opt =
            AdamState::new(&model.disc_params, AdamParams::adversarial(cfg.learning_rate));
        GanTrainer {
            model,
            gen_opt,
            disc_opt,
            iteration: 0,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.gen_opt = self.gen_opt.with_lr(lr);
        self.disc_opt = self.disc_opt.with_lr(lr);
    }

    /// One alternating update: `d_steps` discriminator updates (real
    /// toward 1, detached fakes toward 0), then one non-saturating
    /// generator update pushing D(G(z)) toward 1. Returns the losses
    /// measured during the final sub-steps.
    pub fn step(
        &mut self,
        real_batch: &Tensor,
        rng: &mut ChaCha8Rng,
        cfg: &AdvConfig,
    ) -> Result<(f64, f64)> {
        self.iteration += 1;
        let n = real_batch.shape()[0];
        if n != cfg.batch_size {
            return Err(Error::Shape(format!(
                "real batch size {} does not match configured {}",
                n, cfg.batch_size
            )));
        }
        let ones = Tensor::filled(&[n, 1], 1.0);
        let zeros = Tensor::zeros(&[n, 1]);
        let model = &mut self.model;

        let mut d_loss = f64::NAN;
        for _ in 0..cfg.d_steps {
            // Fakes are detached: the generator only runs forward here.
            let z = gaussian_noise(n, model.noise_dim, rng);
            let (fakes, _) = forward(&model.gen_net, &model.gen_params, &z, Mode::Train)?;

            let (real_out, real_tape) =
                forward(&model.disc_net, &model.disc_params, real_batch, Mode::Train)?;
            let (loss_real, grad_real) = loss_bce(&real_out, &ones)?;
            let (grads_real, _) = backward(&model.disc_net, &model.disc_params, &real_tape, &grad_real)?;
            model.disc_params = model.disc_params.with_bn_updates(&real_tape);

            let (fake_out, fake_tape) =
                forward(&model.disc_net, &model.disc_params, &fakes, Mode::Train)?;
            let (loss_fake, grad_fake) = loss_bce(&fake_out, &zeros)?;
            let (grads_fake, _) = backward(&model.disc_net, &model.disc_params, &fake_tape, &grad_fake)?;
            model.disc_params = model.disc_params.with_bn_updates(&fake_tape);

            d_loss = 0.5 * (loss_real + loss_fake);
            if !d_loss.is_finite() {
                return Err(Error::Numeric {
                    iteration: self.iteration,
                    reason: format!("discriminator loss {}", d_loss),
                });
            }
            let grads = grads_real.add(&grads_fake)?.scale(0.5);
            let (p, s) = adam_step(&model.disc_params, &grads, &self.disc_opt)?;
            model.disc_params = p;
            self.disc_opt = s;
        }

        // Generator update through a frozen discriminator.
        let z = gaussian_noise(n, model.noise_dim, rng);
        let (fakes, gen_tape) = forward(&model.gen_net, &model.gen_params, &z, Mode::Train)?;
        let (d_out, d_tape) = forward(&model.disc_net, &model.disc_params, &fakes, Mode::Train)?;
        let (g_loss, d_grad) = loss_bce(&d_out, &ones)?;
        if !g_loss.is_finite() {
            return Err(Error::Numeric {
                iteration: self.iteration,
                reason: format!("generator loss {}", g_loss),
            });
        }
        let (_, fake_grad) = backward(&model.disc_net, &model.disc_params, &d_tape, &d_grad)?;
        let (gen_grads, _) = backward(&model.gen_net, &model.gen_params, &gen_tape, &fake_grad)?;
        model.gen_params = model.gen_params.with_bn_updates(&gen_tape);
        let (p, s) = adam_step(&model.gen_params, &gen_grads, &self.gen_opt)?;
        model.gen_params = p;
        self.gen_opt = s;

        Ok((d_loss, g_loss))
    }
}

/// Spec-surface alias for one trainer step.
pub fn adversarial_step(
    trainer: &mut GanTrainer,
    real_batch: &Tensor,
    rng: &mut ChaCha8Rng,
    cfg: &AdvConfig,
) -> Result<(f64, f64)> {
    trainer.step(real_batch, rng, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Observer for checkpoints and loss logging during training.
pub trait TrainSink {
    fn on_log(&mut self, _record: &LossRecord) {}
    fn on_checkpoint(&mut self, _iteration: usize, _model: &GanModel) -> Result<()> {
        Ok(())
    }
}

pub struct NoSink;
impl TrainSink for NoSink {}

/// Map 8-bit pixels onto the generator's Tanh range [-1, 1].
pub fn pixels_to_signed(p: &Portrait) -> Vec<f64> {
    p.pixels().iter().map(|&v| v as f64 / 127.5 - 1.0).collect()
}

/// Train on real portraits of the model's own class and kind,
/// minibatches sampled with replacement. Returns the trained model and
/// the loss history sampled every `log_every` iterations.
pub fn train_adversarial(
    model: GanModel,
    real_portraits: &[Portrait],
    cfg: &AdvConfig,
) -> Result<(GanModel, Vec<LossRecord>)> {
    train_adversarial_with(model, real_portraits, cfg, &mut NoSink)
}

pub fn train_adversarial_with(
    model: GanModel,
    real_portraits: &[Portrait],
    cfg: &AdvConfig,
    sink: &mut dyn TrainSink,
) -> Result<(GanModel, Vec<LossRecord>)> {
    if real_portraits.is_empty() {
        return Err(Error::Empty("adversarial training set is empty".into()));
    }
    for p in real_portraits {
        if p.kind != model.portrait_kind || p.label != model.class_label {
            return Err(Error::Shape(format!(
                "portrait {}/{} does not match model {}",
                p.kind,
                p.label,
                model.id()
            )));
        }
    }
    if cfg.iterations == 0 {
        return Ok((model, Vec::new()));
    }

    let pool: Vec<Vec<f64>> = real_portraits.iter().map(pixels_to_signed).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "train", 0));
    let mut trainer = GanTrainer::new(model, cfg);
    let mut history = Vec::new();

    for t in 1..=cfg.iterations {
        if let Some(decay) = cfg.lr_decay {
            let frac = t as f64 / cfg.iterations as f64;
            trainer.set_lr(cfg.learning_rate * decay.powf(frac));
        }
        let mut batch = Vec::with_capacity(cfg.batch_size * PIXELS);
        for _ in 0..cfg.batch_size {
            let pick = rng.gen_range(0..pool.len());
            batch.extend_from_slice(&pool[pick]);
        }
        let real = Tensor::from_vec(&[cfg.batch_size, 1, SIDE, SIDE], batch)?;
        let (d_loss, g_loss) = trainer.step(&real, &mut rng, cfg)?;

        if t % cfg.log_every == 0 || t == cfg.iterations {
            let record = LossRecord {
                iter: t,
                d_loss,
                g_loss,
            };
            history.push(record);
            sink.on_log(&record);
        }
        if let Some(every) = cfg.checkpoint_every {
            if every > 0 && t % every == 0 {
                sink.on_checkpoint(t, &trainer.model)?;
            }
        }
    }
    Ok((trainer.model, history))
}

/// Sample `n` portraits from the generator (inference mode, running
/// batch-norm statistics). Tanh outputs map to [0,255] by
/// round(255 * (v + 1) / 2).
pub fn generate_portraits(model: &GanModel, n: usize, seed: u64) -> Result<Vec<Portrait>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "generate", 0));
    let mut out = Vec::with_capacity(n);
    let chunk = 64;
    let mut produced = 0;
    while produced < n {
        let take = chunk.min(n - produced);
        let z = gaussian_noise(take, model.noise_dim, &mut rng);
        let (images, _) = forward(&model.gen_net, &model.gen_params, &z, Mode::Infer)?;
        for i in 0..take {
            let start = i * PIXELS;
            let pixels: Vec<u8> = images.data()[start..start + PIXELS]
                .iter()
                .map(|&v| (255.0 * (v + 1.0) / 2.0).round().clamp(0.0, 255.0) as u8)
                .collect();
            out.push(Portrait::new(
                pixels,
                model.portrait_kind,
                model.class_label,
                format!("{}-s{}-{:05}", model.id(), seed, produced + i),
            )?);
        }
        produced += take;
    }
    Ok(out)
}

/// Provenance of one class's slice of a balanced set.
#[derive(Clone, Debug, PartialEq)]
pub struct ProvenanceEntry {
    pub class: BehaviorClass,
    pub kind: PortraitKind,
    pub model_id: String,
    pub seed: u64,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct BalancedSet {
    pub portraits: Vec<Portrait>,
    pub provenance: Vec<ProvenanceEntry>,
}

/// Generate `target_per_class` portraits from each class's model.
/// Requires exactly one model per behavior class, all the same kind.
pub fn balance_dataset(
    models: &[GanModel],
    target_per_class: usize,
    seed: u64,
) -> Result<BalancedSet> {
    let mut by_class: [Option<&GanModel>; CLASS_COUNT] = [None; CLASS_COUNT];
    for m in models {
        let slot = &mut by_class[m.class_label.index()];
        if slot.is_some() {
            return Err(Error::Shape(format!(
                "duplicate model for class {}",
                m.class_label
            )));
        }
        *slot = Some(m);
    }
    let kind = models
        .first()
        .map(|m| m.portrait_kind)
        .ok_or_else(|| Error::Empty("no models supplied".into()))?;
    if models.iter().any(|m| m.portrait_kind != kind) {
        return Err(Error::Shape("models disagree on portrait kind".into()));
    }

    let mut portraits = Vec::with_capacity(target_per_class * CLASS_COUNT);
    let mut provenance = Vec::with_capacity(CLASS_COUNT);
    for class in BehaviorClass::ALL {
        let model = by_class[class.index()].ok_or_else(|| {
            Error::InsufficientData {
                class: class.name().into(),
                have: 0,
                need: 1,
            }
        })?;
        let class_seed = derive_seed(seed, "balance", class.index() as u64);
        let generated = generate_portraits(model, target_per_class, class_seed)?;
        provenance.push(ProvenanceEntry {
            class,
            kind,
            model_id: model.id(),
            seed: class_seed,
            count: generated.len(),
        });
        portraits.extend(generated);
    }
    Ok(BalancedSet {
        portraits,
        provenance,
    })
}
