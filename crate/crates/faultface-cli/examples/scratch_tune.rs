// scratch harness for sizing the desk-scale adversarial runs; not part
// of the deliverable test suite
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use faultface::dataset::{normalize_values, BehaviorClass, Window};
use faultface::gan::{self, AdvConfig};
use faultface::metrics;
use faultface::dataset::WINDOW_LEN;
use faultface::portrait::{self, Portrait, PortraitKind, PIXELS};

fn target_portrait(seed: u64) -> Portrait {
    // synthetic CMR portrait of a tone window
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freq = 0.05;
    let raw: Vec<f64> = (0..WINDOW_LEN)
        .map(|t| (std::f64::consts::TAU * freq * t as f64).sin() + 0.05 * rng.gen_range(-1.0..1.0))
        .collect();
    let norm = normalize_values(&raw).unwrap();
    portrait::cmr_portrait(&norm, BehaviorClass::Nominal, "target").unwrap()
}

fn noisy_copies(target: &Portrait, n: usize, seed: u64) -> Vec<Portrait> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let pixels: Vec<u8> = target
                .pixels()
                .iter()
                .map(|&v| {
                    let noise: i16 = rng.gen_range(-8..=8);
                    (v as i16 + noise).clamp(0, 255) as u8
                })
                .collect();
            Portrait::new(pixels, target.kind, target.label, format!("copy{}", i)).unwrap()
        })
        .collect()
}

fn mean_ssim(generated: &[Portrait], target: &Portrait) -> f64 {
    generated
        .iter()
        .map(|g| metrics::ssim(g, target).unwrap())
        .sum::<f64>()
        / generated.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let g0: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2e-4);
    let _ = PIXELS;

    let cfg = AdvConfig {
        learning_rate: lr,
        iterations: iters,
        batch_size: 32,
        d_steps: 1,
        noise_dim: 100,
        seed: 5,
        lr_decay: None,
        log_every: 100,
        checkpoint_every: None,
        gen_channels: (g0, g0 / 2, (g0 / 4).max(2)),
        disc_channels: ((g0 / 4).max(2), g0 / 2, g0),
    };
    println!(
        "iters={} gen={:?} disc={:?} lr={}",
        iters, cfg.gen_channels, cfg.disc_channels, lr
    );

    let target = target_portrait(1);
    let reals = noisy_copies(&target, 64, 2);

    let model = gan::build_dcgan(&cfg, BehaviorClass::Nominal, PortraitKind::Cmr).unwrap();
    let initial = gan::generate_portraits(&model, 64, 99).unwrap();
    println!("iter0 mean ssim = {:.4}", mean_ssim(&initial, &target));

    let t0 = Instant::now();
    let (trained, history) = gan::train_adversarial(model, &reals, &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let type_check: &[gan::LossRecord] = &history;
    let last = type_check.last().unwrap();
    println!(
        "trained {} iters in {:.1}s ({:.3} s/iter), final d={:.4} g={:.4}",
        iters,
        dt,
        dt / iters as f64,
        last.d_loss,
        last.g_loss
    );
    let generated = gan::generate_portraits(&trained, 64, 99).unwrap();
    println!("final mean ssim = {:.4}", mean_ssim(&generated, &target));
}
