//! Bundled synthetic vibration dataset: six analytically distinct signal
//! families (one tone frequency per behavior class, plus noise), sized
//! like the lab benchmark so the full pipeline can run without it.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use faultface::dataset::BehaviorClass;
use faultface::derive_seed;
use faultface::error::Result;
use faultface::portrait::morse_center_freqs_normalized;

#[derive(Clone, Debug)]
pub struct SynthSpec {
    /// Record counts in class index order; the default mirrors the
    /// benchmark's imbalance (4 nominal records out of 114).
    pub records_per_class: [usize; 6],
    pub samples_per_record: usize,
    pub sample_rate: f64,
    /// Gaussian noise standard deviation relative to unit tone
    /// amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            records_per_class: [4, 28, 28, 23, 15, 16],
            samples_per_record: 3920, // five non-overlapping windows
            sample_rate: 12_000.0,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Normalized tone frequency for each class: well-separated rungs of the
/// scalogram's frequency ladder.
pub fn family_freq(class: BehaviorClass) -> f64 {
    let ladder = morse_center_freqs_normalized();
    let rung = [3, 8, 13, 17, 21, 25][class.index()];
    ladder[rung]
}

/// Write one raw `.f64` signal file per record plus `manifest.csv`;
/// returns the manifest path.
pub fn generate(dir: &Path, spec: &SynthSpec) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for class in BehaviorClass::ALL {
        let freq = family_freq(class);
        for rec in 0..spec.records_per_class[class.index()] {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                spec.seed,
                "synth",
                (class.index() * 1000 + rec) as u64,
            ));
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let amplitude: f64 = rng.gen_range(0.8..1.2);
            let mut bytes = Vec::with_capacity(spec.samples_per_record * 8);
            for t in 0..spec.samples_per_record {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let v = amplitude * (std::f64::consts::TAU * freq * t as f64 + phase).sin()
                    + spec.noise * noise;
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let name = format!("{}_{:03}.f64", class.name().to_ascii_lowercase(), rec);
            fs::write(dir.join(&name), bytes)?;
            let end = if rec % 2 == 0 { "FanEnd" } else { "DriveEnd" };
            manifest.push_str(&format!("{},{},{},{}\n", name, class.name(), spec.sample_rate, end));
        }
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faultface::dataset::{class_histogram, load_manifest, load_record, segment_record};

    #[test]
    fn default_set_is_benchmark_shaped() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = generate(dir.path(), &SynthSpec::default()).unwrap();
        let manifest = load_manifest(&manifest_path).unwrap();
        assert_eq!(manifest.entries.len(), 114);
        let hist = class_histogram(&manifest);
        assert_eq!(hist.counts, [4, 28, 28, 23, 15, 16]);

        // records load and segment into five windows
        let rec = load_record(&manifest.entries[0], dir.path()).unwrap();
        assert_eq!(rec.samples.len(), 3920);
        assert_eq!(segment_record(&rec, 784).len(), 5);
    }

    #[test]
    fn deterministic_given_seed() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            records_per_class: [1, 1, 1, 1, 1, 1],
            samples_per_record: 800,
            ..SynthSpec::default()
        };
        generate(dir_a.path(), &spec).unwrap();
        generate(dir_b.path(), &spec).unwrap();
        let a = fs::read(dir_a.path().join("ball_000.f64")).unwrap();
        let b = fs::read(dir_b.path().join("ball_000.f64")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn families_have_distinct_frequencies() {
        let mut freqs: Vec<f64> = BehaviorClass::ALL.iter().map(|&c| family_freq(c)).collect();
        freqs.dedup();
        assert_eq!(freqs.len(), 6);
        assert!(freqs.windows(2).all(|w| w[1] > w[0] * 1.3));
    }
}
