//! SSIM quality assessment of generated portrait sets and the per-class
//! accuracy / coverage / harmonic-mean indices computed from a confusion
//! matrix.

use crate::dataset::{BehaviorClass, CLASS_COUNT};
use crate::error::{Error, Result};
use crate::par;
use crate::portrait::{Portrait, PIXELS};

/// SSIM regularizers for 8-bit dynamic range L = 255.
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Whole-image SSIM of two 28x28 portraits: means, population variances
/// and cross-covariance over all 784 pixels, no sliding window. Exactly
/// symmetric in its arguments, and exactly 1 for identical images.
pub fn ssim(x: &Portrait, y: &Portrait) -> Result<f64> {
    ssim_pixels(x.pixels(), y.pixels())
}

pub fn ssim_pixels(x: &[u8], y: &[u8]) -> Result<f64> {
    if x.len() != PIXELS || y.len() != PIXELS {
        return Err(Error::Shape(format!(
            "ssim wants two {}-pixel images, got {} and {}",
            PIXELS,
            x.len(),
            y.len()
        )));
    }
    let n = PIXELS as f64;
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    for i in 0..PIXELS {
        sum_x += x[i] as f64;
        sum_y += y[i] as f64;
    }
    let mu_x = sum_x / n;
    let mu_y = sum_y / n;

    let mut var_x = 0.0;
    let mut var_y = 0.0;
    let mut cov = 0.0;
    for i in 0..PIXELS {
        let dx = x[i] as f64 - mu_x;
        let dy = y[i] as f64 - mu_y;
        var_x += dx * dx;
        var_y += dy * dy;
        cov += dx * dy;
    }
    var_x /= n;
    var_y /= n;
    cov /= n;

    Ok(((2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)))
}

/// Mean / population std / range statistics over the all-pairs SSIM
/// values between an original and a generated set. Per-pair values are
/// retained for export (boxplot-style reports).
#[derive(Clone, Debug, PartialEq)]
pub struct SsimStats {
    pub mean: f64,
    pub std: f64,
    pub range: f64,
    /// (original index, generated index, ssim), row-major over pairs.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Evaluate every original x generated pair. Pair evaluation is
/// data-parallel; the statistics accumulate in fixed index order.
pub fn ssim_distribution(originals: &[Portrait], generated: &[Portrait]) -> Result<SsimStats> {
    ssim_distribution_impl(originals, generated, true)
}

/// Sequential variant for the bench suite.
pub fn ssim_distribution_seq(originals: &[Portrait], generated: &[Portrait]) -> Result<SsimStats> {
    ssim_distribution_impl(originals, generated, false)
}

fn ssim_distribution_impl(
    originals: &[Portrait],
    generated: &[Portrait],
    parallel: bool,
) -> Result<SsimStats> {
    if originals.is_empty() {
        return Err(Error::Empty("ssim_distribution: no original portraits".into()));
    }
    if generated.is_empty() {
        return Err(Error::Empty("ssim_distribution: no generated portraits".into()));
    }
    let gen_count = generated.len();
    let index_pairs: Vec<(usize, usize)> = (0..originals.len())
        .flat_map(|i| (0..gen_count).map(move |j| (i, j)))
        .collect();
    let eval = |_k: usize, pair: &(usize, usize)| -> Result<(usize, usize, f64)> {
        let (i, j) = *pair;
        Ok((i, j, ssim(&originals[i], &generated[j])?))
    };
    let results = if parallel {
        par::map_indexed(&index_pairs, eval)
    } else {
        par::map_indexed_seq(&index_pairs, eval)
    };
    let pairs: Vec<(usize, usize, f64)> = results.into_iter().collect::<Result<_>>()?;

    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.2).sum::<f64>() / n;
    let var = pairs.iter().map(|p| (p.2 - mean) * (p.2 - mean)).sum::<f64>() / n;
    let max = pairs.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let min = pairs.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    Ok(SsimStats {
        mean,
        std: var.sqrt(),
        range: max - min,
        pairs,
    })
}

/// 6x6 count matrix: rows are the predicted ("output") class, columns
/// the true ("target") class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[usize; CLASS_COUNT]; CLASS_COUNT],
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new()
    }
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        ConfusionMatrix {
            counts: [[0; CLASS_COUNT]; CLASS_COUNT],
        }
    }

    pub fn from_counts(counts: [[usize; CLASS_COUNT]; CLASS_COUNT]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, predicted: BehaviorClass, actual: BehaviorClass) {
        self.counts[predicted.index()][actual.index()] += 1;
    }

    pub fn count(&self, predicted: BehaviorClass, actual: BehaviorClass) -> usize {
        self.counts[predicted.index()][actual.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..CLASS_COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn row(&self, predicted: BehaviorClass) -> &[usize; CLASS_COUNT] {
        &self.counts[predicted.index()]
    }
}

/// Per-class one-vs-rest indices: accuracy A = TP/(TP+FP), coverage
/// C = TP/(TP+FN), harmonic mean F = 2AC/(A+C); any 0/0 collapses to 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub coverage: f64,
    pub harmonic_mean: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn class_metrics(cm: &ConfusionMatrix, class: BehaviorClass) -> ClassMetrics {
    let c = class.index();
    let tp = cm.counts[c][c];
    let fp: usize = (0..CLASS_COUNT).filter(|&j| j != c).map(|j| cm.counts[c][j]).sum();
    let fn_: usize = (0..CLASS_COUNT).filter(|&i| i != c).map(|i| cm.counts[i][c]).sum();
    let accuracy = ratio(tp, tp + fp);
    let coverage = ratio(tp, tp + fn_);
    let harmonic_mean = if accuracy + coverage > 0.0 {
        2.0 * accuracy * coverage / (accuracy + coverage)
    } else {
        0.0
    };
    ClassMetrics {
        tp,
        fp,
        fn_,
        accuracy,
        coverage,
        harmonic_mean,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_class: [ClassMetrics; CLASS_COUNT],
    pub overall_accuracy: f64,
}

/// Per-class metrics plus overall accuracy (trace / total).
pub fn report_all(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("metrics over an empty confusion matrix".into()));
    }
    let per_class =
        std::array::from_fn(|i| class_metrics(cm, BehaviorClass::from_index(i).unwrap()));
    Ok(MetricsReport {
        per_class,
        overall_accuracy: cm.trace() as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portrait::PortraitKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn portrait(seed: u64) -> Portrait {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Portrait::new(
            (0..PIXELS).map(|_| rng.gen::<u8>()).collect(),
            PortraitKind::Cmr,
            BehaviorClass::Nominal,
            format!("p{}", seed),
        )
        .unwrap()
    }

    #[test]
    fn ssim_self_is_one() {
        for seed in 0..5 {
            let p = portrait(seed);
            assert_eq!(ssim(&p, &p).unwrap(), 1.0);
        }
    }

    #[test]
    fn ssim_symmetric_bitwise() {
        for seed in 0..5 {
            let a = portrait(seed);
            let b = portrait(seed + 100);
            assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        }
    }

    #[test]
    fn ssim_all_zero_images() {
        let z = Portrait::new(
            vec![0u8; PIXELS],
            PortraitKind::Cmr,
            BehaviorClass::Nominal,
            "z",
        )
        .unwrap();
        assert_eq!(ssim(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn ssim_matches_moment_oracle() {
        let a = portrait(1);
        let b = portrait(2);
        let got = ssim(&a, &b).unwrap();
        // independent moment computation via E[X], E[X^2], E[XY]
        let n = PIXELS as f64;
        let ex = a.pixels().iter().map(|&v| v as f64).sum::<f64>() / n;
        let ey = b.pixels().iter().map(|&v| v as f64).sum::<f64>() / n;
        let exx = a.pixels().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / n;
        let eyy = b.pixels().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / n;
        let exy = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(&x, &y)| (x as f64) * (y as f64))
            .sum::<f64>()
            / n;
        let (vx, vy, cxy) = (exx - ex * ex, eyy - ey * ey, exy - ex * ey);
        let expect = ((2.0 * ex * ey + SSIM_C1) * (2.0 * cxy + SSIM_C2))
            / ((ex * ex + ey * ey + SSIM_C1) * (vx + vy + SSIM_C2));
        assert!((got - expect).abs() < 1e-12, "{} vs {}", got, expect);
    }

    #[test]
    fn distribution_identical_lists() {
        let p = portrait(3);
        let stats = ssim_distribution(&[p.clone()], &[p]).unwrap();
        assert_eq!(stats.mean, 1.0);
        assert_eq!(stats.std, 0.0);
        assert_eq!(stats.range, 0.0);
        assert_eq!(stats.pairs.len(), 1);
    }

    #[test]
    fn distribution_matches_brute_force() {
        let orig: Vec<Portrait> = (0..3).map(portrait).collect();
        let generated: Vec<Portrait> = (10..12).map(portrait).collect();
        let stats = ssim_distribution(&orig, &generated).unwrap();
        assert_eq!(stats.pairs.len(), 6);
        let mut values = Vec::new();
        for o in &orig {
            for g in &generated {
                values.push(ssim(o, g).unwrap());
            }
        }
        let mean = values.iter().sum::<f64>() / 6.0;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        assert!((stats.mean - mean).abs() < 1e-15);
        assert!((stats.std - var.sqrt()).abs() < 1e-15);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((stats.range - (max - min)).abs() < 1e-15);
        // parallel and sequential paths agree bitwise
        let seq = ssim_distribution_seq(&orig, &generated).unwrap();
        assert_eq!(stats, seq);
    }

    #[test]
    fn distribution_rejects_empty() {
        let p = portrait(4);
        assert!(ssim_distribution(&[], &[p.clone()]).is_err());
        assert!(ssim_distribution(&[p], &[]).is_err());
    }

    /// The perfect diagonal from the published CWT/CMR/Gram/Hankel/Toep
    /// confusion matrix: every class gets A = C = F = 1.
    #[test]
    fn perfect_diagonal_all_ones() {
        let mut cm = ConfusionMatrix::new();
        // (Nominal, Ball, InnerRace, LoadCenter, LoadOpposite, LoadOrthogonal)
        let diag = [4usize, 28, 28, 23, 15, 16];
        for (i, &n) in diag.iter().enumerate() {
            let c = BehaviorClass::from_index(i).unwrap();
            for _ in 0..n {
                cm.record(c, c);
            }
        }
        assert_eq!(cm.total(), 114);
        for c in BehaviorClass::ALL {
            let m = class_metrics(&cm, c);
            assert_eq!(m.accuracy, 1.0);
            assert_eq!(m.coverage, 1.0);
            assert_eq!(m.harmonic_mean, 1.0);
        }
        let report = report_all(&cm).unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
    }

    #[test]
    fn zero_matrix_all_zero_metrics() {
        let cm = ConfusionMatrix::new();
        for c in BehaviorClass::ALL {
            let m = class_metrics(&cm, c);
            assert_eq!((m.accuracy, m.coverage, m.harmonic_mean), (0.0, 0.0, 0.0));
        }
        assert!(report_all(&cm).is_err());
    }

    /// The published Haar confusion matrix, with predictions collapsing
    /// onto the LoadOrthogonal column.
    #[test]
    fn haar_shaped_matrix_metrics() {
        let mut counts = [[0usize; 6]; 6];
        let (nom, ball, ir, lc, lo, lor) = (0, 1, 2, 3, 4, 5);
        counts[nom][nom] = 4;
        counts[ball][ball] = 28;
        counts[ir][lor] = 28;
        counts[lc][lor] = 23;
        counts[lo][lor] = 15;
        counts[lor][lor] = 16;
        let cm = ConfusionMatrix::from_counts(counts);

        let m_ball = class_metrics(&cm, BehaviorClass::Ball);
        assert_eq!(
            (m_ball.accuracy, m_ball.coverage, m_ball.harmonic_mean),
            (1.0, 1.0, 1.0)
        );
        let m_nom = class_metrics(&cm, BehaviorClass::Nominal);
        assert_eq!(
            (m_nom.accuracy, m_nom.coverage, m_nom.harmonic_mean),
            (1.0, 1.0, 1.0)
        );
        let m_ir = class_metrics(&cm, BehaviorClass::InnerRace);
        assert_eq!((m_ir.accuracy, m_ir.coverage, m_ir.harmonic_mean), (0.0, 0.0, 0.0));
        // LoadOrthogonal: TP 16, FN 28+23+15 = 66 -> coverage 16/82.
        let m_lor = class_metrics(&cm, BehaviorClass::LoadOrthogonal);
        assert_eq!(m_lor.tp, 16);
        assert_eq!(m_lor.fn_, 66);
        assert!((m_lor.coverage - 16.0 / 82.0).abs() < 1e-12);
        assert_eq!(m_lor.accuracy, 1.0);
    }

    #[test]
    fn random_matrices_match_brute_force_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..50 {
            // generate predictions/labels, tally two ways
            let n = rng.gen_range(1..200);
            let pairs: Vec<(BehaviorClass, BehaviorClass)> = (0..n)
                .map(|_| {
                    (
                        BehaviorClass::from_index(rng.gen_range(0..6)).unwrap(),
                        BehaviorClass::from_index(rng.gen_range(0..6)).unwrap(),
                    )
                })
                .collect();
            let mut cm = ConfusionMatrix::new();
            for &(p, a) in &pairs {
                cm.record(p, a);
            }
            assert_eq!(cm.total(), n);
            for c in BehaviorClass::ALL {
                let m = class_metrics(&cm, c);
                let tp = pairs.iter().filter(|(p, a)| *p == c && *a == c).count();
                let fp = pairs.iter().filter(|(p, a)| *p == c && *a != c).count();
                let fn_ = pairs.iter().filter(|(p, a)| *p != c && *a == c).count();
                assert_eq!((m.tp, m.fp, m.fn_), (tp, fp, fn_));
                let a_expect = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                assert_eq!(m.accuracy, a_expect);
            }
            let correct = pairs.iter().filter(|(p, a)| p == a).count();
            let report = report_all(&cm).unwrap();
            assert_eq!(report.overall_accuracy, correct as f64 / n as f64);
        }
    }

    #[test]
    fn harmonic_mean_between_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        for _ in 0..200 {
            let mut counts = [[0usize; 6]; 6];
            for row in counts.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.gen_range(0..20);
                }
            }
            let cm = ConfusionMatrix::from_counts(counts);
            for c in BehaviorClass::ALL {
                let m = class_metrics(&cm, c);
                if m.accuracy > 0.0 && m.coverage > 0.0 {
                    let lo = m.accuracy.min(m.coverage);
                    let hi = m.accuracy.max(m.coverage);
                    assert!(m.harmonic_mean >= lo - 1e-12 && m.harmonic_mean <= hi + 1e-12);
                }
            }
        }
    }
}
