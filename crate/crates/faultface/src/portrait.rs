//! Six transforms from a normalized 784-sample window to a 28x28 8-bit
//! grayscale faceportrait: CWT with a generalized Morse wavelet, a Haar
//! scalogram, direct row-major packing (CMR), and Toeplitz, Hankel, and
//! Gram structured matrices.
//!
//! Every transform exposes its pre-quantization 28x28 matrix so the
//! structural properties (constant diagonals, constant antidiagonals,
//! symmetry, positive semidefiniteness) can be asserted without the
//! 8-bit rounding in the way. All functions are pure; batches map
//! window-parallel.

use std::fmt;

use crate::dataset::{BehaviorClass, Window, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::fft::{fft, ifft, Complex};
use crate::par;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

/// FFT length for the Morse pipeline: 784 zero-padded to the next power
/// of two.
pub const FFT_LEN: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PortraitKind {
    CwtMorse,
    Haar,
    Cmr,
    Toeplitz,
    Hankel,
    Gram,
}

impl PortraitKind {
    pub const ALL: [PortraitKind; 6] = [
        PortraitKind::CwtMorse,
        PortraitKind::Haar,
        PortraitKind::Cmr,
        PortraitKind::Toeplitz,
        PortraitKind::Hankel,
        PortraitKind::Gram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PortraitKind::CwtMorse => "cwt",
            PortraitKind::Haar => "haar",
            PortraitKind::Cmr => "cmr",
            PortraitKind::Toeplitz => "toeplitz",
            PortraitKind::Hankel => "hankel",
            PortraitKind::Gram => "gram",
        }
    }

    pub fn parse(s: &str) -> Option<PortraitKind> {
        let lower = s.to_ascii_lowercase();
        Self::ALL.iter().copied().find(|k| k.name() == lower)
    }
}

impl fmt::Display for PortraitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A 28x28 8-bit grayscale image with its provenance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Portrait {
    pixels: Vec<u8>,
    pub kind: PortraitKind,
    pub label: BehaviorClass,
    pub source_id: String,
}

impl Portrait {
    pub fn new(
        pixels: Vec<u8>,
        kind: PortraitKind,
        label: BehaviorClass,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if pixels.len() != PIXELS {
            return Err(Error::Shape(format!(
                "portrait wants {} pixels, got {}",
                PIXELS,
                pixels.len()
            )));
        }
        Ok(Portrait {
            pixels,
            kind,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * SIDE + col]
    }
}

/// Generalized Morse wavelet parameters. The defaults (gamma 3, beta 20)
/// are the conventional choice and are echoed into run reports.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MorseParams {
    pub gamma: f64,
    pub beta: f64,
}

impl Default for MorseParams {
    fn default() -> Self {
        MorseParams {
            gamma: 3.0,
            beta: 20.0,
        }
    }
}

fn check_window_len(norm: &[f64]) -> Result<()> {
    if norm.len() != WINDOW_LEN {
        return Err(Error::Shape(format!(
            "normalized window wants {} samples, got {}",
            WINDOW_LEN,
            norm.len()
        )));
    }
    Ok(())
}

fn check_finite(matrix: &[f64], context: &str) -> Result<()> {
    for (i, v) in matrix.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: context.into(),
                index: i,
            });
        }
    }
    Ok(())
}

/// Min-max rescale a real matrix to [0,1], multiply by 255, round
/// half-up. A constant matrix maps to mid-gray 128.
pub fn quantize_to_gray(matrix: &[f64]) -> Result<Vec<u8>> {
    check_finite(matrix, "quantize input")?;
    let min = matrix.iter().copied().fold(f64::INFINITY, f64::min);
    let max = matrix.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![128u8; matrix.len()]);
    }
    let span = max - min;
    Ok(matrix
        .iter()
        .map(|&v| (255.0 * (v - min) / span).round() as u8)
        .collect())
}

// ---------------------------------------------------------------------
// CMR
// ---------------------------------------------------------------------

/// Row-major sample-to-pixel packing: pixel (r,c) = round(255 * norm[28r+c]).
pub fn cmr_portrait(norm: &[f64], label: BehaviorClass, source_id: &str) -> Result<Portrait> {
    check_window_len(norm)?;
    check_finite(norm, "cmr input")?;
    let pixels = norm.iter().map(|&v| (255.0 * v).round() as u8).collect();
    Portrait::new(pixels, PortraitKind::Cmr, label, source_id)
}

// ---------------------------------------------------------------------
// Toeplitz
// ---------------------------------------------------------------------

/// 28 generator values: contiguous means of 28 samples each.
pub fn toeplitz_generators(norm: &[f64]) -> Result<Vec<f64>> {
    check_window_len(norm)?;
    Ok((0..SIDE)
        .map(|i| norm[i * SIDE..(i + 1) * SIDE].iter().sum::<f64>() / SIDE as f64)
        .collect())
}

/// Pre-quantization Toeplitz matrix: T[i][j] = c[|i-j|].
pub fn toeplitz_matrix(norm: &[f64]) -> Result<Vec<f64>> {
    let c = toeplitz_generators(norm)?;
    let mut t = vec![0.0; PIXELS];
    for i in 0..SIDE {
        for j in 0..SIDE {
            t[i * SIDE + j] = c[i.abs_diff(j)];
        }
    }
    Ok(t)
}

pub fn toeplitz_portrait(norm: &[f64], label: BehaviorClass, source_id: &str) -> Result<Portrait> {
    let t = toeplitz_matrix(norm)?;
    Portrait::new(quantize_to_gray(&t)?, PortraitKind::Toeplitz, label, source_id)
}

// ---------------------------------------------------------------------
// Hankel
// ---------------------------------------------------------------------

/// 55 antidiagonal generators: 54 pools of 14 samples, then one pool of
/// the final 28, covering all 784 samples. The wide pool averages its
/// two 14-sample halves so a constant window stays bit-for-bit constant
/// across all generators.
pub fn hankel_generators(norm: &[f64]) -> Result<Vec<f64>> {
    check_window_len(norm)?;
    let pool14 = |start: usize| norm[start..start + 14].iter().sum::<f64>() / 14.0;
    let mut h = Vec::with_capacity(2 * SIDE - 1);
    for i in 0..54 {
        h.push(pool14(i * 14));
    }
    h.push((pool14(756) + pool14(770)) / 2.0);
    Ok(h)
}

/// Pre-quantization Hankel matrix: H[i][j] = h[i+j].
pub fn hankel_matrix(norm: &[f64]) -> Result<Vec<f64>> {
    let h = hankel_generators(norm)?;
    let mut m = vec![0.0; PIXELS];
    for i in 0..SIDE {
        for j in 0..SIDE {
            m[i * SIDE + j] = h[i + j];
        }
    }
    Ok(m)
}

pub fn hankel_portrait(norm: &[f64], label: BehaviorClass, source_id: &str) -> Result<Portrait> {
    let m = hankel_matrix(norm)?;
    Portrait::new(quantize_to_gray(&m)?, PortraitKind::Hankel, label, source_id)
}

// ---------------------------------------------------------------------
// Gram
// ---------------------------------------------------------------------

/// Pre-quantization Gram matrix G = A^T A where column k of A is the
/// contiguous segment norm[28k..28k+28].
pub fn gram_matrix(norm: &[f64]) -> Result<Vec<f64>> {
    check_window_len(norm)?;
    let mut g = vec![0.0; PIXELS];
    for i in 0..SIDE {
        let col_i = &norm[i * SIDE..(i + 1) * SIDE];
        for j in 0..SIDE {
            let col_j = &norm[j * SIDE..(j + 1) * SIDE];
            let mut acc = 0.0;
            for r in 0..SIDE {
                acc += col_i[r] * col_j[r];
            }
            g[i * SIDE + j] = acc;
        }
    }
    Ok(g)
}

pub fn gram_portrait(norm: &[f64], label: BehaviorClass, source_id: &str) -> Result<Portrait> {
    let g = gram_matrix(norm)?;
    Portrait::new(quantize_to_gray(&g)?, PortraitKind::Gram, label, source_id)
}

// ---------------------------------------------------------------------
// Morse CWT scalogram
// ---------------------------------------------------------------------

/// Normalized center frequencies (cycles/sample) of the 28 scales,
/// log-spaced from 4 cycles per window up to 0.4, coarse scale first.
pub fn morse_center_freqs_normalized() -> [f64; SIDE] {
    let f_min = 4.0 / WINDOW_LEN as f64;
    let f_max = 0.4;
    let ratio = f_max / f_min;
    let mut out = [0.0; SIDE];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f_min * ratio.powf(i as f64 / (SIDE - 1) as f64);
    }
    out
}

/// Center frequencies in Hz for a given sample rate, row order matching
/// the scalogram (coarse/low-frequency row first).
pub fn morse_center_freqs_hz(sample_rate: f64) -> Result<[f64; SIDE]> {
    if !(sample_rate > 0.0) {
        return Err(Error::Shape(format!(
            "sample rate must be positive, got {}",
            sample_rate
        )));
    }
    let mut out = morse_center_freqs_normalized();
    for v in out.iter_mut() {
        *v *= sample_rate;
    }
    Ok(out)
}

/// Peak angular frequency of the Morse mother wavelet (rad/sample scale 1).
pub fn morse_peak_omega(p: &MorseParams) -> f64 {
    (p.beta / p.gamma).powf(1.0 / p.gamma)
}

/// Frequency-domain Morse wavelet, peak-normalized to 2, evaluated at
/// angular frequency `omega` (one-sided: zero for omega <= 0).
pub fn morse_filter(p: &MorseParams, omega: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let ln_a = std::f64::consts::LN_2 + (p.beta / p.gamma) * (1.0 + p.gamma.ln() - p.beta.ln());
    (ln_a + p.beta * omega.ln() - omega.powf(p.gamma)).exp()
}

/// Magnitude scalogram of the Morse CWT: 28 scales x 784 time samples.
/// The window is zero-padded to 1024, filtered per scale in the
/// frequency domain, and cropped back to the valid 784 columns.
pub fn morse_scalogram(norm: &[f64], p: &MorseParams) -> Result<Vec<f64>> {
    check_window_len(norm)?;
    check_finite(norm, "morse input")?;
    let mut spectrum = vec![Complex::ZERO; FFT_LEN];
    for (i, &v) in norm.iter().enumerate() {
        spectrum[i] = Complex::new(v, 0.0);
    }
    fft(&mut spectrum)?;

    let omega_p = morse_peak_omega(p);
    let freqs = morse_center_freqs_normalized();
    let mut rows = vec![0.0; SIDE * WINDOW_LEN];
    for (row, &f_c) in freqs.iter().enumerate() {
        let scale = omega_p / (2.0 * std::f64::consts::PI * f_c);
        let mut band = vec![Complex::ZERO; FFT_LEN];
        // Analytic wavelet: only nonnegative-frequency bins respond.
        for (k, slot) in band.iter_mut().enumerate().take(FFT_LEN / 2 + 1) {
            let omega = 2.0 * std::f64::consts::PI * k as f64 / FFT_LEN as f64;
            *slot = spectrum[k].scale(morse_filter(p, scale * omega));
        }
        ifft(&mut band)?;
        for t in 0..WINDOW_LEN {
            rows[row * WINDOW_LEN + t] = band[t].abs();
        }
    }
    Ok(rows)
}

/// Mean-pool the 784 time columns of a 28x784 scalogram down to 28.
pub fn pool_columns(rows: &[f64]) -> Vec<f64> {
    debug_assert_eq!(rows.len(), SIDE * WINDOW_LEN);
    let mut out = vec![0.0; PIXELS];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let start = r * WINDOW_LEN + c * SIDE;
            out[r * SIDE + c] = rows[start..start + SIDE].iter().sum::<f64>() / SIDE as f64;
        }
    }
    out
}

/// Pre-quantization pooled Morse matrix (28x28).
pub fn morse_matrix(norm: &[f64], p: &MorseParams) -> Result<Vec<f64>> {
    Ok(pool_columns(&morse_scalogram(norm, p)?))
}

pub fn cwt_morse_portrait(
    norm: &[f64],
    sample_rate: f64,
    p: &MorseParams,
    label: BehaviorClass,
    source_id: &str,
) -> Result<Portrait> {
    if !(sample_rate > 0.0) {
        return Err(Error::Shape(format!(
            "sample rate must be positive, got {}",
            sample_rate
        )));
    }
    let m = morse_matrix(norm, p)?;
    Portrait::new(quantize_to_gray(&m)?, PortraitKind::CwtMorse, label, source_id)
}

// ---------------------------------------------------------------------
// Haar scalogram
// ---------------------------------------------------------------------

/// 28 even Haar support widths, geometrically spaced from 784 down to 2
/// (coarse row first).
pub fn haar_widths() -> [usize; SIDE] {
    let mut out = [0usize; SIDE];
    for (i, slot) in out.iter_mut().enumerate() {
        // Geometric ladder 2..784, then reversed so row 0 is the widest.
        let j = (SIDE - 1 - i) as f64 / (SIDE - 1) as f64;
        let raw = 2.0 * (WINDOW_LEN as f64 / 2.0).powf(j);
        let half = (raw / 2.0).round().max(1.0) as usize;
        *slot = (half * 2).min(WINDOW_LEN);
    }
    out
}

/// Magnitude Haar scalogram: 28 widths x 784 positions, circular over
/// the window. Response at position t for width w is
/// (sum of the w/2 samples before t minus the w/2 samples from t) / sqrt(w);
/// factoring out the tap amplitude keeps the response exactly zero on
/// constant inputs.
pub fn haar_scalogram(norm: &[f64]) -> Result<Vec<f64>> {
    check_window_len(norm)?;
    check_finite(norm, "haar input")?;
    let widths = haar_widths();
    let mut rows = vec![0.0; SIDE * WINDOW_LEN];
    for (row, &w) in widths.iter().enumerate() {
        let half = w / 2;
        let amp = 1.0 / (w as f64).sqrt();
        for t in 0..WINDOW_LEN {
            let mut s1 = 0.0;
            for k in 0..half {
                s1 += norm[(t + WINDOW_LEN - half + k) % WINDOW_LEN];
            }
            let mut s2 = 0.0;
            for k in 0..half {
                s2 += norm[(t + k) % WINDOW_LEN];
            }
            rows[row * WINDOW_LEN + t] = ((s1 - s2) * amp).abs();
        }
    }
    Ok(rows)
}

/// Pre-quantization pooled Haar matrix (28x28).
pub fn haar_matrix(norm: &[f64]) -> Result<Vec<f64>> {
    Ok(pool_columns(&haar_scalogram(norm)?))
}

pub fn haar_portrait(norm: &[f64], label: BehaviorClass, source_id: &str) -> Result<Portrait> {
    let m = haar_matrix(norm)?;
    Portrait::new(quantize_to_gray(&m)?, PortraitKind::Haar, label, source_id)
}

// ---------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------

/// Normalize a window and render it with the requested transform,
/// carrying label and source id through.
pub fn make_portrait(
    kind: PortraitKind,
    window: &Window,
    sample_rate: f64,
    morse: &MorseParams,
) -> Result<Portrait> {
    let norm = crate::dataset::normalize_window(window)?;
    let label = window.label;
    let id = window.source_id.as_str();
    match kind {
        PortraitKind::Cmr => cmr_portrait(&norm, label, id),
        PortraitKind::Toeplitz => toeplitz_portrait(&norm, label, id),
        PortraitKind::Hankel => hankel_portrait(&norm, label, id),
        PortraitKind::Gram => gram_portrait(&norm, label, id),
        PortraitKind::CwtMorse => cwt_morse_portrait(&norm, sample_rate, morse, label, id),
        PortraitKind::Haar => haar_portrait(&norm, label, id),
    }
}

/// Window-parallel batch rendering. `sample_rates[i]` belongs to
/// `windows[i]`; the first failing window (by index) reports the error.
pub fn make_portraits(
    kind: PortraitKind,
    windows: &[Window],
    sample_rates: &[f64],
    morse: &MorseParams,
) -> Result<Vec<Portrait>> {
    assert_eq!(windows.len(), sample_rates.len());
    let results = par::map_indexed(windows, |i, w| make_portrait(kind, w, sample_rates[i], morse));
    results.into_iter().collect()
}

/// Sequential variant for the bench suite.
pub fn make_portraits_seq(
    kind: PortraitKind,
    windows: &[Window],
    sample_rates: &[f64],
    morse: &MorseParams,
) -> Result<Vec<Portrait>> {
    assert_eq!(windows.len(), sample_rates.len());
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| make_portrait(kind, w, sample_rates[i], morse))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::BehaviorClass as BC;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seeded_norm(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..WINDOW_LEN).map(|_| rng.gen_range(-3.0..3.0)).collect();
        crate::dataset::normalize_values(&raw).unwrap()
    }

    #[test]
    fn quantize_constant_is_mid_gray() {
        let q = quantize_to_gray(&vec![5.0; PIXELS]).unwrap();
        assert!(q.iter().all(|&p| p == 128));
    }

    #[test]
    fn quantize_endpoints() {
        let mut m = vec![0.5; PIXELS];
        m[0] = 0.0;
        m[1] = 1.0;
        let q = quantize_to_gray(&m).unwrap();
        assert_eq!(q[0], 0);
        assert_eq!(q[1], 255);
    }

    #[test]
    fn quantize_matches_elementwise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m: Vec<f64> = (0..PIXELS).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let q = quantize_to_gray(&m).unwrap();
        let min = m.iter().copied().fold(f64::INFINITY, f64::min);
        let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, &v) in m.iter().enumerate() {
            let expect = (255.0 * (v - min) / (max - min)).round() as u8;
            assert_eq!(q[i], expect);
        }
    }

    #[test]
    fn quantize_rejects_nan() {
        let mut m = vec![0.0; PIXELS];
        m[77] = f64::NAN;
        let err = quantize_to_gray(&m).unwrap_err();
        assert!(err.to_string().contains("77"));
    }

    #[test]
    fn cmr_zeros_black() {
        let p = cmr_portrait(&vec![0.0; WINDOW_LEN], BC::Nominal, "z").unwrap();
        assert!(p.pixels().iter().all(|&v| v == 0));
    }

    #[test]
    fn cmr_unit_impulse() {
        let mut norm = vec![0.0; WINDOW_LEN];
        norm[0] = 1.0;
        let p = cmr_portrait(&norm, BC::Nominal, "i").unwrap();
        assert_eq!(p.get(0, 0), 255);
        assert_eq!(p.pixels().iter().map(|&v| v as u32).sum::<u32>(), 255);
    }

    #[test]
    fn cmr_matches_direct_formula() {
        let norm = seeded_norm(3);
        let p = cmr_portrait(&norm, BC::Ball, "s").unwrap();
        for r in 0..SIDE {
            for c in 0..SIDE {
                let expect = (255.0 * norm[r * SIDE + c]).round() as u8;
                assert_eq!(p.get(r, c), expect);
            }
        }
    }

    #[test]
    fn cmr_rejects_wrong_length() {
        assert!(cmr_portrait(&vec![0.0; 100], BC::Nominal, "x").is_err());
    }

    #[test]
    fn toeplitz_constant_input() {
        let p = toeplitz_portrait(&vec![0.25; WINDOW_LEN], BC::Ball, "c").unwrap();
        assert!(p.pixels().iter().all(|&v| v == 128));
    }

    #[test]
    fn toeplitz_impulse_generators() {
        // First pooled block all ones -> c = (1, 0, ..., 0) -> identity pattern.
        let mut norm = vec![0.0; WINDOW_LEN];
        for v in norm.iter_mut().take(SIDE) {
            *v = 1.0;
        }
        let t = toeplitz_matrix(&norm).unwrap();
        for i in 0..SIDE {
            for j in 0..SIDE {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(t[i * SIDE + j], expect);
            }
        }
        let p = toeplitz_portrait(&norm, BC::Ball, "i").unwrap();
        for i in 0..SIDE {
            for j in 0..SIDE {
                assert_eq!(p.get(i, j), if i == j { 255 } else { 0 });
            }
        }
    }

    #[test]
    fn toeplitz_structure() {
        let t = toeplitz_matrix(&seeded_norm(11)).unwrap();
        for i in 0..SIDE {
            for j in 0..SIDE {
                assert_eq!(t[i * SIDE + j], t[j * SIDE + i]);
                if i + 1 < SIDE && j + 1 < SIDE {
                    assert_eq!(t[i * SIDE + j], t[(i + 1) * SIDE + j + 1]);
                }
            }
        }
    }

    #[test]
    fn hankel_constant_input() {
        let p = hankel_portrait(&vec![0.9; WINDOW_LEN], BC::InnerRace, "c").unwrap();
        assert!(p.pixels().iter().all(|&v| v == 128));
    }

    #[test]
    fn hankel_antidiagonal_structure() {
        let h = hankel_matrix(&seeded_norm(13)).unwrap();
        for i in 1..SIDE {
            for j in 0..SIDE - 1 {
                assert_eq!(h[i * SIDE + j], h[(i - 1) * SIDE + j + 1]);
            }
        }
    }

    #[test]
    fn hankel_matches_generator_oracle() {
        let norm = seeded_norm(17);
        let h = hankel_matrix(&norm).unwrap();
        let gens = hankel_generators(&norm).unwrap();
        assert_eq!(gens.len(), 55);
        for i in 0..SIDE {
            for j in 0..SIDE {
                assert_eq!(h[i * SIDE + j], gens[i + j]);
            }
        }
        // generators cover all 784 samples exactly once
        let total: f64 = gens[..54].iter().map(|v| v * 14.0).sum::<f64>() + gens[54] * 28.0;
        let direct: f64 = norm.iter().sum();
        assert!((total - direct).abs() < 1e-9);
    }

    #[test]
    fn gram_zeros_degenerate() {
        let p = gram_portrait(&vec![0.0; WINDOW_LEN], BC::LoadCenter, "z").unwrap();
        assert!(p.pixels().iter().all(|&v| v == 128));
    }

    #[test]
    fn gram_one_hot_identity() {
        let mut norm = vec![0.0; WINDOW_LEN];
        for k in 0..SIDE {
            norm[SIDE * k + k] = 1.0;
        }
        let g = gram_matrix(&norm).unwrap();
        for i in 0..SIDE {
            for j in 0..SIDE {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(g[i * SIDE + j], expect);
            }
        }
    }

    #[test]
    fn gram_symmetric_psd() {
        let g = gram_matrix(&seeded_norm(19)).unwrap();
        for i in 0..SIDE {
            for j in 0..SIDE {
                assert_eq!(g[i * SIDE + j], g[j * SIDE + i]);
            }
        }
        let eigs = crate::testutil::symmetric_eigenvalues(&g, SIDE);
        assert!(eigs.iter().all(|&e| e >= -1e-9), "eigs {:?}", eigs);
    }

    #[test]
    fn morse_zero_input_mid_gray() {
        let p = cwt_morse_portrait(
            &vec![0.0; WINDOW_LEN],
            12_000.0,
            &MorseParams::default(),
            BC::Nominal,
            "z",
        )
        .unwrap();
        assert!(p.pixels().iter().all(|&v| v == 128));
    }

    #[test]
    fn morse_filter_peaks_at_two() {
        let p = MorseParams::default();
        let peak = morse_peak_omega(&p);
        let at_peak = morse_filter(&p, peak);
        assert!((at_peak - 2.0).abs() < 1e-12);
        assert!(morse_filter(&p, peak * 0.7) < at_peak);
        assert!(morse_filter(&p, peak * 1.4) < at_peak);
        assert_eq!(morse_filter(&p, 0.0), 0.0);
        assert_eq!(morse_filter(&p, -1.0), 0.0);
    }

    #[test]
    fn morse_tone_lights_nearest_scale() {
        let freqs = morse_center_freqs_normalized();
        let target_row = 14;
        let tone: Vec<f64> = (0..WINDOW_LEN)
            .map(|t| (2.0 * std::f64::consts::PI * freqs[target_row] * t as f64).sin())
            .collect();
        let norm = crate::dataset::normalize_values(&tone).unwrap();
        let rows = morse_scalogram(&norm, &MorseParams::default()).unwrap();
        let energies: Vec<f64> = (0..SIDE)
            .map(|r| rows[r * WINDOW_LEN..(r + 1) * WINDOW_LEN].iter().map(|v| v * v).sum())
            .collect();
        let argmax = energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, target_row, "energies {:?}", energies);
    }

    #[test]
    fn morse_rows_coarse_to_fine() {
        let f = morse_center_freqs_normalized();
        assert!(f.windows(2).all(|w| w[0] < w[1]));
        assert!((f[0] - 4.0 / 784.0).abs() < 1e-12);
        assert!((f[27] - 0.4).abs() < 1e-12);
        let hz = morse_center_freqs_hz(12_000.0).unwrap();
        assert!((hz[27] - 4800.0).abs() < 1e-9);
        assert!(morse_center_freqs_hz(0.0).is_err());
    }

    #[test]
    fn haar_zero_and_constant_inputs() {
        let z = haar_portrait(&vec![0.0; WINDOW_LEN], BC::Nominal, "z").unwrap();
        assert!(z.pixels().iter().all(|&v| v == 128));
        let c = haar_matrix(&vec![0.37; WINDOW_LEN]).unwrap();
        assert!(c.iter().all(|&v| v == 0.0), "constant input must cancel exactly");
        let p = haar_portrait(&vec![0.37; WINDOW_LEN], BC::Nominal, "c").unwrap();
        assert!(p.pixels().iter().all(|&v| v == 128));
    }

    #[test]
    fn haar_widths_ladder() {
        let w = haar_widths();
        assert_eq!(w[0], WINDOW_LEN);
        assert_eq!(w[SIDE - 1], 2);
        assert!(w.iter().all(|&x| x % 2 == 0));
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn haar_step_peaks_at_coarsest_scale() {
        let mut step = vec![0.0; WINDOW_LEN];
        for v in step.iter_mut().skip(WINDOW_LEN / 2) {
            *v = 1.0;
        }
        let rows = haar_scalogram(&step).unwrap();
        let (mut best, mut best_row, mut best_col) = (f64::NEG_INFINITY, 0, 0);
        for r in 0..SIDE {
            for t in 0..WINDOW_LEN {
                let v = rows[r * WINDOW_LEN + t];
                if v > best {
                    best = v;
                    best_row = r;
                    best_col = t;
                }
            }
        }
        // Analytic peak: |r| = (w/2)/sqrt(w) = sqrt(w)/2 at the step, so the
        // widest wavelet wins; circularly the wrap discontinuity ties it.
        assert_eq!(best_row, 0);
        assert!((best - (WINDOW_LEN as f64).sqrt() / 2.0).abs() < 1e-9);
        let at_step = rows[best_row * WINDOW_LEN + WINDOW_LEN / 2];
        assert!((at_step - best).abs() < 1e-9, "col {} val {}", best_col, at_step);
    }

    #[test]
    fn make_portrait_dispatch_and_label_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let window = Window {
            values: (0..WINDOW_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            source_id: "rec7".into(),
            index: 0,
            label: BC::LoadOpposite,
        };
        let mut seen = std::collections::HashSet::new();
        for kind in PortraitKind::ALL {
            let p = make_portrait(kind, &window, 12_000.0, &MorseParams::default()).unwrap();
            assert_eq!(p.kind, kind);
            assert_eq!(p.label, BC::LoadOpposite);
            assert_eq!(p.source_id, "rec7");
            assert_eq!(p.pixels().len(), PIXELS);
            seen.insert(p.pixels().to_vec());
        }
        assert_eq!(seen.len(), 6, "all six kinds must render distinct portraits");
    }

    #[test]
    fn batch_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let windows: Vec<Window> = (0..12)
            .map(|i| Window {
                values: (0..WINDOW_LEN).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                source_id: format!("w{}", i),
                index: i,
                label: BC::Ball,
            })
            .collect();
        let rates = vec![12_000.0; windows.len()];
        let par = make_portraits(PortraitKind::Toeplitz, &windows, &rates, &MorseParams::default())
            .unwrap();
        let seq =
            make_portraits_seq(PortraitKind::Toeplitz, &windows, &rates, &MorseParams::default())
                .unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PortraitKind::ALL {
            assert_eq!(PortraitKind::parse(k.name()), Some(k));
        }
        assert_eq!(PortraitKind::parse("CWT"), Some(PortraitKind::CwtMorse));
        assert_eq!(PortraitKind::parse("nope"), None);
    }
}
