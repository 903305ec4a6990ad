//! Fault detection for rotating machinery from vibration time series.
//!
//! The toolkit converts labeled vibration windows into 28x28 grayscale
//! "faceportraits" (six transforms), balances scarce failure classes by
//! training one GAN per class, trains a CNN classifier on the balanced
//! set, and scores the result with SSIM statistics and confusion-matrix
//! indices.
//!
//! Batch operations (portrait generation, all-pairs SSIM, the matrix
//! kernels inside training) run data-parallel on rayon when the default
//! `parallel` feature is enabled, and fall back to sequential loops when
//! it is disabled. Both paths produce bit-identical results: parallel
//! work is partitioned over disjoint outputs and every per-element
//! reduction keeps a fixed order.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod portrait;
pub mod tensor;

/// Derive a child seed from a base seed and a component tag, so each
/// stochastic component gets an independent, reproducible stream.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&base.to_le_bytes());
    eat(tag.as_bytes());
    eat(&index.to_le_bytes());
    h
}

#[cfg(any(test, feature = "testutil"))]
pub mod testutil;

pub use error::{Error, Result};
pub use tensor::Tensor;
