//! Independent oracles shared by the test suites: a Jacobi eigensolver
//! for PSD checks and a naive O(N^2) DFT so the scalogram can be checked
//! against a direct time-domain convolution that never touches the FFT.

/// Eigenvalues of a symmetric n x n matrix (row-major) via cyclic Jacobi
/// rotations. Plenty for 28x28 Gram matrices.
pub fn symmetric_eigenvalues(matrix: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-18 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Naive inverse DFT of a one-sided real spectrum `h[k]` (k = 0..n/2
/// inclusive), returning the complex time-domain kernel. Used to build
/// wavelet taps without the FFT under test.
pub fn naive_kernel_from_spectrum(h: &[f64], n: usize) -> Vec<(f64, f64)> {
    assert_eq!(h.len(), n / 2 + 1);
    let mut taps = Vec::with_capacity(n);
    for t in 0..n {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let ang = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
            re += hk * ang.cos();
            im += hk * ang.sin();
        }
        taps.push((re / n as f64, im / n as f64));
    }
    taps
}

/// Naive circular convolution-by-spectrum: y[t] = sum_u x[u] k[(t-u) mod n],
/// evaluated entirely in the time domain.
pub fn naive_circular_filter(x: &[f64], kernel: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = x.len();
    assert_eq!(kernel.len(), n);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut re = 0.0;
        let mut im = 0.0;
        for (u, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let (kr, ki) = kernel[(t + n - u) % n];
            re += xv * kr;
            im += xv * ki;
        }
        out.push((re, im));
    }
    out
}
