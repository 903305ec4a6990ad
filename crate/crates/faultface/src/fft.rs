//! Iterative radix-2 FFT on interleaved complex f64, used by the Morse
//! scalogram. Lengths must be powers of two (the scalogram pads 784 to
//! 1024).

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn scale(self, s: f64) -> Complex {
        Complex {
            re: self.re * s,
            im: self.im * s,
        }
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

impl std::ops::Add for Complex {
    type Output = Complex;
    fn add(self, other: Complex) -> Complex {
        Complex {
            re: self.re + other.re,
            im: self.im + other.im,
        }
    }
}

impl std::ops::Sub for Complex {
    type Output = Complex;
    fn sub(self, other: Complex) -> Complex {
        Complex {
            re: self.re - other.re,
            im: self.im - other.im,
        }
    }
}

impl std::ops::Mul for Complex {
    type Output = Complex;
    fn mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }
}

fn bit_reverse_permute(buf: &mut [Complex]) {
    let n = buf.len();
    let shift = (n.leading_zeros() + 1) as u32;
    for i in 0..n {
        let j = i.reverse_bits() >> shift;
        if i < j {
            buf.swap(i, j);
        }
    }
}

fn fft_dir(buf: &mut [Complex], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Shape(format!("fft length {} is not a power of two", n)));
    }
    bit_reverse_permute(buf);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut m = 2;
    while m <= n {
        let step = sign * 2.0 * std::f64::consts::PI / m as f64;
        for start in (0..n).step_by(m) {
            for k in 0..m / 2 {
                let w = Complex::new((step * k as f64).cos(), (step * k as f64).sin());
                let e = buf[start + k];
                let o = w * buf[start + k + m / 2];
                buf[start + k] = e + o;
                buf[start + k + m / 2] = e - o;
            }
        }
        m <<= 1;
    }
    if inverse {
        let inv = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v = v.scale(inv);
        }
    }
    Ok(())
}

/// In-place forward FFT.
pub fn fft(buf: &mut [Complex]) -> Result<()> {
    fft_dir(buf, false)
}

/// In-place inverse FFT (normalized by 1/N).
pub fn ifft(buf: &mut [Complex]) -> Result<()> {
    fft_dir(buf, true)
}
