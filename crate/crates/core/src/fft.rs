//! Radix-2 complex FFT for power-of-two lengths.
//!
//! Forward transform uses `e^{-2πi jk/n}` and no scaling; the inverse applies
//! `1/n`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{cis, is_power_of_two, C64};

fn bit_reverse(data: &mut [C64]) {
    let n = data.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
}

fn transform(data: &mut [C64], sign: f64) -> Result<()> {
    let n = data.len();
    if !is_power_of_two(n) {
        return Err(Error::NotPowerOfTwo(n));
    }
    bit_reverse(data);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles computed directly (no recurrence) to keep round-off flat.
        let twiddles: Vec<C64> = (0..half).map(|k| cis(sign * 2.0 * PI * k as f64 / len as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = data[start + k];
                let b = data[start + k + half] * twiddles[k];
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    Ok(())
}

pub fn forward(data: &mut [C64]) -> Result<()> {
    transform(data, -1.0)
}

pub fn inverse(data: &mut [C64]) -> Result<()> {
    transform(data, 1.0)?;
    let scale = 1.0 / data.len() as f64;
    for z in data.iter_mut() {
        *z *= scale;
    }
    Ok(())
}

/// Row-major 2-D transform of an `m x m` array.
pub fn forward_2d(data: &mut [C64], m: usize) -> Result<()> {
    apply_2d(data, m, forward)
}

pub fn inverse_2d(data: &mut [C64], m: usize) -> Result<()> {
    apply_2d(data, m, inverse)
}

fn apply_2d(data: &mut [C64], m: usize, f: fn(&mut [C64]) -> Result<()>) -> Result<()> {
    if data.len() != m * m {
        return Err(crate::error::invalid("2-D FFT buffer is not square"));
    }
    for row in data.chunks_mut(m) {
        f(row)?;
    }
    let mut col = alloc::vec![C64::new(0.0, 0.0); m];
    for c in 0..m {
        for r in 0..m {
            col[r] = data[r * m + c];
        }
        f(&mut col)?;
        for r in 0..m {
            data[r * m + c] = col[r];
        }
    }
    Ok(())
}

/// Signed frequency index of bin `k` in an `n`-point transform.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Linear (acyclic) convolution of two real sequences.
pub fn convolve_real(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut fa: Vec<C64> = (0..n).map(|i| C64::new(a.get(i).copied().unwrap_or(0.0), 0.0)).collect();
    let mut fb: Vec<C64> = (0..n).map(|i| C64::new(b.get(i).copied().unwrap_or(0.0), 0.0)).collect();
    forward(&mut fa)?;
    forward(&mut fb)?;
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inverse(&mut fa)?;
    Ok(fa[..out_len].iter().map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive_dft(x: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                (0..n).map(|j| x[j] * cis(-2.0 * PI * (j * k) as f64 / n as f64)).fold(C64::new(0.0, 0.0), |a, b| a + b)
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<C64> = (0..16).map(|i| C64::new((i as f64).sin(), (i * i) as f64 * 0.01)).collect();
        let mut y = x.clone();
        forward(&mut y).unwrap();
        for (a, b) in y.iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-12);
        }
        inverse(&mut y).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let mut x = vec![C64::new(0.0, 0.0); 12];
        assert_eq!(forward(&mut x), Err(Error::NotPowerOfTwo(12)));
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let a = [1.0, 2.0, -1.0, 0.5];
        let b = [0.25, -3.0, 2.0];
        let c = convolve_real(&a, &b).unwrap();
        for k in 0..c.len() {
            let mut d = 0.0;
            for i in 0..a.len() {
                if k >= i && k - i < b.len() {
                    d += a[i] * b[k - i];
                }
            }
            assert!((c[k] - d).abs() < 1e-12);
        }
    }
}
