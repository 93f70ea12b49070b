//! Real-input magnitude spectra.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// `|X_k|` for `k = 0..=L/2` (unnormalized DFT).
pub fn magnitude_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf.into_iter().map(|c| c.norm()).collect()
}

/// Bin count of a length-`len` real spectrum.
pub fn num_bins(len: usize) -> usize {
    len / 2 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft() {
        let x: Vec<f64> = (0..12).map(|i| ((i * 5) % 7) as f64 - 2.5).collect();
        let mag = magnitude_spectrum(&x);
        assert_eq!(mag.len(), 7);
        for (k, m) in mag.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * n) as f64 / 12.0;
                re += v * a.cos();
                im += v * a.sin();
            }
            assert!((m - re.hypot(im)).abs() < 1e-10);
        }
    }
}
