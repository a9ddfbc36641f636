//! Rational-ratio down-sampling with a Blackman-windowed sinc kernel.
//!
//! The kernel doubles as the anti-alias low-pass. Weights are renormalized
//! per output sample, so DC passes exactly even near the edges.

use std::f64::consts::PI;

/// Cutoff as a fraction of the output Nyquist frequency.
const CUTOFF_FRACTION: f64 = 0.9;
/// Kernel half-width in output-sample periods.
const HALF_WIDTH: f64 = 16.0;

/// Precomputed interpolation weights, shared across channels.
pub(crate) struct Resampler {
    taps: Vec<(usize, Vec<f64>)>,
}

impl Resampler {
    /// `step` is input samples per output sample (> 1).
    pub(crate) fn new(input_len: usize, output_len: usize, step: f64) -> Self {
        let fc = 0.5 * CUTOFF_FRACTION / step;
        let half = HALF_WIDTH * step;
        let taps = (0..output_len)
            .map(|m| {
                let center = m as f64 * step;
                let first = (center - half).ceil().max(0.0) as usize;
                let last = ((center + half).floor() as usize).min(input_len - 1);
                let mut weights: Vec<f64> = (first..=last)
                    .map(|k| {
                        let t = k as f64 - center;
                        let x = 2.0 * fc * t;
                        let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                        let u = t / half;
                        let window = 0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos();
                        sinc * window
                    })
                    .collect();
                let sum: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= sum);
                (first, weights)
            })
            .collect();
        Resampler { taps }
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.taps
            .iter()
            .map(|(first, w)| w.iter().zip(&x[*first..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}
