//! Butterworth band-pass design in second-order sections and zero-phase
//! forward-backward filtering.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One biquad `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos(pub Vec<Biquad>);

impl Sos {
    /// Complex frequency response at `freq` Hz.
    pub fn response(&self, freq: f64, rate: f64) -> Complex64 {
        let omega = 2.0 * PI * freq / rate;
        self.0.iter().map(|s| s.response(omega)).product()
    }

    /// Direct-form-II-transposed filtering with initial state `zi`.
    fn filter_in_place(&self, x: &mut [f64], zi: &[[f64; 2]]) {
        for (sec, z0) in self.0.iter().zip(zi) {
            let [b0, b1, b2] = sec.b;
            let [a1, a2] = sec.a;
            let (mut z1, mut z2) = (z0[0], z0[1]);
            for v in x.iter_mut() {
                let input = *v;
                let y = b0 * input + z1;
                z1 = b1 * input - a1 * y + z2;
                z2 = b2 * input - a2 * y;
                *v = y;
            }
        }
    }

    /// Steady-state section states for a constant input `u`.
    fn steady_state(&self, u: f64) -> Vec<[f64; 2]> {
        let mut input = u;
        self.0
            .iter()
            .map(|s| {
                let y = s.dc_gain() * input;
                let z1 = y - s.b[0] * input;
                let z2 = s.b[2] * input - s.a[1] * y;
                input = y;
                [z1, z2]
            })
            .collect()
    }

    /// Zero-phase filtering: odd-reflection padding of `padlen` samples at
    /// each end, steady-state initial conditions, forward then backward pass.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = padlen.min(n.saturating_sub(1));
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let zi = self.steady_state(ext[0]);
        self.filter_in_place(&mut ext, &zi);
        ext.reverse();
        let zi = self.steady_state(ext[0]);
        self.filter_in_place(&mut ext, &zi);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

fn bilinear(s: Complex64, rate: f64) -> Complex64 {
    let k = 2.0 * rate;
    (k + s) / (k - s)
}

fn butterworth_prototype(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Butterworth band-pass with an `order`-pole low-pass prototype (so
/// `order` biquads), unit gain at the geometric band center.
pub fn butter_bandpass(order: usize, lo: f64, hi: f64, rate: f64) -> Result<Sos> {
    if order == 0 || !(lo > 0.0 && lo < hi && hi < rate / 2.0) {
        return Err(Error::Parameter(format!(
            "band-pass needs 0 < lo < hi < rate/2, got lo={lo} hi={hi} rate={rate}"
        )));
    }
    let warp = |f: f64| 2.0 * rate * (PI * f / rate).tan();
    let (wl, wh) = (warp(lo), warp(hi));
    let bw = wh - wl;
    let w0_sq = wl * wh;
    let mut upper = Vec::with_capacity(order);
    for p in butterworth_prototype(order) {
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
            let z = bilinear(s, rate);
            if z.im > 0.0 {
                upper.push(z);
            }
        }
    }
    if upper.len() != order {
        return Err(Error::Numeric("band-pass pole pairing failed".into()));
    }
    upper.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    let omega0 = 2.0 * (w0_sq.sqrt() / (2.0 * rate)).atan();
    let sections = upper
        .into_iter()
        .map(|z| {
            let mut sec = Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-2.0 * z.re, z.norm_sqr()],
            };
            let g = 1.0 / sec.response(omega0).norm();
            sec.b = [g, 0.0, -g];
            sec
        })
        .collect();
    Ok(Sos(sections))
}

/// Butterworth low-pass with `order` poles (`order` even).
pub fn butter_lowpass(order: usize, cutoff: f64, rate: f64) -> Result<Sos> {
    if order == 0 || order % 2 != 0 || !(cutoff > 0.0 && cutoff < rate / 2.0) {
        return Err(Error::Parameter(format!(
            "low-pass needs even order and 0 < cutoff < rate/2, got order={order} cutoff={cutoff}"
        )));
    }
    let wc = 2.0 * rate * (PI * cutoff / rate).tan();
    let sections = butterworth_prototype(order)
        .into_iter()
        .filter(|p| p.im > 0.0)
        .map(|p| {
            let z = bilinear(p * wc, rate);
            let mut sec = Biquad {
                b: [1.0, 2.0, 1.0],
                a: [-2.0 * z.re, z.norm_sqr()],
            };
            let g = 1.0 / sec.dc_gain();
            sec.b = [g, 2.0 * g, g];
            sec
        })
        .collect();
    Ok(Sos(sections))
}
