//! Butterworth band-pass design (second-order sections) and zero-phase filtering.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One biquad: `[b0, b1, b2, a0, a1, a2]` with `a0 == 1`.
pub type Section = [f64; 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPass {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub rate_hz: f64,
    pub sections: Vec<Section>,
}

impl BandPass {
    /// Digital Butterworth band-pass via analog prototype, LP->BP transform and
    /// the bilinear transform with pre-warped band edges.
    pub fn butterworth(order: usize, low_hz: f64, high_hz: f64, rate_hz: f64) -> Result<Self> {
        if order == 0 || !order.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "band-pass order must be even and positive, got {order}"
            )));
        }
        let nyq = rate_hz / 2.0;
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyq) {
            return Err(Error::InvalidArgument(format!(
                "band {low_hz}-{high_hz} Hz invalid at {rate_hz} Hz"
            )));
        }
        let fs2 = 2.0 * rate_hz;
        let w1 = fs2 * (PI * low_hz / rate_hz).tan();
        let w2 = fs2 * (PI * high_hz / rate_hz).tan();
        let bw = w2 - w1;
        let w0 = (w1 * w2).sqrt();

        let n = order as f64;
        let proto: Vec<Complex64> = (1..=order)
            .map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n - 1.0) / (2.0 * n)))
            .collect();

        let mut analog_poles = Vec::with_capacity(2 * order);
        for p in &proto {
            let a = p * (bw / 2.0);
            let disc = (a * a - w0 * w0).sqrt();
            analog_poles.push(a + disc);
            analog_poles.push(a - disc);
        }
        // zeros: `order` at s = 0 and `order` at infinity
        let k_analog = bw.powi(order as i32);
        let fs2c = Complex64::new(fs2, 0.0);
        let num: Complex64 = std::iter::repeat_n(fs2c, order).product();
        let den: Complex64 = analog_poles.iter().map(|p| fs2c - p).product();
        let gain = k_analog * (num / den).re;

        let digital: Vec<Complex64> = analog_poles.iter().map(|p| (fs2c + p) / (fs2c - p)).collect();
        let mut upper: Vec<Complex64> = digital.iter().copied().filter(|p| p.im > 0.0).collect();
        if upper.len() != order {
            return Err(Error::NonFinite("band-pass poles are not in conjugate pairs".into()));
        }
        upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.arg().total_cmp(&b.arg())));

        let sections = upper
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let g = if i == 0 { gain } else { 1.0 };
                // zeros at z = 1 and z = -1
                [g, 0.0, -g, 1.0, -2.0 * p.re, p.norm_sqr()]
            })
            .collect();
        Ok(BandPass {
            order,
            low_hz,
            high_hz,
            rate_hz,
            sections,
        })
    }

    /// Complex response of one forward pass at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| (s[0] + s[1] * z1 + s[2] * z2) / (s[3] + s[4] * z1 + s[5] * z2))
            .product()
    }

    /// Amplitude gain of the forward-backward (zero-phase) filter: `|H|^2`.
    pub fn zero_phase_gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm_sqr()
    }

    /// Forward-backward filtering with odd-extension padding and steady-state
    /// initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(x.len() - 1);
        let mut ext = Vec::with_capacity(x.len() + 2 * pad);
        let (first, last) = (x[0], x[x.len() - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[x.len() - 1 - i]));

        let zi = self.steady_state();
        let mut fwd = self.run(&ext, &zi, ext[0]);
        fwd.reverse();
        let mut back = self.run(&fwd, &zi, fwd[0]);
        back.reverse();
        back[pad..pad + x.len()].to_vec()
    }

    /// Per-section transposed direct-form-II states for a unit step.
    fn steady_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let dc = (s[0] + s[1] + s[2]) / (1.0 + s[4] + s[5]);
                let z2 = s[2] - s[5] * dc;
                let z1 = s[1] - s[4] * dc + z2;
                let out = [z1 * scale, z2 * scale];
                scale *= dc;
                out
            })
            .collect()
    }

    fn run(&self, x: &[f64], zi: &[[f64; 2]], x0: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        for (s, z0) in self.sections.iter().zip(zi) {
            let mut z = [z0[0] * x0, z0[1] * x0];
            for v in y.iter_mut() {
                let input = *v;
                let out = s[0] * input + z[0];
                z[0] = s[1] * input - s[4] * out + z[1];
                z[1] = s[2] * input - s[5] * out;
                *v = out;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analog Butterworth band-pass magnitude at the pre-warped frequency; the
    /// bilinear transform maps it exactly onto the digital response.
    fn analog_oracle(order: usize, lo: f64, hi: f64, fs: f64, f: f64) -> f64 {
        let warp = |x: f64| 2.0 * fs * (PI * x / fs).tan();
        let (w1, w2, w) = (warp(lo), warp(hi), warp(f));
        let ratio = (w * w - w1 * w2) / (w * (w2 - w1));
        1.0 / (1.0 + ratio.powi(2 * order as i32))
    }

    #[test]
    fn matches_analog_prototype() {
        let bp = BandPass::butterworth(4, 0.3, 75.0, 200.0).unwrap();
        assert_eq!(bp.sections.len(), 4);
        for f in [0.01, 0.05, 0.3, 1.0, 10.0, 50.0, 75.0, 90.0, 99.0] {
            let got = bp.response(f).norm_sqr();
            let want = analog_oracle(4, 0.3, 75.0, 200.0, f);
            assert!(
                (got - want).abs() < 1e-9 * want.max(1e-12) + 1e-12,
                "f={f}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn band_edges_and_stopbands() {
        let bp = BandPass::butterworth(4, 0.3, 75.0, 200.0).unwrap();
        // half amplitude at the edges after the forward and backward passes
        assert!((bp.zero_phase_gain(0.3) - 0.5).abs() < 1e-9);
        assert!((bp.zero_phase_gain(75.0) - 0.5).abs() < 1e-9);
        assert!((bp.zero_phase_gain(50.0) - 1.0).abs() < 0.05);
        assert!(20.0 * bp.zero_phase_gain(0.05).log10() <= -20.0);
    }

    #[test]
    fn filtfilt_is_zero_phase_on_a_sine() {
        let bp = BandPass::butterworth(4, 0.3, 75.0, 200.0).unwrap();
        let x: Vec<f64> = (0..4000).map(|i| (2.0 * PI * 10.0 * i as f64 / 200.0).sin()).collect();
        let y = bp.filtfilt(&x);
        // the 0.3 Hz edge rings for a few hundred samples at either end
        for i in 1600..2400 {
            assert!((y[i] - x[i]).abs() < 1e-3, "i={i}");
        }
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(BandPass::butterworth(3, 0.3, 75.0, 200.0).is_err());
        assert!(BandPass::butterworth(4, 0.3, 120.0, 200.0).is_err());
        assert!(BandPass::butterworth(4, 10.0, 5.0, 200.0).is_err());
    }
}
