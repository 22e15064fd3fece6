//! Rational polyphase resampling with a Kaiser-windowed sinc anti-aliasing filter.

use std::f64::consts::PI;

pub const KAISER_BETA: f64 = 8.6;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

pub fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|i| {
            let r = 2.0 * i as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Resampler {
    pub up: usize,
    pub down: usize,
    taps: Vec<f64>,
    half_len: usize,
}

impl Resampler {
    pub fn new(from_hz: u32, to_hz: u32, beta: f64) -> Self {
        let g = gcd(u64::from(from_hz), u64::from(to_hz)).max(1);
        let up = (u64::from(to_hz) / g) as usize;
        let down = (u64::from(from_hz) / g) as usize;
        let max_rate = up.max(down);
        let half_len = 10 * max_rate;
        let len = 2 * half_len + 1;
        let cutoff = 1.0 / max_rate as f64;
        let window = kaiser(len, beta);
        let mut taps: Vec<f64> = (0..len)
            .map(|i| {
                let t = i as f64 - half_len as f64;
                let arg = PI * cutoff * t;
                let sinc = if t == 0.0 { 1.0 } else { arg.sin() / arg };
                sinc * window[i]
            })
            .collect();
        let dc: f64 = taps.iter().sum();
        for t in taps.iter_mut() {
            *t *= up as f64 / dc;
        }
        Resampler {
            up,
            down,
            taps,
            half_len,
        }
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        // nearest output length keeps the duration within half an output sample
        (input_len * self.up + self.down / 2) / self.down
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.up == 1 && self.down == 1 {
            return x.to_vec();
        }
        let n_out = self.output_len(x.len());
        let up = self.up;
        let mut y = Vec::with_capacity(n_out);
        for k in 0..n_out {
            // position in the zero-stuffed signal, centred on the filter
            let t = k * self.down + self.half_len;
            let mut acc = 0.0;
            let mut j = t % up;
            while j < self.taps.len() {
                if j <= t {
                    let idx = (t - j) / up;
                    if idx < x.len() {
                        acc += self.taps[j] * x[idx];
                    }
                } else {
                    break;
                }
                j += up;
            }
            y.push(acc);
        }
        y
    }
}
