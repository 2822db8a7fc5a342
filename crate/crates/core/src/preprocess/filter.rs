//! Fourth-order Butterworth low-pass as two cascaded biquads, applied
//! forward and backward for zero phase.

use std::f64::consts::PI;

/// One second-order section in direct form II transposed.
/// `b = [b0, b1, b2]`, `a = [1, a1, a2]` with the leading 1 implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// State that makes the section output `x0` for a constant input `x0`.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let y = dc * x0;
        [y - b0 * x0, b2 * x0 - a2 * y]
    }

    fn run(&self, data: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in data.iter_mut() {
            let x = *v;
            let y = b0 * x + z[0];
            z[0] = b1 * x - a1 * y + z[1];
            z[1] = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// Cascade of sections designed by bilinear transform with pre-warping.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub sections: Vec<Biquad>,
}

impl Butterworth {
    /// Fourth-order low-pass with `cutoff` and `sample_rate` in Hz.
    /// Requires `0 < cutoff < sample_rate / 2`.
    pub fn lowpass4(cutoff: f64, sample_rate: f64) -> Self {
        let k = (PI * cutoff / sample_rate).tan();
        let order = 4;
        let sections = (0..order / 2)
            .map(|i| {
                let zeta = (PI * (2 * i + 1) as f64 / (2 * order) as f64).sin();
                let q = 1.0 / (2.0 * zeta);
                let norm = 1.0 / (1.0 + k / q + k * k);
                let b0 = k * k * norm;
                Biquad {
                    b: [b0, 2.0 * b0, b0],
                    a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
                }
            })
            .collect();
        Self { sections }
    }

    /// Single causal pass, starting every section in its steady state for
    /// the first sample.
    pub fn filter(&self, data: &mut [f64]) {
        let Some(&x0) = data.first() else { return };
        for sec in &self.sections {
            let z = sec.steady_state(x0);
            sec.run(data, z);
        }
    }

    /// Zero-phase forward-backward filtering with odd reflection padding.
    pub fn filtfilt(&self, data: &[f64], padlen: usize) -> Vec<f64> {
        let n = data.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (data[0], data[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - data[i]));
        ext.extend_from_slice(data);
        ext.extend((1..=pad).map(|i| 2.0 * last - data[n - 1 - i]));
        self.filter(&mut ext);
        ext.reverse();
        self.filter(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}
