use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// `[x, sin(2 pi y / Dy), cos(2 pi y / Dy)]`, with `y` reduced modulo `Dy` first.
pub fn periodic_features(x: f64, y: f64, dy: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    PeriodicFeatures::new(dy, 1).encode(x, y, &mut out);
    out
}

/// Trigonometric encoding of `y` with `harmonics` frequencies `2 pi k / period`.
///
/// The angle is reduced modulo one period before evaluation, so `y` and
/// `y + period` map to bit-identical features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicFeatures {
    pub period: f64,
    pub harmonics: usize,
}

impl PeriodicFeatures {
    pub fn new(period: f64, harmonics: usize) -> Self {
        Self {
            period,
            harmonics: harmonics.max(1),
        }
    }

    pub fn width(&self) -> usize {
        1 + 2 * self.harmonics
    }

    fn phase(&self, y: f64) -> f64 {
        let r = y.rem_euclid(self.period);
        if r >= self.period {
            0.0
        } else {
            r
        }
    }

    /// Write `[x, sin(w1 y), cos(w1 y), sin(w2 y), ...]` into `out`.
    pub fn encode(&self, x: f64, y: f64, out: &mut [f64]) {
        let yr = self.phase(y);
        out[0] = x;
        for k in 1..=self.harmonics {
            let w = 2.0 * PI * k as f64 * yr / self.period;
            out[2 * k - 1] = w.sin();
            out[2 * k] = w.cos();
        }
    }

    /// Chain rule back to `(x, y)` given gradients on the encoded features.
    pub fn backward(&self, y: f64, feature_grad: &[f64]) -> (f64, f64) {
        let yr = self.phase(y);
        let mut dy = 0.0;
        for k in 1..=self.harmonics {
            let c = 2.0 * PI * k as f64 / self.period;
            let w = c * yr;
            dy += feature_grad[2 * k - 1] * c * w.cos() - feature_grad[2 * k] * c * w.sin();
        }
        (feature_grad[0], dy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quarter_and_half_period() {
        let dy = 0.4;
        assert_eq!(periodic_features(0.1, 0.0, dy), periodic_features(0.1, dy, dy));
        let q = periodic_features(0.1, dy / 4.0, dy);
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[2], 0.0, epsilon = 1e-15);
        let h = periodic_features(0.1, dy / 2.0, dy);
        assert_abs_diff_eq!(h[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[2], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn encoder_matches_single_harmonic_form() {
        let pf = PeriodicFeatures::new(0.4, 1);
        let mut out = [0.0; 3];
        pf.encode(0.25, 0.13, &mut out);
        let f = periodic_features(0.25, 0.13, 0.4);
        for k in 0..3 {
            assert_abs_diff_eq!(out[k], f[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_matches_finite_difference() {
        let pf = PeriodicFeatures::new(0.4, 3);
        let g = [0.3, -1.1, 0.7, 0.2, 0.5, -0.4, 0.9];
        let obj = |y: f64| {
            let mut f = [0.0; 7];
            pf.encode(0.0, y, &mut f);
            f.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
        };
        for &y in &[0.01, 0.13, 0.29, 0.37] {
            let h = 1e-6;
            let fd = (obj(y + h) - obj(y - h)) / (2.0 * h);
            let (_, an) = pf.backward(y, &g);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn encoding_is_bit_periodic(x in -1.0f64..1.0, y in 0.0f64..0.4, k in 1usize..4) {
            let pf = PeriodicFeatures::new(0.4, k);
            let mut a = vec![0.0; pf.width()];
            let mut b = vec![0.0; pf.width()];
            pf.encode(x, 0.0, &mut a);
            pf.encode(x, 0.4, &mut b);
            prop_assert_eq!(&a, &b);
            pf.encode(x, y, &mut a);
            for v in &a[1..] {
                prop_assert!(v.abs() <= 1.0);
            }
        }
    }
}
