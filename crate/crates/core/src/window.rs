//! Flat window functions.
//!
//! The taps are a Gaussian-tapered ideal low-pass, `G_j ∝ sin(ω_c j)/(πj) ·
//! e^{−j²/(2σ_g²)}` on the symmetric support `j ∈ [−h, h]`, with the cutoff
//! `ω_c = (1 − α/2)·π/B` in the middle of the transition band. Because the taps
//! are real and even, the spectrum `Ĝ(θ) = Σ_j G_j e^{iθj}` is real.
//!
//! The taps are normalized once so that `Ĝ(0) = 1`. With the default
//! constants the spectrum stays within `√(δ/k)` of 1 on
//! `|θ| ≤ (1−α)π/B` and within `√(δ/k)` of 0 on `|θ| ≥ π/B`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CsfftError, Result};

/// Support and width constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowParams {
    /// Half support `h = ⌈c_m · B·ln(k/δ)/α⌉`.
    pub c_m: f64,
    /// Gaussian width `σ_g = c_σ · B·√ln(k/δ)/α`.
    pub c_sigma: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self { c_m: 0.55, c_sigma: 0.65 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatWindow {
    pub bins: usize,
    pub k: usize,
    pub delta: f64,
    pub alpha: f64,
    pub half_width: usize,
    pub sigma_g: f64,
    /// `taps[i]` is `G` at offset `i − half_width`.
    taps: Vec<f64>,
}

/// Builds the window with [`WindowParams::default`].
pub fn build_window(bins: usize, k: usize, delta: f64, alpha: f64) -> Result<FlatWindow> {
    FlatWindow::build(bins, k, delta, alpha, WindowParams::default())
}

impl FlatWindow {
    pub fn build(bins: usize, k: usize, delta: f64, alpha: f64, params: WindowParams) -> Result<Self> {
        if bins == 0 || k == 0 {
            return Err(CsfftError::config("window needs B >= 1 and k >= 1"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CsfftError::config(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CsfftError::config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(params.c_m > 0.0 && params.c_sigma > 0.0) {
            return Err(CsfftError::config("window constants must be positive"));
        }
        let log_term = (k as f64 / delta).ln();
        let b = bins as f64;
        let half_width = (params.c_m * b * log_term / alpha).ceil() as usize;
        let sigma_g = params.c_sigma * b * log_term.sqrt() / alpha;
        let cutoff = (1.0 - alpha / 2.0) * PI / b;
        let two_var = 2.0 * sigma_g * sigma_g;
        let h = half_width as i64;
        let mut taps: Vec<f64> = (-h..=h)
            .map(|j| {
                let x = j as f64;
                let lowpass = if j == 0 { cutoff / PI } else { (cutoff * x).sin() / (PI * x) };
                lowpass * (-x * x / two_var).exp()
            })
            .collect();
        let dc: f64 = taps.iter().sum();
        for g in &mut taps {
            *g /= dc;
        }
        Ok(Self { bins, k, delta, alpha, half_width, sigma_g, taps })
    }

    /// Support length `M = 2h + 1`.
    pub fn support(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// `G` at signed offset `j ∈ [−h, h]`.
    pub fn tap(&self, j: i64) -> f64 {
        self.taps[(j + self.half_width as i64) as usize]
    }

    pub fn sum_sq(&self) -> f64 {
        self.taps.iter().map(|g| g * g).sum()
    }

    /// Leakage bound `√(δ/k)`.
    pub fn leakage(&self) -> f64 {
        (self.delta / self.k as f64).sqrt()
    }

    pub fn passband_edge(&self) -> f64 {
        (1.0 - self.alpha) * PI / self.bins as f64
    }

    pub fn stopband_edge(&self) -> f64 {
        PI / self.bins as f64
    }

    /// `Ĝ(θ) = Σ_j G_j e^{iθj}`, summed as `G_0 + Σ_{j≥1} 2G_j cos(θj)` so the
    /// result is exactly real and even in `θ`.
    pub fn spectrum(&self, theta: f64) -> Complex64 {
        let h = self.half_width;
        let mut acc = self.taps[h];
        for j in 1..=h {
            acc += 2.0 * self.taps[h + j] * (theta * j as f64).cos();
        }
        Complex64::new(acc, 0.0)
    }

    /// The idealized response `Ĝ′`: 1 on the flat region, 0 from `π/B` out, and
    /// in the transition band the realized spectrum clamped into `[0, 1]`.
    pub fn ideal_response(&self, offset: f64) -> f64 {
        let a = wrap_pi(offset).abs();
        if a <= self.passband_edge() {
            1.0
        } else if a >= self.stopband_edge() {
            0.0
        } else {
            self.spectrum(a).re.clamp(0.0, 1.0)
        }
    }

    /// CSV rows `(i, G_i)` with signed offsets.
    pub fn write_taps_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "g"])?;
        for (idx, g) in self.taps.iter().enumerate() {
            w.serialize((idx as i64 - self.half_width as i64, g))?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV rows `(theta, |Ĝ|)` on `points` evenly spaced angles in `[−π, π]`.
    pub fn write_spectrum_csv<W: Write>(&self, points: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "magnitude"])?;
        for i in 0..points {
            let theta = -PI + 2.0 * PI * i as f64 / (points.max(2) - 1) as f64;
            w.serialize((theta, self.spectrum(theta).norm()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reduces an angle onto `[−π, π)`.
pub fn wrap_pi(theta: f64) -> f64 {
    let r = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI { r - 2.0 * PI } else { r }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin_tap_formula() {
        let w = build_window(1, 1, 0.5, 0.1).unwrap();
        let cutoff = (1.0 - 0.05) * PI;
        let raw = |j: f64| (cutoff * j).sin() / (PI * j) * (-j * j / (2.0 * w.sigma_g * w.sigma_g)).exp();
        // ratio to the center tap cancels the normalization
        let expected = raw(1.0) / (cutoff / PI);
        assert!((w.tap(1) / w.tap(0) - expected).abs() < 1e-15);
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_window(64, 16, 1e-6, 0.1).unwrap();
        let b = build_window(64, 16, 1e-6, 0.1).unwrap();
        assert_eq!(a.taps(), b.taps());
    }

    #[test]
    fn rejects_degenerate_delta() {
        assert!(build_window(4, 1, 1.0, 0.1).is_err());
        assert!(build_window(4, 1, 0.0, 0.1).is_err());
        assert!(build_window(4, 1, 0.1, 1.0).is_err());
        assert!(build_window(0, 1, 0.1, 0.5).is_err());
    }

    #[test]
    fn dc_is_sum_of_taps() {
        let w = build_window(16, 4, 1e-6, 0.1).unwrap();
        let s: f64 = w.taps().iter().sum();
        assert!((w.spectrum(0.0).re - s).abs() < 1e-12);
        assert!((w.spectrum(0.0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_near_one_over_b() {
        let w = build_window(64, 16, 1e-6, 0.1).unwrap();
        let e = w.sum_sq() * 64.0;
        assert!((0.1..=10.0).contains(&e), "{e}");
    }

    #[test]
    fn flat_and_stop_bands() {
        let w = build_window(16, 4, 1e-6, 0.1).unwrap();
        let eps = w.leakage();
        for i in 0..=200 {
            let th = w.passband_edge() * i as f64 / 200.0;
            assert!((w.spectrum(th).re - 1.0).abs() <= eps);
        }
        for i in 0..=400 {
            let th = w.stopband_edge() + (PI - w.stopband_edge()) * i as f64 / 400.0;
            assert!(w.spectrum(th).re.abs() <= eps);
        }
    }

    #[test]
    fn ideal_response_cases() {
        let w = build_window(8, 2, 1e-6, 0.2).unwrap();
        assert_eq!(w.ideal_response(0.0), 1.0);
        assert_eq!(w.ideal_response(PI / 8.0), 0.0);
        let mid = w.ideal_response((1.0 - 0.1) * PI / 8.0);
        assert!((0.0..=1.0).contains(&mid));
    }

    #[test]
    fn spectrum_even_exactly() {
        let w = build_window(4, 1, 1e-3, 0.3).unwrap();
        for &th in &[0.1, 0.77, 2.9] {
            assert_eq!(w.spectrum(th), w.spectrum(-th));
            assert_eq!(w.spectrum(th), w.spectrum(-th).conj());
        }
    }
}
