//! Closed-form time averages of sums of complex exponentials.
//!
//! A signal `Σ c_n e^{z_n t}` with complex rates `z_n` covers pure tones
//! (`z = 2πif`) and exponentially decaying tones. Its mean square over
//! `[0, T]` expands into pairwise terms `c_n conj(c_m) · E(z_n + conj(z_m), T)`
//! with `E(w, T) = (e^{wT} − 1)/(wT)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::signal::Tone;

/// `(1/T) ∫₀ᵀ e^{w t} dt`, evaluated with a power series when `|wT|` is small.
pub fn mean_exp(w: Complex64, duration: f64) -> Complex64 {
    let z = w * duration;
    if z.norm() < 1e-4 {
        // 1 + z/2 + z²/6 + z³/24 + z⁴/120
        let one = Complex64::new(1.0, 0.0);
        one + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `φ(Δ, T) = (1/T) ∫₀ᵀ e^{2πiΔt} dt`; `φ(0, T) = 1`.
pub fn phi(delta_f: f64, duration: f64) -> Complex64 {
    mean_exp(Complex64::new(0.0, 2.0 * PI * delta_f), duration)
}

/// A finite sum `Σ c_n e^{z_n t}`.
#[derive(Debug, Clone, Default)]
pub struct ExpSum {
    terms: Vec<(Complex64, Complex64)>,
}

impl ExpSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, coef: Complex64, rate: Complex64) {
        self.terms.push((coef, rate));
    }

    /// Adds `scale · v e^{2πift}` for each tone.
    pub fn add_tones(&mut self, tones: &[Tone], scale: f64) {
        for tone in tones {
            self.push(tone.v * scale, Complex64::new(0.0, 2.0 * PI * tone.f));
        }
    }

    /// Adds `scale · v e^{2πift − λt}` for each tone.
    pub fn add_decaying_tones(&mut self, tones: &[Tone], scale: f64, decay: f64) {
        for tone in tones {
            self.push(tone.v * scale, Complex64::new(-decay, 2.0 * PI * tone.f));
        }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.terms.iter().map(|(c, z)| c * (z * t).exp()).sum()
    }

    /// `(1/T) ∫₀ᵀ |Σ c_n e^{z_n t}|² dt`, clamped at zero against roundoff.
    pub fn mean_square(&self, duration: f64) -> f64 {
        let mut acc = 0.0;
        for (i, (ci, zi)) in self.terms.iter().enumerate() {
            acc += ci.norm_sqr() * mean_exp(zi + zi.conj(), duration).re;
            for (cj, zj) in &self.terms[i + 1..] {
                acc += 2.0 * (ci * cj.conj() * mean_exp(zi + zj.conj(), duration)).re;
            }
        }
        acc.max(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}
