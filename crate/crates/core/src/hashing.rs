//! Frequency hashing: the `(σ, b)` permutation, bin assignment, the two bad
//! events, and `HashToBins`.
//!
//! Conventions: a tone at `f` lands on the circle at `π(f) = 2πσ(f − b) mod 2π`,
//! in bin `h(f) = round(π(f)·B/2π) mod B`, with offset
//! `o(f) = π(f) − 2π·round(π(f)·B/2π)/B ∈ [−π/B, π/B]`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CsfftError, Result};
use crate::signal::SignalSource;
use crate::window::FlatWindow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashConfig {
    pub bins: usize,
    pub delta: f64,
    pub alpha: f64,
    pub eta: f64,
    pub band_limit: f64,
}

impl HashConfig {
    pub fn new(bins: usize, delta: f64, alpha: f64, eta: f64, band_limit: f64) -> Result<Self> {
        if bins == 0 {
            return Err(CsfftError::config("B must be at least 1"));
        }
        if !(eta > 0.0 && band_limit > 0.0) {
            return Err(CsfftError::config("eta and F must be positive"));
        }
        Ok(Self { bins, delta, alpha, eta, band_limit })
    }

    pub fn sigma_range(&self) -> (f64, f64) {
        let lo = 1.0 / (self.bins as f64 * self.eta);
        (lo, 2.0 * lo)
    }

    /// Upper end of the `b` range for a given `σ`.
    pub fn b_max(&self, sigma: f64) -> f64 {
        (self.band_limit / self.eta).ceil() / (sigma * self.bins as f64)
    }
}

/// A drawn dilation `σ` (seconds per sample index) and shift `b` (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashDraw {
    pub sigma: f64,
    pub b: f64,
}

/// `σ ~ U[1/(Bη), 2/(Bη)]`, then `b ~ U[0, ⌈F/η⌉/(σB)]`.
pub fn draw_hash<R: Rng + ?Sized>(config: &HashConfig, rng: &mut R) -> HashDraw {
    let (lo, hi) = config.sigma_range();
    let sigma = lo + (hi - lo) * rng.random::<f64>();
    let b = config.b_max(sigma) * rng.random::<f64>();
    HashDraw { sigma, b }
}

/// `2πσ(f − b)` reduced onto `[0, 2π)`.
pub fn permute_angle(f: f64, draw: &HashDraw) -> f64 {
    let x = draw.sigma * (f - draw.b);
    let frac = x - x.floor();
    let angle = 2.0 * PI * frac;
    if angle >= 2.0 * PI { 0.0 } else { angle }
}

fn rounded_position(f: f64, draw: &HashDraw, bins: usize) -> (f64, f64) {
    let angle = permute_angle(f, draw);
    (angle, (angle * bins as f64 / (2.0 * PI)).round())
}

pub fn hash_bin(f: f64, draw: &HashDraw, bins: usize) -> usize {
    let (_, r) = rounded_position(f, draw, bins);
    (r as usize) % bins
}

pub fn offset_angle(f: f64, draw: &HashDraw, bins: usize) -> f64 {
    let (angle, r) = rounded_position(f, draw, bins);
    angle - 2.0 * PI * r / bins as f64
}

/// True iff another frequency in `others` hashes to the same bin as `f`.
/// One entry equal to `f` itself is skipped.
pub fn event_collision(f: f64, others: &[f64], draw: &HashDraw, bins: usize) -> bool {
    let h = hash_bin(f, draw, bins);
    let mut skipped_self = false;
    others.iter().any(|&g| {
        if g == f && !skipped_self {
            skipped_self = true;
            return false;
        }
        hash_bin(g, draw, bins) == h
    })
}

/// True iff `|o(f)| ≥ (1 − α)·π/B`.
pub fn event_off(f: f64, draw: &HashDraw, bins: usize, alpha: f64) -> bool {
    offset_angle(f, draw, bins).abs() >= (1.0 - alpha) * PI / bins as f64
}

/// The `B` bin values from one `HashToBins` call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMeasurement {
    pub u_hat: Vec<Complex64>,
    pub draw: HashDraw,
    /// Center of the sampled progression; a lone tone `(v, f)` in its own bin
    /// reads `v·e^{2πifτ}`.
    pub time_offset: f64,
}

impl BinMeasurement {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin", "re", "im", "abs"])?;
        for (j, u) in self.u_hat.iter().enumerate() {
            w.serialize((j, u.re, u.im, u.norm()))?;
        }
        w.flush()?;
        Ok(())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Half the time span of one `HashToBins` call, `σ·h`.
pub fn half_span(draw: &HashDraw, window: &FlatWindow) -> f64 {
    draw.sigma * window.half_width as f64
}

/// Samples `x` at `τ + σj` for `j ∈ [−h, h]`, weights by `G_j·e^{−2πiσbj}`,
/// folds modulo `B` and takes the `B`-point DFT. Consumes exactly `M` samples.
pub fn hash_to_bins(
    source: &SignalSource,
    draw: &HashDraw,
    time_offset: f64,
    window: &FlatWindow,
) -> Result<BinMeasurement> {
    BinHasher::new(draw, window).measure(source, time_offset)
}

/// `HashToBins` for a fixed draw, with the demodulated weights precomputed.
#[derive(Debug, Clone)]
pub struct BinHasher {
    draw: HashDraw,
    bins: usize,
    half_width: usize,
    weights: Vec<Complex64>,
}

impl BinHasher {
    pub fn new(draw: &HashDraw, window: &FlatWindow) -> Self {
        let h = window.half_width as i64;
        let weights = window
            .taps()
            .iter()
            .enumerate()
            .map(|(idx, g)| Complex64::from_polar(*g, -2.0 * PI * draw.sigma * draw.b * (idx as i64 - h) as f64))
            .collect();
        Self { draw: *draw, bins: window.bins, half_width: window.half_width, weights }
    }

    pub fn draw(&self) -> &HashDraw {
        &self.draw
    }

    /// `σ·h`.
    pub fn half_span(&self) -> f64 {
        self.draw.sigma * self.half_width as f64
    }

    pub fn measure(&self, source: &SignalSource, time_offset: f64) -> Result<BinMeasurement> {
        let bins = self.bins;
        let reach = self.half_span();
        let start = time_offset - reach;
        let end = time_offset + reach;
        let duration = source.duration();
        if start < -1e-12 * duration || end > duration * (1.0 + 1e-12) {
            return Err(CsfftError::Budget { start, end, duration });
        }
        let mut samples = Vec::with_capacity(self.weights.len());
        source.sample_progression(start, self.draw.sigma, self.weights.len(), &mut samples)?;

        let mut folded = vec![Complex64::new(0.0, 0.0); bins];
        let mut slot = (-(self.half_width as i64)).rem_euclid(bins as i64) as usize;
        for (x, w) in samples.iter().zip(&self.weights) {
            folded[slot] += x * w;
            slot += 1;
            if slot == bins {
                slot = 0;
            }
        }
        PLANNER.with(|p| p.borrow_mut().plan_fft_forward(bins).process(&mut folded));
        Ok(BinMeasurement { u_hat: folded, draw: self.draw, time_offset })
    }
}
