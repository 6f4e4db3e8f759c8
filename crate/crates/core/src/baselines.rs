//! Reference estimators: a dense-sampling grid oracle, least-squares
//! magnitudes, Whittaker–Shannon reconstruction, and a rounded-DFT baseline.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CsfftError, Result};
use crate::signal::{SignalSource, Tone, ToneSet};

/// `Σ_j y_j e^{−2πif t_j}` for uniformly spaced `t_j = t0 + j·dt`.
fn correlate(samples: &[Complex64], t0: f64, dt: f64, f: f64) -> Complex64 {
    let rot = Complex64::from_polar(1.0, -2.0 * PI * f * dt);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut ph = Complex64::new(0.0, 0.0);
    for (j, y) in samples.iter().enumerate() {
        if j % 256 == 0 {
            ph = Complex64::from_polar(1.0, -2.0 * PI * f * (t0 + dt * j as f64));
        }
        acc += y * ph;
        ph *= rot;
    }
    acc
}

/// Maximizes a unimodal `g` on `[lo, hi]`.
fn golden_max(mut lo: f64, mut hi: f64, tol: f64, g: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut ga, mut gb) = (g(a), g(b));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if ga >= gb {
            hi = b;
            b = a;
            gb = ga;
            a = hi - inv_phi * (hi - lo);
            ga = g(a);
        } else {
            lo = a;
            a = b;
            ga = gb;
            b = lo + inv_phi * (hi - lo);
            gb = g(b);
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares magnitudes for fixed frequencies. Frequencies closer than
/// `1e-9/span` of each other are rejected; an ill-conditioned Gram matrix
/// falls back to a small ridge.
pub fn least_squares_magnitudes(frequencies: &[f64], times: &[f64], samples: &[Complex64]) -> Result<Vec<Complex64>> {
    let k = frequencies.len();
    if times.len() != samples.len() {
        return Err(CsfftError::config("times and samples differ in length"));
    }
    if times.len() < k {
        return Err(CsfftError::config(format!("{} samples cannot fit {k} tones", times.len())));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let span = times.iter().copied().fold(f64::NEG_INFINITY, f64::max) - times.iter().copied().fold(f64::INFINITY, f64::min);
    let min_gap = 1e-9 / span.max(f64::MIN_POSITIVE);
    for i in 0..k {
        for j in i + 1..k {
            if (frequencies[i] - frequencies[j]).abs() < min_gap {
                return Err(CsfftError::RankDeficient(frequencies[i], frequencies[j]));
            }
        }
    }
    let a = DMatrix::from_fn(times.len(), k, |r, c| Complex64::from_polar(1.0, 2.0 * PI * frequencies[c] * times[r]));
    let y = DVector::from_column_slice(samples);
    let ah = a.adjoint();
    let gram = &ah * &a;
    let rhs = &ah * y;
    let solved = gram.clone().cholesky().map(|c| c.solve(&rhs));
    let x = match solved {
        Some(x) if x.iter().all(|v| v.is_finite()) && well_conditioned(&gram) => x,
        _ => {
            let ridge = 1e-10 * gram.diagonal().iter().map(|d| d.re).sum::<f64>() / k as f64;
            let reg = gram + DMatrix::from_diagonal_element(k, k, Complex64::new(ridge, 0.0));
            reg.cholesky().ok_or_else(|| CsfftError::Invariant("regularized Gram matrix is not positive definite".into()))?.solve(&rhs)
        }
    };
    Ok(x.iter().copied().collect())
}

fn well_conditioned(gram: &DMatrix<Complex64>) -> bool {
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(0.0, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    min > 1e-12 * max
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOracleConfig {
    /// Scan spacing in Hz; `None` uses `1/(4T)` or finer.
    pub grid_step: Option<f64>,
    /// Cyclic re-refinement passes after the greedy pass.
    pub refine_iters: usize,
    /// Sample rate as a multiple of `2F`.
    pub oversampling: f64,
}

impl Default for GridOracleConfig {
    fn default() -> Self {
        Self { grid_step: None, refine_iters: 3, oversampling: 1.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    pub tones: ToneSet,
    pub low_confidence: bool,
    pub samples_used: u64,
    pub grid_step: f64,
}

/// Greedy dense-sampling estimator: pick the periodogram peak of the
/// residual, refine it by golden section, refit all magnitudes by least
/// squares, subtract, repeat `k` times; then cyclically re-refine each
/// frequency against the others' residual.
pub fn grid_oracle(source: &SignalSource, k: usize, cfg: &GridOracleConfig) -> Result<OracleResult> {
    let duration = source.duration();
    let band = source.band_limit();
    let rate = cfg.oversampling * 2.0 * band;
    if !(cfg.oversampling > 1.0) {
        return Err(CsfftError::config("oracle oversampling must exceed 1"));
    }
    let n = ((rate * duration).ceil() as usize).max(2 * k + 1);
    let dt = duration / n as f64;
    let t0 = 0.5 * dt;
    let times: Vec<f64> = (0..n).map(|j| t0 + dt * j as f64).collect();
    let mut samples = Vec::with_capacity(n);
    source.sample_progression(t0, dt, n, &mut samples)?;

    let natural = 1.0 / (4.0 * duration);
    let step = cfg.grid_step.unwrap_or(natural).min(natural);
    let pad = ((1.0 / (dt * step)).ceil() as usize).max(n).next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(pad);
    let spacing = 1.0 / (dt * pad as f64);
    let tol = step * 1e-7;

    let refine = |resid: &[Complex64], f0: f64| {
        golden_max(f0 - spacing, f0 + spacing, tol, |f| correlate(resid, t0, dt, f).norm_sqr())
    };
    let residual_of = |freqs: &[f64], mags: &[Complex64], skip: Option<usize>| -> Vec<Complex64> {
        let mut r = samples.clone();
        for (i, (&f, &v)) in freqs.iter().zip(mags).enumerate() {
            if Some(i) == skip {
                continue;
            }
            let tone = Tone::new(v, f);
            let rot = Complex64::from_polar(1.0, 2.0 * PI * f * dt);
            let mut ph = tone.at(t0);
            for (j, slot) in r.iter_mut().enumerate() {
                if j % 256 == 0 {
                    ph = tone.at(times[j]);
                }
                *slot -= ph;
                ph *= rot;
            }
        }
        r
    };

    let mut freqs: Vec<f64> = Vec::with_capacity(k);
    let mut mags: Vec<Complex64> = Vec::new();
    let mut resid = samples.clone();
    for _ in 0..k {
        let mut buf = vec![Complex64::new(0.0, 0.0); pad];
        buf[..n].copy_from_slice(&resid);
        fft.process(&mut buf);
        let (p, _) = buf
            .iter()
            .enumerate()
            .filter(|(p, _)| {
                let f = signed_freq(*p, pad, spacing);
                f.abs() <= band && freqs.iter().all(|g| (f - g).abs() > spacing)
            })
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .ok_or_else(|| CsfftError::Invariant("no grid point left to scan".into()))?;
        let f0 = signed_freq(p, pad, spacing);
        freqs.push(refine(&resid, f0));
        mags = least_squares_magnitudes(&freqs, &times, &samples)?;
        resid = residual_of(&freqs, &mags, None);
    }
    for _ in 0..cfg.refine_iters {
        for i in 0..freqs.len() {
            let partial = residual_of(&freqs, &mags, Some(i));
            freqs[i] = refine(&partial, freqs[i]);
            mags = least_squares_magnitudes(&freqs, &times, &samples)?;
        }
    }
    resid = residual_of(&freqs, &mags, None);
    let rms = (resid.iter().map(|r| r.norm_sqr()).sum::<f64>() / n as f64).sqrt();
    let floor = 3.0 * rms / (n as f64).sqrt();
    let low_confidence = mags.iter().any(|v| v.norm() <= floor);
    let mut tones: Vec<Tone> = freqs.into_iter().zip(mags).map(|(f, v)| Tone::new(v, f)).collect();
    tones.sort_by(|a, b| a.f.total_cmp(&b.f));
    Ok(OracleResult { tones: ToneSet::with_min_separation(tones), low_confidence, samples_used: n as u64, grid_step: step })
}

fn signed_freq(p: usize, len: usize, spacing: f64) -> f64 {
    let signed = if p >= len / 2 { p as f64 - len as f64 } else { p as f64 };
    signed * spacing
}

/// Samples `x(i/(2F))` for every `i/(2F) ∈ [0, T]`.
#[derive(Debug, Clone)]
pub struct NyquistSamples {
    pub rate: f64,
    pub values: Vec<Complex64>,
}

impl NyquistSamples {
    pub fn take(source: &SignalSource) -> Result<Self> {
        let rate = 2.0 * source.band_limit();
        let n = (rate * source.duration() * (1.0 + 1e-12)).floor() as usize + 1;
        let mut values = Vec::with_capacity(n);
        source.sample_progression(0.0, 1.0 / rate, n, &mut values)?;
        Ok(Self { rate, values })
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) }
}

/// Truncated Whittaker–Shannon sum `Σ_i x_i·sinc(rate·t − i)`.
pub fn nyquist_reconstruct(samples: &NyquistSamples, t: f64) -> Complex64 {
    let u = samples.rate * t;
    samples.values.iter().enumerate().map(|(i, x)| x * sinc(u - i as f64)).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseDftResult {
    pub tones: ToneSet,
    pub samples_used: u64,
}

/// `n` samples at `jT/n`, an `n`-point DFT, and the `k` largest bins read as
/// tones at `j/T` with magnitude `X_j/n`.
pub fn dense_dft_baseline(source: &SignalSource, n: usize, k: usize) -> Result<DenseDftResult> {
    let duration = source.duration();
    let required = 2.0 * source.band_limit() * duration;
    if (n as f64) < required {
        return Err(CsfftError::config(format!("dense DFT needs n >= 2FT = {required}, got {n}")));
    }
    let mut buf = Vec::with_capacity(n);
    source.sample_progression(0.0, duration / n as f64, n, &mut buf)?;
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| buf[b].norm_sqr().total_cmp(&buf[a].norm_sqr()).then(a.cmp(&b)));
    let mut tones: Vec<Tone> =
        order.into_iter().take(k).map(|p| Tone::new(buf[p] / n as f64, signed_freq(p, n, 1.0 / duration))).collect();
    tones.sort_by(|a, b| a.f.total_cmp(&b.f));
    Ok(DenseDftResult { tones: ToneSet::with_min_separation(tones), samples_used: n as u64 })
}
