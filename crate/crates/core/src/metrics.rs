//! Tone distances, matching, and the three error functionals.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expsum::{mean_exp, ExpSum};
use crate::quadrature::CompositeQuadrature;
use crate::signal::{oscillation_panels, NoiseModel, SignalSource, Tone};

/// `1 − φ(Δ, T)`, accurate when `ΔT` is tiny.
fn one_minus_phi(delta_f: f64, duration: f64) -> Complex64 {
    let z = Complex64::new(0.0, 2.0 * PI * delta_f * duration);
    if z.norm() < 1e-2 {
        // −(z/2 + z²/6 + z³/24 + z⁴/120 + z⁵/720 + z⁶/5040)
        -(z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z * (1.0 / 720.0 + z / 5040.0))))))
    } else {
        Complex64::new(1.0, 0.0) - mean_exp(z / duration, duration)
    }
}

/// `(1/T)∫₀ᵀ |v e^{2πift} − v′ e^{2πif′t}|² dt`, in the form
/// `|v − v′|² + 2·Re(conj(v)·v′·(1 − φ(f′ − f)))`.
pub fn tone_dist2(a: &Tone, b: &Tone, duration: f64) -> f64 {
    let d = (a.v - b.v).norm_sqr() + 2.0 * (a.v.conj() * b.v * one_minus_phi(b.f - a.f, duration)).re;
    d.max(0.0)
}

/// `dist²` next to `q = (|v|²+|v′|²)·min(1, T²Δf²) + |v − v′|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistBounds {
    pub lhs: f64,
    pub comparable: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Constant `c` in `q/c ≤ dist² ≤ c·q`.
pub const DIST_SANDWICH: f64 = 8.0 * PI * PI / 3.0;

pub fn dist_bounds_check(a: &Tone, b: &Tone, duration: f64) -> DistBounds {
    let lhs = tone_dist2(a, b, duration);
    let x = duration * (a.f - b.f);
    let q = (a.v.norm_sqr() + b.v.norm_sqr()) * (x * x).min(1.0) + (a.v - b.v).norm_sqr();
    DistBounds { lhs, comparable: q, lower: q / DIST_SANDWICH, upper: q * DIST_SANDWICH }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneError {
    pub df: f64,
    pub dv: f64,
    pub dist2: f64,
}

impl ToneError {
    pub fn between(truth: &Tone, found: &Tone, duration: f64) -> Self {
        Self { df: (found.f - truth.f).abs(), dv: (found.v - truth.v).norm(), dist2: tone_dist2(truth, found, duration) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub truth: usize,
    pub found: usize,
    pub error: ToneError,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToneMatching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_truth: Vec<usize>,
    pub unmatched_found: Vec<usize>,
}

impl ToneMatching {
    pub fn pair_for_truth(&self, truth: usize) -> Option<&MatchedPair> {
        self.pairs.iter().find(|p| p.truth == truth)
    }

    pub fn pair_for_found(&self, found: usize) -> Option<&MatchedPair> {
        self.pairs.iter().find(|p| p.found == found)
    }
}

/// Greedy nearest-frequency pairing: repeatedly joins the closest remaining
/// `(truth, found)` pair whose gap is at most `max_gap`.
pub fn match_tones(truth: &[Tone], found: &[Tone], duration: f64, max_gap: f64) -> ToneMatching {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in truth.iter().enumerate() {
        for (j, b) in found.iter().enumerate() {
            let gap = (a.f - b.f).abs();
            if gap <= max_gap {
                candidates.push((gap, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_truth = vec![false; truth.len()];
    let mut used_found = vec![false; found.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if used_truth[i] || used_found[j] {
            continue;
        }
        used_truth[i] = true;
        used_found[j] = true;
        pairs.push(MatchedPair { truth: i, found: j, error: ToneError::between(&truth[i], &found[j], duration) });
    }
    pairs.sort_by_key(|p| p.truth);
    ToneMatching {
        pairs,
        unmatched_truth: (0..truth.len()).filter(|&i| !used_truth[i]).collect(),
        unmatched_found: (0..found.len()).filter(|&j| !used_found[j]).collect(),
    }
}

/// Matched `dist²` plus `|v|²` for every unmatched tone on either side.
pub fn eq2_total(truth: &[Tone], found: &[Tone], duration: f64, max_gap: f64) -> f64 {
    let m = match_tones(truth, found, duration, max_gap);
    eq2_from_matching(&m, truth, found)
}

pub fn eq2_from_matching(m: &ToneMatching, truth: &[Tone], found: &[Tone]) -> f64 {
    m.pairs.iter().map(|p| p.error.dist2).sum::<f64>()
        + m.unmatched_truth.iter().map(|&i| truth[i].v.norm_sqr()).sum::<f64>()
        + m.unmatched_found.iter().map(|&j| found[j].v.norm_sqr()).sum::<f64>()
}

/// A mean-square error with its standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

pub const MONTE_CARLO_POINTS: usize = 100_000;

/// `(1/T)∫₀ᵀ |x′(t) − x(t)|² dt` for `x′ = Σ found`.
///
/// Exact for noiseless and decaying signals; Monte Carlo (stratified, fixed
/// seed) for Gaussian noise; adaptive quadrature for custom noise. Does not
/// touch the sample tally.
pub fn eq3_error(found: &[Tone], source: &SignalSource) -> Estimate {
    let duration = source.duration();
    let truth = &source.tones().tones;
    match source.noise() {
        NoiseModel::None => {
            let mut e = ExpSum::new();
            e.add_tones(found, 1.0);
            e.add_tones(truth, -1.0);
            Estimate { value: e.mean_square(duration), std_err: 0.0 }
        }
        NoiseModel::Decay { rate } => {
            let mut e = ExpSum::new();
            e.add_tones(found, 1.0);
            e.add_decaying_tones(truth, -1.0, 1.0 / (rate * duration));
            Estimate { value: e.mean_square(duration), std_err: 0.0 }
        }
        NoiseModel::Gaussian { .. } => monte_carlo_eq3(found, source, MONTE_CARLO_POINTS),
        NoiseModel::Custom(_) => {
            let mut all = truth.clone();
            all.extend_from_slice(found);
            let panels = oscillation_panels(&all, duration);
            let value = CompositeQuadrature::new(1e-8)
                .with_initial_panels(panels)
                .integrate(0.0, duration, |t| (model_at(found, t) - source.value_unmetered(t)).norm_sqr())
                / duration;
            Estimate { value, std_err: 0.0 }
        }
    }
}

fn model_at(tones: &[Tone], t: f64) -> Complex64 {
    tones.iter().map(|tone| tone.at(t)).sum()
}

pub fn monte_carlo_eq3(found: &[Tone], source: &SignalSource, points: usize) -> Estimate {
    let duration = source.duration();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6571_3300);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..points {
        let t = duration * (i as f64 + rng.random::<f64>()) / points as f64;
        let e = (model_at(found, t) - source.value_unmetered(t)).norm_sqr();
        sum += e;
        sum_sq += e * e;
    }
    let n = points as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Estimate { value: mean, std_err: (var / n).sqrt() }
}

/// `|(1/T)∫ a_i·conj(a_j)|` with `a = v e^{2πift} − v′ e^{2πif′t}`.
pub fn cross_term(a: (&Tone, &Tone), b: (&Tone, &Tone), duration: f64) -> f64 {
    let terms_a = [(a.0.v, a.0.f), (-a.1.v, a.1.f)];
    let terms_b = [(b.0.v, b.0.f), (-b.1.v, b.1.f)];
    let mut acc = Complex64::new(0.0, 0.0);
    for (va, fa) in terms_a {
        for (vb, fb) in terms_b {
            acc += va * vb.conj() * crate::expsum::phi(fa - fb, duration);
        }
    }
    acc.norm()
}

/// Per-run metrics against ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub matching: ToneMatching,
    pub eq2_total: f64,
    pub eq3: Estimate,
    /// `𝒩²`.
    pub noise_level: f64,
    pub eq3_ratio: f64,
    pub eq2_ratio: f64,
}

pub fn evaluate(source: &SignalSource, found: &[Tone], delta: f64, max_gap: f64) -> RecoveryMetrics {
    let truth = &source.tones().tones;
    let duration = source.duration();
    let matching = match_tones(truth, found, duration, max_gap);
    let eq2 = eq2_from_matching(&matching, truth, found);
    let eq3 = eq3_error(found, source);
    let noise_level = source.noise_level(delta);
    let ratio = |x: f64| if noise_level > 0.0 { x / noise_level } else if x == 0.0 { 0.0 } else { f64::INFINITY };
    RecoveryMetrics { eq2_ratio: ratio(eq2), eq3_ratio: ratio(eq3.value), matching, eq2_total: eq2, eq3, noise_level }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::ToneSet;

    fn tone(re: f64, im: f64, f: f64) -> Tone {
        Tone::new(Complex64::new(re, im), f)
    }

    fn quad_dist2(a: &Tone, b: &Tone, t: f64) -> f64 {
        let panels = oscillation_panels(&[*a, *b], t);
        CompositeQuadrature::new(1e-12).with_initial_panels(panels).integrate(0.0, t, |s| (a.at(s) - b.at(s)).norm_sqr()) / t
    }

    #[test]
    fn identical_is_zero() {
        let a = tone(0.3, -1.2, 17.5);
        assert_eq!(tone_dist2(&a, &a, 2.0), 0.0);
    }

    #[test]
    fn same_frequency_is_magnitude_gap() {
        let a = tone(1.0, 0.0, 4.0);
        let b = tone(0.0, 1.0, 4.0);
        assert!((tone_dist2(&a, &b, 3.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_quadrature() {
        let a = tone(0.7, 0.2, 3.1);
        let b = tone(-0.1, 0.9, 3.9);
        let q = quad_dist2(&a, &b, 1.7);
        assert!((tone_dist2(&a, &b, 1.7) - q).abs() <= 1e-9 * q);
    }

    #[test]
    fn tiny_frequency_gap_is_stable() {
        let a = tone(1.0, 0.0, 100.0);
        let b = tone(1.0, 0.0, 100.0 + 1e-9);
        // (2π ΔT)²/3 for equal magnitudes
        let x = 2.0 * PI * (b.f - a.f) * 10.0;
        let expected = x * x / 3.0;
        assert!((tone_dist2(&a, &b, 10.0) - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn far_apart_is_orthogonal() {
        let a = tone(1.0, 0.0, 0.0);
        let b = tone(2.0, 0.0, 1e4);
        let bounds = dist_bounds_check(&a, &b, 10.0);
        assert!((bounds.lhs - 5.0).abs() < 1e-3);
    }

    #[test]
    fn matching_charges_unmatched() {
        let truth = vec![tone(1.0, 0.0, 0.0), tone(2.0, 0.0, 100.0)];
        let found = vec![tone(1.0, 0.0, 0.0)];
        assert!((eq2_total(&truth, &found, 1.0, 15.0) - 4.0).abs() < 1e-15);
        let mut shuffled = truth.clone();
        shuffled.reverse();
        assert_eq!(eq2_total(&truth, &shuffled, 1.0, 15.0), 0.0);
    }

    #[test]
    fn eq3_single_mismatch_equals_tone_dist() {
        let truth = ToneSet::new(vec![tone(1.0, 0.5, 12.0)], 0.0).unwrap();
        let src = SignalSource::new(truth.clone(), NoiseModel::None, 2.0, 50.0, 0).unwrap();
        let found = [tone(0.9, 0.5, 12.05)];
        let e = eq3_error(&found, &src);
        assert!((e.value - tone_dist2(&truth.tones[0], &found[0], 2.0)).abs() < 1e-12);
        assert_eq!(eq3_error(&truth.tones, &src).value, 0.0);
    }

    #[test]
    fn eq3_gaussian_is_noise_level() {
        let truth = ToneSet::new(vec![tone(1.0, 0.0, 12.0)], 0.0).unwrap();
        let src = SignalSource::new(truth.clone(), NoiseModel::Gaussian { variance: 0.04 }, 2.0, 50.0, 9).unwrap();
        let e = eq3_error(&truth.tones, &src);
        assert!((e.value - 0.04).abs() <= 4.0 * e.std_err + 1e-12, "{e:?}");
        assert!(e.std_err > 0.0);
        assert_eq!(src.samples_taken(), 0);
    }

    #[test]
    fn cross_term_self_and_zero() {
        let a = (&tone(1.0, 0.0, 10.0), &tone(0.8, 0.1, 10.2));
        let zero = tone(0.0, 0.0, 3.0);
        let norm = tone_dist2(a.0, a.1, 4.0);
        assert!((cross_term(a, a, 4.0) - norm).abs() < 1e-12);
        assert_eq!(cross_term(a, (&zero, &zero), 4.0), 0.0);
    }
}
