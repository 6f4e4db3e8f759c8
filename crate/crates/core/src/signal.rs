//! Tones, sparse signals, noise models and the metered sampling interface.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_pcg::Pcg64Mcg;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CsfftError, Result};
use crate::expsum::ExpSum;
use crate::quadrature::CompositeQuadrature;

/// One `(v, f)` pair contributing `v·e^{2πift}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub v: Complex64,
    pub f: f64,
}

impl Tone {
    pub fn new(v: Complex64, f: f64) -> Self {
        Self { v, f }
    }

    pub fn at(&self, t: f64) -> Complex64 {
        self.v * Complex64::from_polar(1.0, 2.0 * PI * self.f * t)
    }
}

#[derive(Serialize, Deserialize)]
struct ToneRecord {
    re: f64,
    im: f64,
    f: f64,
}

impl Serialize for Tone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ToneRecord { re: self.v.re, im: self.v.im, f: self.f }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tone {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ToneRecord::deserialize(d)?;
        Ok(Tone::new(Complex64::new(r.re, r.im), r.f))
    }
}

/// Smallest pairwise frequency gap; `+∞` for fewer than two tones.
pub fn min_separation(tones: &[Tone]) -> f64 {
    let mut fs: Vec<f64> = tones.iter().map(|t| t.f).collect();
    fs.sort_by(f64::total_cmp);
    fs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// An ordered list of tones together with a guaranteed minimum separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneSet {
    pub tones: Vec<Tone>,
    pub eta: f64,
}

impl ToneSet {
    /// Checks that every pair is at least `eta` apart.
    pub fn new(tones: Vec<Tone>, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(CsfftError::config(format!("separation must be non-negative, got {eta}")));
        }
        let gap = min_separation(&tones);
        if gap < eta {
            return Err(CsfftError::config(format!(
                "tones are {gap} Hz apart, below the required separation {eta} Hz"
            )));
        }
        Ok(Self { tones, eta })
    }

    /// Records the realized minimum gap as the separation.
    pub fn with_min_separation(tones: Vec<Tone>) -> Self {
        let eta = min_separation(&tones);
        Self { tones, eta }
    }

    pub fn len(&self) -> usize {
        self.tones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tones.is_empty()
    }

    pub fn l2_mass(&self) -> f64 {
        self.tones.iter().map(|t| t.v.norm_sqr()).sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.tones.iter().map(|t| t.f).collect()
    }
}

/// `x*(t) = Σ_i v_i e^{2πi f_i t}`.
pub fn evaluate_pure(tones: &ToneSet, t: f64) -> Complex64 {
    tones.tones.iter().map(|tone| tone.at(t)).sum()
}

/// User-supplied noise `g(t)`.
#[derive(Clone)]
pub struct CustomNoise(pub Arc<dyn Fn(f64) -> Complex64 + Send + Sync>);

impl fmt::Debug for CustomNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomNoise(..)")
    }
}

/// The additive noise `g(t)`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    #[default]
    None,
    /// Complex white Gaussian noise with `E|g(t)|² = variance`, drawn per
    /// queried time point and keyed by `(seed, t)`.
    Gaussian { variance: f64 },
    /// `x(t) = x*(t)·e^{−t/(rate·T)}`, i.e. `g = x*·(e^{−t/(rate·T)} − 1)`.
    Decay { rate: f64 },
    #[serde(skip)]
    Custom(CustomNoise),
}

impl NoiseModel {
    pub fn custom(f: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Self {
        NoiseModel::Custom(CustomNoise(Arc::new(f)))
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { variance } if !(variance >= 0.0 && variance.is_finite()) => {
                Err(CsfftError::config(format!("gaussian variance must be >= 0, got {variance}")))
            }
            NoiseModel::Decay { rate } if !(rate > 0.0 && rate.is_finite()) => {
                Err(CsfftError::config(format!("decay rate must be > 0, got {rate}")))
            }
            _ => Ok(()),
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sampler for `x(t) = x*(t) + g(t)` on `[0, T]` with an exact sample tally.
#[derive(Debug)]
pub struct SignalSource {
    tones: ToneSet,
    noise: NoiseModel,
    duration: f64,
    band_limit: f64,
    noise_seed: u64,
    counter: AtomicU64,
}

impl Clone for SignalSource {
    fn clone(&self) -> Self {
        Self {
            tones: self.tones.clone(),
            noise: self.noise.clone(),
            duration: self.duration,
            band_limit: self.band_limit,
            noise_seed: self.noise_seed,
            counter: AtomicU64::new(self.samples_taken()),
        }
    }
}

impl SignalSource {
    pub fn new(
        tones: ToneSet,
        noise: NoiseModel,
        duration: f64,
        band_limit: f64,
        noise_seed: u64,
    ) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(CsfftError::config(format!("duration must be > 0, got {duration}")));
        }
        if !(band_limit > 0.0 && band_limit.is_finite()) {
            return Err(CsfftError::config(format!("band limit must be > 0, got {band_limit}")));
        }
        if let Some(t) = tones.tones.iter().find(|t| t.f.abs() > band_limit || !t.v.is_finite()) {
            return Err(CsfftError::config(format!(
                "tone at {} Hz is outside [-{band_limit}, {band_limit}] or has a non-finite magnitude",
                t.f
            )));
        }
        noise.validate()?;
        Ok(Self { tones, noise, duration, band_limit, noise_seed, counter: AtomicU64::new(0) })
    }

    pub fn tones(&self) -> &ToneSet {
        &self.tones
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn band_limit(&self) -> f64 {
        self.band_limit
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    pub fn samples_taken(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn reset_counter(&self) {
        self.counter.store(0, Ordering::Relaxed);
    }

    fn check_time(&self, t: f64) -> Result<()> {
        // Arithmetic progressions ending exactly at T can overshoot by an ulp.
        let slack = 1e-12 * self.duration;
        if t.is_finite() && t >= -slack && t <= self.duration + slack {
            Ok(())
        } else {
            Err(CsfftError::Domain { t, duration: self.duration })
        }
    }

    /// `g(t)` without touching the sample tally.
    pub fn noise_at(&self, t: f64, pure: Complex64) -> Complex64 {
        match &self.noise {
            NoiseModel::None => Complex64::new(0.0, 0.0),
            NoiseModel::Gaussian { variance } => {
                if *variance == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let key = mix64(self.noise_seed ^ mix64(t.to_bits()));
                let mut rng = Pcg64Mcg::new(((key as u128) << 64) | mix64(key) as u128);
                let scale = (variance / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * scale
            }
            NoiseModel::Decay { rate } => pure * ((-t / (rate * self.duration)).exp() - 1.0),
            NoiseModel::Custom(g) => (g.0)(t),
        }
    }

    /// `x(t)` without counting it as a sample; for metrics and oracles only.
    pub fn value_unmetered(&self, t: f64) -> Complex64 {
        let pure = evaluate_pure(&self.tones, t);
        pure + self.noise_at(t, pure)
    }

    /// One metered sample `x(t)`.
    pub fn sample(&self, t: f64) -> Result<Complex64> {
        self.check_time(t)?;
        self.counter.fetch_add(1, Ordering::Relaxed);
        Ok(self.value_unmetered(t))
    }

    /// Metered samples at `start + step·j` for `j = 0..n`, written into `out`.
    ///
    /// Equivalent to `n` calls of [`sample`](Self::sample); the pure part is
    /// advanced by phasor rotation and re-anchored every 256 steps.
    pub fn sample_progression(&self, start: f64, step: f64, n: usize, out: &mut Vec<Complex64>) -> Result<()> {
        out.clear();
        if n == 0 {
            return Ok(());
        }
        self.check_time(start)?;
        self.check_time(start + step * (n - 1) as f64)?;
        self.counter.fetch_add(n as u64, Ordering::Relaxed);
        out.resize(n, Complex64::new(0.0, 0.0));
        const ANCHOR: usize = 256;
        for tone in &self.tones.tones {
            let rot = Complex64::from_polar(1.0, 2.0 * PI * tone.f * step);
            let mut chunk_start = 0;
            while chunk_start < n {
                let t0 = start + step * chunk_start as f64;
                let mut ph = tone.at(t0);
                let end = (chunk_start + ANCHOR).min(n);
                for slot in &mut out[chunk_start..end] {
                    *slot += ph;
                    ph *= rot;
                }
                chunk_start = end;
            }
        }
        if !matches!(self.noise, NoiseModel::None) {
            for (j, slot) in out.iter_mut().enumerate() {
                let t = start + step * j as f64;
                *slot += self.noise_at(t, *slot);
            }
        }
        Ok(())
    }

    /// `𝒩² = (1/T)∫₀ᵀ|g|² dt + δ·Σ|v_i|²`.
    pub fn noise_level(&self, delta: f64) -> f64 {
        self.noise_energy() + delta * self.tones.l2_mass()
    }

    /// `(1/T)∫₀ᵀ|g|² dt`: closed form for the built-in models, quadrature for
    /// custom noise.
    pub fn noise_energy(&self) -> f64 {
        match &self.noise {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { variance } => *variance,
            NoiseModel::Decay { rate } => {
                let mut g = ExpSum::new();
                g.add_decaying_tones(&self.tones.tones, 1.0, 1.0 / (rate * self.duration));
                g.add_tones(&self.tones.tones, -1.0);
                g.mean_square(self.duration)
            }
            NoiseModel::Custom(g) => {
                let panels = oscillation_panels(&self.tones.tones, self.duration);
                CompositeQuadrature::default()
                    .with_initial_panels(panels)
                    .integrate(0.0, self.duration, |t| (g.0)(t).norm_sqr())
                    / self.duration
            }
        }
    }

    /// Writes `(t, re, im)` rows for metered samples at the given times.
    pub fn write_trace<W: Write>(&self, times: &[f64], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "re", "im"])?;
        for &t in times {
            let x = self.sample(t)?;
            w.serialize((t, x.re, x.im))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Enough panels to put a few quadrature panels on every oscillation.
pub(crate) fn oscillation_panels(tones: &[Tone], duration: f64) -> usize {
    let fmax = tones.iter().map(|t| t.f.abs()).fold(0.0, f64::max);
    ((2.0 * fmax * duration).ceil() as usize).clamp(4, 1 << 20)
}

/// Parameters for a random instance.
#[derive(Debug, Clone)]
pub struct InstanceParams {
    pub k: usize,
    pub band_limit: f64,
    pub eta: f64,
    pub magnitude_range: (f64, f64),
    pub noise: NoiseModel,
    pub duration: f64,
    pub seed: u64,
}

/// Draws `k` frequencies in `[−F, F]` with pairwise gaps of at least `eta` and
/// magnitudes uniform in `magnitude_range` with uniform random phase.
///
/// The frequencies are uniform over the feasible set: sorted uniform draws on
/// `[0, 2F − (k−1)η]` shifted by `iη`, which is the distribution rejection
/// sampling converges to, drawn in one pass.
pub fn make_instance(params: &InstanceParams) -> Result<SignalSource> {
    let InstanceParams { k, band_limit: f_max, eta, magnitude_range: (lo, hi), .. } = *params;
    if k == 0 {
        return Err(CsfftError::config("k must be at least 1"));
    }
    if !(f_max > 0.0) || !(eta >= 0.0) {
        return Err(CsfftError::config("band limit must be > 0 and separation >= 0"));
    }
    if k > 1 && (k as f64) * eta >= 2.0 * f_max {
        return Err(CsfftError::config(format!(
            "{k} tones with separation {eta} Hz do not fit in [-{f_max}, {f_max}]"
        )));
    }
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
        return Err(CsfftError::config(format!("bad magnitude range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let slack = 2.0 * f_max - (k - 1) as f64 * eta;
    let mut offsets: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(f64::total_cmp);
    let mut freqs: Vec<f64> =
        offsets.iter().enumerate().map(|(i, u)| (-f_max + u + i as f64 * eta).min(f_max)).collect();
    // random order so tone index carries no frequency information
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        freqs.swap(i, j);
    }
    let tones = freqs
        .into_iter()
        .map(|f| {
            let mag = if hi > lo { lo + (hi - lo) * rng.random::<f64>() } else { lo };
            let phase = 2.0 * PI * rng.random::<f64>();
            Tone::new(Complex64::from_polar(mag, phase), f)
        })
        .collect();
    let tones = ToneSet::new(tones, if k > 1 { eta * (1.0 - 1e-12) } else { eta })?;
    let noise_seed = mix64(params.seed ^ 0x006e_6f69_7365);
    SignalSource::new(tones, params.noise.clone(), params.duration, f_max, noise_seed)
}

/// Serialized instance: `{k, F, eta, T, delta, tones, noise, seed}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub k: usize,
    #[serde(rename = "F")]
    pub band_limit: f64,
    pub eta: f64,
    #[serde(rename = "T")]
    pub duration: f64,
    pub delta: f64,
    pub tones: Vec<Tone>,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn from_source(source: &SignalSource, eta: f64, delta: f64, seed: u64) -> Self {
        Self {
            k: source.tones().len(),
            band_limit: source.band_limit(),
            eta,
            duration: source.duration(),
            delta,
            tones: source.tones().tones.clone(),
            noise: source.noise().clone(),
            seed,
        }
    }

    pub fn to_source(&self) -> Result<SignalSource> {
        if self.tones.len() != self.k {
            return Err(CsfftError::config(format!(
                "instance declares k = {} but lists {} tones",
                self.k,
                self.tones.len()
            )));
        }
        let eta = if self.k > 1 { self.eta * (1.0 - 1e-12) } else { self.eta };
        let tones = ToneSet::new(self.tones.clone(), eta)?;
        SignalSource::new(tones, self.noise.clone(), self.duration, self.band_limit, mix64(self.seed ^ 0x006e_6f69_7365))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: Complex64, f: f64) -> ToneSet {
        ToneSet::new(vec![Tone::new(v, f)], 0.0).unwrap()
    }

    #[test]
    fn zero_frequency_is_constant() {
        let x = evaluate_pure(&single(Complex64::new(1.0, 0.0), 0.0), 0.37);
        assert_eq!(x, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn time_zero_sums_magnitudes() {
        let x = evaluate_pure(&single(Complex64::new(1.0, 0.0), 123.4), 0.0);
        assert_eq!(x, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn two_tone_direct_sum() {
        let set = ToneSet::new(
            vec![Tone::new(Complex64::new(2.0, 0.0), 100.0), Tone::new(Complex64::new(1.0, 0.0), 130.0)],
            30.0,
        )
        .unwrap();
        // 2e^{2πi} + e^{2.6πi} with the oracle written out by hand
        let expected = Complex64::new(2.0 + (2.6 * PI).cos(), (2.6 * PI).sin());
        assert!((evaluate_pure(&set, 0.01) - expected).norm() < 1e-12);
    }

    #[test]
    fn sample_out_of_range_is_domain_error() {
        let src = SignalSource::new(single(Complex64::new(1.0, 0.0), 5.0), NoiseModel::None, 1.0, 10.0, 0).unwrap();
        assert!(matches!(src.sample(1.5), Err(CsfftError::Domain { .. })));
        assert!(matches!(src.sample(-0.1), Err(CsfftError::Domain { .. })));
        assert_eq!(src.samples_taken(), 0);
    }

    #[test]
    fn noiseless_and_zero_variance_match_pure() {
        let set = single(Complex64::new(0.3, -1.0), 7.0);
        for noise in [NoiseModel::None, NoiseModel::Gaussian { variance: 0.0 }] {
            let src = SignalSource::new(set.clone(), noise, 2.0, 10.0, 9).unwrap();
            for &t in &[0.0, 0.5, 1.9] {
                assert_eq!(src.sample(t).unwrap(), evaluate_pure(&set, t));
            }
        }
    }

    #[test]
    fn gaussian_noise_is_keyed_by_time() {
        let set = single(Complex64::new(1.0, 0.0), 3.0);
        let src = SignalSource::new(set, NoiseModel::Gaussian { variance: 0.5 }, 1.0, 10.0, 42).unwrap();
        assert_eq!(src.sample(0.25).unwrap(), src.sample(0.25).unwrap());
        assert_ne!(src.sample(0.25).unwrap(), src.sample(0.26).unwrap());
    }

    #[test]
    fn progression_matches_pointwise_samples() {
        let set = ToneSet::new(
            vec![Tone::new(Complex64::new(1.0, 0.2), 410.3), Tone::new(Complex64::new(-0.5, 0.7), -1200.9)],
            1.0,
        )
        .unwrap();
        let src = SignalSource::new(set, NoiseModel::Gaussian { variance: 0.1 }, 10.0, 2000.0, 3).unwrap();
        let mut out = Vec::new();
        src.sample_progression(0.5, 0.0037, 2000, &mut out).unwrap();
        assert_eq!(src.samples_taken(), 2000);
        for (j, x) in out.iter().enumerate().step_by(97) {
            let direct = src.value_unmetered(0.5 + 0.0037 * j as f64);
            assert!((x - direct).norm() < 1e-11, "j={j}");
        }
    }

    #[test]
    fn noise_level_noiseless() {
        let set = ToneSet::new(
            vec![Tone::new(Complex64::new(2.0, 0.0), 1.0), Tone::new(Complex64::new(0.0, 1.0), 5.0)],
            1.0,
        )
        .unwrap();
        let src = SignalSource::new(set, NoiseModel::None, 1.0, 10.0, 0).unwrap();
        assert!((src.noise_level(1e-6) - 5e-6).abs() < 1e-18);
    }

    #[test]
    fn noise_level_gaussian_is_variance() {
        let src = SignalSource::new(single(Complex64::new(3.0, 0.0), 1.0), NoiseModel::Gaussian { variance: 0.01 }, 1.0, 10.0, 0)
            .unwrap();
        assert_eq!(src.noise_level(0.0), 0.01);
    }

    #[test]
    fn decay_noise_level_matches_quadrature() {
        let set = ToneSet::new(
            vec![Tone::new(Complex64::new(1.0, 0.5), 3.2), Tone::new(Complex64::new(-0.4, 0.8), -7.7)],
            1.0,
        )
        .unwrap();
        let t = 4.0;
        let src = SignalSource::new(set.clone(), NoiseModel::Decay { rate: 1.5 }, t, 10.0, 0).unwrap();
        let q = CompositeQuadrature::new(1e-12).with_initial_panels(64);
        let oracle = q.integrate(0.0, t, |s| {
            (evaluate_pure(&set, s) * ((-s / (1.5 * t)).exp() - 1.0)).norm_sqr()
        }) / t;
        let closed = src.noise_level(0.0);
        assert!((closed - oracle).abs() <= 1e-6 * oracle, "{closed} vs {oracle}");
    }

    #[test]
    fn infeasible_separation_rejected() {
        let p = InstanceParams {
            k: 10,
            band_limit: 100.0,
            eta: 20.0,
            magnitude_range: (1.0, 1.0),
            noise: NoiseModel::None,
            duration: 1.0,
            seed: 0,
        };
        assert!(matches!(make_instance(&p), Err(CsfftError::Config(_))));
    }

    #[test]
    fn piano_instance_is_separated_and_deterministic() {
        let p = InstanceParams {
            k: 5,
            band_limit: 4200.0,
            eta: 30.0,
            magnitude_range: (1.0, 2.0),
            noise: NoiseModel::None,
            duration: 1.0,
            seed: 11,
        };
        let a = make_instance(&p).unwrap();
        let b = make_instance(&p).unwrap();
        assert_eq!(a.tones(), b.tones());
        assert_eq!(a.tones().len(), 5);
        assert!(min_separation(&a.tones().tones) >= 30.0 * (1.0 - 1e-9));
    }

    #[test]
    fn single_tone_has_no_separation_constraint() {
        let p = InstanceParams {
            k: 1,
            band_limit: 10.0,
            eta: 1e9,
            magnitude_range: (1.0, 1.0),
            noise: NoiseModel::None,
            duration: 1.0,
            seed: 5,
        };
        let src = make_instance(&p).unwrap();
        assert_eq!(src.tones().len(), 1);
        assert!(src.tones().tones[0].f.abs() <= 10.0);
    }

    #[test]
    fn instance_spec_json_round_trip() {
        let p = InstanceParams {
            k: 3,
            band_limit: 500.0,
            eta: 20.0,
            magnitude_range: (0.5, 1.5),
            noise: NoiseModel::Gaussian { variance: 0.2 },
            duration: 2.0,
            seed: 1,
        };
        let src = make_instance(&p).unwrap();
        let spec = InstanceSpec::from_source(&src, 20.0, 1e-6, 1);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"F\":500") && json.contains("\"kind\":\"gaussian\""));
        let back: InstanceSpec = serde_json::from_str(&json).unwrap();
        let src2 = back.to_source().unwrap();
        assert_eq!(src2.tones(), src.tones());
        assert_eq!(src2.value_unmetered(0.3), src.value_unmetered(0.3));
    }

    #[test]
    fn custom_noise_not_serializable() {
        let n = NoiseModel::custom(|_| Complex64::new(0.0, 0.0));
        assert!(serde_json::to_string(&n).is_err());
    }
}
