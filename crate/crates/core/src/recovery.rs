//! Stage estimation, median merging, prune-twice and the top-level `recover`.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CsfftError, Result};
use crate::hashing::{draw_hash, event_off, hash_bin, BinHasher, HashConfig, HashDraw};
use crate::locate::{locate_k_signal, median, LocateParams, RoundTrace};
use crate::metrics::{evaluate, RecoveryMetrics};
use crate::signal::{SignalSource, Tone, ToneSet};
use crate::window::{FlatWindow, WindowParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    /// Cluster window as a fraction of `η`.
    pub c: f64,
    /// Fraction of stages that must agree.
    pub b_frac: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { c: 0.1, b_frac: 0.6 }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0 / 3.0) {
            return Err(CsfftError::config(format!("merge window c must lie in (0, 1/3), got {}", self.c)));
        }
        if !(self.b_frac > 0.5 && self.b_frac < 1.0) {
            return Err(CsfftError::config(format!("merge threshold must lie in (1/2, 1), got {}", self.b_frac)));
        }
        Ok(())
    }
}

/// `R = ⌈base + per_log2k·log₂(max(k, 2))⌉` unless `fixed` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageCount {
    pub base: f64,
    pub per_log2k: f64,
    pub fixed: Option<usize>,
}

impl Default for StageCount {
    fn default() -> Self {
        Self { base: 14.0, per_log2k: 2.0, fixed: None }
    }
}

impl StageCount {
    pub fn for_sparsity(&self, k: usize) -> usize {
        self.fixed.unwrap_or_else(|| (self.base + self.per_log2k * (k.max(2) as f64).log2()).ceil().max(1.0) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub delta: f64,
    pub alpha: f64,
    /// Bins per tone, `B = ⌈c_B·k⌉`.
    pub bins_per_tone: f64,
    pub window: WindowParams,
    pub locate: LocateParams,
    pub merge: MergeConfig,
    pub stages: StageCount,
    /// Sparsity of the corroborating run, as a multiple of `k`; `None`
    /// disables pruning.
    pub prune_factor: Option<f64>,
    /// Minimum duration as a multiple of the longest `HashToBins` span.
    pub duration_factor: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            alpha: 0.05,
            bins_per_tone: 8.0,
            window: WindowParams::default(),
            locate: LocateParams::default(),
            merge: MergeConfig::default(),
            stages: StageCount::default(),
            prune_factor: Some(2.0),
            duration_factor: 2.0,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bins_per_tone >= 1.0) {
            return Err(CsfftError::config("bins_per_tone must be at least 1"));
        }
        if !(self.duration_factor > 1.0) {
            return Err(CsfftError::config("duration_factor must exceed 1"));
        }
        if matches!(self.prune_factor, Some(p) if !(p >= 1.0)) {
            return Err(CsfftError::config("prune_factor must be at least 1"));
        }
        self.merge.validate()?;
        self.locate.validate()
    }

    pub fn bins(&self, k: usize) -> usize {
        ((self.bins_per_tone * k as f64).ceil() as usize).max(2)
    }

    pub fn window_for(&self, k: usize) -> Result<FlatWindow> {
        FlatWindow::build(self.bins(k), k, self.delta, self.alpha, self.window)
    }

    fn sparsities(&self, k: usize) -> Vec<usize> {
        let mut ks = vec![k];
        if let Some(p) = self.prune_factor {
            ks.push(((p * k as f64).round() as usize).max(k));
        }
        ks
    }

    /// Shortest duration for which every planned stage fits:
    /// `duration_factor · σ_max · (M − 1)` over both runs.
    pub fn min_duration(&self, k: usize, eta: f64) -> Result<f64> {
        let mut t: f64 = 0.0;
        for kk in self.sparsities(k) {
            let w = self.window_for(kk)?;
            let sigma_max = 2.0 / (w.bins as f64 * eta);
            t = t.max(self.duration_factor * sigma_max * (w.support() - 1) as f64);
        }
        Ok(t)
    }
}

/// Everything one stage needs besides the signal and the randomness.
#[derive(Debug, Clone)]
pub struct StageContext {
    pub hash: HashConfig,
    pub window: FlatWindow,
    pub locate: LocateParams,
    pub eta: f64,
}

impl StageContext {
    pub fn new(config: &RecoveryConfig, k: usize, eta: f64, band_limit: f64) -> Result<Self> {
        let window = config.window_for(k)?;
        let hash = HashConfig::new(window.bins, config.delta, config.alpha, eta, band_limit)?;
        Ok(Self { hash, window, locate: config.locate, eta })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub tones: Vec<Tone>,
    pub draw: HashDraw,
    pub samples_used: u64,
    /// Frequencies located before the offset filter.
    pub located: usize,
    pub final_width: f64,
    pub ideal_final_width: f64,
}

/// One hashing: locate, then read magnitudes from a fresh `HashToBins` at a
/// random center `τ`, skipping frequencies near a bin edge.
pub fn one_stage<R: Rng + ?Sized>(
    source: &SignalSource,
    ctx: &StageContext,
    rng: &mut R,
    trace: Option<&mut Vec<RoundTrace>>,
) -> Result<StageResult> {
    let draw = draw_hash(&ctx.hash, rng);
    let located = locate_k_signal(source, &draw, &ctx.window, &ctx.locate, ctx.eta, rng, trace)?;
    let hasher = BinHasher::new(&draw, &ctx.window);
    let reach = hasher.half_span();
    let tau = reach + rng.random::<f64>() * (source.duration() - 2.0 * reach);
    let m = hasher.measure(source, tau)?;
    let bins = ctx.window.bins;
    let tones = located
        .frequencies
        .iter()
        .filter(|&&f| !event_off(f, &draw, bins, ctx.hash.alpha))
        .map(|&f| Tone::new(m.u_hat[hash_bin(f, &draw, bins)] * Complex64::from_polar(1.0, -2.0 * PI * f * tau), f))
        .collect();
    let last = located.schedule.rounds.last().expect("schedule has a last round");
    Ok(StageResult {
        tones,
        draw,
        samples_used: ((located.hash_calls + 1) * ctx.window.support()) as u64,
        located: located.frequencies.len(),
        final_width: last.width,
        ideal_final_width: located.schedule.ideal_last_width,
    })
}

/// `R` independent stages, seeded sequentially from `rng` and run in parallel.
pub fn run_stages<R: Rng + ?Sized>(source: &SignalSource, ctx: &StageContext, stages: usize, rng: &mut R) -> Result<Vec<StageResult>> {
    let seeds: Vec<u64> = (0..stages).map(|_| rng.random()).collect();
    seeds
        .into_par_iter()
        .map(|seed| one_stage(source, ctx, &mut ChaCha8Rng::seed_from_u64(seed), None))
        .collect()
}

/// Pools all stage tones and emits a coordinate-wise median wherever at least
/// `b_frac·R` entries fall within `cη` of each other.
pub fn merge_stages(results: &[StageResult], merge: &MergeConfig, eta: f64) -> ToneSet {
    let stages = results.len();
    let mut pool: Vec<Tone> = results.iter().flat_map(|r| r.tones.iter().copied()).collect();
    pool.sort_by(|a, b| a.f.total_cmp(&b.f));
    let threshold = merge.b_frac * stages as f64;
    let width = merge.c * eta;
    let upper = |x: f64| pool.partition_point(|t| t.f <= x);
    let lower = |x: f64| pool.partition_point(|t| t.f < x);
    let mut out = Vec::new();
    let mut i = 0;
    while i < pool.len() {
        let f = pool[i].f;
        let count = upper(f + width) - i;
        if count as f64 >= threshold && count > 0 {
            let cluster = &pool[lower(f - width)..upper(f + 2.0 * width)];
            let mut re: Vec<f64> = cluster.iter().map(|t| t.v.re).collect();
            let mut im: Vec<f64> = cluster.iter().map(|t| t.v.im).collect();
            let mut fs: Vec<f64> = cluster.iter().map(|t| t.f).collect();
            let (re, im, fm) = (median(&mut re), median(&mut im), median(&mut fs));
            if let (Some(re), Some(im), Some(fm)) = (re, im, fm) {
                out.push(Tone::new(Complex64::new(re, im), fm));
            }
            i = upper(f + 2.0 * width + eta / 2.0);
        } else {
            i += 1;
        }
    }
    ToneSet::with_min_separation(out)
}

/// One full merged run at sparsity `k`.
pub fn merged_run<R: Rng + ?Sized>(
    source: &SignalSource,
    config: &RecoveryConfig,
    k: usize,
    eta: f64,
    rng: &mut R,
) -> Result<(ToneSet, Vec<StageResult>)> {
    let ctx = StageContext::new(config, k, eta, source.band_limit())?;
    let stages = run_stages(source, &ctx, config.stages.for_sparsity(k), rng)?;
    Ok((merge_stages(&stages, &config.merge, eta), stages))
}

/// Keeps tones of `first` whose frequency is within `window` of some tone in
/// `second`.
pub fn intersect(first: &ToneSet, second: &ToneSet, window: f64) -> ToneSet {
    let kept =
        first.tones.iter().filter(|a| second.tones.iter().any(|b| (a.f - b.f).abs() <= window)).copied().collect();
    ToneSet::with_min_separation(kept)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneOutcome {
    pub tones: ToneSet,
    pub first: ToneSet,
    pub second: Option<ToneSet>,
    pub stages: Vec<StageResult>,
    pub second_stages: Vec<StageResult>,
}

/// Runs the merged pipeline at `k` and at `prune_factor·k`, keeping only the
/// first run's tones corroborated by the second.
pub fn prune_twice<R: Rng + ?Sized>(
    source: &SignalSource,
    config: &RecoveryConfig,
    k: usize,
    eta: f64,
    rng: &mut R,
) -> Result<PruneOutcome> {
    let ks = config.sparsities(k);
    let (first, stages) = merged_run(source, config, ks[0], eta, rng)?;
    let Some(&k2) = ks.get(1) else {
        return Ok(PruneOutcome { tones: first.clone(), first, second: None, stages, second_stages: Vec::new() });
    };
    let (second, second_stages) = merged_run(source, config, k2, eta, rng)?;
    let tones = intersect(&first, &second, config.merge.c * eta);
    Ok(PruneOutcome { tones, first, second: Some(second), stages, second_stages })
}

/// The `k` largest-magnitude tones (ties go to the lower frequency), returned
/// in frequency order; the flag is set when fewer than `k` were available.
pub fn top_k(tones: &ToneSet, k: usize) -> (ToneSet, bool) {
    let mut sorted = tones.tones.clone();
    sorted.sort_by(|a, b| b.v.norm().total_cmp(&a.v.norm()).then(a.f.total_cmp(&b.f)));
    let short = sorted.len() < k;
    sorted.truncate(k);
    sorted.sort_by(|a, b| a.f.total_cmp(&b.f));
    (ToneSet::with_min_separation(sorted), short)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub tones: Vec<Tone>,
    /// Fewer than `k` tones survived merging and pruning.
    pub short_of_k: bool,
    pub metrics: RecoveryMetrics,
    pub samples_used: u64,
    pub stages: usize,
    pub second_stages: usize,
    /// Total tones located before filtering, across all stages.
    pub located: usize,
    pub min_duration: f64,
    /// Largest ratio of the used to the ideal last-round width over stages.
    pub last_width_ratio: f64,
    pub wall_time_s: f64,
    pub k: usize,
    pub eta: f64,
    pub band_limit: f64,
    pub duration: f64,
    pub seed: u64,
    pub config: RecoveryConfig,
}

/// Recovers `k` tones from `source` with frequency separation `eta`.
pub fn recover(source: &SignalSource, k: usize, eta: f64, config: &RecoveryConfig, seed: u64) -> Result<RecoveryReport> {
    let start = Instant::now();
    if k == 0 {
        return Err(CsfftError::config("k must be at least 1"));
    }
    if !(eta > 0.0) {
        return Err(CsfftError::config("eta must be positive"));
    }
    config.validate()?;
    let min_duration = config.min_duration(k, eta)?;
    if source.duration() < min_duration {
        return Err(CsfftError::InfeasibleDuration { required: min_duration, given: source.duration() });
    }
    let before = source.samples_taken();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pruned = prune_twice(source, config, k, eta, &mut rng)?;
    let samples_used = source.samples_taken() - before;
    let (tones, short_of_k) = top_k(&pruned.tones, k);
    let all_stages = || pruned.stages.iter().chain(&pruned.second_stages);
    let metrics = evaluate(source, &tones.tones, config.delta, eta / 2.0);
    Ok(RecoveryReport {
        tones: tones.tones,
        short_of_k,
        metrics,
        samples_used,
        stages: pruned.stages.len(),
        second_stages: pruned.second_stages.len(),
        located: all_stages().map(|s| s.located).sum(),
        min_duration,
        last_width_ratio: all_stages().map(|s| s.final_width / s.ideal_final_width).fold(0.0, f64::max),
        wall_time_s: start.elapsed().as_secs_f64(),
        k,
        eta,
        band_limit: source.band_limit(),
        duration: source.duration(),
        seed,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(tones: Vec<Tone>) -> StageResult {
        StageResult {
            tones,
            draw: HashDraw { sigma: 1.0, b: 0.0 },
            samples_used: 0,
            located: 0,
            final_width: 1.0,
            ideal_final_width: 1.0,
        }
    }

    fn t(mag: f64, f: f64) -> Tone {
        Tone::new(Complex64::new(mag, 0.0), f)
    }

    #[test]
    fn identical_stages_merge_exactly() {
        let tones = vec![t(1.0, -100.0), t(0.5, 40.0), t(2.0, 300.0)];
        let results: Vec<_> = (0..5).map(|_| stage(tones.clone())).collect();
        let merged = merge_stages(&results, &MergeConfig::default(), 30.0);
        assert_eq!(merged.tones, tones);
    }

    #[test]
    fn corrupted_stage_is_outvoted() {
        let good = vec![t(1.0, 10.0), t(1.0, 100.0)];
        let mut results: Vec<_> = (0..6).map(|_| stage(good.clone())).collect();
        results.push(stage(vec![t(1.0, 25.0), t(3.0, 115.0)]));
        let merged = merge_stages(&results, &MergeConfig::default(), 30.0);
        assert_eq!(merged.tones, good);
    }

    #[test]
    fn sparse_pool_merges_to_nothing() {
        let results = vec![stage(vec![t(1.0, 0.0)]), stage(vec![]), stage(vec![]), stage(vec![t(1.0, 50.0)])];
        assert!(merge_stages(&results, &MergeConfig::default(), 30.0).is_empty());
    }

    #[test]
    fn top_k_keeps_largest() {
        let set = ToneSet::with_min_separation(vec![t(3.0, 0.0), t(1.0, 10.0), t(2.0, 20.0)]);
        let (kept, short) = top_k(&set, 2);
        assert!(!short);
        assert_eq!(kept.tones, vec![t(3.0, 0.0), t(2.0, 20.0)]);
        let (all, short) = top_k(&set, 5);
        assert!(short);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn top_k_tie_prefers_lower_frequency() {
        let set = ToneSet::with_min_separation(vec![t(1.0, 50.0), t(1.0, -50.0)]);
        assert_eq!(top_k(&set, 1).0.tones, vec![t(1.0, -50.0)]);
    }

    #[test]
    fn intersection_drops_uncorroborated() {
        let a = ToneSet::with_min_separation(vec![t(1.0, 0.0), t(1.0, 77.0)]);
        let b = ToneSet::with_min_separation(vec![t(1.0, 0.5)]);
        assert_eq!(intersect(&a, &b, 3.0).tones, vec![t(1.0, 0.0)]);
        assert!(intersect(&ToneSet::with_min_separation(vec![]), &b, 3.0).is_empty());
    }

    #[test]
    fn stage_count_formula() {
        let s = StageCount { base: 0.0, per_log2k: 2.0, fixed: None };
        assert_eq!(s.for_sparsity(1), 2);
        assert_eq!(s.for_sparsity(8), 6);
        assert_eq!(StageCount { fixed: Some(1), ..s }.for_sparsity(8), 1);
    }
}
