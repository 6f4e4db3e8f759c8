//! Noisy t-ary frequency search, run for all bins of one hashing at once.
//!
//! Each round splits every bin's candidate interval `[l_j − Δl/2, l_j + Δl/2]`
//! into `t` regions. A pair of `HashToBins` calls lagged by `σβ` seconds yields
//! per-bin phase `c_j = arg(û′_j/û_j) ≈ 2πσβ·f mod 2π`; every frequency
//! consistent with that phase inside the interval votes for its region and the
//! `c_n/2` regions on each side. After `R_loc` repetitions with fresh random
//! lags the best-supported region (if it holds a strict majority of the
//! repetitions) becomes the next interval, enlarged by `c_n/2` regions per side.
//! The last round uses the longest lag the duration allows and reports the
//! median of the candidates in the winning region instead of an interval.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CsfftError, Result};
use crate::hashing::{BinHasher, HashDraw};
use crate::signal::SignalSource;
use crate::window::FlatWindow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocateParams {
    /// Approximation factor `C > 1`.
    pub approx_factor: f64,
    /// Neighbor votes `c_n` (even); `2` votes one region on each side.
    pub neighbors: usize,
    /// Regions per geometric round; `None` picks `max(4, round(ln(F·T)))`.
    pub regions: Option<usize>,
    /// Scale for geometric rounds; `None` means `1/√C`.
    pub s_main: Option<f64>,
    /// Scale for the last round; `None` means `1/C`.
    pub s_last: Option<f64>,
    /// `R_loc = max(min_reps, ⌈c_r·log_C(t·C)⌉)`.
    pub c_r: f64,
    pub min_reps: usize,
}

impl Default for LocateParams {
    fn default() -> Self {
        Self {
            approx_factor: 16.0,
            neighbors: 2,
            regions: None,
            s_main: None,
            s_last: None,
            c_r: 1.0,
            min_reps: 4,
        }
    }
}

impl LocateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.approx_factor > 1.0) {
            return Err(CsfftError::config("approximation factor C must exceed 1"));
        }
        if !self.neighbors.is_multiple_of(2) {
            return Err(CsfftError::config("neighbor count c_n must be even"));
        }
        if matches!(self.regions, Some(t) if t < 4) {
            return Err(CsfftError::config("region count t must be at least 4"));
        }
        for s in [self.s_main, self.s_last].into_iter().flatten() {
            if !(s > 0.0 && s < 1.0) {
                return Err(CsfftError::config(format!("scale s must lie in (0, 1), got {s}")));
            }
        }
        if self.min_reps == 0 {
            return Err(CsfftError::config("min_reps must be at least 1"));
        }
        Ok(())
    }

    pub fn s_main(&self) -> f64 {
        self.s_main.unwrap_or(1.0 / self.approx_factor.sqrt())
    }

    pub fn s_last(&self) -> f64 {
        self.s_last.unwrap_or(1.0 / self.approx_factor)
    }

    pub fn regions_for(&self, band_limit: f64, duration: f64) -> usize {
        self.regions.unwrap_or_else(|| ((band_limit * duration).ln().round() as usize).max(4))
    }

    pub fn reps_for(&self, regions: usize) -> usize {
        let c = self.approx_factor;
        let r = (self.c_r * (regions as f64 * c).ln() / c.ln()).ceil() as usize;
        r.max(self.min_reps)
    }
}

/// One round's geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRound {
    /// Interval width `Δl` (Hz).
    pub width: f64,
    /// Region count `t`.
    pub regions: usize,
    pub s: f64,
    /// Base lag `β̂` in sample-index units; lags are drawn from `[β̂/2, β̂]`.
    pub beta_hat: f64,
    pub reps: usize,
    pub is_last: bool,
}

impl SearchRound {
    pub fn region_width(&self) -> f64 {
        self.width / self.regions as f64
    }
}

/// The full round schedule for one hashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub rounds: Vec<SearchRound>,
    /// Longest lag (s) that keeps both calls of a pair inside `[0, T]`.
    pub max_lag: f64,
    /// Width the last round would use if the lag were not capped by `T`.
    pub ideal_last_width: f64,
}

impl Schedule {
    /// Plans geometric rounds of width `2F/t′^{i−1}` for as long as their base
    /// lag `t·s/(2Δl)` fits, followed by one last round at the maximal lag.
    pub fn plan(
        params: &LocateParams,
        sigma: f64,
        window: &FlatWindow,
        band_limit: f64,
        duration: f64,
    ) -> Result<Self> {
        params.validate()?;
        let span = 2.0 * sigma * window.half_width as f64;
        let max_lag = duration - span;
        let t = params.regions_for(band_limit, duration);
        let s = params.s_main();
        let shrink = t as f64 / (1 + params.neighbors) as f64;
        if shrink <= 1.0 {
            return Err(CsfftError::config("regions must exceed 1 + c_n for the search to shrink"));
        }
        let first_lag = t as f64 * s / (2.0 * 2.0 * band_limit);
        if !(max_lag > first_lag) {
            return Err(CsfftError::InfeasibleDuration { required: span + first_lag, given: duration });
        }
        let reps = params.reps_for(t);
        let mut rounds = Vec::new();
        let mut width = 2.0 * band_limit;
        loop {
            let lag = t as f64 * s / (2.0 * width);
            if lag > max_lag {
                break;
            }
            rounds.push(SearchRound { width, regions: t, s, beta_hat: lag / sigma, reps, is_last: false });
            width /= shrink;
        }
        let s_last = params.s_last();
        let regions_last = ((2.0 * max_lag * width / s_last).ceil() as usize).max(4);
        let ideal_last_width = s_last * regions_last as f64 / duration;
        rounds.push(SearchRound {
            width,
            regions: regions_last,
            s: 2.0 * max_lag * width / regions_last as f64,
            beta_hat: max_lag / sigma,
            reps: params.reps_for(regions_last),
            is_last: true,
        });
        Ok(Self { rounds, max_lag, ideal_last_width })
    }

    /// Total `HashToBins` calls the schedule makes.
    pub fn hash_calls(&self) -> usize {
        self.rounds.iter().map(|r| 2 * r.reps).sum()
    }
}

/// Per-bin phase of `û′/û` for one lagged pair.
#[derive(Debug, Clone)]
pub struct PhaseObservation {
    /// `None` where either bin value is zero or non-finite.
    pub angles: Vec<Option<f64>>,
    pub magnitudes: Vec<f64>,
    /// `σβ` in seconds.
    pub lag: f64,
}

/// Runs `HashToBins` at center `τ` and `τ + σβ`, where `τ` sits a fraction
/// `gamma ∈ [0, 1]` of the way through the slack left by the pair. Consumes
/// `2M` samples.
pub fn observe_phase(source: &SignalSource, hasher: &BinHasher, gamma: f64, beta: f64) -> Result<PhaseObservation> {
    let reach = hasher.half_span();
    let lag = hasher.draw().sigma * beta;
    let slack = source.duration() - 2.0 * reach - lag;
    if slack < -1e-12 * source.duration() {
        return Err(CsfftError::Budget { start: 0.0, end: 2.0 * reach + lag, duration: source.duration() });
    }
    let tau = reach + gamma.clamp(0.0, 1.0) * slack.max(0.0);
    let first = hasher.measure(source, tau)?;
    let second = hasher.measure(source, tau + lag)?;
    let mut angles = Vec::with_capacity(first.u_hat.len());
    let mut magnitudes = Vec::with_capacity(first.u_hat.len());
    for (u, u2) in first.u_hat.iter().zip(&second.u_hat) {
        let valid = u.norm_sqr() > 0.0 && u2.norm_sqr() > 0.0 && u.is_finite() && u2.is_finite();
        angles.push(valid.then(|| (u2 / u).arg()));
        magnitudes.push(0.5 * (u.norm() + u2.norm()));
    }
    Ok(PhaseObservation { angles, magnitudes, lag })
}

/// Reduces `f` onto `[−F, F]` by a width-`2F` wrap when it falls outside.
fn wrap_band(f: f64, band_limit: f64) -> f64 {
    if f.abs() <= band_limit {
        f
    } else {
        (f + band_limit).rem_euclid(2.0 * band_limit) - band_limit
    }
}

/// Frequencies `θ = (c + 2πs)/(2πσβ)` for every integer `s` that puts `θ`
/// inside `[center − Δl/2, center + Δl/2]`, wrapped onto `[−F, F]`.
pub fn candidate_frequencies(angle: f64, lag: f64, center: f64, width: f64, band_limit: f64) -> Vec<f64> {
    let lo = lag * (center - width / 2.0) - angle / (2.0 * PI);
    let hi = lag * (center + width / 2.0) - angle / (2.0 * PI);
    let (s_lo, s_hi) = (lo.ceil() as i64, hi.floor() as i64);
    (s_lo..=s_hi)
        .map(|s| wrap_band((angle + 2.0 * PI * s as f64) / (2.0 * PI * lag), band_limit))
        .collect()
}

/// `B × t` vote counters plus the candidate log used by the median.
#[derive(Debug, Clone)]
pub struct VoteTable {
    pub regions: usize,
    pub counts: Vec<Vec<u32>>,
    /// Per bin: `(candidate, region, repetition)`.
    pub observations: Vec<Vec<(f64, usize, usize)>>,
}

impl VoteTable {
    pub fn new(bins: usize, regions: usize) -> Self {
        Self { regions, counts: vec![vec![0; regions]; bins], observations: vec![Vec::new(); bins] }
    }

    /// Region index of `f` within the bin's interval, `None` if outside.
    pub fn region_of(&self, f: f64, center: f64, width: f64) -> Option<usize> {
        let lo = center - width / 2.0;
        let pos = (f - lo) / (width / self.regions as f64);
        if !(pos >= 0.0) || pos > self.regions as f64 {
            return None;
        }
        Some((pos.floor() as usize).min(self.regions - 1))
    }

    /// Adds one vote per candidate to its region and `neighbors/2` regions on
    /// each side (clamped). Out-of-interval candidates are dropped.
    pub fn vote(&mut self, bin: usize, candidates: &[f64], center: f64, width: f64, neighbors: usize, rep: usize) {
        let half = neighbors / 2;
        for &f in candidates {
            let Some(q) = self.region_of(f, center, width) else { continue };
            let lo = q.saturating_sub(half);
            let hi = (q + half).min(self.regions - 1);
            for c in &mut self.counts[bin][lo..=hi] {
                *c += 1;
            }
            self.observations[bin].push((f, q, rep));
        }
    }

    /// Region with the most votes, provided it exceeds `reps/2`. Ties go to
    /// the region holding the most candidates itself, then the lower index.
    pub fn winner(&self, bin: usize, reps: usize) -> Option<usize> {
        let counts = &self.counts[bin];
        let best = *counts.iter().max()?;
        if 2 * best as usize <= reps {
            return None;
        }
        let mut direct = vec![0u32; self.regions];
        for &(_, q, _) in &self.observations[bin] {
            direct[q] += 1;
        }
        (0..self.regions).filter(|&q| counts[q] == best).max_by(|&a, &b| direct[a].cmp(&direct[b]).then(b.cmp(&a)))
    }
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Outcome for one bin after a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BinOutcome {
    Unresolved,
    Interval { center: f64, width: f64 },
    Frequency(f64),
}

/// One trace line: what a round saw in one bin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub bin: usize,
    pub width: f64,
    pub regions: usize,
    pub lags: Vec<f64>,
    pub votes: Vec<u32>,
    pub winner: Option<usize>,
}

/// Vote rounds for every bin whose `centers[j]` is `Some`.
pub fn locate_inner<R: Rng + ?Sized>(
    source: &SignalSource,
    hasher: &BinHasher,
    bins: usize,
    round: &SearchRound,
    neighbors: usize,
    centers: &[Option<f64>],
    rng: &mut R,
    mut trace: Option<(&mut Vec<RoundTrace>, usize)>,
) -> Result<(Vec<BinOutcome>, Vec<f64>)> {
    let band_limit = source.band_limit();
    let mut table = VoteTable::new(bins, round.regions);
    let mut strength = vec![0.0; bins];
    let mut lags = Vec::with_capacity(round.reps);
    for rep in 0..round.reps {
        let beta = round.beta_hat * rng.random_range(0.5..=1.0);
        let gamma: f64 = rng.random();
        let obs = observe_phase(source, hasher, gamma, beta)?;
        lags.push(obs.lag);
        for (j, center) in centers.iter().enumerate() {
            let Some(center) = *center else { continue };
            strength[j] += obs.magnitudes[j] / round.reps as f64;
            let Some(angle) = obs.angles[j] else { continue };
            let cands = candidate_frequencies(angle, obs.lag, center, round.width, band_limit);
            table.vote(j, &cands, center, round.width, neighbors, rep);
        }
    }
    let half = neighbors / 2;
    let region_width = round.region_width();
    let mut outcomes = Vec::with_capacity(bins);
    for (j, center) in centers.iter().enumerate() {
        let winner = center.and_then(|_| table.winner(j, round.reps));
        if let Some((log, idx)) = trace.as_mut() {
            if center.is_some() {
                log.push(RoundTrace {
                    round: *idx,
                    bin: j,
                    width: round.width,
                    regions: round.regions,
                    lags: lags.clone(),
                    votes: table.counts[j].clone(),
                    winner,
                });
            }
        }
        let outcome = match (center, winner) {
            (Some(center), Some(q)) => {
                let lo = center - round.width / 2.0;
                if round.is_last {
                    let (q_lo, q_hi) = (q.saturating_sub(half), q + half);
                    let mut picked: Vec<f64> = table.observations[j]
                        .iter()
                        .filter(|(_, r, _)| (q_lo..=q_hi).contains(r))
                        .map(|(f, _, _)| *f)
                        .collect();
                    median(&mut picked).map_or(BinOutcome::Unresolved, BinOutcome::Frequency)
                } else {
                    BinOutcome::Interval {
                        center: lo + (q as f64 + 0.5) * region_width,
                        width: (1 + neighbors) as f64 * region_width,
                    }
                }
            }
            _ => BinOutcome::Unresolved,
        };
        outcomes.push(outcome);
    }
    Ok((outcomes, strength))
}

/// Frequencies found by one hashing, each with the mean bin magnitude seen in
/// the last round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocateOutput {
    pub frequencies: Vec<f64>,
    pub strengths: Vec<f64>,
    pub schedule: Schedule,
    /// `HashToBins` calls actually made (rounds stop early once every bin is
    /// unresolved).
    pub hash_calls: usize,
}

/// Runs the whole schedule and deduplicates frequencies closer than `η/2`,
/// keeping the stronger one.
pub fn locate_k_signal<R: Rng + ?Sized>(
    source: &SignalSource,
    draw: &HashDraw,
    window: &FlatWindow,
    params: &LocateParams,
    eta: f64,
    rng: &mut R,
    mut trace: Option<&mut Vec<RoundTrace>>,
) -> Result<LocateOutput> {
    let schedule = Schedule::plan(params, draw.sigma, window, source.band_limit(), source.duration())?;
    let bins = window.bins;
    let hasher = BinHasher::new(draw, window);
    let mut centers: Vec<Option<f64>> = vec![Some(0.0); bins];
    let mut widths = vec![2.0 * source.band_limit(); bins];
    let mut found: Vec<(f64, f64)> = Vec::new();
    let mut hash_calls = 0;
    for (idx, round) in schedule.rounds.iter().enumerate() {
        // intervals are uniform across bins within a round
        debug_assert!(centers.iter().zip(&widths).all(|(c, w)| c.is_none() || (w - round.width).abs() <= 1e-9 * round.width));
        let (outcomes, strength) =
            locate_inner(source, &hasher, bins, round, params.neighbors, &centers, rng, trace.as_deref_mut().map(|t| (t, idx)))?;
        hash_calls += 2 * round.reps;
        for (j, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                BinOutcome::Unresolved => centers[j] = None,
                BinOutcome::Interval { center, width } => {
                    centers[j] = Some(center);
                    widths[j] = width;
                }
                BinOutcome::Frequency(f) => found.push((f, strength[j])),
            }
        }
        if centers.iter().all(Option::is_none) {
            break;
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(found.len());
    for (f, s) in found {
        match kept.last_mut() {
            Some(last) if f - last.0 < eta / 2.0 => {
                if s > last.1 {
                    *last = (f, s);
                }
            }
            _ => kept.push((f, s)),
        }
    }
    Ok(LocateOutput {
        frequencies: kept.iter().map(|k| k.0).collect(),
        strengths: kept.iter().map(|k| k.1).collect(),
        schedule,
        hash_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_window_has_at_most_two_candidates() {
        // σβΔl = 0.8 < 1
        let c = candidate_frequencies(1.0, 0.008, 0.0, 100.0, 1000.0);
        assert!(c.len() <= 2);
    }

    #[test]
    fn candidate_count_bound() {
        for &(lag, width) in &[(0.01, 1000.0), (0.37, 55.0), (3.0, 0.9), (1e-4, 8400.0)] {
            for a in [-3.0, -0.2, 0.0, 1.5, 3.1] {
                let n = candidate_frequencies(a, lag, 13.0, width, 1e6).len();
                assert!(n <= (lag * width).ceil() as usize + 1, "lag={lag} width={width} n={n}");
            }
        }
    }

    #[test]
    fn noiseless_candidate_matches_truth() {
        let f = 321.123;
        let lag = 0.0123;
        let angle = crate::window::wrap_pi(2.0 * PI * lag * f);
        let c = candidate_frequencies(angle, lag, 300.0, 200.0, 4200.0);
        assert!(c.iter().any(|x| (x - f).abs() < 1e-9));
    }

    #[test]
    fn vote_mid_region_touches_three_counters() {
        let mut t = VoteTable::new(1, 10);
        t.vote(0, &[5.5], 5.0, 10.0, 2, 0);
        assert_eq!(t.counts[0].iter().filter(|&&c| c > 0).count(), 3);
        assert_eq!(t.counts[0][5], 1);
    }

    #[test]
    fn vote_at_edge_is_clamped() {
        let mut t = VoteTable::new(1, 10);
        t.vote(0, &[0.01], 5.0, 10.0, 2, 0);
        assert_eq!(t.counts[0][..3], [1, 1, 0]);
    }

    #[test]
    fn out_of_interval_candidate_dropped() {
        let mut t = VoteTable::new(1, 10);
        t.vote(0, &[11.0, -0.5], 5.0, 10.0, 2, 0);
        assert!(t.counts[0].iter().all(|&c| c == 0));
        assert!(t.observations[0].is_empty());
    }

    #[test]
    fn winner_needs_majority() {
        let mut t = VoteTable::new(1, 8);
        t.counts[0] = vec![0, 2, 2, 1, 0, 0, 0, 0];
        assert_eq!(t.winner(0, 5), None);
        t.counts[0] = vec![0, 2, 3, 1, 0, 0, 0, 0];
        assert_eq!(t.winner(0, 5), Some(2));
    }

    #[test]
    fn tied_neighbors_resolve_to_direct_region() {
        let mut t = VoteTable::new(1, 12);
        for rep in 0..5 {
            t.vote(0, &[6.5], 6.0, 12.0, 2, rep);
        }
        assert_eq!(t.counts[0][5..8], [5, 5, 5]);
        assert_eq!(t.winner(0, 5), Some(6));
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn wrap_band_width_two_f() {
        assert_eq!(wrap_band(5.0, 10.0), 5.0);
        assert!((wrap_band(12.0, 10.0) + 8.0).abs() < 1e-12);
        assert!((wrap_band(-13.0, 10.0) - 7.0).abs() < 1e-12);
    }
}
