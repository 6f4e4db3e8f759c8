//! Config-driven experiments: instance generation, recovery trials, metric
//! evaluation, parameter sweeps and baseline comparisons.
//!
//! Every command writes `run.json` next to its outputs with the command name,
//! the effective config, its SHA-256 and the base seed. Trial seeds are derived
//! from `(seed, trial, stream)` so results do not depend on thread scheduling.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{dense_dft_baseline, grid_oracle, nyquist_reconstruct, GridOracleConfig, NyquistSamples};
use crate::error::{CsfftError, Result};
use crate::locate::RoundTrace;
use crate::metrics::{evaluate, RecoveryMetrics};
use crate::recovery::{one_stage, recover, RecoveryConfig, RecoveryReport, StageContext};
use crate::signal::{make_instance, InstanceParams, InstanceSpec, NoiseModel, SignalSource, Tone};

/// Named instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `k = 5`, `F = 4200`, `η = 30`, magnitudes in `[0.5, 1]`.
    Piano,
}

/// Noise as configured; `snr` is `min|v| / σ` for complex Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseConfig {
    #[default]
    None,
    Snr { snr: f64 },
    Gaussian { variance: f64 },
    Decay { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    pub preset: Option<Preset>,
    /// Load a fixed instance instead of drawing one per trial.
    pub path: Option<PathBuf>,
    pub k: usize,
    #[serde(rename = "F")]
    pub band_limit: f64,
    pub eta: f64,
    pub magnitude_range: (f64, f64),
    pub noise: NoiseConfig,
    /// Seconds; `None` uses the minimum feasible duration.
    #[serde(rename = "T")]
    pub duration: Option<f64>,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            preset: None,
            path: None,
            k: 5,
            band_limit: 4200.0,
            eta: 30.0,
            magnitude_range: (0.5, 1.0),
            noise: NoiseConfig::None,
            duration: None,
        }
    }
}

impl InstanceConfig {
    fn resolved(&self) -> Self {
        let mut out = self.clone();
        if let Some(Preset::Piano) = self.preset {
            out.k = 5;
            out.band_limit = 4200.0;
            out.eta = 30.0;
            out.magnitude_range = (0.5, 1.0);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Snr,
    K,
    Eta,
    /// Duration as a multiple of the minimum feasible duration.
    DurationFactor,
    Delta,
    Alpha,
    BinsPerTone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub recovery: RecoveryConfig,
    pub oracle: GridOracleConfig,
    pub seed: u64,
    pub trials: usize,
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceConfig::default(),
            recovery: RecoveryConfig::default(),
            oracle: GridOracleConfig::default(),
            seed: 0,
            trials: 1,
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(CsfftError::config("trials must be at least 1"));
        }
        let inst = self.instance.resolved();
        if inst.path.is_none() {
            if inst.k == 0 {
                return Err(CsfftError::config("instance k must be at least 1"));
            }
            if !(inst.eta > 0.0) {
                return Err(CsfftError::config("instance eta must be positive"));
            }
        }
        if let NoiseConfig::Snr { snr } = inst.noise {
            if !(snr > 0.0) {
                return Err(CsfftError::config(format!("snr must be positive, got {snr}")));
            }
        }
        self.recovery.validate()
    }

    /// Applies one sweep value.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CsfftError::config(format!("k must be a positive integer, got {v}")))
            }
        };
        match parameter {
            SweepParameter::Snr => cfg.instance.noise = NoiseConfig::Snr { snr: value },
            SweepParameter::K => {
                cfg.instance.preset = None;
                cfg.instance.k = count(value)?;
            }
            SweepParameter::Eta => {
                cfg.instance.preset = None;
                cfg.instance.eta = value;
            }
            SweepParameter::DurationFactor => {
                let inst = cfg.instance.resolved();
                cfg.instance.duration = Some(value * self.recovery.min_duration(inst.k, inst.eta)?);
            }
            SweepParameter::Delta => cfg.recovery.delta = value,
            SweepParameter::Alpha => cfg.recovery.alpha = value,
            SweepParameter::BinsPerTone => cfg.recovery.bins_per_tone = value,
        }
        cfg.sweep = None;
        Ok(cfg)
    }
}

/// Seed for `(base, trial, stream)`.
pub fn trial_seed(base: u64, trial: usize, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    h.update(stream.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// One materialized trial instance.
#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub spec: InstanceSpec,
    pub source: SignalSource,
}

/// Builds the instance for `trial`.
pub fn build_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Trial> {
    let inst = cfg.instance.resolved();
    let delta = cfg.recovery.delta;
    let spec = match &inst.path {
        Some(path) => serde_json::from_str::<InstanceSpec>(&fs::read_to_string(path)?)?,
        None => {
            let seed = trial_seed(cfg.seed, trial, "instance");
            let duration = match inst.duration {
                Some(t) => t,
                None => cfg.recovery.min_duration(inst.k, inst.eta)?,
            };
            let params = InstanceParams {
                k: inst.k,
                band_limit: inst.band_limit,
                eta: inst.eta,
                magnitude_range: inst.magnitude_range,
                noise: NoiseModel::None,
                duration,
                seed,
            };
            let clean = make_instance(&params)?;
            let noise = match inst.noise {
                NoiseConfig::None => NoiseModel::None,
                NoiseConfig::Gaussian { variance } => NoiseModel::Gaussian { variance },
                NoiseConfig::Decay { rate } => NoiseModel::Decay { rate },
                NoiseConfig::Snr { snr } => {
                    let weakest = clean.tones().tones.iter().map(|t| t.v.norm()).fold(f64::INFINITY, f64::min);
                    NoiseModel::Gaussian { variance: (weakest / snr).powi(2) }
                }
            };
            let mut spec = InstanceSpec::from_source(&clean, inst.eta, delta, seed);
            spec.noise = noise;
            spec
        }
    };
    let source = spec.to_source()?;
    Ok(Trial { index: trial, spec, source })
}

/// `run.json` contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub config: ExperimentConfig,
}

fn write_manifest(out_dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        trials: cfg.trials,
        config: cfg.clone(),
    };
    write_json(&out_dir.join("run.json"), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(w.flush()?)
}

fn prepare(out_dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    write_manifest(out_dir, command, cfg)
}

/// Writes `instance-NNN.json` per trial, plus `samples-NNN.csv` on a uniform
/// grid when `trace` is set.
pub fn cmd_gen(cfg: &ExperimentConfig, out_dir: &Path, trace: bool) -> Result<Vec<PathBuf>> {
    prepare(out_dir, "gen", cfg)?;
    let mut written = Vec::new();
    for i in 0..cfg.trials {
        let trial = build_trial(cfg, i)?;
        let path = out_dir.join(format!("instance-{i:03}.json"));
        write_json(&path, &trial.spec)?;
        written.push(path);
        if trace {
            let n = 4096;
            let t = trial.source.duration();
            let times: Vec<f64> = (0..n).map(|j| t * j as f64 / (n - 1) as f64).collect();
            let file = File::create(out_dir.join(format!("samples-{i:03}.csv")))?;
            trial.source.write_trace(&times, BufWriter::new(file))?;
        }
    }
    Ok(written)
}

/// Grid-oracle result stored next to a recovery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleRecord {
    pub tones: Vec<Tone>,
    pub low_confidence: bool,
    pub samples_used: u64,
    pub metrics: RecoveryMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub recover_seed: u64,
    pub instance: InstanceSpec,
    pub report: RecoveryReport,
    pub oracle: Option<OracleRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoverOutput {
    pub config_hash: String,
    pub seed: u64,
    pub trials: Vec<TrialRecord>,
}

fn run_trial(cfg: &ExperimentConfig, trial: usize, with_oracle: bool) -> Result<(Trial, TrialRecord)> {
    let t = build_trial(cfg, trial)?;
    let seed = trial_seed(cfg.seed, trial, "recover");
    let report = recover(&t.source, t.spec.k, t.spec.eta, &cfg.recovery, seed)?;
    let oracle = if with_oracle {
        let o = grid_oracle(&t.source, t.spec.k, &cfg.oracle)?;
        let metrics = evaluate(&t.source, &o.tones.tones, cfg.recovery.delta, t.spec.eta / 2.0);
        Some(OracleRecord { tones: o.tones.tones, low_confidence: o.low_confidence, samples_used: o.samples_used, metrics })
    } else {
        None
    };
    let record = TrialRecord { trial, recover_seed: seed, instance: t.spec.clone(), report, oracle };
    Ok((t, record))
}

/// Runs every trial and writes `recover.json` and `tones.csv`; with `trace`,
/// one extra stage of trial 0 is replayed into `trace.jsonl`.
pub fn cmd_recover(cfg: &ExperimentConfig, out_dir: &Path, with_oracle: bool, trace: bool) -> Result<RecoverOutput> {
    prepare(out_dir, "recover", cfg)?;
    let runs = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, i, with_oracle))
        .collect::<Result<Vec<_>>>()?;
    if trace {
        let (first, record) = &runs[0];
        let ctx = StageContext::new(&cfg.recovery, record.instance.k, record.instance.eta, first.source.band_limit())?;
        let mut rounds: Vec<RoundTrace> = Vec::new();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(trial_seed(cfg.seed, 0, "trace"));
        one_stage(&first.source, &ctx, &mut rng, Some(&mut rounds))?;
        let mut w = BufWriter::new(File::create(out_dir.join("trace.jsonl"))?);
        for r in &rounds {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let output = RecoverOutput {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        trials: runs.into_iter().map(|(_, r)| r).collect(),
    };
    write_json(&out_dir.join("recover.json"), &output)?;
    write_tones_csv(&out_dir.join("tones.csv"), &output)?;
    Ok(output)
}

#[derive(Serialize)]
struct ToneRow<'a> {
    trial: usize,
    source: &'a str,
    index: usize,
    f: f64,
    re: f64,
    im: f64,
    magnitude: f64,
}

fn write_tones_csv(path: &Path, output: &RecoverOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in &output.trials {
        let mut groups: Vec<(&str, &[Tone])> = vec![("truth", &rec.instance.tones), ("recovered", &rec.report.tones)];
        if let Some(o) = &rec.oracle {
            groups.push(("oracle", &o.tones));
        }
        for (source, tones) in groups {
            for (index, t) in tones.iter().enumerate() {
                w.serialize(ToneRow { trial: rec.trial, source, index, f: t.f, re: t.v.re, im: t.v.im, magnitude: t.v.norm() })?;
            }
        }
    }
    Ok(w.flush()?)
}

/// One `eval.csv` row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub trial: usize,
    pub k: usize,
    pub found: usize,
    pub matched: usize,
    pub eq2_total: f64,
    pub eq3: f64,
    pub eq3_std_err: f64,
    pub noise_level: f64,
    pub eq2_ratio: f64,
    pub eq3_ratio: f64,
    /// `max |f′ − f|·T` over matched pairs.
    pub max_df_t: f64,
    pub max_dv: f64,
    pub samples_used: u64,
}

fn eval_row(rec: &TrialRecord, delta: f64) -> Result<EvalRow> {
    let source = rec.instance.to_source()?;
    let t = source.duration();
    let m = evaluate(&source, &rec.report.tones, delta, rec.instance.eta / 2.0);
    Ok(EvalRow {
        trial: rec.trial,
        k: rec.instance.k,
        found: rec.report.tones.len(),
        matched: m.matching.pairs.len(),
        max_df_t: m.matching.pairs.iter().map(|p| p.error.df * t).fold(0.0, f64::max),
        max_dv: m.matching.pairs.iter().map(|p| p.error.dv).fold(0.0, f64::max),
        eq2_total: m.eq2_total,
        eq3: m.eq3.value,
        eq3_std_err: m.eq3.std_err,
        noise_level: m.noise_level,
        eq2_ratio: m.eq2_ratio,
        eq3_ratio: m.eq3_ratio,
        samples_used: rec.report.samples_used,
    })
}

/// Recomputes metrics from a saved `recover.json` (default: the one in
/// `out_dir`) and writes `eval.csv`.
pub fn cmd_eval(cfg: &ExperimentConfig, out_dir: &Path, input: Option<&Path>) -> Result<Vec<EvalRow>> {
    prepare(out_dir, "eval", cfg)?;
    let default_input = out_dir.join("recover.json");
    let input = input.unwrap_or(&default_input);
    let saved: RecoverOutput = serde_json::from_reader(BufReader::new(File::open(input)?))?;
    let rows = saved.trials.par_iter().map(|rec| eval_row(rec, rec.instance.delta)).collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(out_dir.join("eval.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// One `sweep.csv` row; failed trials keep their row with `status` set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub trial: usize,
    pub status: String,
    pub k: usize,
    pub duration: f64,
    pub samples_used: u64,
    pub matched: usize,
    pub eq2_ratio: f64,
    pub eq3_ratio: f64,
    pub max_df_t: f64,
    pub wall_time_s: f64,
}

fn status_of(e: &CsfftError) -> &'static str {
    match e {
        CsfftError::InfeasibleDuration { .. } => "infeasible",
        CsfftError::Config(_) => "config",
        _ => "error",
    }
}

fn sweep_cell(base: &ExperimentConfig, parameter: SweepParameter, value: f64, trial: usize) -> SweepRow {
    let mut row = SweepRow {
        parameter,
        value,
        trial,
        status: "ok".into(),
        k: 0,
        duration: f64::NAN,
        samples_used: 0,
        matched: 0,
        eq2_ratio: f64::NAN,
        eq3_ratio: f64::NAN,
        max_df_t: f64::NAN,
        wall_time_s: 0.0,
    };
    let result = base.with_parameter(parameter, value).and_then(|cfg| {
        cfg.validate()?;
        run_trial(&cfg, trial, false)
    });
    match result {
        Ok((t, rec)) => {
            let m = &rec.report.metrics;
            row.k = rec.instance.k;
            row.duration = t.source.duration();
            row.samples_used = rec.report.samples_used;
            row.matched = m.matching.pairs.len();
            row.eq2_ratio = m.eq2_ratio;
            row.eq3_ratio = m.eq3_ratio;
            row.max_df_t = m.matching.pairs.iter().map(|p| p.error.df * row.duration).fold(0.0, f64::max);
            row.wall_time_s = rec.report.wall_time_s;
        }
        Err(e) => row.status = status_of(&e).into(),
    }
    row
}

/// Runs `trials` trials at every sweep value and writes long-form `sweep.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<SweepRow>> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| CsfftError::config("sweep needs a `sweep` section"))?;
    if sweep.values.is_empty() {
        return Err(CsfftError::config("sweep values are empty"));
    }
    prepare(out_dir, "sweep", cfg)?;
    let cells: Vec<(f64, usize)> =
        sweep.values.iter().flat_map(|&v| (0..cfg.trials).map(move |t| (v, t))).collect();
    let rows: Vec<SweepRow> = cells.par_iter().map(|&(v, t)| sweep_cell(cfg, sweep.parameter, v, t)).collect();
    let mut w = csv::Writer::from_path(out_dir.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// One `baselines.csv` row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRow {
    pub trial: usize,
    pub method: String,
    pub samples_used: u64,
    pub matched: usize,
    pub max_df_t: f64,
    /// Mean squared error against `x*` over `[0, T]`.
    pub eq3: f64,
    pub eq3_ratio: f64,
}

fn tone_row(trial: usize, method: &str, source: &SignalSource, tones: &[Tone], samples: u64, delta: f64, eta: f64) -> BaselineRow {
    let m = evaluate(source, tones, delta, eta / 2.0);
    let t = source.duration();
    BaselineRow {
        trial,
        method: method.into(),
        samples_used: samples,
        matched: m.matching.pairs.len(),
        max_df_t: m.matching.pairs.iter().map(|p| p.error.df * t).fold(0.0, f64::max),
        eq3: m.eq3.value,
        eq3_ratio: m.eq3_ratio,
    }
}

fn nyquist_row(trial: usize, source: &SignalSource, delta: f64) -> Result<BaselineRow> {
    let samples = NyquistSamples::take(source)?;
    let t = source.duration();
    let points = 4096;
    let mse = (0..points)
        .map(|i| {
            let at = (i as f64 + 0.5) * t / points as f64;
            (nyquist_reconstruct(&samples, at) - crate::signal::evaluate_pure(source.tones(), at)).norm_sqr()
        })
        .sum::<f64>()
        / points as f64;
    let level = source.noise_level(delta);
    Ok(BaselineRow {
        trial,
        method: "nyquist".into(),
        samples_used: samples.values.len() as u64,
        matched: 0,
        max_df_t: f64::NAN,
        eq3: mse,
        eq3_ratio: if level > 0.0 { mse / level } else { f64::INFINITY },
    })
}

/// Compares `recover` with the grid oracle, the dense DFT and Nyquist-rate
/// sinc reconstruction on each trial; writes `baselines.csv`.
pub fn cmd_baselines(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<BaselineRow>> {
    prepare(out_dir, "baselines", cfg)?;
    let delta = cfg.recovery.delta;
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|i| -> Result<Vec<BaselineRow>> {
            let (t, rec) = run_trial(cfg, i, true)?;
            let (k, eta) = (t.spec.k, t.spec.eta);
            let src = &t.source;
            let mut rows = vec![tone_row(i, "csfft", src, &rec.report.tones, rec.report.samples_used, delta, eta)];
            let o = rec.oracle.expect("oracle requested");
            rows.push(tone_row(i, "grid_oracle", src, &o.tones, o.samples_used, delta, eta));
            let n = (2.0 * src.band_limit() * src.duration()).ceil() as usize;
            let dense = dense_dft_baseline(src, n, k)?;
            rows.push(tone_row(i, "dense_dft", src, &dense.tones.tones, dense.samples_used, delta, eta));
            rows.push(nyquist_row(i, src, delta)?);
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<BaselineRow> = per_trial.into_iter().flatten().collect();
    let mut w = csv::Writer::from_path(out_dir.join("baselines.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Reads a `trace.jsonl` back.
pub fn read_trace(path: &Path) -> Result<Vec<RoundTrace>> {
    BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
