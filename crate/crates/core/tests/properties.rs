use std::f64::consts::PI;

use csfft::expsum::ExpSum;
use csfft::hashing::{hash_bin, offset_angle};
use csfft::locate::{candidate_frequencies, Schedule, VoteTable};
use csfft::metrics::{dist_bounds_check, eq3_error};
use csfft::quadrature::CompositeQuadrature;
use csfft::*;
use proptest::prelude::*;

fn tone() -> impl Strategy<Value = Tone> {
    (-5.0f64..5.0, -5.0f64..5.0, -1000.0f64..1000.0).prop_map(|(re, im, f)| Tone::new(Complex64::new(re, im), f))
}

fn draw() -> impl Strategy<Value = HashDraw> {
    (1e-4f64..1e-2, 0.0f64..500.0).prop_map(|(sigma, b)| HashDraw { sigma, b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dist_is_symmetric_and_nonnegative(a in tone(), b in tone(), t in 0.01f64..50.0) {
        let ab = tone_dist2(&a, &b, t);
        let ba = tone_dist2(&b, &a, t);
        prop_assert!(ab >= -1e-12 * (1.0 + a.v.norm_sqr() + b.v.norm_sqr()));
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab.abs()));
        prop_assert!(tone_dist2(&a, &a, t).abs() < 1e-12);
    }

    #[test]
    fn dist_matches_quadrature(a in tone(), b in tone(), t in 0.01f64..2.0) {
        let direct = CompositeQuadrature::new(1e-10)
            .with_initial_panels(64)
            .integrate(0.0, t, |s| (a.at(s) - b.at(s)).norm_sqr()) / t;
        let closed = tone_dist2(&a, &b, t);
        prop_assert!((direct - closed).abs() <= 1e-6 * (1.0 + closed));
    }

    #[test]
    fn dist_sandwich_holds(a in tone(), df in -20.0f64..20.0, dv in (-1.0f64..1.0, -1.0f64..1.0), t in 0.1f64..10.0) {
        let b = Tone::new(a.v + Complex64::new(dv.0, dv.1), a.f + df);
        let bounds = dist_bounds_check(&a, &b, t);
        prop_assert!(bounds.lower <= bounds.lhs * (1.0 + 1e-9) + 1e-12);
        prop_assert!(bounds.lhs <= bounds.upper * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn expsum_mean_square_matches_quadrature(tones in prop::collection::vec(tone(), 1..5), t in 0.05f64..1.0) {
        let mut sum = ExpSum::new();
        sum.add_tones(&tones, 1.0);
        let closed = sum.mean_square(t);
        let direct = CompositeQuadrature::new(1e-10)
            .with_initial_panels(256)
            .integrate(0.0, t, |s| tones.iter().map(|x| x.at(s)).sum::<Complex64>().norm_sqr()) / t;
        prop_assert!((closed - direct).abs() <= 1e-6 * (1.0 + direct));
    }

    #[test]
    fn hash_bin_and_offset_are_consistent(f in -5000.0f64..5000.0, d in draw(), bins in 2usize..300) {
        let h = hash_bin(f, &d, bins);
        let o = offset_angle(f, &d, bins);
        prop_assert!(h < bins);
        prop_assert!(o.abs() <= PI / bins as f64 * (1.0 + 1e-9));
        let angle = 2.0 * PI * (d.sigma * (f - d.b)).rem_euclid(1.0);
        let rebuilt = (2.0 * PI * h as f64 / bins as f64 + o).rem_euclid(2.0 * PI);
        let gap = (rebuilt - angle).abs();
        prop_assert!(gap.min(2.0 * PI - gap) < 1e-9);
    }

    #[test]
    fn candidates_match_phase(angle in -PI..PI, lag in 1e-4f64..0.5, center in -200.0f64..200.0, width in 1.0f64..500.0) {
        let found = candidate_frequencies(angle, lag, center, width, 500.0);
        prop_assert!(found.len() as f64 >= (lag * width).floor());
        prop_assert!(found.len() as f64 <= (lag * width).floor() + 1.0);
        for f in found {
            prop_assert!((f - center).abs() <= width / 2.0 * (1.0 + 1e-9));
            let phase = 2.0 * PI * f * lag - angle;
            let wrapped = phase - 2.0 * PI * (phase / (2.0 * PI)).round();
            prop_assert!(wrapped.abs() < 1e-8);
        }
    }

    #[test]
    fn votes_are_bounded_by_reps(
        reps in 1usize..12,
        regions in 4usize..30,
        s in 0.1f64..0.5,
        angles in prop::collection::vec(-PI..PI, 12),
    ) {
        let (center, width) = (0.0, 200.0);
        let lag = regions as f64 * s / (2.0 * width);
        let mut table = VoteTable::new(1, regions);
        for (rep, &angle) in angles.iter().take(reps).enumerate() {
            let found = candidate_frequencies(angle, lag, center, width, 500.0);
            table.vote(0, &found, center, width, 2, rep);
        }
        prop_assert!(table.counts[0].iter().all(|&c| c as usize <= reps));
        if let Some(w) = table.winner(0, reps) {
            prop_assert!(w < regions);
            prop_assert!(2 * table.counts[0][w] as usize > reps);
        }
    }

    #[test]
    fn schedule_arithmetic(k in 1usize..6, factor in 1.0f64..3.0, seed in 0u64..1000) {
        let cfg = RecoveryConfig::default();
        let eta = 30.0;
        let band = 2000.0;
        let t = factor * cfg.min_duration(k, eta).unwrap();
        let window = cfg.window_for(k).unwrap();
        let hash = HashConfig::new(window.bins, cfg.delta, cfg.alpha, eta, band).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let d = draw_hash(&hash, &mut rng);
        let s = Schedule::plan(&cfg.locate, d.sigma, &window, band, t).unwrap();
        let span = 2.0 * d.sigma * window.half_width as f64;
        prop_assert!((s.max_lag - (t - span)).abs() < 1e-9 * t);
        prop_assert!(s.rounds.last().unwrap().is_last);
        prop_assert!(s.rounds.iter().filter(|r| r.is_last).count() == 1);
        prop_assert!((s.rounds[0].width - 2.0 * band).abs() < 1e-9);
        for w in s.rounds.windows(2) {
            prop_assert!(w[1].width <= w[0].width);
            prop_assert!(w[1].beta_hat >= w[0].beta_hat);
        }
        for r in &s.rounds {
            prop_assert!(r.beta_hat * d.sigma <= s.max_lag * (1.0 + 1e-12));
            prop_assert!(r.reps >= cfg.locate.min_reps);
        }
        let last = s.rounds.last().unwrap();
        prop_assert!((last.beta_hat * d.sigma - s.max_lag).abs() < 1e-9 * s.max_lag);
        prop_assert_eq!(s.hash_calls(), s.rounds.iter().map(|r| 2 * r.reps).sum::<usize>());
    }

    #[test]
    fn window_spectrum_is_even_and_unit_at_dc(bins in 2usize..40, k in 1usize..5) {
        let w = build_window(bins, k, 1e-6, 0.1).unwrap();
        prop_assert!((w.spectrum(0.0).re - 1.0).abs() < 1e-12);
        let theta = 0.37 * PI / bins as f64;
        prop_assert!((w.spectrum(theta).re - w.spectrum(-theta).re).abs() < 1e-12);
    }
}

fn small_instance(seed: u64, noise: NoiseModel) -> SignalSource {
    let cfg = RecoveryConfig::default();
    let t = cfg.min_duration(2, 30.0).unwrap();
    make_instance(&InstanceParams { k: 2, band_limit: 500.0, eta: 30.0, magnitude_range: (0.5, 1.0), noise, duration: t, seed })
        .unwrap()
}

#[test]
fn recovery_is_deterministic() {
    let cfg = RecoveryConfig::default();
    let noise = NoiseModel::Gaussian { variance: 1e-3 };
    let a = recover(&small_instance(4, noise.clone()), 2, 30.0, &cfg, 17).unwrap();
    let b = recover(&small_instance(4, noise), 2, 30.0, &cfg, 17).unwrap();
    assert_eq!(a.tones, b.tones);
    assert_eq!(a.samples_used, b.samples_used);
    let c = recover(&small_instance(4, NoiseModel::Gaussian { variance: 1e-3 }), 2, 30.0, &cfg, 18).unwrap();
    assert_ne!(a.tones, c.tones);
}

#[test]
fn sample_accounting_matches_counter() {
    let cfg = RecoveryConfig::default();
    let source = small_instance(9, NoiseModel::None);
    let report = recover(&source, 2, 30.0, &cfg, 1).unwrap();
    assert_eq!(report.samples_used, source.samples_taken());
    let hits = eq3_error(&report.tones, &source);
    assert!(hits.value < 1e-8);
}

#[test]
fn gaussian_noise_is_keyed_by_time() {
    let source = small_instance(1, NoiseModel::Gaussian { variance: 0.25 });
    let x = source.value_unmetered(1.25);
    assert_eq!(x, source.value_unmetered(1.25));
    let n = 100_000;
    let power: f64 = (0..n)
        .map(|i| {
            let t = i as f64 * source.duration() / n as f64;
            source.noise_at(t, Complex64::new(0.0, 0.0)).norm_sqr()
        })
        .sum::<f64>()
        / n as f64;
    assert!((power - 0.25).abs() < 0.05 * 0.25, "power {power}");
}

#[test]
fn instances_respect_separation() {
    for seed in 0..1000 {
        let k = 1 + (seed % 12) as usize;
        let source = make_instance(&InstanceParams {
            k,
            band_limit: 200.0,
            eta: 30.0,
            magnitude_range: (0.5, 1.0),
            noise: NoiseModel::None,
            duration: 1.0,
            seed,
        })
        .unwrap();
        let tones = &source.tones().tones;
        assert_eq!(tones.len(), k);
        assert!(csfft::signal::min_separation(tones) >= 30.0 * (1.0 - 1e-12), "seed {seed}");
        assert!(tones.iter().all(|t| t.f.abs() <= 200.0 && (0.5..=1.0).contains(&t.v.norm())));
    }
}
