//! Sample-efficient recovery of k-sparse continuous-time Fourier signals.
//!
//! A signal `x(t) = Σ v_i e^{2πi f_i t} + g(t)` is observed on `[0, T]`. The
//! recovery pipeline hashes frequencies into bins with random dilations,
//! locates each bin's frequency by a voting t-ary search on phase differences,
//! estimates magnitudes, and merges repeated stages into a `k`-tone estimate.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod expsum;
pub mod hashing;
pub mod locate;
pub mod metrics;
pub mod quadrature;
pub mod recovery;
pub mod signal;
pub mod window;

pub use error::{CsfftError, Result};
pub use hashing::{draw_hash, hash_to_bins, BinMeasurement, HashConfig, HashDraw};
pub use locate::{locate_k_signal, LocateParams};
pub use metrics::{eq2_total, eq3_error, match_tones, tone_dist2, ToneError};
pub use recovery::{recover, RecoveryConfig, RecoveryReport};
pub use signal::{make_instance, InstanceParams, InstanceSpec, NoiseModel, SignalSource, Tone, ToneSet};
pub use window::{build_window, FlatWindow, WindowParams};

pub use num_complex::Complex64;
