//! Synthetic alignment benchmarks: randomly transformed copies of a known
//! seed curve, one transform family at a time, with ground truth retained.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::congeal::TransformFamily;
use crate::curves::{
    apply_transform, grid_time, Curve, CurveSet, TransformParams, DEFAULT_WEIGHT_BOUND, NUM_WEIGHTS,
};
use crate::error::{Error, Result};
use crate::objective::location_variance;

/// Sample count of the builtin seed curves.
pub const BUILTIN_LEN: usize = 150;

pub const MAX_DIFFICULTY: u8 = 5;

/// Closed-form seed curves on `t` in `[0, 1]`, with
/// `g(c, w) = exp(-((t - c) / w)^2)`:
///
/// | name         | definition                                              |
/// |--------------|---------------------------------------------------------|
/// | `bumps2`     | `g(0.3, 0.07) + 0.6 g(0.7, 0.1)`                        |
/// | `bumps3`     | `0.8 g(0.2, 0.05) - 0.5 g(0.5, 0.08) + g(0.8, 0.06)`    |
/// | `dampedsine` | `exp(-2.5 t) sin(6 pi t)`                               |
/// | `skewpeak`   | `u^2 exp(2 (1 - u))`, `u = t / 0.25`                    |
/// | `chirp`      | `sin(2 pi (1.5 t + 2 t^2)) g(0.5, 0.35)`                |
pub const BUILTIN_NAMES: [&str; 5] = ["bumps2", "bumps3", "dampedsine", "skewpeak", "chirp"];

fn gauss(t: f64, center: f64, width: f64) -> f64 {
    (-((t - center) / width).powi(2)).exp()
}

fn builtin_value(name: &str, t: f64) -> Option<f64> {
    let v = match name {
        "bumps2" => gauss(t, 0.3, 0.07) + 0.6 * gauss(t, 0.7, 0.1),
        "bumps3" => 0.8 * gauss(t, 0.2, 0.05) - 0.5 * gauss(t, 0.5, 0.08) + gauss(t, 0.8, 0.06),
        "dampedsine" => (-2.5 * t).exp() * (6.0 * PI * t).sin(),
        "skewpeak" => {
            let u = t / 0.25;
            u * u * (2.0 * (1.0 - u)).exp()
        }
        "chirp" => (2.0 * PI * (1.5 * t + 2.0 * t * t)).sin() * gauss(t, 0.5, 0.35),
        _ => return None,
    };
    Some(v)
}

/// Builtin seed curve `name` sampled at `m` points.
pub fn builtin_curve_with_len(name: &str, m: usize) -> Result<Curve> {
    if builtin_value(name, 0.0).is_none() {
        return Err(Error::Config(format!(
            "unknown builtin seed curve {name:?}; available: {}",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let samples = (0..m)
        .map(|i| builtin_value(name, grid_time(i, m)).unwrap())
        .collect();
    Curve::new(samples)
}

/// Builtin seed curve `name` at the default length.
pub fn builtin_curve(name: &str) -> Result<Curve> {
    builtin_curve_with_len(name, BUILTIN_LEN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed_curve: Curve,
    pub family: TransformFamily,
    /// 1 (mild) to 5 (severe).
    pub difficulty: u8,
    pub copies: usize,
    pub rng_seed: u64,
    /// Multiplies every parameter range; 0 yields exact copies. Normally 1.
    pub range_scale: f64,
}

impl SynthSpec {
    pub fn new(seed_curve: Curve, family: TransformFamily, difficulty: u8, rng_seed: u64) -> Self {
        SynthSpec {
            seed_curve,
            family,
            difficulty,
            copies: 50,
            rng_seed,
            range_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIFFICULTY).contains(&self.difficulty) {
            return Err(Error::Config(format!(
                "difficulty must be 1..={MAX_DIFFICULTY}, got {}",
                self.difficulty
            )));
        }
        if self.copies < 2 {
            return Err(Error::Config(format!(
                "at least 2 copies required, got {}",
                self.copies
            )));
        }
        if !(self.range_scale.is_finite() && self.range_scale >= 0.0) {
            return Err(Error::Config(
                "range_scale must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthDataset {
    pub curves: CurveSet,
    /// Parameters that generated each copy from the seed.
    pub ground_truth: Vec<TransformParams>,
    pub seed_curve: Curve,
}

/// Draws the generating parameters of one copy.
fn draw_params(spec: &SynthSpec, amplitude_std: f64, rng: &mut ChaCha8Rng) -> TransformParams {
    let d = spec.difficulty as f64 * spec.range_scale;
    let mut p = TransformParams::IDENTITY;
    match spec.family {
        TransformFamily::AmplitudeScale => {
            let half = (1.0 + 0.3 * d).ln();
            if half > 0.0 {
                p.alpha = rng.gen_range(-half..=half).exp();
            }
        }
        TransformFamily::AmplitudeOffset => {
            let half = 0.4 * d * amplitude_std;
            if half > 0.0 {
                p.beta = rng.gen_range(-half..=half);
            }
        }
        TransformFamily::TimeWarp => {
            let half = 0.5 * d;
            if half > 0.0 {
                for idx in 0..NUM_WEIGHTS {
                    let w: f64 = rng.gen_range(-half..=half);
                    p.set_weight(idx, w.clamp(-DEFAULT_WEIGHT_BOUND, DEFAULT_WEIGHT_BOUND));
                }
            }
        }
    }
    p
}

/// Emits `spec.copies` transformed copies of the seed curve.
///
/// Copy `i` draws from ChaCha stream `i` of the generator seeded with
/// `spec.rng_seed`, so copies are independent of generation order.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let amplitude_std = location_variance(spec.seed_curve.samples()).sqrt();
    let mut curves = Vec::with_capacity(spec.copies);
    let mut ground_truth = Vec::with_capacity(spec.copies);
    for i in 0..spec.copies {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        rng.set_stream(i as u64);
        let p = draw_params(spec, amplitude_std, &mut rng);
        curves.push(apply_transform(&spec.seed_curve, &p)?);
        ground_truth.push(p);
    }
    Ok(SynthDataset {
        curves: CurveSet::new(curves)?,
        ground_truth,
        seed_curve: spec.seed_curve.clone(),
    })
}

/// Mean RMSE between each aligned curve and the seed after removing the
/// global affine ambiguity.
///
/// One shared `(a, b)` is fitted by least squares so that `a * mean + b`
/// matches the seed, where `mean` is the pointwise mean of the aligned
/// curves; every aligned curve is mapped through it before comparison.
pub fn recovery_error(aligned: &[Curve], seed: &Curve) -> Result<f64> {
    if aligned.is_empty() {
        return Err(Error::InsufficientData("no aligned curves".into()));
    }
    let m = seed.len();
    if let Some(i) = aligned.iter().position(|c| c.len() != m) {
        return Err(Error::InvalidCurve(format!(
            "aligned curve {i} has {} samples, seed has {m}",
            aligned[i].len()
        )));
    }
    let n = aligned.len() as f64;
    // running mean: exact when all copies agree
    let mut mean = vec![0.0; m];
    for (k, c) in aligned.iter().enumerate() {
        for (acc, x) in mean.iter_mut().zip(c.samples()) {
            *acc += (x - *acc) / (k + 1) as f64;
        }
    }
    let (a, b) = affine_fit(&mean, seed.samples());
    let total: f64 = aligned
        .iter()
        .map(|c| {
            let sq: f64 = c
                .samples()
                .iter()
                .zip(seed.samples())
                .map(|(x, s)| (a * x + b - s).powi(2))
                .sum();
            (sq / m as f64).sqrt()
        })
        .sum();
    Ok(total / n)
}

/// Least-squares `(a, b)` minimizing `|a x + b - y|^2`. A constant `x`
/// falls back to `a = 1`.
fn affine_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    (a, my - a * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: TransformFamily, difficulty: u8, seed: u64) -> SynthSpec {
        SynthSpec::new(builtin_curve("bumps2").unwrap(), family, difficulty, seed)
    }

    #[test]
    fn builtins_exist_and_are_distinct() {
        let curves: Vec<Curve> = BUILTIN_NAMES
            .iter()
            .map(|n| builtin_curve(n).unwrap())
            .collect();
        for (i, a) in curves.iter().enumerate() {
            assert_eq!(a.len(), BUILTIN_LEN);
            for b in &curves[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert!(builtin_curve("nope").is_err());
    }

    #[test]
    fn zero_range_gives_exact_copies() {
        for family in TransformFamily::ALL {
            let mut s = spec(family, 3, 1);
            s.range_scale = 0.0;
            let ds = generate(&s).unwrap();
            assert_eq!(ds.curves.len(), 50);
            assert!(ds.curves.curves().iter().all(|c| *c == s.seed_curve));
            assert!(ds.ground_truth.iter().all(TransformParams::is_identity));
        }
    }

    #[test]
    fn offset_copies_differ_by_bounded_constants() {
        let s = spec(TransformFamily::AmplitudeOffset, 2, 9);
        let ds = generate(&s).unwrap();
        let bound = 0.4 * 2.0 * location_variance(s.seed_curve.samples()).sqrt();
        for c in ds.curves.curves() {
            let diffs: Vec<f64> = c
                .samples()
                .iter()
                .zip(s.seed_curve.samples())
                .map(|(a, b)| a - b)
                .collect();
            assert!(diffs.iter().all(|d| (d - diffs[0]).abs() < 1e-12));
            assert!(diffs[0].abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn family_purity() {
        for family in TransformFamily::ALL {
            let ds = generate(&spec(family, 4, 3)).unwrap();
            for p in &ds.ground_truth {
                assert_eq!(p.alpha != 1.0, family == TransformFamily::AmplitudeScale);
                assert_eq!(p.beta != 0.0, family == TransformFamily::AmplitudeOffset);
                assert_eq!(p.has_warp(), family == TransformFamily::TimeWarp);
                if family == TransformFamily::AmplitudeScale {
                    assert!(p.alpha <= 1.0 + 0.3 * 4.0 + 1e-12);
                    assert!(p.alpha >= 1.0 / (1.0 + 0.3 * 4.0) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn warp_copies_are_reorderings_of_the_seed() {
        let s = spec(TransformFamily::TimeWarp, 5, 21);
        let seed = s.seed_curve.samples();
        let (lo, hi) = seed
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let ds = generate(&s).unwrap();
        for c in ds.curves.curves() {
            let x = c.samples();
            assert!(x.iter().all(|&v| v >= lo - 1e-15 && v <= hi + 1e-15));
            assert_eq!(x[0], seed[0]);
            assert_eq!(x[x.len() - 1], seed[seed.len() - 1]);
            let rmse = (x
                .iter()
                .zip(seed)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / x.len() as f64)
                .sqrt();
            assert!(rmse > 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&spec(TransformFamily::TimeWarp, 3, 77)).unwrap();
        let b = generate(&spec(TransformFamily::TimeWarp, 3, 77)).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec(TransformFamily::TimeWarp, 3, 78)).unwrap();
        assert_ne!(a.ground_truth, c.ground_truth);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(TransformFamily::TimeWarp, 0, 1);
        assert!(generate(&s).is_err());
        s.difficulty = 6;
        assert!(generate(&s).is_err());
        s.difficulty = 2;
        s.copies = 1;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn recovery_error_examples() {
        let seed = builtin_curve("bumps3").unwrap();
        assert_eq!(recovery_error(&vec![seed.clone(); 50], &seed).unwrap(), 0.0);
        let shifted = Curve::new(seed.samples().iter().map(|v| v + 1.0).collect()).unwrap();
        assert!(recovery_error(&vec![shifted; 50], &seed).unwrap() < 1e-12);

        // direct computation on a difficulty-3 offset dataset
        let mut s = SynthSpec::new(seed.clone(), TransformFamily::AmplitudeOffset, 3, 4);
        s.copies = 50;
        let ds = generate(&s).unwrap();
        let err = recovery_error(ds.curves.curves(), &seed).unwrap();
        let offsets: Vec<f64> = ds.ground_truth.iter().map(|p| p.beta).collect();
        let mean_offset = offsets.iter().sum::<f64>() / 50.0;
        // shared fit is a pure shift here, so each copy's error is |beta_k - mean|
        let expected = offsets.iter().map(|b| (b - mean_offset).abs()).sum::<f64>() / 50.0;
        assert!(err > 0.0);
        assert!((err - expected).abs() < 1e-9, "{err} vs {expected}");
    }

    // Warp corruption saturates: past d = 3 the copies' mean is blurred
    // enough that the shared affine fit caps the error, and the expected
    // value can fall with difficulty (bumps2: 0.358 at d = 4, 0.342 at
    // d = 5 over 200 seeds).
    #[test]
    fn difficulty_is_monotone_on_average() {
        for family in TransformFamily::ALL {
            let levels = if family == TransformFamily::TimeWarp {
                3
            } else {
                MAX_DIFFICULTY
            };
            let mut means = Vec::new();
            for d in 1..=levels {
                let mut acc = 0.0;
                for seed in 0..10 {
                    let ds = generate(&spec(family, d, 100 + seed)).unwrap();
                    acc += recovery_error(ds.curves.curves(), &ds.seed_curve).unwrap();
                }
                means.push(acc / 10.0);
            }
            for w in means.windows(2) {
                assert!(w[1] >= w[0], "{family:?}: {means:?}");
            }
        }
    }
}
