//! Curves, per-curve transform parameters and the monotone time warp.
//!
//! A curve is a vector of `M` amplitude samples on the uniform grid
//! `t_i = i / (M - 1)`. Each curve carries a [`TransformParams`]: an
//! amplitude map `y -> alpha * y + beta` and a nonlinear time warp `h(t)`
//! obtained from an unconstrained coefficient function `w(t)` through
//!
//! ```text
//! h(t) = (1/Z) * integral_0^t exp( integral_0^r w(s) ds ) dr
//! ```
//!
//! with `Z` chosen so that `h(1) = 1`. Any finite `w` gives a strictly
//! increasing `h`, because the integrand of the outer integral is positive.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequencies of the Fourier basis of the coefficient function.
pub const FREQUENCIES: [f64; 2] = [0.5, 1.0];

/// Number of sine (and of cosine) weights per curve.
pub const NUM_FREQUENCIES: usize = FREQUENCIES.len();

/// Number of warp weights per curve (sine and cosine).
pub const NUM_WEIGHTS: usize = 2 * NUM_FREQUENCIES;

/// Default bound on the magnitude of every warp weight.
pub const DEFAULT_WEIGHT_BOUND: f64 = 5.0;

/// Shortest curve accepted.
pub const MIN_CURVE_LEN: usize = 4;

/// Column names of the warp weights, in flat weight-index order.
pub const WEIGHT_NAMES: [&str; NUM_WEIGHTS] = ["phi_half", "omega_half", "phi_one", "omega_one"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Curve {
    samples: Vec<f64>,
}

impl Curve {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < MIN_CURVE_LEN {
            return Err(Error::InvalidCurve(format!(
                "curve has {} samples, at least {MIN_CURVE_LEN} required",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Curve { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time coordinate of sample `i` on the unit grid.
    pub fn time(&self, i: usize) -> f64 {
        grid_time(i, self.samples.len())
    }
}

impl TryFrom<Vec<f64>> for Curve {
    type Error = Error;

    fn try_from(samples: Vec<f64>) -> Result<Self> {
        Curve::new(samples)
    }
}

impl From<Curve> for Vec<f64> {
    fn from(c: Curve) -> Self {
        c.samples
    }
}

#[inline]
pub(crate) fn grid_time(i: usize, m: usize) -> f64 {
    i as f64 / (m - 1) as f64
}

/// Per-curve transform: amplitude scale `alpha`, amplitude offset `beta`,
/// and the Fourier weights of the warp coefficient function.
///
/// `sin_weights[k]` and `cos_weights[k]` multiply `sin(2 pi f_k t)` and
/// `cos(2 pi f_k t)` for `f_k = FREQUENCIES[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub alpha: f64,
    pub beta: f64,
    pub sin_weights: [f64; NUM_FREQUENCIES],
    pub cos_weights: [f64; NUM_FREQUENCIES],
}

impl Default for TransformParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TransformParams {
    pub const IDENTITY: TransformParams = TransformParams {
        alpha: 1.0,
        beta: 0.0,
        sin_weights: [0.0; NUM_FREQUENCIES],
        cos_weights: [0.0; NUM_FREQUENCIES],
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Checks `alpha > 0`, finiteness, and `|weight| <= weight_bound`.
    pub fn validate(&self, weight_bound: f64) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParams(format!(
                "alpha must be finite and positive, got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "beta is not finite ({})",
                self.beta
            )));
        }
        for (idx, w) in self.weights().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{} is not finite",
                    WEIGHT_NAMES[idx]
                )));
            }
            if w.abs() > weight_bound {
                return Err(Error::ParamOutOfRange(format!(
                    "{} = {w} exceeds the weight bound {weight_bound}",
                    WEIGHT_NAMES[idx]
                )));
            }
        }
        Ok(())
    }

    /// Warp weights in flat order: `phi_half, omega_half, phi_one, omega_one`.
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        (0..NUM_WEIGHTS).map(move |i| self.weight(i))
    }

    pub fn weight(&self, idx: usize) -> f64 {
        let k = idx / 2;
        if idx.is_multiple_of(2) {
            self.sin_weights[k]
        } else {
            self.cos_weights[k]
        }
    }

    pub fn set_weight(&mut self, idx: usize, value: f64) {
        let k = idx / 2;
        if idx.is_multiple_of(2) {
            self.sin_weights[k] = value;
        } else {
            self.cos_weights[k] = value;
        }
    }

    pub fn has_warp(&self) -> bool {
        self.weights().any(|w| w != 0.0)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// A set of `N >= 2` equal-length curves with their transform parameters
/// and optional class labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSet {
    curves: Vec<Curve>,
    params: Vec<TransformParams>,
    labels: Option<Vec<i64>>,
}

impl CurveSet {
    /// Curves with identity parameters and no labels.
    pub fn new(curves: Vec<Curve>) -> Result<Self> {
        let n = curves.len();
        Self::with_params(curves, vec![TransformParams::IDENTITY; n], None)
    }

    pub fn labeled(curves: Vec<Curve>, labels: Vec<i64>) -> Result<Self> {
        let n = curves.len();
        Self::with_params(curves, vec![TransformParams::IDENTITY; n], Some(labels))
    }

    pub fn with_params(
        curves: Vec<Curve>,
        params: Vec<TransformParams>,
        labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        if curves.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "a curve set needs at least 2 curves, got {}",
                curves.len()
            )));
        }
        let m = curves[0].len();
        if let Some(i) = curves.iter().position(|c| c.len() != m) {
            return Err(Error::InvalidCurve(format!(
                "curve {i} has {} samples but curve 0 has {m}",
                curves[i].len()
            )));
        }
        if params.len() != curves.len() {
            return Err(Error::InvalidParams(format!(
                "{} parameter records for {} curves",
                params.len(),
                curves.len()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != curves.len() {
                return Err(Error::InvalidCurve(format!(
                    "{} labels for {} curves",
                    labels.len(),
                    curves.len()
                )));
            }
        }
        Ok(CurveSet {
            curves,
            params,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Number of samples per curve.
    pub fn curve_len(&self) -> usize {
        self.curves[0].len()
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn params(&self) -> &[TransformParams] {
        &self.params
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Same curves and parameters with the labels dropped.
    pub fn unlabeled(&self) -> CurveSet {
        CurveSet {
            curves: self.curves.clone(),
            params: self.params.clone(),
            labels: None,
        }
    }

    pub fn into_parts(self) -> (Vec<Curve>, Vec<TransformParams>, Option<Vec<i64>>) {
        (self.curves, self.params, self.labels)
    }

    /// Applies every curve's parameters, returning the transformed curves.
    pub fn transformed(&self) -> Result<Vec<Curve>> {
        self.curves
            .iter()
            .zip(&self.params)
            .map(|(c, p)| apply_transform(c, p))
            .collect()
    }
}

/// `h(t)` sampled on the curve grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpTable {
    h_values: Vec<f64>,
    // h scaled to grid units, computed without an intermediate rounding to
    // [0,1] so that the identity warp lands exactly on grid nodes.
    positions: Vec<f64>,
}

impl WarpTable {
    pub fn h_values(&self) -> &[f64] {
        &self.h_values
    }

    pub fn len(&self) -> usize {
        self.h_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_values.is_empty()
    }

    /// Resamples `samples` at the warped times by piecewise-linear
    /// interpolation.
    pub fn resample(&self, samples: &[f64]) -> Vec<f64> {
        debug_assert_eq!(samples.len(), self.positions.len());
        self.positions
            .iter()
            .map(|&pos| interpolate(samples, pos))
            .collect()
    }
}

/// Linear interpolation of `samples` at fractional index `pos`.
fn interpolate(samples: &[f64], pos: f64) -> f64 {
    let last = samples.len() - 1;
    if pos <= 0.0 {
        return samples[0];
    }
    if pos >= last as f64 {
        return samples[last];
    }
    let j = pos.floor() as usize;
    let frac = pos - j as f64;
    if frac == 0.0 {
        samples[j]
    } else {
        samples[j] + frac * (samples[j + 1] - samples[j])
    }
}

/// Evaluates `w(t) = sum_k phi_k sin(2 pi f_k t) + omega_k cos(2 pi f_k t)`.
pub fn coefficient_function(params: &TransformParams, t: f64) -> f64 {
    FREQUENCIES
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let arg = 2.0 * PI * f * t;
            params.sin_weights[k] * arg.sin() + params.cos_weights[k] * arg.cos()
        })
        .sum()
}

/// Computes the monotone warp on an `m`-point grid.
///
/// Both nested integrals use the cumulative trapezoidal rule on the same
/// grid. The result is normalized so that `h(0) = 0` and `h(1) = 1` exactly.
pub fn warp_function(params: &TransformParams, m: usize) -> Result<WarpTable> {
    if m < MIN_CURVE_LEN {
        return Err(Error::InvalidCurve(format!(
            "warp grid needs at least {MIN_CURVE_LEN} points, got {m}"
        )));
    }
    let dt = 1.0 / (m - 1) as f64;
    let w: Vec<f64> = (0..m)
        .map(|i| coefficient_function(params, grid_time(i, m)))
        .collect();

    // Outer integral kept in units of dt; the factor cancels on
    // normalization and keeps the identity warp integer-exact.
    let mut cumulative = Vec::with_capacity(m);
    cumulative.push(0.0);
    let mut inner = 0.0;
    let mut prev_rate = 1.0;
    let mut outer = 0.0;
    for i in 1..m {
        inner += 0.5 * dt * (w[i - 1] + w[i]);
        let rate = inner.exp();
        if !rate.is_finite() || rate == 0.0 {
            return Err(Error::ParamOutOfRange(format!(
                "exp of the integrated coefficient function is not representable \
                 (integral {inner:.3e} at t = {:.4}); warp weights are too large",
                grid_time(i, m)
            )));
        }
        outer += 0.5 * (prev_rate + rate);
        cumulative.push(outer);
        prev_rate = rate;
    }
    if !outer.is_finite() {
        return Err(Error::ParamOutOfRange(
            "warp normalizing constant overflowed".into(),
        ));
    }

    let span = (m - 1) as f64;
    let mut h_values: Vec<f64> = cumulative.iter().map(|c| c / outer).collect();
    let mut positions: Vec<f64> = cumulative.iter().map(|c| c * span / outer).collect();
    h_values[m - 1] = 1.0;
    positions[m - 1] = span;

    if let Some(i) = h_values.windows(2).position(|p| p[1] <= p[0]) {
        return Err(Error::Numerical(format!(
            "warp lost strict monotonicity between nodes {i} and {}",
            i + 1
        )));
    }
    Ok(WarpTable {
        h_values,
        positions,
    })
}

/// Resamples `curve` at `h(t_i)` and maps amplitudes through
/// `alpha * y + beta`.
pub fn apply_transform(curve: &Curve, params: &TransformParams) -> Result<Curve> {
    let samples = transform_samples(curve.samples(), params)?;
    Ok(Curve { samples })
}

pub(crate) fn transform_samples(samples: &[f64], params: &TransformParams) -> Result<Vec<f64>> {
    let warped = if params.has_warp() {
        warp_function(params, samples.len())?.resample(samples)
    } else {
        samples.to_vec()
    };
    let out: Vec<f64> = if params.alpha == 1.0 && params.beta == 0.0 {
        warped
    } else {
        warped
            .into_iter()
            .map(|y| params.alpha * y + params.beta)
            .collect()
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "transformed curve contains non-finite samples".into(),
        ));
    }
    Ok(out)
}

/// Which parameter groups [`recenter_params`] touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecenterGroups {
    pub warp: bool,
    pub scale: bool,
    pub offset: bool,
}

impl RecenterGroups {
    pub const ALL: RecenterGroups = RecenterGroups {
        warp: true,
        scale: true,
        offset: true,
    };
}

/// Removes the collective drift of a parameter set: zero-mean warp weights,
/// zero-mean `beta`, unit geometric-mean `alpha`.
pub fn recenter_params(params: &mut [TransformParams], groups: RecenterGroups) {
    if params.is_empty() {
        return;
    }
    let n = params.len() as f64;
    if groups.warp {
        for idx in 0..NUM_WEIGHTS {
            let mean = params.iter().map(|p| p.weight(idx)).sum::<f64>() / n;
            for p in params.iter_mut() {
                let w = p.weight(idx);
                p.set_weight(idx, w - mean);
            }
        }
    }
    if groups.offset {
        let mean = params.iter().map(|p| p.beta).sum::<f64>() / n;
        for p in params.iter_mut() {
            p.beta -= mean;
        }
    }
    if groups.scale {
        let log_mean = params.iter().map(|p| p.alpha.ln()).sum::<f64>() / n;
        for p in params.iter_mut() {
            p.alpha = (p.alpha.ln() - log_mean).exp();
        }
    }
}

/// Recenters every parameter group of `set`.
pub fn recenter(set: &CurveSet) -> CurveSet {
    let mut out = set.clone();
    recenter_params(&mut out.params, RecenterGroups::ALL);
    out
}
