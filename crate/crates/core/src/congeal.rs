//! Congealing: randomized coordinate-wise search over every curve's
//! transform parameters, minimizing the joint objective.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{
    recenter_params, transform_samples, Curve, CurveSet, RecenterGroups, TransformParams,
    DEFAULT_WEIGHT_BOUND, NUM_WEIGHTS, WEIGHT_NAMES,
};
use crate::error::{Error, Result};
use crate::objective::{ColumnCache, ObjectiveKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransformFamily {
    TimeWarp,
    AmplitudeScale,
    AmplitudeOffset,
}

impl TransformFamily {
    pub const ALL: [TransformFamily; 3] = [
        TransformFamily::TimeWarp,
        TransformFamily::AmplitudeScale,
        TransformFamily::AmplitudeOffset,
    ];

    /// Short name used on the command line and in manifests.
    pub fn short_name(self) -> &'static str {
        match self {
            TransformFamily::TimeWarp => "warp",
            TransformFamily::AmplitudeScale => "scale",
            TransformFamily::AmplitudeOffset => "offset",
        }
    }

    pub fn from_short_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.short_name() == name)
    }
}

/// Subset of transform families the optimizer may adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnabledTransforms {
    pub warp: bool,
    pub scale: bool,
    pub offset: bool,
}

impl EnabledTransforms {
    pub const ALL: EnabledTransforms = EnabledTransforms {
        warp: true,
        scale: true,
        offset: true,
    };

    pub const NONE: EnabledTransforms = EnabledTransforms {
        warp: false,
        scale: false,
        offset: false,
    };

    pub fn only(family: TransformFamily) -> Self {
        Self::NONE.with(family)
    }

    pub fn with(mut self, family: TransformFamily) -> Self {
        match family {
            TransformFamily::TimeWarp => self.warp = true,
            TransformFamily::AmplitudeScale => self.scale = true,
            TransformFamily::AmplitudeOffset => self.offset = true,
        }
        self
    }

    pub fn contains(&self, family: TransformFamily) -> bool {
        match family {
            TransformFamily::TimeWarp => self.warp,
            TransformFamily::AmplitudeScale => self.scale,
            TransformFamily::AmplitudeOffset => self.offset,
        }
    }

    pub fn families(&self) -> Vec<TransformFamily> {
        TransformFamily::ALL
            .into_iter()
            .filter(|f| self.contains(*f))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        !(self.warp || self.scale || self.offset)
    }

    pub fn is_warp_only(&self) -> bool {
        self.warp && !self.scale && !self.offset
    }
}

/// Perturbation half-widths per parameter group. `beta` is expressed in
/// units of the standard deviation of all input samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub weight: f64,
    pub log_alpha: f64,
    pub beta: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            weight: 0.05,
            log_alpha: 0.02,
            beta: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongealConfig {
    pub objective_kind: ObjectiveKind,
    pub transforms: EnabledTransforms,
    pub step_sizes: StepSizes,
    pub max_iterations: usize,
    pub stagnation_window: usize,
    pub stagnation_tolerance: f64,
    /// Step-size multiplier applied after a pass with no accepted move.
    pub anneal_factor: f64,
    pub rng_seed: u64,
    pub recenter: bool,
    pub weight_bound: f64,
}

impl Default for CongealConfig {
    fn default() -> Self {
        CongealConfig {
            objective_kind: ObjectiveKind::EntropySum,
            transforms: EnabledTransforms::ALL,
            step_sizes: StepSizes::default(),
            max_iterations: 200,
            stagnation_window: 5,
            stagnation_tolerance: 1e-8,
            anneal_factor: 0.9,
            rng_seed: 0,
            recenter: true,
            weight_bound: DEFAULT_WEIGHT_BOUND,
        }
    }
}

impl CongealConfig {
    pub fn validate(&self) -> Result<()> {
        let steps = &self.step_sizes;
        for (name, v) in [
            ("weight", steps.weight),
            ("log_alpha", steps.log_alpha),
            ("beta", steps.beta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "step size for {name} must be positive, got {v}"
                )));
            }
        }
        if self.transforms.is_empty() {
            return Err(Error::Config("no transform family enabled".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.stagnation_window == 0 {
            return Err(Error::Config("stagnation_window must be at least 1".into()));
        }
        if self.stagnation_tolerance.is_nan() || self.stagnation_tolerance < 0.0 {
            return Err(Error::Config(
                "stagnation_tolerance must be non-negative".into(),
            ));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor <= 1.0) {
            return Err(Error::Config(format!(
                "anneal_factor must lie in (0, 1], got {}",
                self.anneal_factor
            )));
        }
        if !(self.weight_bound.is_finite() && self.weight_bound > 0.0) {
            return Err(Error::Config("weight_bound must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one congealing run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    /// Aligned (already transformed) curves with the final parameters that
    /// produced them from the input curves.
    pub final_set: CurveSet,
    pub initial_objective: f64,
    /// Objective total after each iteration.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub accepted_moves: usize,
    /// Iterations whose recentering was undone because it raised the
    /// objective.
    pub recenter_rollbacks: usize,
}

impl AlignmentReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }

    pub fn aligned_curves(&self) -> &[Curve] {
        self.final_set.curves()
    }

    pub fn params(&self) -> &[TransformParams] {
        self.final_set.params()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coordinate {
    Weight(usize),
    LogAlpha,
    Beta,
}

impl Coordinate {
    fn name(self) -> &'static str {
        match self {
            Coordinate::Weight(i) => WEIGHT_NAMES[i],
            Coordinate::LogAlpha => "log_alpha",
            Coordinate::Beta => "beta",
        }
    }

    /// Applies `delta`; `None` if the result leaves the admissible region.
    fn perturb(
        self,
        p: &TransformParams,
        delta: f64,
        weight_bound: f64,
    ) -> Option<TransformParams> {
        let mut out = *p;
        match self {
            Coordinate::Weight(i) => {
                let w = p.weight(i) + delta;
                if w.abs() > weight_bound {
                    return None;
                }
                out.set_weight(i, w);
            }
            Coordinate::LogAlpha => {
                out.alpha = (p.alpha.ln() + delta).exp();
                if !(out.alpha.is_finite() && out.alpha > 0.0) {
                    return None;
                }
            }
            Coordinate::Beta => out.beta += delta,
        }
        Some(out)
    }
}

fn coordinates(enabled: EnabledTransforms) -> Vec<Coordinate> {
    let mut out = Vec::with_capacity(NUM_WEIGHTS + 2);
    if enabled.warp {
        out.extend((0..NUM_WEIGHTS).map(Coordinate::Weight));
    }
    if enabled.scale {
        out.push(Coordinate::LogAlpha);
    }
    if enabled.offset {
        out.push(Coordinate::Beta);
    }
    out
}

fn amplitude_std(curves: &[Curve]) -> f64 {
    let all: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.samples().iter().copied())
        .collect();
    let std = crate::objective::location_variance(&all).sqrt();
    if std > 0.0 && std.is_finite() {
        std
    } else {
        1.0
    }
}

/// Jointly aligns the curves of `set`, starting from its parameters.
///
/// Labels are ignored. The run is a deterministic function of the inputs and
/// `config.rng_seed`.
pub fn congeal(set: &CurveSet, config: &CongealConfig) -> Result<AlignmentReport> {
    config.validate()?;
    let kind = config.objective_kind;
    if set.len() < kind.min_curves() {
        return Err(Error::InsufficientData(format!(
            "{kind:?} congealing needs at least {} curves, got {}",
            kind.min_curves(),
            set.len()
        )));
    }
    for (k, p) in set.params().iter().enumerate() {
        p.validate(config.weight_bound)
            .map_err(|e| Error::InvalidParams(format!("initial parameters of curve {k}: {e}")))?;
    }

    let originals = set.curves();
    let mut params = set.params().to_vec();
    let rows = originals
        .iter()
        .zip(&params)
        .map(|(c, p)| transform_samples(c.samples(), p))
        .collect::<Result<Vec<_>>>()?;
    let mut cache = ColumnCache::new(rows, kind)?;
    let initial_objective = cache.total();

    let coords = coordinates(config.transforms);
    let groups = RecenterGroups {
        warp: config.transforms.warp,
        scale: config.transforms.scale,
        offset: config.transforms.offset,
    };
    let beta_unit = amplitude_std(originals);
    let mut weight_step = config.step_sizes.weight;
    let mut log_alpha_step = config.step_sizes.log_alpha;
    let mut beta_step = config.step_sizes.beta * beta_unit;

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut trace = Vec::with_capacity(config.max_iterations);
    let mut accepted_moves = 0;
    let mut recenter_rollbacks = 0;
    let mut converged = false;

    for _ in 0..config.max_iterations {
        let mut accepted_this_pass = 0;
        for k in 0..originals.len() {
            for &coord in &coords {
                let step = match coord {
                    Coordinate::Weight(_) => weight_step,
                    Coordinate::LogAlpha => log_alpha_step,
                    Coordinate::Beta => beta_step,
                };
                let delta = rng.gen_range(-step..=step);
                for signed in [delta, -delta] {
                    let Some(candidate) = coord.perturb(&params[k], signed, config.weight_bound)
                    else {
                        continue;
                    };
                    let row =
                        transform_samples(originals[k].samples(), &candidate).map_err(|e| {
                            Error::Objective {
                                curve: k,
                                param: coord.name(),
                                source: Box::new(e),
                            }
                        })?;
                    let total = cache.try_replace(k, &row);
                    if !total.is_finite() {
                        return Err(Error::Objective {
                            curve: k,
                            param: coord.name(),
                            source: Box::new(Error::Numerical(format!(
                                "objective evaluated to {total}"
                            ))),
                        });
                    }
                    if total < cache.total() {
                        cache.commit(k, row, total);
                        params[k] = candidate;
                        accepted_this_pass += 1;
                        break;
                    }
                }
            }
        }
        accepted_moves += accepted_this_pass;

        if config.recenter {
            let mut trial = params.clone();
            recenter_params(&mut trial, groups);
            if trial != params {
                let rows = originals
                    .iter()
                    .zip(&trial)
                    .map(|(c, p)| transform_samples(c.samples(), p))
                    .collect::<Result<Vec<_>>>()?;
                let recentered = ColumnCache::new(rows, kind)?;
                let in_bounds = trial
                    .iter()
                    .all(|p| p.validate(config.weight_bound).is_ok());
                if in_bounds && recentered.total() <= cache.total() {
                    cache = recentered;
                    params = trial;
                } else {
                    recenter_rollbacks += 1;
                }
            }
        }

        let current = cache.total();
        let previous = trace.last().copied().unwrap_or(initial_objective);
        assert!(
            current <= previous,
            "objective increased from {previous} to {current}"
        );
        trace.push(current);

        if accepted_this_pass == 0 {
            weight_step *= config.anneal_factor;
            log_alpha_step *= config.anneal_factor;
            beta_step *= config.anneal_factor;
        }

        let w = config.stagnation_window;
        if trace.len() > w {
            let earlier = trace[trace.len() - 1 - w];
            if (earlier - current).abs() <= config.stagnation_tolerance * earlier.abs() {
                converged = true;
                break;
            }
        }
    }

    let aligned = cache
        .rows()
        .iter()
        .map(|r| Curve::new(r.clone()))
        .collect::<Result<Vec<_>>>()?;
    let labels = set.labels().map(<[i64]>::to_vec);
    Ok(AlignmentReport {
        final_set: CurveSet::with_params(aligned, params, labels)?,
        initial_objective,
        iterations_run: trace.len(),
        objective_trace: trace,
        converged,
        accepted_moves,
        recenter_rollbacks,
    })
}

/// Result of aligning each class separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAlignment {
    /// One report per class, ascending by label.
    pub per_class: BTreeMap<i64, AlignmentReport>,
    /// All aligned curves and final parameters in the input order, labels
    /// retained.
    pub aligned: CurveSet,
}

/// Groups curves by label and congeals every group independently. Class `c`
/// uses seed `config.rng_seed + c` (wrapping).
pub fn align_per_class(set: &CurveSet, config: &CongealConfig) -> Result<ClassAlignment> {
    let labels = set
        .labels()
        .ok_or_else(|| Error::Config("per-class alignment requires class labels".into()))?;
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        groups.entry(label).or_default().push(i);
    }
    let required = config.objective_kind.min_curves();
    if let Some((&label, members)) = groups.iter().find(|(_, m)| m.len() < required) {
        return Err(Error::ClassTooSmall {
            label,
            count: members.len(),
            required,
        });
    }

    let mut curves: Vec<Option<Curve>> = vec![None; set.len()];
    let mut params = vec![TransformParams::IDENTITY; set.len()];
    let mut per_class = BTreeMap::new();
    for (label, members) in groups {
        let subset = CurveSet::with_params(
            members.iter().map(|&i| set.curves()[i].clone()).collect(),
            members.iter().map(|&i| set.params()[i]).collect(),
            None,
        )?;
        let class_config = CongealConfig {
            rng_seed: config.rng_seed.wrapping_add(label as u64),
            ..config.clone()
        };
        let report = congeal(&subset, &class_config)?;
        for (j, &i) in members.iter().enumerate() {
            curves[i] = Some(report.aligned_curves()[j].clone());
            params[i] = report.params()[j];
        }
        per_class.insert(label, report);
    }
    let curves = curves
        .into_iter()
        .map(|c| c.expect("every curve belongs to a class"))
        .collect();
    Ok(ClassAlignment {
        per_class,
        aligned: CurveSet::with_params(curves, params, Some(labels.to_vec()))?,
    })
}
