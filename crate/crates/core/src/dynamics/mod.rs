//! Strain/rotation progressions along pathlines.
//!
//! For a velocity gradient `∇₀` sampled along a pathline and the sample
//! distance `Δt`,
//!
//! ```text
//! ε = ½(Δt∇₀ + Δt∇₀ᵀ)    infinitesimal strain
//! ω = ½(Δt∇₀ − Δt∇₀ᵀ)    infinitesimal rotation
//! α = det ε,  β = det ω
//! ```
//!
//! `β ≥ 0` always. For traceless (incompressible) `ε`, `α ≤ 0`; the sign is
//! kept as is even though `α` is often read as a squared principal stretch.

mod ftle;

use thiserror::Error;

use crate::advect::{IntegrationParams, PathlineSamples};
use crate::field::VectorField2D;
use crate::linalg::{Mat2, Vec2};

pub use ftle::{
    ftle_field, ftle_flow_map, ftle_localized, ftle_strain_sum, FtleField, FtleMethod,
    StrainReconstruction,
};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("record carries no strain sum; compute it with compute_dynamics_with_strain")]
    MissingStrain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainRotationStep {
    pub eps: Mat2,
    pub omega: Mat2,
    pub alpha: f64,
    pub beta: f64,
}

/// Decompose `dt·∇₀` into strain and rotation and take their determinants.
#[inline]
pub fn strain_rotation_step(grad: &Mat2, dt: f64) -> StrainRotationStep {
    let scaled = grad.scale(dt);
    let eps = scaled.symmetric_part();
    let omega = scaled.antisymmetric_part();
    // det of [[0, w], [−w, 0]] is w²
    let w = omega.m[0][1];
    StrainRotationStep {
        eps,
        omega,
        alpha: eps.det(),
        beta: w * w,
    }
}

/// Per-seed `α`/`β` progressions.
///
/// Both sequences have length `N`; entries from `valid_count` on are `NaN`
/// padding. Values are stored as `f32`; the per-step arithmetic is `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRecord {
    pub seed: Vec2,
    pub alphas: Vec<f32>,
    pub betas: Vec<f32>,
    pub valid_count: usize,
    /// `Σ εᵢ` over the valid steps, accumulated with the signed sample
    /// distance. Only present when requested.
    pub strain_sum: Option<Mat2>,
}

impl DynamicsRecord {
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn valid_alphas(&self) -> &[f32] {
        &self.alphas[..self.valid_count]
    }

    pub fn valid_betas(&self) -> &[f32] {
        &self.betas[..self.valid_count]
    }

    /// Rebuild a record from stored progressions; the valid prefix ends at
    /// the first `NaN`.
    pub fn from_progressions(seed: Vec2, alphas: Vec<f32>, betas: Vec<f32>) -> Self {
        let valid_count = alphas.iter().position(|v| v.is_nan()).unwrap_or(alphas.len());
        DynamicsRecord {
            seed,
            alphas,
            betas,
            valid_count,
            strain_sum: None,
        }
    }
}

/// Write `α`/`β` of every valid step into `alphas`/`betas` (length `N`),
/// pad the rest with `NaN` and return the valid count together with `Σ εᵢ`.
fn fill(
    field: &VectorField2D,
    pathline: &PathlineSamples,
    params: &IntegrationParams,
    alphas: &mut [f32],
    betas: &mut [f32],
) -> (usize, Mat2) {
    let n = alphas.len().min(params.steps());
    let usable = pathline.valid_count.min(n);
    let mut strain = Mat2::ZERO;
    let mut valid = 0;
    for i in 0..usable {
        let Some(grad) = field.gradient_uncounted(pathline.positions[i], pathline.times[i]) else {
            break;
        };
        let step = strain_rotation_step(&grad, params.dt_sample);
        alphas[i] = step.alpha as f32;
        betas[i] = step.beta as f32;
        strain += step.eps;
        valid += 1;
    }
    field.record_samples(valid as u64);
    alphas[valid..].fill(f32::NAN);
    betas[valid..].fill(f32::NAN);
    (valid, strain.scale(params.direction()))
}

/// As [`compute_dynamics`], writing into caller-owned rows of length `N`.
/// Returns the valid count.
pub fn write_progressions(
    field: &VectorField2D,
    pathline: &PathlineSamples,
    params: &IntegrationParams,
    alphas: &mut [f32],
    betas: &mut [f32],
) -> usize {
    assert_eq!(alphas.len(), params.steps(), "alpha row must hold N values");
    assert_eq!(betas.len(), params.steps(), "beta row must hold N values");
    fill(field, pathline, params, alphas, betas).0
}

fn accumulate(
    field: &VectorField2D,
    pathline: &PathlineSamples,
    params: &IntegrationParams,
    keep_strain: bool,
) -> DynamicsRecord {
    let n = params.steps();
    let mut alphas = vec![f32::NAN; n];
    let mut betas = vec![f32::NAN; n];
    let (valid_count, strain) = fill(field, pathline, params, &mut alphas, &mut betas);
    DynamicsRecord {
        seed: pathline.seed,
        alphas,
        betas,
        valid_count,
        strain_sum: keep_strain.then_some(strain),
    }
}

/// Evaluate `∇v` at every valid sample of `pathline` and record `α`, `β`.
pub fn compute_dynamics(
    field: &VectorField2D,
    pathline: &PathlineSamples,
    params: &IntegrationParams,
) -> DynamicsRecord {
    accumulate(field, pathline, params, false)
}

/// As [`compute_dynamics`], also retaining `Σ εᵢ` for strain-sum FTLE.
pub fn compute_dynamics_with_strain(
    field: &VectorField2D,
    pathline: &PathlineSamples,
    params: &IntegrationParams,
) -> DynamicsRecord {
    accumulate(field, pathline, params, true)
}
