//! Finite-time Lyapunov exponent estimators.
//!
//! * flow map: finite differences of advected seed positions, `C = FᵀF`
//! * localized: `Ψ = ∏ exp(∇vᵢ Δt)` multiplied along one pathline, later
//!   steps on the left
//! * strain sum: principal stretch reconstructed from `Σ εᵢ`
//!
//! All three return `(1/|τ|)·ln √λ_max` of their respective deformation
//! measure. Seeds whose pathline leaves the domain get `NaN`.

use serde::{Deserialize, Serialize};

use super::{compute_dynamics_with_strain, DynamicsError, DynamicsRecord};
use crate::advect::{integrate_pathline, IntegrationParams, PathlineSamples, SeedGrid};
use crate::exec::Exec;
use crate::field::VectorField2D;
use crate::linalg::Mat2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FtleMethod {
    FlowMap,
    Localized,
    StrainSum,
}

impl std::str::FromStr for FtleMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flow_map" => Ok(FtleMethod::FlowMap),
            "localized" => Ok(FtleMethod::Localized),
            "strain_sum" => Ok(FtleMethod::StrainSum),
            other => Err(format!("unknown FTLE method {other:?}")),
        }
    }
}

/// How a finite deformation is recovered from the summed infinitesimal
/// strain `E = Σ εᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrainReconstruction {
    /// Treat `E` as logarithmic strain: `C = exp(2E)`, so
    /// `ln √λ_max(C) = λ_max(E)`. Exact for steady flows whose principal
    /// strain axes do not rotate.
    #[default]
    Logarithmic,
    /// Treat `E` as Green–Lagrange strain: `C = 2E + I`. `NaN` when
    /// `λ_max(2E + I) ≤ 0`.
    GreenLagrange,
}

impl std::str::FromStr for StrainReconstruction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log" | "logarithmic" => Ok(StrainReconstruction::Logarithmic),
            "green" | "green_lagrange" => Ok(StrainReconstruction::GreenLagrange),
            other => Err(format!("unknown strain reconstruction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtleField {
    pub seeds: SeedGrid,
    /// Row-major per-seed FTLE, `NaN` where undefined.
    pub values: Vec<f64>,
    pub method: FtleMethod,
}

#[inline]
fn ftle_from_gram(c: &Mat2, tau: f64) -> f64 {
    let lambda = c.sym_max_eigenvalue();
    if lambda > 0.0 {
        0.5 * lambda.ln() / tau.abs()
    } else {
        f64::NAN
    }
}

/// Flow-map FTLE over a seed grid. Seeds on the layout boundary, and seeds
/// with any neighbor that left the domain, are `NaN`.
pub fn ftle_flow_map(field: &VectorField2D, params: &IntegrationParams, seeds: &SeedGrid, exec: Exec) -> FtleField {
    // only the end point matters, so take a single sample interval
    let single = IntegrationParams {
        dt_sample: params.tau.abs(),
        ..*params
    };
    let ends = exec.map_range(seeds.len(), |k| {
        let path = integrate_pathline(field, seeds.seed(k), &single);
        path.is_complete().then(|| path.end())
    });
    let (nx, ny) = (seeds.nx, seeds.ny);
    let values = exec.map_range(seeds.len(), |k| {
        let (i, j) = (k % nx, k / nx);
        if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny {
            return f64::NAN;
        }
        let (Some(xl), Some(xr), Some(yd), Some(yu)) = (ends[k - 1], ends[k + 1], ends[k - nx], ends[k + nx]) else {
            return f64::NAN;
        };
        if ends[k].is_none() {
            return f64::NAN;
        }
        let dx = (xr - xl) * (0.5 / seeds.spacing.x);
        let dy = (yu - yd) * (0.5 / seeds.spacing.y);
        let f = Mat2::new(dx.x, dy.x, dx.y, dy.y);
        ftle_from_gram(&f.gram(), params.tau)
    });
    FtleField {
        seeds: *seeds,
        values,
        method: FtleMethod::FlowMap,
    }
}

/// Localized FTLE of one pathline. `NaN` unless the pathline is complete.
pub fn ftle_localized(field: &VectorField2D, pathline: &PathlineSamples, params: &IntegrationParams) -> f64 {
    let n = params.steps();
    if pathline.valid_count < n + 1 {
        return f64::NAN;
    }
    let h = params.signed_dt();
    let mut psi = Mat2::IDENTITY;
    for i in 0..n {
        let Some(grad) = field.gradient_uncounted(pathline.positions[i], pathline.times[i]) else {
            return f64::NAN;
        };
        // Ψ = exp(∇_{N−1}Δt) ⋯ exp(∇_0Δt)
        psi = grad.scale(h).exp() * psi;
    }
    field.record_samples(n as u64);
    ftle_from_gram(&psi.gram(), params.tau)
}

/// FTLE-like value from the summed infinitesimal strain of `record`.
pub fn ftle_strain_sum(
    record: &DynamicsRecord,
    params: &IntegrationParams,
    reconstruction: StrainReconstruction,
) -> Result<f64, DynamicsError> {
    let e = record.strain_sum.ok_or(DynamicsError::MissingStrain)?;
    Ok(match reconstruction {
        StrainReconstruction::Logarithmic => e.sym_max_eigenvalue() / params.tau.abs(),
        StrainReconstruction::GreenLagrange => {
            let c = e.scale(2.0) + Mat2::IDENTITY;
            ftle_from_gram(&c, params.tau)
        }
    })
}

/// FTLE field over `seeds` with the chosen estimator. For the per-pathline
/// estimators, seeds whose pathline leaves the domain are `NaN`.
pub fn ftle_field(
    field: &VectorField2D,
    params: &IntegrationParams,
    seeds: &SeedGrid,
    method: FtleMethod,
    reconstruction: StrainReconstruction,
    exec: Exec,
) -> FtleField {
    if method == FtleMethod::FlowMap {
        return ftle_flow_map(field, params, seeds, exec);
    }
    let values = exec.map_range(seeds.len(), |k| {
        let path = integrate_pathline(field, seeds.seed(k), params);
        if !path.is_complete() {
            return f64::NAN;
        }
        match method {
            FtleMethod::Localized => ftle_localized(field, &path, params),
            _ => {
                let record = compute_dynamics_with_strain(field, &path, params);
                ftle_strain_sum(&record, params, reconstruction).unwrap_or(f64::NAN)
            }
        }
    });
    FtleField {
        seeds: *seeds,
        values,
        method,
    }
}
