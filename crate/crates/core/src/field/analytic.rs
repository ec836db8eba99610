//! Closed-form test flows.
//!
//! | name             | velocity                                                 |
//! |------------------|----------------------------------------------------------|
//! | `constant`       | `(1, 0)`                                                 |
//! | `rigid_rotation` | `(−y, x)`                                                |
//! | `saddle`         | `(x, −y)`                                                |
//! | `double_gyre`    | `(−πA sin(πf) cos(πy), πA cos(πf) sin(πy) ∂f/∂x)`,       |
//! |                  | `f = a x² + b x`, `a = ε sin ωt`, `b = 1 − 2ε sin ωt`,   |
//! |                  | `A = 0.1`, `ω = 2π/10`, `ε = 0.25`, domain `[0,2]×[0,1]` |
//! | `two_population` | rotation about `(0.5, 0.5)` for `x < 0.9`, saddle        |
//! |                  | `(−(x−1.5), y−0.5)` for `x > 1.1`, smoothstep blend      |
//! |                  | in between; intended domain `[0,2]×[0,1]`                |

use std::f64::consts::PI;
use std::str::FromStr;

use super::{FieldError, GridSpec, VectorField2D};
use crate::linalg::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticFlow {
    Constant,
    RigidRotation,
    Saddle,
    DoubleGyre,
    TwoPopulation,
}

const GYRE_A: f64 = 0.1;
const GYRE_OMEGA: f64 = 2.0 * PI / 10.0;
const GYRE_EPS: f64 = 0.25;

const BLEND_LO: f64 = 0.9;
const BLEND_HI: f64 = 1.1;

impl FromStr for AnalyticFlow {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "constant" => AnalyticFlow::Constant,
            "rigid_rotation" => AnalyticFlow::RigidRotation,
            "saddle" => AnalyticFlow::Saddle,
            "double_gyre" => AnalyticFlow::DoubleGyre,
            "two_population" => AnalyticFlow::TwoPopulation,
            other => return Err(FieldError::UnknownFlow(other.to_string())),
        })
    }
}

impl AnalyticFlow {
    pub const ALL: [AnalyticFlow; 5] = [
        AnalyticFlow::Constant,
        AnalyticFlow::RigidRotation,
        AnalyticFlow::Saddle,
        AnalyticFlow::DoubleGyre,
        AnalyticFlow::TwoPopulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnalyticFlow::Constant => "constant",
            AnalyticFlow::RigidRotation => "rigid_rotation",
            AnalyticFlow::Saddle => "saddle",
            AnalyticFlow::DoubleGyre => "double_gyre",
            AnalyticFlow::TwoPopulation => "two_population",
        }
    }

    pub fn velocity(self, p: Vec2, t: f64) -> Vec2 {
        match self {
            AnalyticFlow::Constant => Vec2::new(1.0, 0.0),
            AnalyticFlow::RigidRotation => Vec2::new(-p.y, p.x),
            AnalyticFlow::Saddle => Vec2::new(p.x, -p.y),
            AnalyticFlow::DoubleGyre => {
                let s = (GYRE_OMEGA * t).sin();
                let a = GYRE_EPS * s;
                let b = 1.0 - 2.0 * GYRE_EPS * s;
                let f = a * p.x * p.x + b * p.x;
                let dfdx = 2.0 * a * p.x + b;
                Vec2::new(
                    -PI * GYRE_A * (PI * f).sin() * (PI * p.y).cos(),
                    PI * GYRE_A * (PI * f).cos() * (PI * p.y).sin() * dfdx,
                )
            }
            AnalyticFlow::TwoPopulation => {
                let w = smoothstep((p.x - BLEND_LO) / (BLEND_HI - BLEND_LO));
                let rot = Vec2::new(-(p.y - 0.5), p.x - 0.5);
                let sad = Vec2::new(-(p.x - 1.5), p.y - 0.5);
                rot * (1.0 - w) + sad * w
            }
        }
    }

    /// Exact velocity gradient, `∂v_i/∂x_j`.
    pub fn gradient(self, p: Vec2, t: f64) -> Mat2 {
        match self {
            AnalyticFlow::Constant => Mat2::ZERO,
            AnalyticFlow::RigidRotation => Mat2::new(0.0, -1.0, 1.0, 0.0),
            AnalyticFlow::Saddle => Mat2::diag(1.0, -1.0),
            AnalyticFlow::DoubleGyre => {
                let s = (GYRE_OMEGA * t).sin();
                let a = GYRE_EPS * s;
                let b = 1.0 - 2.0 * GYRE_EPS * s;
                let f = a * p.x * p.x + b * p.x;
                let fx = 2.0 * a * p.x + b;
                let fxx = 2.0 * a;
                let (sf, cf) = (PI * f).sin_cos();
                let (sy, cy) = (PI * p.y).sin_cos();
                let k = PI * GYRE_A;
                Mat2::new(
                    -k * PI * cf * fx * cy,
                    k * PI * sf * sy,
                    k * sy * (-PI * sf * fx * fx + cf * fxx),
                    k * PI * cf * cy * fx,
                )
            }
            AnalyticFlow::TwoPopulation => {
                let u = (p.x - BLEND_LO) / (BLEND_HI - BLEND_LO);
                let w = smoothstep(u);
                let dw = smoothstep_deriv(u) / (BLEND_HI - BLEND_LO);
                let rot = Vec2::new(-(p.y - 0.5), p.x - 0.5);
                let sad = Vec2::new(-(p.x - 1.5), p.y - 0.5);
                let g_rot = Mat2::new(0.0, -1.0, 1.0, 0.0);
                let g_sad = Mat2::diag(-1.0, 1.0);
                let mut g = g_rot.scale(1.0 - w) + g_sad.scale(w);
                // ∂w/∂x only touches the first column
                g.m[0][0] += dw * (sad.x - rot.x);
                g.m[1][0] += dw * (sad.y - rot.y);
                g
            }
        }
    }

    pub fn rasterize(self, spec: GridSpec) -> Result<VectorField2D, FieldError> {
        VectorField2D::from_fn(spec, |p, t| self.velocity(p, t))
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

fn smoothstep_deriv(u: f64) -> f64 {
    if (0.0..=1.0).contains(&u) {
        6.0 * u * (1.0 - u)
    } else {
        0.0
    }
}

/// Rasterize the named closed-form flow onto `spec`.
pub fn make_analytic(name: &str, spec: GridSpec) -> Result<VectorField2D, FieldError> {
    name.parse::<AnalyticFlow>()?.rasterize(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(flow: AnalyticFlow, p: Vec2, t: f64) -> Mat2 {
        let h = 1e-6;
        let dx = (flow.velocity(p + Vec2::new(h, 0.0), t) - flow.velocity(p - Vec2::new(h, 0.0), t)) * (0.5 / h);
        let dy = (flow.velocity(p + Vec2::new(0.0, h), t) - flow.velocity(p - Vec2::new(0.0, h), t)) * (0.5 / h);
        Mat2::new(dx.x, dy.x, dx.y, dy.y)
    }

    #[test]
    fn closed_form_gradients_match_finite_differences() {
        let points = [
            Vec2::new(0.3, 0.2),
            Vec2::new(1.7, 0.8),
            Vec2::new(0.95, 0.45),
            Vec2::new(1.05, 0.61),
        ];
        for flow in AnalyticFlow::ALL {
            for p in points {
                for t in [0.0, 1.3, 7.9] {
                    let d = flow.gradient(p, t) - fd_gradient(flow, p, t);
                    assert!(d.norm() < 1e-6, "{} at {p:?}, t={t}: {d:?}", flow.name());
                }
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for flow in AnalyticFlow::ALL {
            assert_eq!(flow.name().parse::<AnalyticFlow>().unwrap(), flow);
        }
        assert!(matches!(
            make_analytic("vortex_street", GridSpec::from_extent((0.0, 1.0), (0.0, 1.0), 2, 2, (0.0, 1.0), 2).unwrap()),
            Err(FieldError::UnknownFlow(_))
        ));
    }

    #[test]
    fn saddle_and_rotation_closed_forms() {
        let spec = GridSpec::from_extent((-1.0, 1.0), (-1.0, 1.0), 5, 5, (0.0, 1.0), 2).unwrap();
        let saddle = make_analytic("saddle", spec).unwrap();
        let rot = make_analytic("rigid_rotation", spec).unwrap();
        let p = Vec2::new(0.3, -0.7);
        let s = saddle.sample(p, 0.5);
        assert!((s.velocity - Vec2::new(0.3, 0.7)).norm() < 1e-7);
        assert!((s.gradient - Mat2::diag(1.0, -1.0)).norm() < 1e-6);
        let r = rot.sample(p, 0.5);
        assert!((r.velocity - Vec2::new(0.7, 0.3)).norm() < 1e-7);
    }

    #[test]
    fn double_gyre_boundaries_are_impermeable() {
        for t in [0.0, 2.5, 6.0] {
            for s in [0.1, 0.5, 0.9] {
                assert!(AnalyticFlow::DoubleGyre.velocity(Vec2::new(0.0, s), t).x.abs() < 1e-12);
                assert!(AnalyticFlow::DoubleGyre.velocity(Vec2::new(2.0, s), t).x.abs() < 1e-12);
                assert!(AnalyticFlow::DoubleGyre.velocity(Vec2::new(2.0 * s, 0.0), t).y.abs() < 1e-12);
                assert!(AnalyticFlow::DoubleGyre.velocity(Vec2::new(2.0 * s, 1.0), t).y.abs() < 1e-12);
            }
        }
    }
}
