//! Pathline integration.
//!
//! Pathlines solve `dx/dt = v(x, t)` with an adaptive Dormand–Prince 5(4)
//! scheme. Samples are emitted exactly at `t0 + i·sign(τ)·Δt` through the
//! method's continuous extension, so every sample instant is on the
//! equidistant grid regardless of the step sizes chosen by the controller.
//!
//! Backward integration (`τ < 0`) steps with negative `h`; the field itself
//! is never negated.
//!
//! When a stage evaluation leaves the domain the step is halved until it is
//! shorter than `1e-6·Δt`; at that point the particle is considered to have
//! exited, the pathline is truncated and the remaining positions are frozen
//! at the last integrated position.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{GridSpec, VectorField2D};
use crate::linalg::Vec2;

pub const DEFAULT_RK_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum AdvectError {
    #[error("invalid integration parameters: {0}")]
    InvalidParams(String),
    #[error("integration interval [{start}, {end}] leaves the field's time range [{t_min}, {t_max}]")]
    OutsideTimeDomain {
        start: f64,
        end: f64,
        t_min: f64,
        t_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationParams {
    pub t0: f64,
    /// Signed integration time; negative integrates backward.
    pub tau: f64,
    /// Sample distance Δt (> 0).
    pub dt_sample: f64,
    pub rk_tol: f64,
}

impl IntegrationParams {
    pub fn new(t0: f64, tau: f64, dt_sample: f64) -> Result<Self, AdvectError> {
        Self::with_tolerance(t0, tau, dt_sample, DEFAULT_RK_TOL)
    }

    pub fn with_tolerance(t0: f64, tau: f64, dt_sample: f64, rk_tol: f64) -> Result<Self, AdvectError> {
        let p = IntegrationParams {
            t0,
            tau,
            dt_sample,
            rk_tol,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AdvectError> {
        let bad = |m: String| Err(AdvectError::InvalidParams(m));
        if !self.t0.is_finite() || !self.tau.is_finite() {
            return bad("t0 and tau must be finite".into());
        }
        if !(self.dt_sample > 0.0 && self.dt_sample.is_finite()) {
            return bad(format!("sample distance must be positive, got {}", self.dt_sample));
        }
        if !(self.rk_tol > 0.0 && self.rk_tol < 1.0) {
            return bad(format!("rk_tol must lie in (0, 1), got {}", self.rk_tol));
        }
        if self.tau.abs() / self.dt_sample < 1.0 - 1e-9 {
            return bad(format!(
                "|tau| / dt must be at least 1, got {} / {}",
                self.tau.abs(),
                self.dt_sample
            ));
        }
        if self.steps() > u32::MAX as usize {
            return bad("sample count exceeds u32".into());
        }
        Ok(())
    }

    /// `N = round(|τ| / Δt)`.
    pub fn steps(&self) -> usize {
        (self.tau.abs() / self.dt_sample).round() as usize
    }

    pub fn direction(&self) -> f64 {
        if self.tau < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Signed sample step `sign(τ)·Δt`.
    pub fn signed_dt(&self) -> f64 {
        self.direction() * self.dt_sample
    }

    pub fn sample_time(&self, i: usize) -> f64 {
        self.t0 + self.signed_dt() * i as f64
    }

    pub fn end_time(&self) -> f64 {
        self.sample_time(self.steps())
    }

    /// Check that every sample instant lies in the field's time range.
    pub fn check_against(&self, spec: &GridSpec) -> Result<(), AdvectError> {
        self.validate()?;
        let (start, end) = (self.t0, self.end_time());
        if !spec.contains_time(start) || !spec.contains_time(end) {
            return Err(AdvectError::OutsideTimeDomain {
                start,
                end,
                t_min: spec.t_min,
                t_max: spec.t_max,
            });
        }
        Ok(())
    }
}

/// Equidistant-in-time samples of one pathline.
#[derive(Debug, Clone, PartialEq)]
pub struct PathlineSamples {
    pub seed: Vec2,
    /// `N + 1` instants `t0 + i·sign(τ)·Δt`.
    pub times: Vec<f64>,
    /// `N + 1` positions; entries from `valid_count` on are frozen padding.
    pub positions: Vec<Vec2>,
    /// Samples recorded before the particle left the domain.
    pub valid_count: usize,
}

impl PathlineSamples {
    pub fn is_complete(&self) -> bool {
        self.valid_count == self.positions.len()
    }

    pub fn end(&self) -> Vec2 {
        *self.positions.last().expect("pathline has at least one sample")
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// b5 − b4
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const MAX_STEPS: usize = 1_000_000;

/// Dense-output coefficients of one accepted step.
struct Dense {
    t: f64,
    h: f64,
    r: [Vec2; 5],
}

impl Dense {
    #[inline]
    fn eval(&self, t: f64) -> Vec2 {
        let th = (t - self.t) / self.h;
        let th1 = 1.0 - th;
        self.r[0] + (self.r[1] + (self.r[2] + (self.r[3] + self.r[4] * th1) * th) * th1) * th
    }
}

struct Stepper<'a> {
    field: &'a VectorField2D,
    evals: u64,
}

struct Step {
    y_new: Vec2,
    k7: Vec2,
    err: f64,
    dense: Dense,
}

impl Stepper<'_> {
    #[inline]
    fn f(&mut self, t: f64, y: Vec2) -> Option<Vec2> {
        self.evals += 1;
        self.field.velocity_uncounted(y, t)
    }

    /// One trial step; `None` if a stage left the domain.
    fn step(&mut self, t: f64, y: Vec2, k1: Vec2, h: f64, tol: f64) -> Option<Step> {
        let k2 = self.f(t + C2 * h, y + k1 * (A21 * h))?;
        let k3 = self.f(t + C3 * h, y + (k1 * A31 + k2 * A32) * h)?;
        let k4 = self.f(t + C4 * h, y + (k1 * A41 + k2 * A42 + k3 * A43) * h)?;
        let k5 = self.f(t + C5 * h, y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h)?;
        let k6 = self.f(
            t + h,
            y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h,
        )?;
        let y_new = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h;
        let k7 = self.f(t + h, y_new)?;

        let e = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
        let sx = tol + tol * y.x.abs().max(y_new.x.abs());
        let sy = tol + tol * y.y.abs().max(y_new.y.abs());
        let err = (0.5 * ((e.x / sx).powi(2) + (e.y / sy).powi(2))).sqrt();

        let ydiff = y_new - y;
        let bspl = k1 * h - ydiff;
        let dense = Dense {
            t,
            h,
            r: [
                y,
                ydiff,
                bspl,
                ydiff - k7 * h - bspl,
                (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * h,
            ],
        };
        Some(Step {
            y_new,
            k7,
            err,
            dense,
        })
    }
}

/// Integrate one pathline from `seed` at `params.t0` over `params.tau`.
///
/// `params` must satisfy [`IntegrationParams::check_against`] for the
/// field; sample instants outside the field's time range count as exits.
pub fn integrate_pathline(field: &VectorField2D, seed: Vec2, params: &IntegrationParams) -> PathlineSamples {
    let n = params.steps();
    let times: Vec<f64> = (0..=n).map(|i| params.sample_time(i)).collect();
    let mut positions = Vec::with_capacity(n + 1);
    let mut stepper = Stepper { field, evals: 0 };

    let t_end = times[n];
    let dir = params.direction();
    let h_min = 1e-6 * params.dt_sample;
    let tol = params.rk_tol;

    let mut t = params.t0;
    let mut y = seed;
    let k1 = stepper.f(t, y);
    if let Some(mut k1) = k1 {
        positions.push(seed);
        let mut h = dir * params.dt_sample.min(params.tau.abs());
        let mut next = 1;
        let mut steps = 0;
        let mut aim_at_sample = false;
        'outer: while next <= n && steps < MAX_STEPS {
            steps += 1;
            // a step that must end exactly on a sample instant
            let mut target = None;
            if (t + h - t_end) * dir >= 0.0 {
                h = t_end - t;
                target = Some(t_end);
            }
            if aim_at_sample {
                target = Some(times[next]);
                aim_at_sample = false;
            }
            let Some(step) = stepper.step(t, y, k1, h, tol) else {
                // a stage left the domain: first try landing exactly on the
                // next sample, then shrink until the exit is resolved
                let to_sample = times[next] - t;
                if to_sample.abs() < h.abs() && target.is_none() {
                    h = to_sample;
                    aim_at_sample = true;
                    continue;
                }
                if h.abs() <= h_min {
                    break;
                }
                h *= 0.5;
                continue;
            };
            if step.err > 1.0 {
                h *= (SAFETY * step.err.powf(-0.2)).max(FAC_MIN);
                continue;
            }
            let t_new = target.unwrap_or(t + h);
            while next <= n && (times[next] - t_new) * dir <= 0.0 {
                let p = if times[next] == t_new {
                    step.y_new
                } else {
                    step.dense.eval(times[next])
                };
                if !field.spec().contains_point(p) {
                    break 'outer;
                }
                positions.push(p);
                next += 1;
            }
            t = t_new;
            y = step.y_new;
            k1 = step.k7;
            let fac = if step.err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * step.err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            h *= fac;
        }
    }
    field.record_samples(stepper.evals);

    let valid_count = positions.len();
    positions.resize(n + 1, y);
    PathlineSamples {
        seed,
        times,
        positions,
        valid_count,
    }
}

/// Seed positions on a regular sub-grid of the field's nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub origin: Vec2,
    pub spacing: Vec2,
    pub nx: usize,
    pub ny: usize,
}

impl SeedGrid {
    /// Every `stride`-th node of `spec`, starting at the origin.
    pub fn from_grid(spec: &GridSpec, stride: usize) -> Result<Self, AdvectError> {
        if stride == 0 {
            return Err(AdvectError::InvalidParams("stride must be at least 1".into()));
        }
        Ok(SeedGrid {
            origin: spec.origin,
            spacing: spec.spacing * stride as f64,
            nx: (spec.nx - 1) / stride + 1,
            ny: (spec.ny - 1) / stride + 1,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + self.spacing.x * i as f64,
            self.origin.y + self.spacing.y * j as f64,
        )
    }

    /// Row-major: index `j·nx + i`.
    pub fn seed(&self, index: usize) -> Vec2 {
        self.position(index % self.nx, index / self.nx)
    }

    pub fn seeds(&self) -> Vec<Vec2> {
        (0..self.len()).map(|k| self.seed(k)).collect()
    }

    /// Index of the seed nearest to `p`, if `p` is within half a cell of the
    /// seed layout.
    pub fn nearest(&self, p: Vec2) -> Option<usize> {
        let fx = (p.x - self.origin.x) / self.spacing.x;
        let fy = (p.y - self.origin.y) / self.spacing.y;
        let (i, j) = (fx.round(), fy.round());
        if !(i >= 0.0 && j >= 0.0 && (i as usize) < self.nx && (j as usize) < self.ny) {
            return None;
        }
        Some(j as usize * self.nx + i as usize)
    }
}

/// Row-major seeds at every `stride`-th grid node.
pub fn seed_grid(spec: &GridSpec, stride: usize) -> Result<Vec<Vec2>, AdvectError> {
    Ok(SeedGrid::from_grid(spec, stride)?.seeds())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_analytic;
    use std::f64::consts::{E, FRAC_PI_2};

    fn square(name: &str, half: f64, n: usize, t: (f64, f64)) -> VectorField2D {
        let spec = GridSpec::from_extent((-half, half), (-half, half), n, n, t, 2).unwrap();
        make_analytic(name, spec).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(IntegrationParams::new(0.0, 1.0, 0.1).is_ok());
        assert!(IntegrationParams::new(0.0, 1.0, 0.0).is_err());
        assert!(IntegrationParams::new(0.0, 0.05, 0.1).is_err());
        assert!(IntegrationParams::with_tolerance(0.0, 1.0, 0.1, 0.0).is_err());
        let p = IntegrationParams::new(15.0, -15.0, 0.01).unwrap();
        assert_eq!(p.steps(), 1500);
        assert_eq!(p.direction(), -1.0);
        let spec = GridSpec::from_extent((0.0, 1.0), (0.0, 1.0), 2, 2, (0.0, 15.0), 2).unwrap();
        assert!(p.check_against(&spec).is_ok());
        let late = IntegrationParams::new(10.0, 6.0, 0.01).unwrap();
        assert!(matches!(
            late.check_against(&spec),
            Err(AdvectError::OutsideTimeDomain { .. })
        ));
    }

    #[test]
    fn constant_field_samples() {
        let f = square("constant", 2.0, 9, (0.0, 1.0));
        let p = IntegrationParams::new(0.0, 1.0, 0.1).unwrap();
        let path = integrate_pathline(&f, Vec2::ZERO, &p);
        assert_eq!(path.valid_count, 11);
        assert_eq!(path.positions[0], Vec2::ZERO);
        for (i, (x, t)) in path.positions.iter().zip(&path.times).enumerate() {
            assert!((x.x - 0.1 * i as f64).abs() < 1e-12, "{i}: {x:?}");
            assert!(x.y.abs() < 1e-12);
            assert_eq!(*t, 0.1 * i as f64);
        }
    }

    #[test]
    fn rigid_rotation_quarter_turn() {
        let f = square("rigid_rotation", 1.5, 31, (0.0, 2.0));
        let p = IntegrationParams::new(0.0, FRAC_PI_2, FRAC_PI_2 / 50.0).unwrap();
        let path = integrate_pathline(&f, Vec2::new(1.0, 0.0), &p);
        assert!(path.is_complete());
        let err = (path.end() - Vec2::new(0.0, 1.0)).norm();
        assert!(err < 10.0 * p.rk_tol, "error {err}");
    }

    #[test]
    fn saddle_exponential_solution() {
        let f = square("saddle", 3.0, 61, (0.0, 1.0));
        let p = IntegrationParams::new(0.0, 1.0, 0.01).unwrap();
        let path = integrate_pathline(&f, Vec2::new(1.0, 1.0), &p);
        assert!(path.is_complete());
        let err = (path.end() - Vec2::new(E, 1.0 / E)).norm();
        assert!(err < 1e-5, "error {err}");
        // intermediate samples follow (e^t, e^-t) too
        for (x, &t) in path.positions.iter().zip(&path.times) {
            assert!((*x - Vec2::new(t.exp(), (-t).exp())).norm() < 1e-5);
        }
    }

    #[test]
    fn backward_saddle() {
        let f = square("saddle", 3.0, 61, (0.0, 1.0));
        let p = IntegrationParams::new(1.0, -1.0, 0.01).unwrap();
        let path = integrate_pathline(&f, Vec2::new(1.0, 1.0), &p);
        assert!(path.is_complete());
        assert_eq!(*path.times.last().unwrap(), 0.0);
        assert!((path.end() - Vec2::new(1.0 / E, E)).norm() < 1e-5);
    }

    #[test]
    fn truncates_on_exit() {
        let f = square("constant", 1.0, 9, (0.0, 2.0));
        let p = IntegrationParams::new(0.0, 1.5, 0.1).unwrap();
        let path = integrate_pathline(&f, Vec2::ZERO, &p);
        // x = 0.1·i stays inside through i = 10 (x = 1.0 on the boundary)
        assert_eq!(path.valid_count, 11);
        assert!(f.spec().contains_point(path.positions[10]));
        // next sample would be at x = 1.1
        assert!(!f.spec().contains_point(Vec2::new(1.1, 0.0)));
        for x in &path.positions[11..] {
            assert_eq!(*x, path.positions[path.positions.len() - 1]);
            assert!((x.x - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn seed_outside_domain_has_no_valid_samples() {
        let f = square("constant", 1.0, 5, (0.0, 1.0));
        let p = IntegrationParams::new(0.0, 0.5, 0.1).unwrap();
        let path = integrate_pathline(&f, Vec2::new(3.0, 0.0), &p);
        assert_eq!(path.valid_count, 0);
        assert_eq!(path.positions.len(), 6);
    }

    #[test]
    fn tighter_tolerance_never_hurts() {
        let f = square("saddle", 3.0, 61, (0.0, 1.0));
        let mut prev = f64::INFINITY;
        for k in 0..8 {
            let tol = 1e-3 / f64::from(1u32 << k);
            let p = IntegrationParams::with_tolerance(0.0, 1.0, 0.1, tol).unwrap();
            let err = (integrate_pathline(&f, Vec2::new(1.0, 1.0), &p).end() - Vec2::new(E, 1.0 / E)).norm();
            // 1e-7 slack for the f32 rounding of stored velocities
            assert!(err <= prev + 1e-7, "tol {tol}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn time_reversal() {
        let cases = [
            ("rigid_rotation", Vec2::new(0.7, -0.2), 2.0 * std::f64::consts::PI),
            ("saddle", Vec2::new(0.4, 0.9), 1.0),
        ];
        for (name, seed, tau) in cases {
            let f = square(name, 2.0, 41, (0.0, 7.0));
            let fwd = IntegrationParams::new(0.0, tau, tau / 100.0).unwrap();
            let a = integrate_pathline(&f, seed, &fwd);
            assert!(a.is_complete());
            let back = IntegrationParams::new(tau, -tau, tau / 100.0).unwrap();
            let b = integrate_pathline(&f, a.end(), &back);
            assert!(b.is_complete());
            let err = (b.end() - seed).norm();
            assert!(err < 10.0 * fwd.rk_tol, "{name}: round trip error {err}");
        }
    }

    #[test]
    fn seed_grid_counts() {
        let spec = GridSpec::from_extent((0.0, 3.0), (0.0, 3.0), 4, 4, (0.0, 1.0), 2).unwrap();
        assert_eq!(seed_grid(&spec, 1).unwrap().len(), 16);
        let strided = seed_grid(&spec, 2).unwrap();
        assert_eq!(strided, vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(0.0, 2.0),
            Vec2::new(2.0, 2.0)
        ]);
        assert!(seed_grid(&spec, 0).is_err());
        let street = GridSpec::from_extent((-0.5, 7.5), (-0.5, 0.5), 640, 80, (0.0, 15.0), 1501).unwrap();
        assert_eq!(seed_grid(&street, 1).unwrap().len(), 51_200);
    }

    #[test]
    fn nearest_seed() {
        let spec = GridSpec::from_extent((0.0, 3.0), (0.0, 3.0), 4, 4, (0.0, 1.0), 2).unwrap();
        let g = SeedGrid::from_grid(&spec, 1).unwrap();
        assert_eq!(g.nearest(Vec2::new(1.2, 2.9)), Some(3 * 4 + 1));
        assert_eq!(g.nearest(Vec2::new(-0.6, 0.0)), None);
        assert_eq!(g.nearest(Vec2::new(3.4, 0.0)), Some(3));
        assert_eq!(g.nearest(Vec2::new(3.6, 0.0)), None);
    }
}
