//! Time-dependent 2D velocity fields on regular grids.
//!
//! Velocities are stored as `f32` (the on-disk precision); every
//! interpolation and derivative is evaluated in `f64`.
//!
//! Sampling is bilinear in space and linear in time. Velocity gradients are
//! central differences on grid nodes (second-order one-sided on the
//! boundary), interpolated with the same weights as the velocity.

mod analytic;
mod io;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat2, Vec2};

pub use analytic::{make_analytic, AnalyticFlow};
pub use io::{
    load_dataset, read_dataset, save_dataset, write_dataset, DatasetHeader, HEADER_LEN,
    VF2D_MAGIC, VF2D_VERSION,
};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("bad magic bytes {0:?}, expected \"VF2D\"")]
    BadMagic([u8; 4]),
    #[error("unsupported dataset version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload size mismatch: header implies {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("non-finite velocity component at payload index {0}")]
    NonFinite(u64),
    #[error("unknown analytic flow {0:?}")]
    UnknownFlow(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Node positions are `origin + spacing ∘ (i, j)`, frame times are evenly
/// spaced over `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec2,
    pub spacing: Vec2,
    pub nx: usize,
    pub ny: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub nt: usize,
}

impl GridSpec {
    /// Grid covering `[x0, x1] × [y0, y1]` with `nx × ny` nodes.
    pub fn from_extent(
        x: (f64, f64),
        y: (f64, f64),
        nx: usize,
        ny: usize,
        t: (f64, f64),
        nt: usize,
    ) -> Result<Self, FieldError> {
        if nx < 2 || ny < 2 {
            return Err(FieldError::InvalidGrid(format!(
                "need at least 2×2 nodes, got {nx}×{ny}"
            )));
        }
        let spec = GridSpec {
            origin: Vec2::new(x.0, y.0),
            spacing: Vec2::new((x.1 - x.0) / (nx - 1) as f64, (y.1 - y.0) / (ny - 1) as f64),
            nx,
            ny,
            t_min: t.0,
            t_max: t.1,
            nt,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |m: String| Err(FieldError::InvalidGrid(m));
        if !(self.spacing.x > 0.0 && self.spacing.y > 0.0) {
            return bad(format!("spacing must be positive, got {:?}", self.spacing));
        }
        if !self.origin.is_finite() || !self.spacing.is_finite() {
            return bad("origin and spacing must be finite".into());
        }
        if self.nx < 2 || self.ny < 2 {
            return bad(format!("need at least 2×2 nodes, got {}×{}", self.nx, self.ny));
        }
        if self.nt < 2 {
            return bad(format!("need at least 2 time steps, got {}", self.nt));
        }
        if !(self.t_min < self.t_max) || !self.t_min.is_finite() || !self.t_max.is_finite() {
            return bad(format!("need t_min < t_max, got [{}, {}]", self.t_min, self.t_max));
        }
        Ok(())
    }

    /// Upper corner of the spatial domain.
    pub fn extent_max(&self) -> Vec2 {
        Vec2::new(
            self.origin.x + self.spacing.x * (self.nx - 1) as f64,
            self.origin.y + self.spacing.y * (self.ny - 1) as f64,
        )
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + self.spacing.x * i as f64,
            self.origin.y + self.spacing.y * j as f64,
        )
    }

    pub fn frame_dt(&self) -> f64 {
        (self.t_max - self.t_min) / (self.nt - 1) as f64
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        if k + 1 == self.nt {
            self.t_max
        } else {
            self.t_min + self.frame_dt() * k as f64
        }
    }

    pub fn nodes_per_frame(&self) -> usize {
        self.nx * self.ny
    }

    pub fn contains_point(&self, x: Vec2) -> bool {
        locate(x.x - self.origin.x, self.spacing.x, self.nx).is_some()
            && locate(x.y - self.origin.y, self.spacing.y, self.ny).is_some()
    }

    pub fn contains_time(&self, t: f64) -> bool {
        locate(t - self.t_min, self.frame_dt(), self.nt).is_some()
    }
}

/// Result of evaluating the field at `(x, t)`.
///
/// `velocity` and `gradient` are meaningless when `inside` is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    pub velocity: Vec2,
    pub gradient: Mat2,
    pub inside: bool,
}

impl VelocitySample {
    const OUTSIDE: VelocitySample = VelocitySample {
        velocity: Vec2::ZERO,
        gradient: Mat2::ZERO,
        inside: false,
    };
}

/// Snap tolerance, in cell units, for coordinates that land on a node.
const SNAP: f64 = 1e-9;

/// Cell index and fractional weight for a coordinate offset along one axis.
#[inline]
fn locate(offset: f64, step: f64, n: usize) -> Option<(usize, f64)> {
    let mut s = offset / step;
    let last = (n - 1) as f64;
    if !(s >= -SNAP && s <= last + SNAP) {
        return None;
    }
    let r = s.round();
    if (s - r).abs() <= SNAP {
        s = r;
    }
    let s = s.clamp(0.0, last);
    let i = (s.floor() as usize).min(n - 2);
    Some((i, s - i as f64))
}

#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    (1.0 - w) * a + w * b
}

pub struct VectorField2D {
    spec: GridSpec,
    /// `nt·ny·nx·2` values, t-major, y-major, x-minor, `(u, v)` interleaved.
    data: Vec<f32>,
    samples: AtomicU64,
}

impl Clone for VectorField2D {
    fn clone(&self) -> Self {
        VectorField2D {
            spec: self.spec,
            data: self.data.clone(),
            samples: AtomicU64::new(0),
        }
    }
}

impl std::fmt::Debug for VectorField2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorField2D")
            .field("spec", &self.spec)
            .field("values", &self.data.len())
            .finish()
    }
}

impl VectorField2D {
    /// Wrap raw interleaved velocities (layout as in the dataset format).
    pub fn from_raw(spec: GridSpec, data: Vec<f32>) -> Result<Self, FieldError> {
        spec.validate()?;
        let expected = spec.nt * spec.nodes_per_frame() * 2;
        if data.len() != expected {
            return Err(FieldError::SizeMismatch {
                expected: expected as u64 * 4,
                actual: data.len() as u64 * 4,
            });
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(idx as u64));
        }
        Ok(VectorField2D {
            spec,
            data,
            samples: AtomicU64::new(0),
        })
    }

    /// Rasterize a closed-form velocity `f(x, t)` onto `spec`.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Result<Self, FieldError>
    where
        F: Fn(Vec2, f64) -> Vec2,
    {
        spec.validate()?;
        let mut data = Vec::with_capacity(spec.nt * spec.nodes_per_frame() * 2);
        for k in 0..spec.nt {
            let t = spec.frame_time(k);
            for j in 0..spec.ny {
                for i in 0..spec.nx {
                    let v = f(spec.node(i, j), t);
                    data.push(v.x as f32);
                    data.push(v.y as f32);
                }
            }
        }
        Self::from_raw(spec, data)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    /// Interleaved `(u, v)` values of frame `k`.
    pub fn frame(&self, k: usize) -> &[f32] {
        let len = self.spec.nodes_per_frame() * 2;
        &self.data[k * len..(k + 1) * len]
    }

    /// Stored velocity at node `(i, j)` of frame `k`.
    pub fn node_velocity(&self, k: usize, i: usize, j: usize) -> Vec2 {
        let idx = self.index(k, i, j);
        Vec2::new(f64::from(self.data[idx]), f64::from(self.data[idx + 1]))
    }

    /// Total number of field evaluations performed so far.
    pub fn samples_taken(&self) -> u64 {
        self.samples.load(Ordering::Relaxed)
    }

    pub fn reset_sample_counter(&self) {
        self.samples.store(0, Ordering::Relaxed);
    }

    pub(crate) fn record_samples(&self, n: u64) {
        self.samples.fetch_add(n, Ordering::Relaxed);
    }

    /// Velocity and gradient at `(x, t)`.
    pub fn sample(&self, x: Vec2, t: f64) -> VelocitySample {
        self.record_samples(1);
        self.sample_uncounted(x, t)
    }

    /// Velocity only; `None` outside the space-time domain.
    pub fn velocity(&self, x: Vec2, t: f64) -> Option<Vec2> {
        self.record_samples(1);
        self.velocity_uncounted(x, t)
    }

    #[inline]
    fn index(&self, k: usize, i: usize, j: usize) -> usize {
        ((k * self.spec.ny + j) * self.spec.nx + i) * 2
    }

    #[inline]
    fn at(&self, k: usize, i: usize, j: usize) -> (f64, f64) {
        let idx = self.index(k, i, j);
        (f64::from(self.data[idx]), f64::from(self.data[idx + 1]))
    }

    #[inline]
    fn locate_all(&self, x: Vec2, t: f64) -> Option<[(usize, f64); 3]> {
        let s = &self.spec;
        let lx = locate(x.x - s.origin.x, s.spacing.x, s.nx)?;
        let ly = locate(x.y - s.origin.y, s.spacing.y, s.ny)?;
        let lt = locate(t - s.t_min, s.frame_dt(), s.nt)?;
        Some([lx, ly, lt])
    }

    #[inline]
    pub(crate) fn velocity_uncounted(&self, x: Vec2, t: f64) -> Option<Vec2> {
        let [(i, wx), (j, wy), (k, wt)] = self.locate_all(x, t)?;
        let a = self.bilinear_velocity(k, i, j, wx, wy);
        let b = self.bilinear_velocity(k + 1, i, j, wx, wy);
        Some(Vec2::new(lerp(a.0, b.0, wt), lerp(a.1, b.1, wt)))
    }

    #[inline]
    fn bilinear_velocity(&self, k: usize, i: usize, j: usize, wx: f64, wy: f64) -> (f64, f64) {
        let v00 = self.at(k, i, j);
        let v10 = self.at(k, i + 1, j);
        let v01 = self.at(k, i, j + 1);
        let v11 = self.at(k, i + 1, j + 1);
        let u = lerp(lerp(v00.0, v10.0, wx), lerp(v01.0, v11.0, wx), wy);
        let v = lerp(lerp(v00.1, v10.1, wx), lerp(v01.1, v11.1, wx), wy);
        (u, v)
    }

    pub(crate) fn sample_uncounted(&self, x: Vec2, t: f64) -> VelocitySample {
        let Some([(i, wx), (j, wy), (k, wt)]) = self.locate_all(x, t) else {
            return VelocitySample::OUTSIDE;
        };
        let a = self.bilinear_velocity(k, i, j, wx, wy);
        let b = self.bilinear_velocity(k + 1, i, j, wx, wy);
        let ga = self.bilinear_gradient(k, i, j, wx, wy);
        let gb = self.bilinear_gradient(k + 1, i, j, wx, wy);
        VelocitySample {
            velocity: Vec2::new(lerp(a.0, b.0, wt), lerp(a.1, b.1, wt)),
            gradient: Mat2::new(
                lerp(ga.m[0][0], gb.m[0][0], wt),
                lerp(ga.m[0][1], gb.m[0][1], wt),
                lerp(ga.m[1][0], gb.m[1][0], wt),
                lerp(ga.m[1][1], gb.m[1][1], wt),
            ),
            inside: true,
        }
    }

    /// Gradient only, for callers that already know the point is inside.
    #[inline]
    pub(crate) fn gradient_uncounted(&self, x: Vec2, t: f64) -> Option<Mat2> {
        let [(i, wx), (j, wy), (k, wt)] = self.locate_all(x, t)?;
        let ga = self.bilinear_gradient(k, i, j, wx, wy);
        let gb = self.bilinear_gradient(k + 1, i, j, wx, wy);
        Some(Mat2::new(
            lerp(ga.m[0][0], gb.m[0][0], wt),
            lerp(ga.m[0][1], gb.m[0][1], wt),
            lerp(ga.m[1][0], gb.m[1][0], wt),
            lerp(ga.m[1][1], gb.m[1][1], wt),
        ))
    }

    #[inline]
    fn bilinear_gradient(&self, k: usize, i: usize, j: usize, wx: f64, wy: f64) -> Mat2 {
        let g00 = self.node_gradient(k, i, j);
        let g10 = self.node_gradient(k, i + 1, j);
        let g01 = self.node_gradient(k, i, j + 1);
        let g11 = self.node_gradient(k, i + 1, j + 1);
        let mut out = Mat2::ZERO;
        for r in 0..2 {
            for c in 0..2 {
                out.m[r][c] = lerp(
                    lerp(g00.m[r][c], g10.m[r][c], wx),
                    lerp(g01.m[r][c], g11.m[r][c], wx),
                    wy,
                );
            }
        }
        out
    }

    /// Finite-difference velocity gradient at a grid node.
    pub fn node_gradient(&self, k: usize, i: usize, j: usize) -> Mat2 {
        let s = &self.spec;
        let (dudx, dvdx) = diff_axis(|ii| self.at(k, ii, j), i, s.nx, s.spacing.x);
        let (dudy, dvdy) = diff_axis(|jj| self.at(k, i, jj), j, s.ny, s.spacing.y);
        Mat2::new(dudx, dudy, dvdx, dvdy)
    }
}

/// Derivative of both velocity components along one axis at node `i`.
#[inline]
fn diff_axis<F>(f: F, i: usize, n: usize, h: f64) -> (f64, f64)
where
    F: Fn(usize) -> (f64, f64),
{
    if n == 2 {
        let (a, b) = (f(0), f(1));
        return ((b.0 - a.0) / h, (b.1 - a.1) / h);
    }
    let inv = 0.5 / h;
    if i == 0 {
        let (f0, f1, f2) = (f(0), f(1), f(2));
        (
            (-3.0 * f0.0 + 4.0 * f1.0 - f2.0) * inv,
            (-3.0 * f0.1 + 4.0 * f1.1 - f2.1) * inv,
        )
    } else if i == n - 1 {
        let (f0, f1, f2) = (f(n - 1), f(n - 2), f(n - 3));
        (
            (3.0 * f0.0 - 4.0 * f1.0 + f2.0) * inv,
            (3.0 * f0.1 - 4.0 * f1.1 + f2.1) * inv,
        )
    } else {
        let (a, b) = (f(i - 1), f(i + 1));
        ((b.0 - a.0) * inv, (b.1 - a.1) * inv)
    }
}
