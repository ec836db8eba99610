//! Reference regions in domain coordinates.
//!
//! Text form (CLI): `circle:cx,cy,r`, `ellipse:cx,cy,rx,ry[,angle]`,
//! `polygon:x1,y1;x2,y2;x3,y3[;...]`. JSON form (service): an object tagged
//! by `kind`.

use serde::{Deserialize, Serialize};

use super::DistributionError;
use crate::linalg::Vec2;

pub const MAX_POLYGON_VERTICES: usize = 256;

// relative slack so that seeds lying on the boundary count as inside
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        center: [f64; 2],
        radii: [f64; 2],
        /// Counter-clockwise rotation in radians.
        #[serde(default)]
        angle: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

fn invalid(msg: impl Into<String>) -> DistributionError {
    DistributionError::InvalidRegion(msg.into())
}

/// Twice the signed polygon area.
fn shoelace(v: &[[f64; 2]]) -> f64 {
    (0..v.len())
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum()
}

fn on_segment(p: Vec2, a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
    let (a, b) = (Vec2::from(a), Vec2::from(b));
    let ab = b - a;
    let ap = p - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    let t = ((ap.x * ab.x + ap.y * ab.y) / len2).clamp(0.0, 1.0);
    (ap - ab * t).norm() <= tol
}

impl Region {
    pub fn circle(cx: f64, cy: f64, radius: f64) -> Self {
        Region::Circle {
            center: [cx, cy],
            radius,
        }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Region::Circle { center, radius } => {
                if !finite(center) || !(radius.is_finite() && *radius > 0.0) {
                    return Err(invalid(format!("circle needs a finite center and radius > 0, got {radius}")));
                }
            }
            Region::Ellipse { center, radii, angle } => {
                if !finite(center) || !angle.is_finite() || !radii.iter().all(|r| r.is_finite() && *r > 0.0) {
                    return Err(invalid("ellipse needs a finite center, angle and radii > 0"));
                }
            }
            Region::Polygon { vertices } => {
                if vertices.len() < 3 || vertices.len() > MAX_POLYGON_VERTICES {
                    return Err(invalid(format!(
                        "polygon needs 3 to {MAX_POLYGON_VERTICES} vertices, got {}",
                        vertices.len()
                    )));
                }
                if !vertices.iter().all(|v| finite(v)) {
                    return Err(invalid("polygon vertices must be finite"));
                }
                if shoelace(vertices) == 0.0 {
                    return Err(invalid("polygon has zero area"));
                }
            }
        }
        Ok(())
    }

    /// Point-in-shape test; boundary points are inside.
    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Region::Circle { center, radius } => {
                let d = p - Vec2::from(*center);
                d.x * d.x + d.y * d.y <= radius * radius * (1.0 + BOUNDARY_EPS)
            }
            Region::Ellipse { center, radii, angle } => {
                let d = p - Vec2::from(*center);
                let (s, c) = angle.sin_cos();
                let u = (c * d.x + s * d.y) / radii[0];
                let v = (-s * d.x + c * d.y) / radii[1];
                u * u + v * v <= 1.0 + BOUNDARY_EPS
            }
            Region::Polygon { vertices } => {
                let scale = vertices
                    .iter()
                    .flat_map(|v| v.iter())
                    .fold(1.0f64, |m, x| m.max(x.abs()));
                let tol = BOUNDARY_EPS * scale;
                let n = vertices.len();
                if (0..n).any(|i| on_segment(p, vertices[i], vertices[(i + 1) % n], tol)) {
                    return true;
                }
                // crossing number
                let mut inside = false;
                for i in 0..n {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    if (a[1] > p.y) != (b[1] > p.y) {
                        let x = a[0] + (p.y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                        if p.x < x {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }
}

impl std::str::FromStr for Region {
    type Err = DistributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("expected <kind>:<params>, got {s:?}")))?;
        let numbers = |text: &str| -> Result<Vec<f64>, DistributionError> {
            text.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| invalid(format!("bad number {t:?}"))))
                .collect()
        };
        let region = match kind.trim() {
            "circle" => match numbers(rest)?.as_slice() {
                &[cx, cy, r] => Region::circle(cx, cy, r),
                other => return Err(invalid(format!("circle takes cx,cy,r; got {} values", other.len()))),
            },
            "ellipse" => match numbers(rest)?.as_slice() {
                &[cx, cy, rx, ry] => Region::Ellipse {
                    center: [cx, cy],
                    radii: [rx, ry],
                    angle: 0.0,
                },
                &[cx, cy, rx, ry, angle] => Region::Ellipse {
                    center: [cx, cy],
                    radii: [rx, ry],
                    angle,
                },
                other => return Err(invalid(format!("ellipse takes cx,cy,rx,ry[,angle]; got {} values", other.len()))),
            },
            "polygon" => {
                let vertices = rest
                    .split(';')
                    .map(|pair| match numbers(pair)?.as_slice() {
                        &[x, y] => Ok([x, y]),
                        _ => Err(invalid(format!("polygon vertex must be x,y; got {pair:?}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Region::Polygon { vertices }
            }
            other => return Err(invalid(format!("unknown region kind {other:?}"))),
        };
        region.validate()?;
        Ok(region)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_boundary_is_inside() {
        let c = Region::circle(0.2, 0.2, 0.1);
        assert!(c.contains(Vec2::new(0.3, 0.2)));
        assert!(c.contains(Vec2::new(0.2, 0.1)));
        assert!(!c.contains(Vec2::new(0.31, 0.2)));
    }

    #[test]
    fn rotated_ellipse() {
        let e: Region = "ellipse:0,0,2,0.5,1.5707963267948966".parse().unwrap();
        assert!(e.contains(Vec2::new(0.0, 1.9)));
        assert!(!e.contains(Vec2::new(1.9, 0.0)));
        assert!(e.contains(Vec2::new(0.5, 0.0)));
    }

    #[test]
    fn polygon_edges_and_vertices_are_inside() {
        let p: Region = "polygon:0,0;1,0;1,1;0,1".parse().unwrap();
        assert!(p.contains(Vec2::new(0.5, 0.5)));
        assert!(p.contains(Vec2::new(1.0, 0.3)));
        assert!(p.contains(Vec2::new(0.0, 0.0)));
        assert!(p.contains(Vec2::new(0.5, 1.0)));
        assert!(!p.contains(Vec2::new(1.0001, 0.5)));
        // concave
        let l: Region = "polygon:0,0;2,0;2,1;1,1;1,2;0,2".parse().unwrap();
        assert!(!l.contains(Vec2::new(1.5, 1.5)));
        assert!(l.contains(Vec2::new(0.5, 1.5)));
    }

    #[test]
    fn degenerate_regions_rejected() {
        for bad in [
            "circle:0,0,0",
            "circle:0,0,-1",
            "circle:0,0",
            "ellipse:0,0,1,0",
            "polygon:0,0;1,1",
            "polygon:0,0;1,1;2,2",
            "square:0,0,1",
            "circle:a,0,1",
            "circle:nan,0,1",
        ] {
            assert!(bad.parse::<Region>().is_err(), "{bad}");
        }
        let many = (0..=MAX_POLYGON_VERTICES)
            .map(|i| {
                let a = i as f64 / 300.0 * std::f64::consts::TAU;
                format!("{},{}", a.cos(), a.sin())
            })
            .collect::<Vec<_>>()
            .join(";");
        assert!(format!("polygon:{many}").parse::<Region>().is_err());
    }

    #[test]
    fn tagged_encoding() {
        let r: Region = toml::from_str("kind = \"circle\"\ncenter = [0.5, 0.5]\nradius = 0.25").unwrap();
        assert_eq!(r, Region::circle(0.5, 0.5, 0.25));
        let text = toml::to_string(&r).unwrap();
        assert_eq!(toml::from_str::<Region>(&text).unwrap(), r);
    }
}
