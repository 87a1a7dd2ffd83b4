use std::sync::Arc;

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use crate::error::{Error, Result};

/// Signed distance (m) and its spatial gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    pub value: f64,
    pub gradient: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Obstacle,
    Environment,
}

impl Role {
    /// Default clearance margin for the role (m).
    pub fn default_margin(self) -> f64 {
        match self {
            Role::Target => 0.01,
            Role::Obstacle => 0.05,
            Role::Environment => 0.005,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    /// Semi-axes `a, b, c` and shape exponents `e1` (vertical), `e2`
    /// (horizontal), both in (0, 2].
    Superellipsoid {
        a: f64,
        b: f64,
        c: f64,
        e1: f64,
        e2: f64,
    },
    /// Unsigned nearest-point distance to a surface sample.
    PointCloud(Arc<PointCloud>),
    /// `normal . x - offset`, positive on the free side.
    HalfSpace { normal: Vector3<f64>, offset: f64 },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Superellipsoid { a, b, c, e1, e2 } => {
                if !(*a > 0.0 && *b > 0.0 && *c > 0.0) {
                    return Err(Error::Config(
                        "superellipsoid semi-axes must be positive".into(),
                    ));
                }
                if !(*e1 > 0.0 && *e1 <= 2.0 && *e2 > 0.0 && *e2 <= 2.0) {
                    return Err(Error::Config(
                        "superellipsoid exponents must lie in (0, 2]".into(),
                    ));
                }
            }
            Shape::PointCloud(cloud) => {
                if cloud.is_empty() {
                    return Err(Error::Config("point cloud must not be empty".into()));
                }
            }
            Shape::HalfSpace { normal, .. } => {
                if (normal.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::Config("half-space normal must be unit-norm".into()));
                }
            }
        }
        Ok(())
    }

    /// Distance in the shape's own frame.
    pub fn eval_local(&self, x: &Vector3<f64>) -> DistanceResult {
        match self {
            Shape::Superellipsoid { a, b, c, e1, e2 } => superellipsoid(x, *a, *b, *c, *e1, *e2),
            Shape::PointCloud(cloud) => {
                let (_, p, d) = cloud.nearest(x);
                let gradient = if d > 0.0 {
                    (x - p) / d
                } else {
                    Vector3::zeros()
                };
                DistanceResult { value: d, gradient }
            }
            Shape::HalfSpace { normal, offset } => DistanceResult {
                value: normal.dot(x) - offset,
                gradient: *normal,
            },
        }
    }
}

/// A shape placed in the world. Cheap to clone: clouds are shared.
#[derive(Debug, Clone)]
pub struct SdfObject {
    pub id: String,
    pub shape: Shape,
    /// world <- object
    pub pose: Isometry3<f64>,
    pub role: Role,
    pub margin: f64,
}

impl SdfObject {
    pub fn new(
        id: impl Into<String>,
        shape: Shape,
        pose: Isometry3<f64>,
        role: Role,
    ) -> Result<Self> {
        shape.validate()?;
        Ok(SdfObject {
            id: id.into(),
            shape,
            pose,
            role,
            margin: role.default_margin(),
        })
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn table(height: f64) -> Self {
        SdfObject {
            id: "table".into(),
            shape: Shape::HalfSpace {
                normal: Vector3::z(),
                offset: height,
            },
            pose: Isometry3::identity(),
            role: Role::Environment,
            margin: Role::Environment.default_margin(),
        }
    }
}

/// Signed distance of world point `x` to `obj`.
pub fn sdf_eval(obj: &SdfObject, x: &Vector3<f64>) -> DistanceResult {
    let local = obj.pose.inverse_transform_point(&Point3::from(*x)).coords;
    let r = obj.shape.eval_local(&local);
    DistanceResult {
        value: r.value,
        gradient: obj.pose.rotation * r.gradient,
    }
}

fn spow(v: f64, p: f64) -> f64 {
    v.abs().powf(p)
}

/// Radial-scaling distance `|x| (1 - F(x)^(-e1/2))`, exact for spheres.
fn superellipsoid(x: &Vector3<f64>, a: f64, b: f64, c: f64, e1: f64, e2: f64) -> DistanceResult {
    let r = x.norm();
    if r < 1e-12 {
        return DistanceResult {
            value: -a.min(b).min(c),
            gradient: Vector3::z(),
        };
    }
    let (u, v, w) = (x.x / a, x.y / b, x.z / c);
    let f1 = spow(u, 2.0 / e2) + spow(v, 2.0 / e2);
    let fw = spow(w, 2.0 / e1);
    let f1p = if f1 > 0.0 { f1.powf(e2 / e1) } else { 0.0 };
    let big_f = f1p + fw;
    let scale = big_f.powf(-e1 / 2.0);
    let value = r * (1.0 - scale);

    // dF/dx
    let inner = if f1 > 0.0 {
        (2.0 / e1) * f1.powf(e2 / e1 - 1.0)
    } else {
        0.0
    };
    let dxy = |s: f64, len: f64| -> f64 {
        if s == 0.0 {
            0.0
        } else {
            inner * spow(s, 2.0 / e2 - 1.0) * s.signum() / len
        }
    };
    let dz = if w == 0.0 {
        0.0
    } else {
        (2.0 / e1) * spow(w, 2.0 / e1 - 1.0) * w.signum() / c
    };
    let grad_f = Vector3::new(dxy(u, a), dxy(v, b), dz);
    let gradient = x / r * (1.0 - scale) + grad_f * (r * (e1 / 2.0) * big_f.powf(-e1 / 2.0 - 1.0));
    DistanceResult { value, gradient }
}
