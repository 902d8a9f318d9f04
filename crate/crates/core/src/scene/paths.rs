use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

use super::normalize::BoundingBox;
use super::synthetic::{CameraSpec, Primitive, SyntheticScene};

/// World up for generated camera paths.
pub const WORLD_UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

/// Generated camera trajectories around a scene bbox.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraPath {
    /// Horizontal circle around the bbox center, looking at the center.
    Orbit,
    /// Lateral sweep along x in front of the bbox, looking along +z.
    Line,
    /// Standing at the bbox center, turning 180° about the vertical axis.
    Pan,
}

impl std::str::FromStr for CameraPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orbit" => Ok(CameraPath::Orbit),
            "line" => Ok(CameraPath::Line),
            "pan" => Ok(CameraPath::Pan),
            _ => Err(Error::InvalidArgument(format!("unknown trajectory {s:?} (orbit|line|pan)"))),
        }
    }
}

/// `n` poses along `path`. Orbit and line keep a distance of 2.5 times the
/// largest half-extent from the center.
pub fn camera_path(path: CameraPath, bounds: &BoundingBox, n: usize) -> Result<Vec<Pose>> {
    let c = bounds.center();
    let half = bounds.extent().max() / 2.0;
    let r = 2.5 * half;
    let frac = |i: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    (0..n)
        .map(|i| match path {
            CameraPath::Orbit => {
                let a = 2.0 * PI * i as f64 / n as f64;
                let eye = c + Vec3::new(r * a.sin(), 0.0, -r * a.cos());
                Pose::look_at(eye, c, WORLD_UP)
            }
            CameraPath::Line => {
                let x = bounds.min.x + frac(i) * (bounds.max.x - bounds.min.x);
                let eye = Vec3::new(x, c.y, c.z - r);
                Pose::look_at(eye, eye + Vec3::z(), WORLD_UP)
            }
            CameraPath::Pan => {
                let yaw = PI * frac(i);
                Pose::look_at(c, c + Vec3::new(yaw.sin(), 0.0, yaw.cos()), WORLD_UP)
            }
        })
        .collect()
}

/// A furnished 4 × 2.4 × 4 m room (interior centered at the origin, y up)
/// enclosed by 0.1 m thick walls.
pub fn box_room() -> SyntheticScene {
    let (hx, hy, hz, t) = (2.0, 1.2, 2.0, 0.05);
    let slab = |center: [f64; 3], half: [f64; 3]| Primitive::Box {
        center: Vec3::from(center),
        half_extents: Vec3::from(half),
    };
    let primitives = vec![
        slab([-(hx + t), 0.0, 0.0], [t, hy + 2.0 * t, hz + 2.0 * t]),
        slab([hx + t, 0.0, 0.0], [t, hy + 2.0 * t, hz + 2.0 * t]),
        slab([0.0, -(hy + t), 0.0], [hx, t, hz]),
        slab([0.0, hy + t, 0.0], [hx, t, hz]),
        slab([0.0, 0.0, -(hz + t)], [hx, hy, t]),
        slab([0.0, 0.0, hz + t], [hx, hy, t]),
        // furniture standing on the floor
        slab([0.9, -0.8, 1.3], [0.5, 0.4, 0.35]),
        Primitive::Sphere { center: Vec3::new(-1.1, -0.75, 1.2), radius: 0.45 },
        slab([-1.2, -0.6, -1.3], [0.4, 0.6, 0.3]),
        Primitive::Sphere { center: Vec3::new(1.0, -0.85, -1.0), radius: 0.35 },
    ];
    let m = 2.0 * t;
    SyntheticScene {
        primitives,
        bbox: Some(BoundingBox { min: Vec3::new(-hx - m, -hy - m, -hz - m), max: Vec3::new(hx + m, hy + m, hz + m) }),
        camera: CameraSpec::default(),
    }
}
