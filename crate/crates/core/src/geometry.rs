//! Pinhole camera geometry: backprojection, normals, projection and the
//! frustum-guided sign rule for off-surface samples.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Default half-width of the band around the observed surface (meters)
/// inside which the depth map can't vouch for a sign.
pub const DEFAULT_SURFACE_BAND: f64 = 0.01;

/// Neighbors whose depth differs by more than this fraction are treated as
/// across an occlusion boundary.
const MAX_RELATIVE_DEPTH_JUMP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image center, given horizontal
    /// field of view in degrees.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64) -> Result<Self> {
        let fx = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(fx, fx, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Camera-frame point for pixel (u, v) at depth d.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth)
    }

    /// Unit ray direction through pixel (u, v), camera frame.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let pose = Pose { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if r.iter().chain(self.translation.iter()).any(|v| !v.is_finite())
            || ortho > 1e-6
            || (det - 1.0).abs() > 1e-6
        {
            return Err(Error::InvalidArgument(format!("pose rotation not orthonormal (err {ortho:e}, det {det})")));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; camera axes x right, y down, z forward.
    pub fn look_at(eye: Vec3, target: Vec3, world_up: Vec3) -> Result<Self> {
        let forward = (target - eye).try_normalize(1e-12).ok_or_else(|| {
            Error::InvalidArgument("look_at: eye and target coincide".into())
        })?;
        let right = forward
            .cross(&world_up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("look_at: view direction parallel to up".into()))?;
        let down = forward.cross(&right);
        Pose::new(Matrix3::from_columns(&[right, down, forward]), eye)
    }

    pub fn to_world(&self, camera_point: &Vec3) -> Vec3 {
        self.rotation * camera_point + self.translation
    }

    pub fn to_camera(&self, world_point: &Vec3) -> Vec3 {
        self.rotation.transpose() * (world_point - self.translation)
    }
}

/// One posed depth image. Depth is in meters, row-major, 0 marks invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub depth: Vec<f64>,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub index: usize,
    pub timestamp: f64,
}

impl DepthFrame {
    pub fn new(depth: Vec<f64>, intrinsics: Intrinsics, pose: Pose, index: usize, timestamp: f64) -> Result<Self> {
        intrinsics.validate()?;
        pose.validate()?;
        if depth.len() != intrinsics.width * intrinsics.height {
            return Err(Error::ShapeMismatch { expected: intrinsics.width * intrinsics.height, actual: depth.len() });
        }
        if depth.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidArgument("depth values must be finite and non-negative".into()));
        }
        Ok(DepthFrame { depth, intrinsics, pose, index, timestamp })
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Depth at pixel (u, v); 0 when invalid.
    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.intrinsics.width + u]
    }

    pub fn valid_pixel_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }

    /// Camera-frame point of a valid pixel.
    pub fn camera_point(&self, u: usize, v: usize) -> Option<Vec3> {
        let d = self.depth_at(u, v);
        (d > 0.0).then(|| self.intrinsics.backproject(u as f64, v as f64, d))
    }

    /// World point of a valid pixel.
    pub fn world_point(&self, u: usize, v: usize) -> Option<Vec3> {
        self.camera_point(u, v).map(|p| self.pose.to_world(&p))
    }

    pub fn camera_center(&self) -> Vec3 {
        self.pose.translation
    }
}

/// Oriented zero level-set observations in world coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceSampleSet {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub frame_index: usize,
}

impl SurfaceSampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignLabel {
    Positive,
    Negative,
}

/// Per-pixel camera-frame normals, oriented toward the camera.
///
/// The normal at (u, v) is the normalized cross product of the central
/// horizontal and vertical differences of backprojected neighbors. Pixels on
/// the border, with an invalid neighbor, across a depth discontinuity, or with
/// a degenerate cross product get `None`.
pub fn estimate_normals(frame: &DepthFrame) -> Vec<Option<Vec3>> {
    let (w, h) = (frame.width(), frame.height());
    let mut normals = vec![None; w * h];
    if w < 3 || h < 3 {
        return normals;
    }
    for v in 1..h - 1 {
        for u in 1..w - 1 {
            normals[v * w + u] = pixel_normal(frame, u, v);
        }
    }
    normals
}

fn pixel_normal(frame: &DepthFrame, u: usize, v: usize) -> Option<Vec3> {
    let center = frame.camera_point(u, v)?;
    let d = center.z;
    let neighbor = |uu: usize, vv: usize| {
        frame
            .camera_point(uu, vv)
            .filter(|p| (p.z - d).abs() <= MAX_RELATIVE_DEPTH_JUMP * d)
    };
    let right = neighbor(u + 1, v)?;
    let left = neighbor(u - 1, v)?;
    let down = neighbor(u, v + 1)?;
    let up = neighbor(u, v - 1)?;
    let n = (right - left).cross(&(down - up)).try_normalize(1e-12)?;
    // camera sits at the origin: orient toward it
    if n.dot(&(-center)) > 0.0 {
        Some(n)
    } else {
        Some(-n)
    }
}

/// World-space oriented samples on a `stride` pixel grid.
///
/// Pixels with invalid depth, or for which no normal can be estimated, are
/// skipped. A frame with no usable pixel yields an empty set.
pub fn backproject(frame: &DepthFrame, stride: usize) -> Result<SurfaceSampleSet> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let normals = estimate_normals(frame);
    let mut out = SurfaceSampleSet { frame_index: frame.index, ..Default::default() };
    let w = frame.width();
    for v in (0..frame.height()).step_by(stride) {
        for u in (0..w).step_by(stride) {
            let (Some(p), Some(n)) = (frame.camera_point(u, v), normals[v * w + u]) else {
                continue;
            };
            out.points.push(frame.pose.to_world(&p));
            out.normals.push(frame.pose.rotation * n);
        }
    }
    Ok(out)
}

/// Result of projecting a world point into a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Inside {
        /// Continuous pixel coordinates.
        u: f64,
        v: f64,
        /// Nearest pixel.
        pixel: (usize, usize),
        /// Camera-frame depth of the point.
        z: f64,
        /// Measured depth at the pixel.
        surface_depth: f64,
    },
    OutsideFrustum,
}

/// Projects a world point; outside when behind the camera, off-image, or
/// landing on an invalid measurement.
pub fn project(point: &Vec3, frame: &DepthFrame) -> Projection {
    let c = frame.pose.to_camera(point);
    if !(c.z > 0.0) {
        return Projection::OutsideFrustum;
    }
    let k = &frame.intrinsics;
    let u = k.fx * c.x / c.z + k.cx;
    let v = k.fy * c.y / c.z + k.cy;
    let (ur, vr) = (u.round(), v.round());
    if ur < 0.0 || vr < 0.0 || ur >= k.width as f64 || vr >= k.height as f64 {
        return Projection::OutsideFrustum;
    }
    let pixel = (ur as usize, vr as usize);
    let surface_depth = frame.depth_at(pixel.0, pixel.1);
    if surface_depth <= 0.0 {
        return Projection::OutsideFrustum;
    }
    Projection::Inside { u, v, pixel, z: c.z, surface_depth }
}

/// Sign label for an off-surface point given the previous network's value
/// there (`prev_value`, normalized units) and the current frame.
///
/// In-frustum points in front of the observed surface (beyond the `band`)
/// are always positive. In-frustum points behind the surface are negative
/// only when the previous network already says so. Everywhere else the
/// previous network's sign is kept, with zero counted as positive.
pub fn classify_sign(point: &Vec3, frame: &DepthFrame, prev_value: f64, band: f64) -> SignLabel {
    if prev_value > 0.0 {
        return SignLabel::Positive;
    }
    if let Projection::Inside { z, surface_depth, .. } = project(point, frame) {
        if z < surface_depth - band {
            return SignLabel::Positive;
        }
        if z > surface_depth + band && prev_value < 0.0 {
            return SignLabel::Negative;
        }
    }
    if prev_value < 0.0 {
        SignLabel::Negative
    } else {
        SignLabel::Positive
    }
}
