use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{DepthFrame, Intrinsics, Pose, Vec3};

use super::normalize::BoundingBox;

/// Sphere tracing stops once |sdf| falls below this (meters).
pub const MARCH_TOLERANCE: f64 = 1e-5;
pub const MAX_MARCH_STEPS: usize = 256;
/// Rays travelling farther than this (meters) count as misses.
pub const MAX_RANGE: f64 = 10.0;

/// Solid primitive with an exact signed distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned box.
    Box { center: Vec3, half_extents: Vec3 },
    /// Half-space `normal · x < offset` is solid.
    Plane { normal: Vec3, offset: f64 },
}

impl Primitive {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match *self {
            Primitive::Sphere { center, radius } => (p - center).norm() - radius,
            Primitive::Box { center, half_extents } => {
                let q = (p - center).abs() - half_extents;
                q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
            }
            Primitive::Plane { normal, offset } => normal.dot(p) - offset,
        }
    }

    fn bounds(&self) -> Option<BoundingBox> {
        match *self {
            Primitive::Sphere { center, radius } => {
                Some(BoundingBox { min: center - Vec3::repeat(radius), max: center + Vec3::repeat(radius) })
            }
            Primitive::Box { center, half_extents } => {
                Some(BoundingBox { min: center - half_extents, max: center + half_extents })
            }
            Primitive::Plane { .. } => None,
        }
    }
}

/// Camera model used when rendering a scene file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, degrees.
    pub hfov: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec { width: 80, height: 60, hfov: 60.0 }
    }
}

impl CameraSpec {
    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::from_fov(self.width, self.height, self.hfov)
    }
}

/// Union of solid primitives.
///
/// The union SDF is the minimum over primitives: exact outside every solid,
/// a conservative bound inside overlapping solids.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub primitives: Vec<Primitive>,
    /// Optional explicit scene bounds; required when the scene has planes.
    pub bbox: Option<BoundingBox>,
    pub camera: CameraSpec,
}

impl SyntheticScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::InvalidArgument("a scene needs at least one primitive".into()));
        }
        Ok(SyntheticScene { primitives, bbox: None, camera: CameraSpec::default() })
    }

    /// Signed distance in meters, negative inside solids.
    pub fn oracle_sdf(&self, p: &Vec3) -> f64 {
        self.primitives.iter().map(|prim| prim.sdf(p)).fold(f64::INFINITY, f64::min)
    }

    /// Central-difference gradient of the oracle.
    pub fn oracle_gradient(&self, p: &Vec3) -> Vec3 {
        let h = 1e-6;
        let mut g = Vec3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            g[k] = (self.oracle_sdf(&(p + e)) - self.oracle_sdf(&(p - e))) / (2.0 * h);
        }
        g
    }

    /// Explicit bbox, or the union of finite primitive bounds.
    pub fn bounds(&self) -> Result<BoundingBox> {
        if let Some(b) = self.bbox {
            return Ok(b);
        }
        let mut acc: Option<BoundingBox> = None;
        for p in &self.primitives {
            match p.bounds() {
                Some(b) => {
                    acc = Some(match acc {
                        None => b,
                        Some(a) => BoundingBox { min: a.min.inf(&b.min), max: a.max.sup(&b.max) },
                    })
                }
                None => {
                    return Err(Error::InvalidArgument("scene with planes needs an explicit bbox".into()));
                }
            }
        }
        let b = acc.expect("non-empty scene");
        BoundingBox::new(b.min, b.max)
    }

    /// Parses the key-value scene description:
    ///
    /// ```text
    /// # comment
    /// sphere center=0,0,2 radius=0.5
    /// box center=0,0,0 half=1,1,1
    /// plane normal=0,1,0 offset=-1
    /// bbox min=-2,-2,-2 max=2,2,2
    /// camera width=80 height=60 hfov=60
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut primitives = Vec::new();
        let mut bbox = None;
        let mut camera = CameraSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let kind = tokens.next().unwrap();
            let kv = KeyValues::parse(tokens, line_no)?;
            match kind {
                "sphere" => primitives.push(Primitive::Sphere {
                    center: kv.vec3("center")?,
                    radius: kv.positive("radius")?,
                }),
                "box" => {
                    let half = kv.vec3("half")?;
                    if half.iter().any(|v| *v <= 0.0) {
                        return Err(kv.err("box half extents must be positive"));
                    }
                    primitives.push(Primitive::Box { center: kv.vec3("center")?, half_extents: half })
                }
                "plane" => {
                    let normal = kv.vec3("normal")?.try_normalize(1e-12).ok_or_else(|| kv.err("zero plane normal"))?;
                    primitives.push(Primitive::Plane { normal, offset: kv.scalar("offset")? })
                }
                "bbox" => {
                    bbox = Some(BoundingBox::new(kv.vec3("min")?, kv.vec3("max")?).map_err(|e| kv.err(&e.to_string()))?)
                }
                "camera" => {
                    camera = CameraSpec {
                        width: kv.positive("width")? as usize,
                        height: kv.positive("height")? as usize,
                        hfov: kv.positive("hfov")?,
                    }
                }
                other => return Err(Error::Parse { line: line_no, message: format!("unknown entry {other:?}") }),
            }
            kv.finish()?;
        }
        let mut scene = SyntheticScene::new(primitives)?;
        scene.bbox = bbox;
        scene.camera = camera;
        scene.camera.intrinsics()?;
        Ok(scene)
    }

    pub fn to_text(&self) -> String {
        let v = |x: &Vec3| format!("{},{},{}", x.x, x.y, x.z);
        let mut out = String::new();
        for p in &self.primitives {
            match p {
                Primitive::Sphere { center, radius } => {
                    writeln!(out, "sphere center={} radius={radius}", v(center)).unwrap()
                }
                Primitive::Box { center, half_extents } => {
                    writeln!(out, "box center={} half={}", v(center), v(half_extents)).unwrap()
                }
                Primitive::Plane { normal, offset } => {
                    writeln!(out, "plane normal={} offset={offset}", v(normal)).unwrap()
                }
            }
        }
        if let Some(b) = &self.bbox {
            writeln!(out, "bbox min={} max={}", v(&b.min), v(&b.max)).unwrap();
        }
        let c = &self.camera;
        writeln!(out, "camera width={} height={} hfov={}", c.width, c.height, c.hfov).unwrap();
        out
    }

    /// Sphere-traced distance along a unit ray, or `None` on a miss.
    pub fn trace(&self, origin: &Vec3, direction: &Vec3) -> Option<f64> {
        let mut t = 0.0;
        for _ in 0..MAX_MARCH_STEPS {
            let d = self.oracle_sdf(&(origin + direction * t));
            if d.abs() < MARCH_TOLERANCE {
                return Some(t);
            }
            t += d;
            if !(t <= MAX_RANGE) || t < 0.0 {
                return None;
            }
        }
        None
    }
}

struct KeyValues<'a> {
    pairs: Vec<(&'a str, &'a str)>,
    used: std::cell::RefCell<Vec<bool>>,
    line: usize,
}

impl<'a> KeyValues<'a> {
    fn parse(tokens: impl Iterator<Item = &'a str>, line: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected key=value, got {t:?}") })?;
            pairs.push((k, v));
        }
        let used = std::cell::RefCell::new(vec![false; pairs.len()]);
        Ok(KeyValues { pairs, used, line })
    }

    fn err(&self, message: &str) -> Error {
        Error::Parse { line: self.line, message: message.to_string() }
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        let i = self
            .pairs
            .iter()
            .position(|(k, _)| *k == key)
            .ok_or_else(|| self.err(&format!("missing key {key:?}")))?;
        self.used.borrow_mut()[i] = true;
        Ok(self.pairs[i].1)
    }

    fn scalar(&self, key: &str) -> Result<f64> {
        let s = self.get(key)?;
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(&format!("bad number for {key}: {s:?}")))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.scalar(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(&format!("{key} must be positive")))
        }
    }

    fn vec3(&self, key: &str) -> Result<Vec3> {
        let s = self.get(key)?;
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.err(&format!("bad vector for {key}: {s:?}")))?;
        if parts.len() != 3 || parts.iter().any(|v| !v.is_finite()) {
            return Err(self.err(&format!("{key} needs three finite components")));
        }
        Ok(Vec3::new(parts[0], parts[1], parts[2]))
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.pairs.iter().zip(used.iter()).find(|(_, u)| !**u) {
            Some(((k, _), _)) => Err(self.err(&format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }
}

/// Renders a depth frame by sphere tracing every pixel ray against the
/// oracle. Stored depth is the camera-z coordinate of the hit; misses are 0.
pub fn render_synthetic_depth(
    scene: &SyntheticScene,
    intrinsics: &Intrinsics,
    pose: &Pose,
    index: usize,
    timestamp: f64,
) -> Result<DepthFrame> {
    let origin = pose.translation;
    if scene.oracle_sdf(&origin) <= 0.0 {
        return Err(Error::InvalidArgument("camera must be outside all solids".into()));
    }
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut depth = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let ray_cam = intrinsics.ray(u as f64, v as f64);
            let dir = pose.rotation * ray_cam;
            if let Some(t) = scene.trace(&origin, &dir) {
                depth[v * w + u] = t * ray_cam.z;
            }
        }
    }
    DepthFrame::new(depth, *intrinsics, *pose, index, timestamp)
}
