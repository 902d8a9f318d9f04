use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{DepthFrame, Intrinsics, Pose, Vec3};

use super::depth_png::load_depth_png;
use super::normalize::BoundingBox;
use super::trajectory::{format_trajectory, parse_trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    /// Depth image path, relative to the manifest directory when relative.
    pub depth_path: PathBuf,
    pub timestamp: f64,
    pub pose: Pose,
}

/// A posed depth sequence on disk.
///
/// Text layout, one item per line, `#` starts a comment:
///
/// ```text
/// intrinsics <fx> <fy> <cx> <cy> <width> <height>
/// depth_scale <raw units per meter>
/// bbox <minx> <miny> <minz> <maxx> <maxy> <maxz>
/// <depth_path> <timestamp> <tx> <ty> <tz> <qx> <qy> <qz> <qw>
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub intrinsics: Intrinsics,
    pub depth_scale: f64,
    pub bbox: BoundingBox,
    pub entries: Vec<SequenceEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn numbers(fields: &[&str], line: usize, n: usize) -> Result<Vec<f64>> {
    if fields.len() != n {
        return Err(Error::Parse { line, message: format!("expected {n} values, found {}", fields.len()) });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, message: format!("bad number {f:?}") })
        })
        .collect()
}

impl SequenceManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut intrinsics = None;
        let mut depth_scale = None;
        let mut bbox = None;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let perr = |e: Error| match e {
                Error::Parse { .. } => e,
                other => Error::Parse { line: line_no, message: other.to_string() },
            };
            match fields[0] {
                "intrinsics" => {
                    let v = numbers(&fields[1..], line_no, 6)?;
                    if v[4] < 1.0 || v[5] < 1.0 || v[4].fract() != 0.0 || v[5].fract() != 0.0 {
                        return Err(Error::Parse { line: line_no, message: "image size must be a positive integer".into() });
                    }
                    intrinsics =
                        Some(Intrinsics::new(v[0], v[1], v[2], v[3], v[4] as usize, v[5] as usize).map_err(perr)?);
                }
                "depth_scale" => {
                    let v = numbers(&fields[1..], line_no, 1)?;
                    if v[0] <= 0.0 {
                        return Err(Error::Parse { line: line_no, message: "depth_scale must be positive".into() });
                    }
                    depth_scale = Some(v[0]);
                }
                "bbox" => {
                    let v = numbers(&fields[1..], line_no, 6)?;
                    bbox = Some(
                        BoundingBox::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5])).map_err(perr)?,
                    );
                }
                path => {
                    let rest = line[line.find(path).unwrap() + path.len()..].trim();
                    let (timestamp, pose) = parse_trajectory(rest, line_no)?;
                    entries.push(SequenceEntry { depth_path: PathBuf::from(path), timestamp, pose });
                }
            }
        }
        let missing = |what: &str| Error::Parse { line: 0, message: format!("manifest has no {what} line") };
        Ok(SequenceManifest {
            intrinsics: intrinsics.ok_or_else(|| missing("intrinsics"))?,
            depth_scale: depth_scale.unwrap_or(super::DEFAULT_DEPTH_SCALE),
            bbox: bbox.ok_or_else(|| missing("bbox"))?,
            entries,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Reads and validates a manifest; every referenced depth image must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let manifest = Self::parse(&text, base)?;
        for (i, e) in manifest.entries.iter().enumerate() {
            let p = manifest.resolve(&e.depth_path);
            if !p.is_file() {
                return Err(Error::Frame {
                    frame: i,
                    source: Box::new(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound))),
                });
            }
        }
        Ok(manifest)
    }

    pub fn to_text(&self) -> String {
        let k = &self.intrinsics;
        let (lo, hi) = (self.bbox.min, self.bbox.max);
        let mut out = String::from("# depth_path timestamp tx ty tz qx qy qz qw\n");
        writeln!(out, "intrinsics {} {} {} {} {} {}", k.fx, k.fy, k.cx, k.cy, k.width, k.height).unwrap();
        writeln!(out, "depth_scale {}", self.depth_scale).unwrap();
        writeln!(out, "bbox {} {} {} {} {} {}", lo.x, lo.y, lo.z, hi.x, hi.y, hi.z).unwrap();
        for e in &self.entries {
            writeln!(out, "{} {}", e.depth_path.display(), format_trajectory(e.timestamp, &e.pose)).unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads entry `i` as a frame with index `i`.
    pub fn load_frame(&self, i: usize) -> Result<DepthFrame> {
        let wrap = |e: Error| Error::Frame { frame: i, source: Box::new(e) };
        let entry = self.entries.get(i).ok_or_else(|| {
            Error::InvalidArgument(format!("frame {i} out of range ({} frames)", self.entries.len()))
        })?;
        let path = self.resolve(&entry.depth_path);
        let (w, h, depth) = load_depth_png(&path, self.depth_scale).map_err(wrap)?;
        if (w, h) != (self.intrinsics.width, self.intrinsics.height) {
            return Err(wrap(Error::DepthImage {
                path,
                reason: format!("size {w}x{h} does not match intrinsics"),
            }));
        }
        DepthFrame::new(depth, self.intrinsics, entry.pose, i, entry.timestamp).map_err(wrap)
    }

    /// Builds a manifest from a TUM / ICL-NUIM (TUM export) directory holding
    /// `depth.txt` (`timestamp path` lines) and `groundtruth.txt`. Each depth
    /// image takes the pose with the nearest timestamp within `max_dt` seconds.
    pub fn from_tum(dir: &Path, intrinsics: Intrinsics, depth_scale: f64, bbox: BoundingBox, max_dt: f64) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        let mut poses = Vec::new();
        for (i, line) in read("groundtruth.txt")?.lines().enumerate() {
            let l = line.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            poses.push(parse_trajectory(l, i + 1)?);
        }
        poses.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut entries = Vec::new();
        for (i, line) in read("depth.txt")?.lines().enumerate() {
            let l = line.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse { line: i + 1, message: "expected `timestamp path`".into() });
            }
            let ts: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse { line: i + 1, message: format!("bad timestamp {:?}", fields[0]) })?;
            let idx = poses.partition_point(|(t, _)| *t < ts);
            let best = [idx.checked_sub(1), (idx < poses.len()).then_some(idx)]
                .into_iter()
                .flatten()
                .min_by(|&a, &b| (poses[a].0 - ts).abs().total_cmp(&(poses[b].0 - ts).abs()));
            if let Some(j) = best.filter(|&j| (poses[j].0 - ts).abs() <= max_dt) {
                entries.push(SequenceEntry { depth_path: PathBuf::from(fields[1]), timestamp: ts, pose: poses[j].1 });
            }
        }
        Ok(SequenceManifest { intrinsics, depth_scale, bbox, entries, base_dir: dir.to_path_buf() })
    }
}
