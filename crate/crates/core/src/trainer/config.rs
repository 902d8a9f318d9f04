use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{LayerDims, LossWeights, DEFAULT_ALPHA, DEFAULT_OMEGA0};
use crate::geometry::{Vec3, DEFAULT_SURFACE_BAND};
use crate::scene::BoundingBox;

/// Every knob of a mapping session.
///
/// Stored as `key = value` lines; `#` starts a comment and unknown keys are
/// rejected. See [`TrainConfig::KEYS`] for the documented keys.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dims: LayerDims,
    pub omega0: f64,
    pub epochs_per_frame: usize,
    pub first_frame_epochs: usize,
    pub learning_rate: f64,
    /// Surface samples per optimization step (current + replay).
    pub batch_size: usize,
    /// Fraction of the surface samples in a batch drawn from the buffer.
    pub replay_ratio: f64,
    /// Fraction of the whole batch made of off-surface samples.
    pub off_surface_fraction: f64,
    pub weights: LossWeights,
    pub alpha: f64,
    /// Surface band for sign labeling, meters.
    pub surface_band: f64,
    pub seed: u64,
    /// Use every n-th frame of the input sequence.
    pub frame_stride: usize,
    /// Pixel subsampling when backprojecting depth maps.
    pub pixel_stride: usize,
    /// Replay buffer size; 0 means "as many samples as the first frame".
    pub buffer_capacity: usize,
    pub replay_enabled: bool,
    pub label_off_surface: bool,
    pub eikonal_replay: bool,
    pub eikonal_off_surface: bool,
    /// Overrides the sequence bbox for normalization.
    pub bbox: Option<BoundingBox>,
    /// Store the replay buffer inside every checkpoint.
    pub checkpoint_buffer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dims: LayerDims::paper_default(),
            omega0: DEFAULT_OMEGA0,
            epochs_per_frame: 1500,
            first_frame_epochs: 10_000,
            learning_rate: 1e-4,
            batch_size: 256,
            replay_ratio: 0.5,
            off_surface_fraction: 0.5,
            weights: LossWeights::default(),
            alpha: DEFAULT_ALPHA,
            surface_band: DEFAULT_SURFACE_BAND,
            seed: 0,
            frame_stride: 10,
            pixel_stride: 4,
            buffer_capacity: 0,
            replay_enabled: true,
            label_off_surface: true,
            eikonal_replay: true,
            eikonal_off_surface: true,
            bbox: None,
            checkpoint_buffer: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Parse { line, message: format!("bad value for {key}: {v:?}") })
}

fn parse_bool(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse { line, message: format!("bad boolean for {key}: {v:?}") }),
    }
}

fn parse_list(key: &str, v: &str, line: usize) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_num::<f64>(key, s.trim(), line)).collect()
}

impl TrainConfig {
    /// (key, meaning) for every accepted config key.
    pub const KEYS: &'static [(&'static str, &'static str)] = &[
        ("dims", "layer widths, comma separated (input,hidden...,1)"),
        ("omega0", "sine frequency scale"),
        ("epochs_per_frame", "epochs for every frame after the first"),
        ("first_frame_epochs", "epochs for the first frame"),
        ("learning_rate", "Adam learning rate"),
        ("batch_size", "surface samples per step (current + replay)"),
        ("replay_ratio", "fraction of surface samples drawn from the buffer, in (0,1)"),
        ("off_surface_fraction", "fraction of each batch that is off-surface samples, in [0,1)"),
        ("weight_data", "weight of the |f| term"),
        ("weight_normal", "weight of the normal term"),
        ("weight_eikonal", "weight of the Eikonal term"),
        ("weight_off_surface", "weight of the off-surface term"),
        ("alpha", "sharpness of the off-surface penalties"),
        ("surface_band", "meters around the observed surface where the depth map gives no sign"),
        ("seed", "random seed"),
        ("frame_stride", "use every n-th input frame"),
        ("pixel_stride", "pixel subsampling of depth maps"),
        ("buffer_capacity", "replay buffer size, 0 = first frame's sample count"),
        ("replay_enabled", "replay buffer samples in batches (true/false)"),
        ("label_off_surface", "sign-label off-surface samples with the previous network (true/false)"),
        ("eikonal_replay", "apply the Eikonal term at replayed samples (true/false)"),
        ("eikonal_off_surface", "apply the Eikonal term at off-surface samples (true/false)"),
        ("bbox", "normalization bbox minx,miny,minz,maxx,maxy,maxz (default: from the sequence)"),
        ("checkpoint_buffer", "embed the replay buffer in checkpoints (true/false)"),
    ];

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse { line, message: format!("expected key = value, got {body:?}") })?;
            match key {
                "dims" => {
                    let dims = value
                        .split(',')
                        .map(|s| parse_num::<usize>(key, s.trim(), line))
                        .collect::<Result<Vec<_>>>()?;
                    c.dims = LayerDims::new(dims).map_err(|e| Error::Parse { line, message: e.to_string() })?;
                }
                "omega0" => c.omega0 = parse_num(key, value, line)?,
                "epochs_per_frame" => c.epochs_per_frame = parse_num(key, value, line)?,
                "first_frame_epochs" => c.first_frame_epochs = parse_num(key, value, line)?,
                "learning_rate" => c.learning_rate = parse_num(key, value, line)?,
                "batch_size" => c.batch_size = parse_num(key, value, line)?,
                "replay_ratio" => c.replay_ratio = parse_num(key, value, line)?,
                "off_surface_fraction" => c.off_surface_fraction = parse_num(key, value, line)?,
                "weight_data" => c.weights.data = parse_num(key, value, line)?,
                "weight_normal" => c.weights.normal = parse_num(key, value, line)?,
                "weight_eikonal" => c.weights.eikonal = parse_num(key, value, line)?,
                "weight_off_surface" => c.weights.off_surface = parse_num(key, value, line)?,
                "alpha" => c.alpha = parse_num(key, value, line)?,
                "surface_band" => c.surface_band = parse_num(key, value, line)?,
                "seed" => c.seed = parse_num(key, value, line)?,
                "frame_stride" => c.frame_stride = parse_num(key, value, line)?,
                "pixel_stride" => c.pixel_stride = parse_num(key, value, line)?,
                "buffer_capacity" => c.buffer_capacity = parse_num(key, value, line)?,
                "replay_enabled" => c.replay_enabled = parse_bool(key, value, line)?,
                "label_off_surface" => c.label_off_surface = parse_bool(key, value, line)?,
                "eikonal_replay" => c.eikonal_replay = parse_bool(key, value, line)?,
                "eikonal_off_surface" => c.eikonal_off_surface = parse_bool(key, value, line)?,
                "checkpoint_buffer" => c.checkpoint_buffer = parse_bool(key, value, line)?,
                "bbox" => {
                    if value == "none" {
                        c.bbox = None;
                    } else {
                        let v = parse_list(key, value, line)?;
                        if v.len() != 6 {
                            return Err(Error::Parse { line, message: "bbox needs 6 numbers".into() });
                        }
                        c.bbox = Some(
                            BoundingBox::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))
                                .map_err(|e| Error::Parse { line, message: e.to_string() })?,
                        );
                    }
                }
                other => return Err(Error::Parse { line, message: format!("unknown config key {other:?}") }),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("config: {m}")));
        if self.batch_size == 0 || self.frame_stride == 0 || self.pixel_stride == 0 {
            return bad("batch_size, frame_stride and pixel_stride must be positive");
        }
        if !(self.replay_ratio > 0.0 && self.replay_ratio < 1.0) {
            return bad("replay_ratio must lie in (0, 1)");
        }
        if !(self.off_surface_fraction >= 0.0 && self.off_surface_fraction < 1.0) {
            return bad("off_surface_fraction must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) || !(self.omega0 > 0.0) || !(self.alpha > 0.0) {
            return bad("learning_rate, omega0 and alpha must be positive");
        }
        if !(self.surface_band >= 0.0) {
            return bad("surface_band must be non-negative");
        }
        let w = &self.weights;
        if [w.data, w.normal, w.eikonal, w.off_surface].iter().any(|v| !(*v >= 0.0)) {
            return bad("loss weights must be non-negative");
        }
        if self.dims.input_dim() != 3 {
            return bad("mapping needs a 3-d input network");
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dims: Vec<String> = self.dims.as_slice().iter().map(|d| d.to_string()).collect();
        writeln!(s, "dims = {}", dims.join(",")).unwrap();
        writeln!(s, "omega0 = {}", self.omega0).unwrap();
        writeln!(s, "epochs_per_frame = {}", self.epochs_per_frame).unwrap();
        writeln!(s, "first_frame_epochs = {}", self.first_frame_epochs).unwrap();
        writeln!(s, "learning_rate = {}", self.learning_rate).unwrap();
        writeln!(s, "batch_size = {}", self.batch_size).unwrap();
        writeln!(s, "replay_ratio = {}", self.replay_ratio).unwrap();
        writeln!(s, "off_surface_fraction = {}", self.off_surface_fraction).unwrap();
        writeln!(s, "weight_data = {}", self.weights.data).unwrap();
        writeln!(s, "weight_normal = {}", self.weights.normal).unwrap();
        writeln!(s, "weight_eikonal = {}", self.weights.eikonal).unwrap();
        writeln!(s, "weight_off_surface = {}", self.weights.off_surface).unwrap();
        writeln!(s, "alpha = {}", self.alpha).unwrap();
        writeln!(s, "surface_band = {}", self.surface_band).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "frame_stride = {}", self.frame_stride).unwrap();
        writeln!(s, "pixel_stride = {}", self.pixel_stride).unwrap();
        writeln!(s, "buffer_capacity = {}", self.buffer_capacity).unwrap();
        writeln!(s, "replay_enabled = {}", self.replay_enabled).unwrap();
        writeln!(s, "label_off_surface = {}", self.label_off_surface).unwrap();
        writeln!(s, "eikonal_replay = {}", self.eikonal_replay).unwrap();
        writeln!(s, "eikonal_off_surface = {}", self.eikonal_off_surface).unwrap();
        match &self.bbox {
            Some(b) => writeln!(
                s,
                "bbox = {},{},{},{},{},{}",
                b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z
            )
            .unwrap(),
            None => writeln!(s, "bbox = none").unwrap(),
        }
        writeln!(s, "checkpoint_buffer = {}", self.checkpoint_buffer).unwrap();
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Off-surface samples accompanying `batch_size` surface samples.
    pub fn off_surface_per_batch(&self) -> usize {
        let f = self.off_surface_fraction;
        (self.batch_size as f64 * f / (1.0 - f)).round() as usize
    }

    /// Replayed samples per batch when replay is active.
    pub fn replay_per_batch(&self) -> usize {
        ((self.batch_size as f64 * self.replay_ratio).round() as usize).clamp(1, self.batch_size.max(2) - 1)
    }
}
