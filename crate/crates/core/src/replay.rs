//! Experience replay: a fixed-size reservoir of past zero level-set samples,
//! plus off-surface samples whose sign is guided by the previous network.

use rand::Rng;

use crate::field::NetworkParams;
use crate::geometry::{classify_sign, DepthFrame, SignLabel, SurfaceSampleSet, Vec3};
use crate::scene::NormalizationTransform;

/// One stored surface observation (world coordinates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferedSample {
    pub point: Vec3,
    pub normal: Vec3,
    pub frame: usize,
}

/// Reservoir of surface samples: after `n` observations every one of them is
/// retained with probability `capacity / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    samples: Vec<BufferedSample>,
    total_seen: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, samples: Vec::with_capacity(capacity), total_seen: 0 }
    }

    pub(crate) fn from_parts(capacity: usize, samples: Vec<BufferedSample>, total_seen: u64) -> Self {
        ReplayBuffer { capacity, samples, total_seen }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_seen(&self) -> u64 {
        self.total_seen
    }

    pub fn samples(&self) -> &[BufferedSample] {
        &self.samples
    }

    /// Streams a frame's samples through the reservoir (Algorithm R).
    pub fn integrate_frame<R: Rng + ?Sized>(&mut self, frame: &SurfaceSampleSet, rng: &mut R) {
        for (point, normal) in frame.points.iter().zip(&frame.normals) {
            let sample = BufferedSample { point: *point, normal: *normal, frame: frame.frame_index };
            self.total_seen += 1;
            if self.samples.len() < self.capacity {
                self.samples.push(sample);
            } else {
                let j = rng.gen_range(0..self.total_seen);
                if (j as usize) < self.capacity {
                    self.samples[j as usize] = sample;
                }
            }
        }
    }

    /// `k` uniform draws with replacement; empty when the buffer is.
    pub fn sample_surface_replay<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<BufferedSample> {
        if self.samples.is_empty() {
            return Vec::new();
        }
        (0..k).map(|_| self.samples[rng.gen_range(0..self.samples.len())]).collect()
    }
}

/// `k` points uniform in the normalized domain [−1, 1]³.
pub fn draw_off_surface<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<Vec3> {
    (0..k)
        .map(|_| Vec3::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
        .collect()
}

/// Off-surface points (normalized coordinates) with their sign labels and the
/// previous network's values there.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OffSurfaceBatch {
    pub points: Vec<Vec3>,
    pub labels: Vec<SignLabel>,
    pub prev_values: Vec<f64>,
}

impl OffSurfaceBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Labels normalized points with the previous network and the current frame.
/// `band` is in meters.
pub fn label_off_surface(
    points: Vec<Vec3>,
    prev_params: &NetworkParams,
    frame: &DepthFrame,
    normalization: &NormalizationTransform,
    band: f64,
) -> OffSurfaceBatch {
    let prev_values: Vec<f64> = points.iter().map(|p| prev_params.forward_unchecked(p.as_slice())).collect();
    let labels = points
        .iter()
        .zip(&prev_values)
        .map(|(p, &v)| classify_sign(&normalization.invert(p), frame, v, band))
        .collect();
    OffSurfaceBatch { points, labels, prev_values }
}
