use rayon::prelude::*;

use crate::field::NetworkParams;
use crate::geometry::Vec3;
use crate::scene::NormalizationTransform;

/// |f| below this (normalized units) counts as remembered.
pub const DEFAULT_FORGET_THRESHOLD: f64 = 0.01;

/// Entry `(m, n)`: statistics of |f(x; θⁿ)| over the surface points of frame
/// `m`, in meters. Below the diagonal (m < n) measures memory, above it
/// prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

impl HeatmapMatrix {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Mean over every entry of the last column (all frames, final network).
    pub fn final_mean(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        self.mean.iter().map(|row| row[n - 1]).sum::<f64>() / n as f64
    }
}

fn abs_values(params: &NetworkParams, points: &[Vec3], norm: &NormalizationTransform) -> Vec<f64> {
    points
        .par_iter()
        .map(|p| params.forward_unchecked(norm.apply(p).as_slice()).abs())
        .collect()
}

/// `checkpoints[n]` evaluated on `frames[m]` (world points) for every pair.
pub fn sdf_error_heatmap(
    checkpoints: &[&NetworkParams],
    frames: &[Vec<Vec3>],
    norm: &NormalizationTransform,
) -> HeatmapMatrix {
    let t = frames.len();
    let mut mean = vec![vec![0.0; checkpoints.len()]; t];
    let mut std = mean.clone();
    for (n, params) in checkpoints.iter().enumerate() {
        for (m, pts) in frames.iter().enumerate() {
            let v = abs_values(params, pts, norm);
            let k = v.len().max(1) as f64;
            let mu = v.iter().sum::<f64>() / k;
            let var = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / k;
            mean[m][n] = norm.to_meters(mu);
            std[m][n] = norm.to_meters(var.sqrt());
        }
    }
    HeatmapMatrix { mean, std }
}

/// Fraction of `frame0` points with |f(x; θᵗ)| < `threshold` (normalized
/// units) for every checkpoint.
pub fn forgetting_curve(
    checkpoints: &[&NetworkParams],
    frame0: &[Vec3],
    norm: &NormalizationTransform,
    threshold: f64,
) -> Vec<f64> {
    checkpoints
        .iter()
        .map(|params| {
            if frame0.is_empty() {
                return 0.0;
            }
            let v = abs_values(params, frame0, norm);
            v.iter().filter(|x| **x < threshold).count() as f64 / v.len() as f64
        })
        .collect()
}
