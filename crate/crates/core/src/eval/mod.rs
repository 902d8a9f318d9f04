//! Measurements on trained fields: per-frame error heatmaps, forgetting
//! curves, marching-cubes meshes with occupancy masking, mesh/cloud distances
//! and SDF slices, plus their file exports.

mod distance;
mod export;
mod marching;
mod mc_tables;
mod metrics;
mod slice;

pub use distance::{closest_point_on_triangle, mesh_accuracy, mesh_to_cloud_error, point_triangle_distance, ErrorStats};
pub use export::{curve_csv, heatmap_csv, mesh_to_ply, slice_csv, slice_to_pgm};
pub use marching::{
    extract_mesh, masked_extract_mesh, occupied_voxel_mask, occupied_voxel_mask_at, SampleGrid, TriangleMesh, VoxelMask,
};
pub use metrics::{forgetting_curve, sdf_error_heatmap, HeatmapMatrix, DEFAULT_FORGET_THRESHOLD};
pub use slice::{export_sdf_slice, SdfSlice, SliceAxis};

use crate::field::NetworkParams;
use crate::geometry::Vec3;
use crate::scene::NormalizationTransform;

/// A scalar field over world space.
pub trait ScalarField: Sync {
    fn value(&self, p: &Vec3) -> f64;
}

impl<F: Fn(&Vec3) -> f64 + Sync> ScalarField for F {
    fn value(&self, p: &Vec3) -> f64 {
        self(p)
    }
}

/// A trained network seen in world coordinates, with values in meters.
#[derive(Debug, Clone, Copy)]
pub struct NetworkField<'a> {
    pub params: &'a NetworkParams,
    pub normalization: NormalizationTransform,
}

impl ScalarField for NetworkField<'_> {
    fn value(&self, p: &Vec3) -> f64 {
        let x = self.normalization.apply(p);
        self.normalization.to_meters(self.params.forward_unchecked(x.as_slice()))
    }
}
