use rayon::prelude::*;

use super::ScalarField;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    X,
    Y,
    Z,
}

impl SliceAxis {
    pub fn index(self) -> usize {
        self as usize
    }

    /// In-plane (u, v) axes: x → (y, z), y → (x, z), z → (x, y).
    pub fn plane_axes(self) -> (usize, usize) {
        match self {
            SliceAxis::X => (1, 2),
            SliceAxis::Y => (0, 2),
            SliceAxis::Z => (0, 1),
        }
    }
}

impl std::str::FromStr for SliceAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(SliceAxis::X),
            "y" => Ok(SliceAxis::Y),
            "z" => Ok(SliceAxis::Z),
            _ => Err(Error::InvalidArgument(format!("slice axis must be x, y or z, got {s:?}"))),
        }
    }
}

/// Field values on an axis-aligned plane. `values[r * width + c]` is taken at
/// `u = u_min + c·texel`, `v = v_min + r·texel`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfSlice {
    pub axis: SliceAxis,
    pub offset: f64,
    pub width: usize,
    pub height: usize,
    pub u_min: f64,
    pub v_min: f64,
    pub texel: f64,
    pub values: Vec<f64>,
}

impl SdfSlice {
    pub fn point(&self, row: usize, col: usize) -> Vec3 {
        let (a, b) = self.axis.plane_axes();
        let mut p = Vec3::zeros();
        p[self.axis.index()] = self.offset;
        p[a] = self.u_min + col as f64 * self.texel;
        p[b] = self.v_min + row as f64 * self.texel;
        p
    }
}

/// Samples `field` on the plane `axis = offset` across `bbox`, `resolution`
/// texels along the longer in-plane side.
pub fn export_sdf_slice(
    field: &dyn ScalarField,
    bbox: &BoundingBox,
    axis: SliceAxis,
    offset: f64,
    resolution: usize,
) -> Result<SdfSlice> {
    let k = axis.index();
    if !(offset >= bbox.min[k] && offset <= bbox.max[k]) {
        return Err(Error::InvalidArgument(format!(
            "slice offset {offset} outside the bbox range [{}, {}]",
            bbox.min[k], bbox.max[k]
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("slice resolution must be at least 2".into()));
    }
    let (a, b) = axis.plane_axes();
    let ext = bbox.extent();
    let texel = ext[a].max(ext[b]) / (resolution - 1) as f64;
    let count = |e: f64| ((e / texel - 1e-9).ceil() as usize + 1).max(2);
    let mut slice = SdfSlice {
        axis,
        offset,
        width: count(ext[a]),
        height: count(ext[b]),
        u_min: bbox.min[a],
        v_min: bbox.min[b],
        texel,
        values: Vec::new(),
    };
    let rows: Vec<Vec<f64>> = (0..slice.height)
        .into_par_iter()
        .map(|r| (0..slice.width).map(|c| field.value(&slice.point(r, c))).collect())
        .collect();
    slice.values = rows.concat();
    Ok(slice)
}
