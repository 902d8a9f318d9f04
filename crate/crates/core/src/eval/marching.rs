use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use super::mc_tables::{CORNERS, EDGES, TRI_TABLE};
use super::ScalarField;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::BoundingBox;

/// Regular grid of sample points with cubic cells.
///
/// `resolution` points span the longest bbox axis; the shorter axes get as
/// many points as needed to cover them at the same spacing, starting at the
/// bbox minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub origin: Vec3,
    pub cell: f64,
    /// Points per axis.
    pub dims: [usize; 3],
}

impl SampleGrid {
    pub fn over(bbox: &BoundingBox, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidArgument(format!("grid resolution must be at least 2, got {resolution}")));
        }
        let ext = bbox.extent();
        let cell = ext.max() / (resolution - 1) as f64;
        let count = |e: f64| ((e / cell - 1e-9).ceil() as usize + 1).max(2);
        Ok(SampleGrid { origin: bbox.min, cell, dims: [count(ext.x), count(ext.y), count(ext.z)] })
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.cell
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Field values at every grid point, x fastest.
    pub fn sample(&self, field: &dyn ScalarField) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let slabs: Vec<Vec<f64>> = (0..nz)
            .into_par_iter()
            .map(|k| {
                let mut out = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        out.push(field.value(&self.point(i, j, k)));
                    }
                }
                out
            })
            .collect();
        slabs.concat()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    pub fn translate(&mut self, offset: &Vec3) {
        for v in &mut self.vertices {
            *v += offset;
        }
    }

    /// Unit normals from the field's central-difference gradient.
    pub fn compute_normals(&mut self, field: &dyn ScalarField, step: f64) {
        let normals = self
            .vertices
            .par_iter()
            .map(|v| {
                let mut g = Vec3::zeros();
                for k in 0..3 {
                    let mut e = Vec3::zeros();
                    e[k] = step;
                    g[k] = field.value(&(v + e)) - field.value(&(v - e));
                }
                g.try_normalize(1e-300).unwrap_or_else(Vec3::zeros)
            })
            .collect();
        self.normals = Some(normals);
    }
}

/// Marching cubes at isovalue 0 over the cells accepted by `keep`.
fn march(grid: &SampleGrid, values: &[f64], keep: impl Fn([usize; 3]) -> bool) -> TriangleMesh {
    let [nx, ny, nz] = grid.dims;
    let mut mesh = TriangleMesh::default();
    // (lower grid point, axis) → vertex id
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();
    let min_area2 = (1e-10 * grid.cell * grid.cell).powi(2);
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = |c: usize| {
                    let [dx, dy, dz] = CORNERS[c];
                    [i + dx, j + dy, k + dz]
                };
                let mut case = 0usize;
                for c in 0..8 {
                    let [a, b, d] = corner(c);
                    if values[grid.index(a, b, d)] < 0.0 {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 || !keep([i, j, k]) {
                    continue;
                }
                let mut vertex = |e: i8| {
                    let [ca, cb] = EDGES[e as usize];
                    let (mut pa, mut pb) = (corner(ca), corner(cb));
                    if grid.index(pa[0], pa[1], pa[2]) > grid.index(pb[0], pb[1], pb[2]) {
                        std::mem::swap(&mut pa, &mut pb);
                    }
                    let axis = (0..3).find(|&d| pa[d] != pb[d]).unwrap() as u8;
                    let ia = grid.index(pa[0], pa[1], pa[2]);
                    *edge_vertex.entry((ia, axis)).or_insert_with(|| {
                        let (va, vb) = (values[ia], values[grid.index(pb[0], pb[1], pb[2])]);
                        let t = (va / (va - vb)).clamp(0.0, 1.0);
                        let xa = grid.point(pa[0], pa[1], pa[2]);
                        let xb = grid.point(pb[0], pb[1], pb[2]);
                        mesh.vertices.push(xa + (xb - xa) * t);
                        (mesh.vertices.len() - 1) as u32
                    })
                };
                // table winding faces the low side; reverse it so triangles
                // face the positive side of the field
                let tris: Vec<[u32; 3]> = TRI_TABLE[case]
                    .chunks(3)
                    .take_while(|t| t[0] >= 0)
                    .map(|t| [vertex(t[0]), vertex(t[2]), vertex(t[1])])
                    .collect();
                for ids in tris {
                    if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
                        continue;
                    }
                    let [a, b, c] = ids.map(|v| mesh.vertices[v as usize]);
                    if (b - a).cross(&(c - a)).norm_squared() <= min_area2 {
                        continue;
                    }
                    mesh.triangles.push(ids);
                }
            }
        }
    }
    drop_unused_vertices(&mut mesh);
    mesh
}

fn drop_unused_vertices(mesh: &mut TriangleMesh) {
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut kept = Vec::new();
    for tri in &mut mesh.triangles {
        for v in tri.iter_mut() {
            if remap[*v as usize] == u32::MAX {
                remap[*v as usize] = kept.len() as u32;
                kept.push(mesh.vertices[*v as usize]);
            }
            *v = remap[*v as usize];
        }
    }
    mesh.vertices = kept;
}

/// Zero level set of `field` over `bbox`, `resolution` samples along the
/// longest axis. Vertices carry gradient normals.
pub fn extract_mesh(field: &dyn ScalarField, bbox: &BoundingBox, resolution: usize) -> Result<TriangleMesh> {
    let grid = SampleGrid::over(bbox, resolution)?;
    let values = grid.sample(field);
    let mut mesh = march(&grid, &values, |_| true);
    mesh.compute_normals(field, 0.25 * grid.cell);
    Ok(mesh)
}

/// Occupied voxels: every voxel holding an observed point, plus its 26
/// neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    pub voxel_size: f64,
    pub origin: Vec3,
    pub voxels: BTreeSet<[i64; 3]>,
}

impl VoxelMask {
    pub fn voxel_of(&self, p: &Vec3) -> [i64; 3] {
        let q = (p - self.origin) / self.voxel_size;
        [q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64]
    }

    pub fn contains(&self, voxel: &[i64; 3]) -> bool {
        self.voxels.contains(voxel)
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

/// Mask with voxel corners on the lattice `origin + voxel_size · ℤ³`.
pub fn occupied_voxel_mask_at(points: &[Vec3], voxel_size: f64, origin: Vec3) -> Result<VoxelMask> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidArgument(format!("voxel size must be positive, got {voxel_size}")));
    }
    let mut mask = VoxelMask { voxel_size, origin, voxels: BTreeSet::new() };
    let hit: BTreeSet<[i64; 3]> = points.iter().map(|p| mask.voxel_of(p)).collect();
    for v in hit {
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    mask.voxels.insert([v[0] + dx, v[1] + dy, v[2] + dz]);
                }
            }
        }
    }
    Ok(mask)
}

/// [`occupied_voxel_mask_at`] with the lattice anchored at the world origin.
pub fn occupied_voxel_mask(points: &[Vec3], voxel_size: f64) -> Result<VoxelMask> {
    occupied_voxel_mask_at(points, voxel_size, Vec3::zeros())
}

fn near_integer(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() < 1e-6 * x.abs().max(1.0)).then_some(r as i64)
}

/// Marching cubes restricted to grid cells inside occupied voxels. The mask
/// voxels must be whole multiples of the grid cell and share its lattice.
pub fn masked_extract_mesh(
    field: &dyn ScalarField,
    bbox: &BoundingBox,
    resolution: usize,
    mask: &VoxelMask,
) -> Result<TriangleMesh> {
    let grid = SampleGrid::over(bbox, resolution)?;
    let ratio = near_integer(mask.voxel_size / grid.cell).filter(|&m| m >= 1);
    let shift = (grid.origin - mask.origin) / grid.cell;
    let aligned = ratio.is_some() && shift.iter().all(|s| near_integer(*s).is_some());
    if !aligned {
        return Err(Error::InvalidArgument(format!(
            "mask voxels ({} m at {:?}) are not aligned with the {} m grid at {:?}",
            mask.voxel_size, mask.origin, grid.cell, grid.origin
        )));
    }
    if mask.is_empty() {
        return Ok(TriangleMesh { normals: Some(Vec::new()), ..Default::default() });
    }
    let values = grid.sample(field);
    let mut mesh = march(&grid, &values, |[i, j, k]| {
        let center = grid.point(i, j, k) + Vec3::repeat(0.5 * grid.cell);
        mask.contains(&mask.voxel_of(&center))
    });
    mesh.compute_normals(field, 0.25 * grid.cell);
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(p: &Vec3) -> f64 {
        p.norm() - 0.5
    }

    #[test]
    fn constant_fields_give_empty_meshes() {
        let b = BoundingBox::cube(1.0);
        assert!(extract_mesh(&|_: &Vec3| 1.0, &b, 8).unwrap().is_empty());
        assert!(extract_mesh(&|_: &Vec3| -1.0, &b, 8).unwrap().is_empty());
        assert!(extract_mesh(&sphere, &b, 1).is_err());
    }

    #[test]
    fn grid_covers_non_cubic_bbox() {
        let b = BoundingBox::new(Vec3::zeros(), Vec3::new(2.0, 1.0, 0.5)).unwrap();
        let g = SampleGrid::over(&b, 5).unwrap();
        assert_eq!(g.dims, [5, 3, 2]);
        assert_eq!(g.cell, 0.5);
    }

    #[test]
    fn triangles_face_outward() {
        let m = extract_mesh(&sphere, &BoundingBox::cube(1.0), 24).unwrap();
        for t in 0..m.triangles.len() {
            let [a, b, c] = m.triangle(t);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&(a + b + c)) > 0.0);
        }
        let normals = m.normals.as_ref().unwrap();
        assert!(m.vertices.iter().zip(normals).all(|(v, n)| (v.normalize() - n).norm() < 0.05));
    }

    #[test]
    fn single_point_mask() {
        let m = occupied_voxel_mask(&[Vec3::new(0.2, 0.3, 0.9)], 1.0).unwrap();
        assert_eq!(m.len(), 27);
        assert!(m.contains(&[0, 0, 0]) && m.contains(&[-1, 1, -1]) && !m.contains(&[2, 0, 0]));
        assert!(occupied_voxel_mask(&[], 1.0).unwrap().is_empty());
        assert!(occupied_voxel_mask(&[], 0.0).is_err());
    }

    #[test]
    fn full_and_empty_masks() {
        let b = BoundingBox::cube(1.0);
        let grid = SampleGrid::over(&b, 20).unwrap();
        let full = extract_mesh(&sphere, &b, 20).unwrap();
        let centers: Vec<Vec3> = (0..19)
            .flat_map(|k| (0..19).flat_map(move |j| (0..19).map(move |i| (i, j, k))))
            .map(|(i, j, k)| grid.point(i, j, k) + Vec3::repeat(0.5 * grid.cell))
            .collect();
        let all = occupied_voxel_mask_at(&centers, grid.cell, grid.origin).unwrap();
        assert_eq!(masked_extract_mesh(&sphere, &b, 20, &all).unwrap(), full);
        let none = occupied_voxel_mask_at(&[], grid.cell, grid.origin).unwrap();
        assert!(masked_extract_mesh(&sphere, &b, 20, &none).unwrap().is_empty());
        let skew = occupied_voxel_mask_at(&centers, 1.5 * grid.cell, grid.origin).unwrap();
        assert!(masked_extract_mesh(&sphere, &b, 20, &skew).is_err());
        let shifted = occupied_voxel_mask_at(&centers, grid.cell, grid.origin + Vec3::repeat(0.3 * grid.cell)).unwrap();
        assert!(masked_extract_mesh(&sphere, &b, 20, &shifted).is_err());
    }
}
