use rayon::prelude::*;

use super::marching::TriangleMesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Mean and population standard deviation of a set of distances (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        ErrorStats { mean, std: var.sqrt(), count: values.len() }
    }
}

/// Closest point to `p` on triangle `abc` (region tests on the barycentric
/// coordinates, handles every vertex/edge/face case).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

/// Uniform bucket grid over item bounding boxes for nearest-item queries.
struct BucketGrid {
    lo: Vec3,
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl BucketGrid {
    fn build(boxes: &[(Vec3, Vec3)]) -> Self {
        let lo = boxes.iter().fold(Vec3::repeat(f64::INFINITY), |m, b| m.inf(&b.0));
        let hi = boxes.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |m, b| m.sup(&b.1));
        let ext = (hi - lo).map(|e| e.max(1e-9));
        let target = (boxes.len() as f64).cbrt().clamp(1.0, 128.0);
        let cell = ext.max() / target;
        let dims = [0, 1, 2].map(|k| ((ext[k] / cell).ceil() as usize).clamp(1, 256));
        let mut grid = BucketGrid { lo, cell, dims, buckets: vec![Vec::new(); dims[0] * dims[1] * dims[2]] };
        for (id, (bmin, bmax)) in boxes.iter().enumerate() {
            let a = grid.cell_of(bmin);
            let b = grid.cell_of(bmax);
            for k in a[2]..=b[2] {
                for j in a[1]..=b[1] {
                    for i in a[0]..=b[0] {
                        let idx = grid.index([i, j, k]);
                        grid.buckets[idx].push(id as u32);
                    }
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| (((p[k] - self.lo[k]) / self.cell).floor().max(0.0) as usize).min(self.dims[k] - 1))
    }

    fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Smallest `dist(item)` over all items; visits shells of cells around
    /// the query until no unvisited cell can hold anything closer.
    fn nearest(&self, p: &Vec3, dist: impl Fn(u32) -> f64) -> f64 {
        let c = self.cell_of(p);
        let mut best = f64::INFINITY;
        let max_r = *self.dims.iter().max().unwrap();
        for r in 0..=max_r {
            let lo = [0, 1, 2].map(|k| c[k].saturating_sub(r));
            let hi = [0, 1, 2].map(|k| (c[k] + r).min(self.dims[k] - 1));
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        let on_shell = [i, j, k].iter().zip(&c).any(|(a, b)| a.abs_diff(*b) == r);
                        if !on_shell {
                            continue;
                        }
                        for &id in &self.buckets[self.index([i, j, k])] {
                            best = best.min(dist(id));
                        }
                    }
                }
            }
            // Anything not visited lies beyond one of the block faces that is
            // not also a grid face.
            let mut bound = f64::INFINITY;
            for a in 0..3 {
                if lo[a] > 0 {
                    bound = bound.min((p[a] - (self.lo[a] + lo[a] as f64 * self.cell)).max(0.0));
                }
                if hi[a] + 1 < self.dims[a] {
                    bound = bound.min((self.lo[a] + (hi[a] + 1) as f64 * self.cell - p[a]).max(0.0));
                }
            }
            if best <= bound {
                break;
            }
        }
        best
    }
}

/// Distance from every reference point to the nearest mesh triangle
/// (cloud → mesh).
pub fn mesh_to_cloud_error(mesh: &TriangleMesh, reference: &[Vec3]) -> Result<ErrorStats> {
    if mesh.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument("mesh_to_cloud_error needs a non-empty mesh and reference".into()));
    }
    let boxes: Vec<(Vec3, Vec3)> = (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.triangle(t);
            (a.inf(&b).inf(&c), a.sup(&b).sup(&c))
        })
        .collect();
    let grid = BucketGrid::build(&boxes);
    let d: Vec<f64> = reference
        .par_iter()
        .map(|p| {
            grid.nearest(p, |t| {
                let [a, b, c] = mesh.triangle(t as usize);
                point_triangle_distance(p, &a, &b, &c)
            })
        })
        .collect();
    Ok(ErrorStats::of(&d))
}

/// Distance from every mesh vertex to the nearest reference point
/// (mesh → cloud): penalizes surface the reference does not contain.
pub fn mesh_accuracy(mesh: &TriangleMesh, reference: &[Vec3]) -> Result<ErrorStats> {
    if mesh.vertices.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument("mesh_accuracy needs a non-empty mesh and reference".into()));
    }
    let boxes: Vec<(Vec3, Vec3)> = reference.iter().map(|p| (*p, *p)).collect();
    let grid = BucketGrid::build(&boxes);
    let d: Vec<f64> = mesh
        .vertices
        .par_iter()
        .map(|v| grid.nearest(v, |i| (v - reference[i as usize]).norm()))
        .collect();
    Ok(ErrorStats::of(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triangle_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        let d = |p: [f64; 3]| point_triangle_distance(&Vec3::from(p), &a, &b, &c);
        assert_eq!(d([0.2, 0.2, 0.5]), 0.5);
        assert_eq!(d([-1.0, -1.0, 0.0]), 2f64.sqrt());
        assert_eq!(d([0.5, -2.0, 0.0]), 2.0);
        assert!((d([1.0, 1.0, 0.0]) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(d([3.0, 0.0, 4.0]), (4.0f64 + 16.0).sqrt());
    }

    #[test]
    fn grid_query_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = || Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut mesh = TriangleMesh::default();
        for t in 0..200u32 {
            let a = r();
            mesh.vertices.extend([a, a + r() * 0.1, a + r() * 0.1]);
            mesh.triangles.push([3 * t, 3 * t + 1, 3 * t + 2]);
        }
        let queries: Vec<Vec3> = (0..300).map(|_| r() * 2.0).collect();
        let stats = mesh_to_cloud_error(&mesh, &queries).unwrap();
        let brute: Vec<f64> = queries
            .iter()
            .map(|p| {
                (0..mesh.triangles.len())
                    .map(|t| {
                        let [a, b, c] = mesh.triangle(t);
                        point_triangle_distance(p, &a, &b, &c)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        assert!((stats.mean - ErrorStats::of(&brute).mean).abs() < 1e-12);

        let acc = mesh_accuracy(&mesh, &queries).unwrap();
        let brute: Vec<f64> = mesh
            .vertices
            .iter()
            .map(|v| queries.iter().map(|q| (v - q).norm()).fold(f64::INFINITY, f64::min))
            .collect();
        assert!((acc.mean - ErrorStats::of(&brute).mean).abs() < 1e-12);
    }

    #[test]
    fn vertices_as_reference_give_zero() {
        let mesh = TriangleMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 0.5)],
            triangles: vec![[0, 1, 2], [1, 3, 2]],
            normals: None,
        };
        let s = mesh_to_cloud_error(&mesh, &mesh.vertices).unwrap();
        assert_eq!((s.mean, s.std), (0.0, 0.0));
        assert!(mesh_to_cloud_error(&TriangleMesh::default(), &mesh.vertices).is_err());
        assert!(mesh_to_cloud_error(&mesh, &[]).is_err());
    }
}
