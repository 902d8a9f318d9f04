use std::fmt::Write as _;

use super::marching::TriangleMesh;
use super::metrics::HeatmapMatrix;
use super::slice::SdfSlice;

/// ASCII PLY with vertex positions, optional normals and triangle faces.
pub fn mesh_to_ply(mesh: &TriangleMesh) -> String {
    let normals = mesh.normals.as_ref().filter(|n| n.len() == mesh.vertices.len());
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", mesh.vertices.len()).unwrap();
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if normals.is_some() {
        s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    writeln!(s, "element face {}", mesh.triangles.len()).unwrap();
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, v) in mesh.vertices.iter().enumerate() {
        write!(s, "{} {} {}", v.x as f32, v.y as f32, v.z as f32).unwrap();
        if let Some(n) = normals {
            write!(s, " {} {} {}", n[i].x as f32, n[i].y as f32, n[i].z as f32).unwrap();
        }
        s.push('\n');
    }
    for t in &mesh.triangles {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

/// Long-format heatmap: one row per (frame, checkpoint) pair.
pub fn heatmap_csv(h: &HeatmapMatrix) -> String {
    let mut s = String::from("frame,checkpoint,mean_abs_sdf_m,std_abs_sdf_m\n");
    for (m, (row, srow)) in h.mean.iter().zip(&h.std).enumerate() {
        for (n, (mu, sd)) in row.iter().zip(srow).enumerate() {
            writeln!(s, "{m},{n},{mu:e},{sd:e}").unwrap();
        }
    }
    s
}

pub fn curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("t,fraction_below_threshold\n");
    for (t, v) in curve.iter().enumerate() {
        writeln!(s, "{t},{v}").unwrap();
    }
    s
}

/// Slice raster as a binary 16-bit PGM. Values map linearly from
/// `[-range, range]` to `[0, 65535]` (zero → 32768), clamped outside; row 0
/// is the smallest `v`.
pub fn slice_to_pgm(slice: &SdfSlice, range: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", slice.width, slice.height).into_bytes();
    for v in &slice.values {
        let x = ((v / range).clamp(-1.0, 1.0) + 1.0) * 0.5 * 65535.0;
        out.extend_from_slice(&(x.round() as u16).to_be_bytes());
    }
    out
}

pub fn slice_csv(slice: &SdfSlice) -> String {
    let (a, b) = slice.axis.plane_axes();
    let names = ["x", "y", "z"];
    let mut s = format!("row,col,{},{},sdf_m\n", names[a], names[b]);
    for r in 0..slice.height {
        for c in 0..slice.width {
            let p = slice.point(r, c);
            writeln!(s, "{r},{c},{},{},{:e}", p[a], p[b], slice.values[r * slice.width + c]).unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SliceAxis;
    use crate::geometry::Vec3;

    #[test]
    fn ply_header_counts() {
        let mesh = TriangleMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            triangles: vec![[0, 1, 2]],
            normals: Some(vec![Vec3::z(); 3]),
        };
        let ply = mesh_to_ply(&mesh);
        assert!(ply.contains("element vertex 3\n") && ply.contains("element face 1\n"));
        assert!(ply.contains("property float nx"));
        assert!(ply.ends_with("3 0 1 2\n"));
    }

    #[test]
    fn pgm_mapping() {
        let slice = SdfSlice {
            axis: SliceAxis::Z,
            offset: 0.0,
            width: 3,
            height: 1,
            u_min: 0.0,
            v_min: 0.0,
            texel: 1.0,
            values: vec![-2.0, 0.0, 0.5],
        };
        let pgm = slice_to_pgm(&slice, 1.0);
        let header = b"P5\n3 1\n65535\n";
        assert_eq!(&pgm[..header.len()], header);
        let px: Vec<u16> = pgm[header.len()..].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        assert_eq!(px, vec![0, 32768, 49151]);
    }
}
