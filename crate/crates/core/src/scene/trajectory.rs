use nalgebra::{Quaternion, Rotation3, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

/// Parses one `timestamp tx ty tz qx qy qz qw` line (TUM convention).
///
/// The quaternion is renormalized when its norm is within 1e-3 of one and
/// rejected otherwise. `line_no` is only used for error reporting.
pub fn parse_trajectory(line: &str, line_no: usize) -> Result<(f64, Pose)> {
    let err = |message: String| Error::Parse { line: line_no, message };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(err(format!("expected 8 fields, found {}", fields.len())));
    }
    let mut v = [0.0; 8];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f.parse::<f64>().map_err(|e| err(format!("bad number {f:?}: {e}")))?;
        if !slot.is_finite() {
            return Err(err(format!("non-finite value {f:?}")));
        }
    }
    let [timestamp, tx, ty, tz, qx, qy, qz, qw] = v;
    let q = Quaternion::new(qw, qx, qy, qz);
    let norm = q.norm();
    if (norm - 1.0).abs() >= 1e-3 {
        return Err(err(format!("quaternion norm {norm} is not close to 1")));
    }
    let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
    let pose = Pose::new(rotation, Vec3::new(tx, ty, tz)).map_err(|e| err(e.to_string()))?;
    Ok((timestamp, pose))
}

/// Inverse of [`parse_trajectory`].
pub fn format_trajectory(timestamp: f64, pose: &Pose) -> String {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(pose.rotation));
    let t = pose.translation;
    format!(
        "{timestamp:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
        t.x, t.y, t.z, q.i, q.j, q.k, q.w
    )
}
