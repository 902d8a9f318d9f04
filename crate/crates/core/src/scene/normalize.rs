use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Half-extent of the longest bbox axis after normalization; the margin up
/// to 1 leaves room for off-surface samples beyond the scene.
pub const NORMALIZED_EXTENT: f64 = 0.9;

/// Axis-aligned box in world meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoundingBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let b = BoundingBox { min, max };
        if min.iter().chain(max.iter()).any(|v| !v.is_finite()) || (0..3).any(|k| max[k] <= min[k]) {
            return Err(Error::InvalidArgument(format!("degenerate bounding box {min:?}..{max:?}")));
        }
        Ok(b)
    }

    pub fn cube(half: f64) -> Self {
        BoundingBox { min: Vec3::repeat(-half), max: Vec3::repeat(half) }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) / 2.0
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Tightest box around a point set, padded by `pad` on every side.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a Vec3>, pad: f64) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut lo, mut hi) = (*first, *first);
        for p in it {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        BoundingBox::new(lo - Vec3::repeat(pad), hi + Vec3::repeat(pad)).ok()
    }
}

/// Isotropic world → network map: `x_n = scale · (x − center)`.
///
/// A single scale factor keeps distances metric, so an SDF value in network
/// units converts to meters by dividing by `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub center: Vec3,
    /// Network units per meter.
    pub scale: f64,
}

impl NormalizationTransform {
    /// Maps the longest bbox axis onto [−0.9, 0.9].
    pub fn fit(bbox: &BoundingBox) -> Result<Self> {
        let b = BoundingBox::new(bbox.min, bbox.max)?;
        let half = b.extent().max() / 2.0;
        Ok(NormalizationTransform { center: b.center(), scale: NORMALIZED_EXTENT / half })
    }

    pub fn identity() -> Self {
        NormalizationTransform { center: Vec3::zeros(), scale: 1.0 }
    }

    /// Translation part of the affine map (`x_n = scale·x + offset`).
    pub fn offset(&self) -> Vec3 {
        -self.center * self.scale
    }

    pub fn apply(&self, world: &Vec3) -> Vec3 {
        (world - self.center) * self.scale
    }

    pub fn invert(&self, normalized: &Vec3) -> Vec3 {
        normalized / self.scale + self.center
    }

    pub fn to_meters(&self, normalized_distance: f64) -> f64 {
        normalized_distance / self.scale
    }

    pub fn to_normalized(&self, meters: f64) -> f64 {
        meters * self.scale
    }

    /// World bbox corresponding to the normalized cube [−1, 1]³.
    pub fn domain(&self) -> BoundingBox {
        BoundingBox { min: self.invert(&Vec3::repeat(-1.0)), max: self.invert(&Vec3::repeat(1.0)) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fit_examples() {
        let t = NormalizationTransform::fit(&BoundingBox::cube(1.0)).unwrap();
        assert_eq!(t.scale, 0.9);
        assert_eq!(t.offset(), Vec3::zeros());
        let b = BoundingBox::new(Vec3::zeros(), Vec3::new(10.0, 5.0, 5.0)).unwrap();
        let t = NormalizationTransform::fit(&b).unwrap();
        assert!((t.scale - 0.18).abs() < 1e-15);
    }

    #[test]
    fn degenerate_rejected() {
        let b = BoundingBox { min: Vec3::zeros(), max: Vec3::new(1.0, 0.0, 1.0) };
        assert!(NormalizationTransform::fit(&b).is_err());
    }

    proptest! {
        #[test]
        fn invert_apply_roundtrip(x in -50.0..50.0f64, y in -50.0..50.0f64, z in -50.0..50.0f64,
                                  lo in -10.0..0.0f64, span in 0.1..20.0f64) {
            let b = BoundingBox::new(Vec3::repeat(lo), Vec3::new(lo + span, lo + span / 2.0, lo + span / 3.0)).unwrap();
            let t = NormalizationTransform::fit(&b).unwrap();
            let p = Vec3::new(x, y, z);
            prop_assert!((t.invert(&t.apply(&p)) - p).norm() < 1e-12 * (1.0 + p.norm()) * 10.0);
        }
    }
}
