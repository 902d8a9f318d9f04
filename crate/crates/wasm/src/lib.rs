//! Browser bindings: render a depth frame, slice the oracle SDF and show how
//! the frustum rule labels a slice plane against one frame.

use cnm_core::eval::{export_sdf_slice, SliceAxis};
use cnm_core::geometry::{classify_sign, project, DepthFrame, Projection, SignLabel, Vec3};
use cnm_core::scene::{camera_path, render_synthetic_depth, CameraPath, SyntheticScene};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A parsed scene with its camera trajectory.
#[wasm_bindgen]
pub struct Demo {
    scene: SyntheticScene,
    frames: usize,
    path: CameraPath,
}

/// Row-major image; row 0 is the top of the picture.
#[wasm_bindgen(getter_with_clone)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(scene_text: &str, path: &str, frames: usize) -> Result<Demo, JsError> {
        let scene = SyntheticScene::parse(scene_text).map_err(js_err)?;
        let path = path.parse().map_err(js_err)?;
        if frames == 0 {
            return Err(JsError::new("need at least one frame"));
        }
        Ok(Demo { scene, frames, path })
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    /// Depth in meters, 0 where the ray missed.
    pub fn render_depth(&self, i: usize) -> Result<Image, JsError> {
        let frame = self.frame(i)?;
        let data = frame.depth.iter().map(|&d| d as f32).collect();
        Ok(Image { width: frame.width(), height: frame.height(), data })
    }

    /// Oracle signed distance on an axis-aligned plane through the scene bounds.
    pub fn sdf_slice(&self, axis: &str, offset: f64, res: usize) -> Result<Image, JsError> {
        let (scene, axis) = (&self.scene, axis.parse::<SliceAxis>().map_err(js_err)?);
        let field = |p: &Vec3| scene.oracle_sdf(p);
        let bbox = scene.bounds().map_err(js_err)?;
        let s = export_sdf_slice(&field, &bbox, axis, offset, res).map_err(js_err)?;
        Ok(flip_rows(s.width, s.height, s.values.iter().map(|&v| v as f32).collect()))
    }

    /// Sign labels on the slice plane as frame `i` would assign them:
    /// 2 = positive from observed free space, 1 = positive and -1 = negative
    /// taken from the previous field, which is the oracle (or its negated
    /// magnitude when `corrupt` is set, i.e. wrongly solid everywhere).
    pub fn sign_labels(&self, i: usize, axis: &str, offset: f64, res: usize, corrupt: bool) -> Result<Image, JsError> {
        let frame = self.frame(i)?;
        let axis = axis.parse::<SliceAxis>().map_err(js_err)?;
        let bbox = self.scene.bounds().map_err(js_err)?;
        let zero = |_: &Vec3| 0.0;
        let grid = export_sdf_slice(&zero, &bbox, axis, offset, res).map_err(js_err)?;
        let band = 0.01;
        let mut data = Vec::with_capacity(grid.width * grid.height);
        for row in 0..grid.height {
            for col in 0..grid.width {
                let p = grid.point(row, col);
                let sdf = self.scene.oracle_sdf(&p);
                let prev = if corrupt { -sdf.abs().max(1e-3) } else { sdf };
                let free = matches!(project(&p, &frame),
                    Projection::Inside { z, surface_depth, .. } if z < surface_depth - band);
                data.push(match classify_sign(&p, &frame, prev, band) {
                    SignLabel::Positive if free => 2.0,
                    SignLabel::Positive => 1.0,
                    SignLabel::Negative => -1.0,
                });
            }
        }
        Ok(flip_rows(grid.width, grid.height, data))
    }

    /// Camera center of frame `i` as [x, y, z].
    pub fn camera_center(&self, i: usize) -> Result<Vec<f64>, JsError> {
        let c = self.frame(i)?.camera_center();
        Ok(vec![c.x, c.y, c.z])
    }
}

impl Demo {
    fn frame(&self, i: usize) -> Result<DepthFrame, JsError> {
        if i >= self.frames {
            return Err(JsError::new("frame index out of range"));
        }
        let bbox = self.scene.bounds().map_err(js_err)?;
        let poses = camera_path(self.path, &bbox, self.frames).map_err(js_err)?;
        let k = self.scene.camera.intrinsics().map_err(js_err)?;
        render_synthetic_depth(&self.scene, &k, &poses[i], i, i as f64).map_err(js_err)
    }
}

// slices store the smallest v first; images want it at the bottom
fn flip_rows(width: usize, height: usize, data: Vec<f32>) -> Image {
    let flipped = data.chunks(width).rev().flatten().copied().collect();
    Image { width, height, data: flipped }
}
