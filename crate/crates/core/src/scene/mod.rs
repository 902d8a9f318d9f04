//! Data ingestion and synthesis: TUM-style sequences, depth PNGs, analytic
//! scenes with a sphere-traced virtual depth camera, and the world-to-network
//! coordinate normalization.

mod depth_png;
mod manifest;
mod normalize;
mod paths;
mod synthetic;
mod trajectory;

pub use depth_png::{load_depth_png, read_depth_png_raw, write_depth_png, write_depth_png_meters, DEFAULT_DEPTH_SCALE};
pub use manifest::{SequenceEntry, SequenceManifest};
pub use normalize::{BoundingBox, NormalizationTransform, NORMALIZED_EXTENT};
pub use paths::{box_room, camera_path, CameraPath, WORLD_UP};
pub use synthetic::{render_synthetic_depth, CameraSpec, Primitive, SyntheticScene, MAX_MARCH_STEPS, MAX_RANGE, MARCH_TOLERANCE};
pub use trajectory::{format_trajectory, parse_trajectory};
