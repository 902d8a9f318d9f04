//! The sinusoidal MLP signed distance field, its loss, and the optimizer.

mod adam;
mod loss;
mod network;

pub use adam::AdamState;
pub use loss::{
    loss, loss_and_param_grads, off_surface_penalty, LossBatchSpec, LossTerms, LossWeights, OffSurfaceMode,
    OffSurfaceTerm, SurfaceTerm, EXP_CLAMP,
};
pub use network::{parameter_count, FieldEval, LayerDims, NetworkParams};

/// Frequency scale inside the sine activations.
pub const DEFAULT_OMEGA0: f64 = 30.0;

/// Sharpness of the off-surface penalties.
pub const DEFAULT_ALPHA: f64 = 100.0;
