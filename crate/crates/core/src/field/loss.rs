//! The per-batch SDF objective and its exact parameter gradient.
//!
//! Every term depends on the field value and/or its spatial gradient, so the
//! parameter gradient is obtained by a reverse sweep over the tangent-augmented
//! forward pass (see [`Trace::backward`]).

use rayon::prelude::*;

use super::network::{NetworkParams, Trace};
use crate::error::{Error, Result};
use crate::geometry::SignLabel;

/// Exponent arguments of ψ and ψ_s are clamped to this magnitude.
pub const EXP_CLAMP: f64 = 40.0;

const CHUNK: usize = 32;

/// An oriented surface observation and which terms apply to it.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTerm {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub apply_data: bool,
    pub apply_normal: bool,
    pub apply_eikonal: bool,
}

impl SurfaceTerm {
    pub fn new(point: Vec<f64>, normal: Vec<f64>) -> Self {
        SurfaceTerm { point, normal, apply_data: true, apply_normal: true, apply_eikonal: true }
    }
}

/// How an off-surface sample is constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffSurfaceMode {
    /// No previous network: ψ = exp(−α|f|).
    Unlabeled,
    /// Sign regularizer ψ_s with the given label.
    Labeled(SignLabel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffSurfaceTerm {
    pub point: Vec<f64>,
    pub mode: OffSurfaceMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub data: f64,
    pub normal: f64,
    pub eikonal: f64,
    pub off_surface: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { data: 3000.0, normal: 100.0, eikonal: 50.0, off_surface: 100.0 }
    }
}

/// One optimization batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatchSpec {
    pub surface: Vec<SurfaceTerm>,
    pub off_surface: Vec<OffSurfaceTerm>,
    pub weights: LossWeights,
    /// Sharpness of ψ and ψ_s.
    pub alpha: f64,
    /// Apply the Eikonal term at off-surface samples too.
    pub eikonal_off_surface: bool,
}

impl LossBatchSpec {
    pub fn new(weights: LossWeights, alpha: f64) -> Self {
        LossBatchSpec {
            surface: Vec::new(),
            off_surface: Vec::new(),
            weights,
            alpha,
            eikonal_off_surface: true,
        }
    }

    pub fn len(&self) -> usize {
        self.surface.len() + self.off_surface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unweighted per-term means and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub data: f64,
    pub normal: f64,
    pub eikonal: f64,
    pub off_surface: f64,
    pub total: f64,
}

/// ψ (unlabeled) or ψ_s (labeled) and its derivative with respect to f.
pub fn off_surface_penalty(value: f64, mode: OffSurfaceMode, alpha: f64) -> (f64, f64) {
    // exponent = slope·f, with slope possibly depending on sign(f)
    let slope = match mode {
        OffSurfaceMode::Unlabeled => -alpha * sign(value),
        OffSurfaceMode::Labeled(SignLabel::Positive) => -alpha,
        OffSurfaceMode::Labeled(SignLabel::Negative) => alpha,
    };
    let arg = slope * value;
    let clamped = arg.clamp(-EXP_CLAMP, EXP_CLAMP);
    let psi = clamped.exp();
    let dpsi = if arg == clamped { slope * psi } else { 0.0 };
    (psi, dpsi)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct Counts {
    data: usize,
    normal: usize,
    eikonal: usize,
    off: usize,
}

impl Counts {
    fn of(batch: &LossBatchSpec) -> Counts {
        let data = batch.surface.iter().filter(|s| s.apply_data).count();
        let normal = batch.surface.iter().filter(|s| s.apply_normal).count();
        let mut eikonal = batch.surface.iter().filter(|s| s.apply_eikonal).count();
        if batch.eikonal_off_surface {
            eikonal += batch.off_surface.len();
        }
        Counts { data, normal, eikonal, off: batch.off_surface.len() }
    }
}

fn inv(n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        1.0 / n as f64
    }
}

enum Sample<'a> {
    Surface(&'a SurfaceTerm),
    Off(&'a OffSurfaceTerm),
}

#[derive(Default, Clone, Copy)]
struct Partial {
    data: f64,
    normal: f64,
    eikonal: f64,
    off: f64,
}

fn check(term: &'static str, v: f64, index: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { term, detail: format!("value {v} at sample {index}") })
    }
}

/// Per-sample contribution: adds the weighted partials into `grad` (when
/// given) and returns the unweighted term sums.
fn accumulate(
    params: &NetworkParams,
    batch: &LossBatchSpec,
    counts: &Counts,
    index: usize,
    sample: &Sample<'_>,
    grad: Option<&mut [f64]>,
) -> Result<Partial> {
    let w = &batch.weights;
    let point = match sample {
        Sample::Surface(s) => &s.point,
        Sample::Off(o) => &o.point,
    };
    let trace = Trace::record(params, point);
    let f = trace.value;
    let g = &trace.gradient;
    check("field value", f, index)?;
    for &gk in g {
        check("spatial gradient", gk, index)?;
    }

    let d = g.len();
    let mut part = Partial::default();
    let mut f_bar = 0.0;
    let mut g_bar = vec![0.0; d];
    let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();

    let eikonal = match sample {
        Sample::Surface(s) => {
            if s.apply_data {
                part.data = f.abs();
                f_bar += w.data * inv(counts.data) * sign(f);
            }
            if s.apply_normal {
                let scale = w.normal * inv(counts.normal);
                for k in 0..d {
                    let diff = g[k] - s.normal[k];
                    part.normal += diff.abs();
                    g_bar[k] += scale * sign(diff);
                }
            }
            s.apply_eikonal
        }
        Sample::Off(o) => {
            let (psi, dpsi) = off_surface_penalty(f, o.mode, batch.alpha);
            check("off-surface", psi, index)?;
            part.off = psi;
            f_bar += w.off_surface * inv(counts.off) * dpsi;
            batch.eikonal_off_surface
        }
    };
    if eikonal {
        part.eikonal = (g_norm - 1.0).abs();
        if g_norm > 0.0 {
            let scale = w.eikonal * inv(counts.eikonal) * sign(g_norm - 1.0) / g_norm;
            for k in 0..d {
                g_bar[k] += scale * g[k];
            }
        }
    }

    if let Some(grad) = grad {
        trace.backward(params, f_bar, &g_bar, grad);
    }
    Ok(part)
}

fn validate(params: &NetworkParams, batch: &LossBatchSpec) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty loss batch".into()));
    }
    let w = &batch.weights;
    if [w.data, w.normal, w.eikonal, w.off_surface].iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
    }
    let d = params.dims().input_dim();
    for s in &batch.surface {
        if s.point.len() != d || s.normal.len() != d {
            return Err(Error::ShapeMismatch { expected: d, actual: s.point.len().min(s.normal.len()) });
        }
        if s.point.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(s.point.clone()));
        }
    }
    for o in &batch.off_surface {
        if o.point.len() != d {
            return Err(Error::ShapeMismatch { expected: d, actual: o.point.len() });
        }
        if o.point.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(o.point.clone()));
        }
    }
    Ok(())
}

fn finish(batch: &LossBatchSpec, counts: &Counts, sums: Partial) -> Result<LossTerms> {
    let w = &batch.weights;
    let data = sums.data * inv(counts.data);
    let normal = sums.normal * inv(counts.normal);
    let eikonal = sums.eikonal * inv(counts.eikonal);
    let off_surface = sums.off * inv(counts.off);
    let total = w.data * data + w.normal * normal + w.eikonal * eikonal + w.off_surface * off_surface;
    check("total", total, 0)?;
    Ok(LossTerms { data, normal, eikonal, off_surface, total })
}

fn samples(batch: &LossBatchSpec) -> Vec<Sample<'_>> {
    batch
        .surface
        .iter()
        .map(Sample::Surface)
        .chain(batch.off_surface.iter().map(Sample::Off))
        .collect()
}

/// Loss value only.
pub fn loss(params: &NetworkParams, batch: &LossBatchSpec) -> Result<LossTerms> {
    validate(params, batch)?;
    let counts = Counts::of(batch);
    let mut sums = Partial::default();
    for (i, s) in samples(batch).iter().enumerate() {
        let p = accumulate(params, batch, &counts, i, s, None)?;
        add(&mut sums, &p);
    }
    finish(batch, &counts, sums)
}

fn add(acc: &mut Partial, p: &Partial) {
    acc.data += p.data;
    acc.normal += p.normal;
    acc.eikonal += p.eikonal;
    acc.off += p.off;
}

/// Per-term losses and the exact gradient of the weighted total with respect
/// to every network parameter (including second-order paths through ∇ₓf).
///
/// Samples are processed in fixed-size chunks that may run in parallel; the
/// chunk results are reduced in index order, so the output is bit-identical
/// regardless of thread count.
pub fn loss_and_param_grads(params: &NetworkParams, batch: &LossBatchSpec) -> Result<(LossTerms, Vec<f64>)> {
    validate(params, batch)?;
    let counts = Counts::of(batch);
    let all = samples(batch);
    let n_params = params.len();

    let chunks: Vec<Result<(Partial, Vec<f64>)>> = all
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = vec![0.0; n_params];
            let mut sums = Partial::default();
            for (i, s) in chunk.iter().enumerate() {
                let p = accumulate(params, batch, &counts, c * CHUNK + i, s, Some(&mut grad))?;
                add(&mut sums, &p);
            }
            Ok((sums, grad))
        })
        .collect();

    let mut sums = Partial::default();
    let mut grad = vec![0.0; n_params];
    for chunk in chunks {
        let (p, g) = chunk?;
        add(&mut sums, &p);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence { term: "parameter gradient", detail: format!("entry {i}") });
    }
    Ok((finish(batch, &counts, sums)?, grad))
}
