use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Layer widths of a sinusoidal MLP: input, hidden..., output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDims(Vec<usize>);

impl LayerDims {
    /// Validates the shape: scalar output, at least one hidden layer, no zero widths.
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.len() < 3 {
            return Err(Error::InvalidDims { dims, reason: "need at least one hidden layer" });
        }
        if dims.iter().any(|&w| w == 0) {
            return Err(Error::InvalidDims { dims, reason: "zero-width layer" });
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::InvalidDims { dims, reason: "output width must be 1" });
        }
        if dims[0] > 3 {
            return Err(Error::InvalidDims { dims, reason: "input dimension must be at most 3" });
        }
        Ok(LayerDims(dims))
    }

    /// The 5-layer, 256-unit configuration used for room-scale scenes.
    pub fn paper_default() -> Self {
        LayerDims(vec![3, 256, 256, 256, 256, 1])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn input_dim(&self) -> usize {
        self.0[0]
    }

    /// Number of weight layers (one less than the number of widths).
    pub fn num_layers(&self) -> usize {
        self.0.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.0)
    }
}

/// Σ_l (dims[l]·dims[l+1] + dims[l+1]) for any width list.
pub fn parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Weights and biases of the sinusoidal MLP, stored flat.
///
/// Layer `l` maps `dims[l]` inputs to `dims[l+1]` outputs. Its weight matrix
/// is row-major (`out × in`) and is followed immediately by its bias vector.
/// Every layer but the last applies `sin(omega0 · (W h + b))`; the last is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    dims: LayerDims,
    omega0: f64,
    values: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        acc += w[0] * w[1] + w[1];
        offsets.push(acc);
    }
    offsets
}

impl NetworkParams {
    /// Wraps an existing flat parameter vector.
    pub fn from_flat(dims: LayerDims, omega0: f64, values: Vec<f64>) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega0 must be positive, got {omega0}")));
        }
        let expected = dims.parameter_count();
        if values.len() != expected {
            return Err(Error::ShapeMismatch { expected, actual: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        let offsets = layer_offsets(dims.as_slice());
        Ok(NetworkParams { dims, omega0, values, offsets })
    }

    /// All weights and biases zero.
    pub fn zeros(dims: LayerDims, omega0: f64) -> Result<Self> {
        let n = dims.parameter_count();
        Self::from_flat(dims, omega0, vec![0.0; n])
    }

    /// SIREN initialization: first layer uniform in ±1/n_in, deeper layers
    /// uniform in ±√(6/n_in)/ω0. Biases use the same bound as their layer.
    pub fn init_siren(dims: LayerDims, omega0: f64, seed: u64) -> Result<Self> {
        let d = dims.input_dim();
        if d != 2 && d != 3 {
            return Err(Error::InvalidDims {
                dims: dims.as_slice().to_vec(),
                reason: "input dimension must be 2 or 3",
            });
        }
        let mut params = Self::zeros(dims, omega0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..params.dims.num_layers() {
            let n_in = params.dims.as_slice()[l] as f64;
            let bound = if l == 0 { 1.0 / n_in } else { (6.0 / n_in).sqrt() / omega0 };
            let (start, end) = (params.offsets[l], params.offsets[l + 1]);
            for v in &mut params.values[start..end] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    pub fn dims(&self) -> &LayerDims {
        &self.dims
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// (weights, biases) of weight layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let dims = self.dims.as_slice();
        let start = self.offsets[l];
        let nw = dims[l] * dims[l + 1];
        let end = self.offsets[l + 1];
        (&self.values[start..start + nw], &self.values[start + nw..end])
    }

    /// Mutable (weights, biases) of weight layer `l`.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let dims = self.dims.as_slice();
        let start = self.offsets[l];
        let nw = dims[l] * dims[l + 1];
        let end = self.offsets[l + 1];
        self.values[start..end].split_at_mut(nw)
    }

    pub(crate) fn layer_offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.dims.input_dim(), actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(x.to_vec()));
        }
        Ok(())
    }

    /// f(x; θ).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let dims = self.dims.as_slice();
        let last = self.dims.num_layers() - 1;
        let mut h: Vec<f64> = x.to_vec();
        let mut next = Vec::new();
        for l in 0..last {
            let (w, b) = self.layer(l);
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            next.clear();
            next.extend((0..n_out).map(|i| {
                let row = &w[i * n_in..(i + 1) * n_in];
                let z = dot(row, &h) + b[i];
                (self.omega0 * z).sin()
            }));
            std::mem::swap(&mut h, &mut next);
        }
        let (w, b) = self.layer(last);
        dot(w, &h) + b[0]
    }

    /// f(x; θ) together with the exact spatial gradient ∇ₓf.
    pub fn forward_with_gradient(&self, x: &[f64]) -> Result<FieldEval> {
        self.check_input(x)?;
        let trace = Trace::record(self, x);
        Ok(FieldEval { value: trace.value, gradient: trace.gradient.clone() })
    }

    /// Evaluates a batch of points laid out contiguously (`d` coordinates per point).
    pub fn forward_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        let d = self.dims.input_dim();
        if points.len() % d != 0 {
            return Err(Error::ShapeMismatch { expected: d, actual: points.len() % d });
        }
        points.chunks(d).try_for_each(|p| self.check_input(p))?;
        Ok(points.par_chunks(d).map(|p| self.forward_unchecked(p)).collect())
    }
}

/// Value and spatial gradient of the field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval {
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward pass with tangents, kept for the reverse sweep.
///
/// For hidden layer k (output of weight layer k-1): `pre_tangent[k] = W J_{k-1}`
/// and `jacobian[k] = ω·cos(a_k) ⊙ pre_tangent[k]`, each `n_k × d` row-major.
pub(crate) struct Trace {
    pub(crate) activations: Vec<Vec<f64>>,
    pub(crate) cosines: Vec<Vec<f64>>,
    pub(crate) pre_tangents: Vec<Vec<f64>>,
    pub(crate) jacobians: Vec<Vec<f64>>,
    pub(crate) value: f64,
    pub(crate) gradient: Vec<f64>,
}

impl Trace {
    pub(crate) fn record(params: &NetworkParams, x: &[f64]) -> Trace {
        let dims = params.dims.as_slice();
        let d = dims[0];
        let omega = params.omega0;
        let last = params.dims.num_layers() - 1;

        let mut activations = Vec::with_capacity(last + 1);
        let mut cosines = Vec::with_capacity(last + 1);
        let mut pre_tangents = Vec::with_capacity(last + 1);
        let mut jacobians = Vec::with_capacity(last + 1);

        let mut identity = vec![0.0; d * d];
        for k in 0..d {
            identity[k * d + k] = 1.0;
        }
        activations.push(x.to_vec());
        cosines.push(Vec::new());
        pre_tangents.push(Vec::new());
        jacobians.push(identity);

        for l in 0..last {
            let (w, b) = params.layer(l);
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let h_prev = &activations[l];
            let j_prev = &jacobians[l];
            let mut act = vec![0.0; n_out];
            let mut cos = vec![0.0; n_out];
            let mut tan = vec![0.0; n_out * d];
            let mut jac = vec![0.0; n_out * d];
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let a = omega * (dot(row, h_prev) + b[i]);
                let (s, c) = a.sin_cos();
                act[i] = s;
                cos[i] = c;
                let t = &mut tan[i * d..(i + 1) * d];
                for (j, &wij) in row.iter().enumerate() {
                    let jr = &j_prev[j * d..(j + 1) * d];
                    for k in 0..d {
                        t[k] += wij * jr[k];
                    }
                }
                let scale = omega * c;
                for k in 0..d {
                    jac[i * d + k] = scale * t[k];
                }
            }
            activations.push(act);
            cosines.push(cos);
            pre_tangents.push(tan);
            jacobians.push(jac);
        }

        let (w, b) = params.layer(last);
        let h = &activations[last];
        let jl = &jacobians[last];
        let value = dot(w, h) + b[0];
        let mut gradient = vec![0.0; d];
        for (j, &wj) in w.iter().enumerate() {
            for k in 0..d {
                gradient[k] += wj * jl[j * d + k];
            }
        }
        Trace { activations, cosines, pre_tangents, jacobians, value, gradient }
    }

    /// Accumulates into `grad` the parameter gradient of a scalar loss whose
    /// partials with respect to the output value and the spatial gradient are
    /// `value_bar` and `gradient_bar`. Reverse sweep over the tangent-augmented
    /// forward pass, so paths through ∇ₓf are included.
    pub(crate) fn backward(&self, params: &NetworkParams, value_bar: f64, gradient_bar: &[f64], grad: &mut [f64]) {
        let dims = params.dims.as_slice();
        let d = dims[0];
        let omega = params.omega0;
        let last = params.dims.num_layers() - 1;

        // Output layer.
        let (w, _) = params.layer(last);
        let n = dims[last];
        let off = params.layer_offset(last);
        let h = &self.activations[last];
        let jl = &self.jacobians[last];
        let mut h_bar = vec![0.0; n];
        let mut j_bar = vec![0.0; n * d];
        for j in 0..n {
            let jr = &jl[j * d..(j + 1) * d];
            grad[off + j] += value_bar * h[j] + dot(gradient_bar, jr);
            h_bar[j] = w[j] * value_bar;
            for k in 0..d {
                j_bar[j * d + k] = w[j] * gradient_bar[k];
            }
        }
        grad[off + n] += value_bar;

        let mut a_bar = Vec::new();
        let mut t_bar = Vec::new();
        for l in (0..last).rev() {
            let (w, _) = params.layer(l);
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let off = params.layer_offset(l);
            let sin = &self.activations[l + 1];
            let cos = &self.cosines[l + 1];
            let tan = &self.pre_tangents[l + 1];
            let h_prev = &self.activations[l];
            let j_prev = &self.jacobians[l];

            a_bar.clear();
            a_bar.resize(n_out, 0.0);
            t_bar.clear();
            t_bar.resize(n_out * d, 0.0);
            for i in 0..n_out {
                let jb = &j_bar[i * d..(i + 1) * d];
                let tr = &tan[i * d..(i + 1) * d];
                let cos_bar = omega * dot(jb, tr);
                a_bar[i] = h_bar[i] * cos[i] - sin[i] * cos_bar;
                for k in 0..d {
                    t_bar[i * d + k] = omega * cos[i] * jb[k];
                }
            }

            for i in 0..n_out {
                let ga = omega * a_bar[i];
                let tb = &t_bar[i * d..(i + 1) * d];
                let row = &mut grad[off + i * n_in..off + (i + 1) * n_in];
                for j in 0..n_in {
                    let jr = &j_prev[j * d..(j + 1) * d];
                    row[j] += ga * h_prev[j] + dot(tb, jr);
                }
                grad[off + n_in * n_out + i] += ga;
            }

            if l > 0 {
                let mut hb = vec![0.0; n_in];
                let mut jb = vec![0.0; n_in * d];
                for i in 0..n_out {
                    let ga = omega * a_bar[i];
                    let row = &w[i * n_in..(i + 1) * n_in];
                    let tb = &t_bar[i * d..(i + 1) * d];
                    for j in 0..n_in {
                        hb[j] += row[j] * ga;
                        for k in 0..d {
                            jb[j * d + k] += row[j] * tb[k];
                        }
                    }
                }
                h_bar = hb;
                j_bar = jb;
            }
        }
    }
}
