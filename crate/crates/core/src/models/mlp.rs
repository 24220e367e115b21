//! Fully-connected network with tanh hidden layers, an identity output
//! layer, and parameters flattened into a single vector.

use crate::error::Error;
use crate::Result;
use rand::Rng;

/// Feed-forward network. Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]`
/// outputs; every layer but the last applies tanh. Parameters are stored as
/// one flat vector, per layer the row-major weight matrix followed by the
/// bias vector, so optimizers and serialization can treat the model as a
/// plain `&[f64]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation values of every layer for one input, retained for the
/// backward pass. `activations[0]` is the input itself.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Network output (last layer's activations).
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds every layer")
    }
}

impl Mlp {
    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::config(format!(
                "layer sizes need at least an input and an output layer, all positive, got {sizes:?}"
            )));
        }
        Ok(())
    }

    /// Total parameter count for the given layer sizes.
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Network with all parameters zero.
    pub fn zeros(sizes: &[usize]) -> Result<Mlp> {
        Self::check_sizes(sizes)?;
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count_for(sizes)],
        })
    }

    /// Network with weights drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer and zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Mlp> {
        let mut net = Self::zeros(sizes)?;
        let mut offset = 0;
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = rng.gen_range(-bound..=bound);
            }
            offset += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    /// Number of weight layers.
    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Layer sizes including input and output.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Replaces the flat parameter vector; the length must match.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::config(format!(
                "parameter vector has length {}, expected {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Offset of layer `l`'s weights in the flat vector.
    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Runs the network, returning per-layer activations for backprop.
    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(x.to_vec());
        let mut offset = 0;
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let input = &activations[l];
            let mut out = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let mut z = biases[o];
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                for (w, a) in row.iter().zip(input) {
                    z += w * a;
                }
                out.push(if l < self.num_layers() - 1 {
                    z.tanh()
                } else {
                    z
                });
            }
            activations.push(out);
            offset += (fan_in + 1) * fan_out;
        }
        ForwardCache { activations }
    }

    /// Runs the network and returns only the output layer.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).output().to_vec()
    }

    /// Exact reverse-mode pass: given the gradient of a scalar objective
    /// with respect to the network output, accumulates (`+=`) the gradient
    /// with respect to every parameter into `grad`, which must have
    /// `param_count()` entries.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) {
        assert_eq!(
            upstream.len(),
            self.output_dim(),
            "upstream dimension mismatch"
        );
        assert_eq!(grad.len(), self.params.len(), "gradient buffer mismatch");

        // Gradient w.r.t. the current layer's pre-activation; the output
        // layer is linear so it starts as the upstream gradient itself.
        let mut delta = upstream.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let offset = self.layer_offset(l);
            let input = &cache.activations[l];

            for o in 0..fan_out {
                let d = delta[o];
                let w_row = offset + o * fan_in;
                for i in 0..fan_in {
                    grad[w_row + i] += d * input[i];
                }
                grad[offset + fan_in * fan_out + o] += d;
            }

            if l > 0 {
                let weights = &self.params[offset..offset + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let d = delta[o];
                    for i in 0..fan_in {
                        prev[i] += weights[o * fan_in + i] * d;
                    }
                }
                // Hidden activations are tanh: d tanh(z) = 1 - tanh(z)^2,
                // recovered from the cached post-activation value.
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}
