use rand::Rng;

use super::Tensor;
use crate::error::{invalid, Result};

/// Fully connected network: ReLU on hidden layers, identity on the output.
///
/// Layer `l` maps width `sizes[l]` to `sizes[l + 1]`; its weight matrix is
/// stored `(in, out)` row-major so a batch row times the matrix streams
/// contiguously through memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

/// Per-layer inputs recorded by a forward pass, reused by backward.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[l]` is the (post-activation) matrix fed into layer `l`.
    inputs: Vec<Tensor>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn input(&self) -> &Tensor {
        &self.inputs[0]
    }

    pub fn batch(&self) -> usize {
        self.output.rows()
    }
}

/// Parameter gradients, congruent with the owning [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Tensor::zeros(w.shape().to_vec()))
                .collect(),
            biases: net
                .biases
                .iter()
                .map(|b| Tensor::zeros(b.shape().to_vec()))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .for_each(|t| t.fill(0.0));
    }

    /// Parameter tensors in the same order as [`Mlp::params`].
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
    }

    pub fn add_assign(&mut self, other: &Grads) -> Result<()> {
        if !self.congruent(other) {
            return Err(invalid("gradient shapes differ"));
        }
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(&other.biases))
        {
            a.data_mut()
                .iter_mut()
                .zip(b.data())
                .for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    fn congruent(&self, other: &Grads) -> bool {
        self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.same_shape(b))
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| a.same_shape(b))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    /// Flattened view in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Grads,
    /// Gradient of the loss with respect to the network input.
    pub input: Tensor,
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for w in &mut net.weights {
            let bound = 1.0 / (w.shape()[0] as f64).sqrt();
            for x in w.data_mut() {
                *x = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!("bad layer sizes {sizes:?}")));
        }
        let weights = sizes
            .windows(2)
            .map(|w| Tensor::zeros(vec![w[0], w[1]]))
            .collect();
        let biases = sizes[1..].iter().map(|&n| Tensor::zeros(vec![n])).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parts(weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(invalid("need one bias per weight matrix"));
        }
        let mut sizes = vec![];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.shape().len() != 2 || b.shape() != [w.shape()[1]] {
                return Err(invalid(format!("layer {l} has inconsistent shapes")));
            }
            if l == 0 {
                sizes.push(w.shape()[0]);
            } else if sizes[l] != w.shape()[0] {
                return Err(invalid(format!("layer {l} input width mismatch")));
            }
            sizes.push(w.shape()[1]);
        }
        Ok(Self {
            sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    /// Parameter tensors ordered `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
    }

    pub fn num_params(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Overwrites all parameters from a flat vector in [`Mlp::params`] order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(invalid("flat parameter length mismatch"));
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn as_batch(&self, input: &Tensor) -> Result<Tensor> {
        let ok = match input.shape().len() {
            1 => input.len() == self.input_dim(),
            2 => input.cols() == self.input_dim(),
            _ => false,
        };
        if !ok {
            return Err(invalid(format!(
                "input shape {:?} incompatible with input width {}",
                input.shape(),
                self.input_dim()
            )));
        }
        if input.shape().len() == 1 {
            Tensor::new(vec![1, input.len()], input.data().to_vec())
        } else {
            Ok(input.clone())
        }
    }

    /// Output of shape `(batch, output_dim)`; a rank-1 input is a batch of one.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = self.as_batch(input)?;
        for l in 0..self.num_layers() {
            x = self.layer_forward(l, &x);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut x = self.as_batch(input)?;
        for l in 0..self.num_layers() {
            let y = self.layer_forward(l, &x);
            inputs.push(x);
            x = y;
        }
        Ok(Trace { inputs, output: x })
    }

    fn layer_forward(&self, l: usize, x: &Tensor) -> Tensor {
        let (w, b) = (&self.weights[l], &self.biases[l]);
        let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
        let batch = x.rows();
        let mut out = Tensor::zeros(vec![batch, fan_out]);
        let relu = l + 1 < self.num_layers();
        for r in 0..batch {
            let xr = x.row(r);
            let yr = out.row_mut(r);
            yr.copy_from_slice(b.data());
            for (i, &xi) in xr.iter().enumerate().take(fan_in) {
                if xi == 0.0 {
                    continue;
                }
                let wi = &w.data()[i * fan_out..(i + 1) * fan_out];
                for (y, &wij) in yr.iter_mut().zip(wi) {
                    *y += xi * wij;
                }
            }
            if relu {
                // NaN passes through so corrupted weights surface as a non-finite loss.
                yr.iter_mut().filter(|y| **y < 0.0).for_each(|y| *y = 0.0);
            }
        }
        out
    }

    /// Recomputes the forward pass on `input`, then backpropagates `upstream`.
    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Backward> {
        let trace = self.forward_trace(input)?;
        self.backward_trace(&trace, upstream)
    }

    pub fn backward_trace(&self, trace: &Trace, upstream: &Tensor) -> Result<Backward> {
        let mut grads = Grads::zeros_like(self);
        let input = self.backprop(trace, upstream, Some(&mut grads))?;
        Ok(Backward { grads, input })
    }

    /// Gradient with respect to the input only; skips parameter gradients.
    pub fn input_gradient(&self, trace: &Trace, upstream: &Tensor) -> Result<Tensor> {
        self.backprop(trace, upstream, None)
    }

    fn backprop(
        &self,
        trace: &Trace,
        upstream: &Tensor,
        mut grads: Option<&mut Grads>,
    ) -> Result<Tensor> {
        if upstream.shape() != trace.output.shape() {
            return Err(invalid(format!(
                "upstream shape {:?} differs from output shape {:?}",
                upstream.shape(),
                trace.output.shape()
            )));
        }
        let batch = upstream.rows();
        let mut delta = upstream.clone();
        for l in (0..self.num_layers()).rev() {
            let x = &trace.inputs[l];
            let w = &self.weights[l];
            let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
            if let Some(g) = grads.as_deref_mut() {
                let gw = g.weights[l].data_mut();
                let gb = g.biases[l].data_mut();
                for r in 0..batch {
                    let dr = delta.row(r);
                    for (acc, &d) in gb.iter_mut().zip(dr) {
                        *acc += d;
                    }
                    for (i, &xi) in x.row(r).iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        let gwi = &mut gw[i * fan_out..(i + 1) * fan_out];
                        for (acc, &d) in gwi.iter_mut().zip(dr) {
                            *acc += xi * d;
                        }
                    }
                }
            }
            let mut prev = Tensor::zeros(vec![batch, fan_in]);
            for r in 0..batch {
                let dr = delta.row(r);
                let xr = x.row(r);
                let pr = prev.row_mut(r);
                for i in 0..fan_in {
                    // Hidden inputs are ReLU outputs: zero means the unit was inactive.
                    if l > 0 && xr[i] <= 0.0 {
                        continue;
                    }
                    let wi = &w.data()[i * fan_out..(i + 1) * fan_out];
                    pr[i] = wi.iter().zip(dr).map(|(a, b)| a * b).sum();
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}
