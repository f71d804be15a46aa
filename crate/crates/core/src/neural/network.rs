use super::layer::{Cache, Layer, LayerSpec, Params};
use super::optim::Optimizer;
use super::tensor::{Scalar, Tensor};
use super::NnError;
use crate::rng::stage_seed;

/// A feed-forward stack of layers with build-time shape checking.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
}

/// Per-layer caches from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T = f32> {
    caches: Vec<Cache<T>>,
}

impl<T: Scalar> Network<T> {
    /// Builds every layer in order; layer `i` is initialised from
    /// `stage_seed(seed, "layer:{i}")`.
    pub fn build(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = Layer::build(spec.clone(), &shape, stage_seed(seed, &format!("layer:{i}")))
                .map_err(|e| match e {
                    NnError::InvalidShape(msg) => {
                        NnError::InvalidShape(format!("layer {i} ({}): {msg}", spec.name()))
                    }
                    other => other,
                })?;
            shape = layer.out_shape().to_vec();
            layers.push(layer);
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map_or(self.input_shape.as_slice(), |l| l.out_shape())
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(Params::count)
            .sum()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>), NnError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, Tape { caches }))
    }

    /// Forward pass without keeping caches.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?.0;
        }
        Ok(x)
    }

    /// Runs only the first `upto` layers.
    pub fn infer_prefix(&self, input: &Tensor<T>, upto: usize) -> Result<Tensor<T>, NnError> {
        let mut x = input.clone();
        for layer in &self.layers[..upto.min(self.layers.len())] {
            x = layer.forward(&x)?.0;
        }
        Ok(x)
    }

    pub fn backward(&mut self, tape: &Tape<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        if tape.caches.len() != self.layers.len() {
            return Err(NnError::StaleCache("Network"));
        }
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches).rev() {
            g = layer.backward(cache, &g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.layers.iter_mut().filter_map(Layer::params_mut) {
            p.zero_grad();
        }
    }

    /// Applies the optimizer to every parameterised layer.
    pub fn step(&mut self, opt: &Optimizer, t: u64) -> Result<(), NnError> {
        for p in self.layers.iter_mut().filter_map(Layer::params_mut) {
            opt.step(p, t)?;
        }
        Ok(())
    }

    /// Per layer: `[weight, bias]` or nothing.
    pub fn export_params(&self) -> Vec<Vec<Tensor<T>>> {
        self.layers
            .iter()
            .map(|l| match l.params() {
                Some(p) => vec![p.weight.clone(), p.bias.clone()],
                None => Vec::new(),
            })
            .collect()
    }

    /// Inverse of [`export_params`](Self::export_params); shapes must match.
    pub fn import_params(&mut self, tensors: &[Vec<Tensor<T>>]) -> Result<(), NnError> {
        if tensors.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch(format!(
                "checkpoint has {} layers, network has {}",
                tensors.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, ts)) in self.layers.iter_mut().zip(tensors).enumerate() {
            match (layer.params_mut(), ts.as_slice()) {
                (None, []) => {}
                (Some(p), [w, b]) if w.shape() == p.weight.shape() && b.shape() == p.bias.shape() => {
                    p.weight = w.clone();
                    p.bias = b.clone();
                    p.touch();
                }
                _ => {
                    return Err(NnError::ShapeMismatch(format!(
                        "checkpoint tensors for layer {i} do not match"
                    )))
                }
            }
        }
        Ok(())
    }
}
