//! Fully connected networks with manual backpropagation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Error, Result};
use crate::format::to_f32_grid;

/// Nonlinearity applied between hidden layers. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    Identity,
    Tanh,
    #[default]
    Silu,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Silu => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Silu),
            _ => Err(config_err!("unknown activation id {id}")),
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "silu" | "swish" => Ok(Activation::Silu),
            other => Err(config_err!("unknown activation {other:?}")),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
        })
    }
}

/// `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    /// Glorot-uniform weights, zero bias, snapped to the `f32` grid.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_fn((outputs, inputs), |_| to_f32_grid(rng.random_range(-a..a)));
        Self { weight, bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug)]
pub struct MlpTrace {
    /// Layer inputs, `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.pre.last().expect("at least one layer")
    }
}

impl Mlp {
    /// Network with the given layer widths, `widths[0]` being the input size.
    pub fn glorot(widths: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let layers = widths.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();
        Self { layers, activation }
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Self {
        let layers = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    /// Single-vector forward pass. Used for inference so results do not depend on batching.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.dot(&a);
            z += &layer.bias;
            if l != last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            a = z;
        }
        a
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> MlpTrace {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            let next = if l != last { z.mapv(|v| self.activation.apply(v)) } else { Array2::zeros((0, 0)) };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        MlpTrace { inputs, pre }
    }

    /// Backpropagate `grad_out` (gradient of the loss w.r.t. the network output). Returns
    /// per-layer parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, trace: &MlpTrace, grad_out: Array2<f64>) -> (Vec<Dense>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut dz = grad_out;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let weight = dz.t().dot(&trace.inputs[l]);
            let bias = dz.sum_axis(Axis(0));
            grads.push(Dense { weight, bias });
            let mut da = dz.dot(&layer.weight);
            if l > 0 {
                let act = self.activation;
                da.zip_mut_with(&trace.pre[l - 1], |g, &z| *g *= act.derivative(z));
            }
            dz = da;
        }
        grads.reverse();
        (grads, dz)
    }

    /// Check shapes chain and every entry is finite.
    pub fn validate(&self, name: &str) -> Result<()> {
        if self.layers.is_empty() {
            return Err(config_err!("{name} has no layers"));
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(config_err!("{name}: layer {l} outputs {} but layer {} takes {}", pair[0].outputs(), l + 1, pair[1].inputs()));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(config_err!("{name}.{l}: bias length mismatch"));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numerics { param: format!("{name}.{l}"), detail: "non-finite parameter".into() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn activation_derivatives_match_differences() {
        for act in [Activation::Identity, Activation::Tanh, Activation::Silu] {
            for &z in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
                let h = 1e-6;
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!((fd - act.derivative(z)).abs() < 1e-8, "{act} at {z}");
            }
        }
    }

    #[test]
    fn single_and_batched_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::glorot(&[3, 5, 2], Activation::Tanh, &mut rng);
        let x = array![[0.1, -0.2, 0.3], [1.0, 0.5, -0.5]];
        let batch = net.forward_batch(x.view());
        for (i, row) in x.outer_iter().enumerate() {
            let single = net.forward(row);
            for (a, b) in single.iter().zip(batch.output().row(i).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
