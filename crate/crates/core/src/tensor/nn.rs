//! Parameter storage and the layer types the generators and discriminators
//! are assembled from.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Standard deviation of the Gaussian used for convolution weights.
pub const CONV_INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

/// Ordered, named collection of trainable tensors belonging to one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Tape handles for every parameter of a store, in store order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps tape handles that were recorded in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor.with_requires_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_normal<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite std");
        let numel: usize = shape.iter().product();
        let values = (0..numel).map(|_| dist.sample(rng)).collect();
        self.add(name, Tensor::new(shape.to_vec(), values).expect("shape matches"))
    }

    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let numel: usize = shape.iter().product();
        let values = (0..numel).map(|_| dist.sample(rng)).collect();
        self.add(name, Tensor::new(shape.to_vec(), values).expect("shape matches"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Sets every parameter to zero (used for analytically forced outputs).
    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Copies the parameters onto the tape. With `trainable` unset the
    /// leaves are constants and no gradient flows into them.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { tape.param(t) } else { tape.leaf(&t.clone().with_requires_grad(false)) })
            .collect();
        Bound { vars }
    }

    /// Moves gradients from the tape onto the stored tensors. Parameters the
    /// loss did not reach get an all-zero gradient.
    pub fn collect_grads(&mut self, tape: &Tape, bound: &Bound) -> Result<()> {
        for (t, &v) in self.tensors.iter_mut().zip(&bound.vars) {
            let g = match tape.grad(v) {
                Some(g) => g.to_vec(),
                None => vec![0.0; t.numel()],
            };
            t.set_grad(g)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Replaces parameter values by name lookup, checking shapes.
    pub fn load<'a>(&mut self, mut lookup: impl FnMut(&str) -> Option<&'a Tensor>) -> Result<()> {
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let src = lookup(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if src.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            t.values_mut().copy_from_slice(src.values());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// Fully connected layer acting on the last dimension.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = params.add_uniform(format!("{name}.weight"), &[in_dim, out_dim], bound, rng);
        let bias = params.add_uniform(format!("{name}.bias"), &[out_dim], bound, rng);
        Linear { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.last() != Some(&self.in_dim) {
            return Err(Error::shape(
                "linear",
                "features",
                format!("input {shape:?}, expected last dimension {}", self.in_dim),
            ));
        }
        let rows = shape[..shape.len() - 1].iter().product();
        let flat = tape.reshape(x, vec![rows, self.in_dim])?;
        let y = tape.matmul(flat, bound.get(self.weight))?;
        let y = tape.add_bias(y, bound.get(self.bias))?;
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.out_dim;
        tape.reshape(y, out_shape)
    }
}

/// 1-D convolution over `[batch, channels, len]` with weights
/// `[out_channels, in_channels, kernel]`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add_normal(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel],
            CONV_INIT_STD,
            rng,
        );
        let bias = params.add_zeros(format!("{name}.bias"), &[out_channels]);
        Conv1d { weight, bias, stride, padding }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let y = tape.conv1d(x, bound.get(self.weight), self.stride, self.padding)?;
        tape.add_channel_bias(y, bound.get(self.bias))
    }
}

/// 1-D transposed convolution with weights `[in_channels, out_channels, kernel]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add_normal(
            format!("{name}.weight"),
            &[in_channels, out_channels, kernel],
            CONV_INIT_STD,
            rng,
        );
        let bias = params.add_zeros(format!("{name}.bias"), &[out_channels]);
        ConvTranspose1d { weight, bias, stride, padding }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let y = tape.conv_transpose1d(x, bound.get(self.weight), self.stride, self.padding)?;
        tape.add_channel_bias(y, bound.get(self.bias))
    }
}

#[derive(Clone, Debug)]
struct LstmLayer {
    w_input: ParamId,
    w_hidden: ParamId,
    bias: ParamId,
}

/// Stacked LSTM over `[batch, steps, features]`, zero initial state, returning
/// the top layer's hidden state at every step.
#[derive(Clone, Debug)]
pub struct LstmStack {
    layers: Vec<LstmLayer>,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmStack {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let layers = (0..num_layers)
            .map(|l| {
                let d = if l == 0 { input_dim } else { hidden };
                LstmLayer {
                    w_input: params.add_uniform(format!("{name}.l{l}.w_input"), &[d, 4 * hidden], bound, rng),
                    w_hidden: params.add_uniform(
                        format!("{name}.l{l}.w_hidden"),
                        &[hidden, 4 * hidden],
                        bound,
                        rng,
                    ),
                    bias: params.add_uniform(format!("{name}.l{l}.bias"), &[4 * hidden], bound, rng),
                }
            })
            .collect();
        LstmStack { layers, input_dim, hidden }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.input_dim {
            return Err(Error::shape(
                "lstm",
                "features",
                format!("input {shape:?}, expected [batch, steps, {}]", self.input_dim),
            ));
        }
        let (batch, steps) = (shape[0], shape[1]);
        let h4 = 4 * self.hidden;
        let mut input = x;
        for layer in &self.layers {
            let d = tape.shape(input)[2];
            let flat = tape.reshape(input, vec![batch * steps, d])?;
            let proj = tape.matmul(flat, bound.get(layer.w_input))?;
            let proj = tape.reshape(proj, vec![batch, steps, h4])?;
            let mut h = tape.zeros(&[batch, self.hidden]);
            let mut c = tape.zeros(&[batch, self.hidden]);
            let mut outs = Vec::with_capacity(steps);
            for t in 0..steps {
                let xp = tape.step(proj, t)?;
                let hc = tape.lstm_cell(xp, h, c, bound.get(layer.w_hidden), bound.get(layer.bias))?;
                h = tape.slice_last(hc, 0, self.hidden)?;
                c = tape.slice_last(hc, self.hidden, self.hidden)?;
                outs.push(h);
            }
            input = tape.stack_steps(&outs)?;
        }
        Ok(input)
    }
}
