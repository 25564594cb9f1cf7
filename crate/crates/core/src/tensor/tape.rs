use super::conv::{conv1d_out_len, conv_transpose1d_out_len, Window};
use super::gemm::gemm;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const BCE_EPS: f64 = 1e-12;

enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool, m: usize, k: usize, n: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias { x: Var, bias: Var },
    AddChannelBias { x: Var, bias: Var, channels: usize, len: usize },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Sin(Var),
    Reshape(Var),
    SliceLast { x: Var, start: usize, len: usize },
    ConcatLast(Vec<Var>),
    SwapLast2 { x: Var, rows: usize, cols: usize },
    Conv1d { x: Var, w: Var, win: Window, batch: usize, out_channels: usize },
    ConvT1d { x: Var, w: Var, win: Window, batch: usize, in_channels: usize },
    StackSteps(Vec<Var>),
    StepRange { x: Var, start: usize, len: usize },
    Repeat { x: Var, times: usize },
    PositionScale { x: Var, times: usize },
    LstmCell { xp: Var, h: Var, c: Var, wh: Var, b: Var, gates: Vec<f64>, tanh_c: Vec<f64> },
    Mean(Var),
    Bce { p: Var, target: Vec<f64> },
    Mse(Var, Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Mse(a, b) => {
                vec![*a, *b]
            }
            Op::AddBias { x, bias } | Op::AddChannelBias { x, bias, .. } => vec![*x, *bias],
            Op::Conv1d { x, w, .. } | Op::ConvT1d { x, w, .. } => vec![*x, *w],
            Op::Scale(x, _)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Sin(x)
            | Op::Reshape(x)
            | Op::SliceLast { x, .. }
            | Op::SwapLast2 { x, .. }
            | Op::StepRange { x, .. }
            | Op::Repeat { x, .. }
            | Op::PositionScale { x, .. }
            | Op::Mean(x)
            | Op::Bce { p: x, .. } => vec![*x],
            Op::ConcatLast(xs) | Op::StackSteps(xs) => xs.clone(),
            Op::LstmCell { xp, h, c, wh, b, .. } => vec![*xp, *h, *c, *wh, *b],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddBias { .. } => "add_bias",
            Op::AddChannelBias { .. } => "add_channel_bias",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Sin(_) => "sin",
            Op::Reshape(_) => "reshape",
            Op::SliceLast { .. } => "slice_last",
            Op::ConcatLast(_) => "concat_last",
            Op::SwapLast2 { .. } => "swap_last2",
            Op::Conv1d { .. } => "conv1d",
            Op::ConvT1d { .. } => "conv_transpose1d",
            Op::StackSteps(_) => "stack_steps",
            Op::StepRange { .. } => "step_range",
            Op::Repeat { .. } => "repeat",
            Op::PositionScale { .. } => "position_scale",
            Op::LstmCell { .. } => "lstm_cell",
            Op::Mean(_) => "mean",
            Op::Bce { .. } => "bce",
            Op::Mse(..) => "mse",
        }
    }
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a computation. Inputs of a node always precede it,
/// so reverse insertion order is a valid topological order for backward.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, "operands", format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a tensor as a leaf; it receives gradients iff the tensor
    /// requires them.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, true)
    }

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, values)?;
        Ok(self.leaf(&t))
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.leaf(&Tensor::zeros(shape))
    }

    /// A gradient-free copy of `x`.
    pub fn detach(&mut self, x: Var) -> Var {
        let n = &self.nodes[x.0];
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.push(shape, value, Op::Leaf, false)
    }

    pub fn value(&self, x: Var) -> &[f64] {
        &self.nodes[x.0].value
    }

    pub fn shape(&self, x: Var) -> &[usize] {
        &self.nodes[x.0].shape
    }

    pub fn scalar(&self, x: Var) -> f64 {
        self.nodes[x.0].value[0]
    }

    pub fn grad(&self, x: Var) -> Option<&[f64]> {
        self.grads[x.0].as_deref()
    }

    pub fn to_tensor(&self, x: Var) -> Tensor {
        let n = &self.nodes[x.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape nodes are well-formed")
    }

    // ---- linear algebra ------------------------------------------------

    /// 2-D matrix product `op(a) * op(b)`, where `op` optionally transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::shape("matmul", "rank", format!("{sa:?} x {sb:?}")));
        }
        let (m, k) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (k2, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != k2 {
            return Err(Error::shape("matmul", "inner", format!("{k} vs {k2}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), ta, self.value(b), tb, 0.0, &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, ta, tb, m, k, n }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.shape(a), self.shape(b))?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.shape(a), self.shape(b))?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.shape(a), self.shape(b))?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * s).collect();
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Scale(x, s), rg)
    }

    /// Adds `bias` (length = last dimension of `x`) to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = *self.shape(x).last().unwrap();
        if self.shape(bias) != [d] {
            return Err(Error::shape(
                "add_bias",
                "last",
                format!("bias {:?} for input {:?}", self.shape(bias), self.shape(x)),
            ));
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(d)
            .flat_map(|row| row.iter().zip(b).map(|(v, bb)| v + bb))
            .collect();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias { x, bias }, rg))
    }

    /// Adds a per-channel bias to a `[batch, channels, len]` tensor.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || self.shape(bias) != [s[1]] {
            return Err(Error::shape(
                "add_channel_bias",
                "channels",
                format!("bias {:?} for input {:?}", self.shape(bias), s),
            ));
        }
        let (channels, len) = (s[1], s[2]);
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for (i, chunk) in out.chunks_mut(len).enumerate() {
            let bb = b[i % channels];
            chunk.iter_mut().for_each(|v| *v += bb);
        }
        let rg = self.rg(&[x, bias]);
        Ok(self.push(s, out, Op::AddChannelBias { x, bias, channels, len }, rg))
    }

    // ---- elementwise nonlinearities -------------------------------------

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), out, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, f64::sin, Op::Sin(x))
    }

    // ---- layout ---------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).len() || shape.contains(&0) {
            return Err(Error::shape(
                "reshape",
                "numel",
                format!("{:?} -> {shape:?}", self.shape(x)),
            ));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, Op::Reshape(x), rg))
    }

    /// Columns `start..start+len` along the last dimension.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().unwrap();
        if len == 0 || start + len > d {
            return Err(Error::shape(
                "slice_last",
                "last",
                format!("range {start}..{} of extent {d}", start + len),
            ));
        }
        let out = self
            .value(x)
            .chunks(d)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, Op::SliceLast { x, start, len }, rg))
    }

    pub fn concat_last(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.shape(xs[0]).to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(Error::shape(
                    "concat_last",
                    "leading",
                    format!("{first:?} vs {s:?}"),
                ));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows = self.value(xs[0]).len() / widths[0];
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = first;
        *shape.last_mut().unwrap() = total;
        let rg = self.rg(xs);
        Ok(self.push(shape, out, Op::ConcatLast(xs.to_vec()), rg))
    }

    /// Swaps the last two dimensions.
    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(Error::shape("swap_last2", "rank", format!("{s:?}")));
        }
        let (rows, cols) = (s[s.len() - 2], s[s.len() - 1]);
        let v = self.value(x);
        let mut out = vec![0.0; v.len()];
        for (blk_in, blk_out) in v.chunks(rows * cols).zip(out.chunks_mut(rows * cols)) {
            for r in 0..rows {
                for c in 0..cols {
                    blk_out[c * rows + r] = blk_in[r * cols + c];
                }
            }
        }
        let mut shape = s;
        let n = shape.len();
        shape.swap(n - 1, n - 2);
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, Op::SwapLast2 { x, rows, cols }, rg))
    }

    /// Stacks `[batch, d]` steps into `[batch, steps, d]`.
    pub fn stack_steps(&mut self, xs: &[Var]) -> Result<Var> {
        let s = self.shape(xs[0]).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("stack_steps", "rank", format!("{s:?}")));
        }
        for &x in xs {
            check_same("stack_steps", &s, self.shape(x))?;
        }
        let (batch, d, steps) = (s[0], s[1], xs.len());
        let mut out = vec![0.0; batch * steps * d];
        for (t, &x) in xs.iter().enumerate() {
            let v = self.value(x);
            for b in 0..batch {
                out[(b * steps + t) * d..(b * steps + t + 1) * d]
                    .copy_from_slice(&v[b * d..(b + 1) * d]);
            }
        }
        let rg = self.rg(xs);
        Ok(self.push(vec![batch, steps, d], out, Op::StackSteps(xs.to_vec()), rg))
    }

    /// Steps `start..start+len` of a `[batch, steps, d]` tensor.
    pub fn step_range(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || len == 0 || start + len > s[1] {
            return Err(Error::shape(
                "step_range",
                "steps",
                format!("range {start}..{} of {s:?}", start + len),
            ));
        }
        let (batch, steps, d) = (s[0], s[1], s[2]);
        let v = self.value(x);
        let mut out = Vec::with_capacity(batch * len * d);
        for b in 0..batch {
            out.extend_from_slice(&v[(b * steps + start) * d..(b * steps + start + len) * d]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(vec![batch, len, d], out, Op::StepRange { x, start, len }, rg))
    }

    /// One step of a `[batch, steps, d]` tensor as `[batch, d]`.
    pub fn step(&mut self, x: Var, t: usize) -> Result<Var> {
        let r = self.step_range(x, t, 1)?;
        let s = self.shape(r).to_vec();
        self.reshape(r, vec![s[0], s[2]])
    }

    /// `[batch, d]` -> `[batch, times, d]` by duplication.
    pub fn repeat_steps(&mut self, x: Var, times: usize) -> Result<Var> {
        self.broadcast_steps(x, times, false)
    }

    /// `[batch, d]` -> `[batch, times, d]` with row `t` equal to `(t + 1) * x`.
    pub fn position_scale(&mut self, x: Var, times: usize) -> Result<Var> {
        self.broadcast_steps(x, times, true)
    }

    fn broadcast_steps(&mut self, x: Var, times: usize, scaled: bool) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || times == 0 {
            return Err(Error::shape("repeat_steps", "rank", format!("{s:?} x {times}")));
        }
        let (batch, d) = (s[0], s[1]);
        let v = self.value(x);
        let mut out = Vec::with_capacity(batch * times * d);
        for b in 0..batch {
            for t in 0..times {
                let k = if scaled { (t + 1) as f64 } else { 1.0 };
                out.extend(v[b * d..(b + 1) * d].iter().map(|e| k * e));
            }
        }
        let op = if scaled {
            Op::PositionScale { x, times }
        } else {
            Op::Repeat { x, times }
        };
        let rg = self.rg(&[x]);
        Ok(self.push(vec![batch, times, d], out, op, rg))
    }

    // ---- convolutions ----------------------------------------------------

    /// `x: [batch, c_in, l_in]`, `w: [c_out, c_in, k]` -> `[batch, c_out, l_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 {
            return Err(Error::shape("conv1d", "rank", format!("{sx:?} * {sw:?}")));
        }
        if sx[1] != sw[1] {
            return Err(Error::shape(
                "conv1d",
                "in_channels",
                format!("input has {} channels, weights expect {}", sx[1], sw[1]),
            ));
        }
        let (batch, c_in, l_in) = (sx[0], sx[1], sx[2]);
        let (c_out, kernel) = (sw[0], sw[2]);
        let l_out = conv1d_out_len(l_in, kernel, stride, padding)?;
        let win = Window { channels: c_in, long: l_in, short: l_out, kernel, stride, padding };
        let mut cols = vec![0.0; c_in * kernel * l_out];
        let mut out = vec![0.0; batch * c_out * l_out];
        let (xv, wv) = (self.value(x), self.value(w));
        for b in 0..batch {
            win.im2col(&xv[b * c_in * l_in..(b + 1) * c_in * l_in], &mut cols);
            gemm(
                c_out,
                c_in * kernel,
                l_out,
                wv,
                false,
                &cols,
                false,
                0.0,
                &mut out[b * c_out * l_out..(b + 1) * c_out * l_out],
            );
        }
        let rg = self.rg(&[x, w]);
        Ok(self.push(
            vec![batch, c_out, l_out],
            out,
            Op::Conv1d { x, w, win, batch, out_channels: c_out },
            rg,
        ))
    }

    /// `x: [batch, c_in, l_in]`, `w: [c_in, c_out, k]` -> `[batch, c_out, l_out]`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 {
            return Err(Error::shape("conv_transpose1d", "rank", format!("{sx:?} * {sw:?}")));
        }
        if sx[1] != sw[0] {
            return Err(Error::shape(
                "conv_transpose1d",
                "in_channels",
                format!("input has {} channels, weights expect {}", sx[1], sw[0]),
            ));
        }
        let (batch, c_in, l_in) = (sx[0], sx[1], sx[2]);
        let (c_out, kernel) = (sw[1], sw[2]);
        let l_out = conv_transpose1d_out_len(l_in, kernel, stride, padding)?;
        let win = Window { channels: c_out, long: l_out, short: l_in, kernel, stride, padding };
        let mut cols = vec![0.0; c_out * kernel * l_in];
        let mut out = vec![0.0; batch * c_out * l_out];
        let (xv, wv) = (self.value(x), self.value(w));
        for b in 0..batch {
            gemm(
                c_out * kernel,
                c_in,
                l_in,
                wv,
                true,
                &xv[b * c_in * l_in..(b + 1) * c_in * l_in],
                false,
                0.0,
                &mut cols,
            );
            win.col2im_add(&cols, &mut out[b * c_out * l_out..(b + 1) * c_out * l_out]);
        }
        let rg = self.rg(&[x, w]);
        Ok(self.push(
            vec![batch, c_out, l_out],
            out,
            Op::ConvT1d { x, w, win, batch, in_channels: c_in },
            rg,
        ))
    }

    // ---- recurrent cell --------------------------------------------------

    /// One LSTM step. `xp` is the precomputed input projection `x * W_x`
    /// (`[batch, 4h]`), `h`/`c` the previous state (`[batch, h]`), `wh` the
    /// recurrent weights (`[h, 4h]`) and `b` the gate bias (`[4h]`). Gate
    /// blocks are ordered input, forget, candidate, output. Returns
    /// `[batch, 2h]` holding the new hidden state followed by the new cell.
    pub fn lstm_cell(&mut self, xp: Var, h: Var, c: Var, wh: Var, b: Var) -> Result<Var> {
        let sh = self.shape(h).to_vec();
        if sh.len() != 2 {
            return Err(Error::shape("lstm_cell", "rank", format!("hidden {sh:?}")));
        }
        let (batch, hid) = (sh[0], sh[1]);
        let g4 = 4 * hid;
        if self.shape(xp) != [batch, g4] {
            return Err(Error::shape(
                "lstm_cell",
                "gates",
                format!("input projection {:?}, expected [{batch}, {g4}]", self.shape(xp)),
            ));
        }
        if self.shape(c) != [batch, hid] {
            return Err(Error::shape("lstm_cell", "cell", format!("{:?}", self.shape(c))));
        }
        if self.shape(wh) != [hid, g4] || self.shape(b) != [g4] {
            return Err(Error::shape(
                "lstm_cell",
                "weights",
                format!("recurrent {:?}, bias {:?}", self.shape(wh), self.shape(b)),
            ));
        }
        let mut z = self.value(xp).to_vec();
        let bv = self.value(b);
        for row in z.chunks_mut(g4) {
            row.iter_mut().zip(bv).for_each(|(v, bb)| *v += bb);
        }
        gemm(batch, hid, g4, self.value(h), false, self.value(wh), false, 1.0, &mut z);
        let cv = self.value(c);
        let mut out = vec![0.0; batch * 2 * hid];
        let mut tanh_c = vec![0.0; batch * hid];
        for bi in 0..batch {
            let zr = &mut z[bi * g4..(bi + 1) * g4];
            for j in 0..hid {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[hid + j]);
                let g = zr[2 * hid + j].tanh();
                let o = sigmoid(zr[3 * hid + j]);
                zr[j] = i;
                zr[hid + j] = f;
                zr[2 * hid + j] = g;
                zr[3 * hid + j] = o;
                let c_new = f * cv[bi * hid + j] + i * g;
                let tc = c_new.tanh();
                tanh_c[bi * hid + j] = tc;
                out[bi * 2 * hid + j] = o * tc;
                out[bi * 2 * hid + hid + j] = c_new;
            }
        }
        let rg = self.rg(&[xp, h, c, wh, b]);
        Ok(self.push(
            vec![batch, 2 * hid],
            out,
            Op::LstmCell { xp, h, c, wh, b, gates: z, tanh_c },
            rg,
        ))
    }

    // ---- reductions and losses ------------------------------------------

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[x]);
        self.push(vec![1], vec![m], Op::Mean(x), rg)
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`.
    pub fn bce(&mut self, p: Var, target: &[f64]) -> Result<Var> {
        if target.len() != self.value(p).len() {
            return Err(Error::shape(
                "bce",
                "target",
                format!("{} targets for {:?}", target.len(), self.shape(p)),
            ));
        }
        let n = target.len() as f64;
        let loss = self
            .value(p)
            .iter()
            .zip(target)
            .map(|(&pv, &t)| {
                let pc = pv.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
            })
            .sum::<f64>()
            / n;
        let rg = self.rg(&[p]);
        Ok(self.push(vec![1], vec![loss], Op::Bce { p, target: target.to_vec() }, rg))
    }

    /// BCE against a constant label.
    pub fn bce_const(&mut self, p: Var, label: f64) -> Result<Var> {
        let target = vec![label; self.value(p).len()];
        self.bce(p, &target)
    }

    /// Mean squared error between two tensors of equal shape.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mse", self.shape(a), self.shape(b))?;
        let (va, vb) = (self.value(a), self.value(b));
        let loss = va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / va.len() as f64;
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![1], vec![loss], Op::Mse(a, b), rg))
    }

    // ---- backward ----------------------------------------------------------

    /// Clears all gradients so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
        self.backward_done = false;
    }

    /// Populates gradients of `loss` with respect to every reachable node that
    /// requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(
                "gradients already computed; call reset_grads first".into(),
            ));
        }
        let ln = &self.nodes[loss.0];
        if ln.value.len() != 1 {
            return Err(Error::Backward(format!("loss must be scalar, got shape {:?}", ln.shape)));
        }
        if !ln.value[0].is_finite() {
            return Err(Error::NonFinite {
                context: format!("loss value {}", ln.value[0]),
            });
        }
        self.backward_done = true;
        if !ln.requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let Tape { nodes, grads, .. } = self;
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for v in node.op.inputs() {
                if v.0 >= i {
                    return Err(Error::Backward(format!(
                        "node {i} ({}) depends on later node {}",
                        node.op.name(),
                        v.0
                    )));
                }
            }
            propagate(nodes, grads, i, &g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: format!("gradient of node {i}"),
                    });
                }
            }
        }
        Ok(())
    }
}

fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn acc_with(nodes: &[Node], grads: &mut [Option<Vec<f64>>], v: Var, f: impl Fn(usize) -> f64) {
    if let Some(buf) = acc(nodes, grads, v) {
        buf.iter_mut().enumerate().for_each(|(j, s)| *s += f(j));
    }
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], i: usize, g: &[f64]) {
    let node = &nodes[i];
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul { a, b, ta, tb, m, k, n } => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            if let Some(ga) = acc(nodes, grads, a) {
                if ta {
                    gemm(k, n, m, bv, tb, g, true, 1.0, ga);
                } else {
                    gemm(m, n, k, g, false, bv, !tb, 1.0, ga);
                }
            }
            if let Some(gb) = acc(nodes, grads, b) {
                if tb {
                    gemm(n, m, k, g, true, av, ta, 1.0, gb);
                } else {
                    gemm(k, m, n, av, !ta, g, false, 1.0, gb);
                }
            }
        }
        &Op::Add(a, b) => {
            acc_with(nodes, grads, a, |j| g[j]);
            acc_with(nodes, grads, b, |j| g[j]);
        }
        &Op::Sub(a, b) => {
            acc_with(nodes, grads, a, |j| g[j]);
            acc_with(nodes, grads, b, |j| -g[j]);
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            acc_with(nodes, grads, a, |j| g[j] * bv[j]);
            acc_with(nodes, grads, b, |j| g[j] * av[j]);
        }
        &Op::Scale(x, s) => acc_with(nodes, grads, x, |j| g[j] * s),
        &Op::AddBias { x, bias } => {
            acc_with(nodes, grads, x, |j| g[j]);
            if let Some(gb) = acc(nodes, grads, bias) {
                let d = gb.len();
                for row in g.chunks(d) {
                    gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                }
            }
        }
        &Op::AddChannelBias { x, bias, channels, len } => {
            acc_with(nodes, grads, x, |j| g[j]);
            if let Some(gb) = acc(nodes, grads, bias) {
                for (r, chunk) in g.chunks(len).enumerate() {
                    gb[r % channels] += chunk.iter().sum::<f64>();
                }
            }
        }
        &Op::Sigmoid(x) => acc_with(nodes, grads, x, |j| g[j] * out[j] * (1.0 - out[j])),
        &Op::Tanh(x) => acc_with(nodes, grads, x, |j| g[j] * (1.0 - out[j] * out[j])),
        &Op::Relu(x) => {
            let xv = &nodes[x.0].value;
            acc_with(nodes, grads, x, |j| if xv[j] > 0.0 { g[j] } else { 0.0 });
        }
        &Op::Sin(x) => {
            let xv = &nodes[x.0].value;
            acc_with(nodes, grads, x, |j| g[j] * xv[j].cos());
        }
        &Op::Reshape(x) => acc_with(nodes, grads, x, |j| g[j]),
        &Op::SliceLast { x, start, len } => {
            if let Some(gx) = acc(nodes, grads, x) {
                let d = *nodes[x.0].shape.last().unwrap();
                for (row_in, row_g) in gx.chunks_mut(d).zip(g.chunks(len)) {
                    row_in[start..start + len]
                        .iter_mut()
                        .zip(row_g)
                        .for_each(|(s, v)| *s += v);
                }
            }
        }
        Op::ConcatLast(xs) => {
            let widths: Vec<usize> = xs.iter().map(|x| *nodes[x.0].shape.last().unwrap()).collect();
            let total: usize = widths.iter().sum();
            let mut off = 0;
            for (&x, &w) in xs.iter().zip(&widths) {
                if let Some(gx) = acc(nodes, grads, x) {
                    for (row_x, row_g) in gx.chunks_mut(w).zip(g.chunks(total)) {
                        row_x
                            .iter_mut()
                            .zip(&row_g[off..off + w])
                            .for_each(|(s, v)| *s += v);
                    }
                }
                off += w;
            }
        }
        &Op::SwapLast2 { x, rows, cols } => {
            if let Some(gx) = acc(nodes, grads, x) {
                for (blk_x, blk_g) in gx.chunks_mut(rows * cols).zip(g.chunks(rows * cols)) {
                    for r in 0..rows {
                        for c in 0..cols {
                            blk_x[r * cols + c] += blk_g[c * rows + r];
                        }
                    }
                }
            }
        }
        &Op::Conv1d { x, w, win, batch, out_channels } => {
            let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
            let ck = win.channels * win.kernel;
            let (in_sz, out_sz) = (win.channels * win.long, out_channels * win.short);
            let mut cols = vec![0.0; ck * win.short];
            if let Some(gw) = acc(nodes, grads, w) {
                for b in 0..batch {
                    win.im2col(&xv[b * in_sz..(b + 1) * in_sz], &mut cols);
                    gemm(
                        out_channels,
                        win.short,
                        ck,
                        &g[b * out_sz..(b + 1) * out_sz],
                        false,
                        &cols,
                        true,
                        1.0,
                        gw,
                    );
                }
            }
            if let Some(gx) = acc(nodes, grads, x) {
                for b in 0..batch {
                    gemm(
                        ck,
                        out_channels,
                        win.short,
                        wv,
                        true,
                        &g[b * out_sz..(b + 1) * out_sz],
                        false,
                        0.0,
                        &mut cols,
                    );
                    win.col2im_add(&cols, &mut gx[b * in_sz..(b + 1) * in_sz]);
                }
            }
        }
        &Op::ConvT1d { x, w, win, batch, in_channels } => {
            let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
            let ck = win.channels * win.kernel;
            let (in_sz, out_sz) = (in_channels * win.short, win.channels * win.long);
            let need_w = nodes[w.0].requires_grad;
            let need_x = nodes[x.0].requires_grad;
            let mut dcols = vec![0.0; batch * ck * win.short];
            for (b, dc) in dcols.chunks_mut(ck * win.short).enumerate() {
                win.im2col(&g[b * out_sz..(b + 1) * out_sz], dc);
            }
            if need_x {
                let gx = acc(nodes, grads, x).unwrap();
                for b in 0..batch {
                    gemm(
                        in_channels,
                        ck,
                        win.short,
                        wv,
                        false,
                        &dcols[b * ck * win.short..(b + 1) * ck * win.short],
                        false,
                        1.0,
                        &mut gx[b * in_sz..(b + 1) * in_sz],
                    );
                }
            }
            if need_w {
                let gw = acc(nodes, grads, w).unwrap();
                for b in 0..batch {
                    gemm(
                        in_channels,
                        win.short,
                        ck,
                        &xv[b * in_sz..(b + 1) * in_sz],
                        false,
                        &dcols[b * ck * win.short..(b + 1) * ck * win.short],
                        true,
                        1.0,
                        gw,
                    );
                }
            }
        }
        Op::StackSteps(xs) => {
            let s = &node.shape;
            let (steps, d) = (s[1], s[2]);
            for (t, &x) in xs.iter().enumerate() {
                if let Some(gx) = acc(nodes, grads, x) {
                    for (b, row) in gx.chunks_mut(d).enumerate() {
                        let src = &g[(b * steps + t) * d..(b * steps + t + 1) * d];
                        row.iter_mut().zip(src).for_each(|(s, v)| *s += v);
                    }
                }
            }
        }
        &Op::StepRange { x, start, len } => {
            if let Some(gx) = acc(nodes, grads, x) {
                let s = &nodes[x.0].shape;
                let (steps, d) = (s[1], s[2]);
                for (b, blk) in g.chunks(len * d).enumerate() {
                    gx[(b * steps + start) * d..(b * steps + start + len) * d]
                        .iter_mut()
                        .zip(blk)
                        .for_each(|(s, v)| *s += v);
                }
            }
        }
        &Op::Repeat { x, times } | &Op::PositionScale { x, times } => {
            let scaled = matches!(node.op, Op::PositionScale { .. });
            if let Some(gx) = acc(nodes, grads, x) {
                let d = nodes[x.0].shape[1];
                for (b, row) in gx.chunks_mut(d).enumerate() {
                    for t in 0..times {
                        let k = if scaled { (t + 1) as f64 } else { 1.0 };
                        let src = &g[(b * times + t) * d..(b * times + t + 1) * d];
                        row.iter_mut().zip(src).for_each(|(s, v)| *s += k * v);
                    }
                }
            }
        }
        Op::LstmCell { xp, h, c, wh, b, gates, tanh_c } => {
            let (xp, h, c, wh, b) = (*xp, *h, *c, *wh, *b);
            let hs = &nodes[h.0].shape;
            let (batch, hid) = (hs[0], hs[1]);
            let g4 = 4 * hid;
            let cv = &nodes[c.0].value;
            let mut dz = vec![0.0; batch * g4];
            let mut dc_prev = vec![0.0; batch * hid];
            for bi in 0..batch {
                let gr = &gates[bi * g4..(bi + 1) * g4];
                let dzr = &mut dz[bi * g4..(bi + 1) * g4];
                for j in 0..hid {
                    let (i, f, gg, o) = (gr[j], gr[hid + j], gr[2 * hid + j], gr[3 * hid + j]);
                    let tc = tanh_c[bi * hid + j];
                    let dh = g[bi * 2 * hid + j];
                    let dc = g[bi * 2 * hid + hid + j] + dh * o * (1.0 - tc * tc);
                    dzr[j] = dc * gg * i * (1.0 - i);
                    dzr[hid + j] = dc * cv[bi * hid + j] * f * (1.0 - f);
                    dzr[2 * hid + j] = dc * i * (1.0 - gg * gg);
                    dzr[3 * hid + j] = dh * tc * o * (1.0 - o);
                    dc_prev[bi * hid + j] = dc * f;
                }
            }
            acc_with(nodes, grads, xp, |j| dz[j]);
            if let Some(gb) = acc(nodes, grads, b) {
                for row in dz.chunks(g4) {
                    gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                }
            }
            if let Some(gwh) = acc(nodes, grads, wh) {
                gemm(hid, batch, g4, &nodes[h.0].value, true, &dz, false, 1.0, gwh);
            }
            if let Some(gh) = acc(nodes, grads, h) {
                gemm(batch, g4, hid, &dz, false, &nodes[wh.0].value, true, 1.0, gh);
            }
            acc_with(nodes, grads, c, |j| dc_prev[j]);
        }
        &Op::Mean(x) => {
            let n = nodes[x.0].value.len() as f64;
            acc_with(nodes, grads, x, |_| g[0] / n);
        }
        Op::Bce { p, target } => {
            let pv = &nodes[p.0].value;
            let n = target.len() as f64;
            acc_with(nodes, grads, *p, |j| {
                let pc = pv[j].clamp(BCE_EPS, 1.0 - BCE_EPS);
                let t = target[j];
                g[0] * (-t / pc + (1.0 - t) / (1.0 - pc)) / n
            });
        }
        &Op::Mse(a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let n = av.len() as f64;
            acc_with(nodes, grads, a, |j| g[0] * 2.0 * (av[j] - bv[j]) / n);
            acc_with(nodes, grads, b, |j| -g[0] * 2.0 * (av[j] - bv[j]) / n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(&Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(&Tensor::scalar(0.0));
        let y = tape.sigmoid(x);
        assert_eq!(tape.scalar(y), 0.5);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.25]);
    }

    #[test]
    fn second_backward_requires_reset() {
        let mut tape = Tape::new();
        let x = tape.param(&Tensor::scalar(2.0));
        let y = tape.mul(x, x).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Backward(_))));
        tape.reset_grads();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(&Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(&Tensor::scalar(2.0));
        let c = tape.constant(vec![1], vec![5.0]).unwrap();
        let y = tape.mul(x, c).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[5.0]);
        assert!(tape.grad(c).is_none());
    }

    #[test]
    fn shape_errors_name_dimension() {
        let mut tape = Tape::new();
        let x = tape.zeros(&[2, 3, 10]);
        let w = tape.zeros(&[4, 5, 3]);
        let err = tape.conv1d(x, w, 1, 0).unwrap_err();
        assert!(err.to_string().contains("in_channels"), "{err}");
        let a = tape.zeros(&[2, 3]);
        let b = tape.zeros(&[4, 2]);
        assert!(tape.matmul(a, b).unwrap_err().to_string().contains("inner"));
    }

    #[test]
    fn conv_output_lengths() {
        let mut tape = Tape::new();
        let x = tape.zeros(&[1, 2, 64]);
        let w = tape.zeros(&[3, 2, 4]);
        let y = tape.conv1d(x, w, 2, 1).unwrap();
        assert_eq!(tape.shape(y), &[1, 3, 32]);
        let y = tape.conv1d(x, w, 2, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 3, 31]);
        let x = tape.zeros(&[1, 2, 5]);
        let w = tape.zeros(&[3, 2, 1]);
        let y = tape.conv1d(x, w, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 3, 5]);
        let x = tape.zeros(&[1, 3, 32]);
        let w = tape.zeros(&[3, 8, 4]);
        let y = tape.conv_transpose1d(x, w, 2, 1).unwrap();
        assert_eq!(tape.shape(y), &[1, 8, 64]);
    }
}
