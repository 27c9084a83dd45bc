//! Reverse-mode differentiation over an append-only graph.
//!
//! Nodes are appended in evaluation order, which is a topological order, so
//! [`Graph::backward`] is a single reverse sweep visiting each node once.
//! Gradients of complex nodes use the convention `∂L/∂Re + i ∂L/∂Im`;
//! gradients flowing into real nodes keep only the real part.

use alloc::vec;
use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::fft;
use crate::math;
use crate::tensor::{numel, require_real, strides, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Gelu,
    Square,
    Negate,
    Sqrt,
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

/// Boundary handling for [`Graph::conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Padding {
    #[default]
    SameZero,
    Periodic,
}

/// Axis pairing for [`Graph::contract`].
///
/// The first `batch` axes of both operands are shared batch axes and must
/// agree. Each `(i, j)` in `pairs` sums axis `i` of the left operand against
/// axis `j` of the right. The result is laid out as
/// `batch ++ free(left) ++ free(right)`, free axes in their original order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractSpec {
    pub batch: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl ContractSpec {
    pub fn new(batch: usize, pairs: &[(usize, usize)]) -> Self {
        ContractSpec { batch, pairs: pairs.to_vec() }
    }

    /// Plain matrix product `[m, k] x [k, n]`.
    pub fn matmul() -> Self {
        ContractSpec::new(0, &[(1, 0)])
    }
}

#[derive(Debug, Clone)]
struct ContractPlan {
    perm_a: Vec<usize>,
    perm_b: Vec<usize>,
    /// Operand stored as `[batch, k, m]` (A) or `[batch, n, k]` (B), read in place.
    trans_a: bool,
    trans_b: bool,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    out_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
struct HermitianLayout {
    rows: usize,
    /// For each output mode: real-row, optional (imag-row, sign).
    map: Vec<(usize, Option<(usize, f64)>)>,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Unary(Var, Unary),
    Binary(Var, Var, Binary, Option<Vec<usize>>),
    Contract(Var, Var, ContractPlan),
    Dft(Var, Vec<usize>),
    Idft(Var, Vec<usize>),
    ResizeSpectrum(Var, Vec<usize>),
    Real(Var),
    Conv2d(Var, Var, Padding),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Narrow(Var, usize, usize),
    Concat(Vec<Var>, usize),
    Roll(Var, usize, isize),
    Sum(Var),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    Hermitian(Var, HermitianLayout),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Values and recorded operations of one differentiable computation.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` does not influence the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GeLU: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + math::tanh(GELU_C * (x + GELU_A * x * x * x)))
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = math::tanh(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    // ----- pointwise -----

    pub fn unary(&mut self, x: Var, kind: Unary) -> Result<Var> {
        let t = self.value(x);
        require_real(t, "pointwise unary op")?;
        let out = match kind {
            Unary::Gelu => t.map(gelu),
            Unary::Square => t.map(|v| v * v),
            Unary::Negate => t.map(|v| -v),
            Unary::Sqrt => {
                if t.data().iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidDomain("sqrt of a negative value".into()));
                }
                t.map(math::sqrt)
            }
            Unary::Scale(s) => t.map(|v| v * s),
        };
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Unary(x, kind), rg))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Gelu)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Square)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Negate)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sqrt)
    }

    /// Multiplies by a real constant; accepts complex inputs.
    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let out = self.value(x).scale(s);
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Unary(x, Unary::Scale(s)), rg))
    }

    /// Elementwise `a ∘ b` where `b` may broadcast against `a` with numpy
    /// rules aligned at the trailing axis (`b` extents equal or 1).
    pub fn binary(&mut self, a: Var, b: Var, kind: Binary) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let map = broadcast_map(ta.shape(), tb.shape())?;
        let bi = |i: usize| map.as_ref().map_or(i, |m| m[i]);
        let n = ta.len();
        let (ar, br) = (ta.data(), tb.data());
        let complex = ta.is_complex() || tb.is_complex();
        let out = if !complex {
            let re: Vec<f64> = (0..n)
                .map(|i| match kind {
                    Binary::Add => ar[i] + br[bi(i)],
                    Binary::Sub => ar[i] - br[bi(i)],
                    Binary::Mul => ar[i] * br[bi(i)],
                })
                .collect();
            Tensor::from_parts(ta.shape().to_vec(), re, None)
        } else {
            let zero_a = vec![0.0; if ta.is_complex() { 0 } else { n }];
            let zero_b = vec![0.0; if tb.is_complex() { 0 } else { tb.len() }];
            let ai = ta.imag().unwrap_or(&zero_a);
            let bim = tb.imag().unwrap_or(&zero_b);
            let mut re = Vec::with_capacity(n);
            let mut im = Vec::with_capacity(n);
            for i in 0..n {
                let j = bi(i);
                let (r, m) = match kind {
                    Binary::Add => (ar[i] + br[j], ai[i] + bim[j]),
                    Binary::Sub => (ar[i] - br[j], ai[i] - bim[j]),
                    Binary::Mul => (ar[i] * br[j] - ai[i] * bim[j], ar[i] * bim[j] + ai[i] * br[j]),
                };
                re.push(r);
                im.push(m);
            }
            Tensor::from_parts(ta.shape().to_vec(), re, Some(im))
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Binary(a, b, kind, map), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    // ----- linear algebra -----

    /// Generalized (batched) tensor contraction, see [`ContractSpec`].
    pub fn contract(&mut self, a: Var, b: Var, spec: &ContractSpec) -> Result<Var> {
        let plan = contract_plan(self.shape(a), self.shape(b), spec)?;
        let out = contract_forward(self.value(a), self.value(b), &plan);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Contract(a, b, plan), rg))
    }

    // ----- spectral -----

    /// Forward transform over `axes` with `1/n` per axis; the result is complex.
    pub fn dft(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let out = fft::dft(self.value(x), axes)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Dft(x, axes.to_vec()), rg))
    }

    /// Evaluates a spectrum (FFT order) at `out_sizes` points per axis.
    pub fn idft(&mut self, c: Var, axes: &[usize], out_sizes: &[usize]) -> Result<Var> {
        let out = fft::idft(self.value(c), axes, out_sizes)?;
        let rg = self.rg(&[c]);
        Ok(self.push(out, Op::Idft(c, axes.to_vec()), rg))
    }

    /// Pads or truncates a spectrum along `axes`.
    pub fn resize_spectrum(&mut self, c: Var, axes: &[usize], out_sizes: &[usize]) -> Result<Var> {
        let out = fft::resize_spectrum(self.value(c), axes, out_sizes)?;
        let rg = self.rg(&[c]);
        Ok(self.push(out, Op::ResizeSpectrum(c, axes.to_vec()), rg))
    }

    /// Keeps modes `|k| <= k_max` per axis (extent `2 k_max + 1`, FFT order).
    pub fn truncate_modes(&mut self, c: Var, axes: &[usize], k_max: usize) -> Result<Var> {
        let out = fft::truncate_modes(self.value(c), axes, k_max)?;
        let rg = self.rg(&[c]);
        Ok(self.push(out, Op::ResizeSpectrum(c, axes.to_vec()), rg))
    }

    pub fn real(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).real_part();
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Real(x), rg))
    }

    /// Builds a conjugate-symmetric complex weight tensor `[dims..., rest...]`
    /// from a real parameter tensor `[prod(dims), rest...]`.
    ///
    /// Row 0 holds the real zero-mode value; the `p`-th mode of the positive
    /// half (first nonzero wavenumber positive, flat FFT order) owns rows
    /// `2p-1` (real) and `2p` (imaginary). Its mirror `-k` is the conjugate.
    pub fn hermitian_expand(&mut self, p: Var, dims: &[usize]) -> Result<Var> {
        let t = self.value(p);
        require_real(t, "hermitian_expand")?;
        if dims.iter().any(|d| d % 2 == 0) {
            return Err(shape_err!("hermitian layout needs odd extents, got {dims:?}"));
        }
        let rows = numel(dims);
        if t.shape()[0] != rows {
            return Err(shape_err!("parameter has {} rows, layout {dims:?} needs {rows}", t.shape()[0]));
        }
        let layout = hermitian_layout(dims);
        let inner: usize = t.shape()[1..].iter().product();
        let src = t.data();
        let mut re = vec![0.0; rows * inner];
        let mut im = vec![0.0; rows * inner];
        for (o, &(rr, imag)) in layout.map.iter().enumerate() {
            re[o * inner..(o + 1) * inner].copy_from_slice(&src[rr * inner..(rr + 1) * inner]);
            if let Some((ir, sign)) = imag {
                for i in 0..inner {
                    im[o * inner + i] = sign * src[ir * inner + i];
                }
            }
        }
        let mut shape = dims.to_vec();
        shape.extend_from_slice(&t.shape()[1..]);
        let out = Tensor::from_parts(shape, re, Some(im));
        let rg = self.rg(&[p]);
        Ok(self.push(out, Op::Hermitian(p, layout), rg))
    }

    // ----- convolution -----

    /// Cross-correlation of `x: [c_in, H, W]` with `kernel: [c_out, c_in, kh, kw]`,
    /// preserving `H, W`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, padding: Padding) -> Result<Var> {
        let (tx, tk) = (self.value(x), self.value(kernel));
        require_real(tx, "conv2d")?;
        require_real(tk, "conv2d")?;
        if tx.ndim() != 3 || tk.ndim() != 4 || tk.shape()[1] != tx.shape()[0] {
            return Err(shape_err!("conv2d: input {:?} vs kernel {:?}", tx.shape(), tk.shape()));
        }
        let (kh, kw) = (tk.shape()[2], tk.shape()[3]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Invalid(alloc::format!("conv2d kernel extents must be odd, got {kh}x{kw}")));
        }
        let out = conv2d_forward(tx, tk, padding);
        let rg = self.rg(&[x, kernel]);
        Ok(self.push(out, Op::Conv2d(x, kernel, padding), rg))
    }

    // ----- structure -----

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let out = self.value(x).permute(perm)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Permute(x, perm.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).narrow(axis, start, len)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Narrow(x, axis, start), rg))
    }

    /// Joins tensors that agree on every axis except `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.value(*parts.first().ok_or_else(|| shape_err!("concat of nothing"))?);
        if axis >= first.ndim() {
            return Err(shape_err!("concat axis {axis} out of range"));
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        let complex = parts.iter().any(|p| self.value(*p).is_complex());
        for &p in parts {
            let t = self.value(p);
            let ok = t.ndim() == shape.len()
                && t.shape().iter().enumerate().all(|(i, &e)| i == axis || e == shape[i]);
            if !ok {
                return Err(shape_err!("concat: incompatible shape {:?}", t.shape()));
            }
            shape[axis] += t.shape()[axis];
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut re = Vec::with_capacity(numel(&shape));
        let mut im = Vec::with_capacity(if complex { numel(&shape) } else { 0 });
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let w = t.shape()[axis] * inner;
                re.extend_from_slice(&t.data()[o * w..(o + 1) * w]);
                if complex {
                    match t.imag() {
                        Some(v) => im.extend_from_slice(&v[o * w..(o + 1) * w]),
                        None => im.extend(core::iter::repeat_n(0.0, w)),
                    }
                }
            }
        }
        let out = Tensor::from_parts(shape, re, complex.then_some(im));
        let rg = self.rg(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Cyclic shift: `out[i] = x[(i - shift) mod n]` along `axis`.
    pub fn roll(&mut self, x: Var, axis: usize, shift: isize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.ndim() {
            return Err(shape_err!("roll axis {axis} out of range for {:?}", t.shape()));
        }
        let out = roll_tensor(t, axis, shift);
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Roll(x, axis, shift), rg))
    }

    /// Sum of all entries (real part) as a shape-`[1]` scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        require_real(t, "sum")?;
        let out = Tensor::scalar(t.sum());
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Sum(x), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Selects rows (axis 0) by index, repeats allowed.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let n = t.shape()[0];
        if index.is_empty() || index.iter().any(|&i| i >= n) {
            return Err(shape_err!("gather_rows: index out of range for {n} rows"));
        }
        let w = t.len() / n;
        let pick = |plane: &[f64]| {
            let mut out = Vec::with_capacity(index.len() * w);
            for &i in index {
                out.extend_from_slice(&plane[i * w..(i + 1) * w]);
            }
            out
        };
        let mut shape = t.shape().to_vec();
        shape[0] = index.len();
        let out = Tensor::from_parts(shape, pick(t.data()), t.imag().map(pick));
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::GatherRows(x, index.to_vec()), rg))
    }

    /// Sums rows of `x` into `n_out` buckets: row `p` goes to `segment[p]`.
    pub fn segment_sum(&mut self, x: Var, segment: &[usize], n_out: usize) -> Result<Var> {
        let t = self.value(x);
        require_real(t, "segment_sum")?;
        if segment.len() != t.shape()[0] || segment.iter().any(|&s| s >= n_out) || n_out == 0 {
            return Err(shape_err!("segment_sum: {} segment ids for {:?}", segment.len(), t.shape()));
        }
        let w = t.len() / t.shape()[0];
        let mut re = vec![0.0; n_out * w];
        for (p, &s) in segment.iter().enumerate() {
            for i in 0..w {
                re[s * w + i] += t.data()[p * w + i];
            }
        }
        let mut shape = t.shape().to_vec();
        shape[0] = n_out;
        let out = Tensor::from_parts(shape, re, None);
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SegmentSum(x, segment.to_vec()), rg))
    }

    // ----- reverse sweep -----

    /// Adjoints of every node influencing the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 || lv.is_complex() {
            return Err(Error::Contract(alloc::format!("backward needs a real scalar loss, got shape {:?}", lv.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(lv.shape(), vec![1.0]).unwrap());
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let keep = matches!(node.op, Op::Leaf);
            let g = match if keep { grads[i].clone() } else { grads[i].take() } {
                Some(g) => g,
                None => continue,
            };
            self.propagate(&node.op, &node.value, g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let g = if node.value.is_complex() { g } else if g.is_complex() { g.real_part() } else { g };
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match op {
            Op::Leaf | Op::Constant => {}
            Op::Unary(x, kind) => {
                let xv = self.value(*x);
                let gx = match kind {
                    Unary::Gelu => zip_map(&g, xv, |gi, xi| gi * gelu_grad(xi)),
                    Unary::Square => zip_map(&g, xv, |gi, xi| 2.0 * gi * xi),
                    Unary::Negate => g.scale(-1.0),
                    Unary::Sqrt => zip_map(&g, out, |gi, yi| if yi > 0.0 { 0.5 * gi / yi } else { 0.0 }),
                    Unary::Scale(s) => g.scale(*s),
                };
                self.accumulate(grads, *x, gx);
            }
            Op::Binary(a, b, kind, map) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (ga, gb_full) = match kind {
                    Binary::Add => (g.clone(), g),
                    Binary::Sub => (g.clone(), g.scale(-1.0)),
                    Binary::Mul => {
                        let bb = broadcast_to(tb, ta.shape(), map.as_deref());
                        (mul_conj(&g, &bb), mul_conj(&g, ta))
                    }
                };
                self.accumulate(grads, *a, ga);
                if self.nodes[b.0].requires_grad {
                    let gb = reduce_broadcast(&gb_full, tb.shape(), map.as_deref());
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Contract(a, b, plan) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (ga, gb) = contract_backward(ta, tb, &g, plan);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Dft(x, axes) => {
                // adjoint of (1/N) Σ x e^{-iθ} is (1/N) Σ g e^{+iθ}
                let gx = fft::fft_axes(&g, axes, true, true)?;
                self.accumulate(grads, *x, gx);
            }
            Op::Idft(c, axes) => {
                let in_shape = self.value(*c).shape().to_vec();
                let gp = fft::fft_axes(&g, axes, false, false)?;
                let gc = fft::resize_spectrum_adjoint(&gp, &in_shape, axes);
                self.accumulate(grads, *c, gc);
            }
            Op::ResizeSpectrum(c, axes) => {
                let in_shape = self.value(*c).shape().to_vec();
                let gc = fft::resize_spectrum_adjoint(&g, &in_shape, axes);
                self.accumulate(grads, *c, gc);
            }
            Op::Real(x) => self.accumulate(grads, *x, g.real_part()),
            Op::Hermitian(p, layout) => {
                let pv = self.value(*p);
                let inner: usize = pv.shape()[1..].iter().product();
                let zeros = vec![0.0; g.len()];
                let (gr, gi) = (g.data(), g.imag().unwrap_or(&zeros));
                let mut gp = vec![0.0; layout.rows * inner];
                for (o, &(rr, imag)) in layout.map.iter().enumerate() {
                    for i in 0..inner {
                        gp[rr * inner + i] += gr[o * inner + i];
                        if let Some((ir, sign)) = imag {
                            gp[ir * inner + i] += sign * gi[o * inner + i];
                        }
                    }
                }
                self.accumulate(grads, *p, Tensor::from_parts(pv.shape().to_vec(), gp, None));
            }
            Op::Conv2d(x, k, padding) => {
                let (gx, gk) = conv2d_backward(self.value(*x), self.value(*k), &g, *padding);
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *k, gk);
            }
            Op::Permute(x, perm) => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                self.accumulate(grads, *x, g.permute(&inv)?);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.reshape(&shape)?);
            }
            Op::Narrow(x, axis, start) => {
                let xs = self.value(*x).shape();
                let gx = pad_axis(&g, xs, *axis, *start);
                self.accumulate(grads, *x, gx);
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).shape()[*axis];
                    if self.nodes[p.0].requires_grad {
                        self.accumulate(grads, p, g.narrow(*axis, offset, len)?);
                    }
                    offset += len;
                }
            }
            Op::Roll(x, axis, shift) => self.accumulate(grads, *x, roll_tensor(&g, *axis, -*shift)),
            Op::Sum(x) => {
                let xs = self.value(*x).shape();
                self.accumulate(grads, *x, Tensor::full(xs, g.item()));
            }
            Op::GatherRows(x, index) => {
                let xv = self.value(*x);
                let w = xv.len() / xv.shape()[0];
                let mut re = vec![0.0; xv.len()];
                let mut im = g.imag().map(|_| vec![0.0; xv.len()]);
                for (r, &i) in index.iter().enumerate() {
                    for c in 0..w {
                        re[i * w + c] += g.data()[r * w + c];
                        if let (Some(im), Some(gi)) = (im.as_mut(), g.imag()) {
                            im[i * w + c] += gi[r * w + c];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), re, im));
            }
            Op::SegmentSum(x, segment) => {
                let xv = self.value(*x);
                let w = xv.len() / xv.shape()[0];
                let mut re = Vec::with_capacity(xv.len());
                for &s in segment {
                    re.extend_from_slice(&g.data()[s * w..(s + 1) * w]);
                }
                self.accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), re, None));
            }
        }
        Ok(())
    }
}

fn zip_map(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let re = g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::from_parts(g.shape().to_vec(), re, None)
}

/// `g * conj(x)` elementwise, shapes equal.
fn mul_conj(g: &Tensor, x: &Tensor) -> Tensor {
    match (g.imag(), x.imag()) {
        (None, None) => zip_map(g, x, |a, b| a * b),
        _ => {
            let n = g.len();
            let z = vec![0.0; n];
            let (gr, gi) = (g.data(), g.imag().unwrap_or(&z));
            let (xr, xi) = (x.data(), x.imag().unwrap_or(&z));
            let re = (0..n).map(|i| gr[i] * xr[i] + gi[i] * xi[i]).collect();
            let im = (0..n).map(|i| gi[i] * xr[i] - gr[i] * xi[i]).collect();
            Tensor::from_parts(g.shape().to_vec(), re, Some(im))
        }
    }
}

/// Index of `b` for every flat index of `a`, or `None` when shapes are equal.
fn broadcast_map(a: &[usize], b: &[usize]) -> Result<Option<Vec<usize>>> {
    if a == b {
        return Ok(None);
    }
    if b.len() > a.len() {
        return Err(shape_err!("cannot broadcast {b:?} onto {a:?}"));
    }
    let off = a.len() - b.len();
    for (i, &e) in b.iter().enumerate() {
        if e != 1 && e != a[off + i] {
            return Err(shape_err!("cannot broadcast {b:?} onto {a:?}"));
        }
    }
    let bs = strides(b);
    let eff: Vec<usize> = (0..a.len())
        .map(|i| if i < off || b[i - off] == 1 { 0 } else { bs[i - off] })
        .collect();
    let mut idx = vec![0usize; a.len()];
    let mut map = Vec::with_capacity(numel(a));
    let mut offset = 0;
    for _ in 0..numel(a) {
        map.push(offset);
        for ax in (0..a.len()).rev() {
            idx[ax] += 1;
            offset += eff[ax];
            if idx[ax] < a[ax] {
                break;
            }
            offset -= eff[ax] * a[ax];
            idx[ax] = 0;
        }
    }
    Ok(Some(map))
}

fn broadcast_to(b: &Tensor, shape: &[usize], map: Option<&[usize]>) -> Tensor {
    match map {
        None => b.clone(),
        Some(m) => {
            let re = m.iter().map(|&j| b.data()[j]).collect();
            let im = b.imag().map(|v| m.iter().map(|&j| v[j]).collect());
            Tensor::from_parts(shape.to_vec(), re, im)
        }
    }
}

fn reduce_broadcast(g: &Tensor, b_shape: &[usize], map: Option<&[usize]>) -> Tensor {
    match map {
        None => g.clone(),
        Some(m) => {
            let n = numel(b_shape);
            let mut re = vec![0.0; n];
            let mut im = g.imag().map(|_| vec![0.0; n]);
            for (i, &j) in m.iter().enumerate() {
                re[j] += g.data()[i];
                if let (Some(im), Some(gi)) = (im.as_mut(), g.imag()) {
                    im[j] += gi[i];
                }
            }
            Tensor::from_parts(b_shape.to_vec(), re, im)
        }
    }
}

fn contract_plan(sa: &[usize], sb: &[usize], spec: &ContractSpec) -> Result<ContractPlan> {
    let nb = spec.batch;
    if nb > sa.len() || nb > sb.len() || sa[..nb] != sb[..nb] {
        return Err(shape_err!("contract: batch axes of {sa:?} and {sb:?} differ"));
    }
    let mut used_a = vec![false; sa.len()];
    let mut used_b = vec![false; sb.len()];
    for &(i, j) in &spec.pairs {
        if i < nb || j < nb || i >= sa.len() || j >= sb.len() || used_a[i] || used_b[j] {
            return Err(shape_err!("contract: invalid pairing {:?} for {sa:?} x {sb:?}", spec.pairs));
        }
        if sa[i] != sb[j] {
            return Err(shape_err!("contract: paired extents {} (axis {i}) and {} (axis {j}) differ", sa[i], sb[j]));
        }
        used_a[i] = true;
        used_b[j] = true;
    }
    let free_a: Vec<usize> = (nb..sa.len()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (nb..sb.len()).filter(|&j| !used_b[j]).collect();
    let mut perm_a: Vec<usize> = (0..nb).collect();
    perm_a.extend(&free_a);
    perm_a.extend(spec.pairs.iter().map(|p| p.0));
    let mut perm_b: Vec<usize> = (0..nb).collect();
    perm_b.extend(spec.pairs.iter().map(|p| p.1));
    perm_b.extend(&free_b);
    let batch: usize = sa[..nb].iter().product();
    let m: usize = free_a.iter().map(|&i| sa[i]).product();
    let k: usize = spec.pairs.iter().map(|p| sa[p.0]).product();
    let n: usize = free_b.iter().map(|&j| sb[j]).product();
    let mut out_shape: Vec<usize> = sa[..nb].to_vec();
    out_shape.extend(free_a.iter().map(|&i| sa[i]));
    out_shape.extend(free_b.iter().map(|&j| sb[j]));
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    // Operands whose axes are already grouped as [batch, k, free] are read
    // through swapped strides instead of being copied.
    let mut swapped_a: Vec<usize> = (0..nb).collect();
    swapped_a.extend(spec.pairs.iter().map(|p| p.0));
    swapped_a.extend(&free_a);
    let mut swapped_b: Vec<usize> = (0..nb).collect();
    swapped_b.extend(&free_b);
    swapped_b.extend(spec.pairs.iter().map(|p| p.1));
    let trans_a = !is_identity(&perm_a) && is_identity(&swapped_a);
    let trans_b = !is_identity(&perm_b) && is_identity(&swapped_b);
    Ok(ContractPlan { perm_a, perm_b, trans_a, trans_b, batch, m, k, n, out_shape })
}

fn is_identity(p: &[usize]) -> bool {
    p.iter().enumerate().all(|(i, &v)| i == v)
}

/// Strided view of a batch of matrices; `conj` negates the imaginary part.
#[derive(Clone, Copy)]
struct MatView<'a> {
    re: &'a [f64],
    im: Option<&'a [f64]>,
    bs: usize,
    rs: usize,
    cs: usize,
    conj: bool,
}

impl<'a> MatView<'a> {
    fn of(t: &'a Tensor, rows: usize, cols: usize, transposed: bool) -> Self {
        let (rs, cs) = if transposed { (1, rows) } else { (cols, 1) };
        MatView { re: t.data(), im: t.imag(), bs: rows * cols, rs, cs, conj: false }
    }

    fn t(self) -> Self {
        MatView { rs: self.cs, cs: self.rs, ..self }
    }

    fn h(self) -> Self {
        MatView { conj: !self.conj, ..self.t() }
    }

    fn c(self) -> Self {
        MatView { conj: !self.conj, ..self }
    }
}

/// Copies a view into contiguous storage with the given row/column strides.
fn pack<'a>(v: MatView, batch: usize, rows: usize, cols: usize, row_major: bool, store: &'a mut (Vec<f64>, Option<Vec<f64>>)) -> MatView<'a> {
    let copy = |src: &[f64]| {
        let mut out = Vec::with_capacity(batch * rows * cols);
        for bi in 0..batch {
            let base = bi * v.bs;
            if row_major {
                for r in 0..rows {
                    out.extend((0..cols).map(|c| src[base + r * v.rs + c * v.cs]));
                }
            } else {
                for c in 0..cols {
                    out.extend((0..rows).map(|r| src[base + r * v.rs + c * v.cs]));
                }
            }
        }
        out
    };
    *store = (copy(v.re), v.im.map(copy));
    let (rs, cs) = if row_major { (cols, 1) } else { (1, rows) };
    MatView { re: &store.0, im: store.1.as_deref(), bs: rows * cols, rs, cs, conj: v.conj }
}

/// Batched `C[b] = A[b] · B[b]` with `A` viewed `[m, k]` and `B` `[k, n]`;
/// `C` is contiguous `[batch, m, n]`.
fn gemm(a: MatView, b: MatView, batch: usize, m: usize, k: usize, n: usize) -> (Vec<f64>, Option<Vec<f64>>) {
    let complex = a.im.is_some() || b.im.is_some();
    let mut re = vec![0.0; batch * m * n];
    let mut im = if complex { vec![0.0; batch * m * n] } else { Vec::new() };
    let sa = if a.conj { -1.0 } else { 1.0 };
    let sb = if b.conj { -1.0 } else { 1.0 };
    let (mut store_a, mut store_b) = ((Vec::new(), None), (Vec::new(), None));
    if n >= 8 {
        // rank-one updates along contiguous rows of B
        let b = if b.cs == 1 { b } else { pack(b, batch, k, n, true, &mut store_b) };
        for bi in 0..batch {
            let (ao, bo, co) = (bi * a.bs, bi * b.bs, bi * m * n);
            for i in 0..m {
                let crow = co + i * n;
                for p in 0..k {
                    let ai_ = ao + i * a.rs + p * a.cs;
                    let ar = a.re[ai_];
                    let ai = a.im.map_or(0.0, |v| sa * v[ai_]);
                    if ar == 0.0 && ai == 0.0 {
                        continue;
                    }
                    let brow = bo + p * b.rs;
                    let br = &b.re[brow..brow + n];
                    let cr = &mut re[crow..crow + n];
                    for j in 0..n {
                        cr[j] += ar * br[j];
                    }
                    if complex {
                        let ci = &mut im[crow..crow + n];
                        match b.im {
                            Some(bim) => {
                                let bim = &bim[brow..brow + n];
                                for j in 0..n {
                                    let bij = sb * bim[j];
                                    cr[j] -= ai * bij;
                                    ci[j] += ar * bij + ai * br[j];
                                }
                            }
                            None => {
                                for j in 0..n {
                                    ci[j] += ai * br[j];
                                }
                            }
                        }
                    }
                }
            }
        }
        return (re, complex.then_some(im));
    }
    // few output columns: dot products over contiguous k
    let a = if a.cs == 1 { a } else { pack(a, batch, m, k, true, &mut store_a) };
    let b = if b.rs == 1 { b } else { pack(b, batch, k, n, false, &mut store_b) };
    let zeros = vec![0.0; k];
    for bi in 0..batch {
        let (ao, bo, co) = (bi * a.bs, bi * b.bs, bi * m * n);
        for i in 0..m {
            let ra = ao + i * a.rs;
            let (xr, xi) = (&a.re[ra..ra + k], a.im.map_or(&zeros[..], |v| &v[ra..ra + k]));
            for j in 0..n {
                let rb = bo + j * b.cs;
                let yr = &b.re[rb..rb + k];
                re[co + i * n + j] = dot(xr, yr);
                if complex {
                    let yi = b.im.map_or(&zeros[..], |v| &v[rb..rb + k]);
                    re[co + i * n + j] -= sa * sb * dot(xi, yi);
                    im[co + i * n + j] = sb * dot(xr, yi) + sa * dot(xi, yr);
                }
            }
        }
    }
    (re, complex.then_some(im))
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (u, v) in xc.zip(yc) {
        for l in 0..4 {
            acc[l] += u[l] * v[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn contract_operands<'a>(a: &'a Tensor, b: &'a Tensor, plan: &ContractPlan) -> (Cow<'a, Tensor>, Cow<'a, Tensor>) {
    let arrange = |t: &'a Tensor, perm: &[usize], trans: bool| {
        if trans || is_identity(perm) {
            Cow::Borrowed(t)
        } else {
            Cow::Owned(t.permute(perm).expect("plan permutation"))
        }
    };
    (arrange(a, &plan.perm_a, plan.trans_a), arrange(b, &plan.perm_b, plan.trans_b))
}

fn contract_forward(a: &Tensor, b: &Tensor, plan: &ContractPlan) -> Tensor {
    let ContractPlan { batch, m, k, n, trans_a, trans_b, .. } = *plan;
    let (ap, bp) = contract_operands(a, b, plan);
    let va = MatView::of(&ap, m, k, trans_a);
    let vb = MatView::of(&bp, k, n, trans_b);
    let (re, im) = gemm(va, vb, batch, m, k, n);
    Tensor::from_parts(plan.out_shape.clone(), re, im)
}

fn contract_backward(a: &Tensor, b: &Tensor, g: &Tensor, plan: &ContractPlan) -> (Tensor, Tensor) {
    let ContractPlan { batch, m, k, n, trans_a, trans_b, .. } = *plan;
    let (ap, bp) = contract_operands(a, b, plan);
    let va = MatView::of(&ap, m, k, trans_a);
    let vb = MatView::of(&bp, k, n, trans_b);
    let vg = MatView::of(g, m, n, false);
    // gA = G · B^H, gB = A^H · G; produced directly in each operand's storage layout
    let ga = if trans_a { gemm(vb.c(), vg.t(), batch, k, n, m) } else { gemm(vg, vb.h(), batch, m, n, k) };
    let gb = if trans_b { gemm(vg.t(), va.c(), batch, n, m, k) } else { gemm(va.h(), vg, batch, k, m, n) };
    let restore = |(re, im): (Vec<f64>, Option<Vec<f64>>), perm: &[usize], trans: bool, orig: &Tensor| {
        if trans {
            return Tensor::from_parts(orig.shape().to_vec(), re, im);
        }
        let pshape: Vec<usize> = perm.iter().map(|&p| orig.shape()[p]).collect();
        let t = Tensor::from_parts(pshape, re, im);
        if is_identity(perm) {
            t
        } else {
            let mut inv = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            t.permute(&inv).expect("inverse permutation")
        }
    };
    (restore(ga, &plan.perm_a, trans_a, a), restore(gb, &plan.perm_b, trans_b, b))
}

fn hermitian_layout(dims: &[usize]) -> HermitianLayout {
    let rows = numel(dims);
    let st = strides(dims);
    let waves = |flat: usize| -> Vec<i64> {
        dims.iter().zip(&st).map(|(&d, &s)| math::wavenumber((flat / s) % d, d)).collect()
    };
    let flat_of = |ks: &[i64]| -> usize {
        ks.iter().zip(dims.iter().zip(&st)).map(|(&k, (&d, &s))| (k.rem_euclid(d as i64) as usize) * s).sum()
    };
    let positive = |ks: &[i64]| ks.iter().find(|&&k| k != 0).is_some_and(|&k| k > 0);
    let mut half_rank = vec![usize::MAX; rows];
    let mut p = 0;
    for (flat, rank) in half_rank.iter_mut().enumerate() {
        if positive(&waves(flat)) {
            p += 1;
            *rank = p;
        }
    }
    let map = (0..rows)
        .map(|flat| {
            let ks = waves(flat);
            if ks.iter().all(|&k| k == 0) {
                (0, None)
            } else if positive(&ks) {
                let r = half_rank[flat];
                (2 * r - 1, Some((2 * r, 1.0)))
            } else {
                let neg: Vec<i64> = ks.iter().map(|k| -k).collect();
                let r = half_rank[flat_of(&neg)];
                (2 * r - 1, Some((2 * r, -1.0)))
            }
        })
        .collect();
    HermitianLayout { rows, map }
}

fn conv_index(i: isize, n: usize, padding: Padding) -> Option<usize> {
    if i >= 0 && (i as usize) < n {
        Some(i as usize)
    } else {
        match padding {
            Padding::SameZero => None,
            Padding::Periodic => Some(i.rem_euclid(n as isize) as usize),
        }
    }
}

fn conv2d_forward(x: &Tensor, k: &Tensor, padding: Padding) -> Tensor {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![0.0; co * h * w];
    for o in 0..co {
        for c in 0..ci {
            for dy in 0..kh {
                for dx in 0..kw {
                    let kv = kd[((o * ci + c) * kh + dy) * kw + dx];
                    if kv == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let Some(sy) = conv_index(y as isize + dy as isize - ph, h, padding) else { continue };
                        let orow = (o * h + y) * w;
                        let irow = (c * h + sy) * w;
                        for xx in 0..w {
                            if let Some(sx) = conv_index(xx as isize + dx as isize - pw, w, padding) {
                                out[orow + xx] += kv * xd[irow + sx];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![co, h, w], out, None)
}

fn conv2d_backward(x: &Tensor, k: &Tensor, g: &Tensor, padding: Padding) -> (Tensor, Tensor) {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let (xd, kd, gd) = (x.data(), k.data(), g.data());
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    for o in 0..co {
        for c in 0..ci {
            for dy in 0..kh {
                for dx in 0..kw {
                    let kidx = ((o * ci + c) * kh + dy) * kw + dx;
                    let kv = kd[kidx];
                    let mut acc = 0.0;
                    for y in 0..h {
                        let Some(sy) = conv_index(y as isize + dy as isize - ph, h, padding) else { continue };
                        let orow = (o * h + y) * w;
                        let irow = (c * h + sy) * w;
                        for xx in 0..w {
                            if let Some(sx) = conv_index(xx as isize + dx as isize - pw, w, padding) {
                                let gv = gd[orow + xx];
                                acc += gv * xd[irow + sx];
                                gx[irow + sx] += kv * gv;
                            }
                        }
                    }
                    gk[kidx] += acc;
                }
            }
        }
    }
    (Tensor::from_parts(x.shape().to_vec(), gx, None), Tensor::from_parts(k.shape().to_vec(), gk, None))
}

fn roll_tensor(t: &Tensor, axis: usize, shift: isize) -> Tensor {
    let shape = t.shape();
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let s = shift.rem_euclid(n as isize) as usize;
    let roll = |plane: &[f64]| {
        let mut out = vec![0.0; plane.len()];
        for o in 0..outer {
            for i in 0..n {
                let dst = (o * n + (i + s) % n) * inner;
                let src = (o * n + i) * inner;
                out[dst..dst + inner].copy_from_slice(&plane[src..src + inner]);
            }
        }
        out
    };
    Tensor::from_parts(shape.to_vec(), roll(t.data()), t.imag().map(roll))
}

fn pad_axis(g: &Tensor, full: &[usize], axis: usize, start: usize) -> Tensor {
    let len = g.shape()[axis];
    let n = full[axis];
    let outer: usize = full[..axis].iter().product();
    let inner: usize = full[axis + 1..].iter().product();
    let pad = |plane: &[f64]| {
        let mut out = vec![0.0; numel(full)];
        for o in 0..outer {
            let dst = (o * n + start) * inner;
            let src = o * len * inner;
            out[dst..dst + len * inner].copy_from_slice(&plane[src..src + len * inner]);
        }
        out
    };
    Tensor::from_parts(full.to_vec(), pad(g.data()), g.imag().map(pad))
}
