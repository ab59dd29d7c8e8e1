use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentReduce {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, Var),
    ScaleConst(Var, f64),
    CircCorr(Var, Var),
    Concat(Vec<Var>, usize),
    Maximum(Var, Var),
    Abs(Var),
    Sum(Var, Option<usize>),
    Mean(Var, Option<usize>),
    MaxAxis(Var, Vec<usize>),
    Softmax(Var),
    Log(Var),
    Exp(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Prelu(Var, Var),
    Dropout(Var, Vec<f64>),
    Bce(Var, Vec<f64>),
    CrossEntropy(Var, Vec<usize>, Vec<f64>),
    GatherRows(Var, Vec<usize>),
    Segment {
        input: Var,
        segments: Vec<usize>,
        reduce: SegmentReduce,
        aux: Vec<usize>,
    },
    Index(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of every operation of one forward pass.
///
/// Inputs of every node precede it, so reverse recording order is a valid
/// reverse topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    check_finite: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(|g| g.is_none())
    }
}

fn dim_err(msg: String) -> Error {
    Error::Dimension(msg)
}

/// `c = beta*c + a·b` with arbitrary strides on `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: bounds asserted above; strides describe views fully inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits a shape around `axis` into (outer, len, inner).
fn around_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn circ_corr_rows(a: &[f64], b: &[f64], d: usize, out: &mut [f64]) {
    for ((ar, br), or) in a
        .chunks_exact(d)
        .zip(b.chunks_exact(d))
        .zip(out.chunks_exact_mut(d))
    {
        for (k, o) in or.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..d {
                let j = if i + k >= d { i + k - d } else { i + k };
                acc += ar[i] * br[j];
            }
            *o = acc;
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enables NaN/Inf detection on every recorded value.
    pub fn with_finite_check(mut self, enabled: bool) -> Self {
        self.check_finite = enabled;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &str) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::Numeric(format!("{name} produced non-finite values")));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, name: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(format!(
                "{name}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn binary_map(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(a, b, name)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| f(*p, *q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    fn unary_map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let x = self.value(a);
        Tensor {
            shape: x.shape().to_vec(),
            data: x.data().iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(dim_err(format!("matmul: {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            &mut out,
            0.0,
        );
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b], "matmul")
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(dim_err(format!("matmul_t: {sa:?} x {sb:?}ᵀ")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (1, k as isize),
            &mut out,
            0.0,
        );
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMulT(a, b), &[a, b], "matmul_t")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_map(a, b, "add", |x, y| x + y)?;
        self.push(t, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_map(a, b, "sub", |x, y| x - y)?;
        self.push(t, Op::Sub(a, b), &[a, b], "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_map(a, b, "mul", |x, y| x * y)?;
        self.push(t, Op::Mul(a, b), &[a, b], "mul")
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_map(a, b, "maximum", |x, y| if x >= y { x } else { y })?;
        self.push(t, Op::Maximum(a, b), &[a, b], "maximum")
    }

    /// Adds a length-`c` bias to every row of an `[r, c]` tensor.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if self.value(bias).numel() != c {
            return Err(dim_err(format!(
                "add_row: bias {:?} against {:?}",
                self.shape(bias),
                self.shape(a)
            )));
        }
        let x = self.value(a);
        let bv = self.value(bias).data();
        let mut data = x.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            for (v, b) in row.iter_mut().zip(bv) {
                *v += b;
            }
        }
        let shape = x.shape().to_vec();
        debug_assert_eq!(r * c, data.len());
        self.push(Tensor::new(shape, data)?, Op::AddRow(a, bias), &[a, bias], "add_row")
    }

    /// Multiplies `a` by the single value held in `s`.
    pub fn scale(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(dim_err(format!("scale: factor has shape {:?}", self.shape(s))));
        }
        let f = self.value(s).data()[0];
        let t = self.unary_map(a, |x| x * f);
        self.push(t, Op::Scale(a, s), &[a, s], "scale")
    }

    pub fn scale_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.unary_map(a, |x| x * c);
        self.push(t, Op::ScaleConst(a, c), &[a], "scale_const")
    }

    /// Row-wise circular correlation over the last axis:
    /// `out[k] = Σ_i a[i] · b[(i + k) mod d]`.
    pub fn circ_corr(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "circ_corr")?;
        let d = *self.shape(a).last().unwrap();
        let mut out = vec![0.0; self.value(a).numel()];
        circ_corr_rows(self.value(a).data(), self.value(b).data(), d, &mut out);
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        self.push(t, Op::CircCorr(a, b), &[a, b], "circ_corr")
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(dim_err(format!("concat axis {axis} on {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (p, q))| i == axis || p == q);
            if !compatible {
                return Err(dim_err(format!("concat: {s:?} against {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = around_axis(&base, axis);
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis];
                let src = self.value(*v).data();
                data.extend_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
            }
        }
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Concat(inputs.to_vec(), axis),
            inputs,
            "concat",
        )
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let t = self.unary_map(a, f64::abs);
        self.push(t, Op::Abs(a), &[a], "abs")
    }

    /// Sum over one axis, or over everything when `axis` is `None` (giving shape `[1]`).
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let t = self.reduce(a, axis, false)?;
        self.push(t, Op::Sum(a, axis), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let t = self.reduce(a, axis, true)?;
        self.push(t, Op::Mean(a, axis), &[a], "mean")
    }

    fn reduce(&self, a: Var, axis: Option<usize>, mean: bool) -> Result<Tensor> {
        let x = self.value(a);
        match axis {
            None => {
                let mut acc = 0.0;
                for v in x.data() {
                    acc += v;
                }
                if mean {
                    acc /= x.numel() as f64;
                }
                Ok(Tensor::scalar(acc))
            }
            Some(ax) => {
                if ax >= x.rank() {
                    return Err(dim_err(format!("reduce axis {ax} on {:?}", x.shape())));
                }
                let (outer, len, inner) = around_axis(x.shape(), ax);
                let mut out = vec![0.0; outer * inner];
                let src = x.data();
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += src[base + i];
                        }
                    }
                }
                if mean {
                    for v in &mut out {
                        *v /= len as f64;
                    }
                }
                Tensor::new(reduced_shape(x.shape(), ax), out)
            }
        }
    }

    pub fn max_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.rank() {
            return Err(dim_err(format!("max axis {axis} on {:?}", x.shape())));
        }
        let (outer, len, inner) = around_axis(x.shape(), axis);
        let src = x.data();
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    let v = src[base + i];
                    let slot = o * inner + i;
                    if v > out[slot] {
                        out[slot] = v;
                        arg[slot] = base + i;
                    }
                }
            }
        }
        let t = Tensor::new(reduced_shape(x.shape(), axis), out)?;
        self.push(t, Op::MaxAxis(a, arg), &[a], "max_axis")
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let d = *x.shape().last().unwrap();
        let mut out = x.data().to_vec();
        for row in out.chunks_exact_mut(d) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        self.push(t, Op::Softmax(a), &[a], "softmax")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Numeric(format!("log of non-positive value {bad}")));
        }
        let t = self.unary_map(a, f64::ln);
        self.push(t, Op::Log(a), &[a], "log")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let t = self.unary_map(a, f64::exp);
        self.push(t, Op::Exp(a), &[a], "exp")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = self.unary_map(a, sigmoid);
        self.push(t, Op::Sigmoid(a), &[a], "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let t = self.unary_map(a, f64::tanh);
        self.push(t, Op::Tanh(a), &[a], "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.unary_map(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push(t, Op::Relu(a), &[a], "relu")
    }

    /// Parametric ReLU with a single learnable negative slope.
    pub fn prelu(&mut self, a: Var, slope: Var) -> Result<Var> {
        if self.value(slope).numel() != 1 {
            return Err(dim_err(format!("prelu slope has shape {:?}", self.shape(slope))));
        }
        let s = self.value(slope).data()[0];
        let t = self.unary_map(a, |x| if x > 0.0 { x } else { s * x });
        self.push(t, Op::Prelu(a, slope), &[a, slope], "prelu")
    }

    /// Multiplies by an explicit mask (already scaled by `1/(1-p)` for kept units).
    pub fn dropout_with_mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(a).numel() {
            return Err(dim_err(format!(
                "dropout mask of {} for {:?}",
                mask.len(),
                self.shape(a)
            )));
        }
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push(t, Op::Dropout(a, mask), &[a], "dropout")
    }

    /// Inverted dropout with rate `p`; a no-op when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut impl rand::Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Contract(format!("dropout rate {p} outside [0,1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..self.value(a).numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.dropout_with_mask(a, mask)
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let z = self.value(logits);
        if z.numel() != targets.len() {
            return Err(dim_err(format!(
                "bce: {} logits, {} targets",
                z.numel(),
                targets.len()
            )));
        }
        let mut acc = 0.0;
        for (x, y) in z.data().iter().zip(targets) {
            acc += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        }
        let t = Tensor::scalar(acc / targets.len() as f64);
        self.push(t, Op::Bce(logits, targets.to_vec()), &[logits], "bce")
    }

    /// Mean softmax cross-entropy of `[n, classes]` logits against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (n, c) = x.dims2()?;
        if n != labels.len() {
            return Err(dim_err(format!("cross_entropy: {n} rows, {} labels", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= c) {
            return Err(Error::Contract(format!("label {bad} out of {c} classes")));
        }
        let mut probs = x.data().to_vec();
        let mut acc = 0.0;
        for (row, &label) in probs.chunks_exact_mut(c).zip(labels) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let target = row[label] - m;
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            acc -= target - z.ln();
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let t = Tensor::scalar(acc / n as f64);
        self.push(
            t,
            Op::CrossEntropy(logits, labels.to_vec(), probs),
            &[logits],
            "cross_entropy",
        )
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims2()?;
        if let Some(bad) = rows.iter().find(|i| **i >= r) {
            return Err(dim_err(format!("gather row {bad} of {r}")));
        }
        if rows.is_empty() {
            return Err(Error::Contract("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(&x.data()[i * c..(i + 1) * c]);
        }
        let t = Tensor::new(vec![rows.len(), c], data)?;
        self.push(t, Op::GatherRows(a, rows.to_vec()), &[a], "gather_rows")
    }

    /// Scatters the rows of `a: [e, d]` into `count` segments given by `segments[e]`.
    /// Empty segments yield zero rows for every reduction.
    pub fn segment(&mut self, a: Var, segments: &[usize], count: usize, reduce: SegmentReduce) -> Result<Var> {
        let x = self.value(a);
        let (e, d) = x.dims2()?;
        if segments.len() != e {
            return Err(dim_err(format!("segment: {e} rows, {} ids", segments.len())));
        }
        if count == 0 {
            return Err(dim_err("segment: zero output segments".into()));
        }
        if let Some(bad) = segments.iter().find(|s| **s >= count) {
            return Err(dim_err(format!("segment id {bad} of {count}")));
        }
        let src = x.data();
        let mut out = vec![0.0; count * d];
        let mut aux = Vec::new();
        match reduce {
            SegmentReduce::Sum | SegmentReduce::Mean => {
                for (row, &s) in src.chunks_exact(d).zip(segments) {
                    for (o, v) in out[s * d..(s + 1) * d].iter_mut().zip(row) {
                        *o += v;
                    }
                }
                if reduce == SegmentReduce::Mean {
                    aux = vec![0usize; count];
                    for &s in segments {
                        aux[s] += 1;
                    }
                    for (s, &n) in aux.iter().enumerate() {
                        if n > 0 {
                            for o in &mut out[s * d..(s + 1) * d] {
                                *o /= n as f64;
                            }
                        }
                    }
                }
            }
            SegmentReduce::Max => {
                aux = vec![usize::MAX; count * d];
                for (r, (row, &s)) in src.chunks_exact(d).zip(segments).enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        let slot = s * d + j;
                        if aux[slot] == usize::MAX || *v > out[slot] {
                            out[slot] = *v;
                            aux[slot] = r * d + j;
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![count, d], out)?;
        self.push(
            t,
            Op::Segment {
                input: a,
                segments: segments.to_vec(),
                reduce,
                aux,
            },
            &[a],
            "segment",
        )
    }

    /// Selects one element as a shape-`[1]` tensor.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let x = self.value(a);
        if i >= x.numel() {
            return Err(dim_err(format!("index {i} of {}", x.numel())));
        }
        let t = Tensor::scalar(x.data()[i]);
        self.push(t, Op::Index(a, i), &[a], "index")
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward from non-scalar of shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        if !root.requires_grad {
            log::warn!("backward from a loss that does not depend on any parameter");
            return Ok(Gradients::default());
        }
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let out = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                match (node.op_is_leaf(), g) {
                    (true, Some(g)) if node.requires_grad => Some(Tensor {
                        shape: node.value.shape().to_vec(),
                        data: g,
                    }),
                    _ => None,
                }
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e += c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn backprop(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, (n as isize, 1), val(*b), (1, n as isize), &mut da, 0.0);
                    Self::accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, val(*a), (1, k as isize), g, (n as isize, 1), &mut db, 0.0);
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[0];
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, (n as isize, 1), val(*b), (k as isize, 1), &mut da, 0.0);
                    Self::accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; n * k];
                    gemm(n, m, k, g, (1, n as isize), val(*a), (k as isize, 1), &mut db, 0.0);
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    Self::accumulate(grads, *a, g.to_vec());
                }
                if self.wants(*b) {
                    Self::accumulate(grads, *b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    Self::accumulate(grads, *a, g.to_vec());
                }
                if self.wants(*b) {
                    Self::accumulate(grads, *b, g.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    Self::accumulate(grads, *a, g.iter().zip(val(*b)).map(|(p, q)| p * q).collect());
                }
                if self.wants(*b) {
                    Self::accumulate(grads, *b, g.iter().zip(val(*a)).map(|(p, q)| p * q).collect());
                }
            }
            Op::AddRow(a, bias) => {
                if self.wants(*a) {
                    Self::accumulate(grads, *a, g.to_vec());
                }
                if self.wants(*bias) {
                    let c = self.value(*bias).numel();
                    let mut db = vec![0.0; c];
                    for row in g.chunks_exact(c) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    Self::accumulate(grads, *bias, db);
                }
            }
            Op::Scale(a, s) => {
                let f = val(*s)[0];
                if self.wants(*a) {
                    Self::accumulate(grads, *a, g.iter().map(|v| v * f).collect());
                }
                if self.wants(*s) {
                    let mut acc = 0.0;
                    for (p, q) in g.iter().zip(val(*a)) {
                        acc += p * q;
                    }
                    Self::accumulate(grads, *s, vec![acc]);
                }
            }
            Op::ScaleConst(a, c) => {
                Self::accumulate(grads, *a, g.iter().map(|v| v * c).collect());
            }
            Op::CircCorr(a, b) => {
                let d = *self.shape(*a).last().unwrap();
                let (av, bv) = (val(*a), val(*b));
                if self.wants(*a) {
                    let mut da = vec![0.0; av.len()];
                    for ((gr, br), dr) in g.chunks_exact(d).zip(bv.chunks_exact(d)).zip(da.chunks_exact_mut(d)) {
                        for (i, o) in dr.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for (k, gk) in gr.iter().enumerate() {
                                acc += gk * br[(i + k) % d];
                            }
                            *o = acc;
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; bv.len()];
                    for ((gr, ar), dr) in g.chunks_exact(d).zip(av.chunks_exact(d)).zip(db.chunks_exact_mut(d)) {
                        for (j, o) in dr.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for (k, gk) in gr.iter().enumerate() {
                                acc += gk * ar[(j + d - k) % d];
                            }
                            *o = acc;
                        }
                    }
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::Concat(inputs, axis) => {
                let out_shape = node.value.shape();
                let (outer, total, inner) = around_axis(out_shape, *axis);
                let mut offset = 0;
                for v in inputs {
                    let len = self.shape(*v)[*axis];
                    if self.wants(*v) {
                        let mut dv = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            dv.extend_from_slice(&g[start..start + len * inner]);
                        }
                        Self::accumulate(grads, *v, dv);
                    }
                    offset += len;
                }
            }
            Op::Maximum(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if self.wants(*a) {
                    let da = g.iter().zip(av.iter().zip(bv)).map(|(gi, (x, y))| if x >= y { *gi } else { 0.0 }).collect();
                    Self::accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let db = g.iter().zip(av.iter().zip(bv)).map(|(gi, (x, y))| if x >= y { 0.0 } else { *gi }).collect();
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::Abs(a) => {
                let da = g.iter().zip(val(*a)).map(|(gi, x)| if *x > 0.0 { *gi } else if *x < 0.0 { -gi } else { 0.0 }).collect();
                Self::accumulate(grads, *a, da);
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let shape = self.shape(*a);
                let is_mean = matches!(node.op, Op::Mean(..));
                let numel: usize = shape.iter().product();
                let da = match axis {
                    None => {
                        let f = if is_mean { g[0] / numel as f64 } else { g[0] };
                        vec![f; numel]
                    }
                    Some(ax) => {
                        let (outer, len, inner) = around_axis(shape, *ax);
                        let div = if is_mean { len as f64 } else { 1.0 };
                        let mut da = vec![0.0; numel];
                        for o in 0..outer {
                            for l in 0..len {
                                for i in 0..inner {
                                    da[(o * len + l) * inner + i] = g[o * inner + i] / div;
                                }
                            }
                        }
                        da
                    }
                };
                Self::accumulate(grads, *a, da);
            }
            Op::MaxAxis(a, arg) => {
                let mut da = vec![0.0; self.value(*a).numel()];
                for (gi, &src) in g.iter().zip(arg) {
                    da[src] += gi;
                }
                Self::accumulate(grads, *a, da);
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let d = *node.value.shape().last().unwrap();
                let mut da = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks_exact(d).zip(g.chunks_exact(d)).zip(da.chunks_exact_mut(d)) {
                    let mut dot = 0.0;
                    for (p, q) in yr.iter().zip(gr) {
                        dot += p * q;
                    }
                    for ((o, p), q) in dr.iter_mut().zip(yr).zip(gr) {
                        *o = p * (q - dot);
                    }
                }
                Self::accumulate(grads, *a, da);
            }
            Op::Log(a) => {
                Self::accumulate(grads, *a, g.iter().zip(val(*a)).map(|(gi, x)| gi / x).collect());
            }
            Op::Exp(a) => {
                let y = node.value.data();
                Self::accumulate(grads, *a, g.iter().zip(y).map(|(gi, e)| gi * e).collect());
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                Self::accumulate(grads, *a, g.iter().zip(y).map(|(gi, s)| gi * s * (1.0 - s)).collect());
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                Self::accumulate(grads, *a, g.iter().zip(y).map(|(gi, t)| gi * (1.0 - t * t)).collect());
            }
            Op::Relu(a) => {
                let da = g.iter().zip(val(*a)).map(|(gi, x)| if *x > 0.0 { *gi } else { 0.0 }).collect();
                Self::accumulate(grads, *a, da);
            }
            Op::Prelu(a, slope) => {
                let s = val(*slope)[0];
                let x = val(*a);
                if self.wants(*a) {
                    let da = g.iter().zip(x).map(|(gi, v)| if *v > 0.0 { *gi } else { gi * s }).collect();
                    Self::accumulate(grads, *a, da);
                }
                if self.wants(*slope) {
                    let mut acc = 0.0;
                    for (gi, v) in g.iter().zip(x) {
                        if *v <= 0.0 {
                            acc += gi * v;
                        }
                    }
                    Self::accumulate(grads, *slope, vec![acc]);
                }
            }
            Op::Dropout(a, mask) => {
                Self::accumulate(grads, *a, g.iter().zip(mask).map(|(gi, m)| gi * m).collect());
            }
            Op::Bce(a, targets) => {
                let n = targets.len() as f64;
                let da = val(*a)
                    .iter()
                    .zip(targets)
                    .map(|(z, y)| g[0] * (sigmoid(*z) - y) / n)
                    .collect();
                Self::accumulate(grads, *a, da);
            }
            Op::CrossEntropy(a, labels, probs) => {
                let n = labels.len();
                let c = probs.len() / n;
                let mut da: Vec<f64> = probs.iter().map(|p| g[0] * p / n as f64).collect();
                for (r, &l) in labels.iter().enumerate() {
                    da[r * c + l] -= g[0] / n as f64;
                }
                Self::accumulate(grads, *a, da);
            }
            Op::GatherRows(a, rows) => {
                let c = *self.shape(*a).last().unwrap();
                let mut da = vec![0.0; self.value(*a).numel()];
                for (gr, &r) in g.chunks_exact(c).zip(rows) {
                    for (o, v) in da[r * c..(r + 1) * c].iter_mut().zip(gr) {
                        *o += v;
                    }
                }
                Self::accumulate(grads, *a, da);
            }
            Op::Segment {
                input,
                segments,
                reduce,
                aux,
            } => {
                let d = node.value.shape()[1];
                let mut da = vec![0.0; self.value(*input).numel()];
                match reduce {
                    SegmentReduce::Sum | SegmentReduce::Mean => {
                        for (dr, &s) in da.chunks_exact_mut(d).zip(segments) {
                            let div = if *reduce == SegmentReduce::Mean { aux[s] as f64 } else { 1.0 };
                            for (o, v) in dr.iter_mut().zip(&g[s * d..(s + 1) * d]) {
                                *o = v / div;
                            }
                        }
                    }
                    SegmentReduce::Max => {
                        for (slot, &src) in aux.iter().enumerate() {
                            if src != usize::MAX {
                                da[src] += g[slot];
                            }
                        }
                    }
                }
                Self::accumulate(grads, *input, da);
            }
            Op::Index(a, i) => {
                let mut da = vec![0.0; self.value(*a).numel()];
                da[*i] = g[0];
                Self::accumulate(grads, *a, da);
            }
        }
    }
}

impl Node {
    fn op_is_leaf(&self) -> bool {
        matches!(self.op, Op::Leaf)
    }
}
