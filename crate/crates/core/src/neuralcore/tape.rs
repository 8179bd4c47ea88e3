use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `x + b` with `b` a `1 × cols` row broadcast over the rows of `x`.
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    /// Natural log of `max(x, floor)`.
    Log(NodeId, f64),
    /// Softmax over consecutive column groups of the given size.
    Softmax(NodeId, usize),
    /// Output column `c` copies input column `cols[c]`.
    Gather(NodeId, Vec<usize>),
    /// Sums consecutive column groups of the given size.
    GroupSum(NodeId, usize),
    Mean(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// Records matrix operations in execution order for reverse-mode
/// differentiation. Node ids are indices into the record, so inputs always
/// precede their consumers.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that needs one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `id`, `None` when the node does not influence the output
    /// or was recorded as a constant.
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient for `id`, or zeros shaped like `like`.
    pub fn get_or_zeros(&self, id: NodeId, like: &Matrix) -> Matrix {
        self.get(id).cloned().unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn shape_err(what: &str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape(format!(
        "{what}: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax over consecutive groups of `group` columns.
pub(crate) fn group_softmax(x: &Matrix, group: usize) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for g in out.row_mut(r).chunks_mut(group) {
            let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in g.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in g.iter_mut() {
                *v /= total;
            }
        }
    }
    out
}

pub(crate) fn sigmoid_matrix(x: &Matrix) -> Matrix {
    x.map(sigmoid)
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

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Input that never receives a gradient (data, fixed coefficients).
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::MatMul(a, b), v, ng))
    }

    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(row));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("row broadcast", xv, bv));
        }
        let mut v = xv.clone();
        for r in 0..v.rows() {
            for (o, b) in v.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        let ng = self.ng(x) || self.ng(row);
        Ok(self.push(Op::AddRow(x, row), v, ng))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(what, av, bv));
        }
        let v = av.zip_map(bv, f);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(op, v, ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        let ng = self.ng(a);
        self.push(Op::Scale(a, c), v, ng)
    }

    /// `x + c` for a constant `c`.
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        let ng = self.ng(a);
        self.push(Op::AddScalar(a), v, ng)
    }

    /// `max(x, 0)`; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(Op::Relu(a), v, ng)
    }

    /// Positive part `[x]^+`, identical to [`Tape::relu`].
    pub fn pos(&mut self, a: NodeId) -> NodeId {
        self.relu(a)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = sigmoid_matrix(self.value(a));
        let ng = self.ng(a);
        self.push(Op::Sigmoid(a), v, ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(Op::Tanh(a), v, ng)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        let ng = self.ng(a);
        self.push(Op::Exp(a), v, ng)
    }

    /// `ln(max(x, floor))`; zero gradient where the clamp is active.
    pub fn log(&mut self, a: NodeId, floor: f64) -> NodeId {
        let v = self.value(a).map(|x| x.max(floor).ln());
        let ng = self.ng(a);
        self.push(Op::Log(a, floor), v, ng)
    }

    pub fn softmax(&mut self, a: NodeId, group: usize) -> Result<NodeId> {
        let av = self.value(a);
        if group == 0 || av.cols() % group != 0 {
            return Err(Error::Shape(format!("softmax groups of {group} over {} columns", av.cols())));
        }
        let v = group_softmax(av, group);
        let ng = self.ng(a);
        Ok(self.push(Op::Softmax(a, group), v, ng))
    }

    pub fn gather(&mut self, a: NodeId, cols: Vec<usize>) -> Result<NodeId> {
        let av = self.value(a);
        if let Some(c) = cols.iter().find(|c| **c >= av.cols()) {
            return Err(Error::Shape(format!("gather column {c} of {}", av.cols())));
        }
        let mut v = Matrix::zeros(av.rows(), cols.len());
        for r in 0..av.rows() {
            let src = av.row(r);
            for (o, c) in v.row_mut(r).iter_mut().zip(&cols) {
                *o = src[*c];
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Op::Gather(a, cols), v, ng))
    }

    pub fn group_sum(&mut self, a: NodeId, group: usize) -> Result<NodeId> {
        let av = self.value(a);
        if group == 0 || av.cols() % group != 0 {
            return Err(Error::Shape(format!("group sum of {group} over {} columns", av.cols())));
        }
        let mut v = Matrix::zeros(av.rows(), av.cols() / group);
        for r in 0..av.rows() {
            for (o, g) in v.row_mut(r).iter_mut().zip(av.row(r).chunks(group)) {
                let mut acc = 0.0;
                for x in g {
                    acc += x;
                }
                *o = acc;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Op::GroupSum(a, group), v, ng))
    }

    /// Mean of all entries, as a `1 × 1` node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let v = Matrix::scalar(av.sum() / av.len() as f64);
        let ng = self.ng(a);
        self.push(Op::Mean(a), v, ng)
    }

    /// Reverse sweep from a `1 × 1` node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {}x{}",
                out.rows(),
                out.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.needs_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], id: NodeId, f: impl FnOnce(&mut Matrix)) {
        if !self.ng(id) {
            return;
        }
        let slot = &mut grads[id.0];
        let v = self.value(id);
        let g = slot.get_or_insert_with(|| Matrix::zeros(v.rows(), v.cols()));
        f(g);
    }

    fn propagate(&self, op: &Op, y: &Matrix, dy: &Matrix, grads: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |g| dy.add_nt_product(bv, g));
                self.accumulate(grads, *b, |g| av.add_tn_product(dy, g));
            }
            Op::AddRow(x, b) => {
                self.accumulate(grads, *x, |g| g.add_assign(dy));
                self.accumulate(grads, *b, |g| g.add_assign(&dy.col_sums()));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |g| g.add_assign(dy));
                self.accumulate(grads, *b, |g| g.add_assign(dy));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |g| g.add_assign(dy));
                self.accumulate(grads, *b, |g| g.axpy(-1.0, dy));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |g| g.add_assign(&dy.zip_map(bv, |d, x| d * x)));
                self.accumulate(grads, *b, |g| g.add_assign(&dy.zip_map(av, |d, x| d * x)));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                self.accumulate(grads, *a, |g| g.add_assign(&dy.zip_map(bv, |d, x| d / x)));
                // d(a/b)/db = -(a/b)/b = -y/b
                self.accumulate(grads, *b, |g| {
                    let t = dy.zip_map(y, |d, q| d * q);
                    g.axpy(-1.0, &t.zip_map(bv, |t, x| t / x));
                });
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |g| g.axpy(*c, dy)),
            Op::AddScalar(a) => self.accumulate(grads, *a, |g| g.add_assign(dy)),
            Op::Relu(a) => {
                let av = self.value(*a);
                self.accumulate(grads, *a, |g| {
                    g.add_assign(&dy.zip_map(av, |d, x| if x > 0.0 { d } else { 0.0 }))
                });
            }
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, |g| g.add_assign(&dy.zip_map(y, |d, s| d * s * (1.0 - s))));
            }
            Op::Tanh(a) => {
                self.accumulate(grads, *a, |g| g.add_assign(&dy.zip_map(y, |d, t| d * (1.0 - t * t))));
            }
            Op::Exp(a) => self.accumulate(grads, *a, |g| g.add_assign(&dy.zip_map(y, |d, e| d * e))),
            Op::Log(a, floor) => {
                let av = self.value(*a);
                self.accumulate(grads, *a, |g| {
                    g.add_assign(&dy.zip_map(av, |d, x| if x > *floor { d / x } else { 0.0 }))
                });
            }
            Op::Softmax(a, group) => {
                self.accumulate(grads, *a, |g| {
                    for r in 0..y.rows() {
                        let (yr, dr) = (y.row(r), dy.row(r));
                        let gr = g.row_mut(r);
                        for start in (0..yr.len()).step_by(*group) {
                            let end = start + group;
                            let mut dot = 0.0;
                            for k in start..end {
                                dot += dr[k] * yr[k];
                            }
                            for k in start..end {
                                gr[k] += yr[k] * (dr[k] - dot);
                            }
                        }
                    }
                });
            }
            Op::Gather(a, cols) => {
                self.accumulate(grads, *a, |g| {
                    for r in 0..dy.rows() {
                        let dr = dy.row(r);
                        let gr = g.row_mut(r);
                        for (d, c) in dr.iter().zip(cols) {
                            gr[*c] += d;
                        }
                    }
                });
            }
            Op::GroupSum(a, group) => {
                self.accumulate(grads, *a, |g| {
                    for r in 0..dy.rows() {
                        let dr = dy.row(r);
                        for (k, x) in g.row_mut(r).iter_mut().enumerate() {
                            *x += dr[k / group];
                        }
                    }
                });
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                let d = dy.get(0, 0) / n;
                self.accumulate(grads, *a, |g| g.as_mut_slice().iter_mut().for_each(|x| *x += d));
            }
        }
    }
}
