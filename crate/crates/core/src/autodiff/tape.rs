use crate::autodiff::tensor::{matmul_nn_acc, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Relu(Var),
    Scale(Var, f64),
    /// `x² + y²` over consecutive pairs of the last axis.
    Abs2Pairs(Var),
    Mean(Var),
    Sum(Var),
    /// Expands a scalar, a row vector or a column vector to the node's shape.
    Broadcast(Var),
    /// Row-wise softmax.
    Softmax(Var),
    /// Mean over rows of `-Σ t·log softmax(z)`; the targets input is
    /// treated as a constant.
    SoftmaxCrossEntropy { logits: Var, targets: Var },
}

#[derive(Clone, Debug)]
struct Node {
    op: OpKind,
    value: Tensor,
    trainable: bool,
    /// Softmax probabilities kept for the backward pass.
    aux: Option<Tensor>,
}

/// Define-by-run recording of a computation over [`Tensor`]s.
///
/// Every op evaluates eagerly when recorded. Leaf values can later be
/// replaced with [`Tape::set_value`] and the whole graph re-evaluated with
/// [`Tape::forward`]. Nodes only reference earlier nodes, so the recording
/// order is a topological order.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
impl OpKind {
    /// Differentiable inputs. Cross-entropy targets are excluded.
    fn inputs(self) -> [Option<Var>; 2] {
        match self {
            OpKind::Leaf => [None, None],
            OpKind::Add(a, b) | OpKind::Sub(a, b) | OpKind::Mul(a, b) | OpKind::Div(a, b) | OpKind::MatMul(a, b) => {
                [Some(a), Some(b)]
            }
            OpKind::Exp(a)
            | OpKind::Log(a)
            | OpKind::Square(a)
            | OpKind::Sqrt(a)
            | OpKind::Relu(a)
            | OpKind::Scale(a, _)
            | OpKind::Abs2Pairs(a)
            | OpKind::Mean(a)
            | OpKind::Sum(a)
            | OpKind::Broadcast(a)
            | OpKind::Softmax(a)
            | OpKind::SoftmaxCrossEntropy { logits: a, .. } => [Some(a), None],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    trainable: Vec<bool>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Adjoint of a leaf; `None` when the root does not depend on it or the
    /// leaf is a constant. Adjoints of intermediate nodes are not kept.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adjoints[v.0].as_ref()
    }

    /// Adjoint of `v`, zero-filled when the root does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.adjoints[v.0].clone().unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    /// Gradients of every trainable leaf.
    pub fn trainable(&self) -> impl Iterator<Item = (Var, Tensor)> + '_ {
        (0..self.adjoints.len())
            .filter(|&i| self.trainable[i])
            .map(|i| (Var(i), self.wrt(Var(i))))
    }
}

fn is_one(t: &Tensor) -> bool {
    t.len() == 1
}

/// Output shape of an elementwise binary op; single-element operands broadcast.
fn binary_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || is_one(b) {
        Ok(a.shape().to_vec())
    } else if is_one(a) {
        Ok(b.shape().to_vec())
    } else {
        Err(Error::ShapeMismatch { op, left: a.shape().to_vec(), right: b.shape().to_vec() })
    }
}

fn zip_with(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let shape = binary_shape(op, a, b)?;
    let n: usize = shape.iter().product();
    let (ad, bd) = (a.data(), b.data());
    let data = match (ad.len() == n, bd.len() == n) {
        (true, true) => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        (true, false) => ad.iter().map(|&x| f(x, bd[0])).collect(),
        (false, true) => bd.iter().map(|&y| f(ad[0], y)).collect(),
        (false, false) => vec![f(ad[0], bd[0])],
    };
    Tensor::new(shape, data)
}

/// `g[i] = f(g[i], x[i])` in place, with a single-element `x` broadcast.
fn zip_into(mut g: Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let xd = x.data();
    if xd.len() == g.len() {
        for (o, &v) in g.data_mut().iter_mut().zip(xd) {
            *o = f(*o, v);
        }
    } else {
        g.data_mut().iter_mut().for_each(|o| *o = f(*o, xd[0]));
    }
    g
}

/// Sums `g` down to `shape` when the operand was broadcast from one element.
fn reduce_to(g: Tensor, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    if g.len() == n {
        g
    } else {
        let s: f64 = g.data().iter().sum();
        Tensor::new(shape.to_vec(), vec![s]).expect("single-element shape")
    }
}

/// Row-wise softmax and, per row, `ln Σ exp(z)`.
fn softmax_rows_lse(z: &Tensor) -> (Tensor, Vec<f64>) {
    let (r, c) = z.dims2();
    let mut out = z.clone();
    let mut lse = Vec::with_capacity(r);
    for i in 0..r {
        let row = &mut out.data_mut()[i * c..(i + 1) * c];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
        lse.push(mx + s.ln());
    }
    (out, lse)
}

fn softmax_rows(z: &Tensor) -> Tensor {
    softmax_rows_lse(z).0
}

fn check_domain(op: &'static str, x: &Tensor, ok: impl Fn(f64) -> bool) -> Result<()> {
    match x.data().iter().position(|&v| !ok(v)) {
        Some(index) => Err(Error::Domain { op, index, value: x.data()[index] }),
        None => Ok(()),
    }
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

    fn push(&mut self, op: OpKind, value: Tensor, aux: Option<Tensor>, trainable: bool) -> Var {
        self.nodes.push(Node { op, value, trainable, aux });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is reported by [`Gradients::trainable`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(OpKind::Leaf, value, None, true)
    }

    /// Leaf treated as a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(OpKind::Leaf, value, None, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> OpKind {
        self.nodes[v.0].op
    }

    /// Replaces a leaf value. Call [`Tape::forward`] afterwards to refresh
    /// dependent nodes.
    pub fn set_value(&mut self, v: Var, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if node.op != OpKind::Leaf {
            return Err(Error::InvalidArgument(format!("node {} is not a leaf", v.0)));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                left: node.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        node.value = value;
        Ok(())
    }

    fn record(&mut self, op: OpKind) -> Result<Var> {
        let (value, aux) = self.eval(op)?;
        Ok(self.push(op, value, aux, false))
    }

    fn eval(&self, op: OpKind) -> Result<(Tensor, Option<Tensor>)> {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = match op {
            OpKind::Leaf => unreachable!("leaves are not evaluated"),
            OpKind::Add(a, b) => zip_with("add", val(a), val(b), |x, y| x + y)?,
            OpKind::Sub(a, b) => zip_with("sub", val(a), val(b), |x, y| x - y)?,
            OpKind::Mul(a, b) => zip_with("mul", val(a), val(b), |x, y| x * y)?,
            OpKind::Div(a, b) => {
                check_domain("div", val(b), |v| v != 0.0)?;
                zip_with("div", val(a), val(b), |x, y| x / y)?
            }
            OpKind::MatMul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
                    return Err(Error::ShapeMismatch {
                        op: "matmul",
                        left: ta.shape().to_vec(),
                        right: tb.shape().to_vec(),
                    });
                }
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                let mut out = vec![0.0; m * n];
                matmul_nn_acc(ta.data(), tb.data(), &mut out, m, k, n);
                Tensor::matrix(m, n, out)?
            }
            OpKind::Exp(a) => val(a).map(f64::exp),
            OpKind::Log(a) => {
                check_domain("log", val(a), |v| v > 0.0)?;
                val(a).map(f64::ln)
            }
            OpKind::Square(a) => val(a).map(|x| x * x),
            OpKind::Sqrt(a) => {
                check_domain("sqrt", val(a), |v| v > 0.0)?;
                val(a).map(f64::sqrt)
            }
            OpKind::Relu(a) => val(a).map(|x| x.max(0.0)),
            OpKind::Scale(a, c) => val(a).map(|x| c * x),
            OpKind::Abs2Pairs(a) => {
                let t = val(a);
                let last = *t.shape().last().unwrap_or(&1);
                if t.shape().is_empty() || last % 2 != 0 {
                    return Err(Error::InvalidShape(format!(
                        "abs2_pairs needs an even last axis, got {:?}",
                        t.shape()
                    )));
                }
                let mut shape = t.shape().to_vec();
                *shape.last_mut().unwrap() = last / 2;
                let data = t.data().chunks_exact(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect();
                Tensor::new(shape, data)?
            }
            OpKind::Mean(a) => {
                let t = val(a);
                Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64)
            }
            OpKind::Sum(a) => Tensor::scalar(val(a).data().iter().sum()),
            OpKind::Broadcast(_) => unreachable!("broadcast is recorded through Tape::broadcast"),
            OpKind::Softmax(a) => softmax_rows(val(a)),
            OpKind::SoftmaxCrossEntropy { logits, targets } => {
                let (z, t) = (val(logits), val(targets));
                if z.shape() != t.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "softmax_cross_entropy",
                        left: z.shape().to_vec(),
                        right: t.shape().to_vec(),
                    });
                }
                let (r, c) = z.dims2();
                let (p, lse) = softmax_rows_lse(z);
                let mut loss = 0.0;
                for (i, lse) in lse.into_iter().enumerate() {
                    let zr = &z.data()[i * c..(i + 1) * c];
                    let tr = &t.data()[i * c..(i + 1) * c];
                    let tsum: f64 = tr.iter().sum();
                    let dot: f64 = zr.iter().zip(tr).map(|(a, b)| a * b).sum();
                    loss += tsum * lse - dot;
                }
                return Ok((Tensor::scalar(loss / r as f64), Some(p)));
            }
        };
        Ok((out, None))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(OpKind::Add(a, b))
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(OpKind::Sub(a, b))
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(OpKind::Mul(a, b))
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(OpKind::Div(a, b))
    }
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(OpKind::MatMul(a, b))
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Exp(a))
    }
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Log(a))
    }
    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Square(a))
    }
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Sqrt(a))
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Relu(a))
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.record(OpKind::Scale(a, c))
    }
    pub fn abs2_pairs(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Abs2Pairs(a))
    }
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Mean(a))
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Sum(a))
    }
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.record(OpKind::Softmax(a))
    }
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Var) -> Result<Var> {
        self.record(OpKind::SoftmaxCrossEntropy { logits, targets })
    }

    /// Expands `a` to `shape`. `a` may hold a single element, a row of
    /// `shape[1]` values (`[c]` or `[1, c]`) or a column `[r, 1]`.
    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = broadcast_value(self.value(a), shape)?;
        Ok(self.push(OpKind::Broadcast(a), out, None, false))
    }

    /// Re-evaluates every non-leaf node in recording order.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            let op = self.nodes[i].op;
            match op {
                OpKind::Leaf => {}
                OpKind::Broadcast(a) => {
                    let shape = self.nodes[i].value.shape().to_vec();
                    self.nodes[i].value = broadcast_value(self.value(a), &shape)?;
                }
                _ => {
                    let (value, aux) = self.eval(op)?;
                    self.nodes[i].value = value;
                    self.nodes[i].aux = aux;
                }
            }
        }
        Ok(())
    }

    /// Reverse-mode sweep from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(Error::NotScalar(rv.shape().to_vec()));
        }
        // nodes computed from constants alone need no adjoint
        let mut live = vec![false; root.0 + 1];
        for (i, n) in self.nodes[..=root.0].iter().enumerate() {
            live[i] = n.trainable || n.op.inputs().iter().flatten().any(|v| live[v.0]);
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if live[root.0] {
            adj[root.0] = Some(Tensor::filled(rv.shape(), 1.0));
        }

        for i in (0..=root.0).rev() {
            if self.nodes[i].op == OpKind::Leaf {
                continue;
            }
            if let Some(g) = adj[i].take() {
                self.propagate(i, g, &mut adj, &live);
            }
        }
        Ok(Gradients {
            adjoints: adj,
            trainable: self.nodes.iter().map(|n| n.trainable).collect(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: Tensor, adj: &mut [Option<Tensor>], live: &[bool]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| {
            if !live[v.0] {
                return;
            }
            match &mut adj[v.0] {
                Some(a) => a.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match node.op {
            OpKind::Leaf => {}
            OpKind::Add(a, b) => {
                acc(a, reduce_to(g.clone(), val(a).shape()));
                acc(b, reduce_to(g, val(b).shape()));
            }
            OpKind::Sub(a, b) => {
                acc(a, reduce_to(g.clone(), val(a).shape()));
                acc(b, reduce_to(zip_into(g, val(b), |x, _| -x), val(b).shape()));
            }
            OpKind::Mul(a, b) => {
                let gb = zip_with("mul", &g, val(a), |x, y| x * y).expect("forward-checked");
                acc(a, reduce_to(zip_into(g, val(b), |x, y| x * y), val(a).shape()));
                acc(b, reduce_to(gb, val(b).shape()));
            }
            OpKind::Div(a, b) => {
                // d(a/b)/db = -out/b
                let q = zip_with("div", &node.value, val(b), |x, y| -x / y).expect("forward-checked");
                let gb = zip_with("mul", &g, &q, |x, y| x * y).expect("forward-checked");
                acc(a, reduce_to(zip_into(g, val(b), |x, y| x / y), val(a).shape()));
                acc(b, reduce_to(gb, val(b).shape()));
            }
            OpKind::MatMul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if live[a.0] {
                    let mut ga = Tensor::zeros(ta.shape());
                    matmul_nt_acc(g.data(), tb.data(), ga.data_mut(), m, k, n);
                    acc(a, ga);
                }
                if live[b.0] {
                    let mut gb = Tensor::zeros(tb.shape());
                    matmul_tn_acc(ta.data(), g.data(), gb.data_mut(), m, k, n);
                    acc(b, gb);
                }
            }
            OpKind::Exp(a) => acc(a, zip_into(g, &node.value, |g, y| g * y)),
            OpKind::Log(a) => acc(a, zip_into(g, val(a), |g, x| g / x)),
            OpKind::Square(a) => acc(a, zip_into(g, val(a), |g, x| 2.0 * g * x)),
            OpKind::Sqrt(a) => acc(a, zip_into(g, &node.value, |g, y| 0.5 * g / y)),
            OpKind::Relu(a) => acc(a, zip_into(g, val(a), |g, x| if x > 0.0 { g } else { 0.0 })),
            OpKind::Scale(a, c) => acc(a, zip_into(g, &node.value, |v, _| c * v)),
            OpKind::Abs2Pairs(a) => {
                let x = val(a);
                let mut out = Tensor::zeros(x.shape());
                for (j, (o, xv)) in out.data_mut().iter_mut().zip(x.data()).enumerate() {
                    *o = 2.0 * xv * g.data()[j / 2];
                }
                acc(a, out);
            }
            OpKind::Mean(a) => {
                let x = val(a);
                acc(a, Tensor::filled(x.shape(), g.item() / x.len() as f64));
            }
            OpKind::Sum(a) => acc(a, Tensor::filled(val(a).shape(), g.item())),
            OpKind::Broadcast(a) => acc(a, unbroadcast(&g, val(a).shape())),
            OpKind::Softmax(a) => {
                let p = &node.value;
                let (r, c) = p.dims2();
                let mut out = Tensor::zeros(p.shape());
                for row in 0..r {
                    let pr = &p.data()[row * c..(row + 1) * c];
                    let gr = &g.data()[row * c..(row + 1) * c];
                    let dot: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                    let orow = &mut out.data_mut()[row * c..(row + 1) * c];
                    for j in 0..c {
                        orow[j] = pr[j] * (gr[j] - dot);
                    }
                }
                acc(a, out);
            }
            OpKind::SoftmaxCrossEntropy { logits, targets } => {
                let p = node.aux.as_ref().expect("softmax cached in forward");
                let t = val(targets);
                let (r, c) = p.dims2();
                let scale = g.item() / r as f64;
                let mut out = Tensor::zeros(p.shape());
                for row in 0..r {
                    let tr = &t.data()[row * c..(row + 1) * c];
                    let tsum: f64 = tr.iter().sum();
                    for (j, &tj) in tr.iter().enumerate() {
                        let k = row * c + j;
                        out.data_mut()[k] = scale * (p.data()[k] * tsum - tj);
                    }
                }
                acc(logits, out);
            }
        }
    }
}

fn broadcast_value(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let err = || Error::ShapeMismatch { op: "broadcast", left: x.shape().to_vec(), right: shape.to_vec() };
    if x.len() == 1 {
        return Tensor::new(shape.to_vec(), vec![x.item(); n]);
    }
    if x.shape() == shape {
        return Ok(x.clone());
    }
    let [r, c] = shape else { return Err(err()) };
    let (r, c) = (*r, *c);
    let data = match x.shape() {
        [k] | [1, k] if *k == c => (0..r).flat_map(|_| x.data().iter().copied()).collect(),
        [k, 1] if *k == r => x.data().iter().flat_map(|&v| std::iter::repeat_n(v, c)).collect(),
        _ => return Err(err()),
    };
    Tensor::new(shape.to_vec(), data)
}

fn unbroadcast(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let n: usize = shape.iter().product();
    if n == 1 {
        return reduce_to(g.clone(), shape);
    }
    let (r, _) = g.dims2();
    let mut out = vec![0.0; n];
    match shape {
        [_, 1] => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = g.row(i).iter().sum();
            }
        }
        _ => {
            for i in 0..r {
                for (o, v) in out.iter_mut().zip(g.row(i)) {
                    *o += v;
                }
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("shape of broadcast operand")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn elementwise_add() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = t.constant(Tensor::vector(vec![3.0, 4.0]));
        let c = t.add(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::new();
        let i3 = t.constant(Tensor::identity(3));
        let a = Tensor::matrix(3, 3, vec![1., -2., 3., 0.5, 7., -1., 2., 2., 9.]).unwrap();
        let av = t.constant(a.clone());
        let p = t.matmul(i3, av).unwrap();
        assert_eq!(t.value(p), &a);
    }

    #[test]
    fn uniform_softmax() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::vector(vec![0.0; 4]));
        let s = t.softmax(z).unwrap();
        assert_eq!(t.value(s).data(), &[0.25; 4]);
    }

    #[test]
    fn small_op_values() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::vector(vec![3.0, 4.0]));
        let a = t.abs2_pairs(p).unwrap();
        assert_eq!(t.value(a).data(), &[25.0]);
        let v = t.constant(Tensor::vector(vec![2.0, 4.0, 6.0]));
        let m = t.mean(v).unwrap();
        assert_eq!(t.value(m).item(), 4.0);
        let z = t.constant(Tensor::scalar(0.0));
        let e = t.exp(z).unwrap();
        assert_eq!(t.value(e).item(), 1.0);
    }

    #[test]
    fn power_rule() {
        let mut t = Tape::new();
        let w = t.param(Tensor::scalar(3.0));
        let y = t.square(w).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(w).item(), 6.0);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        match t.add(a, b) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2]);
                assert_eq!(right, vec![3]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let m = t.constant(Tensor::zeros(&[2, 3]));
        assert!(t.matmul(m, m).is_err());
    }

    #[test]
    fn domain_errors_instead_of_nan() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(t.log(a), Err(Error::Domain { op: "log", index: 1, .. })));
        let b = t.constant(Tensor::vector(vec![-1.0]));
        assert!(matches!(t.sqrt(b), Err(Error::Domain { op: "sqrt", .. })));
        let z = t.constant(Tensor::vector(vec![0.0, 1.0]));
        assert!(t.div(a, z).is_err());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let a = t.param(Tensor::vector(vec![1.0, 2.0]));
        let b = t.square(a).unwrap();
        assert!(matches!(t.backward(b), Err(Error::NotScalar(_))));
    }

    #[test]
    fn constant_branches_get_no_adjoint() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let w = t.param(Tensor::matrix(2, 1, vec![3.0, -2.0]).unwrap());
        let c = t.exp(x).unwrap();
        let y = t.matmul(x, w).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(w).data(), &[1.0, 1.0]);
        assert!(g.get(x).is_none());
        assert!(g.get(c).is_none());
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let z = vec![0.3, -1.2, 2.0, 0.7];
        let mut t = Tape::new();
        let zv = t.param(Tensor::matrix(1, 4, z.clone()).unwrap());
        let target = t.constant(Tensor::matrix(1, 4, vec![0.0, 0.0, 1.0, 0.0]).unwrap());
        let l = t.softmax_cross_entropy(zv, target).unwrap();
        let g = t.backward(l).unwrap().wrt(zv);
        // independent softmax without max-shift
        let s: f64 = z.iter().map(|v| v.exp()).sum();
        let expect: Vec<f64> = z
            .iter()
            .enumerate()
            .map(|(i, v)| v.exp() / s - if i == 2 { 1.0 } else { 0.0 })
            .collect();
        assert!(close(g.data(), &expect, 1e-14));
        assert!((t.value(l).item() - (s.ln() - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_stable_for_confident_logits() {
        let mut t = Tape::new();
        let z = t.param(Tensor::matrix(1, 3, vec![1000.0, 0.0, -1000.0]).unwrap());
        let y = t.constant(Tensor::matrix(1, 3, vec![1.0, 0.0, 0.0]).unwrap());
        let l = t.softmax_cross_entropy(z, y).unwrap();
        assert!(t.value(l).item().abs() < 1e-12);
        assert!(t.backward(l).unwrap().wrt(z).all_finite());
    }

    #[test]
    fn broadcast_row_col_scalar() {
        let mut t = Tape::new();
        let row = t.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let b = t.broadcast(row, &[2, 3]).unwrap();
        assert_eq!(t.value(b).data(), &[1., 2., 3., 1., 2., 3.]);
        let s = t.sum(b).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(row).data(), &[2.0, 2.0, 2.0]);

        let col = t.param(Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap());
        let bc = t.broadcast(col, &[2, 3]).unwrap();
        assert_eq!(t.value(bc).data(), &[5., 5., 5., 6., 6., 6.]);
        let s = t.sum(bc).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(col).data(), &[3.0, 3.0]);
    }

    #[test]
    fn forward_after_set_value_matches_fresh_recording() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        let y = t.square(x).unwrap();
        let s = t.sum(y).unwrap();
        t.set_value(x, Tensor::vector(vec![3.0, -1.0])).unwrap();
        t.forward().unwrap();
        assert_eq!(t.value(s).item(), 10.0);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[6.0, -2.0]);
    }

    #[test]
    fn unused_leaf_has_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(1.0));
        let u = t.param(Tensor::vector(vec![1.0, 1.0]));
        let y = t.exp(x).unwrap();
        let g = t.backward(y).unwrap();
        assert!(g.get(u).is_none());
        assert_eq!(g.wrt(u).data(), &[0.0, 0.0]);
        assert_eq!(g.trainable().count(), 2);
    }
}
