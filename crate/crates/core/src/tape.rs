//! Reverse-mode automatic differentiation over [`Array`] values.
//!
//! Expressions are recorded as nodes in a [`Tape`] arena. `grad` does not
//! produce numbers: it emits *new nodes* built from the same primitive set,
//! so a gradient expression can itself be differentiated. This closure under
//! differentiation is what lets an objective depend on the gradient field
//! driving a leapfrog integrator and still be optimized by a single engine.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::array::Array;
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    /// Differentiable input with a fixed value.
    Leaf,
    /// Non-differentiable input (masks, random draws, data).
    Constant,
    Add,
    Mul,
    MatMul,
    Neg,
    Recip,
    Exp,
    Log,
    Sqrt,
    Square,
    Tanh,
    Sigmoid,
    Softplus,
    Sin,
    Cos,
    /// Log-sum-exp over the last axis, keeping it with extent 1.
    LogSumExp,
    Broadcast(Vec<usize>),
    SumTo(Vec<usize>),
    Slice { axis: usize, start: usize, len: usize },
    Concat { axis: usize },
    Transpose,
    /// Identity value; blocks gradient flow.
    Detach,
    /// Shape-invalid construction; surfaces as an error at eval/grad time.
    Invalid(String),
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    shape: Vec<usize>,
    value: RefCell<Option<Array>>,
}

/// Expression arena. Nodes are append-only, so ids are already in topological
/// order. One tape per differentiable computation; tapes are not Sync.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a tape. Copyable; all arithmetic builds new nodes.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id.0)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>, value: Option<Array>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, inputs, shape, value: RefCell::new(value) });
        Var { tape: self, id: NodeId(nodes.len() - 1) }
    }

    /// Differentiable input node.
    pub fn leaf(&self, value: Array) -> Var<'_> {
        let shape = value.shape().to_vec();
        self.push(Op::Leaf, vec![], shape, Some(value))
    }

    /// Non-differentiable input node; `grad` through it is zero.
    pub fn constant(&self, value: Array) -> Var<'_> {
        let shape = value.shape().to_vec();
        self.push(Op::Constant, vec![], shape, Some(value))
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Array::scalar(v))
    }

    pub fn zeros(&self, shape: &[usize]) -> Var<'_> {
        self.constant(Array::zeros(shape))
    }

    fn with_node<R>(&self, id: NodeId, f: impl FnOnce(&Node) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(&nodes[id.0])
    }

    fn shape_of(&self, id: NodeId) -> Vec<usize> {
        self.with_node(id, |n| n.shape.clone())
    }

    fn unary(&self, op: Op, a: Var<'_>) -> Var<'_> {
        let shape = self.shape_of(a.id);
        self.push(op, vec![a.id], shape, None)
    }

    fn binary_broadcast(&self, op: Op, a: Var<'_>, b: Var<'_>) -> Var<'_> {
        let sa = self.shape_of(a.id);
        let sb = self.shape_of(b.id);
        match Array::broadcast_shape(&sa, &sb) {
            Ok(shape) => self.push(op, vec![a.id, b.id], shape, None),
            Err(e) => self.push(Op::Invalid(e.to_string()), vec![a.id, b.id], vec![], None),
        }
    }

    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Var<'t> {
        if parts.is_empty() {
            return self.push(Op::Invalid("concat of zero nodes".into()), vec![], vec![], None);
        }
        let shapes: Vec<Vec<usize>> = parts.iter().map(|v| self.shape_of(v.id)).collect();
        let rank = shapes[0].len();
        let mut ok = rank > 0 && axis < rank;
        for s in &shapes[1..] {
            ok &= s.len() == rank;
            if ok {
                for k in 0..rank {
                    ok &= k == axis || s[k] == shapes[0][k];
                }
            }
        }
        let ids = parts.iter().map(|v| v.id).collect();
        if !ok {
            return self.push(
                Op::Invalid(format!("concat shapes {:?} along axis {}", shapes, axis)),
                ids,
                vec![],
                None,
            );
        }
        let mut shape = shapes[0].clone();
        shape[axis] = shapes.iter().map(|s| s[axis]).sum();
        self.push(Op::Concat { axis }, ids, shape, None)
    }

    /// Evaluate the expression rooted at `root`. Values are cached per node,
    /// which is sound because leaf values are fixed at construction.
    pub fn eval(&self, root: Var<'_>) -> Result<Array, Error> {
        debug_assert!(std::ptr::eq(root.tape, self));
        let n = root.id.0 + 1;
        let nodes = self.nodes.borrow();
        let mut needed = vec![false; n];
        needed[root.id.0] = true;
        for i in (0..n).rev() {
            if !needed[i] || nodes[i].value.borrow().is_some() {
                continue;
            }
            for inp in &nodes[i].inputs {
                needed[inp.0] = true;
            }
        }
        for (i, node) in nodes.iter().enumerate().take(n) {
            if !needed[i] || node.value.borrow().is_some() {
                continue;
            }
            let value = Self::compute(&nodes, node)?;
            *node.value.borrow_mut() = Some(value);
        }
        let out = nodes[root.id.0].value.borrow().clone().expect("root evaluated");
        Ok(out)
    }

    fn compute(nodes: &[Node], node: &Node) -> Result<Array, Error> {
        // Input values are computed before their consumers; borrow them in
        // place instead of cloning.
        let val = |k: usize| std::cell::Ref::map(nodes[node.inputs[k].0].value.borrow(), |v| {
            v.as_ref().expect("input evaluated before node")
        });
        let out = match &node.op {
            Op::Leaf | Op::Constant => unreachable!("inputs always carry values"),
            Op::Invalid(msg) => return Err(Error::Shape(msg.clone())),
            Op::Add => val(0).zip(&val(1), |x, y| x + y)?,
            Op::Mul => val(0).zip(&val(1), |x, y| x * y)?,
            Op::MatMul => val(0).matmul(&val(1))?,
            Op::Neg => val(0).map(|x| -x),
            Op::Recip => val(0).map(|x| 1.0 / x),
            Op::Exp => val(0).map(f64::exp),
            Op::Log => val(0).map(f64::ln),
            Op::Sqrt => val(0).map(f64::sqrt),
            Op::Square => val(0).map(|x| x * x),
            Op::Tanh => val(0).map(f64::tanh),
            Op::Sigmoid => val(0).map(sigmoid),
            Op::Softplus => val(0).map(softplus),
            Op::Sin => val(0).map(f64::sin),
            Op::Cos => val(0).map(f64::cos),
            Op::LogSumExp => val(0).logsumexp_last(),
            Op::Broadcast(shape) => val(0).broadcast_to(shape)?,
            Op::SumTo(shape) => val(0).sum_to(shape)?,
            Op::Slice { axis, start, len } => val(0).slice(*axis, *start, *len)?,
            Op::Concat { axis } => {
                let vals: Vec<std::cell::Ref<Array>> = (0..node.inputs.len()).map(val).collect();
                let refs: Vec<&Array> = vals.iter().map(|r| &**r).collect();
                Array::concat(&refs, *axis)?
            }
            Op::Transpose => val(0).transpose()?,
            Op::Detach => Array::clone(&val(0)),
        };
        Ok(out)
    }

    /// Build gradient expressions of a scalar `root` with respect to `leaves`.
    ///
    /// Each returned `Var` is a subgraph over the same tape and can be
    /// evaluated or differentiated again. A leaf that does not influence
    /// `root` gets a zero gradient of its own shape.
    pub fn grad<'t>(&'t self, root: Var<'t>, leaves: &[Var<'t>]) -> Result<Vec<Var<'t>>, Error> {
        let root_shape = self.shape_of(root.id);
        let root_numel: usize = root_shape.iter().product();
        if root_numel != 1 {
            return Err(Error::Contract(format!(
                "grad needs a scalar root, got shape {:?}",
                root_shape
            )));
        }
        let n = root.id.0 + 1;

        // Work list: nodes lying on a path from a requested leaf to the root.
        // Pruning to this set keeps inner gradient graphs local: the gradient
        // of a density with respect to a chain state does not drag the whole
        // chain history into the emitted expression.
        struct Work {
            id: usize,
            op: Op,
            inputs: Vec<NodeId>,
        }
        let mut work: Vec<Work> = Vec::new();
        {
            let nodes = self.nodes.borrow();
            let mut ancestor = vec![false; n];
            ancestor[root.id.0] = true;
            for i in (0..n).rev() {
                if !ancestor[i] {
                    continue;
                }
                if let Op::Invalid(msg) = &nodes[i].op {
                    return Err(Error::Shape(msg.clone()));
                }
                if matches!(nodes[i].op, Op::Detach | Op::Constant) {
                    continue;
                }
                for inp in &nodes[i].inputs {
                    ancestor[inp.0] = true;
                }
            }
            let mut reaches_leaf = vec![false; n];
            for leaf in leaves {
                if leaf.id.0 < n {
                    reaches_leaf[leaf.id.0] = true;
                }
            }
            for i in 0..n {
                if reaches_leaf[i] {
                    continue;
                }
                if matches!(nodes[i].op, Op::Detach | Op::Constant | Op::Invalid(_)) {
                    continue;
                }
                reaches_leaf[i] = nodes[i].inputs.iter().any(|inp| reaches_leaf[inp.0]);
            }
            for i in (0..n).rev() {
                if ancestor[i] && reaches_leaf[i] {
                    work.push(Work {
                        id: i,
                        op: nodes[i].op.clone(),
                        inputs: nodes[i].inputs.clone(),
                    });
                }
            }
        }

        let mut adjoint: HashMap<usize, Var<'t>> = HashMap::new();
        adjoint.insert(root.id.0, self.constant(Array::ones(&root_shape)));

        for item in &work {
            let g = match adjoint.get(&item.id) {
                Some(g) => *g,
                None => continue,
            };
            let inputs = &item.inputs;
            let out = Var { tape: self, id: NodeId(item.id) };
            let mut acc = |slot: NodeId, contrib: Var<'t>| {
                adjoint
                    .entry(slot.0)
                    .and_modify(|cur| *cur = *cur + contrib)
                    .or_insert(contrib);
            };
            let in_var = |k: usize| Var { tape: self, id: inputs[k] };
            match item.op {
                Op::Leaf | Op::Constant | Op::Detach | Op::Invalid(_) => {}
                Op::Add => {
                    acc(inputs[0], g.sum_to_shape(&self.shape_of(inputs[0])));
                    acc(inputs[1], g.sum_to_shape(&self.shape_of(inputs[1])));
                }
                Op::Mul => {
                    acc(inputs[0], (g * in_var(1)).sum_to_shape(&self.shape_of(inputs[0])));
                    acc(inputs[1], (g * in_var(0)).sum_to_shape(&self.shape_of(inputs[1])));
                }
                Op::MatMul => {
                    acc(inputs[0], g.matmul(in_var(1).t()));
                    acc(inputs[1], in_var(0).t().matmul(g));
                }
                Op::Neg => acc(inputs[0], -g),
                Op::Recip => acc(inputs[0], -(g * out.square())),
                Op::Exp => acc(inputs[0], g * out),
                Op::Log => acc(inputs[0], g * in_var(0).recip()),
                Op::Sqrt => acc(inputs[0], g * out.recip() * 0.5),
                Op::Square => acc(inputs[0], g * in_var(0) * 2.0),
                Op::Tanh => acc(inputs[0], g * (-out.square() + 1.0)),
                Op::Sigmoid => acc(inputs[0], g * out * (-out + 1.0)),
                Op::Softplus => acc(inputs[0], g * in_var(0).sigmoid()),
                Op::Sin => acc(inputs[0], g * in_var(0).cos()),
                Op::Cos => acc(inputs[0], -(g * in_var(0).sin())),
                Op::LogSumExp => {
                    let a = in_var(0);
                    acc(inputs[0], (a - out.broadcast(&self.shape_of(inputs[0]))).exp() * g);
                }
                Op::Broadcast(_) => acc(inputs[0], g.sum_to_shape(&self.shape_of(inputs[0]))),
                Op::SumTo(_) => acc(inputs[0], g.broadcast(&self.shape_of(inputs[0]))),
                Op::Slice { axis, start, len } => {
                    let in_shape = self.shape_of(inputs[0]);
                    let extent = in_shape[axis];
                    let mut parts: Vec<Var<'t>> = Vec::with_capacity(3);
                    if start > 0 {
                        let mut s = in_shape.clone();
                        s[axis] = start;
                        parts.push(self.zeros(&s));
                    }
                    parts.push(g);
                    if start + len < extent {
                        let mut s = in_shape.clone();
                        s[axis] = extent - start - len;
                        parts.push(self.zeros(&s));
                    }
                    let padded = if parts.len() == 1 { parts[0] } else { self.concat(&parts, axis) };
                    acc(inputs[0], padded);
                }
                Op::Concat { axis } => {
                    let mut offset = 0;
                    for &inp in inputs {
                        let s = self.shape_of(inp);
                        let len = s[axis];
                        acc(inp, g.slice(axis, offset, len));
                        offset += len;
                    }
                }
                Op::Transpose => acc(inputs[0], g.t()),
            }
        }

        Ok(leaves
            .iter()
            .map(|leaf| {
                adjoint
                    .get(&leaf.id.0)
                    .copied()
                    .unwrap_or_else(|| self.zeros(&self.shape_of(leaf.id)))
            })
            .collect())
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.shape_of(self.id)
    }

    pub fn value(&self) -> Result<Array, Error> {
        self.tape.eval(*self)
    }

    /// Scalar value of a one-element expression.
    pub fn item(&self) -> Result<f64, Error> {
        Ok(self.value()?.item())
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(Op::Exp, self)
    }

    pub fn log(self) -> Var<'t> {
        self.tape.unary(Op::Log, self)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape.unary(Op::Sqrt, self)
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(Op::Square, self)
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.unary(Op::Tanh, self)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape.unary(Op::Sigmoid, self)
    }

    pub fn softplus(self) -> Var<'t> {
        self.tape.unary(Op::Softplus, self)
    }

    pub fn sin(self) -> Var<'t> {
        self.tape.unary(Op::Sin, self)
    }

    pub fn cos(self) -> Var<'t> {
        self.tape.unary(Op::Cos, self)
    }

    pub fn recip(self) -> Var<'t> {
        self.tape.unary(Op::Recip, self)
    }

    /// Log-sum-exp over the last axis (kept with extent 1).
    pub fn logsumexp(self) -> Var<'t> {
        let shape = self.shape();
        let out_shape = match shape.len() {
            2 => vec![shape[0], 1],
            1 => vec![1],
            _ => vec![],
        };
        self.tape.push(Op::LogSumExp, vec![self.id], out_shape, None)
    }

    /// Value identity, gradient barrier.
    pub fn detach(self) -> Var<'t> {
        self.tape.unary(Op::Detach, self)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let sa = self.shape();
        let sb = other.shape();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return self.tape.push(
                Op::Invalid(format!("matmul shapes {:?} and {:?} are incompatible", sa, sb)),
                vec![self.id, other.id],
                vec![],
                None,
            );
        }
        self.tape
            .push(Op::MatMul, vec![self.id, other.id], vec![sa[0], sb[1]], None)
    }

    pub fn t(self) -> Var<'t> {
        let s = self.shape();
        if s.len() != 2 {
            return self.tape.push(
                Op::Invalid(format!("transpose needs rank 2, got {:?}", s)),
                vec![self.id],
                vec![],
                None,
            );
        }
        self.tape.push(Op::Transpose, vec![self.id], vec![s[1], s[0]], None)
    }

    pub fn broadcast(self, shape: &[usize]) -> Var<'t> {
        if self.shape() == shape {
            return self;
        }
        match Array::broadcast_shape(&self.shape(), shape) {
            Ok(ref s) if s == shape => {
                self.tape
                    .push(Op::Broadcast(shape.to_vec()), vec![self.id], shape.to_vec(), None)
            }
            _ => self.tape.push(
                Op::Invalid(format!("cannot broadcast {:?} to {:?}", self.shape(), shape)),
                vec![self.id],
                vec![],
                None,
            ),
        }
    }

    pub fn sum_to_shape(self, shape: &[usize]) -> Var<'t> {
        if self.shape() == shape {
            return self;
        }
        match Array::broadcast_shape(shape, &self.shape()) {
            Ok(ref s) if s == &self.shape() => {
                self.tape
                    .push(Op::SumTo(shape.to_vec()), vec![self.id], shape.to_vec(), None)
            }
            _ => self.tape.push(
                Op::Invalid(format!("{:?} is not a reduction of {:?}", shape, self.shape())),
                vec![self.id],
                vec![],
                None,
            ),
        }
    }

    /// Sum all elements to a scalar.
    pub fn sum(self) -> Var<'t> {
        self.sum_to_shape(&[])
    }

    /// Sum over rows: `[r, c] -> [1, c]` style reductions via `sum_to_shape`.
    pub fn mean(self) -> Var<'t> {
        let n: usize = self.shape().iter().product();
        self.sum() * (1.0 / n as f64)
    }

    /// Concatenate `self` with `others` along columns.
    pub fn concat_with(self, others: &[Var<'t>]) -> Var<'t> {
        if others.is_empty() {
            return self;
        }
        let mut all = vec![self];
        all.extend_from_slice(others);
        self.tape.concat(&all, 1)
    }

    pub fn slice(self, axis: usize, start: usize, len: usize) -> Var<'t> {
        let s = self.shape();
        let ok = axis < s.len() && start + len <= s[axis];
        if !ok {
            return self.tape.push(
                Op::Invalid(format!(
                    "slice axis {} range {}..{} out of bounds for {:?}",
                    axis,
                    start,
                    start + len,
                    s
                )),
                vec![self.id],
                vec![],
                None,
            );
        }
        let mut out = s.clone();
        out[axis] = len;
        self.tape
            .push(Op::Slice { axis, start, len }, vec![self.id], out, None)
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary_broadcast(Op::Add, self, rhs)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self + (-rhs)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary_broadcast(Op::Mul, self, rhs)
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self * rhs.recip()
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(Op::Neg, self)
    }
}

impl<'t> std::ops::Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self + self.tape.scalar(rhs)
    }
}

impl<'t> std::ops::Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self + self.tape.scalar(-rhs)
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self * self.tape.scalar(rhs)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{central_diff, max_rel_err, random_vec, seeded_rng};
    use rand::Rng;

    #[test]
    fn eval_arithmetic_identities() {
        let t = Tape::new();
        let x = t.leaf(Array::scalar(3.0));
        assert_eq!((x * x).item().unwrap(), 9.0);

        let t = Tape::new();
        let x = t.leaf(Array::scalar(1.5));
        assert!((x.exp().log().item().unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn eval_matches_scalar_loop_oracle() {
        // softplus chain y = sum(softplus(a*x + b) * x) recomputed by hand.
        let mut rng = seeded_rng(7);
        let xs = random_vec(&mut rng, 4, -2.0, 2.0);
        let a = 1.3;
        let b = -0.4;

        let t = Tape::new();
        let x = t.leaf(Array::vector(&xs));
        let y = ((x * a + b).softplus() * x).sum();
        let got = y.item().unwrap();

        let mut want = 0.0;
        for &v in &xs {
            let z = a * v + b;
            let sp = z.max(0.0) + (-z.abs()).exp().ln_1p();
            want += sp * v;
        }
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn grad_polynomials() {
        let t = Tape::new();
        let x = t.leaf(Array::scalar(3.0));
        let y = x * x;
        let g = t.grad(y, &[x]).unwrap();
        assert_eq!(g[0].item().unwrap(), 6.0);

        // d2/dx2 x^3 = 6x at x=2 -> 12 via grad of grad
        let t = Tape::new();
        let x = t.leaf(Array::scalar(2.0));
        let y = x * x * x;
        let g = t.grad(y, &[x]).unwrap()[0];
        let h = t.grad(g, &[x]).unwrap()[0];
        assert!((h.item().unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn double_backprop_quartic() {
        // f(x) = x^4, f''(1.5) = 12 * 1.5^2 = 27
        let t = Tape::new();
        let x = t.leaf(Array::scalar(1.5));
        let y = x.square().square();
        let g = t.grad(y, &[x]).unwrap()[0];
        let h = t.grad(g, &[x]).unwrap()[0];
        assert!((h.item().unwrap() - 27.0).abs() < 1e-10);
    }

    #[test]
    fn second_derivatives_closed_forms() {
        let probe = |f: &dyn Fn(Var) -> Var, x0: f64| -> f64 {
            let t = Tape::new();
            let x = t.leaf(Array::scalar(x0));
            let y = f(x);
            let g = t.grad(y, &[x]).unwrap()[0];
            t.grad(g, &[x]).unwrap()[0].item().unwrap()
        };
        assert!((probe(&|x| x.sin(), 0.7) + 0.7f64.sin()).abs() < 1e-12);
        assert!((probe(&|x| x.log(), 2.0) + 0.25).abs() < 1e-12);
        assert!((probe(&|x| x.sqrt(), 4.0) + 0.25 * 4.0f64.powf(-1.5)).abs() < 1e-12);
        // sigmoid'' = s(1-s)(1-2s)
        let s = 1.0 / (1.0 + (-0.3f64).exp());
        assert!((probe(&|x| x.sigmoid(), 0.3) - s * (1.0 - s) * (1.0 - 2.0 * s)).abs() < 1e-12);
        assert!((probe(&|x| x.recip(), 2.0) - 2.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        // Scalar loss through a 4 -> 256 -> 1 tanh net; FD over every parameter.
        let mut rng = seeded_rng(42);
        let input = random_vec(&mut rng, 4, -1.0, 1.0);
        let w1 = random_vec(&mut rng, 4 * 256, -0.3, 0.3);
        let b1 = random_vec(&mut rng, 256, -0.1, 0.1);
        let w2 = random_vec(&mut rng, 256, -0.3, 0.3);
        let b2 = random_vec(&mut rng, 1, -0.1, 0.1);

        let loss = |w1v: &[f64], b1v: &[f64], w2v: &[f64], b2v: &[f64]| -> (f64, Option<Vec<f64>>) {
            let t = Tape::new();
            let x = t.constant(Array::from_vec(&[1, 4], input.clone()).unwrap());
            let w1n = t.leaf(Array::from_vec(&[4, 256], w1v.to_vec()).unwrap());
            let b1n = t.leaf(Array::vector(b1v));
            let w2n = t.leaf(Array::from_vec(&[256, 1], w2v.to_vec()).unwrap());
            let b2n = t.leaf(Array::vector(b2v));
            let h = (x.matmul(w1n) + b1n).tanh();
            let out = h.matmul(w2n) + b2n;
            let y = out.square().sum();
            let v = y.item().unwrap();
            let gs = t.grad(y, &[w1n, b1n, w2n, b2n]).unwrap();
            let mut flat = Vec::new();
            for g in gs {
                flat.extend_from_slice(g.value().unwrap().data());
            }
            (v, Some(flat))
        };

        let (_, got) = loss(&w1, &b1, &w2, &b2);
        let got = got.unwrap();

        let mut all: Vec<f64> = Vec::new();
        all.extend_from_slice(&w1);
        all.extend_from_slice(&b1);
        all.extend_from_slice(&w2);
        all.extend_from_slice(&b2);
        let split = |v: &[f64]| {
            let (a, rest) = v.split_at(4 * 256);
            let (b, rest2) = rest.split_at(256);
            let (c, d) = rest2.split_at(256);
            (a.to_vec(), b.to_vec(), c.to_vec(), d.to_vec())
        };
        let want = central_diff(
            |v| {
                let (a, b, c, d) = split(v);
                loss(&a, &b, &c, &d).0
            },
            &all,
            1e-5,
        );
        let err = max_rel_err(&got, &want, 1e-6);
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn detach_blocks_gradient_flow() {
        let t = Tape::new();
        let x = t.leaf(Array::scalar(4.0));
        let y = t.leaf(Array::scalar(5.0));
        let z = x.detach() * y;
        let gs = t.grad(z, &[x, y]).unwrap();
        assert_eq!(gs[0].item().unwrap(), 0.0);
        assert_eq!(gs[1].item().unwrap(), 4.0);
    }

    #[test]
    fn detach_preserves_values() {
        let mut rng = seeded_rng(3);
        for _ in 0..16 {
            let shape: Vec<usize> = vec![rng.gen_range(1..5), rng.gen_range(1..5)];
            let data = random_vec(&mut rng, shape.iter().product(), -10.0, 10.0);
            let t = Tape::new();
            let x = t.leaf(Array::from_vec(&shape, data).unwrap());
            assert_eq!(x.detach().value().unwrap(), x.value().unwrap());
        }
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let t = Tape::new();
        let x = t.leaf(Array::scalar(2.0));
        let other = t.leaf(Array::vector(&[1.0, 2.0, 3.0]));
        let y = x * x;
        let g = t.grad(y, &[other]).unwrap()[0];
        assert_eq!(g.value().unwrap(), Array::zeros(&[3]));
    }

    #[test]
    fn non_scalar_root_is_contract_error() {
        let t = Tape::new();
        let x = t.leaf(Array::vector(&[1.0, 2.0]));
        let err = t.grad(x, &[x]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err}");
    }

    #[test]
    fn shape_mismatch_surfaces_both_shapes() {
        let t = Tape::new();
        let a = t.leaf(Array::from_vec(&[2, 3], vec![0.0; 6]).unwrap());
        let b = t.leaf(Array::from_vec(&[2, 2], vec![0.0; 4]).unwrap());
        let bad = a + b;
        let err = t.eval(bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");

        let bad2 = a.matmul(b);
        let err2 = t.eval(bad2).unwrap_err();
        assert!(err2.to_string().contains("matmul"), "{err2}");
    }

    #[test]
    fn every_primitive_is_twice_differentiable() {
        // Composite scalar touching each primitive; grad of grad must
        // evaluate without unregistered-op failures.
        let t = Tape::new();
        let x = t.leaf(Array::from_vec(&[2, 3], vec![0.3, -0.2, 0.5, 0.9, -0.7, 0.1]).unwrap());
        let w = t.leaf(Array::from_vec(&[3, 2], vec![0.1, -0.4, 0.2, 0.3, -0.2, 0.5]).unwrap());

        let m = x.matmul(w); // matmul
        let sq = m.square() + 1.0; // square, add (broadcast scalar)
        let mixed = sq.log().exp().sqrt().tanh() * 0.5; // log, exp, sqrt, tanh, mul
        let s1 = mixed.sigmoid().softplus(); // sigmoid, softplus
        let trig = s1.sin() + s1.cos(); // sin, cos
        let r = trig.recip(); // recip
        let lse = r.logsumexp(); // logsumexp
        let left = lse.slice(0, 0, 1); // slice
        let both = t.concat(&[left, left], 0); // concat
        let transposed = both.t(); // transpose
        let broad = transposed.broadcast(&[2, 2]); // broadcast (identity shape here)
        let y = (broad.sum_to_shape(&[1, 2]) * broad.detach().sum_to_shape(&[1, 2])).sum(); // sumto, detach, neg below
        let y = -(-y);

        let g = t.grad(y, &[x, w]).unwrap();
        let gsum = g[0].sum() + g[1].sum();
        let h = t.grad(gsum, &[x, w]).unwrap();
        for hv in &h {
            let arr = hv.value().unwrap();
            assert!(arr.all_finite());
        }
    }

    #[test]
    fn broadcast_gradients_match_finite_differences() {
        // [B,D] + [D] bias and column scaling exercise SumTo paths.
        let mut rng = seeded_rng(11);
        let xv = random_vec(&mut rng, 6, -1.0, 1.0);
        let bv = random_vec(&mut rng, 3, -1.0, 1.0);

        let f = |b: &[f64]| -> f64 {
            let t = Tape::new();
            let x = t.constant(Array::from_vec(&[2, 3], xv.clone()).unwrap());
            let bias = t.leaf(Array::vector(b));
            ((x + bias).square()).sum().item().unwrap()
        };
        let t = Tape::new();
        let x = t.constant(Array::from_vec(&[2, 3], xv.clone()).unwrap());
        let bias = t.leaf(Array::vector(&bv));
        let y = (x + bias).square().sum();
        let g = t.grad(y, &[bias]).unwrap()[0].value().unwrap();
        let want = central_diff(f, &bv, 1e-6);
        assert!(max_rel_err(g.data(), &want, 1e-8) < 1e-6);
    }

    #[test]
    fn logsumexp_gradient_is_softmax() {
        let t = Tape::new();
        let x = t.leaf(Array::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = x.logsumexp().sum();
        let g = t.grad(y, &[x]).unwrap()[0].value().unwrap();
        let z: f64 = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        for (k, &gv) in g.data().iter().enumerate() {
            let want = ((k + 1) as f64 - z).exp();
            assert!((gv - want).abs() < 1e-12);
        }
    }
}
