//! Reverse-mode autodiff over a flat operation tape.
//!
//! Recording is eager: every recorded op computes its output immediately, so
//! model code can make data-dependent decisions (switch thresholds, graph
//! construction) while the tape is being built. The recorded graph is then a
//! fixed straight-line program that supports two further passes:
//!
//! * [`Tape::backward`] — reverse sweep accumulating adjoints per parameter;
//! * [`Tape::forward_eval`] — replay of the whole tape after parameters or
//!   inputs changed, with the control flow frozen exactly as recorded. This
//!   is what central-difference gradient checks perturb.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::{leaky_relu, sigmoid, Tensor};

/// Handle to a tape node. Ids increase strictly in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    /// Value fixed at record time; no gradient flows into it.
    Const,
    /// Named input, rebindable on replay.
    Input(String),
    /// Named learnable parameter, read from the [`ParamSet`] on replay.
    Param(String),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Concat { parts: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize, len: usize },
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu { input: NodeId, slope: f64 },
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Neg(NodeId),
    Square(NodeId),
    Softmax { input: NodeId, axis: usize },
    Sum(NodeId),
    Mean(NodeId),
    Broadcast { input: NodeId, shape: Vec<usize> },
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "elementwise-mul",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::LeakyRelu { .. } => "leaky-relu",
            Op::Exp(_) => "exp",
            Op::Ln(_) => "ln",
            Op::Sqrt(_) => "sqrt",
            Op::Neg(_) => "neg",
            Op::Square(_) => "square",
            Op::Softmax { .. } => "softmax",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Broadcast { .. } => "broadcast",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    out: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
    inputs: BTreeMap<String, NodeId>,
    outputs: BTreeMap<String, NodeId>,
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

    /// Cached output of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].out
    }

    pub fn scalar_value(&self, id: NodeId) -> Result<f64> {
        self.value(id).item()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].out.shape()
    }

    fn push(&mut self, op: Op, out: Tensor) -> Result<NodeId> {
        if !out.is_finite() {
            return Err(Error::NonFinite(format!(
                "tape node {} ({})",
                self.nodes.len(),
                op.kind()
            )));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, out });
        Ok(id)
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let v = |id: &NodeId| &self.nodes[id.0].out;
        match op {
            Op::Const | Op::Input(_) | Op::Param(_) => unreachable!("leaves carry their value"),
            Op::MatMul(a, b) => v(a).matmul(v(b)),
            Op::Add(a, b) => v(a).add(v(b)),
            Op::Sub(a, b) => v(a).sub(v(b)),
            Op::Mul(a, b) => v(a).mul(v(b)),
            Op::Concat { parts, axis } => {
                let refs: Vec<&Tensor> = parts.iter().map(v).collect();
                Tensor::concat(&refs, *axis)
            }
            Op::Slice { input, axis, start, len } => v(input).slice(*axis, *start, *len),
            Op::Sigmoid(a) => Ok(v(a).map(sigmoid)),
            Op::Tanh(a) => Ok(v(a).map(f64::tanh)),
            Op::LeakyRelu { input, slope } => {
                let s = *slope;
                Ok(v(input).map(|x| leaky_relu(x, s)))
            }
            Op::Exp(a) => Ok(v(a).map(f64::exp)),
            Op::Ln(a) => Ok(v(a).map(f64::ln)),
            Op::Sqrt(a) => Ok(v(a).map(f64::sqrt)),
            Op::Neg(a) => Ok(v(a).map(|x| -x)),
            Op::Square(a) => Ok(v(a).map(|x| x * x)),
            Op::Softmax { input, axis } => v(input).softmax(*axis),
            Op::Sum(a) => Ok(Tensor::scalar(v(a).sum())),
            Op::Mean(a) => {
                let t = v(a);
                Ok(Tensor::scalar(t.sum() / t.numel() as f64))
            }
            Op::Broadcast { input, shape } => v(input).broadcast(shape),
        }
    }

    fn record(&mut self, op: Op) -> Result<NodeId> {
        let out = self.eval(&op).map_err(|e| self.tag_node_err(e, &op))?;
        self.push(op, out)
    }

    fn tag_node_err(&self, e: Error, op: &Op) -> Error {
        match e {
            Error::Shape { expected, actual, .. } => Error::TapeShape {
                node: self.nodes.len(),
                op: op.kind().to_string(),
                expected,
                actual,
            },
            other => other,
        }
    }

    // ── Leaves ──────────────────────────────────────────────────────

    /// Record a constant. No gradient flows into constants, and replay keeps
    /// the recorded value.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(Op::Const, value)
    }

    pub fn scalar(&mut self, v: f64) -> Result<NodeId> {
        self.constant(Tensor::scalar(v))
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Result<NodeId> {
        self.constant(Tensor::zeros(shape))
    }

    /// Bind a named input. Each name may be bound once per tape.
    pub fn input(&mut self, name: &str, value: Tensor) -> Result<NodeId> {
        if self.inputs.contains_key(name) {
            return Err(Error::Config(format!("input bound twice: {name}")));
        }
        let id = self.push(Op::Input(name.to_string()), value)?;
        self.inputs.insert(name.to_string(), id);
        Ok(id)
    }

    /// Reference a named parameter. Repeated references return the same node
    /// so gradients accumulate per name.
    pub fn param(&mut self, name: &str, params: &ParamSet) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let value = params.get(name)?.clone();
        let id = self.push(Op::Param(name.to_string()), value)?;
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    // ── Recorded operations ─────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul(a, b))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        self.record(Op::Concat { parts: parts.to_vec(), axis })
    }

    pub fn slice(&mut self, input: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        self.record(Op::Slice { input, axis, start, len })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, input: NodeId, slope: f64) -> Result<NodeId> {
        self.record(Op::LeakyRelu { input, slope })
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sqrt(a))
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Neg(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Square(a))
    }

    pub fn softmax(&mut self, input: NodeId, axis: usize) -> Result<NodeId> {
        self.record(Op::Softmax { input, axis })
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Mean(a))
    }

    pub fn broadcast(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.record(Op::Broadcast { input, shape })
    }

    /// `a * k` for a record-time constant `k`.
    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        let sh = self.shape(a).to_vec();
        let c = self.constant(Tensor::full(sh, k))?;
        self.mul(a, c)
    }

    // ── Named outputs ───────────────────────────────────────────────

    pub fn mark_output(&mut self, name: &str, id: NodeId) {
        self.outputs.insert(name.to_string(), id);
    }

    pub fn output(&self, name: &str) -> Result<NodeId> {
        self.outputs
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown tape output: {name}")))
    }

    // ── Replay ──────────────────────────────────────────────────────

    /// Recompute every node in creation order. Parameter leaves refresh from
    /// `params`; input leaves refresh from `inputs` when bound there (and
    /// keep their recorded value otherwise). Control flow is frozen: the op
    /// sequence is exactly the recorded one. Returns the marked outputs.
    pub fn forward_eval(
        &mut self,
        params: &ParamSet,
        inputs: &BTreeMap<String, Tensor>,
    ) -> Result<BTreeMap<String, Tensor>> {
        for i in 0..self.nodes.len() {
            let fresh = match &self.nodes[i].op {
                Op::Const => None,
                Op::Input(name) => match inputs.get(name) {
                    Some(t) => {
                        if t.shape() != self.nodes[i].out.shape() {
                            return Err(Error::shape(
                                &format!("rebind input {name}"),
                                format!("{:?}", self.nodes[i].out.shape()),
                                format!("{:?}", t.shape()),
                            ));
                        }
                        Some(t.clone())
                    }
                    None => None,
                },
                Op::Param(name) => {
                    let t = params.get(name)?;
                    if t.shape() != self.nodes[i].out.shape() {
                        return Err(Error::shape(
                            &format!("rebind param {name}"),
                            format!("{:?}", self.nodes[i].out.shape()),
                            format!("{:?}", t.shape()),
                        ));
                    }
                    Some(t.clone())
                }
                op => {
                    let op = op.clone();
                    Some(self.eval(&op).map_err(|e| self.tag_node_err(e, &op))?)
                }
            };
            if let Some(t) = fresh {
                if !t.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "tape node {i} ({}) during replay",
                        self.nodes[i].op.kind()
                    )));
                }
                self.nodes[i].out = t;
            }
        }
        let mut out = BTreeMap::new();
        for (name, id) in &self.outputs {
            out.insert(name.clone(), self.nodes[id.0].out.clone());
        }
        Ok(out)
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse sweep from `output`, seeded with `seed`. Returns the gradient
    /// for every parameter in `params`; parameters the output does not reach
    /// get zero gradients of the registered shape.
    pub fn backward(
        &self,
        output: NodeId,
        seed: &Tensor,
        params: &ParamSet,
    ) -> Result<BTreeMap<String, Tensor>> {
        if seed.shape() != self.shape(output) {
            return Err(Error::shape(
                "backward seed",
                format!("{:?}", self.shape(output)),
                format!("{:?}", seed.shape()),
            ));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(seed.clone());

        for i in (0..=output.0).rev() {
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            let push = |adj: &mut Vec<Option<Tensor>>, id: NodeId, part: Tensor| -> Result<()> {
                match &mut adj[id.0] {
                    Some(acc) => acc.add_assign(&part)?,
                    slot @ None => *slot = Some(part),
                }
                Ok(())
            };
            let v = |id: NodeId| &self.nodes[id.0].out;
            match &node.op {
                Op::Const | Op::Input(_) => {}
                Op::Param(_) => {
                    // Leaf: keep the adjoint for collection below.
                    adj[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (v(*a), v(*b));
                    let (da, db) = match (ta.rank(), tb.rank()) {
                        (2, 2) => (g.matmul(&tb.transpose()?)?, ta.transpose()?.matmul(&g)?),
                        (2, 1) => (g.outer(tb)?, ta.transpose()?.matmul(&g)?),
                        (1, 2) => (tb.matmul(&g)?, ta.outer(&g)?),
                        _ => unreachable!("matmul recorded with unsupported ranks"),
                    };
                    push(&mut adj, *a, da)?;
                    push(&mut adj, *b, db)?;
                }
                Op::Add(a, b) => {
                    push(&mut adj, *a, g.clone())?;
                    push(&mut adj, *b, g)?;
                }
                Op::Sub(a, b) => {
                    push(&mut adj, *a, g.clone())?;
                    push(&mut adj, *b, g.scale(-1.0))?;
                }
                Op::Mul(a, b) => {
                    push(&mut adj, *a, g.mul(v(*b))?)?;
                    push(&mut adj, *b, g.mul(v(*a))?)?;
                }
                Op::Concat { parts, axis } => {
                    let mut offset = 0;
                    for p in parts {
                        let len = v(*p).shape()[*axis];
                        push(&mut adj, *p, g.slice(*axis, offset, len)?)?;
                        offset += len;
                    }
                }
                Op::Slice { input, axis, start, .. } => {
                    push(&mut adj, *input, v(*input).slice_adjoint(&g, *axis, *start)?)?;
                }
                Op::Sigmoid(a) => {
                    let dy = node.out.map(|y| y * (1.0 - y));
                    push(&mut adj, *a, g.mul(&dy)?)?;
                }
                Op::Tanh(a) => {
                    let dy = node.out.map(|y| 1.0 - y * y);
                    push(&mut adj, *a, g.mul(&dy)?)?;
                }
                Op::LeakyRelu { input, slope } => {
                    let s = *slope;
                    let dy = v(*input).map(|x| if x >= 0.0 { 1.0 } else { s });
                    push(&mut adj, *input, g.mul(&dy)?)?;
                }
                Op::Exp(a) => {
                    push(&mut adj, *a, g.mul(&node.out)?)?;
                }
                Op::Ln(a) => {
                    let dy = v(*a).map(|x| 1.0 / x);
                    push(&mut adj, *a, g.mul(&dy)?)?;
                }
                Op::Sqrt(a) => {
                    let dy = node.out.map(|y| 0.5 / y);
                    push(&mut adj, *a, g.mul(&dy)?)?;
                }
                Op::Neg(a) => {
                    push(&mut adj, *a, g.scale(-1.0))?;
                }
                Op::Square(a) => {
                    let dy = v(*a).map(|x| 2.0 * x);
                    push(&mut adj, *a, g.mul(&dy)?)?;
                }
                Op::Softmax { input, axis } => {
                    // dx_l = y_l * (g_l - sum_j g_j y_j), per softmax lane.
                    let y = &node.out;
                    let lanes = y.shape()[*axis];
                    let outer: usize = y.shape()[..*axis].iter().product();
                    let inner: usize = y.shape()[*axis + 1..].iter().product();
                    let mut dx = Tensor::zeros_like(y);
                    for o in 0..outer {
                        for i2 in 0..inner {
                            let idx = |l: usize| (o * lanes + l) * inner + i2;
                            let mut dot = 0.0;
                            for l in 0..lanes {
                                dot += g.data()[idx(l)] * y.data()[idx(l)];
                            }
                            for l in 0..lanes {
                                dx.data_mut()[idx(l)] =
                                    y.data()[idx(l)] * (g.data()[idx(l)] - dot);
                            }
                        }
                    }
                    push(&mut adj, *input, dx)?;
                }
                Op::Sum(a) => {
                    let gs = g.item()?;
                    push(&mut adj, *a, Tensor::full(v(*a).shape().to_vec(), gs))?;
                }
                Op::Mean(a) => {
                    let n = v(*a).numel() as f64;
                    let gs = g.item()? / n;
                    push(&mut adj, *a, Tensor::full(v(*a).shape().to_vec(), gs))?;
                }
                Op::Broadcast { input, .. } => {
                    push(&mut adj, *input, v(*input).broadcast_adjoint(&g))?;
                }
            }
        }

        let mut grads = BTreeMap::new();
        for (name, t) in params.iter() {
            let g = self
                .params
                .get(name)
                .and_then(|id| adj[id.0].clone())
                .unwrap_or_else(|| Tensor::zeros_like(t));
            grads.insert(name.clone(), g);
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_power_rule() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let x = tape.param("x", &p).unwrap();
        let y = tape.square(x).unwrap();
        assert_eq!(tape.scalar_value(y).unwrap(), 9.0);
        let grads = tape.backward(y, &Tensor::scalar(1.0), &p).unwrap();
        assert_eq!(grads["x"].item().unwrap(), 6.0);
    }

    #[test]
    fn sigmoid_of_zero_grad() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::vector(vec![0.0, 0.0, 0.0])).unwrap();
        let mut tape = Tape::new();
        let x = tape.param("x", &p).unwrap();
        let s = tape.sigmoid(x).unwrap();
        assert!(tape.value(s).data().iter().all(|&v| v == 0.5));
        let y = tape.sum(s).unwrap();
        let grads = tape.backward(y, &Tensor::scalar(1.0), &p).unwrap();
        for &g in grads["x"].data() {
            assert!((g - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn unreachable_params_get_zero_gradient() {
        let mut p = ParamSet::new();
        p.insert("used", Tensor::scalar(2.0)).unwrap();
        p.insert("unused", Tensor::vector(vec![1.0, 1.0])).unwrap();
        let mut tape = Tape::new();
        let x = tape.param("used", &p).unwrap();
        let y = tape.square(x).unwrap();
        let grads = tape.backward(y, &Tensor::scalar(1.0), &p).unwrap();
        assert_eq!(grads["unused"].data(), &[0.0, 0.0]);
        assert_eq!(grads["unused"].shape(), &[2]);
    }

    #[test]
    fn seed_shape_mismatch_rejected() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(1.0)).unwrap();
        let mut tape = Tape::new();
        let x = tape.param("x", &p).unwrap();
        let y = tape.square(x).unwrap();
        assert!(tape.backward(y, &Tensor::vector(vec![1.0, 2.0]), &p).is_err());
    }

    #[test]
    fn shape_error_names_node_and_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let b = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let err = tape.add(a, b).unwrap_err();
        match err {
            Error::TapeShape { node, op, .. } => {
                assert_eq!(node, 2);
                assert_eq!(op, "add");
            }
            other => panic!("expected TapeShape, got {other:?}"),
        }
    }

    #[test]
    fn replay_reflects_parameter_mutation() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let x = tape.param("x", &p).unwrap();
        let y = tape.square(x).unwrap();
        tape.mark_output("y", y);
        p.set_scalar("x", 4.0).unwrap();
        let out = tape.forward_eval(&p, &BTreeMap::new()).unwrap();
        assert_eq!(out["y"].item().unwrap(), 16.0);
    }

    #[test]
    fn replay_rebinds_inputs() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(2.0)).unwrap();
        let mut tape = Tape::new();
        let w = tape.param("w", &p).unwrap();
        let x = tape.input("x", Tensor::scalar(5.0)).unwrap();
        let y = tape.mul(w, x).unwrap();
        tape.mark_output("y", y);
        let mut binds = BTreeMap::new();
        binds.insert("x".to_string(), Tensor::scalar(7.0));
        let out = tape.forward_eval(&p, &binds).unwrap();
        assert_eq!(out["y"].item().unwrap(), 14.0);
        // unbound replay keeps the rebound value already stored
        let out = tape.forward_eval(&p, &BTreeMap::new()).unwrap();
        assert_eq!(out["y"].item().unwrap(), 14.0);
    }

    #[test]
    fn forward_backward_bit_identical() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::matrix(&[vec![0.3, -0.7], vec![1.1, 0.2]]).unwrap())
            .unwrap();
        let build = |p: &ParamSet| {
            let mut tape = Tape::new();
            let w = tape.param("w", p).unwrap();
            let x = tape.constant(Tensor::vector(vec![0.5, -1.5])).unwrap();
            let h = tape.matmul(w, x).unwrap();
            let s = tape.softmax(h, 0).unwrap();
            let t = tape.tanh(s).unwrap();
            let y = tape.sum(t).unwrap();
            let g = tape.backward(y, &Tensor::scalar(1.0), p).unwrap();
            (tape.scalar_value(y).unwrap(), g)
        };
        let (y1, g1) = build(&p);
        let (y2, g2) = build(&p);
        assert_eq!(y1.to_bits(), y2.to_bits());
        for (a, b) in g1["w"].data().iter().zip(g2["w"].data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let big = tape.constant(Tensor::scalar(800.0)).unwrap();
        assert!(matches!(tape.exp(big), Err(Error::NonFinite(_))));
    }
}
