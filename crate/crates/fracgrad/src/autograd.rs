//! Reverse-mode tape over linear layers with fractional weight gradients.
//!
//! Differentiation follows the single-layer chain-rule convention: only the
//! weight leaf of each linear node is differentiated to fractional order;
//! everything propagated through the graph (the upstream signal G, the bias
//! gradient, the input gradient) stays integer-order. Concretely a linear
//! node with cached input X receives G and stores
//! `weight_grad_block11(ctx, G)` for W and `colsum(G)` for b, then passes
//! `G · W^T` upstream.

use crate::error::{Error, Result};
use crate::fracdiff::{weight_grad_block11, LinearContext};
use crate::linalg::Matrix;
use crate::special::FracOrder;

/// A linear layer y = x·W + b whose weight gradient is taken at order
/// `alpha`. Shapes are fixed at construction: W is m x n, b is 1 x n.
#[derive(Debug, Clone)]
pub struct FLinearLayer {
    w: Matrix,
    b: Matrix,
    alpha: FracOrder,
    eps: f64,
}

impl FLinearLayer {
    pub fn new(w: Matrix, b: Matrix, alpha: FracOrder, eps: f64) -> Result<Self> {
        if b.shape() != (1, w.cols()) {
            return Err(Error::ShapeMismatch {
                op: "linear layer (w against b)",
                left: w.shape(),
                right: b.shape(),
            });
        }
        if w.rows() == 0 || w.cols() == 0 {
            return Err(Error::Config {
                message: "linear layer requires non-empty weight matrix".into(),
            });
        }
        if !(eps > 0.0) {
            return Err(Error::Config {
                message: format!("clamp floor eps must be positive, got {eps}"),
            });
        }
        Ok(FLinearLayer { w, b, alpha, eps })
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    /// Mutable weight access for optimizer steps. Callers must preserve the
    /// construction shape.
    pub fn w_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn b_mut(&mut self) -> &mut Matrix {
        &mut self.b
    }

    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.w.rows() {
            return Err(Error::ShapeMismatch {
                op: "linear forward",
                left: x.shape(),
                right: self.w.shape(),
            });
        }
        x.matmul(&self.w)?.add(&self.b)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Which weight-gradient rule [`Tape::backward_route`] applies at linear
/// nodes. The integer route bypasses the fractional kernel entirely and is
/// the parity reference for the order-one reduction and for benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardRoute {
    Fractional,
    Integer,
}

enum Node<'a> {
    Input {
        value: Matrix,
        #[allow(dead_code)]
        trainable: bool,
    },
    FLinear {
        layer: &'a FLinearLayer,
        input: NodeId,
        cached_input: Matrix,
        output: Matrix,
    },
    Mse {
        pred: NodeId,
        label: Matrix,
        loss: f64,
    },
}

/// Record of one forward sweep. Layers are borrowed read-only for the life
/// of the tape; parameter updates happen between sweeps, on fresh tapes.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    node_grads: Vec<Option<Matrix>>,
    weight_grads: Vec<Option<Matrix>>,
    bias_grads: Vec<Option<Matrix>>,
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) -> Result<()> {
    *slot = match slot.take() {
        Some(existing) => Some(existing.add(&g)?),
        None => Some(g),
    };
    Ok(())
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            node_grads: Vec::new(),
            weight_grads: Vec::new(),
            bias_grads: Vec::new(),
        }
    }

    fn push(&mut self, node: Node<'a>) -> NodeId {
        self.nodes.push(node);
        self.node_grads.push(None);
        self.weight_grads.push(None);
        self.bias_grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn value_of(&self, id: NodeId) -> Result<&Matrix> {
        match self.nodes.get(id.0) {
            Some(Node::Input { value, .. }) => Ok(value),
            Some(Node::FLinear { output, .. }) => Ok(output),
            Some(Node::Mse { .. }) => Err(Error::State {
                message: "loss node carries a scalar, not a matrix value".into(),
            }),
            None => Err(Error::IndexOutOfRange {
                what: "node",
                index: id.0,
                bound: self.nodes.len(),
            }),
        }
    }

    /// Registers a leaf matrix. The trainable flag is descriptive only;
    /// leaf gradients are computed either way.
    pub fn input(&mut self, value: Matrix, trainable: bool) -> NodeId {
        self.push(Node::Input { value, trainable })
    }

    /// Applies `layer` to the value of `input`, caching both sides for the
    /// backward sweep.
    pub fn flinear(&mut self, layer: &'a FLinearLayer, input: NodeId) -> Result<NodeId> {
        let x = self.value_of(input)?;
        let output = layer.forward(x)?;
        let cached_input = x.clone();
        Ok(self.push(Node::FLinear {
            layer,
            input,
            cached_input,
            output,
        }))
    }

    /// Mean-squared-error head: L = (1/N) * sum((pred - label)^2) over all
    /// N entries.
    pub fn mse(&mut self, pred: NodeId, label: Matrix) -> Result<NodeId> {
        let pred_val = self.value_of(pred)?;
        if pred_val.shape() != label.shape() {
            return Err(Error::ShapeMismatch {
                op: "mse",
                left: pred_val.shape(),
                right: label.shape(),
            });
        }
        let n = pred_val.data().len() as f64;
        let mut sum = 0.0;
        for (p, l) in pred_val.data().iter().zip(label.data()) {
            let d = p - l;
            sum += d * d;
        }
        let loss = sum / n;
        Ok(self.push(Node::Mse { pred, label, loss }))
    }

    /// Scalar loss held by a [`Tape::mse`] node.
    pub fn loss(&self, id: NodeId) -> Option<f64> {
        match self.nodes.get(id.0) {
            Some(Node::Mse { loss, .. }) => Some(*loss),
            _ => None,
        }
    }

    /// Matrix value of an input or linear node.
    pub fn value(&self, id: NodeId) -> Option<&Matrix> {
        self.value_of(id).ok()
    }

    /// Reverse sweep with fractional weight gradients at linear nodes.
    pub fn backward(&mut self) -> Result<()> {
        self.backward_route(BackwardRoute::Fractional)
    }

    /// Reverse sweep with classical `X^T G` weight gradients throughout.
    pub fn backward_integer(&mut self) -> Result<()> {
        self.backward_route(BackwardRoute::Integer)
    }

    /// Reverse sweep from the loss node, which must be the last node on the
    /// tape. The gradient store is reset first, so repeated sweeps over the
    /// same tape reproduce identical values.
    pub fn backward_route(&mut self, route: BackwardRoute) -> Result<()> {
        match self.nodes.last() {
            Some(Node::Mse { .. }) => {}
            _ => {
                return Err(Error::State {
                    message: "backward requires a loss node at the end of the tape".into(),
                })
            }
        }
        self.zero_grad();
        for idx in (0..self.nodes.len()).rev() {
            match &self.nodes[idx] {
                Node::Mse { pred, label, .. } => {
                    // Loss seed is 1; the head emits (2/N) * (pred - label).
                    let pred_idx = pred.0;
                    let pred_val = match &self.nodes[pred_idx] {
                        Node::Input { value, .. } => value,
                        Node::FLinear { output, .. } => output,
                        Node::Mse { .. } => unreachable!("validated when the head was built"),
                    };
                    let n = pred_val.data().len() as f64;
                    let g = pred_val.sub(label)?.map(|v| v * (2.0 / n));
                    accumulate(&mut self.node_grads[pred_idx], g)?;
                }
                Node::FLinear {
                    layer,
                    input,
                    cached_input,
                    ..
                } => {
                    let g = match &self.node_grads[idx] {
                        Some(g) => g.clone(),
                        None => continue,
                    };
                    let wgrad = match route {
                        BackwardRoute::Fractional => {
                            let ctx = LinearContext::new(
                                cached_input,
                                layer.w(),
                                layer.b(),
                                layer.alpha(),
                                layer.eps(),
                            )?;
                            weight_grad_block11(&ctx, &g)?
                        }
                        BackwardRoute::Integer => cached_input.transpose().matmul(&g)?,
                    };
                    let bgrad = g.colsum();
                    let upstream = g.matmul(&layer.w().transpose())?;
                    let input_idx = input.0;
                    self.weight_grads[idx] = Some(wgrad);
                    self.bias_grads[idx] = Some(bgrad);
                    accumulate(&mut self.node_grads[input_idx], upstream)?;
                }
                Node::Input { .. } => {}
            }
        }
        Ok(())
    }

    /// Clears the gradient store. Lookups afterwards return `None`.
    pub fn zero_grad(&mut self) {
        for slot in &mut self.node_grads {
            *slot = None;
        }
        for slot in &mut self.weight_grads {
            *slot = None;
        }
        for slot in &mut self.bias_grads {
            *slot = None;
        }
    }

    /// Gradient of the loss with respect to a node's value.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.node_grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Weight gradient stored at a linear node by the last backward sweep.
    pub fn weight_grad(&self, id: NodeId) -> Option<&Matrix> {
        self.weight_grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Bias gradient stored at a linear node by the last backward sweep.
    pub fn bias_grad(&self, id: NodeId) -> Option<&Matrix> {
        self.bias_grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Bytes held by graph buffers: node values, cached inputs, labels, and
    /// any stored gradients. Depends only on shapes, not on the order.
    pub fn buffer_bytes(&self) -> usize {
        let mut bytes = 0;
        for node in &self.nodes {
            bytes += match node {
                Node::Input { value, .. } => value.buffer_bytes(),
                Node::FLinear {
                    cached_input,
                    output,
                    ..
                } => cached_input.buffer_bytes() + output.buffer_bytes(),
                Node::Mse { label, .. } => label.buffer_bytes() + std::mem::size_of::<f64>(),
            };
        }
        for store in [&self.node_grads, &self.weight_grads, &self.bias_grads] {
            for slot in store.iter().flatten() {
                bytes += slot.buffer_bytes();
            }
        }
        bytes
    }
}

impl<'a> Default for Tape<'a> {
    fn default() -> Self {
        Self::new()
    }
}
