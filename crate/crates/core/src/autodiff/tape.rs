use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product of one recorded operation.
///
/// Called with the gradient of the output, the values of the parents and a
/// mask telling which parents need a gradient. Returns one entry per parent;
/// `None` for parents that were not requested.
pub type BackwardFn<F> = Box<dyn Fn(&Tensor<F>, &[&Tensor<F>], &[bool]) -> Vec<Option<Tensor<F>>>>;

struct Node<F> {
    value: Tensor<F>,
    requires_grad: bool,
    grad: Option<Tensor<F>>,
    parents: Vec<Var>,
    backward: Option<BackwardFn<F>>,
}

/// Ordered record of operations. Nodes are appended as operations run, so
/// every node's parents precede it and reverse iteration is a valid
/// topological order for gradient propagation.
pub struct Tape<F: Real = f64> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input or parameter. A gradient accumulator is allocated iff
    /// `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| Tensor::zeros(value.shape()));
        self.nodes.push(Node {
            value,
            requires_grad,
            grad,
            parents: Vec::new(),
            backward: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    /// Records the result of an operation. Ops defined outside this module
    /// (for example loss functions) use this to join the tape.
    pub fn record(&mut self, value: Tensor<F>, parents: Vec<Var>, backward: BackwardFn<F>) -> Var {
        debug_assert!(parents.iter().all(|p| p.0 < self.nodes.len()));
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            parents,
            backward: requires_grad.then_some(backward),
        });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf created with `requires_grad`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.fill(F::zero());
            }
        }
    }

    /// Reverse-mode sweep from a scalar `loss`. Leaf gradients accumulate
    /// across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_shape = self.nodes[loss.0].value.shape();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_shape.to_vec()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_shape, F::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(backward) = node.backward.as_ref() {
                let values: Vec<&Tensor<F>> =
                    node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
                let needs: Vec<bool> = node
                    .parents
                    .iter()
                    .map(|p| self.nodes[p.0].requires_grad)
                    .collect();
                let parent_grads = backward(&g, &values, &needs);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for ((p, pg), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                    let Some(pg) = pg else { continue };
                    if !need {
                        continue;
                    }
                    debug_assert_eq!(pg.shape(), self.nodes[p.0].value.shape());
                    match grads[p.0].as_mut() {
                        Some(acc) => acc.add_assign(&pg),
                        None => grads[p.0] = Some(pg),
                    }
                }
            } else if let Some(acc) = self.nodes[i].grad.as_mut() {
                acc.add_assign(&g);
            }
        }
        Ok(())
    }
}
