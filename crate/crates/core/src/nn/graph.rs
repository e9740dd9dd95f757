//! Dynamic tape for reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! read by name from a borrowed [`ParameterStore`] without copying. Calling
//! [`Graph::backward`] walks the tape in reverse and returns a [`Gradients`]
//! table; the graph is dropped afterwards.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::{self, BiSsmVars, NormKind};
use super::tensor::{ParameterStore, Tensor};
use crate::error::{invalid, Result};
use crate::Scalar;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Reshape(Var),
    Sum(Var),
    Gelu(Var),
    Norm { x: Var, gain: Var, kind: NormKind, stats: Vec<(T, T)> },
    BiSsm { v: Var, params: Box<BiSsmVars> },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<T> },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, ignore: usize, probs: Vec<T>, count: usize },
    Dropout { x: Var, mask: Vec<T> },
}

enum Value<'a, T> {
    Owned(Vec<T>),
    Borrowed(&'a [T]),
}

struct Node<'a, T> {
    value: Value<'a, T>,
    shape: Vec<usize>,
    op: Op<T>,
    needs_grad: bool,
}

pub(crate) struct DropoutCtx {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

pub struct Graph<'a, T> {
    nodes: Vec<Node<'a, T>>,
    store: Option<&'a ParameterStore<T>>,
    params: HashMap<String, Var>,
    pub(crate) dropout: Option<DropoutCtx>,
}

impl<'a, T: Scalar> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// A graph without a parameter store; inputs are added as leaves.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), store: None, params: HashMap::new(), dropout: None }
    }

    pub fn with_params(store: &'a ParameterStore<T>) -> Self {
        Self { store: Some(store), ..Self::new() }
    }

    /// Enable dropout at `rate`, drawing masks from a generator seeded with `seed`.
    /// A zero rate leaves dropout disabled.
    pub fn enable_dropout(&mut self, rate: f64, seed: u64) {
        self.dropout = (rate > 0.0).then(|| DropoutCtx { rate, rng: ChaCha8Rng::seed_from_u64(seed) });
    }

    pub fn store(&self) -> Option<&'a ParameterStore<T>> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, values: Vec<T>, shape: Vec<usize>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        self.nodes.push(Node { value: Value::Owned(values), shape, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(tensor.into_values(), shape, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, tensor: Tensor<T>) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(tensor.into_values(), shape, Op::Leaf, true)
    }

    /// Named parameter from the store; repeated lookups share one node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let store = self.store.ok_or_else(|| invalid("graph has no parameter store"))?;
        let tensor = store.get(name)?;
        self.nodes.push(Node {
            value: Value::Borrowed(tensor.values()),
            shape: tensor.shape().to_vec(),
            op: Op::Param,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &[T] {
        match &self.nodes[v.0].value {
            Value::Owned(x) => x,
            Value::Borrowed(x) => x,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub(crate) fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub(crate) fn op(&self, v: Var) -> &Op<T> {
        &self.nodes[v.0].op
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape is consistent")
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> Result<T> {
        match self.value(v) {
            [x] => Ok(*x),
            other => Err(invalid(format!("expected a scalar, node has {} values", other.len()))),
        }
    }

    pub(crate) fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            &[r, c] => Ok((r, c)),
            s => Err(invalid(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    /// Reverse pass from a scalar node with unit seed.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.backward_with_seed(loss, T::one())
    }

    /// Reverse pass with `d(objective)/d(loss) = seed`.
    pub fn backward_with_seed(&self, loss: Var, seed: T) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(invalid("backward needs a scalar output"));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![seed]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf | Op::Param => {
                    grads[i] = Some(g);
                    continue;
                }
                _ => {}
            }
            let mut sink = GradSink { graph: self, grads: &mut grads };
            ops::backward(self, Var(i), &g, &mut sink)?;
        }
        let params = self.params.iter().map(|(name, &v)| (name.clone(), v)).collect();
        Ok(Gradients { grads, params })
    }
}

/// Accumulates input gradients during the reverse pass.
pub(crate) struct GradSink<'g, 'a, T> {
    graph: &'g Graph<'a, T>,
    grads: &'g mut Vec<Option<Vec<T>>>,
}

impl<T: Scalar> GradSink<'_, '_, T> {
    pub fn wants(&self, v: Var) -> bool {
        self.graph.needs_grad(v)
    }

    pub fn add(&mut self, v: Var, g: &[T]) {
        if !self.graph.needs_grad(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => super::dense::add_into(acc, g),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    pub fn add_owned(&mut self, v: Var, g: Vec<T>) {
        if !self.graph.needs_grad(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => super::dense::add_into(acc, &g),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Result of a reverse pass.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(String, Var)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient reaching a leaf; `None` if nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every parameter touched by the graph, keyed by name.
    pub fn into_params(mut self) -> BTreeMap<String, Vec<T>> {
        let mut out = BTreeMap::new();
        for (name, v) in self.params {
            if let Some(g) = self.grads[v.0].take() {
                out.insert(name, g);
            }
        }
        out
    }
}
