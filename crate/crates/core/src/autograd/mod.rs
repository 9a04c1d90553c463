//! A small tape-free reverse-mode automatic differentiation engine.
//!
//! Every [`Var`] owns its forward value and, when any of its inputs requires a
//! gradient, a closure that maps the output gradient onto its parents. The
//! graph is the DAG of `Rc` links between variables; [`Var::backward`] walks it
//! in reverse topological order.
//!
//! Values are `f64` arrays. The networks in this crate are small enough that
//! double precision costs little, and it keeps finite-difference checks and
//! the finite-difference gradient-penalty path numerically meaningful.

mod conv;
mod ops;

pub use conv::{
    conv2d_backward_input, conv2d_backward_weight, conv2d_forward, conv2d_output_len,
    conv_transpose2d_output_len, ConvParams,
};
pub use ops::{sigmoid, smooth_l1_elem};

use std::cell::Cell;
use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

/// Dense n-dimensional `f64` array used for every value and gradient.
pub type Array = ArrayD<f64>;

type BackwardFn = Box<dyn Fn(&Array, &mut GradSink<'_>)>;

thread_local! {
    static NEXT_ID: Cell<usize> = const { Cell::new(0) };
}

fn next_id() -> usize {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

struct Node {
    id: usize,
    value: Array,
    requires_grad: bool,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

impl Drop for Node {
    // Long recurrent chains would otherwise overflow the stack through
    // recursive `Rc` drops.
    fn drop(&mut self) {
        let mut stack = std::mem::take(&mut self.parents);
        while let Some(var) = stack.pop() {
            if let Ok(mut node) = Rc::try_unwrap(var.0) {
                stack.append(&mut node.parents);
            }
        }
    }
}

/// A node in the computation graph.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    /// A leaf that does not take part in differentiation.
    pub fn constant(value: Array) -> Var {
        Var::leaf(value, false)
    }

    /// A leaf whose gradient is collected by [`Var::backward`].
    pub fn parameter(value: Array) -> Var {
        Var::leaf(value, true)
    }

    pub fn leaf(value: Array, requires_grad: bool) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            parents: Vec::new(),
            backward: None,
        }))
    }

    pub fn scalar(v: f64) -> Var {
        Var::constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    /// Builds an interior node. The closure is dropped when no parent needs a
    /// gradient, so inference graphs hold only values.
    pub(crate) fn from_op(
        value: Array,
        parents: Vec<Var>,
        backward: impl Fn(&Array, &mut GradSink<'_>) + 'static,
    ) -> Var {
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        if !requires_grad {
            return Var::constant(value);
        }
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            parents,
            backward: Some(Box::new(backward)),
        }))
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn value(&self) -> &Array {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The single element of a scalar (or one-element) value.
    pub fn item(&self) -> f64 {
        assert_eq!(self.0.value.len(), 1, "item() on a non-scalar Var");
        *self.0.value.iter().next().unwrap()
    }

    /// A constant copy of this value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    /// Reverse-mode sweep seeded with ones (the usual case for a scalar loss).
    pub fn backward(&self) -> Gradients {
        let seed = ArrayD::from_elem(self.0.value.raw_dim(), 1.0);
        self.backward_with(seed)
    }

    pub fn backward_with(&self, seed: Array) -> Gradients {
        assert_eq!(seed.shape(), self.shape(), "seed gradient shape mismatch");
        let order = topo_order(self);
        let mut grads: HashMap<usize, Array> = HashMap::new();
        if self.0.requires_grad {
            grads.insert(self.0.id, seed);
        }
        for var in order.iter().rev() {
            let node = &var.0;
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad) = grads.remove(&node.id) else {
                continue;
            };
            let mut sink = GradSink {
                parents: &node.parents,
                grads: &mut grads,
            };
            backward(&grad, &mut sink);
        }
        Gradients { grads }
    }
}

fn topo_order(root: &Var) -> Vec<Var> {
    let mut order = Vec::new();
    let mut visited = std::collections::HashSet::new();
    // (node, children already expanded)
    let mut stack: Vec<(Var, bool)> = vec![(root.clone(), false)];
    while let Some((var, expanded)) = stack.pop() {
        if expanded {
            order.push(var);
            continue;
        }
        if !var.0.requires_grad || !visited.insert(var.0.id) {
            continue;
        }
        stack.push((var.clone(), true));
        for p in &var.0.parents {
            if p.0.requires_grad && !visited.contains(&p.0.id) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

/// Accumulates parent gradients for one backward closure.
pub struct GradSink<'a> {
    parents: &'a [Var],
    grads: &'a mut HashMap<usize, Array>,
}

impl GradSink<'_> {
    pub fn needs(&self, i: usize) -> bool {
        self.parents[i].0.requires_grad
    }

    pub fn value(&self, i: usize) -> &Array {
        &self.parents[i].0.value
    }

    /// Adds a full-shape gradient to parent `i`.
    pub fn add(&mut self, i: usize, g: Array) {
        let p = &self.parents[i];
        if !p.0.requires_grad {
            return;
        }
        debug_assert_eq!(g.shape(), p.shape(), "gradient shape mismatch");
        match self.grads.get_mut(&p.0.id) {
            Some(acc) => *acc += &g,
            None => {
                self.grads.insert(p.0.id, g);
            }
        }
    }

    /// Zero-initialised accumulation buffer for parent `i`; lets ops such as
    /// `narrow` write into a slice without materialising a full array.
    pub fn slot(&mut self, i: usize) -> &mut Array {
        let p = &self.parents[i];
        self.grads
            .entry(p.0.id)
            .or_insert_with(|| ArrayD::zeros(p.0.value.raw_dim()))
    }
}

/// Gradients of the leaves reached by a backward sweep.
pub struct Gradients {
    grads: HashMap<usize, Array>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<&Array> {
        self.grads.get(&var.0.id)
    }

    pub fn take(&mut self, var: &Var) -> Option<Array> {
        self.grads.remove(&var.0.id)
    }

    /// Gradient of `var`, or zeros when the sweep never reached it.
    pub fn get_or_zeros(&self, var: &Var) -> Array {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| ArrayD::zeros(var.value().raw_dim()))
    }
}
