//! Reverse-mode automatic differentiation on a flat tape.
//!
//! All values are `f64` `ndarray` arrays of dynamic dimension. A [`Tape`]
//! records every operation of one forward pass; [`Tape::backward`] walks the
//! tape in reverse and accumulates gradients for every node. Parameters enter
//! the tape as named leaves so the training harness can route gradients back
//! into a parameter store by name.

mod ops;
mod ops_conv;
mod ops_norm;
mod ops_reduce;
pub mod check;

use ndarray::ArrayD;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&[ArrayD<f64>], &ArrayD<f64>) -> Vec<ArrayD<f64>>>;

struct OpRecord {
    parents: Vec<Var>,
    back: Option<BackFn>,
}

/// Computation tape for a single forward pass.
#[derive(Default)]
pub struct Tape {
    values: Vec<ArrayD<f64>>,
    ops: Vec<OpRecord>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of a node.
    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.values[v.0]
    }

    /// Value of a 0-dim (scalar) node.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = &self.values[v.0];
        debug_assert_eq!(a.len(), 1);
        a.iter().next().copied().unwrap()
    }

    /// Push a leaf node (constant or parameter). Leaves have no backward fn;
    /// their gradients are simply collected.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, vec![], None)
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<f64>,
        parents: Vec<Var>,
        back: Option<BackFn>,
    ) -> Var {
        debug_assert!(value.iter().all(|x| x.is_finite()), "non-finite node value");
        self.values.push(value);
        self.ops.push(OpRecord { parents, back });
        Var(self.values.len() - 1)
    }

    /// Run backward from `root` (must be scalar) and return per-node gradients.
    /// Nodes unreachable from the root have `None`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.values[root.0].len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.values.len()];
        grads[root.0] = Some(ArrayD::ones(self.values[root.0].raw_dim()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(back) = &self.ops[i].back {
                let parent_grads = back(&self.values, &g);
                debug_assert_eq!(parent_grads.len(), self.ops[i].parents.len());
                for (p, pg) in self.ops[i].parents.iter().zip(parent_grads) {
                    debug_assert_eq!(pg.shape(), self.values[p.0].shape());
                    match &mut grads[p.0] {
                        Some(acc) => *acc += &pg,
                        slot => *slot = Some(pg),
                    }
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

/// Gradients produced by one backward pass.
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.grads[v.0].as_ref()
    }
}
