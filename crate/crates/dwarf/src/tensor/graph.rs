//! Graph tracing and reverse-mode gradient accumulation.

use super::conv::{conv2d_backward, conv2d_transpose_backward};
use super::interp::{sample_backward, upsample_backward};
use super::ops::backward_elementwise;
use crate::correlation::{curve_backward, planar_backward};
use crate::error::{DwarfError, Result};
use crate::tensor::{Op, Scalar, Tensor, TensorId};
use std::collections::{HashMap, HashSet};

/// Gradients keyed by tensor identity. After a backward pass the store holds
/// one entry per gradient-requiring leaf that influences the loss.
pub struct GradStore<T: Scalar> {
    map: HashMap<TensorId, Vec<T>>,
}

impl<T: Scalar> GradStore<T> {
    fn new() -> Self {
        GradStore {
            map: HashMap::new(),
        }
    }

    pub fn get(&self, t: &Tensor<T>) -> Option<&[T]> {
        self.map.get(&t.id()).map(|v| v.as_slice())
    }

    pub fn get_by_id(&self, id: TensorId) -> Option<&[T]> {
        self.map.get(&id).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Sum `g` into the slot for `id`. Repeated contributions accumulate.
    fn accumulate(&mut self, id: TensorId, g: Vec<T>) {
        match self.map.entry(id) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                let acc = e.get_mut();
                debug_assert_eq!(acc.len(), g.len());
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(g);
            }
        }
    }

    fn take(&mut self, id: TensorId) -> Option<Vec<T>> {
        self.map.remove(&id)
    }
}

/// The reachable compute graph above a root, in topological order
/// (every node appears after all of its inputs, each exactly once).
pub struct Graph<T: Scalar> {
    nodes: Vec<Tensor<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn trace(root: &Tensor<T>) -> Self {
        let mut nodes = Vec::new();
        let mut visited: HashSet<TensorId> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                nodes.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            let children: Vec<Tensor<T>> = t
                .op()
                .map(|op| op.inputs().into_iter().filter(|i| i.requires_grad()).cloned().collect())
                .unwrap_or_default();
            stack.push((t, true));
            for ch in children {
                if !visited.contains(&ch.id()) {
                    stack.push((ch, false));
                }
            }
        }
        Graph { nodes }
    }

    pub fn nodes(&self) -> &[Tensor<T>] {
        &self.nodes
    }

    /// Reverse sweep from the (scalar) root. Interior gradients are consumed
    /// as the sweep passes them; the returned store holds leaf gradients.
    pub fn backward(&self) -> Result<GradStore<T>> {
        let root = self
            .nodes
            .last()
            .ok_or_else(|| DwarfError::invalid("backward on an empty graph"))?;
        if root.shape().numel() != 1 {
            return Err(DwarfError::shape(
                "backward",
                format!("root must be a scalar, got {}", root.shape()),
            ));
        }
        let mut store = GradStore::new();
        if !root.requires_grad() {
            return Ok(store);
        }
        store.accumulate(root.id(), vec![T::ONE]);
        for node in self.nodes.iter().rev() {
            let Some(op) = node.op() else { continue };
            let Some(out_grad) = store.take(node.id()) else {
                continue;
            };
            dispatch(op, &out_grad, &mut store);
        }
        Ok(store)
    }
}

fn dispatch<T: Scalar>(op: &Op<T>, out_grad: &[T], store: &mut GradStore<T>) {
    match op {
        Op::Conv2d {
            input,
            weight,
            bias,
            spec,
        } => {
            let (gi, gw, gb) = conv2d_backward(
                input,
                weight,
                *spec,
                out_grad,
                input.requires_grad(),
                weight.requires_grad(),
            );
            if let Some(gi) = gi {
                store.accumulate(input.id(), gi);
            }
            if let Some(gw) = gw {
                store.accumulate(weight.id(), gw);
            }
            if bias.requires_grad() {
                store.accumulate(bias.id(), gb);
            }
        }
        Op::ConvTranspose2d {
            input,
            weight,
            bias,
            stride,
        } => {
            let (gi, gw, gb) = conv2d_transpose_backward(
                input,
                weight,
                *stride,
                out_grad,
                input.requires_grad(),
                weight.requires_grad(),
            );
            if let Some(gi) = gi {
                store.accumulate(input.id(), gi);
            }
            if let Some(gw) = gw {
                store.accumulate(weight.id(), gw);
            }
            if bias.requires_grad() {
                store.accumulate(bias.id(), gb);
            }
        }
        Op::BilinearUpsample { input, factor } => {
            if input.requires_grad() {
                store.accumulate(input.id(), upsample_backward(input, *factor, out_grad));
            }
        }
        Op::BilinearSample { src, coords } => {
            let (gs, gc) = sample_backward(
                src,
                coords,
                out_grad,
                src.requires_grad(),
                coords.requires_grad(),
            );
            if let Some(gs) = gs {
                store.accumulate(src.id(), gs);
            }
            if let Some(gc) = gc {
                store.accumulate(coords.id(), gc);
            }
        }
        Op::CorrPlanar { a, b, spec } => {
            let (ga, gb) = planar_backward(a, b, *spec, out_grad, a.requires_grad(), b.requires_grad());
            if let Some(ga) = ga {
                store.accumulate(a.id(), ga);
            }
            if let Some(gb) = gb {
                store.accumulate(b.id(), gb);
            }
        }
        Op::CorrCurve { a, b, spec } => {
            let (ga, gb) = curve_backward(a, b, *spec, out_grad, a.requires_grad(), b.requires_grad());
            if let Some(ga) = ga {
                store.accumulate(a.id(), ga);
            }
            if let Some(gb) = gb {
                store.accumulate(b.id(), gb);
            }
        }
        elementwise => {
            backward_elementwise(elementwise, out_grad, &mut |t, g| {
                if t.requires_grad() {
                    store.accumulate(t.id(), g);
                }
            });
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// Trace the graph above `self` and run one reverse sweep.
    pub fn backward(&self) -> Result<GradStore<T>> {
        Graph::trace(self).backward()
    }
}
