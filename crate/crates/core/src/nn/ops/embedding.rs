use crate::error::{invalid, Result};
use crate::nn::graph::{GradSink, Graph, Op, Var};
use crate::Scalar;

impl<'a, T: Scalar> Graph<'a, T> {
    /// Gather rows of a `[V, H]` table.
    pub fn embedding(&mut self, ids: &[usize], table: Var) -> Result<Var> {
        let (vocab, width) = self.dims2(table)?;
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(invalid(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            out.extend_from_slice(&tv[id * width..(id + 1) * width]);
        }
        let ng = self.needs_grad(table);
        Ok(self.push(out, vec![ids.len(), width], Op::Embedding { table, ids: ids.to_vec() }, ng))
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<T>, node: Var, grad: &[T], sink: &mut GradSink<T>) {
    let Op::Embedding { table, ids } = g.op(node) else { unreachable!("not an embedding node") };
    let width = g.shape(*table)[1];
    let mut gt = vec![T::zero(); g.value(*table).len()];
    for (r, &id) in ids.iter().enumerate() {
        for (dst, &src) in gt[id * width..(id + 1) * width].iter_mut().zip(&grad[r * width..(r + 1) * width]) {
            *dst += src;
        }
    }
    sink.add_owned(*table, gt);
}
