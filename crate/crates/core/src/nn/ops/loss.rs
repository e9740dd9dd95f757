use crate::error::{invalid, Result};
use crate::nn::graph::{GradSink, Graph, Op, Var};
use crate::Scalar;

impl<'a, T: Scalar> Graph<'a, T> {
    /// Mean negative log-softmax of the target classes, skipping positions
    /// whose target equals `ignore`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: usize) -> Result<Var> {
        let (rows, vocab) = self.dims2(logits)?;
        if targets.len() != rows {
            return Err(invalid(format!("{} targets for {rows} logit rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t != ignore && t >= vocab) {
            return Err(invalid(format!("target id {bad} outside vocabulary of {vocab}")));
        }
        let count = targets.iter().filter(|&&t| t != ignore).count();
        if count == 0 {
            return Err(invalid("every target position is ignored"));
        }
        let mut probs = vec![T::zero(); rows * vocab];
        let mut total = T::zero();
        for ((row, p), &t) in self.value(logits).chunks(vocab).zip(probs.chunks_mut(vocab)).zip(targets) {
            if t == ignore {
                continue;
            }
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for (pj, &x) in p.iter_mut().zip(row) {
                *pj = (x - max).exp();
                sum += *pj;
            }
            total += sum.ln() + max - row[t];
            for pj in p.iter_mut() {
                *pj /= sum;
            }
        }
        let loss = total / T::from_usize_lossy(count);
        let ng = self.needs_grad(logits);
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), ignore, probs, count };
        Ok(self.push(vec![loss], Vec::new(), op, ng))
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<T>, node: Var, grad: &[T], sink: &mut GradSink<T>) {
    let Op::CrossEntropy { logits, targets, ignore, probs, count } = g.op(node) else {
        unreachable!("not a cross-entropy node")
    };
    let vocab = g.shape(*logits)[1];
    let scale = grad[0] / T::from_usize_lossy(*count);
    let mut gl = vec![T::zero(); probs.len()];
    for (r, &t) in targets.iter().enumerate() {
        if t == *ignore {
            continue;
        }
        let row = &mut gl[r * vocab..(r + 1) * vocab];
        for (o, &p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
            *o = p * scale;
        }
        row[t] -= scale;
    }
    sink.add_owned(*logits, gl);
}
