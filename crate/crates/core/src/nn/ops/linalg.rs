use crate::error::{invalid, Result};
use crate::nn::dense::{matmul, matmul_at, matmul_bt};
use crate::nn::graph::{GradSink, Graph, Op, Var};
use crate::Scalar;

impl<'a, T: Scalar> Graph<'a, T> {
    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(invalid(format!("matmul inner dimensions {k} and {k2} differ")));
        }
        let out = matmul(self.value(a), self.value(b), m, k, n);
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(out, vec![m, n], Op::MatMul(a, b), ng))
    }

    /// `a[m×k] · b[n×k]^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (n, k2) = self.dims2(b)?;
        if k != k2 {
            return Err(invalid(format!("matmul inner dimensions {k} and {k2} differ")));
        }
        let out = matmul_bt(self.value(a), self.value(b), m, k, n);
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(out, vec![m, n], Op::MatMulBt(a, b), ng))
    }

    /// Affine map `x·W (+ bias)`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match bias {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        if self.value(bias).len() != n {
            return Err(invalid(format!("bias of length {} for width {n}", self.value(bias).len())));
        }
        let b = self.value(bias);
        let out: Vec<T> = self.value(x).iter().enumerate().map(|(i, &v)| v + b[i % n]).collect();
        let ng = self.needs_grad(x) || self.needs_grad(bias);
        Ok(self.push(out, vec![m, n], Op::AddBias(x, bias), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(out, self.shape(a).to_vec(), Op::Add(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(out, self.shape(a).to_vec(), Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).iter().map(|&v| v * factor).collect();
        let ng = self.needs_grad(x);
        self.push(out, self.shape(x).to_vec(), Op::Scale(x, factor), ng)
    }

    /// Same values under a new shape with equal element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return Err(invalid(format!("cannot reshape {:?} to {shape:?}", self.shape(x))));
        }
        let out = self.value(x).to_vec();
        let ng = self.needs_grad(x);
        Ok(self.push(out, shape, Op::Reshape(x), ng))
    }

    /// Sum of all elements as a scalar node.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().copied().sum();
        let ng = self.needs_grad(x);
        self.push(vec![total], Vec::new(), Op::Sum(x), ng)
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(invalid(format!("shapes {:?} and {:?} differ", self.shape(a), self.shape(b))));
        }
        Ok(())
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<T>, node: Var, grad: &[T], sink: &mut GradSink<T>) {
    match *g.op(node) {
        Op::MatMul(a, b) => {
            let (m, k) = g.dims2(a).expect("checked in forward");
            let n = g.shape(b)[1];
            if sink.wants(a) {
                sink.add_owned(a, matmul_bt(grad, g.value(b), m, n, k));
            }
            if sink.wants(b) {
                sink.add_owned(b, matmul_at(g.value(a), grad, k, m, n));
            }
        }
        Op::MatMulBt(a, b) => {
            let (m, k) = g.dims2(a).expect("checked in forward");
            let n = g.shape(b)[0];
            if sink.wants(a) {
                sink.add_owned(a, matmul(grad, g.value(b), m, n, k));
            }
            if sink.wants(b) {
                sink.add_owned(b, matmul_at(grad, g.value(a), n, m, k));
            }
        }
        Op::AddBias(x, bias) => {
            sink.add(x, grad);
            if sink.wants(bias) {
                let n = g.value(bias).len();
                let mut gb = vec![T::zero(); n];
                for (i, &v) in grad.iter().enumerate() {
                    gb[i % n] += v;
                }
                sink.add_owned(bias, gb);
            }
        }
        Op::Add(a, b) => {
            sink.add(a, grad);
            sink.add(b, grad);
        }
        Op::Mul(a, b) => {
            if sink.wants(a) {
                sink.add_owned(a, grad.iter().zip(g.value(b)).map(|(&d, &y)| d * y).collect());
            }
            if sink.wants(b) {
                sink.add_owned(b, grad.iter().zip(g.value(a)).map(|(&d, &x)| d * x).collect());
            }
        }
        Op::Scale(x, f) => sink.add_owned(x, grad.iter().map(|&d| d * f).collect()),
        Op::Reshape(x) => sink.add(x, grad),
        Op::Sum(x) => sink.add_owned(x, vec![grad[0]; g.value(x).len()]),
        _ => unreachable!("not a linear-algebra node"),
    }
}
