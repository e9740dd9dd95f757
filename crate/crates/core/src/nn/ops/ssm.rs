use crate::error::{invalid, Result};
use crate::nn::graph::{GradSink, Graph, Op, Var};
use crate::ssm::{BiSsm, DiagonalSsm, FIELD_NAMES};
use crate::Scalar;

/// Graph handles of every parameter array of a bidirectional SSM.
#[derive(Debug, Clone)]
pub struct BiSsmVars {
    pub forward: [Var; 7],
    pub backward: [Var; 7],
    pub d: Var,
}

/// Parameter names under `prefix`: `{prefix}.fwd.*`, `{prefix}.bwd.*`, `{prefix}.d`.
pub fn bissm_param_names(prefix: &str) -> Vec<String> {
    let mut names = Vec::with_capacity(15);
    for dir in ["fwd", "bwd"] {
        for f in FIELD_NAMES {
            names.push(format!("{prefix}.{dir}.{f}"));
        }
    }
    names.push(format!("{prefix}.d"));
    names
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn bissm_params(&mut self, prefix: &str) -> Result<BiSsmVars> {
        let names = bissm_param_names(prefix);
        let mut vars = Vec::with_capacity(15);
        for n in &names {
            vars.push(self.param(n)?);
        }
        Ok(BiSsmVars {
            forward: vars[0..7].try_into().expect("seven fields"),
            backward: vars[7..14].try_into().expect("seven fields"),
            d: vars[14],
        })
    }

    fn read_ssm(&self, vars: &[Var; 7], channels: usize) -> Result<DiagonalSsm<T>> {
        let hn = self.value(vars[1]).len();
        if channels == 0 || !hn.is_multiple_of(channels) {
            return Err(invalid("SSM parameter arrays do not match the channel count"));
        }
        let state = hn / channels;
        let mut ssm = DiagonalSsm::zeros(channels, state);
        for (dst, &v) in ssm.fields_mut().into_iter().zip(vars) {
            if self.value(v).len() != dst.len() {
                return Err(invalid("SSM parameter array has the wrong size"));
            }
            dst.copy_from_slice(self.value(v));
        }
        Ok(ssm)
    }

    pub(crate) fn assemble_bissm(&self, vars: &BiSsmVars) -> Result<BiSsm<T>> {
        let channels = self.value(vars.d).len();
        let bi = BiSsm {
            forward: self.read_ssm(&vars.forward, channels)?,
            backward: self.read_ssm(&vars.backward, channels)?,
            d: self.value(vars.d).to_vec(),
        };
        bi.validate()?;
        Ok(bi)
    }

    /// Bidirectional SSM over the rows of `v` (`[L, H]`), kernels materialized
    /// for this call's `L`.
    pub fn bissm(&mut self, v: Var, vars: &BiSsmVars) -> Result<Var> {
        let (len, width) = self.dims2(v)?;
        let bi = self.assemble_bissm(vars)?;
        if bi.channels() != width {
            return Err(invalid(format!("SSM has {} channels, input width is {width}", bi.channels())));
        }
        let out = bi.apply(self.value(v))?;
        let ng = self.needs_grad(v)
            || vars.forward.iter().chain(&vars.backward).chain([&vars.d]).any(|&p| self.needs_grad(p));
        Ok(self.push(out, vec![len, width], Op::BiSsm { v, params: Box::new(vars.clone()) }, ng))
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<T>, node: Var, grad: &[T], sink: &mut GradSink<T>) -> Result<()> {
    let Op::BiSsm { v, params } = g.op(node) else { unreachable!("not an SSM node") };
    let bi = g.assemble_bissm(params)?;
    let (du, pg) = bi.vjp(g.value(*v), grad)?;
    sink.add_owned(*v, du);
    for (&var, field) in params.forward.iter().zip(pg.forward.fields()) {
        sink.add(var, field);
    }
    for (&var, field) in params.backward.iter().zip(pg.backward.fields()) {
        sink.add(var, field);
    }
    sink.add(params.d, &pg.d);
    Ok(())
}
