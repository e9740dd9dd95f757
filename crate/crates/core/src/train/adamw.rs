use std::collections::BTreeMap;

use crate::error::{invalid, Result};
use crate::nn::{ParameterStore, Tensor};
use crate::Scalar;

/// Bias-corrected Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Number of updates applied so far.
    pub step: u64,
    m: BTreeMap<String, Vec<T>>,
    v: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    /// Zero moments for every parameter in `params`, β = (0.9, 0.999), ε = 1e-8, no decay.
    pub fn new(params: &ParameterStore<T>) -> Self {
        let zeros: BTreeMap<_, _> = params.iter().map(|(n, t)| (n.clone(), vec![T::zero(); t.numel()])).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[T]> {
        self.m.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[T]> {
        self.v.get(name).map(Vec::as_slice)
    }

    /// One update. Parameters without an entry in `grads` see a zero gradient.
    pub fn update(&mut self, params: &mut ParameterStore<T>, grads: &BTreeMap<String, Vec<T>>, lr: f64) -> Result<()> {
        for (name, g) in grads {
            let p = params.get(name)?;
            if p.numel() != g.len() {
                return Err(invalid(format!("gradient for {name} has {} values, parameter has {}", g.len(), p.numel())));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - T::lit(self.beta1.powi(t));
        let c2 = T::one() - T::lit(self.beta2.powi(t));
        let (lr, eps, wd) = (T::lit(lr), T::lit(self.eps), T::lit(self.weight_decay));
        for (name, p) in params.iter_mut() {
            let m = self.m.get_mut(name).ok_or_else(|| invalid(format!("optimizer has no state for {name}")))?;
            let v = self.v.get_mut(name).expect("moments are created together");
            let g = grads.get(name);
            for (i, x) in p.values_mut().iter_mut().enumerate() {
                let gi = g.map_or(T::zero(), |g| g[i]);
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                *x -= lr * (mhat / (vhat.sqrt() + eps) + wd * *x);
            }
        }
        Ok(())
    }

    /// Moments as `optim.m.{name}` / `optim.v.{name}` tensors plus `optim.step`.
    pub fn to_tensors(&self, params: &ParameterStore<T>) -> Result<Vec<(String, Tensor<T>)>> {
        let mut out = Vec::with_capacity(2 * self.m.len() + 1);
        for (prefix, table) in [("optim.m", &self.m), ("optim.v", &self.v)] {
            for (name, values) in table {
                let shape = params.get(name)?.shape().to_vec();
                out.push((format!("{prefix}.{name}"), Tensor::new(shape, values.clone())?));
            }
        }
        out.push(("optim.step".to_string(), Tensor::scalar(T::from_u64(self.step).expect("step fits"))));
        Ok(out)
    }

    /// Inverse of [`Self::to_tensors`]; tensors without the `optim.` prefix are ignored.
    pub fn from_tensors<'t>(
        params: &ParameterStore<T>,
        tensors: impl IntoIterator<Item = &'t (String, Tensor<T>)>,
    ) -> Result<Self> {
        let mut opt = Self::new(params);
        let mut seen = 0;
        let mut have_step = false;
        for (name, t) in tensors {
            if name == "optim.step" {
                opt.step = t.values().first().and_then(|v| v.to_u64()).ok_or_else(|| invalid("bad optimizer step"))?;
                have_step = true;
            } else if let Some(rest) = name.strip_prefix("optim.m.") {
                fill(&mut opt.m, rest, t)?;
                seen += 1;
            } else if let Some(rest) = name.strip_prefix("optim.v.") {
                fill(&mut opt.v, rest, t)?;
                seen += 1;
            }
        }
        if !have_step || seen != 2 * params.len() {
            return Err(invalid("checkpoint lacks complete optimizer state"));
        }
        Ok(opt)
    }
}

fn fill<T: Scalar>(table: &mut BTreeMap<String, Vec<T>>, name: &str, t: &Tensor<T>) -> Result<()> {
    let slot = table.get_mut(name).ok_or_else(|| invalid(format!("optimizer state for unknown parameter {name}")))?;
    if slot.len() != t.numel() {
        return Err(invalid(format!("optimizer state for {name} has the wrong size")));
    }
    slot.copy_from_slice(t.values());
    Ok(())
}

/// Rescale `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut BTreeMap<String, Vec<T>>, max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = T::lit(max_norm / norm);
        for g in grads.values_mut() {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }
    norm
}

pub fn grad_norm<T: Scalar>(grads: &BTreeMap<String, Vec<T>>) -> f64 {
    grads.values().flatten().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::new(vec![1], vec![x]).unwrap()).unwrap();
        s
    }

    fn grads(g: f64) -> BTreeMap<String, Vec<f64>> {
        BTreeMap::from([("w".to_string(), vec![g])])
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_store(2.0);
        let mut opt = AdamW::new(&p);
        opt.update(&mut p, &grads(1.0), 0.01).unwrap();
        assert!((opt.first_moment("w").unwrap()[0] - 0.1).abs() < 1e-15);
        assert!((opt.second_moment("w").unwrap()[0] - 0.001).abs() < 1e-15);
        let want = 2.0 - 0.01 * 1.0 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap().values()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar_store(-3.0);
        let mut opt = AdamW::new(&p);
        for _ in 0..5 {
            opt.update(&mut p, &grads(0.0), 0.1).unwrap();
        }
        assert_eq!(p.get("w").unwrap().values()[0], -3.0);
        assert_eq!(opt.step, 5);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut p = scalar_store(1.0);
        let mut opt = AdamW::new(&p);
        opt.weight_decay = 0.5;
        opt.update(&mut p, &grads(0.0), 0.1).unwrap();
        assert!((p.get("w").unwrap().values()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar_store(1.0);
        let mut opt = AdamW::new(&p);
        let bad = BTreeMap::from([("w".to_string(), vec![1.0, 2.0])]);
        assert!(opt.update(&mut p, &bad, 0.1).is_err());
        let unknown = BTreeMap::from([("q".to_string(), vec![1.0])]);
        assert!(opt.update(&mut p, &unknown, 0.1).is_err());
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn state_round_trip() {
        let mut p = scalar_store(1.0);
        let mut opt = AdamW::new(&p);
        opt.update(&mut p, &grads(0.3), 0.1).unwrap();
        let tensors = opt.to_tensors(&p).unwrap();
        let back = AdamW::from_tensors(&p, &tensors).unwrap();
        assert_eq!(back, opt);
        assert!(AdamW::from_tensors(&p, &tensors[..1]).is_err());
    }

    #[test]
    fn clipping_never_increases_norm() {
        let mut g = BTreeMap::from([("a".to_string(), vec![3.0, 4.0])]);
        assert_eq!(clip_grad_norm(&mut g, 10.0), 5.0);
        assert_eq!(g["a"], vec![3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((grad_norm(&g) - 1.0).abs() < 1e-15);
    }
}
