use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::params::ParamSet;

/// Adam moment estimates for one parameter set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn init(&self, params: &ParamSet) -> AdamState {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One descent step: `params -= lr · m̂ / (√v̂ + eps)`.
    pub fn step(&self, params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) -> Result<()> {
        if state.m.is_empty() && !params.is_empty() {
            *state = self.init(params);
        }
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Shape(format!("no gradient for `{name}`")))?;
            if g.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = state.m.get_mut(name).expect("moment for every parameter");
            for (mi, gi) in m.data_mut().iter_mut().zip(g.data()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            }
            let m = state.m.tensor(name).data().to_vec();
            let v = state.v.get_mut(name).expect("moment for every parameter");
            for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            }
            let v = state.v.tensor(name).data();
            for ((pi, mi), vi) in p.data_mut().iter_mut().zip(&m).zip(v) {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("parameter `{name}` after update")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    fn single(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::vector(vec![v]));
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let adam = Adam::new(0.1);
        let mut p = single(3.0);
        let mut st = adam.init(&p);
        adam.step(&mut p, &single(0.0), &mut st).unwrap();
        assert_eq!(p.tensor("x").item(), 3.0);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let adam = Adam::new(0.01);
        for g in [2.5, -0.3] {
            let mut p = single(0.0);
            let mut st = adam.init(&p);
            adam.step(&mut p, &single(g), &mut st).unwrap();
            let dx = p.tensor("x").item();
            assert!((dx + 0.01 * g.signum()).abs() < 1e-8, "{dx}");
        }
    }

    #[test]
    fn minimises_quadratic() {
        let adam = Adam::new(0.05);
        let mut p = single(1.0);
        let mut st = adam.init(&p);
        for _ in 0..100 {
            let x = p.tensor("x").item();
            adam.step(&mut p, &single(2.0 * x), &mut st).unwrap();
        }
        assert!(p.tensor("x").item().abs() < 0.1);
    }
}
