use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::params::ParamSet;

/// Epoch loop settings shared by the gradient-trained stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 0.003,
            batch_size: 32,
            plateau_window: 5,
            plateau_tol: 1e-4,
            seed: 0,
            parallel: false,
        }
    }
}

/// Summed loss and gradients over a batch of independent examples.
#[derive(Clone, Debug, Default)]
pub struct Accum {
    pub loss: f64,
    pub count: usize,
    pub grads: Vec<ParamSet>,
}

impl Accum {
    pub fn mean_loss(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.loss / self.count as f64
        }
    }

    /// Gradients divided by the example count.
    pub fn mean_grads(&self) -> Vec<ParamSet> {
        let mut out = self.grads.clone();
        if self.count > 0 {
            out.iter_mut().for_each(|g| g.scale(1.0 / self.count as f64));
        }
        out
    }
}

/// Evaluate `f` on every item and sum the results in item order.
///
/// Each call returns a loss and one gradient set per parameter group. With
/// `parallel` the calls run on the rayon pool; the reduction order is the
/// same either way, so both modes give bitwise-identical sums.
pub fn accumulate<T, F>(items: &[T], parallel: bool, f: F) -> Result<Accum>
where
    T: Sync,
    F: Fn(&T) -> Result<(f64, Vec<ParamSet>)> + Sync,
{
    let results: Vec<Result<(f64, Vec<ParamSet>)>> = if parallel {
        items.par_iter().map(&f).collect()
    } else {
        items.iter().map(&f).collect()
    };
    let mut acc = Accum::default();
    for r in results {
        let (loss, grads) = r?;
        acc.loss += loss;
        acc.count += 1;
        if acc.grads.is_empty() {
            acc.grads = grads;
        } else {
            for (a, g) in acc.grads.iter_mut().zip(&grads) {
                a.add_scaled(g, 1.0)?;
            }
        }
    }
    Ok(acc)
}

/// True once the relative improvement over the last `window` epochs falls
/// below `tol`. A zero window never stops.
pub fn plateaued(losses: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || losses.len() <= window {
        return false;
    }
    let now = losses[losses.len() - 1];
    let past = losses[losses.len() - 1 - window];
    (past - now) / past.abs().max(f64::MIN_POSITIVE) < tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    fn one(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![x]));
        p
    }

    #[test]
    fn parallel_and_serial_sums_agree() {
        let xs: Vec<f64> = (0..257).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = |x: &f64| Ok((x * x, vec![one(2.0 * x)]));
        let a = accumulate(&xs, false, f).unwrap();
        let b = accumulate(&xs, true, f).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.grads, b.grads);
        assert_eq!(a.count, 257);
    }

    #[test]
    fn plateau_rule() {
        assert!(!plateaued(&[1.0, 0.5], 5, 1e-4));
        assert!(!plateaued(&[1.0, 0.9, 0.8], 2, 1e-4));
        assert!(plateaued(&[1.0, 1.0, 1.0], 2, 1e-4));
        assert!(!plateaued(&[1.0, 1.0, 1.0], 0, 1e-4));
    }
}
