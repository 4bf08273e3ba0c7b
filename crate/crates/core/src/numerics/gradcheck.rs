use crate::error::Result;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

/// Denominator floor for the relative error. Gradient entries smaller than
/// this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

/// Outcome of comparing tape gradients to central finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare the reverse-mode gradient of a scalar function with central
/// differences. Failures while evaluating `f` are reported as an infinite
/// error rather than propagated.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> f64
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    match grad_check_detailed(&f, x, eps) {
        Ok(r) => r.max_rel_error,
        Err(_) => f64::INFINITY,
    }
}

pub fn grad_check_detailed<F>(f: &F, x: &Tensor, eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x);
    let out = f(&mut tape, xv)?;
    let analytic = tape.backward(out)?.wrt(xv).into_data();

    let eval = |data: Vec<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.param(&Tensor::new(x.shape().to_vec(), data)?);
        let o = f(&mut t, v)?;
        Ok(t.value(o).item())
    };

    let mut numeric = Vec::with_capacity(x.len());
    let mut max_rel_error = 0.0f64;
    let mut worst_index = 0;
    for i in 0..x.len() {
        let mut plus = x.data().to_vec();
        plus[i] += eps;
        let mut minus = x.data().to_vec();
        minus[i] -= eps;
        let n = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = relative_error(analytic[i], n);
        if err > max_rel_error {
            max_rel_error = err;
            worst_index = i;
        }
        numeric.push(n);
    }
    Ok(GradCheck {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let err = grad_check(|t, v| t.dot(v, v), &x, 1e-5);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn reports_failures_as_infinite() {
        let x = Tensor::vector(vec![0.0, 0.0]);
        let err = grad_check(|t, v| t.cosine(v, v), &x, 1e-5);
        assert!(err.is_infinite());
    }
}
