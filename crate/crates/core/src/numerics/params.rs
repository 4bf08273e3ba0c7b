use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::numerics::tape::{Gradients, Tape, Var};
use crate::numerics::tensor::Tensor;

/// Named, ordered collection of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: IndexMap<String, Tensor>,
}

/// A parameter set recorded on a tape.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not bound"))
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Substitute the variable bound to `name`, e.g. to differentiate with
    /// respect to a single parameter.
    pub fn set(&mut self, name: impl Into<String>, v: Var) {
        self.vars.insert(name.into(), v);
    }

    /// Gradient tensors for every bound parameter.
    pub fn gradients(&self, grads: &Gradients) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, var) in &self.vars {
            out.insert(name.clone(), grads.wrt(*var));
        }
        out
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn tensor(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|k| k.as_str())
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| (k.clone(), tape.leaf(t, trainable)))
            .collect();
        Bound { vars }
    }

    pub fn zeros_like(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (k, t) in &self.tensors {
            out.insert(k.clone(), Tensor::zeros(t.shape()));
        }
        out
    }

    fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Shape(format!(
                "parameter sets differ in size: {} vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (k, t) in &self.tensors {
            match other.tensors.get(k) {
                Some(o) if o.shape() == t.shape() => {}
                Some(o) => {
                    return Err(Error::Shape(format!(
                        "parameter `{k}`: {:?} vs {:?}",
                        t.shape(),
                        o.shape()
                    )))
                }
                None => return Err(Error::Shape(format!("parameter `{k}` missing"))),
            }
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) -> Result<()> {
        self.check_compatible(other)?;
        for (k, t) in self.tensors.iter_mut() {
            let o = other.tensor(k);
            for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Elementwise `λ·new + (1−λ)·old`, evaluated as `old + λ(new − old)`
    /// so that equal inputs come back unchanged.
    pub fn blend(new: &ParamSet, old: &ParamSet, lambda: f64) -> Result<ParamSet> {
        new.check_compatible(old)?;
        let mut out = ParamSet::new();
        for (k, t) in &new.tensors {
            let o = old.tensor(k);
            let data = t
                .data()
                .iter()
                .zip(o.data())
                .map(|(n, o)| o + lambda * (n - o))
                .collect();
            out.insert(k.clone(), Tensor::new(t.shape().to_vec(), data)?);
        }
        Ok(out)
    }

    pub fn norm_sq(&self) -> f64 {
        self.tensors.values().map(|t| t.norm_sq()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|t| t.is_finite())
    }

    /// Prefix every name, e.g. to merge several modules into one set.
    pub fn prefixed(&self, prefix: &str) -> ParamSet {
        let mut out = ParamSet::new();
        for (k, t) in &self.tensors {
            out.insert(format!("{prefix}{k}"), t.clone());
        }
        out
    }

    /// Entries under `prefix`, with the prefix stripped.
    pub fn strip_prefix(&self, prefix: &str) -> ParamSet {
        let mut out = ParamSet::new();
        for (k, t) in &self.tensors {
            if let Some(rest) = k.strip_prefix(prefix) {
                out.insert(rest.to_string(), t.clone());
            }
        }
        out
    }

    pub fn extend(&mut self, other: ParamSet) {
        self.tensors.extend(other.tensors);
    }
}
