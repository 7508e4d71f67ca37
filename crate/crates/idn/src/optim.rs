//! Named parameter sets, momentum SGD, and gradient checking.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Named parameters plus same-shaped momentum buffers.
///
/// Backed by ordered maps so iteration (and therefore optimization and
/// serialization) is deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
    velocity: BTreeMap<String, Tensor>,
}

/// Parameter leaves registered on one tape, one per name.
pub struct ParamBinding {
    vars: BTreeMap<String, Var>,
}

impl ParamBinding {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter {name} not bound on this tape")))
    }
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Insert a parameter; its velocity buffer starts at zero.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        self.velocity.insert(name.clone(), Tensor::zeros(value.shape()));
        self.params.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    /// Total number of scalar entries across all parameters.
    pub fn entry_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Overwrite one parameter value (shape must match); velocity is kept.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let Some(slot) = self.params.get_mut(name) else {
            return Err(Error::Contract(format!("unknown parameter {name}")));
        };
        if slot.shape() != value.shape() {
            return Err(Error::Dimension(format!(
                "parameter {name}: cannot replace shape {:?} with {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    /// Register every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> ParamBinding {
        let mut vars = BTreeMap::new();
        for (name, value) in &self.params {
            vars.insert(name.clone(), tape.param(name, value.clone()));
        }
        ParamBinding { vars }
    }

    /// Fill in zero gradients for parameters a backward pass never reached.
    pub fn complete_grads(
        &self,
        mut partial: BTreeMap<String, Tensor>,
    ) -> Result<BTreeMap<String, Tensor>> {
        for (name, value) in &self.params {
            match partial.get(name) {
                Some(g) if g.shape() != value.shape() => {
                    return Err(Error::Dimension(format!(
                        "gradient for {name} has shape {:?}, parameter is {:?}",
                        g.shape(),
                        value.shape()
                    )));
                }
                Some(_) => {}
                None => {
                    partial.insert(name.clone(), Tensor::zeros(value.shape()));
                }
            }
        }
        if partial.len() != self.params.len() {
            let stray: Vec<&String> =
                partial.keys().filter(|k| !self.params.contains_key(*k)).collect();
            return Err(Error::Contract(format!("gradients for unknown parameters {stray:?}")));
        }
        Ok(partial)
    }

    /// Classic momentum update: v <- momentum*v + grad; p <- p - lr*v.
    ///
    /// `grads` must cover exactly the parameter keys (see
    /// [`ParamSet::complete_grads`]).
    pub fn sgd_step(
        &mut self,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
        momentum: f64,
    ) -> Result<()> {
        if !(lr >= 0.0) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::Contract(format!(
                "sgd_step wants lr >= 0 and momentum in [0,1), got {lr}/{momentum}"
            )));
        }
        if grads.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "sgd_step got {} gradients for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        for (name, p) in self.params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Contract(format!("missing gradient for {name}")))?;
            if g.shape() != p.shape() {
                return Err(Error::Dimension(format!(
                    "gradient for {name} has shape {:?}, parameter is {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let v = self.velocity.get_mut(name).expect("velocity tracks params");
            for ((vi, pi), gi) in v.data_mut().iter_mut().zip(p.data_mut()).zip(g.data()) {
                *vi = momentum * *vi + gi;
                *pi -= lr * *vi;
            }
        }
        Ok(())
    }

    /// Drop all momentum state (used when a phase boundary reloads params).
    pub fn reset_velocity(&mut self) {
        for v in self.velocity.values_mut() {
            for x in v.data_mut() {
                *x = 0.0;
            }
        }
    }
}

/// Compare analytic gradients of `f` against central finite differences.
///
/// Returns the max over all parameter entries of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, params: &ParamSet, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamBinding) -> Result<Var>,
{
    let by_param = grad_check_by_param(f, params, eps)?;
    Ok(by_param.values().fold(0.0f64, |w, &e| w.max(e)))
}

/// Like [`grad_check`], but reporting the worst relative error per parameter
/// tensor.
pub fn grad_check_by_param<F>(
    f: F,
    params: &ParamSet,
    eps: f64,
) -> Result<BTreeMap<String, f64>>
where
    F: Fn(&mut Tape, &ParamBinding) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::Contract(format!("grad_check wants eps > 0, got {eps}")));
    }
    let mut tape = Tape::new();
    let binding = params.bind(&mut tape);
    let loss = f(&mut tape, &binding)?;
    let analytic = params.complete_grads(tape.param_grads(loss)?)?;

    let eval_at = |shifted: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let binding = shifted.bind(&mut tape);
        let loss = f(&mut tape, &binding)?;
        tape.scalar_value(loss)
    };

    let mut worst = BTreeMap::new();
    for (name, value) in params.iter() {
        let mut here = 0.0f64;
        for idx in 0..value.len() {
            let mut plus = params.clone();
            plus.params.get_mut(name).unwrap().data_mut()[idx] += eps;
            let mut minus = params.clone();
            minus.params.get_mut(name).unwrap().data_mut()[idx] -= eps;
            let numeric = (eval_at(&plus)? - eval_at(&minus)?) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!(
                    "finite-difference probe at {name}[{idx}]"
                )));
            }
            let a = analytic[name].data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > here {
                here = rel;
            }
        }
        worst.insert(name.clone(), here);
    }
    Ok(worst)
}
