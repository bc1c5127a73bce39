//! Named parameter storage and the two layer shapes the network is built
//! from: a dense map and an attention pool over fixed-size sets.

use rand::Rng;

use super::graph::{Graph, Var};
use super::init::{kaiming_uniform, zeros_bias};
use super::scalar::Scalar;
use super::tensor::{Parameter, Tensor};
use super::LEAKY_SLOPE;
use crate::error::{Error, Result};

/// Ordered list of parameters; layers refer to entries by position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        self.params.push(Parameter::new(name, value));
        self.params.len() - 1
    }

    pub fn dense<R: Rng + ?Sized>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Dense {
        let w = self.push(format!("{name}.w"), kaiming_uniform(fan_in, fan_out, LEAKY_SLOPE, rng));
        let b = self.push(format!("{name}.b"), zeros_bias(fan_out));
        Dense { w, b, fan_in, fan_out }
    }

    pub fn att_pool<R: Rng + ?Sized>(&mut self, name: &str, dim: usize, rng: &mut R) -> AttPool {
        let w = self.push(format!("{name}.w"), kaiming_uniform(dim, dim, LEAKY_SLOPE, rng));
        let b = self.push(format!("{name}.b"), zeros_bias(dim));
        AttPool { w, b, dim }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &Parameter<T> {
        &self.params[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter<T>> {
        self.params.iter()
    }

    pub fn as_slice(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn as_mut_slice(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self.params.iter().map(Parameter::cast).collect(),
        }
    }

    /// Places every parameter on `g`, as gradient-receiving leaves when
    /// `trainable`, as constants otherwise.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.value.clone())
                } else {
                    g.constant(p.value.clone())
                }
            })
            .collect()
    }

    /// Copies parameter gradients out of a finished backward pass, adding to
    /// whatever is already accumulated.
    pub fn accumulate_grads(&mut self, vars: &[Var], grads: &super::graph::Gradients<T>) -> Result<()> {
        if vars.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "{} bound variables for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(vars) {
            if let Some(gr) = grads.get(*v) {
                p.grad.add_assign(gr);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Leaky,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn apply<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], x: Var, act: Activation) -> Result<Var> {
        let y = g.linear(x, vars[self.w], Some(vars[self.b]))?;
        Ok(match act {
            Activation::None => y,
            Activation::Leaky => g.leaky_relu(y, LEAKY_SLOPE),
            Activation::Relu => g.relu(y),
        })
    }
}

/// Per-channel softmax attention across each group of `k` consecutive rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttPool {
    pub w: usize,
    pub b: usize,
    pub dim: usize,
}

impl AttPool {
    pub fn apply<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], x: Var, k: usize) -> Result<Var> {
        let logits = g.linear(x, vars[self.w], Some(vars[self.b]))?;
        g.attset(x, logits, k)
    }
}
