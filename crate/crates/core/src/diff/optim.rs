use crate::diff::tape::{Grads, Tape, Var};
use crate::diff::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Named trainable tensors with accumulated gradients.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
}

/// Index of a parameter within its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.grads.push(Tensor::zeros(value.shape().to_vec()));
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    /// Places every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.values.iter().map(|v| tape.var(v.clone())).collect()
    }

    /// Adds the gradients of a backward pass to the accumulators.
    pub fn accumulate(&mut self, grads: &Grads<T>, bound: &[Var]) {
        for (acc, &v) in self.grads.iter_mut().zip(bound) {
            if let Some(g) = grads.get(v) {
                acc.add_assign(g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
    }
}

/// Adaptive-moment optimizer.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params
                .values
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
            v: params
                .values
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update from the accumulated gradients and
    /// clears them. Fails without touching anything if any gradient is not
    /// finite.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        if let Some(i) = params.grads.iter().position(|g| !g.all_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter '{}'", params.names[i])));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one, lr_t, eps) = (T::one(), T::of(self.lr / c1), T::of(self.eps));
        let inv_c2 = T::of(1.0 / c2);
        for ((p, g), (m, v)) in params
            .values
            .iter_mut()
            .zip(&params.grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            for (((x, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                *x = *x - lr_t * *mi / ((*vi * inv_c2).sqrt() + eps);
            }
        }
        params.zero_grad();
        Ok(())
    }
}
