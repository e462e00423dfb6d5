use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to one tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named trainable tensors with gradient accumulators and Adam moments.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<Entry>,
    step: u64,
}

/// Gradient storage shaped like a [`ParamSet`], detached from it so a
/// forward/backward pass can borrow the parameters immutably.
#[derive(Debug, Clone)]
pub struct GradBuffer(Vec<Vec<f64>>);

impl GradBuffer {
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    /// Mutable access to several distinct entries at once.
    pub fn many_mut<const K: usize>(&mut self, ids: [ParamId; K]) -> [&mut [f64]; K] {
        let idx = ids.map(|id| id.0);
        self.0
            .get_disjoint_mut(idx)
            .expect("distinct parameter ids")
            .map(|v| v.as_mut_slice())
    }

    pub fn zero(&mut self) {
        for g in &mut self.0 {
            g.fill(0.0);
        }
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::DuplicateTensor(name));
        }
        let n = value.len();
        self.entries.push(Entry {
            name,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer(self.entries.iter().map(|e| vec![0.0; e.value.len()]).collect())
    }

    /// `grad += scale · buffer`, entry by entry in insertion order.
    pub fn accumulate(&mut self, buffer: &GradBuffer, scale: f64) {
        for (e, g) in self.entries.iter_mut().zip(&buffer.0) {
            for (acc, v) in e.grad.iter_mut().zip(g) {
                *acc += scale * v;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Parameter values only, in insertion order.
    pub fn values_snapshot(&self) -> Vec<Tensor> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }

    /// Restores values taken by [`values_snapshot`](Self::values_snapshot);
    /// optimizer state is left untouched.
    pub fn restore_values(&mut self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.entries.len(), "snapshot layout");
        for (e, v) in self.entries.iter_mut().zip(snapshot) {
            e.value = v.clone();
        }
    }

    /// One bias-corrected Adam update; gradients are zeroed afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for e in &mut self.entries {
            let values = e.value.data_mut();
            for i in 0..values.len() {
                let g = e.grad[i];
                e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
                e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = e.m[i] / bc1;
                let v_hat = e.v[i] / bc2;
                values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
            e.grad.fill(0.0);
        }
    }
}
