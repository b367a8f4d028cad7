use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::KernelError;

/// Dense row-major array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, KernelError> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(KernelError::Shape(format!("invalid shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(KernelError::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n], requires_grad: false, grad: None }
    }

    pub fn trainable(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows and columns when viewed as a matrix. Rank-1 tensors are row vectors.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => (s[..s.len() - 1].iter().product(), s[s.len() - 1]),
        }
    }

    pub(crate) fn accumulate_grad(&mut self, g: &[f64]) {
        let buf = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (a, b) in buf.iter_mut().zip(g) {
            *a += b;
        }
    }

    pub(crate) fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Named trainable arrays. Iteration is sorted by name.
#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
    rng: ChaCha8Rng,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self { entries: BTreeMap::new(), rng: ChaCha8Rng::seed_from_u64(seed), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a trainable tensor drawn from uniform(-bound, bound).
    pub fn add_uniform(&mut self, name: &str, shape: Vec<usize>, bound: f64) -> Result<(), KernelError> {
        let n = shape.iter().product();
        let data = if bound > 0.0 {
            (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect()
        } else {
            vec![0.0; n]
        };
        self.insert(name, Tensor::new(shape, data)?.trainable())
    }

    /// Registers a trainable tensor with the 1/sqrt(fan_in) bound, fan_in = shape[0].
    pub fn add_fan_in(&mut self, name: &str, shape: Vec<usize>) -> Result<(), KernelError> {
        let bound = 1.0 / (shape[0] as f64).sqrt();
        self.add_uniform(name, shape, bound)
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<(), KernelError> {
        if self.entries.contains_key(name) {
            return Err(KernelError::DuplicateParam(name.to_string()));
        }
        self.entries.insert(name.to_string(), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor, KernelError> {
        self.entries.get(name).ok_or_else(|| KernelError::MissingParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.entries.values_mut().for_each(Tensor::zero_grad);
    }

    /// Overwrites every value of every tensor with `v`.
    pub fn fill(&mut self, v: f64) {
        for t in self.entries.values_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = v);
        }
    }

    /// Rounds every value to the nearest 32-bit float, matching what a checkpoint holds.
    pub fn round_to_f32(&mut self) {
        for t in self.entries.values_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }
}
