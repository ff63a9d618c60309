use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Scalar, Tape, Tensor, Var};

/// Named parameter tensors, ordered by name.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Scalar = f32> {
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.params.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Scalar count of parameters whose name starts with `prefix`.
    pub fn numel_with_prefix(&self, prefix: &str) -> usize {
        self.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Tensor::all_finite)
    }
}

/// Allocates freshly initialized parameters into a store.
pub struct Init<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<'a, T: Scalar> Init<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Self {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He-uniform: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
    pub fn he_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> String {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-bound..bound)));
        self.store.insert(name, t);
        name.to_string()
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> String {
        self.store.insert(name, Tensor::zeros(shape));
        name.to_string()
    }
}

/// One forward pass: maps parameter names to tape leaves on first use.
pub struct Session<'t, 's, T: Scalar> {
    tape: &'t Tape<T>,
    store: &'s ParamStore<T>,
    trainable: bool,
    vars: RefCell<BTreeMap<String, Var<'t, T>>>,
}

impl<'t, 's, T: Scalar> Session<'t, 's, T> {
    /// Parameters become gradient-tracking leaves.
    pub fn training(tape: &'t Tape<T>, store: &'s ParamStore<T>) -> Self {
        Self::new(tape, store, true)
    }

    /// Parameters become constants; no backward closures are retained.
    pub fn inference(tape: &'t Tape<T>, store: &'s ParamStore<T>) -> Self {
        Self::new(tape, store, false)
    }

    fn new(tape: &'t Tape<T>, store: &'s ParamStore<T>, trainable: bool) -> Self {
        Self {
            tape,
            store,
            trainable,
            vars: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn param(&self, name: &str) -> Result<Var<'t, T>> {
        if let Some(v) = self.vars.borrow().get(name) {
            return Ok(*v);
        }
        let t = self.store.get(name).ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        let v = if self.trainable {
            self.tape.variable(t.shape(), t.data().to_vec())?
        } else {
            self.tape.constant(t.shape(), t.data().to_vec())?
        };
        self.vars.borrow_mut().insert(name.to_string(), v);
        Ok(v)
    }

    /// Use `v` for parameter `name` instead of a fresh leaf.
    pub fn bind(&self, name: &str, v: Var<'t, T>) {
        self.vars.borrow_mut().insert(name.to_string(), v);
    }

    /// Gradients of every parameter touched in this session, by name.
    pub fn gradients(&self, grads: &mut Gradients<T>) -> BTreeMap<String, Vec<T>> {
        self.vars
            .borrow()
            .iter()
            .filter_map(|(k, v)| grads.take(*v).map(|g| (k.clone(), g)))
            .collect()
    }
}
