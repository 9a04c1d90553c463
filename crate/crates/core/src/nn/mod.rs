//! Layers, parameter storage and optimisation on top of [`crate::autograd`].
//!
//! Parameters live in a [`ParamStore`] keyed by dotted names
//! (`"conv1.weight"`). Each forward pass binds the store into a [`Session`],
//! which wraps every parameter in a graph leaf, carries the train/eval flag
//! and the dropout stream, and collects running-statistics updates.

mod cbam;
mod layers;
mod lstm;

pub use cbam::Cbam;
pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, Init, Linear};
pub use lstm::Lstm;

use std::collections::{BTreeMap, HashMap};

use ndarray::{ArrayD, IxDyn};
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::autograd::{Array, Gradients, Var};
use crate::rng::StageRng;

/// Named trainable parameters and non-trainable buffers of one network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Array>,
    buffers: BTreeMap<String, Array>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_param(&mut self, name: impl Into<String>, value: Array) {
        self.params.insert(name.into(), value);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Array) {
        self.buffers.insert(name.into(), value);
    }

    pub fn param(&self, name: &str) -> Option<&Array> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.params.get_mut(name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Array> {
        self.buffers.get(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Array)> {
        self.params.iter()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Array)> {
        self.buffers.iter()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    /// Binds the store for one forward pass. With `track_grads`, parameters
    /// become differentiable leaves.
    pub fn bind(&self, train: bool, track_grads: bool, rng: Option<StageRng>) -> Session {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), Var::leaf(v.clone(), track_grads)))
            .collect();
        Session {
            vars,
            buffers: self.buffers.clone(),
            train,
            rng,
        }
    }

    /// Writes back running statistics collected by a training session.
    pub fn absorb_buffers(&mut self, session: &Session) {
        for (k, v) in &session.buffers {
            self.buffers.insert(k.clone(), v.clone());
        }
    }

    /// Clamps every parameter into `[-c, c]`.
    pub fn clamp_all(&mut self, c: f64) {
        for v in self.params.values_mut() {
            v.mapv_inplace(|x| x.clamp(-c, c));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(|a| a.iter().all(|x| x.is_finite()))
    }
}

/// One forward pass worth of bound parameters.
pub struct Session {
    vars: HashMap<String, Var>,
    buffers: BTreeMap<String, Array>,
    pub train: bool,
    rng: Option<StageRng>,
}

impl Session {
    pub fn var(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not bound"))
    }

    pub fn buffer(&self, name: &str) -> &Array {
        self.buffers
            .get(name)
            .unwrap_or_else(|| panic!("buffer `{name}` is missing"))
    }

    pub fn set_buffer(&mut self, name: &str, value: Array) {
        self.buffers.insert(name.to_string(), value);
    }

    pub fn rng(&mut self) -> Option<&mut StageRng> {
        self.rng.as_mut()
    }

    /// Weight tensors (names ending in `.weight` of conv and linear layers),
    /// the targets of L1/L2 penalties.
    pub fn weight_vars(&self, filter: impl Fn(&str) -> bool) -> Vec<Var> {
        let mut names: Vec<&String> = self.vars.keys().filter(|k| filter(k)).collect();
        names.sort();
        names.into_iter().map(|k| self.vars[k].clone()).collect()
    }

    /// Parameter gradients by name; parameters the sweep never reached get
    /// zeros.
    pub fn grads(&self, g: &Gradients) -> BTreeMap<String, Array> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), g.get_or_zeros(v)))
            .collect()
    }
}

/// Adam with bias correction and no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Array>,
    v: BTreeMap<String, Array>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Array>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (name, g) in grads {
            let Some(p) = store.param_mut(name) else { continue };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

pub(crate) fn kaiming_normal(shape: &[usize], fan_in: usize, rng: &mut StageRng) -> Array {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

pub(crate) fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut StageRng) -> Array {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
    ArrayD::from_shape_fn(IxDyn(shape), |_| dist.sample(rng))
}
