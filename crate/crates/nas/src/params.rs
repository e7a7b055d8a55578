//! Parameter declaration, naming and seeded initialization.

use std::collections::BTreeMap;

use gaitfield_autodiff::{Bindings, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Resolves parameter names to tape handles.
pub trait ParamLookup {
    fn param(&self, name: &str) -> Var;
}

impl ParamLookup for Bindings {
    fn param(&self, name: &str) -> Var {
        self.var(name)
    }
}

impl ParamLookup for BTreeMap<String, Var> {
    fn param(&self, name: &str) -> Var {
        match self.get(name) {
            Some(v) => *v,
            None => panic!("parameter `{name}` is not bound"),
        }
    }
}

/// Prepends `prefix.` to every lookup.
pub struct Scoped<'a> {
    inner: &'a dyn ParamLookup,
    prefix: String,
}

impl<'a> Scoped<'a> {
    pub fn new(inner: &'a dyn ParamLookup, prefix: impl Into<String>) -> Self {
        Scoped {
            inner,
            prefix: prefix.into(),
        }
    }
}

impl ParamLookup for Scoped<'_> {
    fn param(&self, name: &str) -> Var {
        self.inner.param(&format!("{}.{name}", self.prefix))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`.
    FanIn(usize),
    Zeros,
    Constant(f64),
    /// `U(−a, a)`.
    Uniform(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}.{}", self.name);
        self
    }
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a: a stable mixing of the name into the stream seed.
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Draws a tensor from an independent stream keyed by `(seed, name)`, so adding or
/// removing other parameters never changes this one.
pub fn init_tensor(spec: &ParamSpec, seed: u64) -> Tensor {
    let n: usize = spec.shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(&spec.name));
    let data = match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Constant(c) => vec![c; n],
        Init::FanIn(fan) => {
            let b = 1.0 / (fan.max(1) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-b..b)).collect()
        }
        Init::Uniform(a) if a > 0.0 => (0..n).map(|_| rng.random_range(-a..a)).collect(),
        Init::Uniform(_) => vec![0.0; n],
    };
    Tensor::new(&spec.shape, data).expect("declared shape matches generated values")
}

pub fn init_store(specs: &[ParamSpec], seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    for s in specs {
        store.insert(s.name.clone(), init_tensor(s, seed));
    }
    store
}
