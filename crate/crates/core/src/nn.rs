//! Named parameter storage, forward-pass sessions, layer building blocks,
//! and the ADAM optimizer.

use crate::autodiff::{Gradients, Tape, Var};
use indexmap::IndexMap;
use ndarray::{Array1, ArrayD};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS_NORM: f64 = 1e-8;

/// All learnable parameters and non-learnable buffers (batch-norm running
/// statistics), keyed by hierarchical name.
#[derive(Default, Clone)]
pub struct ParamStore {
    pub params: IndexMap<String, ArrayD<f64>>,
    pub buffers: IndexMap<String, ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        let name = name.into();
        assert!(
            self.params.insert(name.clone(), value).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        self.buffers.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }
}

/// Named gradients accumulated over a batch.
pub type GradMap = IndexMap<String, ArrayD<f64>>;

/// One forward pass: a tape plus the binding of parameter names to leaves.
pub struct Session<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    bound: IndexMap<String, Var>,
    pub train: bool,
    dropout_rng: Option<ChaCha8Rng>,
    /// Batch statistics observed by batch-norm layers this pass, to be folded
    /// into running averages by the training loop.
    pub bn_updates: Vec<(String, Array1<f64>, Array1<f64>)>,
}

impl<'a> Session<'a> {
    pub fn eval(store: &'a ParamStore) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: IndexMap::new(),
            train: false,
            dropout_rng: None,
            bn_updates: Vec::new(),
        }
    }

    pub fn train(store: &'a ParamStore, dropout_rng: ChaCha8Rng) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: IndexMap::new(),
            train: true,
            dropout_rng: Some(dropout_rng),
            bn_updates: Vec::new(),
        }
    }

    /// Bind a parameter as a tape leaf (cached per name so shared modules
    /// reuse one leaf).
    pub fn p(&mut self, name: &str) -> Var {
        if let Some(&v) = self.bound.get(name) {
            return v;
        }
        let v = self.tape.leaf(self.store.get(name).clone());
        self.bound.insert(name.to_string(), v);
        v
    }

    pub fn buffer(&mut self, name: &str) -> Var {
        let val = self
            .store
            .buffers
            .get(name)
            .unwrap_or_else(|| panic!("unknown buffer {name}"))
            .clone();
        self.tape.leaf(val)
    }

    /// Inverted dropout; identity in eval mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Var {
        if !self.train || rate <= 0.0 {
            return x;
        }
        let rng = self
            .dropout_rng
            .as_mut()
            .expect("training session requires dropout rng");
        let keep = 1.0 - rate;
        let mask = self
            .tape
            .value(x)
            .mapv(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
        let m = self.tape.leaf(mask);
        self.tape.mul(x, m)
    }

    /// Backward from `root`, accumulating named parameter gradients into `out`.
    pub fn grads_into(&self, root: Var, out: &mut GradMap) -> Gradients {
        let grads = self.tape.backward(root);
        for (name, &var) in &self.bound {
            if let Some(g) = grads.get(var) {
                match out.get_mut(name) {
                    Some(acc) => *acc += g,
                    None => {
                        out.insert(name.clone(), g.clone());
                    }
                }
            }
        }
        grads
    }
}

// ---- initialization helpers ----

pub fn uniform_init(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> ArrayD<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    ArrayD::from_shape_vec(ndarray::IxDyn(shape), data).unwrap()
}

/// Kaiming-style bound for a fan-in of `fan`.
pub fn fan_in_bound(fan: usize) -> f64 {
    (1.0 / fan as f64).sqrt()
}

// ---- layers ----

/// Pointwise linear map applied per frame: `[T, in] -> [T, out]`.
#[derive(Clone)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Self {
            name: name.into(),
            in_dim,
            out_dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let b = fan_in_bound(self.in_dim);
        store.insert(
            format!("{}.weight", self.name),
            uniform_init(rng, &[self.in_dim, self.out_dim], b),
        );
        store.insert(
            format!("{}.bias", self.name),
            uniform_init(rng, &[self.out_dim], b),
        );
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let w = s.p(&format!("{}.weight", self.name));
        let b = s.p(&format!("{}.bias", self.name));
        let y = s.tape.matmul(x, w);
        s.tape.add_row_bias(y, b)
    }

    /// Apply to a single vector `[in]` (one frame), returning `[out]`.
    pub fn forward_vec(&self, s: &mut Session, x: Var) -> Var {
        let row = s.tape.reshape(x, &[1, self.in_dim]);
        let y = self.forward(s, row);
        s.tape.reshape(y, &[self.out_dim])
    }
}

#[derive(Clone)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore) {
        store.insert(format!("{}.gain", self.name), ArrayD::ones(ndarray::IxDyn(&[self.dim])));
        store.insert(format!("{}.bias", self.name), ArrayD::zeros(ndarray::IxDyn(&[self.dim])));
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let g = s.p(&format!("{}.gain", self.name));
        let b = s.p(&format!("{}.bias", self.name));
        s.tape.layer_norm_rows(x, g, b, EPS_NORM)
    }
}

#[derive(Clone)]
pub struct GlobalLayerNorm {
    pub name: String,
    pub dim: usize,
}

impl GlobalLayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore) {
        store.insert(format!("{}.gain", self.name), ArrayD::ones(ndarray::IxDyn(&[self.dim])));
        store.insert(format!("{}.bias", self.name), ArrayD::zeros(ndarray::IxDyn(&[self.dim])));
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let g = s.p(&format!("{}.gain", self.name));
        let b = s.p(&format!("{}.bias", self.name));
        s.tape.global_layer_norm(x, g, b, EPS_NORM)
    }
}

#[derive(Clone)]
pub struct BatchNorm1d {
    pub name: String,
    pub dim: usize,
    pub momentum: f64,
}

impl BatchNorm1d {
    pub fn new(name: impl Into<String>, dim: usize, momentum: f64) -> Self {
        Self {
            name: name.into(),
            dim,
            momentum,
        }
    }

    pub fn init(&self, store: &mut ParamStore) {
        store.insert(format!("{}.gamma", self.name), ArrayD::ones(ndarray::IxDyn(&[self.dim])));
        store.insert(format!("{}.beta", self.name), ArrayD::zeros(ndarray::IxDyn(&[self.dim])));
        store.insert_buffer(
            format!("{}.running_mean", self.name),
            ArrayD::zeros(ndarray::IxDyn(&[self.dim])),
        );
        store.insert_buffer(
            format!("{}.running_var", self.name),
            ArrayD::ones(ndarray::IxDyn(&[self.dim])),
        );
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let gamma = s.p(&format!("{}.gamma", self.name));
        let beta = s.p(&format!("{}.beta", self.name));
        if s.train {
            let (mean, var) = s.tape.batch_stats(x);
            s.bn_updates.push((self.name.clone(), mean, var));
            s.tape.batch_norm_train(x, gamma, beta, EPS_NORM)
        } else {
            let rm = s
                .store
                .buffers
                .get(&format!("{}.running_mean", self.name))
                .unwrap()
                .clone();
            let rv = s
                .store
                .buffers
                .get(&format!("{}.running_var", self.name))
                .unwrap()
                .clone();
            let neg_mean = s.tape.leaf(rm.mapv(|m| -m));
            let inv_std = s.tape.leaf(rv.mapv(|v| 1.0 / (v + EPS_NORM).sqrt()));
            let centered = s.tape.add_row_bias(x, neg_mean);
            let xhat = s.tape.mul_row_vec(centered, inv_std);
            let scaled = s.tape.mul_row_vec(xhat, gamma);
            s.tape.add_row_bias(scaled, beta)
        }
    }

    /// Fold observed batch statistics into the running averages.
    pub fn apply_update(
        store: &mut ParamStore,
        name: &str,
        mean: &Array1<f64>,
        var: &Array1<f64>,
        momentum: f64,
    ) {
        let rm = store
            .buffers
            .get_mut(&format!("{name}.running_mean"))
            .unwrap();
        for (r, &m) in rm.iter_mut().zip(mean.iter()) {
            *r = (1.0 - momentum) * *r + momentum * m;
        }
        let rv = store
            .buffers
            .get_mut(&format!("{name}.running_var"))
            .unwrap();
        for (r, &v) in rv.iter_mut().zip(var.iter()) {
            *r = (1.0 - momentum) * *r + momentum * v;
        }
    }
}

#[derive(Clone)]
pub struct PRelu {
    pub name: String,
    pub dim: usize,
}

impl PRelu {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore) {
        store.insert(
            format!("{}.alpha", self.name),
            ArrayD::from_elem(ndarray::IxDyn(&[self.dim]), 0.25),
        );
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let a = s.p(&format!("{}.alpha", self.name));
        s.tape.prelu(x, a)
    }
}

/// Learned filterbank (one encoder or decoder scale): `[channels, filter_len]`.
#[derive(Clone)]
pub struct Filterbank {
    pub name: String,
    pub channels: usize,
    pub filter_len: usize,
}

impl Filterbank {
    pub fn new(name: impl Into<String>, channels: usize, filter_len: usize) -> Self {
        Self {
            name: name.into(),
            channels,
            filter_len,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let b = fan_in_bound(self.filter_len);
        store.insert(
            format!("{}.weight", self.name),
            uniform_init(rng, &[self.channels, self.filter_len], b),
        );
    }

    pub fn weight(&self, s: &mut Session) -> Var {
        s.p(&format!("{}.weight", self.name))
    }
}

/// Per-channel depthwise convolution kernels `[channels, kernel]`.
#[derive(Clone)]
pub struct DepthwiseConv {
    pub name: String,
    pub channels: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl DepthwiseConv {
    pub fn new(
        name: impl Into<String>,
        channels: usize,
        kernel: usize,
        dilation: usize,
    ) -> Self {
        Self {
            name: name.into(),
            channels,
            kernel,
            dilation,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let b = fan_in_bound(self.kernel);
        store.insert(
            format!("{}.weight", self.name),
            uniform_init(rng, &[self.channels, self.kernel], b),
        );
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let w = s.p(&format!("{}.weight", self.name));
        s.tape.depthwise_conv1d(x, w, self.dilation)
    }
}

// ---- optimizer ----

/// ADAM with optional global-norm gradient clipping.
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: IndexMap<String, ArrayD<f64>>,
    pub v: IndexMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    /// Clip gradients to a global norm in place; returns the pre-clip norm.
    pub fn clip_global_norm(grads: &mut GradMap, max_norm: f64) -> f64 {
        let sq: f64 = grads.values().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum();
        let norm = sq.sqrt();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for g in grads.values_mut() {
                g.mapv_inplace(|x| x * scale);
            }
        }
        norm
    }

    pub fn apply(&mut self, store: &mut ParamStore, grads: &GradMap) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for (name, g) in grads {
            let p = store
                .params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
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
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mhat = *m / b1t;
                    let vhat = *v / b2t;
                    *p -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}
