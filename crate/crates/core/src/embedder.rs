//! ResNet speaker embedder and speaker-classification head.
//!
//! Reference speech goes through the shared multi-scale encoder and
//! bottleneck, then three residual blocks with 1x1 convolutions and max
//! pooling, a pointwise map to the embedding dimension, and mean pooling
//! over frames.

use crate::autodiff::Var;
use crate::config::RunConfig;
use crate::frontend::Frontend;
use crate::nn::{BatchNorm1d, Linear, PRelu, ParamStore, Session};
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
pub struct ResidualBlock {
    pub conv1: Linear,
    pub bn1: BatchNorm1d,
    pub act1: PRelu,
    pub conv2: Linear,
    pub bn2: BatchNorm1d,
    pub skip: Option<Linear>,
    pub act2: PRelu,
}

impl ResidualBlock {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, bn_momentum: f64) -> Self {
        Self {
            conv1: Linear::new(format!("{name}.conv1"), in_dim, out_dim),
            bn1: BatchNorm1d::new(format!("{name}.bn1"), out_dim, bn_momentum),
            act1: PRelu::new(format!("{name}.act1"), out_dim),
            conv2: Linear::new(format!("{name}.conv2"), out_dim, out_dim),
            bn2: BatchNorm1d::new(format!("{name}.bn2"), out_dim, bn_momentum),
            skip: (in_dim != out_dim)
                .then(|| Linear::new(format!("{name}.skip"), in_dim, out_dim)),
            act2: PRelu::new(format!("{name}.act2"), out_dim),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.conv1.init(store, rng);
        self.bn1.init(store);
        self.act1.init(store);
        self.conv2.init(store, rng);
        self.bn2.init(store);
        if let Some(skip) = &self.skip {
            skip.init(store, rng);
        }
        self.act2.init(store);
    }

    /// conv1 -> bn -> PReLU -> conv2 -> bn, add skip, PReLU, then max-pool
    /// over frames (kernel 3, stride 3, ceil mode).
    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let h = self.conv1.forward(s, x);
        let h = self.bn1.forward(s, h);
        let h = self.act1.forward(s, h);
        let h = self.conv2.forward(s, h);
        let h = self.bn2.forward(s, h);
        let skip = match &self.skip {
            Some(lin) => lin.forward(s, x),
            None => x,
        };
        let h = s.tape.add(h, skip);
        let h = self.act2.forward(s, h);
        s.tape.maxpool_rows(h, 3, 3)
    }
}

#[derive(Clone)]
pub struct Embedder {
    pub blocks: [ResidualBlock; 3],
    pub proj: Linear,
    pub head: Linear,
    pub embedding_dim: usize,
    pub normalize: bool,
}

impl Embedder {
    pub fn new(cfg: &RunConfig, n_speakers: usize) -> Self {
        let dims = cfg.embedder_block_dims();
        let mk = |i: usize| {
            ResidualBlock::new(
                &format!("embedder.block{}", i + 1),
                dims[i].0,
                dims[i].1,
                cfg.embedder.bn_momentum,
            )
        };
        Self {
            blocks: [mk(0), mk(1), mk(2)],
            proj: Linear::new("embedder.proj", dims[2].1, cfg.embedder.embedding_dim),
            head: Linear::new("speaker_head.linear", cfg.embedder.embedding_dim, n_speakers),
            embedding_dim: cfg.embedder.embedding_dim,
            normalize: cfg.embedder.normalize_embedding,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for b in &self.blocks {
            b.init(store, rng);
        }
        self.proj.init(store, rng);
        self.head.init(store, rng);
    }

    /// Bottleneck features of the reference speech to a fixed-dimensional
    /// speaker embedding.
    pub fn embed_features(&self, s: &mut Session, bottleneck: Var) -> Var {
        let mut h = bottleneck;
        for b in &self.blocks {
            h = b.forward(s, h);
        }
        let h = self.proj.forward(s, h);
        let e = s.tape.mean_rows(h);
        if self.normalize {
            let sq = s.tape.dot(e, e);
            let norm_sq = s.tape.add_const(sq, 1e-12);
            let inv = s.tape.rsqrt(norm_sq);
            return s.tape.mul_by_scalar_var(e, inv);
        }
        e
    }

    /// Convenience: full reference pipeline through the shared frontend.
    pub fn embed(&self, s: &mut Session, frontend: &Frontend, reference: Var) -> Var {
        let ms = frontend.encode_multiscale(s, reference);
        let b = frontend.project_bottleneck(s, ms);
        self.embed_features(s, b)
    }

    /// Speaker logits from an embedding.
    pub fn classify(&self, s: &mut Session, embedding: Var) -> Var {
        self.head.forward_vec(s, embedding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2, ArrayD};
    use rand::{Rng, SeedableRng};

    fn setup(cfg: &RunConfig, n_speakers: usize, seed: u64) -> (Embedder, ParamStore) {
        let e = Embedder::new(cfg, n_speakers);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        e.init(&mut store, &mut rng);
        (e, store)
    }

    fn rand_features(t: usize, c: usize, seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((t, c), |_| rng.gen_range(-1.0..1.0)).into_dyn()
    }

    #[test]
    fn block_shapes_follow_pooling_and_dims() {
        let cfg = RunConfig::default();
        let (emb, store) = setup(&cfg, 4, 0);
        let mut s = Session::eval(&store);
        // [9, 256] -> block1 (256,256) -> [3, 256]
        let x = s.tape.leaf(rand_features(9, 256, 1));
        let y = emb.blocks[0].forward(&mut s, x);
        assert_eq!(s.tape.value(y).shape(), &[3, 256]);
        // [9, 256] -> block2 (256,512) -> [3, 512]
        let x = s.tape.leaf(rand_features(9, 256, 2));
        let y = emb.blocks[1].forward(&mut s, x);
        assert_eq!(s.tape.value(y).shape(), &[3, 512]);
    }

    #[test]
    fn single_frame_survives_pooling() {
        let cfg = RunConfig::default();
        let (emb, store) = setup(&cfg, 4, 1);
        let mut s = Session::eval(&store);
        let x = s.tape.leaf(rand_features(1, 256, 3));
        let y = emb.blocks[0].forward(&mut s, x);
        assert_eq!(s.tape.value(y).shape(), &[1, 256]);
    }

    #[test]
    fn embedding_dim_fixed_across_lengths() {
        let cfg = RunConfig::default();
        let (emb, store) = setup(&cfg, 4, 2);
        for t in [27, 81, 100, 1] {
            let mut s = Session::eval(&store);
            let x = s.tape.leaf(rand_features(t, 256, 100 + t as u64));
            let e = emb.embed_features(&mut s, x);
            assert_eq!(s.tape.value(e).shape(), &[256]);
        }
    }

    #[test]
    fn eval_mode_deterministic() {
        let cfg = RunConfig::default();
        let (emb, store) = setup(&cfg, 4, 3);
        let x = rand_features(30, 256, 5);
        let run = || {
            let mut s = Session::eval(&store);
            let v = s.tape.leaf(x.clone());
            let e = emb.embed_features(&mut s, v);
            s.tape.value(e).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn classifier_uniform_at_zero() {
        let cfg = RunConfig::default();
        let mut store = ParamStore::new();
        let emb = Embedder::new(&cfg, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        emb.init(&mut store, &mut rng);
        // zero the head so logits are uniform for any input
        *store.params.get_mut("speaker_head.linear.weight").unwrap() =
            ArrayD::zeros(ndarray::IxDyn(&[256, 4]));
        *store.params.get_mut("speaker_head.linear.bias").unwrap() =
            ArrayD::zeros(ndarray::IxDyn(&[4]));
        let mut s = Session::eval(&store);
        let e = s.tape.leaf(Array1::zeros(256).into_dyn());
        let logits = emb.classify(&mut s, e);
        assert_eq!(s.tape.value(logits).shape(), &[4]);
        assert!(s.tape.value(logits).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_check_toy_embedder() {
        use crate::autodiff::check::{finite_diff, max_rel_err};
        let mut cfg = RunConfig::toy(crate::Architecture::TcnConformer, 1);
        cfg.frontend.bottleneck_dim = 4;
        cfg.frontend.channels_per_scale = 4;
        cfg.embedder.embedding_dim = 4;
        let (emb, store) = setup(&cfg, 3, 5);
        let x = rand_features(10, 4, 6);
        let names: Vec<String> = store.params.keys().cloned().collect();
        let buffers = store.buffers.clone();
        let run = |params: &[ArrayD<f64>]| -> f64 {
            let mut st = ParamStore::new();
            for (name, val) in names.iter().zip(params) {
                st.insert(name.clone(), val.clone());
            }
            st.buffers = buffers.clone();
            // train mode (batch statistics) but no dropout in this path
            let mut s = Session::train(&st, ChaCha8Rng::seed_from_u64(0));
            let v = s.tape.leaf(x.clone());
            let e = emb.embed_features(&mut s, v);
            let logits = emb.classify(&mut s, e);
            let loss = s.tape.cross_entropy(logits, 1);
            let esq = s.tape.dot(e, e);
            let total = s.tape.add(loss, esq);
            s.tape.scalar(total)
        };
        let inputs: Vec<ArrayD<f64>> = names.iter().map(|n| store.get(n).clone()).collect();
        let mut s = Session::train(&store, ChaCha8Rng::seed_from_u64(0));
        let v = s.tape.leaf(x.clone());
        let e = emb.embed_features(&mut s, v);
        let logits = emb.classify(&mut s, e);
        let loss = s.tape.cross_entropy(logits, 1);
        let esq = s.tape.dot(e, e);
        let total = s.tape.add(loss, esq);
        let mut gm = crate::nn::GradMap::new();
        s.grads_into(total, &mut gm);
        let analytic: Vec<ArrayD<f64>> = names
            .iter()
            .map(|n| {
                gm.get(n)
                    .cloned()
                    .unwrap_or_else(|| ArrayD::zeros(store.get(n).raw_dim()))
            })
            .collect();
        let numeric = finite_diff(&inputs, run, 1e-5);
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "max rel err {err}");
    }
}
