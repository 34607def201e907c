//! Mask-estimation networks: TCN block, conformer block, external
//! feed-forward block, the Conformer-FFN and TCN-Conformer stacks, the TCN
//! baseline, and the per-scale mask heads.

use crate::autodiff::Var;
use crate::config::{Architecture, ConvGating, RunConfig, SeparatorConfig};
use crate::nn::{
    DepthwiseConv, GlobalLayerNorm, LayerNorm, Linear, PRelu, ParamStore, Session,
};
use rand_chacha::ChaCha8Rng;

/// TCN block: pointwise conv, PReLU + gLN, dilated depthwise-separable conv,
/// PReLU + gLN, pointwise conv, wrapped in a residual connection. Zeroing the
/// final pointwise layer makes the block the identity map.
#[derive(Clone)]
pub struct TcnBlock {
    pub pw1: Linear,
    pub act1: PRelu,
    pub norm1: GlobalLayerNorm,
    pub depthwise: DepthwiseConv,
    pub act2: PRelu,
    pub norm2: GlobalLayerNorm,
    pub pw2: Linear,
    pub dim: usize,
}

impl TcnBlock {
    pub fn new(name: &str, dim: usize, kernel: usize, dilation: usize) -> Self {
        Self {
            pw1: Linear::new(format!("{name}.pw1"), dim, dim),
            act1: PRelu::new(format!("{name}.act1"), dim),
            norm1: GlobalLayerNorm::new(format!("{name}.norm1"), dim),
            depthwise: DepthwiseConv::new(format!("{name}.depthwise"), dim, kernel, dilation),
            act2: PRelu::new(format!("{name}.act2"), dim),
            norm2: GlobalLayerNorm::new(format!("{name}.norm2"), dim),
            pw2: Linear::new(format!("{name}.pw2"), dim, dim),
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.pw1.init(store, rng);
        self.act1.init(store);
        self.norm1.init(store);
        self.depthwise.init(store, rng);
        self.act2.init(store);
        self.norm2.init(store);
        self.pw2.init(store, rng);
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let h = self.pw1.forward(s, x);
        let h = self.act1.forward(s, h);
        let h = self.norm1.forward(s, h);
        let h = self.depthwise.forward(s, h);
        let h = self.act2.forward(s, h);
        let h = self.norm2.forward(s, h);
        let h = self.pw2.forward(s, h);
        s.tape.add(x, h)
    }
}

/// Multi-head self-attention with a learned relative-position bias per head
/// (bucketed by clipped signed distance).
#[derive(Clone)]
pub struct SelfAttention {
    pub name: String,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
    pub max_distance: usize,
    pub dropout: f64,
}

impl SelfAttention {
    pub fn new(name: &str, dim: usize, heads: usize, max_distance: usize, dropout: f64) -> Self {
        assert!(dim % heads == 0, "heads must divide model dim");
        Self {
            name: name.to_string(),
            wq: Linear::new(format!("{name}.wq"), dim, dim),
            wk: Linear::new(format!("{name}.wk"), dim, dim),
            wv: Linear::new(format!("{name}.wv"), dim, dim),
            wo: Linear::new(format!("{name}.wo"), dim, dim),
            heads,
            dim,
            max_distance,
            dropout,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.wq.init(store, rng);
        self.wk.init(store, rng);
        self.wv.init(store, rng);
        self.wo.init(store, rng);
        store.insert(
            format!("{}.rel_bias", self.name),
            ndarray::ArrayD::zeros(ndarray::IxDyn(&[self.heads, 2 * self.max_distance + 1])),
        );
    }

    /// Returns the attended output; `probe_rows` (when set) receives the
    /// per-head attention matrices for introspection tests.
    pub fn forward(&self, s: &mut Session, x: Var, mut probe: Option<&mut Vec<Var>>) -> Var {
        let t = s.tape.value(x).shape()[0];
        let dh = self.dim / self.heads;
        let q = self.wq.forward(s, x);
        let k = self.wk.forward(s, x);
        let v = self.wv.forward(s, x);
        let bias = s.p(&format!("{}.rel_bias", self.name));
        let mut head_outs: Option<Var> = None;
        for h in 0..self.heads {
            let range = h * dh..(h + 1) * dh;
            let qh = s.tape.slice_cols(q, range.clone());
            let kh = s.tape.slice_cols(k, range.clone());
            let vh = s.tape.slice_cols(v, range);
            let kt = s.tape.transpose(kh);
            let scores = s.tape.matmul(qh, kt);
            let scores = s.tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let brow = s.tape.row(bias, h);
            let bmat = s.tape.rel_bias_matrix(brow, t);
            let scores = s.tape.add(scores, bmat);
            let att = s.tape.softmax_rows(scores);
            if let Some(p) = probe.as_deref_mut() {
                p.push(att);
            }
            let att = s.dropout(att, self.dropout);
            let ctx = s.tape.matmul(att, vh);
            head_outs = Some(match head_outs {
                Some(acc) => s.tape.concat_cols(acc, ctx),
                None => ctx,
            });
        }
        self.wo.forward(s, head_outs.unwrap())
    }
}

/// Half-step feed-forward sub-block of the conformer.
#[derive(Clone)]
pub struct FeedForward {
    pub norm: LayerNorm,
    pub lin1: Linear,
    pub lin2: Linear,
    pub dropout: f64,
}

impl FeedForward {
    pub fn new(name: &str, dim: usize, expansion: usize, dropout: f64) -> Self {
        Self {
            norm: LayerNorm::new(format!("{name}.norm"), dim),
            lin1: Linear::new(format!("{name}.lin1"), dim, dim * expansion),
            lin2: Linear::new(format!("{name}.lin2"), dim * expansion, dim),
            dropout,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.norm.init(store);
        self.lin1.init(store, rng);
        self.lin2.init(store, rng);
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let h = self.norm.forward(s, x);
        let h = self.lin1.forward(s, h);
        let h = s.tape.swish(h);
        let h = s.dropout(h, self.dropout);
        let h = self.lin2.forward(s, h);
        s.dropout(h, self.dropout)
    }
}

/// Conformer convolution module: pointwise expansion, gating, depthwise
/// convolution, batch-norm-free variant using gLN for utterance-level
/// statistics, swish, pointwise back to the model dim.
#[derive(Clone)]
pub struct ConvModule {
    pub norm: LayerNorm,
    pub expand: Linear,
    pub depthwise: DepthwiseConv,
    pub inner_norm: GlobalLayerNorm,
    pub project: Linear,
    pub gating: ConvGating,
    pub dropout: f64,
}

impl ConvModule {
    pub fn new(name: &str, dim: usize, cfg: &SeparatorConfig) -> Self {
        let (expand_out, inner) = match cfg.conv_gating {
            ConvGating::Swish3x => (cfg.conv_expansion * dim, cfg.conv_expansion * dim),
            ConvGating::Glu2x => (2 * dim, dim),
        };
        Self {
            norm: LayerNorm::new(format!("{name}.norm"), dim),
            expand: Linear::new(format!("{name}.expand"), dim, expand_out),
            depthwise: DepthwiseConv::new(format!("{name}.depthwise"), inner, cfg.conv_kernel, 1),
            inner_norm: GlobalLayerNorm::new(format!("{name}.inner_norm"), inner),
            project: Linear::new(format!("{name}.project"), inner, dim),
            gating: cfg.conv_gating,
            dropout: cfg.dropout,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.norm.init(store);
        self.expand.init(store, rng);
        self.depthwise.init(store, rng);
        self.inner_norm.init(store);
        self.project.init(store, rng);
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let h = self.norm.forward(s, x);
        let h = self.expand.forward(s, h);
        let h = match self.gating {
            ConvGating::Swish3x => s.tape.swish(h),
            ConvGating::Glu2x => {
                let inner = self.depthwise.channels;
                let value = s.tape.slice_cols(h, 0..inner);
                let gate = s.tape.slice_cols(h, inner..2 * inner);
                let gate = s.tape.sigmoid(gate);
                s.tape.mul(value, gate)
            }
        };
        let h = self.depthwise.forward(s, h);
        let h = self.inner_norm.forward(s, h);
        let h = s.tape.swish(h);
        let h = self.project.forward(s, h);
        s.dropout(h, self.dropout)
    }
}

/// Conformer block: half-step FFN, self-attention, convolution module,
/// half-step FFN, final layer norm, residuals around each sub-block.
#[derive(Clone)]
pub struct ConformerBlock {
    pub ffn1: FeedForward,
    pub attention: SelfAttention,
    pub conv: ConvModule,
    pub ffn2: FeedForward,
    pub attn_norm: LayerNorm,
    pub final_norm: LayerNorm,
    pub dropout: f64,
}

impl ConformerBlock {
    pub fn new(name: &str, dim: usize, cfg: &SeparatorConfig) -> Self {
        Self {
            ffn1: FeedForward::new(
                &format!("{name}.ffn1"),
                dim,
                cfg.ffn_expansion,
                cfg.dropout,
            ),
            attention: SelfAttention::new(
                &format!("{name}.attention"),
                dim,
                cfg.heads,
                cfg.rel_pos_max_distance,
                cfg.dropout,
            ),
            conv: ConvModule::new(&format!("{name}.conv"), dim, cfg),
            ffn2: FeedForward::new(
                &format!("{name}.ffn2"),
                dim,
                cfg.ffn_expansion,
                cfg.dropout,
            ),
            attn_norm: LayerNorm::new(format!("{name}.attn_norm"), dim),
            final_norm: LayerNorm::new(format!("{name}.final_norm"), dim),
            dropout: cfg.dropout,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.ffn1.init(store, rng);
        self.attention.init(store, rng);
        self.conv.init(store, rng);
        self.ffn2.init(store, rng);
        self.attn_norm.init(store);
        self.final_norm.init(store);
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        self.forward_probed(s, x, None)
    }

    pub fn forward_probed(
        &self,
        s: &mut Session,
        x: Var,
        probe: Option<&mut Vec<Var>>,
    ) -> Var {
        let h = self.ffn1.forward(s, x);
        let h = s.tape.scale(h, 0.5);
        let x = s.tape.add(x, h);

        let a_in = self.attn_norm.forward(s, x);
        let a = self.attention.forward(s, a_in, probe);
        let a = s.dropout(a, self.dropout);
        let x = s.tape.add(x, a);

        let c = self.conv.forward(s, x);
        let x = s.tape.add(x, c);

        let h = self.ffn2.forward(s, x);
        let h = s.tape.scale(h, 0.5);
        let x = s.tape.add(x, h);

        self.final_norm.forward(s, x)
    }
}

/// External feed-forward block: two feed-forward layers with a swish and
/// dropout; output dimension is half the input dimension.
#[derive(Clone)]
pub struct ExternalFfn {
    pub lin1: Linear,
    pub lin2: Linear,
    pub dropout: f64,
}

impl ExternalFfn {
    pub fn new(name: &str, in_dim: usize, dropout: f64) -> Self {
        assert!(in_dim % 2 == 0, "external FFN input dim must be even");
        let out = in_dim / 2;
        Self {
            lin1: Linear::new(format!("{name}.lin1"), in_dim, out),
            lin2: Linear::new(format!("{name}.lin2"), out, out),
            dropout,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.lin1.init(store, rng);
        self.lin2.init(store, rng);
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Var {
        let h = self.lin1.forward(s, x);
        let h = s.tape.swish(h);
        let h = s.dropout(h, self.dropout);
        let h = self.lin2.forward(s, h);
        s.dropout(h, self.dropout)
    }
}

/// Mask heads: three pointwise maps from the trunk output to per-scale masks,
/// each ReLU-activated.
#[derive(Clone)]
pub struct MaskHeads {
    pub heads: [Linear; 3],
}

impl MaskHeads {
    pub fn new(bottleneck_dim: usize, channels_per_scale: usize) -> Self {
        let heads = crate::frontend::SCALE_NAMES
            .map(|n| Linear::new(format!("maskhead.{n}"), bottleneck_dim, channels_per_scale));
        Self { heads }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for h in &self.heads {
            h.init(store, rng);
        }
    }

    pub fn forward(&self, s: &mut Session, y: Var) -> [Var; 3] {
        [0, 1, 2].map(|i| {
            let m = self.heads[i].forward(s, y);
            s.tape.relu(m)
        })
    }
}

enum StackKind {
    ConformerFfn {
        conformer: ConformerBlock,
        ffn: ExternalFfn,
    },
    TcnConformer {
        tcn: TcnBlock,
        conformer: ConformerBlock,
        proj: Linear,
    },
    Baseline {
        blocks: Vec<TcnBlock>,
        proj: Linear,
    },
}

/// The separator trunk: bottleneck features plus speaker embedding to a
/// `[T, bottleneck]` representation feeding the mask heads.
pub struct Separator {
    stacks: Vec<StackKind>,
    pub architecture: Architecture,
    pub model_dim: usize,
    pub bottleneck_dim: usize,
}

impl Separator {
    pub fn new(cfg: &RunConfig) -> Self {
        let sc = &cfg.separator;
        let d = cfg.model_dim();
        let b = cfg.frontend.bottleneck_dim;
        let stacks = match sc.architecture {
            Architecture::ConformerFfn => (0..sc.stacks)
                .map(|k| StackKind::ConformerFfn {
                    conformer: ConformerBlock::new(&format!("separator.stack{k}.conformer"), d, sc),
                    ffn: ExternalFfn::new(&format!("separator.stack{k}.ffn"), d, sc.dropout),
                })
                .collect(),
            Architecture::TcnConformer => (0..sc.stacks)
                .map(|k| StackKind::TcnConformer {
                    tcn: TcnBlock::new(
                        &format!("separator.stack{k}.tcn"),
                        d,
                        sc.tcn_kernel,
                        sc.tcn_dilation,
                    ),
                    conformer: ConformerBlock::new(&format!("separator.stack{k}.conformer"), d, sc),
                    proj: Linear::new(format!("separator.stack{k}.proj"), d, b),
                })
                .collect(),
            Architecture::TcnBaseline => (0..sc.baseline_stacks)
                .map(|k| StackKind::Baseline {
                    blocks: (0..sc.baseline_blocks_per_stack)
                        .map(|j| {
                            TcnBlock::new(
                                &format!("separator.stack{k}.tcn{j}"),
                                d,
                                sc.tcn_kernel,
                                1 << j,
                            )
                        })
                        .collect(),
                    proj: Linear::new(format!("separator.stack{k}.proj"), d, b),
                })
                .collect(),
        };
        Self {
            stacks,
            architecture: sc.architecture,
            model_dim: d,
            bottleneck_dim: b,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for stack in &self.stacks {
            match stack {
                StackKind::ConformerFfn { conformer, ffn } => {
                    conformer.init(store, rng);
                    ffn.init(store, rng);
                }
                StackKind::TcnConformer {
                    tcn,
                    conformer,
                    proj,
                } => {
                    tcn.init(store, rng);
                    conformer.init(store, rng);
                    proj.init(store, rng);
                }
                StackKind::Baseline { blocks, proj } => {
                    for b in blocks {
                        b.init(store, rng);
                    }
                    proj.init(store, rng);
                }
            }
        }
    }

    /// Run the trunk. The embedding is re-concatenated at the start of every
    /// stack; every block in between operates at the full model dim.
    pub fn forward(&self, s: &mut Session, bottleneck: Var, embedding: Var) -> Var {
        let mut y = bottleneck;
        for stack in &self.stacks {
            let x = s.tape.concat_rows_vec(y, embedding);
            y = match stack {
                StackKind::ConformerFfn { conformer, ffn } => {
                    let h = conformer.forward(s, x);
                    ffn.forward(s, h)
                }
                StackKind::TcnConformer {
                    tcn,
                    conformer,
                    proj,
                } => {
                    let h = tcn.forward(s, x);
                    let h = conformer.forward(s, h);
                    proj.forward(s, h)
                }
                StackKind::Baseline { blocks, proj } => {
                    let mut h = x;
                    for b in blocks {
                        h = b.forward(s, h);
                    }
                    proj.forward(s, h)
                }
            };
        }
        y
    }

    /// (TCN blocks, conformer blocks, external FFN blocks) instantiated.
    pub fn block_counts(&self) -> (usize, usize, usize) {
        let mut tcn = 0;
        let mut conf = 0;
        let mut ffn = 0;
        for stack in &self.stacks {
            match stack {
                StackKind::ConformerFfn { .. } => {
                    conf += 1;
                    ffn += 1;
                }
                StackKind::TcnConformer { .. } => {
                    tcn += 1;
                    conf += 1;
                }
                StackKind::Baseline { blocks, .. } => tcn += blocks.len(),
            }
        }
        (tcn, conf, ffn)
    }
}
