//! Hierarchical run configuration with strict (unknown-key rejecting) parsing.

use crate::error::{Result, TseError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    TcnBaseline,
    ConformerFfn,
    TcnConformer,
}

impl std::str::FromStr for Architecture {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tcn_baseline" => Ok(Self::TcnBaseline),
            "conformer_ffn" => Ok(Self::ConformerFfn),
            "tcn_conformer" => Ok(Self::TcnConformer),
            other => Err(format!(
                "unknown architecture `{other}` (expected tcn_baseline, conformer_ffn, or tcn_conformer)"
            )),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::TcnBaseline => "tcn_baseline",
            Self::ConformerFfn => "conformer_ffn",
            Self::TcnConformer => "tcn_conformer",
        };
        f.write_str(s)
    }
}

/// Convolution-module gating variant inside the conformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvGating {
    /// Pointwise expansion to 3*D followed by swish (no GLU).
    Swish3x,
    /// Pointwise expansion to 2*D consumed by a gated linear unit.
    Glu2x,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub sample_rate: u32,
    pub snr_range_db: [f64; 2],
    pub noise_snr_range_db: [f64; 2],
    /// Fraction of speakers held out for the test split.
    pub test_speaker_fraction: f64,
    pub mixture_types: Vec<MixtureType>,
    pub train_entries: usize,
    pub dev_entries: usize,
    pub test_entries: usize,
    /// Pad (true) or drop (false) short tail chunks when segmenting.
    pub pad_tail: bool,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            snr_range_db: [0.0, 5.0],
            noise_snr_range_db: [-6.0, 3.0],
            test_speaker_fraction: 0.5,
            mixture_types: vec![MixtureType::TwoMix],
            train_entries: 8,
            dev_entries: 2,
            test_entries: 2,
            pad_tail: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MixtureType {
    #[serde(rename = "2mix")]
    TwoMix,
    #[serde(rename = "3mix")]
    ThreeMix,
    #[serde(rename = "noisymix")]
    NoisyMix,
}

impl std::fmt::Display for MixtureType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::TwoMix => "2mix",
            Self::ThreeMix => "3mix",
            Self::NoisyMix => "noisymix",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub filter_lengths_ms: [f64; 3],
    pub channels_per_scale: usize,
    pub bottleneck_dim: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            filter_lengths_ms: [2.5, 10.0, 20.0],
            channels_per_scale: 256,
            bottleneck_dim: 256,
        }
    }
}

impl FrontendConfig {
    /// Filter lengths in samples at the given rate.
    pub fn filter_lengths(&self, sample_rate: u32) -> [usize; 3] {
        self.filter_lengths_ms
            .map(|ms| (ms * sample_rate as f64 / 1000.0).round() as usize)
    }

    /// Shared stride: half the shortest filter length.
    pub fn stride(&self, sample_rate: u32) -> usize {
        (self.filter_lengths(sample_rate)[0] / 2).max(1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedderConfig {
    pub embedding_dim: usize,
    pub normalize_embedding: bool,
    pub bn_momentum: f64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 256,
            normalize_embedding: false,
            bn_momentum: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparatorConfig {
    pub architecture: Architecture,
    /// Number of stacks K for the proposed architectures.
    pub stacks: usize,
    pub heads: usize,
    pub conv_kernel: usize,
    pub conv_expansion: usize,
    pub ffn_expansion: usize,
    pub dropout: f64,
    pub conv_gating: ConvGating,
    pub tcn_kernel: usize,
    pub tcn_dilation: usize,
    pub rel_pos_max_distance: usize,
    pub baseline_stacks: usize,
    pub baseline_blocks_per_stack: usize,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::TcnConformer,
            stacks: 4,
            heads: 8,
            conv_kernel: 31,
            conv_expansion: 3,
            ffn_expansion: 4,
            dropout: 0.1,
            conv_gating: ConvGating::Swish3x,
            tcn_kernel: 3,
            tcn_dilation: 1,
            rel_pos_max_distance: 64,
            baseline_stacks: 4,
            baseline_blocks_per_stack: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectivesConfig {
    /// Per-scale SI-SNR weights, shortest filter first. Must sum to 1.
    pub scale_weights: [f64; 3],
    /// Cross-entropy weight in the multi-task objective.
    pub ce_weight: f64,
    pub clamp_db: f64,
    pub mean_center: bool,
}

impl Default for ObjectivesConfig {
    fn default() -> Self {
        Self {
            scale_weights: [0.8, 0.1, 0.1],
            ce_weight: 0.5,
            clamp_db: 60.0,
            mean_center: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub segment_s: f64,
    pub learning_rate: f64,
    /// Halve the learning rate after this many epochs without dev improvement.
    pub lr_halving_patience: usize,
    pub grad_clip_norm: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Optional hard cap on optimizer steps (0 = no cap); used by toy runs.
    pub max_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            early_stop_patience: 6,
            segment_s: 4.0,
            learning_rate: 1e-3,
            lr_halving_patience: 2,
            grad_clip_norm: 5.0,
            batch_size: 8,
            seed: 0,
            max_steps: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub signal: SignalConfig,
    pub frontend: FrontendConfig,
    pub embedder: EmbedderConfig,
    pub separator: SeparatorConfig,
    pub objectives: ObjectivesConfig,
    pub training: TrainConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| TseError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Separator model dimension: bottleneck features concatenated with the
    /// speaker embedding.
    pub fn model_dim(&self) -> usize {
        self.frontend.bottleneck_dim + self.embedder.embedding_dim
    }

    /// Residual-block (in, out) dims of the embedder, derived from the
    /// bottleneck width: (b, b), (b, 2b), (2b, 2b).
    pub fn embedder_block_dims(&self) -> [(usize, usize); 3] {
        let b = self.frontend.bottleneck_dim;
        [(b, b), (b, 2 * b), (2 * b, 2 * b)]
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.frontend.filter_lengths_ms;
        if !(f[0] < f[1] && f[1] < f[2]) {
            return Err(TseError::Config(
                "filter_lengths_ms must be strictly increasing".into(),
            ));
        }
        if self.model_dim() % self.separator.heads != 0 {
            return Err(TseError::Config(format!(
                "heads ({}) must divide model dim ({})",
                self.separator.heads,
                self.model_dim()
            )));
        }
        if self.separator.architecture == Architecture::ConformerFfn
            && self.frontend.bottleneck_dim != self.embedder.embedding_dim
        {
            return Err(TseError::Config(
                "conformer_ffn requires bottleneck_dim == embedding_dim \
                 (the external FFN halves the model dim back to the bottleneck)"
                    .into(),
            ));
        }
        if self.separator.conv_kernel % 2 == 0 || self.separator.tcn_kernel % 2 == 0 {
            return Err(TseError::Config("conv kernels must be odd".into()));
        }
        let w = &self.objectives.scale_weights;
        if (w[0] + w[1] + w[2] - 1.0).abs() > 1e-9 || w.iter().any(|&x| x < 0.0) {
            return Err(TseError::Config(
                "scale_weights must be nonnegative and sum to 1".into(),
            ));
        }
        if self.objectives.ce_weight < 0.0 {
            return Err(TseError::Config("ce_weight must be nonnegative".into()));
        }
        if self.training.early_stop_patience >= self.training.epochs {
            return Err(TseError::Config(
                "early_stop_patience must be < epochs".into(),
            ));
        }
        if self.training.segment_s <= 0.0 {
            return Err(TseError::Config("segment_s must be positive".into()));
        }
        if self.separator.stacks == 0 {
            return Err(TseError::Config("stacks must be >= 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization; embedded in every
    /// output artifact for provenance.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Small configuration used by tests and the toy walkthrough: 8 kHz,
    /// narrow layers, short segments.
    pub fn toy(architecture: Architecture, stacks: usize) -> Self {
        let mut cfg = Self::default();
        cfg.signal.sample_rate = 8000;
        cfg.frontend.channels_per_scale = 16;
        cfg.frontend.bottleneck_dim = 16;
        cfg.embedder.embedding_dim = 16;
        cfg.separator.architecture = architecture;
        cfg.separator.stacks = stacks;
        cfg.separator.heads = 2;
        cfg.separator.conv_kernel = 7;
        cfg.separator.rel_pos_max_distance = 16;
        cfg.separator.baseline_stacks = 2;
        cfg.separator.baseline_blocks_per_stack = 2;
        cfg.separator.dropout = 0.0;
        cfg.training.segment_s = 0.5;
        cfg.training.batch_size = 2;
        cfg.validate().expect("toy config valid");
        cfg
    }
}
