//! Multi-scale learned encoder/decoder and bottleneck projection.
//!
//! Three parallel filterbanks (2.5 / 10 / 20 ms by default) share one stride
//! (half the shortest filter length). Longer scales pad the input
//! symmetrically so all scales produce the same frame count.

use crate::autodiff::Var;
use crate::config::RunConfig;
use crate::error::{Result, TseError};
use crate::nn::{Filterbank, LayerNorm, Linear, ParamStore, Session};
use rand_chacha::ChaCha8Rng;

pub const SCALE_NAMES: [&str; 3] = ["short", "mid", "long"];

#[derive(Clone)]
pub struct Frontend {
    pub encoders: [Filterbank; 3],
    pub decoders: [Filterbank; 3],
    pub bottleneck_norm: LayerNorm,
    pub bottleneck_proj: Linear,
    pub filter_lengths: [usize; 3],
    pub stride: usize,
    pub channels: usize,
    pub bottleneck_dim: usize,
}

impl Frontend {
    pub fn new(cfg: &RunConfig) -> Self {
        let lens = cfg.frontend.filter_lengths(cfg.signal.sample_rate);
        let c = cfg.frontend.channels_per_scale;
        let encoders = SCALE_NAMES.map(|n| Filterbank::new(format!("encoder.{n}"), c, 0));
        let decoders = SCALE_NAMES.map(|n| Filterbank::new(format!("decoder.{n}"), c, 0));
        let mut encoders = encoders;
        let mut decoders = decoders;
        for i in 0..3 {
            encoders[i].filter_len = lens[i];
            decoders[i].filter_len = lens[i];
        }
        Self {
            encoders,
            decoders,
            bottleneck_norm: LayerNorm::new("bottleneck.norm", 3 * c),
            bottleneck_proj: Linear::new("bottleneck.proj", 3 * c, cfg.frontend.bottleneck_dim),
            filter_lengths: lens,
            stride: cfg.frontend.stride(cfg.signal.sample_rate),
            channels: c,
            bottleneck_dim: cfg.frontend.bottleneck_dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for e in &self.encoders {
            e.init(store, rng);
        }
        for d in &self.decoders {
            d.init(store, rng);
        }
        self.bottleneck_norm.init(store);
        self.bottleneck_proj.init(store, rng);
    }

    /// Frame count for an input of `n` samples (set by the short scale).
    pub fn frames(&self, n: usize) -> usize {
        (n - self.filter_lengths[0]) / self.stride + 1
    }

    /// Left padding applied to scale `i` so its frames align with scale 0.
    fn left_pad(&self, i: usize) -> usize {
        (self.filter_lengths[i] - self.filter_lengths[0]) / 2
    }

    pub fn check_length(&self, n: usize) -> Result<()> {
        if n < self.filter_lengths[2] {
            return Err(TseError::InputTooShort {
                got: n,
                need: self.filter_lengths[2],
            });
        }
        Ok(())
    }

    /// One scale of the encoder: strided filterbank convolution plus ReLU.
    /// Output `[T, channels]` with T shared across scales.
    pub fn encode_scale(&self, s: &mut Session, waveform: Var, scale: usize) -> Var {
        let n = s.tape.value(waveform).len();
        let t = self.frames(n);
        let li = self.filter_lengths[scale];
        // pad so (padded_len - L_i) covers exactly t frames at the shared stride
        let needed = (t - 1) * self.stride + li;
        let left = self.left_pad(scale);
        let input = if needed > n {
            let total = needed - n;
            let left = left.min(total);
            s.tape.pad_symmetric(waveform, left, total - left)
        } else {
            waveform
        };
        let w = self.encoders[scale].weight(s);
        let y = s.tape.conv1d_wave(input, w, self.stride);
        s.tape.relu(y)
    }

    /// Channel-wise concatenation of the three scales: `[T, 3*channels]`.
    pub fn encode_multiscale(&self, s: &mut Session, waveform: Var) -> Var {
        let e0 = self.encode_scale(s, waveform, 0);
        let e1 = self.encode_scale(s, waveform, 1);
        let e2 = self.encode_scale(s, waveform, 2);
        let e01 = s.tape.concat_cols(e0, e1);
        s.tape.concat_cols(e01, e2)
    }

    /// Per-frame layer norm followed by a pointwise projection to the
    /// bottleneck dimension.
    pub fn project_bottleneck(&self, s: &mut Session, features: Var) -> Var {
        let normed = self.bottleneck_norm.forward(s, features);
        self.bottleneck_proj.forward(s, normed)
    }

    /// Transposed convolution of masked features back to a waveform of
    /// exactly `output_length` samples.
    pub fn decode_scale(
        &self,
        s: &mut Session,
        masked: Var,
        scale: usize,
        output_length: usize,
    ) -> Var {
        let w = self.decoders[scale].weight(s);
        let full = s.tape.conv_transpose1d(masked, w, self.stride);
        let start = self.left_pad(scale);
        let have = s.tape.value(full).len();
        let full = if start + output_length > have {
            s.tape.pad_symmetric(full, 0, start + output_length - have)
        } else {
            full
        };
        s.tape.slice1d(full, start, output_length)
    }
}
