//! Audio I/O, power-controlled mixing, segmentation, and corpus simulation.

mod corpus;
mod manifest;
mod wav;

pub use corpus::{simulate_corpus, CleanIndex, NoiseIndex, SimOutput};
pub use manifest::{check_speaker_disjoint, Manifest, ManifestEntry, ManifestHeader};
pub use wav::{read_wav, write_wav};

use crate::config::MixtureType;
use crate::error::{Result, TseError};

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude over the full utterance.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Zero-pad at the tail to `len` samples (no-op if already longer).
    pub fn padded_to(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        if samples.len() < len {
            samples.resize(len, 0.0);
        }
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// One training/evaluation instance.
#[derive(Debug, Clone)]
pub struct MixtureExample {
    pub mixture: Waveform,
    pub target: Waveform,
    pub interferers: Vec<Waveform>,
    pub noise: Option<Waveform>,
    pub reference: Waveform,
    pub target_speaker_id: String,
    pub snr_db: f64,
    pub mixture_type: MixtureType,
}

fn check_rates(a: &Waveform, b: &Waveform) -> Result<()> {
    if a.sample_rate != b.sample_rate {
        return Err(TseError::SampleRateMismatch {
            got: b.sample_rate,
            expected: a.sample_rate,
        });
    }
    Ok(())
}

/// Sum of two waveforms, tail-padded to the longer length.
pub fn add_padded(a: &Waveform, b: &Waveform) -> Waveform {
    let len = a.len().max(b.len());
    let mut out = a.padded_to(len);
    for (o, s) in out.samples.iter_mut().zip(b.samples.iter()) {
        *o += s;
    }
    out
}

/// Scale `interference` so the target-to-interference ratio is exactly
/// `snr_db`, then sum. The target is left unscaled. Returns the mixture and
/// the scaled interference.
pub fn mix_at_snr(
    target: &Waveform,
    interference: &Waveform,
    snr_db: f64,
) -> Result<(Waveform, Waveform)> {
    check_rates(target, interference)?;
    let pt = target.power();
    let pi = interference.power();
    if pt <= 0.0 {
        return Err(TseError::ZeroPower("target"));
    }
    if pi <= 0.0 {
        return Err(TseError::ZeroPower("interference"));
    }
    // 10*log10(pt / (g^2 * pi)) = snr_db  =>  g = sqrt(pt / pi * 10^(-snr/10))
    let gain = (pt / pi * 10f64.powf(-snr_db / 10.0)).sqrt();
    let scaled = interference.scaled(gain);
    let mixture = add_padded(target, &scaled);
    Ok((mixture, scaled))
}

/// Three-speaker mixture: the interferers are rescaled to equal power and
/// their sum placed at `snr_db` below the target.
#[allow(clippy::too_many_arguments)]
pub fn make_3mix(
    target: &Waveform,
    target_id: &str,
    interferer_a: &Waveform,
    id_a: &str,
    interferer_b: &Waveform,
    id_b: &str,
    reference: &Waveform,
    snr_db: f64,
) -> Result<MixtureExample> {
    if target_id == id_a || target_id == id_b || id_a == id_b {
        return Err(TseError::DuplicateSpeaker(format!(
            "{target_id}/{id_a}/{id_b}"
        )));
    }
    check_rates(target, interferer_a)?;
    check_rates(target, interferer_b)?;
    let pa = interferer_a.power();
    let pb = interferer_b.power();
    if pa <= 0.0 || pb <= 0.0 {
        return Err(TseError::ZeroPower("interferer"));
    }
    let b_eq = interferer_b.scaled((pa / pb).sqrt());
    let sum = add_padded(interferer_a, &b_eq);
    let (mixture, scaled_sum) = mix_at_snr(target, &sum, snr_db)?;
    // the common gain applied to the sum keeps both interferers equal power
    let common = (scaled_sum.power() / sum.power()).sqrt();
    Ok(MixtureExample {
        mixture,
        target: target.clone(),
        interferers: vec![interferer_a.scaled(common), b_eq.scaled(common)],
        noise: None,
        reference: reference.clone(),
        target_speaker_id: target_id.to_string(),
        snr_db,
        mixture_type: MixtureType::ThreeMix,
    })
}

/// Noisy two-speaker mixture: build the 2-mix, then add noise scaled so the
/// louder speaker sits `noise_snr_db` above the noise. Noise shorter than the
/// speech is looped; longer noise is cropped.
pub fn make_noisymix(
    target: &Waveform,
    target_id: &str,
    interferer: &Waveform,
    reference: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    noise_snr_db: f64,
) -> Result<MixtureExample> {
    check_rates(target, noise)?;
    if noise.power() <= 0.0 {
        return Err(TseError::ZeroPower("noise"));
    }
    let (mix2, scaled_i) = mix_at_snr(target, interferer, snr_db)?;
    let len = mix2.len();
    let mut looped = Vec::with_capacity(len);
    while looped.len() < len {
        let take = (len - looped.len()).min(noise.len());
        looped.extend_from_slice(&noise.samples[..take]);
    }
    let noise_fit = Waveform::new(looped, noise.sample_rate);
    let p_louder = target.power().max(scaled_i.power());
    let pn = noise_fit.power();
    if pn <= 0.0 {
        return Err(TseError::ZeroPower("noise"));
    }
    let gain = (p_louder / pn * 10f64.powf(-noise_snr_db / 10.0)).sqrt();
    let scaled_noise = noise_fit.scaled(gain);
    let mixture = add_padded(&mix2, &scaled_noise);
    Ok(MixtureExample {
        mixture,
        target: target.clone(),
        interferers: vec![scaled_i],
        noise: Some(scaled_noise),
        reference: reference.clone(),
        target_speaker_id: target_id.to_string(),
        snr_db,
        mixture_type: MixtureType::NoisyMix,
    })
}

/// Segmentation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentMode {
    /// Fixed-length chunks; a short tail is zero-padded (`pad_tail`) or dropped.
    Train { pad_tail: bool },
    /// Whole utterance untouched.
    Eval,
}

pub fn segment(waveform: &Waveform, length_s: f64, mode: SegmentMode) -> Vec<Waveform> {
    assert!(length_s > 0.0, "segment length must be positive");
    match mode {
        SegmentMode::Eval => vec![waveform.clone()],
        SegmentMode::Train { pad_tail } => {
            let chunk = (length_s * waveform.sample_rate as f64).round() as usize;
            let mut out = Vec::new();
            let mut start = 0;
            while start < waveform.len() {
                let end = (start + chunk).min(waveform.len());
                if end - start == chunk {
                    out.push(Waveform::new(
                        waveform.samples[start..end].to_vec(),
                        waveform.sample_rate,
                    ));
                } else if pad_tail && (out.is_empty() || end - start > 0) {
                    let mut tail = waveform.samples[start..end].to_vec();
                    tail.resize(chunk, 0.0);
                    out.push(Waveform::new(tail, waveform.sample_rate));
                }
                start += chunk;
            }
            if out.is_empty() && pad_tail {
                out.push(Waveform::zeros(chunk, waveform.sample_rate));
            }
            out
        }
    }
}
