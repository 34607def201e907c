//! Loading manifest entries into in-memory training/evaluation examples.

use crate::config::{MixtureType, RunConfig};
use crate::error::{Result, TseError};
use crate::signal::{read_wav, segment, Manifest, SegmentMode, Waveform};
use std::collections::BTreeMap;
use std::path::Path;

/// One utterance loaded from disk.
pub struct Example {
    pub id: String,
    pub mixture: Waveform,
    pub target: Waveform,
    pub reference: Waveform,
    pub speaker_id: String,
    /// Index into the label table; `None` for speakers outside it (test split).
    pub label: Option<usize>,
    pub mixture_type: MixtureType,
}

/// One fixed-length training segment (indices into the examples vector plus
/// aligned mixture/target chunks; the whole reference utterance is reused).
pub struct Segment {
    pub example: usize,
    pub mixture: Vec<f64>,
    pub target: Vec<f64>,
}

/// Sorted speaker table of a manifest; index = classification label.
pub fn speaker_labels(manifest: &Manifest) -> Vec<String> {
    manifest.speaker_ids().into_iter().collect()
}

pub fn load_examples(
    manifest_path: &Path,
    manifest: &Manifest,
    labels: &[String],
    sample_rate: u32,
) -> Result<Vec<Example>> {
    let base = manifest_path
        .parent()
        .ok_or_else(|| TseError::Manifest("manifest path has no parent".into()))?;
    let table: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut out = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let mixture = read_wav(&Manifest::resolve(base, &e.mixture_path), Some(sample_rate))?;
        let target = read_wav(&Manifest::resolve(base, &e.target_path), Some(sample_rate))?;
        let reference = read_wav(&Manifest::resolve(base, &e.reference_path), Some(sample_rate))?;
        if mixture.len() != target.len() {
            return Err(TseError::Shape(format!(
                "{}: mixture/target length mismatch",
                e.id
            )));
        }
        out.push(Example {
            id: e.id.clone(),
            mixture,
            target,
            reference,
            speaker_id: e.speaker_id.clone(),
            label: table.get(e.speaker_id.as_str()).copied(),
            mixture_type: e.mixture_type,
        });
    }
    Ok(out)
}

/// Cut every example into aligned fixed-length mixture/target segments.
pub fn make_segments(examples: &[Example], cfg: &RunConfig) -> Vec<Segment> {
    let mode = SegmentMode::Train {
        pad_tail: cfg.signal.pad_tail,
    };
    let mut out = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let mix = segment(&ex.mixture, cfg.training.segment_s, mode);
        let tgt = segment(&ex.target, cfg.training.segment_s, mode);
        for (m, t) in mix.into_iter().zip(tgt) {
            // an all-silent target chunk makes the scale-invariant loss
            // degenerate; drop it
            if t.power() <= 0.0 {
                continue;
            }
            out.push(Segment {
                example: i,
                mixture: m.samples,
                target: t.samples,
            });
        }
    }
    out
}
