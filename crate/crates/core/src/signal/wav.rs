//! Mono WAV read/write. Writes 32-bit float; reads float or 16-bit PCM.

use super::Waveform;
use crate::error::{Result, TseError};
use std::path::Path;

/// Read a mono WAV file. If `expected_rate` is given, a differing file rate
/// is an error.
pub fn read_wav(path: &Path, expected_rate: Option<u32>) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| TseError::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(TseError::Wav(format!(
            "{}: expected mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    if let Some(rate) = expected_rate {
        if spec.sample_rate != rate {
            return Err(TseError::SampleRateMismatch {
                got: spec.sample_rate,
                expected: rate,
            });
        }
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| TseError::Wav(e.to_string()))?,
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| TseError::Wav(e.to_string()))?,
        (fmt, bits) => {
            return Err(TseError::Wav(format!(
                "{}: unsupported format {fmt:?}/{bits}-bit",
                path.display()
            )))
        }
    };
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Write a waveform as a 32-bit float mono WAV file.
pub fn write_wav(path: &Path, waveform: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: waveform.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| TseError::Wav(format!("{}: {e}", path.display())))?;
    for &s in &waveform.samples {
        writer
            .write_sample(s as f32)
            .map_err(|e| TseError::Wav(e.to_string()))?;
    }
    writer.finalize().map_err(|e| TseError::Wav(e.to_string()))?;
    Ok(())
}
