//! Deterministic corpus simulation: 2-mix / 3-mix / noisy-mix generation with
//! speaker-disjoint train/test splits and reproducible manifests.

use super::manifest::{Manifest, ManifestEntry, ManifestHeader};
use super::{make_3mix, make_noisymix, mix_at_snr, read_wav, write_wav, Waveform};
use crate::config::{MixtureType, RunConfig};
use crate::error::{Result, TseError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Clean-speech index: speaker id to utterance paths. File format is one
/// `speaker_id<TAB>wav_path` line per utterance.
#[derive(Debug, Clone, Default)]
pub struct CleanIndex {
    pub speakers: BTreeMap<String, Vec<PathBuf>>,
}

impl CleanIndex {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut speakers: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (spk, p) = line.split_once('\t').ok_or_else(|| {
                TseError::Corpus(format!(
                    "{}:{}: expected `speaker<TAB>path`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let wav = Path::new(p.trim());
            let wav = if wav.is_absolute() {
                wav.to_path_buf()
            } else {
                path.parent().unwrap_or(Path::new(".")).join(wav)
            };
            speakers.entry(spk.trim().to_string()).or_default().push(wav);
        }
        Ok(Self { speakers })
    }

    fn validate(&self) -> Result<()> {
        if self.speakers.len() < 2 {
            return Err(TseError::Corpus(format!(
                "need at least 2 speakers, got {}",
                self.speakers.len()
            )));
        }
        for (spk, utts) in &self.speakers {
            if utts.len() < 2 {
                return Err(TseError::Corpus(format!(
                    "speaker {spk} has {} utterance(s); need at least 2 \
                     (target plus reference)",
                    utts.len()
                )));
            }
        }
        Ok(())
    }
}

/// Noise index: one wav path per line.
#[derive(Debug, Clone, Default)]
pub struct NoiseIndex {
    pub paths: Vec<PathBuf>,
}

impl NoiseIndex {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let paths = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let p = Path::new(l.trim());
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base.join(p)
                }
            })
            .collect();
        Ok(Self { paths })
    }
}

pub struct SimOutput {
    /// (split name, manifest path, manifest) for train, dev, test.
    pub manifests: Vec<(String, PathBuf, Manifest)>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Deterministic per-entry RNG derived from (seed, split, type, index).
fn entry_rng(seed: u64, split: usize, mtype: usize, index: usize) -> ChaCha8Rng {
    let tag = (split as u64) << 48 | (mtype as u64) << 40 | index as u64;
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}

fn mixture_type_tag(t: MixtureType) -> usize {
    match t {
        MixtureType::TwoMix => 0,
        MixtureType::ThreeMix => 1,
        MixtureType::NoisyMix => 2,
    }
}

/// Simulate a corpus from a clean-speech index (and noise index for
/// noisy-mix), writing mixed audio and per-split manifests under `out_dir`.
/// Fully deterministic given `seed`.
pub fn simulate_corpus(
    clean: &CleanIndex,
    noise: Option<&NoiseIndex>,
    config: &RunConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<SimOutput> {
    clean.validate()?;
    let sc = &config.signal;
    if sc.mixture_types.contains(&MixtureType::NoisyMix)
        && noise.map(|n| n.paths.is_empty()).unwrap_or(true)
    {
        return Err(TseError::Corpus(
            "noisy-mix requested but no noise index given".into(),
        ));
    }

    // speaker-disjoint split: shuffle deterministically, carve off test set
    let mut speakers: Vec<String> = clean.speakers.keys().cloned().collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5EED));
    speakers.shuffle(&mut split_rng);
    let min_speakers = if sc.mixture_types.contains(&MixtureType::ThreeMix) {
        3
    } else {
        2
    };
    let n_test = if sc.test_entries == 0 {
        0
    } else {
        ((speakers.len() as f64 * sc.test_speaker_fraction).round() as usize)
            .max(min_speakers)
    };
    if speakers.len() < min_speakers + n_test.min(speakers.len()) && sc.test_entries > 0 {
        return Err(TseError::Corpus(format!(
            "not enough speakers ({}) for a disjoint test split; need {}",
            speakers.len(),
            min_speakers + n_test
        )));
    }
    let (test_speakers, train_speakers) = speakers.split_at(n_test);
    if train_speakers.len() < min_speakers {
        return Err(TseError::Corpus(format!(
            "train split has {} speakers; need {min_speakers}",
            train_speakers.len()
        )));
    }

    std::fs::create_dir_all(out_dir.join("audio"))?;
    let header = ManifestHeader {
        seed,
        config_hash: config.hash(),
    };

    let splits: [(&str, &[String], usize); 3] = [
        ("train", train_speakers, sc.train_entries),
        ("dev", train_speakers, sc.dev_entries),
        ("test", test_speakers, sc.test_entries),
    ];
    let mut manifests = Vec::new();
    for (split_idx, (split_name, split_speakers, n_entries)) in splits.iter().enumerate() {
        let mut entries = Vec::new();
        for &mtype in &sc.mixture_types {
            if mtype == MixtureType::ThreeMix && split_speakers.len() < 3 {
                return Err(TseError::Corpus(format!(
                    "3-mix requested but {split_name} split has only {} speakers",
                    split_speakers.len()
                )));
            }
            for i in 0..*n_entries {
                let mut rng = entry_rng(seed, split_idx, mixture_type_tag(mtype), i);
                let entry = simulate_entry(
                    clean,
                    noise,
                    config,
                    split_speakers,
                    mtype,
                    &format!("{split_name}_{mtype}_{i:04}"),
                    out_dir,
                    &mut rng,
                )?;
                entries.push(entry);
            }
        }
        let manifest = Manifest {
            header: header.clone(),
            entries,
        };
        let mpath = out_dir.join(format!("{split_name}.jsonl"));
        manifest.write(&mpath)?;
        manifests.push((split_name.to_string(), mpath, manifest));
    }
    Ok(SimOutput { manifests })
}

#[allow(clippy::too_many_arguments)]
fn simulate_entry(
    clean: &CleanIndex,
    noise: Option<&NoiseIndex>,
    config: &RunConfig,
    speakers: &[String],
    mtype: MixtureType,
    id: &str,
    out_dir: &Path,
    rng: &mut ChaCha8Rng,
) -> Result<ManifestEntry> {
    let rate = config.signal.sample_rate;
    let [lo, hi] = config.signal.snr_range_db;
    let snr_db = rng.gen_range(lo..=hi);

    let n_speakers = match mtype {
        MixtureType::ThreeMix => 3,
        _ => 2,
    };
    let mut chosen: Vec<&String> = Vec::new();
    let mut pool: Vec<&String> = speakers.iter().collect();
    for _ in 0..n_speakers {
        let k = rng.gen_range(0..pool.len());
        chosen.push(pool.remove(k));
    }
    let target_id = chosen[0].clone();
    let utts = &clean.speakers[&target_id];
    let t_idx = rng.gen_range(0..utts.len());
    let r_idx = {
        // reference must be a different utterance of the same speaker
        let mut r = rng.gen_range(0..utts.len() - 1);
        if r >= t_idx {
            r += 1;
        }
        r
    };
    let target = read_wav(&utts[t_idx], Some(rate))?;
    let reference = read_wav(&utts[r_idx], Some(rate))?;
    let pick_utt = |rng: &mut ChaCha8Rng, spk: &String| -> Result<Waveform> {
        let utts = &clean.speakers[spk];
        read_wav(&utts[rng.gen_range(0..utts.len())], Some(rate))
    };

    let example = match mtype {
        MixtureType::TwoMix => {
            let interferer = pick_utt(rng, chosen[1])?;
            let (mixture, scaled) = mix_at_snr(&target, &interferer, snr_db)?;
            super::MixtureExample {
                mixture,
                target: target.clone(),
                interferers: vec![scaled],
                noise: None,
                reference: reference.clone(),
                target_speaker_id: target_id.clone(),
                snr_db,
                mixture_type: mtype,
            }
        }
        MixtureType::ThreeMix => {
            let a = pick_utt(rng, chosen[1])?;
            let b = pick_utt(rng, chosen[2])?;
            make_3mix(
                &target, &target_id, &a, chosen[1], &b, chosen[2], &reference, snr_db,
            )?
        }
        MixtureType::NoisyMix => {
            let interferer = pick_utt(rng, chosen[1])?;
            let noise_idx = noise.unwrap();
            let npath = &noise_idx.paths[rng.gen_range(0..noise_idx.paths.len())];
            let nwave = read_wav(npath, Some(rate))?;
            let [nlo, nhi] = config.signal.noise_snr_range_db;
            let noise_snr_db = rng.gen_range(nlo..=nhi);
            make_noisymix(
                &target,
                &target_id,
                &interferer,
                &reference,
                &nwave,
                snr_db,
                noise_snr_db,
            )?
        }
    };

    let mix_rel = format!("audio/{id}_mix.wav");
    let target_rel = format!("audio/{id}_target.wav");
    let ref_rel = format!("audio/{id}_ref.wav");
    write_wav(&out_dir.join(&mix_rel), &example.mixture)?;
    write_wav(&out_dir.join(&target_rel), &example.target)?;
    write_wav(&out_dir.join(&ref_rel), &example.reference)?;
    Ok(ManifestEntry {
        id: id.to_string(),
        mixture_path: mix_rel,
        target_path: target_rel,
        reference_path: ref_rel,
        speaker_id: target_id,
        snr_db,
        mixture_type: mtype,
    })
}
