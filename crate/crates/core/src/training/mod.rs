//! Training loop, early stopping, checkpointing, and evaluation.

pub mod checkpoint;
pub mod dataset;

use crate::config::RunConfig;
use crate::error::{Result, TseError};
use crate::model::Model;
use crate::nn::{Adam, BatchNorm1d, GradMap, ParamStore, Session};
use crate::objectives::{multitask_loss, si_sdr, Report, ReportRecord};
use checkpoint::CheckpointHeader;
use dataset::{load_examples, make_segments, speaker_labels, Example, Segment};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub struct TrainOutcome {
    pub epochs_run: usize,
    pub steps: usize,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    pub train_losses: Vec<f64>,
    pub dev_losses: Vec<f64>,
    pub final_lr: f64,
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// One optimizer step over a batch of segments; returns the mean loss.
fn run_batch(
    model: &Model,
    store: &mut ParamStore,
    adam: &mut Adam,
    cfg: &RunConfig,
    examples: &[Example],
    batch: &[&Segment],
    epoch: usize,
    step: usize,
) -> Result<f64> {
    let mut grads = GradMap::new();
    let mut bn_updates = Vec::new();
    let mut total_loss = 0.0;
    for (i, seg) in batch.iter().enumerate() {
        let ex = &examples[seg.example];
        let label = ex
            .label
            .ok_or_else(|| TseError::Training(format!("{}: speaker not in label table", ex.id)))?;
        let dropout_rng =
            ChaCha8Rng::seed_from_u64(mix64(cfg.training.seed ^ mix64(
                (epoch as u64) << 40 | (step as u64) << 8 | i as u64,
            )));
        let mut s = Session::train(store, dropout_rng);
        let out = model.forward(&mut s, &seg.mixture, &ex.reference.samples)?;
        let target = s
            .tape
            .leaf(ndarray::Array1::from(seg.target.clone()).into_dyn());
        let loss = multitask_loss(
            &mut s.tape,
            out.estimates,
            target,
            out.logits,
            label,
            &cfg.objectives,
        );
        let value = s.tape.scalar(loss);
        if !value.is_finite() {
            return Err(TseError::NonFiniteLoss {
                epoch,
                step,
                detail: format!("example {} produced loss {value}", ex.id),
            });
        }
        total_loss += value;
        s.grads_into(loss, &mut grads);
        bn_updates.append(&mut s.bn_updates);
    }
    let scale = 1.0 / batch.len() as f64;
    for g in grads.values_mut() {
        g.mapv_inplace(|x| x * scale);
    }
    Adam::clip_global_norm(&mut grads, cfg.training.grad_clip_norm);
    adam.apply(store, &grads);
    for (name, mean, var) in &bn_updates {
        BatchNorm1d::apply_update(store, name, mean, var, cfg.embedder.bn_momentum);
    }
    Ok(total_loss * scale)
}

/// Mean multi-task loss over whole utterances in eval mode.
fn dataset_loss(model: &Model, store: &ParamStore, cfg: &RunConfig, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ex in examples {
        let label = ex
            .label
            .ok_or_else(|| TseError::Training(format!("{}: speaker not in label table", ex.id)))?;
        let mut s = Session::eval(store);
        let out = model.forward(&mut s, &ex.mixture.samples, &ex.reference.samples)?;
        let target = s
            .tape
            .leaf(ndarray::Array1::from(ex.target.samples.clone()).into_dyn());
        let loss = multitask_loss(
            &mut s.tape,
            out.estimates,
            target,
            out.logits,
            label,
            &cfg.objectives,
        );
        total += s.tape.scalar(loss);
        n += 1;
    }
    if n == 0 {
        return Err(TseError::Training("empty dataset".into()));
    }
    Ok(total / n as f64)
}

/// Fraction of examples whose reference utterance is classified as the right
/// speaker.
pub fn speaker_accuracy(model: &Model, store: &ParamStore, examples: &[Example]) -> Result<f64> {
    let mut correct = 0usize;
    for ex in examples {
        let label = ex
            .label
            .ok_or_else(|| TseError::Training(format!("{}: speaker not in label table", ex.id)))?;
        let mut s = Session::eval(store);
        let r = s
            .tape
            .leaf(ndarray::Array1::from(ex.reference.samples.clone()).into_dyn());
        let emb = model.embedder.embed(&mut s, &model.frontend, r);
        let logits = model.embedder.classify(&mut s, emb);
        let v = s.tape.value(logits);
        let pred = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

/// Full training run: reads the manifests, trains with early stopping, and
/// writes the best-dev checkpoint to `checkpoint_path`.
pub fn train(
    cfg: &RunConfig,
    train_manifest: &Path,
    dev_manifest: &Path,
    checkpoint_path: &Path,
) -> Result<TrainOutcome> {
    let tm = crate::signal::Manifest::read(train_manifest)?;
    let dm = crate::signal::Manifest::read(dev_manifest)?;
    let labels = speaker_labels(&tm);
    if labels.is_empty() {
        return Err(TseError::Training("train manifest has no speakers".into()));
    }
    let train_examples = load_examples(train_manifest, &tm, &labels, cfg.signal.sample_rate)?;
    let dev_examples = load_examples(dev_manifest, &dm, &labels, cfg.signal.sample_rate)?;
    let segments = make_segments(&train_examples, cfg);
    if segments.is_empty() {
        return Err(TseError::Training("no training segments".into()));
    }

    let model = Model::new(cfg, labels.len());
    let mut store = model.init_params(cfg.training.seed);
    let mut adam = Adam::new(cfg.training.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix64(cfg.training.seed ^ 0x5eed));

    let mut outcome = TrainOutcome {
        epochs_run: 0,
        steps: 0,
        best_epoch: 0,
        best_dev_loss: f64::INFINITY,
        train_losses: Vec::new(),
        dev_losses: Vec::new(),
        final_lr: cfg.training.learning_rate,
    };
    let mut stagnant = 0usize;
    let mut stagnant_lr = 0usize;
    let mut lr = cfg.training.learning_rate;
    let max_steps = cfg.training.max_steps;

    'epochs: for epoch in 0..cfg.training.epochs {
        let mut order: Vec<usize> = (0..segments.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.training.batch_size.max(1)) {
            let batch: Vec<&Segment> = chunk.iter().map(|&i| &segments[i]).collect();
            let loss = run_batch(
                &model,
                &mut store,
                &mut adam,
                cfg,
                &train_examples,
                &batch,
                epoch,
                outcome.steps,
            )?;
            epoch_loss += loss;
            batches += 1;
            outcome.steps += 1;
            if max_steps > 0 && outcome.steps >= max_steps {
                log::info!("stopping at step cap {max_steps}");
                outcome.train_losses.push(epoch_loss / batches as f64);
                finish_epoch(
                    &model, &store, cfg, &dev_examples, &labels, checkpoint_path, epoch,
                    &mut outcome, &mut stagnant, &mut stagnant_lr,
                )?;
                outcome.epochs_run = epoch + 1;
                break 'epochs;
            }
        }
        outcome.train_losses.push(epoch_loss / batches as f64);
        finish_epoch(
            &model, &store, cfg, &dev_examples, &labels, checkpoint_path, epoch, &mut outcome,
            &mut stagnant, &mut stagnant_lr,
        )?;
        outcome.epochs_run = epoch + 1;
        log::info!(
            "epoch {epoch}: train {:.4}, dev {:.4}, lr {lr:.2e}",
            outcome.train_losses[epoch],
            outcome.dev_losses[epoch]
        );
        if stagnant >= cfg.training.early_stop_patience {
            log::info!("early stop after {} stagnant epochs", stagnant);
            break;
        }
        if stagnant_lr >= cfg.training.lr_halving_patience {
            lr *= 0.5;
            adam.learning_rate = lr;
            outcome.final_lr = lr;
            stagnant_lr = 0;
            log::info!("halving learning rate to {lr:.2e}");
        }
    }
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn finish_epoch(
    model: &Model,
    store: &ParamStore,
    cfg: &RunConfig,
    dev_examples: &[Example],
    labels: &[String],
    checkpoint_path: &Path,
    epoch: usize,
    outcome: &mut TrainOutcome,
    stagnant: &mut usize,
    stagnant_lr: &mut usize,
) -> Result<()> {
    let dev = dataset_loss(model, store, cfg, dev_examples)?;
    if !dev.is_finite() {
        return Err(TseError::NonFiniteLoss {
            epoch,
            step: outcome.steps,
            detail: format!("dev loss {dev}"),
        });
    }
    outcome.dev_losses.push(dev);
    if dev < outcome.best_dev_loss {
        outcome.best_dev_loss = dev;
        outcome.best_epoch = epoch;
        *stagnant = 0;
        *stagnant_lr = 0;
        let header = CheckpointHeader {
            config: cfg.clone(),
            config_hash: cfg.hash(),
            epoch,
            dev_loss: dev,
            speakers: labels.to_vec(),
        };
        checkpoint::save(checkpoint_path, &header, store)?;
    } else {
        *stagnant += 1;
        *stagnant_lr += 1;
    }
    Ok(())
}

/// Per-utterance SI-SDR evaluation of a trained checkpoint against a
/// manifest, with per-mixture-type summaries.
pub fn evaluate(
    model: &Model,
    store: &ParamStore,
    cfg: &RunConfig,
    manifest_path: &Path,
) -> Result<Report> {
    let manifest = crate::signal::Manifest::read(manifest_path)?;
    // labels are irrelevant for extraction quality; test speakers are unseen
    let examples = load_examples(manifest_path, &manifest, &[], cfg.signal.sample_rate)?;
    if examples.is_empty() {
        return Err(TseError::Training("empty evaluation manifest".into()));
    }
    let mut report = Report::default();
    report.records.push(ReportRecord::Header {
        config_hash: cfg.hash(),
    });
    let mut by_type: indexmap::IndexMap<String, Vec<(f64, f64)>> = indexmap::IndexMap::new();
    for ex in &examples {
        let est = model.extract(store, &ex.mixture.samples, &ex.reference.samples)?;
        let sdr = si_sdr(&est, &ex.target.samples, &cfg.objectives)?;
        let input_sdr = si_sdr(&ex.mixture.samples, &ex.target.samples, &cfg.objectives)?;
        let mt = ex.mixture_type.to_string();
        report.records.push(ReportRecord::Utterance {
            id: ex.id.clone(),
            mixture_type: mt.clone(),
            si_sdr_db: sdr,
            input_si_sdr_db: input_sdr,
            si_sdr_improvement_db: sdr - input_sdr,
        });
        by_type.entry(mt).or_default().push((sdr, input_sdr));
        by_type
            .entry("all".to_string())
            .or_default()
            .push((sdr, input_sdr));
    }
    for (mt, vals) in &by_type {
        let n = vals.len() as f64;
        let mean_sdr = vals.iter().map(|v| v.0).sum::<f64>() / n;
        let mean_in = vals.iter().map(|v| v.1).sum::<f64>() / n;
        report.records.push(ReportRecord::Summary {
            mixture_type: mt.clone(),
            count: vals.len(),
            mean_si_sdr_db: format!("{mean_sdr:.2}"),
            mean_input_si_sdr_db: format!("{mean_in:.2}"),
            mean_si_sdr_improvement_db: format!("{:.2}", mean_sdr - mean_in),
        });
    }
    Ok(report)
}
