//! Acceptance suite. Each test covers one numbered criterion and prints a
//! `[PASS] n ...` line on success (visible with `--nocapture`).

use ndarray::{Array1, Array2, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;
use tse_core::autodiff::check::{finite_diff, max_rel_err};
use tse_core::autodiff::{Tape, Var};
use tse_core::config::{Architecture, ObjectivesConfig};
use tse_core::model::Model;
use tse_core::nn::{GradMap, ParamStore, Session};
use tse_core::objectives::{
    multiscale_si_snr_loss, multitask_loss, si_sdr, si_snr, Report, ReportRecord,
};
use tse_core::separator::{ConformerBlock, ExternalFfn, TcnBlock};
use tse_core::signal::{
    make_3mix, mix_at_snr, simulate_corpus, write_wav, CleanIndex, Manifest, Waveform,
};
use tse_core::training::dataset::load_examples;
use tse_core::training::{checkpoint, speaker_accuracy, train};
use tse_core::RunConfig;

// ---- helpers ----

fn rand_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Independent oracle: the projection formula written out literally.
fn oracle_si_snr(est: &[f64], reference: &[f64]) -> f64 {
    let n = reference.len() as f64;
    let em = est.iter().sum::<f64>() / n;
    let rm = reference.iter().sum::<f64>() / n;
    let e: Vec<f64> = est.iter().map(|x| x - em).collect();
    let r: Vec<f64> = reference.iter().map(|x| x - rm).collect();
    let dot: f64 = e.iter().zip(&r).map(|(a, b)| a * b).sum();
    let rn2: f64 = r.iter().map(|x| x * x).sum();
    let s_t: Vec<f64> = r.iter().map(|x| dot / rn2 * x).collect();
    let err: Vec<f64> = e.iter().zip(&s_t).map(|(a, b)| a - b).collect();
    let num: f64 = s_t.iter().map(|x| x * x).sum();
    let den: f64 = err.iter().map(|x| x * x).sum();
    (10.0 * (num / den).log10()).clamp(-60.0, 60.0)
}

/// Deterministic synthetic "speech": speaker-specific harmonic stack with
/// slow amplitude modulation plus a little noise.
fn synth_utterance(speaker: usize, utt: usize, sample_rate: u32, seconds: f64) -> Vec<f64> {
    let n = (seconds * sample_rate as f64) as usize;
    let f0 = 100.0 + 55.0 * speaker as f64;
    let mut rng = ChaCha8Rng::seed_from_u64((speaker as u64) << 16 | utt as u64);
    (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            let mut v = 0.0;
            for h in 1..5 {
                v += (2.0 * std::f64::consts::PI * f0 * h as f64 * t + speaker as f64).sin()
                    / h as f64;
            }
            let am = 0.6 + 0.4 * (2.0 * std::f64::consts::PI * (2.0 + utt as f64) * t).sin();
            0.2 * v * am + 0.01 * rng.gen_range(-1.0..1.0)
        })
        .collect()
}

/// Write a clean-speech corpus and its index; returns the index path.
fn write_clean_corpus(
    dir: &Path,
    speakers: usize,
    utts: usize,
    sample_rate: u32,
    seconds: f64,
) -> PathBuf {
    let audio = dir.join("clean");
    std::fs::create_dir_all(&audio).unwrap();
    let mut index = String::new();
    for s in 0..speakers {
        for u in 0..utts {
            let rel = format!("clean/s{s}_u{u}.wav");
            let wav = Waveform::new(synth_utterance(s, u, sample_rate, seconds), sample_rate);
            write_wav(&dir.join(&rel), &wav).unwrap();
            index.push_str(&format!("speaker{s}\t{rel}\n"));
        }
    }
    let path = dir.join("clean.tsv");
    std::fs::write(&path, index).unwrap();
    path
}

/// Toy training configuration shared by the functional runs.
fn overfit_config(max_steps: usize) -> RunConfig {
    let mut cfg = RunConfig::toy(Architecture::TcnConformer, 1);
    cfg.signal.train_entries = 4;
    cfg.signal.dev_entries = 2;
    cfg.signal.test_entries = 0;
    cfg.training.epochs = 100_000;
    cfg.training.early_stop_patience = 99_999;
    cfg.training.lr_halving_patience = 99_998;
    cfg.training.max_steps = max_steps;
    cfg.training.learning_rate = 1e-3;
    cfg.validate().unwrap();
    cfg
}

// ---- criteria ----

#[test]
fn criterion_1_metric_oracle_equivalence() {
    let start = Instant::now();
    let cfg = ObjectivesConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let n = rng.gen_range(64..2048);
        let e = rand_signal(&mut rng, n);
        let r = rand_signal(&mut rng, n);
        let a = si_snr(&e, &r, &cfg).unwrap();
        let b = si_sdr(&e, &r, &cfg).unwrap();
        let o = oracle_si_snr(&e, &r);
        assert!((a - o).abs() <= 1e-9, "pair {i}: si_snr {a} vs oracle {o}");
        assert!((b - o).abs() <= 1e-9, "pair {i}: si_sdr {b} vs oracle {o}");
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() <= 5.0, "took {dt:?}, budget 5 s");
    println!("[PASS] 1 metric oracle equivalence (1000 pairs, {dt:?})");
}

#[test]
fn criterion_2_scale_invariance() {
    let cfg = ObjectivesConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let n = rng.gen_range(64..1024);
        let e = rand_signal(&mut rng, n);
        let r = rand_signal(&mut rng, n);
        let base = si_snr(&e, &r, &cfg).unwrap();
        for alpha in [-2.0, 0.1, 3.7] {
            let s: Vec<f64> = e.iter().map(|x| alpha * x).collect();
            let v = si_snr(&s, &r, &cfg).unwrap();
            assert!(
                (v - base).abs() < 1e-6,
                "pair {i} alpha {alpha}: {v} vs {base}"
            );
        }
    }
    println!("[PASS] 2 scale invariance (100 pairs x alpha in {{-2, 0.1, 3.7}})");
}

#[test]
fn criterion_3_mixing_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..100 {
        let n = rng.gen_range(500..4000);
        let t = Waveform::new(rand_signal(&mut rng, n), 16000);
        let w = Waveform::new(rand_signal(&mut rng, n), 16000);
        let snr = rng.gen_range(-20.0..20.0);
        let (_, scaled) = mix_at_snr(&t, &w, snr).unwrap();
        let measured = 10.0 * (t.power() / scaled.power()).log10();
        assert!(
            (measured - snr).abs() < 1e-6,
            "triple {i}: requested {snr} measured {measured}"
        );

        let a = Waveform::new(rand_signal(&mut rng, n), 16000);
        let b = Waveform::new(rand_signal(&mut rng, n), 16000);
        let ex = make_3mix(&t, "t", &a, "a", &b, "b", &t, snr).unwrap();
        let (pa, pb) = (ex.interferers[0].power(), ex.interferers[1].power());
        let rel = (pa - pb).abs() / pa.max(pb);
        assert!(rel < 1e-10, "triple {i}: interferer power imbalance {rel}");
    }
    println!("[PASS] 3 mixing fidelity (100 random SNR triples)");
}

/// D=8 toy configuration used by the gradient checks: model dim 8
/// (bottleneck 4 + embedding 4), 2 heads, K=1 stack.
fn grad_check_config(arch: Architecture) -> RunConfig {
    let mut cfg = RunConfig::toy(arch, 1);
    cfg.frontend.filter_lengths_ms = [0.5, 1.0, 1.5]; // 4/8/12 samples at 8 kHz
    cfg.frontend.channels_per_scale = 4;
    cfg.frontend.bottleneck_dim = 4;
    cfg.embedder.embedding_dim = 4;
    cfg.separator.conv_kernel = 3;
    cfg.separator.rel_pos_max_distance = 4;
    cfg.validate().unwrap();
    cfg
}

fn check_block_grads<F>(store: &ParamStore, forward: F) -> f64
where
    F: Fn(&mut Session, Var) -> Var,
{
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let xv = Array2::from_shape_fn((6, 8), |_| rng.gen_range(-1.0..1.0)).into_dyn();
    let names: Vec<String> = store.params.keys().cloned().collect();
    let probe = {
        let mut s = Session::eval(store);
        let x = s.tape.leaf(xv.clone());
        let y = forward(&mut s, x);
        s.tape.value(y).mapv(|_| rng.gen_range(-1.0..1.0))
    };
    let run = |params: &[ArrayD<f64>]| -> f64 {
        let mut st = ParamStore::new();
        for (name, val) in names.iter().zip(params) {
            st.insert(name.clone(), val.clone());
        }
        let mut s = Session::eval(&st);
        let x = s.tape.leaf(xv.clone());
        let y = forward(&mut s, x);
        let m = s.tape.leaf(probe.clone());
        let p = s.tape.mul(y, m);
        let total = s.tape.sum(p);
        s.tape.scalar(total)
    };
    let inputs: Vec<ArrayD<f64>> = names.iter().map(|n| store.get(n).clone()).collect();
    let mut s = Session::eval(store);
    let x = s.tape.leaf(xv.clone());
    let y = forward(&mut s, x);
    let m = s.tape.leaf(probe.clone());
    let p = s.tape.mul(y, m);
    let total = s.tape.sum(p);
    let mut gm = GradMap::new();
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
    max_rel_err(&analytic, &numeric)
}

fn check_full_model_grads(arch: Architecture) -> f64 {
    let cfg = grad_check_config(arch);
    let model = Model::new(&cfg, 2);
    let store = model.init_params(41);
    // 14 samples -> T = 6 frames at stride 2 with the short (4-sample) filter
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mixture = rand_signal(&mut rng, 14);
    let reference = rand_signal(&mut rng, 30);
    let target = rand_signal(&mut rng, 14);
    let names: Vec<String> = store.params.keys().cloned().collect();
    let buffers = store.buffers.clone();
    let objectives = cfg.objectives.clone();
    let forward_loss = |st: &ParamStore, want_grads: Option<&mut GradMap>| -> f64 {
        let mut s = Session::train(st, ChaCha8Rng::seed_from_u64(0));
        let out = model.forward(&mut s, &mixture, &reference).unwrap();
        let tgt = s.tape.leaf(Array1::from(target.clone()).into_dyn());
        let loss = multitask_loss(&mut s.tape, out.estimates, tgt, out.logits, 1, &objectives);
        let v = s.tape.scalar(loss);
        if let Some(gm) = want_grads {
            s.grads_into(loss, gm);
        }
        v
    };
    let inputs: Vec<ArrayD<f64>> = names.iter().map(|n| store.get(n).clone()).collect();
    let mut gm = GradMap::new();
    forward_loss(&store, Some(&mut gm));
    let analytic: Vec<ArrayD<f64>> = names
        .iter()
        .map(|n| {
            gm.get(n)
                .cloned()
                .unwrap_or_else(|| ArrayD::zeros(store.get(n).raw_dim()))
        })
        .collect();
    let numeric = finite_diff(
        &inputs,
        |params| {
            let mut st = ParamStore::new();
            for (name, val) in names.iter().zip(params) {
                st.insert(name.clone(), val.clone());
            }
            st.buffers = buffers.clone();
            forward_loss(&st, None)
        },
        // 1e-4 rather than 1e-5: the embedding path's parameter gradients are
        // ~1e-7 here, and the larger step keeps the difference quotient's
        // roundoff below them
        1e-4,
    );
    max_rel_err(&analytic, &numeric)
}

#[test]
fn criterion_4_gradient_correctness() {
    let start = Instant::now();
    let cfg = grad_check_config(Architecture::ConformerFfn);

    let tcn = TcnBlock::new("blk", 8, 3, 1);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    tcn.init(&mut store, &mut rng);
    let e = check_block_grads(&store, |s, x| tcn.forward(s, x));
    assert!(e < 1e-4, "tcn_block rel err {e}");

    let conf = ConformerBlock::new("blk", 8, &cfg.separator);
    let mut store = ParamStore::new();
    conf.init(&mut store, &mut rng);
    let e = check_block_grads(&store, |s, x| conf.forward(s, x));
    assert!(e < 1e-4, "conformer_block rel err {e}");

    let ffn = ExternalFfn::new("ffn", 8, 0.0);
    let mut store = ParamStore::new();
    ffn.init(&mut store, &mut rng);
    let e = check_block_grads(&store, |s, x| ffn.forward(s, x));
    assert!(e < 1e-4, "external_ffn rel err {e}");

    let e = check_full_model_grads(Architecture::ConformerFfn);
    assert!(e < 1e-4, "full conformer_ffn rel err {e}");
    let e = check_full_model_grads(Architecture::TcnConformer);
    assert!(e < 1e-4, "full tcn_conformer rel err {e}");

    // multiscale loss with respect to all three estimates
    let ocfg = ObjectivesConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let reference = rand_signal(&mut rng, 64);
    let ests: Vec<ArrayD<f64>> = (0..3)
        .map(|_| Array1::from(rand_signal(&mut rng, 64)).into_dyn())
        .collect();
    let build = |inputs: &[ArrayD<f64>]| -> (Tape, Var, Vec<Var>) {
        let mut tape = Tape::new();
        let r = tape.leaf(Array1::from(reference.clone()).into_dyn());
        let vs: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
        let loss = multiscale_si_snr_loss(&mut tape, [vs[0], vs[1], vs[2]], r, &ocfg);
        (tape, loss, vs)
    };
    let (tape, loss, vs) = build(&ests);
    let grads = tape.backward(loss);
    let analytic: Vec<ArrayD<f64>> = vs.iter().map(|&v| grads.get(v).unwrap().clone()).collect();
    let numeric = finite_diff(&ests, |x| build(x).0.scalar(build(x).1), 1e-6);
    let e = max_rel_err(&analytic, &numeric);
    assert!(e < 1e-4, "multiscale loss rel err {e}");

    let dt = start.elapsed();
    assert!(dt.as_secs_f64() <= 120.0, "took {dt:?}, budget 2 min");
    println!("[PASS] 4 gradient correctness (6 toy instances, {dt:?})");
}

#[test]
fn criterion_5_shape_conformance() {
    // stack count does not affect per-block dims; one stack keeps init cheap
    let mut cfg = RunConfig::default();
    cfg.separator.stacks = 1;
    cfg.validate().unwrap();
    assert_eq!(cfg.model_dim(), 512);
    assert_eq!(cfg.separator.heads, 8);
    assert_eq!(cfg.separator.conv_kernel, 31);
    assert_eq!(cfg.embedder.embedding_dim, 256);
    assert_eq!(
        cfg.embedder_block_dims(),
        [(256, 256), (256, 512), (512, 512)]
    );

    let model = Model::new(&cfg, 4);
    let store = model.init_params(0);
    // conformer FFN hidden: 4x the model dim
    assert_eq!(
        store.get("separator.stack0.conformer.ffn1.lin1.weight").shape(),
        &[512, 2048]
    );
    assert_eq!(
        store.get("separator.stack0.conformer.ffn2.lin1.weight").shape(),
        &[512, 2048]
    );
    // convolution module expansion: 3 x 512
    assert_eq!(
        store.get("separator.stack0.conformer.conv.expand.weight").shape(),
        &[512, 1536]
    );
    assert_eq!(
        store
            .get("separator.stack0.conformer.conv.depthwise.weight")
            .shape(),
        &[1536, 31]
    );
    // 8 attention heads (one relative-position bias row each)
    assert_eq!(
        store.get("separator.stack0.conformer.attention.rel_bias").shape()[0],
        8
    );
    // embedder block dims and embedding projection
    assert_eq!(store.get("embedder.block1.conv1.weight").shape(), &[256, 256]);
    assert_eq!(store.get("embedder.block2.conv1.weight").shape(), &[256, 512]);
    assert_eq!(store.get("embedder.block3.conv1.weight").shape(), &[512, 512]);
    assert_eq!(store.get("embedder.proj.weight").shape(), &[512, 256]);

    // external FFN of the Conformer-FFN architecture: 512 -> 256
    let mut cfg = RunConfig::default();
    cfg.separator.architecture = Architecture::ConformerFfn;
    cfg.separator.stacks = 1;
    cfg.validate().unwrap();
    let model = Model::new(&cfg, 4);
    let store = model.init_params(0);
    assert_eq!(
        store.get("separator.stack0.ffn.lin1.weight").shape(),
        &[512, 256]
    );
    assert_eq!(
        store.get("separator.stack0.ffn.lin2.weight").shape(),
        &[256, 256]
    );
    println!("[PASS] 5 shape conformance (full-scale layer dims)");
}

#[test]
fn criterion_6_overfit_run() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = overfit_config(500);
    let clean = write_clean_corpus(dir.path(), 2, 3, cfg.signal.sample_rate, 1.0);
    let corpus = dir.path().join("corpus");
    let clean = CleanIndex::read(&clean).unwrap();
    let sim = simulate_corpus(&clean, None, &cfg, 0, &corpus).unwrap();
    let train_manifest = sim
        .manifests
        .iter()
        .find(|(s, _, _)| s == "train")
        .unwrap()
        .1
        .clone();
    assert_eq!(
        Manifest::read(&train_manifest).unwrap().entries.len(),
        4,
        "expected 4 training mixtures"
    );

    let ckpt = dir.path().join("model.ckpt");
    // dev = train: the point is to overfit the 4 utterances
    let outcome = train(&cfg, &train_manifest, &train_manifest, &ckpt).unwrap();
    assert!(outcome.steps <= 500);
    let first = *outcome.train_losses.first().unwrap();
    let last = *outcome.train_losses.last().unwrap();
    assert!(last < first, "training loss did not decrease: {first} -> {last}");

    let (header, store) = checkpoint::load(&ckpt).unwrap();
    let model = Model::new(&header.config, header.speakers.len());
    let manifest = Manifest::read(&train_manifest).unwrap();
    let examples = load_examples(
        &train_manifest,
        &manifest,
        &header.speakers,
        cfg.signal.sample_rate,
    )
    .unwrap();
    let mut improvements = Vec::new();
    for ex in &examples {
        let est = model
            .extract(&store, &ex.mixture.samples, &ex.reference.samples)
            .unwrap();
        let after = si_sdr(&est, &ex.target.samples, &cfg.objectives).unwrap();
        let before = si_sdr(&ex.mixture.samples, &ex.target.samples, &cfg.objectives).unwrap();
        improvements.push(after - before);
    }
    let mean = improvements.iter().sum::<f64>() / improvements.len() as f64;
    assert!(
        mean >= 5.0,
        "mean SI-SDR improvement {mean:.2} dB < 5 dB ({improvements:?})"
    );

    let acc = speaker_accuracy(&model, &store, &examples).unwrap();
    assert_eq!(acc, 1.0, "speaker accuracy {acc}");

    let dt = start.elapsed();
    assert!(dt.as_secs_f64() <= 600.0, "took {dt:?}, budget 10 min");
    println!(
        "[PASS] 6 overfit run (loss {first:.2} -> {last:.2}, mean improvement {mean:.2} dB, accuracy 100%, {dt:?})"
    );
}

#[test]
fn criterion_7_determinism_and_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = overfit_config(6);
    cfg.training.epochs = 3;
    cfg.training.early_stop_patience = 2;
    cfg.training.lr_halving_patience = 2;
    cfg.validate().unwrap();
    let clean = write_clean_corpus(dir.path(), 2, 3, cfg.signal.sample_rate, 1.0);
    let clean = CleanIndex::read(&clean).unwrap();
    let corpus = dir.path().join("corpus");
    let sim = simulate_corpus(&clean, None, &cfg, 0, &corpus).unwrap();
    let train_manifest = &sim.manifests.iter().find(|(s, _, _)| s == "train").unwrap().1;
    let dev_manifest = &sim.manifests.iter().find(|(s, _, _)| s == "dev").unwrap().1;

    let ck_a = dir.path().join("a.ckpt");
    let ck_b = dir.path().join("b.ckpt");
    let out_a = train(&cfg, train_manifest, dev_manifest, &ck_a).unwrap();
    let out_b = train(&cfg, train_manifest, dev_manifest, &ck_b).unwrap();
    assert_eq!(out_a.dev_losses.len(), out_b.dev_losses.len());
    for (i, (a, b)) in out_a.dev_losses.iter().zip(&out_b.dev_losses).enumerate() {
        assert_eq!(a.to_bits(), b.to_bits(), "dev loss diverged at epoch {i}");
    }
    assert_eq!(
        std::fs::read(&ck_a).unwrap(),
        std::fs::read(&ck_b).unwrap(),
        "checkpoints not byte-identical"
    );

    // load -> save round-trips bitwise; inference from the loaded model is
    // reproducible
    let (header, store) = checkpoint::load(&ck_a).unwrap();
    let ck_c = dir.path().join("c.ckpt");
    checkpoint::save(&ck_c, &header, &store).unwrap();
    assert_eq!(std::fs::read(&ck_a).unwrap(), std::fs::read(&ck_c).unwrap());
    let model = Model::new(&header.config, header.speakers.len());
    let manifest = Manifest::read(train_manifest).unwrap();
    let examples = load_examples(
        train_manifest,
        &manifest,
        &header.speakers,
        cfg.signal.sample_rate,
    )
    .unwrap();
    let ex = &examples[0];
    let e1 = model
        .extract(&store, &ex.mixture.samples, &ex.reference.samples)
        .unwrap();
    let e2 = model
        .extract(&store, &ex.mixture.samples, &ex.reference.samples)
        .unwrap();
    assert!(e1.iter().zip(&e2).all(|(a, b)| a.to_bits() == b.to_bits()));
    println!("[PASS] 7 determinism & persistence (identical dev losses, bitwise checkpoints)");
}

#[test]
fn criterion_8_end_to_end_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = overfit_config(400);
    write_clean_corpus(dir.path(), 2, 3, cfg.signal.sample_rate, 1.0);
    let config_path = dir.path().join("config.toml");
    std::fs::write(
        &config_path,
        format!(
            r#"
[signal]
sample_rate = 8000
train_entries = 4
dev_entries = 2
test_entries = 0

[frontend]
channels_per_scale = 16
bottleneck_dim = 16

[embedder]
embedding_dim = 16

[separator]
architecture = "tcn_conformer"
stacks = 1
heads = 2
conv_kernel = 7
rel_pos_max_distance = 16
dropout = 0.0

[training]
epochs = 100000
early_stop_patience = 99999
lr_halving_patience = 99998
max_steps = {}
segment_s = 0.5
batch_size = 2
"#,
            cfg.training.max_steps
        ),
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_tse");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "tse {:?} exited {:?}\nstdout: {}\nstderr: {}",
            args,
            out.status.code(),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let corpus = dir.path().join("corpus");
    let ckpt = dir.path().join("model.ckpt");
    let report = dir.path().join("report.jsonl");
    run(&[
        "simulate",
        "--config",
        config_path.to_str().unwrap(),
        "--clean",
        dir.path().join("clean.tsv").to_str().unwrap(),
        "--out",
        corpus.to_str().unwrap(),
    ]);
    run(&[
        "train",
        "--config",
        config_path.to_str().unwrap(),
        "--train-manifest",
        corpus.join("train.jsonl").to_str().unwrap(),
        "--dev-manifest",
        corpus.join("train.jsonl").to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    run(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        corpus.join("train.jsonl").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);

    let report = Report::read(&report).unwrap();
    let mut utterances = 0;
    for rec in &report.records {
        if let ReportRecord::Utterance {
            si_sdr_db,
            input_si_sdr_db,
            ..
        } = rec
        {
            utterances += 1;
            assert!(input_si_sdr_db.is_finite(), "input row not finite");
            assert!(
                si_sdr_db > input_si_sdr_db,
                "trained row {si_sdr_db} does not exceed input {input_si_sdr_db}"
            );
        }
    }
    assert_eq!(utterances, 4);
    println!("[PASS] 8 end-to-end CLI walkthrough (simulate -> train -> evaluate, 4 rows improved)");
}
