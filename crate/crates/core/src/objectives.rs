//! Scale-invariant SNR/SDR, the multi-scale separation loss, cross-entropy,
//! and evaluation report records.

use crate::autodiff::{Tape, Var};
use crate::config::ObjectivesConfig;
use crate::error::{Result, TseError};
use serde::{Deserialize, Serialize};

/// Scale-invariant SNR in dB of `estimate` against `reference`, clamped to
/// the configured ceiling/floor. Both signals are mean-centered first (when
/// enabled), the reference-projection `s_t = (<e,r>/|r|^2) r` absorbs any
/// estimate gain, and the value is `10 log10(|s_t|^2 / |e - s_t|^2)`.
pub fn si_snr(estimate: &[f64], reference: &[f64], cfg: &ObjectivesConfig) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(TseError::Shape(format!(
            "si_snr length mismatch: {} vs {}",
            estimate.len(),
            reference.len()
        )));
    }
    let center = |v: &[f64]| -> Vec<f64> {
        if cfg.mean_center {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect()
        } else {
            v.to_vec()
        }
    };
    let e = center(estimate);
    let r = center(reference);
    let rr: f64 = r.iter().map(|x| x * x).sum();
    if rr <= 0.0 {
        return Err(TseError::ZeroPower("si_snr reference"));
    }
    let er: f64 = e.iter().zip(&r).map(|(a, b)| a * b).sum();
    let ee: f64 = e.iter().map(|x| x * x).sum();
    if ee <= 0.0 {
        // a silent estimate carries no target signal at all
        return Ok(-cfg.clamp_db);
    }
    let signal = er * er / rr;
    let noise = (ee - signal).max(0.0);
    // no epsilon: it would break exact scale invariance; the clamp absorbs
    // the degenerate 0 and +inf ratios
    let val = 10.0 * (signal / noise).log10();
    Ok(val.clamp(-cfg.clamp_db, cfg.clamp_db))
}

/// SI-SDR evaluation metric. Under this toolkit's conventions this is the
/// same mean-centered projection formula as [`si_snr`]; it is kept as a
/// distinct entry point for evaluation reports.
pub fn si_sdr(estimate: &[f64], reference: &[f64], cfg: &ObjectivesConfig) -> Result<f64> {
    si_snr(estimate, reference, cfg)
}

/// Differentiable SI-SNR of a tape node against a fixed reference node.
pub fn si_snr_var(tape: &mut Tape, estimate: Var, reference: Var, cfg: &ObjectivesConfig) -> Var {
    let (e, r) = if cfg.mean_center {
        (tape.mean_center(estimate), tape.mean_center(reference))
    } else {
        (estimate, reference)
    };
    let er = tape.dot(e, r);
    let rr = tape.dot(r, r);
    let ee = tape.dot(e, e);
    let er2 = tape.mul_scalar(er, er);
    let signal = tape.div_scalar(er2, rr);
    let noise = tape.sub(ee, signal);
    // guard the degenerate all-zero estimate (a ReLU mask can shut a scale
    // off entirely early in training): floor the noise away from 0/0 and keep
    // the ratio inside +-70 dB. Neither bound binds wherever the final +-60 dB
    // clamp doesn't, so values and gradients match the plain metric exactly.
    let noise = tape.clamp(noise, 1e-30, f64::MAX);
    let ratio = tape.div_scalar(signal, noise);
    let ratio = tape.clamp(ratio, 1e-7, 1e7);
    let l = tape.log10(ratio);
    let db = tape.scale(l, 10.0);
    tape.clamp(db, -cfg.clamp_db, cfg.clamp_db)
}

/// Negative weighted sum of per-scale SI-SNRs; lower is better.
pub fn multiscale_si_snr_loss(
    tape: &mut Tape,
    estimates: [Var; 3],
    reference: Var,
    cfg: &ObjectivesConfig,
) -> Var {
    let mut acc: Option<Var> = None;
    for (est, &w) in estimates.into_iter().zip(cfg.scale_weights.iter()) {
        let s = si_snr_var(tape, est, reference, cfg);
        let ws = tape.scale(s, -w);
        acc = Some(match acc {
            Some(a) => tape.add(a, ws),
            None => ws,
        });
    }
    acc.unwrap()
}

/// Full multi-task objective: separation loss plus weighted cross-entropy on
/// the speaker logits.
pub fn multitask_loss(
    tape: &mut Tape,
    estimates: [Var; 3],
    reference: Var,
    logits: Var,
    label: usize,
    cfg: &ObjectivesConfig,
) -> Var {
    let sep = multiscale_si_snr_loss(tape, estimates, reference, cfg);
    if cfg.ce_weight == 0.0 {
        return sep;
    }
    let ce = tape.cross_entropy(logits, label);
    let wce = tape.scale(ce, cfg.ce_weight);
    tape.add(sep, wce)
}

/// Plain cross-entropy `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(TseError::Shape(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + logits.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

// ---- evaluation report ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record")]
pub enum ReportRecord {
    #[serde(rename = "header")]
    Header { config_hash: String },
    #[serde(rename = "utterance")]
    Utterance {
        id: String,
        mixture_type: String,
        si_sdr_db: f64,
        input_si_sdr_db: f64,
        si_sdr_improvement_db: f64,
    },
    #[serde(rename = "summary")]
    Summary {
        mixture_type: String,
        count: usize,
        /// Means formatted to 2 decimals.
        mean_si_sdr_db: String,
        mean_input_si_sdr_db: String,
        mean_si_sdr_improvement_db: String,
    },
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub records: Vec<ReportRecord>,
}

impl Report {
    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.records {
            writeln!(f, "{}", serde_json::to_string(r).unwrap())?;
        }
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        use std::io::BufRead;
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut records = Vec::new();
        for line in f.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| TseError::Manifest(format!("bad report record: {e}")))?,
            );
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cfg() -> ObjectivesConfig {
        ObjectivesConfig::default()
    }

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Independent brute-force oracle: literal projection formula, written
    /// against the definition and sharing no code with `si_snr`.
    pub(crate) fn si_snr_bruteforce(est: &[f64], reference: &[f64]) -> f64 {
        let n = reference.len() as f64;
        let em: f64 = est.iter().sum::<f64>() / n;
        let rm: f64 = reference.iter().sum::<f64>() / n;
        let e: Vec<f64> = est.iter().map(|x| x - em).collect();
        let r: Vec<f64> = reference.iter().map(|x| x - rm).collect();
        let dot: f64 = e.iter().zip(&r).map(|(a, b)| a * b).sum();
        let rnorm2: f64 = r.iter().map(|x| x * x).sum();
        let s_t: Vec<f64> = r.iter().map(|x| dot / rnorm2 * x).collect();
        let err: Vec<f64> = e.iter().zip(&s_t).map(|(a, b)| a - b).collect();
        let st2: f64 = s_t.iter().map(|x| x * x).sum();
        let err2: f64 = err.iter().map(|x| x * x).sum();
        (10.0 * (st2 / err2).log10()).clamp(-60.0, 60.0)
    }

    #[test]
    fn perfect_estimate_hits_ceiling() {
        let r = rand_vec(1000, 1);
        assert_eq!(si_snr(&r, &r, &cfg()).unwrap(), 60.0);
        let scaled: Vec<f64> = r.iter().map(|x| 3.7 * x).collect();
        assert_eq!(si_snr(&scaled, &r, &cfg()).unwrap(), 60.0);
    }

    #[test]
    fn matches_bruteforce_oracle() {
        for seed in 0..50 {
            let e = rand_vec(1000, 100 + seed);
            let r = rand_vec(1000, 200 + seed);
            let a = si_snr(&e, &r, &cfg()).unwrap();
            let b = si_snr_bruteforce(&e, &r);
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn scale_invariance() {
        let e = rand_vec(500, 7);
        let r = rand_vec(500, 8);
        let base = si_snr(&e, &r, &cfg()).unwrap();
        for alpha in [-2.0, 0.1, 3.7] {
            let s: Vec<f64> = e.iter().map(|x| alpha * x).collect();
            let v = si_snr(&s, &r, &cfg()).unwrap();
            assert!((v - base).abs() < 1e-6, "alpha {alpha}: {v} vs {base}");
        }
    }

    #[test]
    fn dc_offset_invariance_with_centering() {
        let e = rand_vec(500, 9);
        let r = rand_vec(500, 10);
        let base = si_snr(&e, &r, &cfg()).unwrap();
        let shifted: Vec<f64> = e.iter().map(|x| x + 0.5).collect();
        assert!((si_snr(&shifted, &r, &cfg()).unwrap() - base).abs() < 1e-6);
    }

    #[test]
    fn zero_reference_rejected_zero_estimate_floored() {
        let r = rand_vec(100, 11);
        let z = vec![0.0; 100];
        assert!(si_snr(&r, &z, &cfg()).is_err());
        assert_eq!(si_snr(&z, &r, &cfg()).unwrap(), -60.0);
    }

    #[test]
    fn si_sdr_is_si_snr() {
        let e = rand_vec(300, 12);
        let r = rand_vec(300, 13);
        let a = si_snr(&e, &r, &cfg()).unwrap();
        let b = si_sdr(&e, &r, &cfg()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn monotone_under_interference_gain() {
        let t = rand_vec(2000, 14);
        let i = rand_vec(2000, 15);
        let mut prev = f64::INFINITY;
        for g in [0.1, 0.3, 1.0, 3.0, 10.0] {
            let mix: Vec<f64> = t.iter().zip(&i).map(|(a, b)| a + g * b).collect();
            let v = si_sdr(&mix, &t, &cfg()).unwrap();
            assert!(v < prev, "gain {g}: {v} !< {prev}");
            prev = v;
        }
    }

    #[test]
    fn cross_entropy_uniform_and_saturated() {
        let v = cross_entropy(&[0.0; 4], 2).unwrap();
        assert!((v - 4.0f64.ln()).abs() < 1e-12);
        let v = cross_entropy(&[0.0, 1000.0, 0.0], 1).unwrap();
        assert!(v.abs() < 1e-9);
        assert!(cross_entropy(&[0.0; 3], 5).is_err());
    }

    #[test]
    fn tape_si_snr_matches_plain() {
        let e = rand_vec(200, 16);
        let r = rand_vec(200, 17);
        let plain = si_snr(&e, &r, &cfg()).unwrap();
        let mut tape = Tape::new();
        let ev = tape.leaf(ndarray::Array1::from(e).into_dyn());
        let rv = tape.leaf(ndarray::Array1::from(r).into_dyn());
        let out = si_snr_var(&mut tape, ev, rv, &cfg());
        assert!((tape.scalar(out) - plain).abs() < 1e-10);
    }

    #[test]
    fn multiscale_weights_degenerate() {
        let r = rand_vec(128, 18);
        let e1 = rand_vec(128, 19);
        let e2 = rand_vec(128, 20);
        let e3 = rand_vec(128, 21);
        let mut c = cfg();
        c.scale_weights = [1.0, 0.0, 0.0];
        let mut tape = Tape::new();
        let rv = tape.leaf(ndarray::Array1::from(r.clone()).into_dyn());
        let vs = [
            tape.leaf(ndarray::Array1::from(e1.clone()).into_dyn()),
            tape.leaf(ndarray::Array1::from(e2).into_dyn()),
            tape.leaf(ndarray::Array1::from(e3).into_dyn()),
        ];
        let loss = multiscale_si_snr_loss(&mut tape, vs, rv, &c);
        let expect = -si_snr(&e1, &r, &c).unwrap();
        assert!((tape.scalar(loss) - expect).abs() < 1e-9);
    }

    #[test]
    fn multiscale_weighted_sum_matches_parts() {
        let r = rand_vec(128, 22);
        let es: Vec<Vec<f64>> = (0..3).map(|k| rand_vec(128, 23 + k)).collect();
        let c = cfg();
        let mut tape = Tape::new();
        let rv = tape.leaf(ndarray::Array1::from(r.clone()).into_dyn());
        let vs = [
            tape.leaf(ndarray::Array1::from(es[0].clone()).into_dyn()),
            tape.leaf(ndarray::Array1::from(es[1].clone()).into_dyn()),
            tape.leaf(ndarray::Array1::from(es[2].clone()).into_dyn()),
        ];
        let loss = multiscale_si_snr_loss(&mut tape, vs, rv, &c);
        let expect: f64 = -(0..3)
            .map(|k| c.scale_weights[k] * si_snr(&es[k], &r, &c).unwrap())
            .sum::<f64>();
        assert!((tape.scalar(loss) - expect).abs() < 1e-9);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        use crate::autodiff::check::{finite_diff, max_rel_err};
        let r = rand_vec(64, 30);
        let e: Vec<Vec<f64>> = (0..3).map(|k| rand_vec(64, 31 + k)).collect();
        let c = cfg();
        let build = |inputs: &[ndarray::ArrayD<f64>]| -> (Tape, Var, Vec<Var>) {
            let mut tape = Tape::new();
            let rv = tape.leaf(ndarray::Array1::from(r.clone()).into_dyn());
            let vs: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
            let loss = multiscale_si_snr_loss(&mut tape, [vs[0], vs[1], vs[2]], rv, &c);
            (tape, loss, vs)
        };
        let inputs: Vec<ndarray::ArrayD<f64>> = e
            .iter()
            .map(|v| ndarray::Array1::from(v.clone()).into_dyn())
            .collect();
        let (tape, loss, vs) = build(&inputs);
        let grads = tape.backward(loss);
        let analytic: Vec<_> = vs.iter().map(|&v| grads.get(v).unwrap().clone()).collect();
        let numeric = finite_diff(&inputs, |x| {
            let (t, l, _) = build(x);
            t.scalar(l)
        }, 1e-6);
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-5, "max rel err {err}");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn signal(n: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1.0f64..1.0, n..=n)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// The metric never leaves the configured clamp range.
            #[test]
            fn value_stays_in_clamp_range(e in signal(256), r in signal(256)) {
                prop_assume!(r.iter().map(|x| x * x).sum::<f64>() > 1e-6);
                let c = cfg();
                let v = si_snr(&e, &r, &c).unwrap();
                prop_assert!(v >= -c.clamp_db && v <= c.clamp_db);
            }

            /// Rescaling the estimate leaves the metric unchanged.
            #[test]
            fn invariant_to_estimate_gain(
                e in signal(128),
                r in signal(128),
                alpha in prop_oneof![(-8.0f64..-1e-3), (1e-3f64..8.0)],
            ) {
                prop_assume!(r.iter().map(|x| x * x).sum::<f64>() > 1e-6);
                let c = cfg();
                let base = si_snr(&e, &r, &c).unwrap();
                let scaled: Vec<f64> = e.iter().map(|x| alpha * x).collect();
                let v = si_snr(&scaled, &r, &c).unwrap();
                prop_assert!((v - base).abs() < 1e-6, "{v} vs {base}");
            }

            /// The differentiable path agrees with the plain metric.
            #[test]
            fn tape_path_matches_plain(e in signal(100), r in signal(100)) {
                prop_assume!(r.iter().map(|x| x * x).sum::<f64>() > 1e-6);
                prop_assume!(e.iter().map(|x| x * x).sum::<f64>() > 1e-6);
                let c = cfg();
                let plain = si_snr(&e, &r, &c).unwrap();
                let mut tape = Tape::new();
                let ev = tape.leaf(ndarray::Array1::from(e.clone()).into_dyn());
                let rv = tape.leaf(ndarray::Array1::from(r.clone()).into_dyn());
                let v = si_snr_var(&mut tape, ev, rv, &c);
                let tv = tape.scalar(v);
                prop_assert!((tv - plain).abs() < 1e-9, "{tv} vs {plain}");
            }
        }
    }
}
