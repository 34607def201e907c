//! Central finite-difference gradient checking.
//!
//! The numeric side only ever calls the forward closure; it never touches the
//! tape, so it stays independent of the backward implementation it verifies.

use ndarray::ArrayD;

/// Central finite differences of `f` with respect to every element of every
/// input array. `eps` is scaled per element by `max(1, |x|)`.
pub fn finite_diff<F>(inputs: &[ArrayD<f64>], mut f: F, eps: f64) -> Vec<ArrayD<f64>>
where
    F: FnMut(&[ArrayD<f64>]) -> f64,
{
    let mut work: Vec<ArrayD<f64>> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = ArrayD::zeros(inputs[i].raw_dim());
        for (idx, slot) in g.iter_mut().enumerate() {
            let orig = inputs[i].as_slice().unwrap()[idx];
            let h = eps * orig.abs().max(1.0);
            work[i].as_slice_mut().unwrap()[idx] = orig + h;
            let fp = f(&work);
            work[i].as_slice_mut().unwrap()[idx] = orig - h;
            let fm = f(&work);
            work[i].as_slice_mut().unwrap()[idx] = orig;
            *slot = (fp - fm) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Worst per-tensor relative discrepancy between analytic and numeric
/// gradients: `||a - n||_2 / max(||a||_2, ||n||_2, 1e-5)`. The norm form and
/// the denominator floor keep central-difference roundoff noise (~1e-10) on
/// analytically-zero directions (e.g. a bias feeding straight into a
/// normalization layer) from dominating.
pub fn max_rel_err(analytic: &[ArrayD<f64>], numeric: &[ArrayD<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape());
        let diff: f64 = a
            .iter()
            .zip(n.iter())
            .map(|(&av, &nv)| (av - nv) * (av - nv))
            .sum::<f64>()
            .sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = n.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(diff / na.max(nn).max(1e-5));
    }
    worst
}
