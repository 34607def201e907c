//! Normalization layers: per-frame layer norm, global layer norm, batch norm.

use super::{Tape, Var};
use ndarray::{Array1, Array2, Ix1, Ix2};

impl Tape {
    /// Per-row (per-frame) layer normalization of `x: [T, C]` with learned
    /// per-channel `gain` and `bias`.
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let gv = self.value(gain).view().into_dimensionality::<Ix1>().unwrap();
        let bv = self.value(bias).view().into_dimensionality::<Ix1>().unwrap();
        let (t, c) = (xm.nrows(), xm.ncols());
        assert_eq!(c, gv.len());
        assert_eq!(c, bv.len());
        let mut out = Array2::<f64>::zeros((t, c));
        for (mut orow, xrow) in out.rows_mut().into_iter().zip(xm.rows()) {
            let mean = xrow.mean().unwrap();
            let var = xrow.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            let inv = 1.0 / (var + eps).sqrt();
            for ci in 0..c {
                orow[ci] = (xrow[ci] - mean) * inv * gv[ci] + bv[ci];
            }
        }
        self.push(
            out.into_dyn(),
            vec![x, gain, bias],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let xm = vals[x.0].view().into_dimensionality::<Ix2>().unwrap();
                let gv = vals[gain.0].view().into_dimensionality::<Ix1>().unwrap();
                let mut gx = Array2::<f64>::zeros((t, c));
                let mut ggain = Array1::<f64>::zeros(c);
                let mut gbias = Array1::<f64>::zeros(c);
                for ((mut gxr, xr), gr) in
                    gx.rows_mut().into_iter().zip(xm.rows()).zip(gm.rows())
                {
                    let mean = xr.mean().unwrap();
                    let var = xr.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
                    let inv = 1.0 / (var + eps).sqrt();
                    // xhat = (x - mean) * inv; dy/dxhat = g * gain
                    let mut sum_gh = 0.0;
                    let mut sum_gh_xhat = 0.0;
                    let mut xhat = vec![0.0; c];
                    for ci in 0..c {
                        xhat[ci] = (xr[ci] - mean) * inv;
                        let gh = gr[ci] * gv[ci];
                        sum_gh += gh;
                        sum_gh_xhat += gh * xhat[ci];
                        ggain[ci] += gr[ci] * xhat[ci];
                        gbias[ci] += gr[ci];
                    }
                    let cf = c as f64;
                    for ci in 0..c {
                        let gh = gr[ci] * gv[ci];
                        gxr[ci] =
                            inv * (gh - sum_gh / cf - xhat[ci] * sum_gh_xhat / cf);
                    }
                }
                vec![gx.into_dyn(), ggain.into_dyn(), gbias.into_dyn()]
            })),
        )
    }

    /// Global layer normalization: statistics over all frames and channels
    /// of `x: [T, C]`, per-channel affine.
    pub fn global_layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let gv = self.value(gain).view().into_dimensionality::<Ix1>().unwrap();
        let bv = self.value(bias).view().into_dimensionality::<Ix1>().unwrap();
        let (t, c) = (xm.nrows(), xm.ncols());
        let mean = xm.mean().unwrap();
        let var = xm.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
        let inv = 1.0 / (var + eps).sqrt();
        let mut out = Array2::<f64>::zeros((t, c));
        for (mut orow, xrow) in out.rows_mut().into_iter().zip(xm.rows()) {
            for ci in 0..c {
                orow[ci] = (xrow[ci] - mean) * inv * gv[ci] + bv[ci];
            }
        }
        self.push(
            out.into_dyn(),
            vec![x, gain, bias],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let xm = vals[x.0].view().into_dimensionality::<Ix2>().unwrap();
                let gv = vals[gain.0].view().into_dimensionality::<Ix1>().unwrap();
                let mean = xm.mean().unwrap();
                let var = xm.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
                let inv = 1.0 / (var + eps).sqrt();
                let nf = (t * c) as f64;
                let mut sum_gh = 0.0;
                let mut sum_gh_xhat = 0.0;
                let mut ggain = Array1::<f64>::zeros(c);
                let mut gbias = Array1::<f64>::zeros(c);
                for (xr, gr) in xm.rows().into_iter().zip(gm.rows()) {
                    for ci in 0..c {
                        let xhat = (xr[ci] - mean) * inv;
                        let gh = gr[ci] * gv[ci];
                        sum_gh += gh;
                        sum_gh_xhat += gh * xhat;
                        ggain[ci] += gr[ci] * xhat;
                        gbias[ci] += gr[ci];
                    }
                }
                let mut gx = Array2::<f64>::zeros((t, c));
                for ((mut gxr, xr), gr) in
                    gx.rows_mut().into_iter().zip(xm.rows()).zip(gm.rows())
                {
                    for ci in 0..c {
                        let xhat = (xr[ci] - mean) * inv;
                        let gh = gr[ci] * gv[ci];
                        gxr[ci] = inv * (gh - sum_gh / nf - xhat * sum_gh_xhat / nf);
                    }
                }
                vec![gx.into_dyn(), ggain.into_dyn(), gbias.into_dyn()]
            })),
        )
    }

    /// Batch normalization over the frame axis of `x: [T, C]` using batch
    /// statistics (training mode). Eval mode is composed from the running
    /// statistics outside the tape.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let gv = self.value(gamma).view().into_dimensionality::<Ix1>().unwrap();
        let bv = self.value(beta).view().into_dimensionality::<Ix1>().unwrap();
        let (t, c) = (xm.nrows(), xm.ncols());
        let mut mean = Array1::<f64>::zeros(c);
        let mut var = Array1::<f64>::zeros(c);
        for ci in 0..c {
            let col = xm.column(ci);
            let m = col.mean().unwrap();
            mean[ci] = m;
            var[ci] = col.mapv(|v| (v - m) * (v - m)).mean().unwrap();
        }
        let mut out = Array2::<f64>::zeros((t, c));
        for ti in 0..t {
            for ci in 0..c {
                out[[ti, ci]] =
                    (xm[[ti, ci]] - mean[ci]) / (var[ci] + eps).sqrt() * gv[ci] + bv[ci];
            }
        }
        self.push(
            out.into_dyn(),
            vec![x, gamma, beta],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let xm = vals[x.0].view().into_dimensionality::<Ix2>().unwrap();
                let gv = vals[gamma.0].view().into_dimensionality::<Ix1>().unwrap();
                let tf = t as f64;
                let mut gx = Array2::<f64>::zeros((t, c));
                let mut ggamma = Array1::<f64>::zeros(c);
                let mut gbeta = Array1::<f64>::zeros(c);
                for ci in 0..c {
                    let col = xm.column(ci);
                    let m = col.mean().unwrap();
                    let v = col.mapv(|x| (x - m) * (x - m)).mean().unwrap();
                    let inv = 1.0 / (v + eps).sqrt();
                    let mut sum_gh = 0.0;
                    let mut sum_gh_xhat = 0.0;
                    for ti in 0..t {
                        let xhat = (xm[[ti, ci]] - m) * inv;
                        let gh = gm[[ti, ci]] * gv[ci];
                        sum_gh += gh;
                        sum_gh_xhat += gh * xhat;
                        ggamma[ci] += gm[[ti, ci]] * xhat;
                        gbeta[ci] += gm[[ti, ci]];
                    }
                    for ti in 0..t {
                        let xhat = (xm[[ti, ci]] - m) * inv;
                        let gh = gm[[ti, ci]] * gv[ci];
                        gx[[ti, ci]] =
                            inv * (gh - sum_gh / tf - xhat * sum_gh_xhat / tf);
                    }
                }
                vec![gx.into_dyn(), ggamma.into_dyn(), gbeta.into_dyn()]
            })),
        )
    }

    /// Batch-statistics of `x: [T, C]` per channel, used by the training loop
    /// to update running averages. Not a tape op.
    pub fn batch_stats(&self, x: Var) -> (Array1<f64>, Array1<f64>) {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let c = xm.ncols();
        let mut mean = Array1::<f64>::zeros(c);
        let mut var = Array1::<f64>::zeros(c);
        for ci in 0..c {
            let col = xm.column(ci);
            let m = col.mean().unwrap();
            mean[ci] = m;
            var[ci] = col.mapv(|v| (v - m) * (v - m)).mean().unwrap();
        }
        (mean, var)
    }
}
