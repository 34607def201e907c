//! 1-D convolution ops: learned filterbank encoder/decoder and depthwise convs.

use super::{Tape, Var};
use ndarray::{Array1, Array2, Ix1, Ix2};

impl Tape {
    /// Strided cross-correlation of a waveform `x: [N]` with `C` filters
    /// `w: [C, L]`, output `[T, C]` with `T = (N - L) / stride + 1`.
    pub fn conv1d_wave(&mut self, x: Var, w: Var, stride: usize) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix1>().unwrap();
        let wm = self.value(w).view().into_dimensionality::<Ix2>().unwrap();
        let (c, l) = (wm.nrows(), wm.ncols());
        let n = xv.len();
        assert!(n >= l, "input shorter than filter ({n} < {l})");
        let t = (n - l) / stride + 1;
        let mut out = Array2::<f64>::zeros((t, c));
        for ti in 0..t {
            let seg = xv.slice(ndarray::s![ti * stride..ti * stride + l]);
            for ci in 0..c {
                out[[ti, ci]] = seg.dot(&wm.row(ci));
            }
        }
        self.push(
            out.into_dyn(),
            vec![x, w],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let xv = vals[x.0].view().into_dimensionality::<Ix1>().unwrap();
                let wm = vals[w.0].view().into_dimensionality::<Ix2>().unwrap();
                let mut gx = Array1::<f64>::zeros(n);
                let mut gw = Array2::<f64>::zeros((c, l));
                for ti in 0..t {
                    let off = ti * stride;
                    for ci in 0..c {
                        let go = gm[[ti, ci]];
                        if go == 0.0 {
                            continue;
                        }
                        for li in 0..l {
                            gx[off + li] += go * wm[[ci, li]];
                            gw[[ci, li]] += go * xv[off + li];
                        }
                    }
                }
                vec![gx.into_dyn(), gw.into_dyn()]
            })),
        )
    }

    /// Transposed 1-D convolution (overlap-add of basis filters):
    /// features `x: [T, C]`, filters `w: [C, L]`, output `[(T-1)*stride + L]`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, stride: usize) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let wm = self.value(w).view().into_dimensionality::<Ix2>().unwrap();
        let (t, c) = (xm.nrows(), xm.ncols());
        assert_eq!(c, wm.nrows(), "channel count mismatch");
        let l = wm.ncols();
        let n = (t - 1) * stride + l;
        let mut out = Array1::<f64>::zeros(n);
        for ti in 0..t {
            let off = ti * stride;
            for ci in 0..c {
                let a = xm[[ti, ci]];
                if a == 0.0 {
                    continue;
                }
                for li in 0..l {
                    out[off + li] += a * wm[[ci, li]];
                }
            }
        }
        self.push(
            out.into_dyn(),
            vec![x, w],
            Some(Box::new(move |vals, g| {
                let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                let xm = vals[x.0].view().into_dimensionality::<Ix2>().unwrap();
                let wm = vals[w.0].view().into_dimensionality::<Ix2>().unwrap();
                let mut gx = Array2::<f64>::zeros((t, c));
                let mut gw = Array2::<f64>::zeros((c, l));
                for ti in 0..t {
                    let off = ti * stride;
                    let gseg = gv.slice(ndarray::s![off..off + l]);
                    for ci in 0..c {
                        gx[[ti, ci]] = gseg.dot(&wm.row(ci));
                        let a = xm[[ti, ci]];
                        if a != 0.0 {
                            for li in 0..l {
                                gw[[ci, li]] += a * gseg[li];
                            }
                        }
                    }
                }
                vec![gx.into_dyn(), gw.into_dyn()]
            })),
        )
    }

    /// Depthwise 1-D convolution over frames of `x: [T, C]` with per-channel
    /// kernels `w: [C, K]` and the given dilation. Symmetric zero padding
    /// keeps the frame count unchanged (requires odd K).
    pub fn depthwise_conv1d(&mut self, x: Var, w: Var, dilation: usize) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let wm = self.value(w).view().into_dimensionality::<Ix2>().unwrap();
        let (t, c) = (xm.nrows(), xm.ncols());
        assert_eq!(c, wm.nrows(), "channel count mismatch");
        let k = wm.ncols();
        assert!(k % 2 == 1, "kernel size must be odd for same padding");
        let half = (k / 2) * dilation;
        let mut out = Array2::<f64>::zeros((t, c));
        for ti in 0..t {
            for ki in 0..k {
                let src = ti as isize + (ki * dilation) as isize - half as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let src = src as usize;
                for ci in 0..c {
                    out[[ti, ci]] += xm[[src, ci]] * wm[[ci, ki]];
                }
            }
        }
        self.push(
            out.into_dyn(),
            vec![x, w],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let xm = vals[x.0].view().into_dimensionality::<Ix2>().unwrap();
                let wm = vals[w.0].view().into_dimensionality::<Ix2>().unwrap();
                let mut gx = Array2::<f64>::zeros((t, c));
                let mut gw = Array2::<f64>::zeros((c, k));
                for ti in 0..t {
                    for ki in 0..k {
                        let src = ti as isize + (ki * dilation) as isize - half as isize;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        let src = src as usize;
                        for ci in 0..c {
                            gx[[src, ci]] += gm[[ti, ci]] * wm[[ci, ki]];
                            gw[[ci, ki]] += gm[[ti, ci]] * xm[[src, ci]];
                        }
                    }
                }
                vec![gx.into_dyn(), gw.into_dyn()]
            })),
        )
    }

    /// Max-pooling over frames with the given kernel and stride, ceil mode
    /// (a shorter final window is still pooled, so T >= 1 always yields >= 1).
    pub fn maxpool_rows(&mut self, x: Var, kernel: usize, stride: usize) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let (t, c) = (xm.nrows(), xm.ncols());
        // ceil mode: partial tail windows are pooled, so T >= 1 in always
        // yields >= 1 out
        let t_out = if t <= kernel {
            1
        } else {
            (t - kernel).div_ceil(stride) + 1
        };
        let mut out = Array2::<f64>::zeros((t_out, c));
        let mut argmax = vec![0usize; t_out * c];
        for ti in 0..t_out {
            let start = ti * stride;
            let end = (start + kernel).min(t);
            for ci in 0..c {
                let (mut best, mut best_i) = (f64::NEG_INFINITY, start);
                for si in start..end {
                    if xm[[si, ci]] > best {
                        best = xm[[si, ci]];
                        best_i = si;
                    }
                }
                out[[ti, ci]] = best;
                argmax[ti * c + ci] = best_i;
            }
        }
        self.push(
            out.into_dyn(),
            vec![x],
            Some(Box::new(move |_, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut gx = Array2::<f64>::zeros((t, c));
                for ti in 0..gm.nrows() {
                    for ci in 0..c {
                        gx[[argmax[ti * c + ci], ci]] += gm[[ti, ci]];
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }

    /// Pad `samples` zeros on both sides of a 1-D node.
    pub fn pad_symmetric(&mut self, x: Var, left: usize, right: usize) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix1>().unwrap();
        let n = xv.len();
        let mut out = Array1::<f64>::zeros(n + left + right);
        out.slice_mut(ndarray::s![left..left + n]).assign(&xv);
        self.push(
            out.into_dyn(),
            vec![x],
            Some(Box::new(move |_, g| {
                let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                vec![gv.slice(ndarray::s![left..left + n]).to_owned().into_dyn()]
            })),
        )
    }

    /// `len` samples of a 1-D node starting at `start`.
    pub fn slice1d(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix1>().unwrap();
        let n = xv.len();
        assert!(start + len <= n, "slice1d out of range");
        let v = xv.slice(ndarray::s![start..start + len]).to_owned().into_dyn();
        self.push(
            v,
            vec![x],
            Some(Box::new(move |_, g| {
                let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                let mut out = Array1::<f64>::zeros(n);
                out.slice_mut(ndarray::s![start..start + len]).assign(&gv);
                vec![out.into_dyn()]
            })),
        )
    }

    /// First `len` samples of a 1-D node.
    pub fn crop1d(&mut self, x: Var, len: usize) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix1>().unwrap();
        let n = xv.len();
        assert!(len <= n);
        let v = xv.slice(ndarray::s![..len]).to_owned().into_dyn();
        self.push(
            v,
            vec![x],
            Some(Box::new(move |_, g| {
                let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                let mut out = Array1::<f64>::zeros(n);
                out.slice_mut(ndarray::s![..len]).assign(&gv);
                vec![out.into_dyn()]
            })),
        )
    }
}
