//! Reductions and gather-style ops.

use super::{Tape, Var};
use ndarray::{Array1, Array2, Axis, Ix1, Ix2};

impl Tape {
    /// Mean over the frame axis of `x: [T, C]`, giving `[C]`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let (t, c) = (xm.nrows(), xm.ncols());
        let v = xm.mean_axis(Axis(0)).unwrap().into_dyn();
        self.push(
            v,
            vec![x],
            Some(Box::new(move |_, g| {
                let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                let mut gx = Array2::<f64>::zeros((t, c));
                let tf = t as f64;
                for mut row in gx.rows_mut() {
                    for ci in 0..c {
                        row[ci] = gv[ci] / tf;
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }

    /// Subtract the mean from a 1-D node.
    pub fn mean_center(&mut self, x: Var) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix1>().unwrap();
        let m = xv.mean().unwrap();
        let v = xv.mapv(|a| a - m).into_dyn();
        self.push(
            v,
            vec![x],
            Some(Box::new(move |_, g| {
                let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                let gm = gv.mean().unwrap();
                vec![gv.mapv(|a| a - gm).into_dyn()]
            })),
        )
    }

    /// Relative-position bias matrix built from a bucket vector `b: [2R+1]`:
    /// `out[i, j] = b[clip(j - i, -R, R) + R]` for a `[T, T]` output.
    pub fn rel_bias_matrix(&mut self, b: Var, t: usize) -> Var {
        let bv = self.value(b).view().into_dimensionality::<Ix1>().unwrap();
        let nb = bv.len();
        assert!(nb % 2 == 1, "bucket count must be odd");
        let r = (nb / 2) as isize;
        let mut out = Array2::<f64>::zeros((t, t));
        for i in 0..t {
            for j in 0..t {
                let d = (j as isize - i as isize).clamp(-r, r) + r;
                out[[i, j]] = bv[d as usize];
            }
        }
        self.push(
            out.into_dyn(),
            vec![b],
            Some(Box::new(move |_, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut gb = Array1::<f64>::zeros(nb);
                for i in 0..t {
                    for j in 0..t {
                        let d = (j as isize - i as isize).clamp(-r, r) + r;
                        gb[d as usize] += gm[[i, j]];
                    }
                }
                vec![gb.into_dyn()]
            })),
        )
    }
}
