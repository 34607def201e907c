//! Elementwise, linear-algebra, and scalar ops.

use super::{Tape, Var};
use ndarray::{ArrayD, Axis, Ix1, Ix2};

const LN10: f64 = std::f64::consts::LN_10;

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = self.value(a) + self.value(b);
        self.push(
            v,
            vec![a, b],
            Some(Box::new(|_, g| vec![g.clone(), g.clone()])),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = self.value(a) - self.value(b);
        self.push(
            v,
            vec![a, b],
            Some(Box::new(|_, g| vec![g.clone(), g.mapv(|x| -x)])),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = self.value(a) * self.value(b);
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |vals, g| {
                vec![g * &vals[b.0], g * &vals[a.0]]
            })),
        )
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| x * c);
        self.push(
            v,
            vec![a],
            Some(Box::new(move |_, g| vec![g.mapv(|x| x * c)])),
        )
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| x + c);
        self.push(v, vec![a], Some(Box::new(|_, g| vec![g.clone()])))
    }

    /// View a node under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let orig = self.value(x).raw_dim();
        let v = self
            .value(x)
            .clone()
            .into_shape(ndarray::IxDyn(shape))
            .expect("reshape element count mismatch");
        self.push(
            v,
            vec![x],
            Some(Box::new(move |_, g| {
                vec![g.clone().into_shape(orig.clone()).unwrap()]
            })),
        )
    }

    /// Matrix product of two 2-D nodes.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let am = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let bm = self.value(b).view().into_dimensionality::<Ix2>().unwrap();
        assert_eq!(am.ncols(), bm.nrows(), "matmul inner dim mismatch");
        let v = am.dot(&bm).into_dyn();
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let am = vals[a.0].view().into_dimensionality::<Ix2>().unwrap();
                let bm = vals[b.0].view().into_dimensionality::<Ix2>().unwrap();
                vec![gm.dot(&bm.t()).into_dyn(), am.t().dot(&gm).into_dyn()]
            })),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .t()
            .to_owned()
            .into_dyn();
        self.push(
            v,
            vec![a],
            Some(Box::new(|_, g| {
                vec![g
                    .view()
                    .into_dimensionality::<Ix2>()
                    .unwrap()
                    .t()
                    .to_owned()
                    .into_dyn()]
            })),
        )
    }

    /// Broadcast-add a row vector `b: [C]` to every row of `x: [T, C]`.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let bv = self.value(b).view().into_dimensionality::<Ix1>().unwrap();
        assert_eq!(xm.ncols(), bv.len());
        let v = (&xm + &bv).into_dyn();
        self.push(
            v,
            vec![x, b],
            Some(Box::new(|_, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                vec![g.clone(), gm.sum_axis(Axis(0)).into_dyn()]
            })),
        )
    }

    /// Broadcast-multiply every row of `x: [T, C]` by a vector `v: [C]`.
    pub fn mul_row_vec(&mut self, x: Var, vv: Var) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let v1 = self.value(vv).view().into_dimensionality::<Ix1>().unwrap();
        assert_eq!(xm.ncols(), v1.len());
        let out = (&xm * &v1).into_dyn();
        self.push(
            out,
            vec![x, vv],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let xm = vals[x.0].view().into_dimensionality::<Ix2>().unwrap();
                let v1 = vals[vv.0].view().into_dimensionality::<Ix1>().unwrap();
                vec![(&gm * &v1).into_dyn(), (&gm * &xm).sum_axis(Axis(0)).into_dyn()]
            })),
        )
    }

    /// Column-wise concatenation of two `[T, C_i]` nodes.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let am = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let bm = self.value(b).view().into_dimensionality::<Ix2>().unwrap();
        assert_eq!(am.nrows(), bm.nrows());
        let ca = am.ncols();
        let v = ndarray::concatenate(Axis(1), &[am.view(), bm.view()])
            .unwrap()
            .into_dyn();
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |_, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                vec![
                    gm.slice(ndarray::s![.., ..ca]).to_owned().into_dyn(),
                    gm.slice(ndarray::s![.., ca..]).to_owned().into_dyn(),
                ]
            })),
        )
    }

    /// Append a fixed vector `e: [E]` to every row of `x: [T, C]`.
    /// Gradient for `e` sums over rows.
    pub fn concat_rows_vec(&mut self, x: Var, e: Var) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let ev = self.value(e).view().into_dimensionality::<Ix1>().unwrap();
        let (t, c) = (xm.nrows(), xm.ncols());
        let mut out = ndarray::Array2::<f64>::zeros((t, c + ev.len()));
        out.slice_mut(ndarray::s![.., ..c]).assign(&xm);
        for mut row in out.slice_mut(ndarray::s![.., c..]).rows_mut() {
            row.assign(&ev);
        }
        self.push(
            out.into_dyn(),
            vec![x, e],
            Some(Box::new(move |_, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                vec![
                    gm.slice(ndarray::s![.., ..c]).to_owned().into_dyn(),
                    gm.slice(ndarray::s![.., c..]).sum_axis(Axis(0)).into_dyn(),
                ]
            })),
        )
    }

    /// Columns `range` of a 2-D node.
    pub fn slice_cols(&mut self, x: Var, range: std::ops::Range<usize>) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let shape = (xm.nrows(), xm.ncols());
        let v = xm
            .slice(ndarray::s![.., range.start..range.end])
            .to_owned()
            .into_dyn();
        self.push(
            v,
            vec![x],
            Some(Box::new(move |_, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut out = ndarray::Array2::<f64>::zeros(shape);
                out.slice_mut(ndarray::s![.., range.start..range.end])
                    .assign(&gm);
                vec![out.into_dyn()]
            })),
        )
    }

    /// Row `i` of a 2-D node, as a 1-D node.
    pub fn row(&mut self, x: Var, i: usize) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let shape = (xm.nrows(), xm.ncols());
        let v = xm.row(i).to_owned().into_dyn();
        self.push(
            v,
            vec![x],
            Some(Box::new(move |_, g| {
                let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                let mut out = ndarray::Array2::<f64>::zeros(shape);
                out.row_mut(i).assign(&gv);
                vec![out.into_dyn()]
            })),
        )
    }

    // ---- activations ----

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| a.max(0.0));
        self.push(
            v,
            vec![x],
            Some(Box::new(move |vals, g| {
                vec![ndarray::Zip::from(g)
                    .and(&vals[x.0])
                    .map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 })]
            })),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(sigmoid);
        self.push(
            v,
            vec![x],
            Some(Box::new(move |vals, g| {
                vec![ndarray::Zip::from(g)
                    .and(&vals[x.0])
                    .map_collect(|&g, &x| {
                        let s = sigmoid(x);
                        g * s * (1.0 - s)
                    })]
            })),
        )
    }

    /// swish(x) = x * sigmoid(x)
    pub fn swish(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| a * sigmoid(a));
        self.push(
            v,
            vec![x],
            Some(Box::new(move |vals, g| {
                vec![ndarray::Zip::from(g)
                    .and(&vals[x.0])
                    .map_collect(|&g, &x| {
                        let s = sigmoid(x);
                        g * (s + x * s * (1.0 - s))
                    })]
            })),
        )
    }

    /// PReLU over `[T, C]` with one learned slope per channel (`alpha: [C]`).
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let av = self
            .value(alpha)
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        assert_eq!(xm.ncols(), av.len());
        let mut v = xm.to_owned();
        for mut row in v.rows_mut() {
            for (x, &a) in row.iter_mut().zip(av.iter()) {
                if *x < 0.0 {
                    *x *= a;
                }
            }
        }
        self.push(
            v.into_dyn(),
            vec![x, alpha],
            Some(Box::new(move |vals, g| {
                let gm = g.view().into_dimensionality::<Ix2>().unwrap();
                let xm = vals[x.0].view().into_dimensionality::<Ix2>().unwrap();
                let av = vals[alpha.0].view().into_dimensionality::<Ix1>().unwrap();
                let mut gx = gm.to_owned();
                let mut ga = ndarray::Array1::<f64>::zeros(av.len());
                for (mut grow, xrow) in gx.rows_mut().into_iter().zip(xm.rows()) {
                    for c in 0..av.len() {
                        if xrow[c] < 0.0 {
                            ga[c] += grow[c] * xrow[c];
                            grow[c] *= av[c];
                        }
                    }
                }
                vec![gx.into_dyn(), ga.into_dyn()]
            })),
        )
    }

    /// Row-wise softmax of a 2-D node.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xm = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let mut v = xm.to_owned();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let out = v.into_dyn();
        let this = self.push(
            out,
            vec![x],
            Some(Box::new(move |_, _| unreachable!())),
        );
        // backward needs the softmax output itself; rebuild the closure with
        // access to this node's value.
        self.ops[this.0].back = Some(Box::new(move |vals, g| {
            let y = vals[this.0].view().into_dimensionality::<Ix2>().unwrap();
            let gm = g.view().into_dimensionality::<Ix2>().unwrap();
            let mut gx = ndarray::Array2::<f64>::zeros(y.raw_dim());
            for ((mut gxr, yr), gr) in gx.rows_mut().into_iter().zip(y.rows()).zip(gm.rows()) {
                let dot: f64 = yr.iter().zip(gr.iter()).map(|(&y, &g)| y * g).sum();
                for c in 0..yr.len() {
                    gxr[c] = yr[c] * (gr[c] - dot);
                }
            }
            vec![gx.into_dyn()]
        }));
        this
    }

    /// Elementwise clamp; gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).mapv(|a| a.clamp(lo, hi));
        self.push(
            v,
            vec![x],
            Some(Box::new(move |vals, g| {
                vec![ndarray::Zip::from(g)
                    .and(&vals[x.0])
                    .map_collect(|&g, &x| if x > lo && x < hi { g } else { 0.0 })]
            })),
        )
    }

    // ---- scalar ops (0-dim nodes) ----

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).view().into_dimensionality::<Ix1>().unwrap();
        let bv = self.value(b).view().into_dimensionality::<Ix1>().unwrap();
        assert_eq!(av.len(), bv.len());
        let v = ndarray::arr0(av.dot(&bv)).into_dyn();
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |vals, g| {
                let gs = g.iter().next().copied().unwrap();
                vec![vals[b.0].mapv(|x| x * gs), vals[a.0].mapv(|x| x * gs)]
            })),
        )
    }

    pub fn div_scalar(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.scalar(a), self.scalar(b));
        let v = ndarray::arr0(av / bv).into_dyn();
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |vals, g| {
                let gs = g.iter().next().copied().unwrap();
                let bvv = vals[b.0].iter().next().copied().unwrap();
                let avv = vals[a.0].iter().next().copied().unwrap();
                vec![
                    ndarray::arr0(gs / bvv).into_dyn(),
                    ndarray::arr0(-gs * avv / (bvv * bvv)).into_dyn(),
                ]
            })),
        )
    }

    pub fn mul_scalar(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::arr0(self.scalar(a) * self.scalar(b)).into_dyn();
        self.push(
            v,
            vec![a, b],
            Some(Box::new(move |vals, g| {
                let gs = g.iter().next().copied().unwrap();
                vec![
                    vals[b.0].mapv(|x| x * gs),
                    vals[a.0].mapv(|x| x * gs),
                ]
            })),
        )
    }

    /// 1/sqrt of a positive scalar node.
    pub fn rsqrt(&mut self, a: Var) -> Var {
        let av = self.scalar(a);
        assert!(av > 0.0, "rsqrt of non-positive value {av}");
        let v = ndarray::arr0(1.0 / av.sqrt()).into_dyn();
        self.push(
            v,
            vec![a],
            Some(Box::new(move |vals, g| {
                let gs = g.iter().next().copied().unwrap();
                let avv = vals[a.0].iter().next().copied().unwrap();
                vec![ndarray::arr0(-0.5 * gs * avv.powf(-1.5)).into_dyn()]
            })),
        )
    }

    /// Multiply every element of `x` by a 0-dim scalar node.
    pub fn mul_by_scalar_var(&mut self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let v = self.value(x).mapv(|a| a * sv);
        self.push(
            v,
            vec![x, s],
            Some(Box::new(move |vals, g| {
                let sv = vals[s.0].iter().next().copied().unwrap();
                let dot: f64 = g.iter().zip(vals[x.0].iter()).map(|(a, b)| a * b).sum();
                vec![g.mapv(|a| a * sv), ndarray::arr0(dot).into_dyn()]
            })),
        )
    }

    /// log10 of a positive scalar node.
    pub fn log10(&mut self, a: Var) -> Var {
        let av = self.scalar(a);
        assert!(av > 0.0, "log10 of non-positive value {av}");
        let v = ndarray::arr0(av.log10()).into_dyn();
        self.push(
            v,
            vec![a],
            Some(Box::new(move |vals, g| {
                let gs = g.iter().next().copied().unwrap();
                let avv = vals[a.0].iter().next().copied().unwrap();
                vec![ndarray::arr0(gs / (avv * LN10)).into_dyn()]
            })),
        )
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, x: Var) -> Var {
        let v = ndarray::arr0(self.value(x).sum()).into_dyn();
        let shape = self.value(x).raw_dim();
        self.push(
            v,
            vec![x],
            Some(Box::new(move |_, g| {
                let gs = g.iter().next().copied().unwrap();
                vec![ArrayD::from_elem(shape.clone(), gs)]
            })),
        )
    }

    /// Cross-entropy of a 1-D logits node against an integer label:
    /// `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Var {
        let lv = self
            .value(logits)
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        assert!(label < lv.len(), "label out of range");
        let m = lv.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + lv.mapv(|x| (x - m).exp()).sum().ln();
        let v = ndarray::arr0(lse - lv[label]).into_dyn();
        self.push(
            v,
            vec![logits],
            Some(Box::new(move |vals, g| {
                let gs = g.iter().next().copied().unwrap();
                let lv = vals[logits.0].view().into_dimensionality::<Ix1>().unwrap();
                let m = lv.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let exps = lv.mapv(|x| (x - m).exp());
                let z = exps.sum();
                let mut gx = exps.mapv(|e| gs * e / z);
                gx[label] -= gs;
                vec![gx.into_dyn()]
            })),
        )
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
