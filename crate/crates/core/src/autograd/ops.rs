use ndarray::{concatenate, ArrayD, Axis, Ix2, IxDyn, Slice, Zip};

use super::{Array, Var};

/// Sums a broadcast gradient back down to `shape`.
pub(crate) fn reduce_to(mut g: Array, shape: &[usize]) -> Array {
    while g.ndim() > shape.len() {
        g = g.sum_axis(Axis(0));
    }
    for (ax, &d) in shape.iter().enumerate() {
        if d == 1 && g.shape()[ax] != 1 {
            g = g.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    g
}

fn unary(x: &Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var {
    let out = x.value().mapv(f);
    let out_c = out.clone();
    Var::from_op(out, vec![x.clone()], move |g, sink| {
        let mut dx = g.clone();
        Zip::from(&mut dx)
            .and(sink.value(0))
            .and(&out_c)
            .for_each(|d, &x, &y| *d *= df(x, y));
        sink.add(0, dx);
    })
}

impl Var {
    pub fn add(&self, other: &Var) -> Var {
        let out = self.value() + other.value();
        Var::from_op(out, vec![self.clone(), other.clone()], |g, sink| {
            for i in 0..2 {
                if sink.needs(i) {
                    let shape = sink.value(i).shape().to_vec();
                    sink.add(i, reduce_to(g.clone(), &shape));
                }
            }
        })
    }

    pub fn sub(&self, other: &Var) -> Var {
        let out = self.value() - other.value();
        Var::from_op(out, vec![self.clone(), other.clone()], |g, sink| {
            if sink.needs(0) {
                let shape = sink.value(0).shape().to_vec();
                sink.add(0, reduce_to(g.clone(), &shape));
            }
            if sink.needs(1) {
                let shape = sink.value(1).shape().to_vec();
                sink.add(1, reduce_to(-g, &shape));
            }
        })
    }

    pub fn mul(&self, other: &Var) -> Var {
        let out = self.value() * other.value();
        Var::from_op(out, vec![self.clone(), other.clone()], |g, sink| {
            if sink.needs(0) {
                let shape = sink.value(0).shape().to_vec();
                let d = g * sink.value(1);
                sink.add(0, reduce_to(d, &shape));
            }
            if sink.needs(1) {
                let shape = sink.value(1).shape().to_vec();
                let d = g * sink.value(0);
                sink.add(1, reduce_to(d, &shape));
            }
        })
    }

    pub fn div(&self, other: &Var) -> Var {
        let out = self.value() / other.value();
        Var::from_op(out, vec![self.clone(), other.clone()], |g, sink| {
            if sink.needs(0) {
                let shape = sink.value(0).shape().to_vec();
                let d = g / sink.value(1);
                sink.add(0, reduce_to(d, &shape));
            }
            if sink.needs(1) {
                let shape = sink.value(1).shape().to_vec();
                let b = sink.value(1);
                let d = -(g * sink.value(0)) / &(b * b);
                sink.add(1, reduce_to(d, &shape));
            }
        })
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn scale(&self, k: f64) -> Var {
        let out = self.value() * k;
        Var::from_op(out, vec![self.clone()], move |g, sink| sink.add(0, g * k))
    }

    pub fn add_scalar(&self, k: f64) -> Var {
        let out = self.value() + k;
        Var::from_op(out, vec![self.clone()], |g, sink| sink.add(0, g.clone()))
    }

    /// 2-D matrix product `[n, k] x [k, m]`.
    pub fn matmul(&self, other: &Var) -> Var {
        let a = self.value().view().into_dimensionality::<Ix2>().expect("matmul lhs must be 2-D");
        let b = other.value().view().into_dimensionality::<Ix2>().expect("matmul rhs must be 2-D");
        assert_eq!(a.ncols(), b.nrows(), "matmul inner dimensions differ");
        let out = a.dot(&b).into_dyn();
        Var::from_op(out, vec![self.clone(), other.clone()], |g, sink| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            if sink.needs(0) {
                let b = sink.value(1).view().into_dimensionality::<Ix2>().unwrap();
                let d = g2.dot(&b.t()).into_dyn();
                sink.add(0, d);
            }
            if sink.needs(1) {
                let a = sink.value(0).view().into_dimensionality::<Ix2>().unwrap();
                let d = a.t().dot(&g2).into_dyn();
                sink.add(1, d);
            }
        })
    }

    /// Swaps the two axes of a 2-D value.
    pub fn t(&self) -> Var {
        self.permute(&[1, 0])
    }

    pub fn permute(&self, axes: &[usize]) -> Var {
        let out = self.value().clone().permuted_axes(IxDyn(axes)).as_standard_layout().to_owned();
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Var::from_op(out, vec![self.clone()], move |g, sink| {
            let d = g.clone().permuted_axes(IxDyn(&inverse)).as_standard_layout().to_owned();
            sink.add(0, d);
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let out = self
            .value()
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch");
        Var::from_op(out, vec![self.clone()], |g, sink| {
            let shape = sink.value(0).shape().to_vec();
            let d = g
                .as_standard_layout()
                .to_owned()
                .into_shape_with_order(IxDyn(&shape))
                .unwrap();
            sink.add(0, d);
        })
    }

    pub fn sum_all(&self) -> Var {
        let out = ArrayD::from_elem(IxDyn(&[]), self.value().sum());
        Var::from_op(out, vec![self.clone()], |g, sink| {
            let gv = *g.iter().next().unwrap();
            let d = ArrayD::from_elem(sink.value(0).raw_dim(), gv);
            sink.add(0, d);
        })
    }

    pub fn mean_all(&self) -> Var {
        let n = self.value().len().max(1) as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum over `axis`, keeping it as a length-1 axis.
    pub fn sum_axis_keep(&self, axis: usize) -> Var {
        let out = self.value().sum_axis(Axis(axis)).insert_axis(Axis(axis));
        Var::from_op(out, vec![self.clone()], move |g, sink| {
            let d = g.broadcast(sink.value(0).raw_dim()).unwrap().to_owned();
            sink.add(0, d);
        })
    }

    pub fn mean_axis_keep(&self, axis: usize) -> Var {
        let n = self.shape()[axis].max(1) as f64;
        self.sum_axis_keep(axis).scale(1.0 / n)
    }

    /// Maximum over `axis`, keeping it as a length-1 axis. The gradient flows
    /// to the first maximal element.
    pub fn max_axis_keep(&self, axis: usize) -> Var {
        let x = self.value();
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = 1;
        let mut out = ArrayD::zeros(IxDyn(&out_shape));
        let mut argmax = ArrayD::<usize>::zeros(IxDyn(&out_shape));
        Zip::from(out.lanes_mut(Axis(axis)))
            .and(argmax.lanes_mut(Axis(axis)))
            .and(x.lanes(Axis(axis)))
            .for_each(|mut o, mut a, lane| {
                let mut best = f64::NEG_INFINITY;
                let mut idx = 0;
                for (i, &v) in lane.iter().enumerate() {
                    if v > best {
                        best = v;
                        idx = i;
                    }
                }
                o[0] = best;
                a[0] = idx;
            });
        Var::from_op(out, vec![self.clone()], move |g, sink| {
            let mut d = ArrayD::zeros(sink.value(0).raw_dim());
            Zip::from(d.lanes_mut(Axis(axis)))
                .and(argmax.lanes(Axis(axis)))
                .and(g.lanes(Axis(axis)))
                .for_each(|mut dl, a, gl| dl[a[0]] += gl[0]);
            sink.add(0, d);
        })
    }

    pub fn abs(&self) -> Var {
        unary(self, f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn square(&self) -> Var {
        unary(self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&self) -> Var {
        unary(self, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(&self) -> Var {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Var {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn tanh(&self) -> Var {
        unary(self, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Var {
        unary(self, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn relu(&self) -> Var {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        unary(
            self,
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// ELU with alpha = 1.
    pub fn elu(&self) -> Var {
        unary(
            self,
            |x| if x > 0.0 { x } else { x.exp_m1() },
            |x, y| if x > 0.0 { 1.0 } else { y + 1.0 },
        )
    }

    /// Contiguous sub-range `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let slice = Slice::from(start..start + len);
        let out = self.value().slice_axis(Axis(axis), slice).to_owned();
        Var::from_op(out, vec![self.clone()], move |g, sink| {
            let buf = sink.slot(0);
            let mut view = buf.slice_axis_mut(Axis(axis), slice);
            view += g;
        })
    }

    /// Concatenation along `axis`.
    pub fn concat(parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of zero parts");
        let views: Vec<_> = parts.iter().map(|p| p.value().view()).collect();
        let out = concatenate(Axis(axis), &views).expect("concat: incompatible shapes");
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        Var::from_op(out, parts.to_vec(), move |g, sink| {
            let mut offset = 0;
            for (i, &len) in lens.iter().enumerate() {
                if sink.needs(i) {
                    let piece = g.slice_axis(Axis(axis), Slice::from(offset..offset + len)).to_owned();
                    sink.add(i, piece);
                }
                offset += len;
            }
        })
    }

    /// Mean cross-entropy of `[batch, classes]` logits against class indices.
    pub fn cross_entropy(&self, targets: &[usize]) -> Var {
        let logits = self.value().view().into_dimensionality::<Ix2>().expect("logits must be 2-D");
        let (b, c) = logits.dim();
        assert_eq!(b, targets.len(), "cross_entropy: target count mismatch");
        let mut probs = ndarray::Array2::<f64>::zeros((b, c));
        let mut loss = 0.0;
        for (i, row) in logits.outer_iter().enumerate() {
            let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
            for j in 0..c {
                probs[[i, j]] = (row[j] - m).exp() / z;
            }
            loss -= row[targets[i]] - m - z.ln();
        }
        let out = ArrayD::from_elem(IxDyn(&[]), loss / b as f64);
        let targets = targets.to_vec();
        Var::from_op(out, vec![self.clone()], move |g, sink| {
            let gv = *g.iter().next().unwrap() / b as f64;
            let mut d = probs.clone();
            for (i, &t) in targets.iter().enumerate() {
                d[[i, t]] -= 1.0;
            }
            sink.add(0, (d * gv).into_dyn());
        })
    }

    /// Elementwise smooth-L1 (Huber with beta = 1) against a constant target,
    /// averaged over every element.
    pub fn smooth_l1(&self, target: &Array) -> Var {
        assert_eq!(self.shape(), target.shape(), "smooth_l1: shape mismatch");
        let diff = self.value() - target;
        let n = diff.len().max(1) as f64;
        let loss: f64 = diff.iter().map(|&d| smooth_l1_elem(d)).sum::<f64>() / n;
        let out = ArrayD::from_elem(IxDyn(&[]), loss);
        Var::from_op(out, vec![self.clone()], move |g, sink| {
            let gv = *g.iter().next().unwrap() / n;
            let d = diff.mapv(|d| gv * d.clamp(-1.0, 1.0));
            sink.add(0, d);
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn smooth_l1_elem(d: f64) -> f64 {
    let a = d.abs();
    if a < 1.0 {
        0.5 * d * d
    } else {
        a - 0.5
    }
}
