//! 2-D convolution kernels over `[batch, channels, height, width]` arrays and
//! the differentiable ops built from them (convolution, transposed
//! convolution, average pooling, batch normalisation).
//!
//! Kernels lower each output row to a matrix product and are parallelised
//! over batch elements, so results do not depend on the thread count.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayD, ArrayView2, ArrayViewMut2, IxDyn};
use rayon::prelude::*;

use super::{Array, Var};

/// Stride, zero padding, dilation and grouping of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: [usize; 2],
    /// top, bottom, left, right
    pub padding: [usize; 4],
    pub dilation: [usize; 2],
    pub groups: usize,
}

impl Default for ConvParams {
    fn default() -> Self {
        ConvParams {
            stride: [1, 1],
            padding: [0; 4],
            dilation: [1, 1],
            groups: 1,
        }
    }
}

impl ConvParams {
    pub fn valid() -> Self {
        Self::default()
    }

    /// Stride-1 padding that keeps the spatial size; an odd total pad puts the
    /// extra element at the bottom/right.
    pub fn same(kernel: [usize; 2], dilation: [usize; 2]) -> Self {
        let th = dilation[0] * (kernel[0] - 1);
        let tw = dilation[1] * (kernel[1] - 1);
        ConvParams {
            stride: [1, 1],
            padding: [th / 2, th - th / 2, tw / 2, tw - tw / 2],
            dilation,
            groups: 1,
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_stride(mut self, stride: [usize; 2]) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: [usize; 4]) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_dilation(mut self, dilation: [usize; 2]) -> Self {
        self.dilation = dilation;
        self
    }
}

/// Output length of a convolution along one axis, `None` when the dilated
/// kernel does not fit in the padded input.
pub fn conv2d_output_len(
    input: usize,
    kernel: usize,
    stride: usize,
    pad_lo: usize,
    pad_hi: usize,
    dilation: usize,
) -> Option<usize> {
    let padded = input + pad_lo + pad_hi;
    let span = dilation * (kernel - 1) + 1;
    if kernel == 0 || stride == 0 || padded < span {
        None
    } else {
        Some((padded - span) / stride + 1)
    }
}

/// Output length of a transposed convolution along one axis.
pub fn conv_transpose2d_output_len(
    input: usize,
    kernel: usize,
    stride: usize,
    pad_lo: usize,
    pad_hi: usize,
    dilation: usize,
    output_padding: usize,
) -> Option<usize> {
    let full = (input.checked_sub(1)?) * stride + dilation * (kernel - 1) + 1 + output_padding;
    full.checked_sub(pad_lo + pad_hi)
}

struct Geometry {
    b: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    cin_g: usize,
    cout_g: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn geometry(x_shape: &[usize], w_shape: &[usize], p: &ConvParams) -> Geometry {
    assert_eq!(x_shape.len(), 4, "conv input must be [batch, channels, height, width]");
    assert_eq!(w_shape.len(), 4, "conv weight must be [out, in/groups, kh, kw]");
    let (b, cin, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (cout, cin_g, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
    assert!(p.groups > 0 && cin % p.groups == 0, "input channels not divisible by groups");
    assert_eq!(cin / p.groups, cin_g, "weight in-channels do not match input/groups");
    assert_eq!(cout % p.groups, 0, "output channels not divisible by groups");
    let ho = conv2d_output_len(h, kh, p.stride[0], p.padding[0], p.padding[1], p.dilation[0])
        .expect("conv kernel footprint exceeds padded input height");
    let wo = conv2d_output_len(w, kw, p.stride[1], p.padding[2], p.padding[3], p.dilation[1])
        .expect("conv kernel footprint exceeds padded input width");
    Geometry {
        b,
        cin,
        h,
        w,
        cout,
        cin_g,
        cout_g: cout / p.groups,
        kh,
        kw,
        ho,
        wo,
    }
}

/// Output columns `[lo, hi)` whose input column `oj * stride + offset - pad`
/// lands inside `[0, width)`.
#[inline]
fn valid_cols(offset: usize, pad: usize, stride: usize, width: usize, out_w: usize) -> (usize, usize) {
    let lo = if pad > offset { (pad - offset).div_ceil(stride) } else { 0 };
    let top = width + pad;
    if top <= offset {
        return (0, 0);
    }
    let hi = ((top - 1 - offset) / stride + 1).min(out_w);
    (lo.min(hi), hi)
}

#[inline]
fn input_row(oi: usize, ki: usize, p: &ConvParams, h: usize) -> Option<usize> {
    let r = (oi * p.stride[0] + ki * p.dilation[0]) as isize - p.padding[0] as isize;
    (r >= 0 && (r as usize) < h).then_some(r as usize)
}

/// Fills `col` (`[cin_g * kh * kw, wo]`, row-major) with the input patches
/// of one output row `oi` for group `grp`. `xb` holds every channel of one
/// batch element.
fn fill_row_patches(col: &mut [f64], xb: &[f64], g: &Geometry, p: &ConvParams, grp: usize, oi: usize) {
    for cl in 0..g.cin_g {
        let plane = &xb[(grp * g.cin_g + cl) * g.h * g.w..][..g.h * g.w];
        for ki in 0..g.kh {
            let r = input_row(oi, ki, p, g.h);
            for kj in 0..g.kw {
                let dst = &mut col[((cl * g.kh + ki) * g.kw + kj) * g.wo..][..g.wo];
                dst.fill(0.0);
                let Some(r) = r else { continue };
                let off = kj * p.dilation[1];
                let (lo, hi) = valid_cols(off, p.padding[2], p.stride[1], g.w, g.wo);
                if lo >= hi {
                    continue;
                }
                let xrow = &plane[r * g.w..][..g.w];
                let start = lo * p.stride[1] + off - p.padding[2];
                for (d, &s) in dst[lo..hi].iter_mut().zip(xrow[start..].iter().step_by(p.stride[1])) {
                    *d = s;
                }
            }
        }
    }
}

/// Adds the patch gradients in `col` back onto the input planes of `dxb`;
/// the adjoint of [`fill_row_patches`].
fn scatter_row_patches(col: &[f64], dxb: &mut [f64], g: &Geometry, p: &ConvParams, grp: usize, oi: usize) {
    for cl in 0..g.cin_g {
        let plane = &mut dxb[(grp * g.cin_g + cl) * g.h * g.w..][..g.h * g.w];
        for ki in 0..g.kh {
            let Some(r) = input_row(oi, ki, p, g.h) else { continue };
            for kj in 0..g.kw {
                let src = &col[((cl * g.kh + ki) * g.kw + kj) * g.wo..][..g.wo];
                let off = kj * p.dilation[1];
                let (lo, hi) = valid_cols(off, p.padding[2], p.stride[1], g.w, g.wo);
                if lo >= hi {
                    continue;
                }
                let xrow = &mut plane[r * g.w..][..g.w];
                let start = lo * p.stride[1] + off - p.padding[2];
                for (d, &s) in xrow[start..].iter_mut().step_by(p.stride[1]).zip(&src[lo..hi]) {
                    *d += s;
                }
            }
        }
    }
}

/// Direct 2-D convolution (cross-correlation, as in every deep learning
/// framework). `x`: `[B, Cin, H, W]`, `w`: `[Cout, Cin/groups, KH, KW]`.
///
/// Each output row is one matrix product of the group's weights with the
/// row's input patches. Work is split over batch elements only, so sums
/// never depend on the thread count.
pub fn conv2d_forward(x: &Array, w: &Array, p: &ConvParams) -> Array {
    let g = geometry(x.shape(), w.shape(), p);
    let x = x.as_standard_layout();
    let w = w.as_standard_layout();
    let xs = x.as_slice().unwrap();
    let k = g.cin_g * g.kh * g.kw;
    let wm = ArrayView2::from_shape((g.cout, k), w.as_slice().unwrap()).unwrap();
    let plane_out = g.cout * g.ho * g.wo;
    let mut out = vec![0.0; g.b * plane_out];
    if plane_out > 0 {
        out.par_chunks_mut(plane_out).enumerate().for_each(|(bi, ob)| {
            let xb = &xs[bi * g.cin * g.h * g.w..][..g.cin * g.h * g.w];
            let mut col = vec![0.0; k * g.wo];
            let mut om = ArrayViewMut2::from_shape((g.cout, g.ho * g.wo), ob).unwrap();
            for grp in 0..g.cout / g.cout_g {
                let wg = wm.slice(s![grp * g.cout_g..(grp + 1) * g.cout_g, ..]);
                for oi in 0..g.ho {
                    fill_row_patches(&mut col, xb, &g, p, grp, oi);
                    let cm = ArrayView2::from_shape((k, g.wo), &col[..]).unwrap();
                    let mut dst = om.slice_mut(s![grp * g.cout_g..(grp + 1) * g.cout_g, oi * g.wo..(oi + 1) * g.wo]);
                    general_mat_mul(1.0, &wg, &cm, 0.0, &mut dst);
                }
            }
        });
    }
    ArrayD::from_shape_vec(IxDyn(&[g.b, g.cout, g.ho, g.wo]), out).unwrap()
}

/// Gradient of [`conv2d_forward`] with respect to its input, i.e. the
/// transposed convolution of `dout` with `w`.
pub fn conv2d_backward_input(dout: &Array, w: &Array, p: &ConvParams, input_shape: &[usize]) -> Array {
    let g = geometry(input_shape, w.shape(), p);
    assert_eq!(dout.shape(), &[g.b, g.cout, g.ho, g.wo], "conv backward: gradient shape mismatch");
    let d = dout.as_standard_layout();
    let w = w.as_standard_layout();
    let ds = d.as_slice().unwrap();
    let k = g.cin_g * g.kh * g.kw;
    let wm = ArrayView2::from_shape((g.cout, k), w.as_slice().unwrap()).unwrap();
    let plane_in = g.cin * g.h * g.w;
    let mut dx = vec![0.0; g.b * plane_in];
    if plane_in > 0 && g.ho * g.wo > 0 {
        dx.par_chunks_mut(plane_in).enumerate().for_each(|(bi, dxb)| {
            let dm = ArrayView2::from_shape((g.cout, g.ho * g.wo), &ds[bi * g.cout * g.ho * g.wo..][..g.cout * g.ho * g.wo])
                .unwrap();
            let mut col = Array2::<f64>::zeros((k, g.wo));
            for grp in 0..g.cout / g.cout_g {
                let wg = wm.slice(s![grp * g.cout_g..(grp + 1) * g.cout_g, ..]);
                for oi in 0..g.ho {
                    let dg = dm.slice(s![grp * g.cout_g..(grp + 1) * g.cout_g, oi * g.wo..(oi + 1) * g.wo]);
                    general_mat_mul(1.0, &wg.t(), &dg, 0.0, &mut col);
                    scatter_row_patches(col.as_slice().unwrap(), dxb, &g, p, grp, oi);
                }
            }
        });
    }
    ArrayD::from_shape_vec(IxDyn(input_shape), dx).unwrap()
}

/// Gradient of [`conv2d_forward`] with respect to its weight.
pub fn conv2d_backward_weight(x: &Array, dout: &Array, p: &ConvParams, weight_shape: &[usize]) -> Array {
    let g = geometry(x.shape(), weight_shape, p);
    assert_eq!(dout.shape(), &[g.b, g.cout, g.ho, g.wo], "conv backward: gradient shape mismatch");
    let x = x.as_standard_layout();
    let d = dout.as_standard_layout();
    let xs = x.as_slice().unwrap();
    let ds = d.as_slice().unwrap();
    let k = g.cin_g * g.kh * g.kw;
    let partials: Vec<Array2<f64>> = (0..g.b)
        .into_par_iter()
        .map(|bi| {
            let mut dw = Array2::<f64>::zeros((g.cout, k));
            if g.ho * g.wo == 0 {
                return dw;
            }
            let xb = &xs[bi * g.cin * g.h * g.w..][..g.cin * g.h * g.w];
            let dm = ArrayView2::from_shape((g.cout, g.ho * g.wo), &ds[bi * g.cout * g.ho * g.wo..][..g.cout * g.ho * g.wo])
                .unwrap();
            let mut col = vec![0.0; k * g.wo];
            for grp in 0..g.cout / g.cout_g {
                let rows = grp * g.cout_g..(grp + 1) * g.cout_g;
                for oi in 0..g.ho {
                    fill_row_patches(&mut col, xb, &g, p, grp, oi);
                    let cm = ArrayView2::from_shape((k, g.wo), &col[..]).unwrap();
                    let dg = dm.slice(s![rows.clone(), oi * g.wo..(oi + 1) * g.wo]);
                    let mut dst = dw.slice_mut(s![rows.clone(), ..]);
                    general_mat_mul(1.0, &dg, &cm.t(), 1.0, &mut dst);
                }
            }
            dw
        })
        .collect();
    let mut total = Array2::<f64>::zeros((g.cout, k));
    for part in &partials {
        total += part;
    }
    total.into_shape_with_order(IxDyn(weight_shape)).unwrap()
}

impl Var {
    /// 2-D convolution with optional per-output-channel bias.
    pub fn conv2d(&self, weight: &Var, bias: Option<&Var>, p: ConvParams) -> Var {
        let out = conv2d_forward(self.value(), weight.value(), &p);
        let y = Var::from_op(out, vec![self.clone(), weight.clone()], move |g, sink| {
            if sink.needs(0) {
                let shape = sink.value(0).shape().to_vec();
                let d = conv2d_backward_input(g, sink.value(1), &p, &shape);
                sink.add(0, d);
            }
            if sink.needs(1) {
                let wshape = sink.value(1).shape().to_vec();
                let d = conv2d_backward_weight(sink.value(0), g, &p, &wshape);
                sink.add(1, d);
            }
        });
        match bias {
            Some(b) => y.add(&b.reshape(&[1, b.shape()[0], 1, 1])),
            None => y,
        }
    }

    /// Transposed convolution; `weight` is `[Cin, Cout/groups, KH, KW]` and
    /// `output_padding` extends the bottom/right edge.
    pub fn conv_transpose2d(
        &self,
        weight: &Var,
        bias: Option<&Var>,
        p: ConvParams,
        output_padding: [usize; 2],
    ) -> Var {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 4, "conv_transpose input must be 4-D");
        assert_eq!(ws[0], xs[1], "conv_transpose weight in-channels mismatch");
        assert!(
            output_padding[0] < p.stride[0] && output_padding[1] < p.stride[1],
            "output padding must be smaller than the stride"
        );
        let ho = conv_transpose2d_output_len(xs[2], ws[2], p.stride[0], p.padding[0], p.padding[1], p.dilation[0], output_padding[0])
            .expect("conv_transpose: empty output height");
        let wo = conv_transpose2d_output_len(xs[3], ws[3], p.stride[1], p.padding[2], p.padding[3], p.dilation[1], output_padding[1])
            .expect("conv_transpose: empty output width");
        // A stride-s convolution with padding p maps the output shape back to
        // the input shape exactly whenever output_padding < s.
        let out_shape = [xs[0], ws[1] * p.groups, ho, wo];
        let out = conv2d_backward_input(self.value(), weight.value(), &p, &out_shape);
        let y = Var::from_op(out, vec![self.clone(), weight.clone()], move |g, sink| {
            if sink.needs(0) {
                let d = conv2d_forward(g, sink.value(1), &p);
                sink.add(0, d);
            }
            if sink.needs(1) {
                let wshape = sink.value(1).shape().to_vec();
                let d = conv2d_backward_weight(g, sink.value(0), &p, &wshape);
                sink.add(1, d);
            }
        });
        match bias {
            Some(b) => y.add(&b.reshape(&[1, b.shape()[0], 1, 1])),
            None => y,
        }
    }

    /// Non-overlapping average pooling (stride equals the window); trailing
    /// rows/columns that do not fill a window are dropped.
    pub fn avg_pool2d(&self, kernel: [usize; 2]) -> Var {
        let s = self.shape();
        assert_eq!(s.len(), 4, "avg_pool2d input must be 4-D");
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (kh, kw) = (kernel[0], kernel[1]);
        let (ho, wo) = (h / kh, w / kw);
        let x = self.value().as_standard_layout();
        let xs = x.as_slice().unwrap();
        let inv = 1.0 / (kh * kw) as f64;
        let mut out = vec![0.0; b * c * ho * wo];
        for (plane_idx, o) in out.chunks_mut(ho * wo.max(1)).enumerate().take(b * c) {
            let plane = &xs[plane_idx * h * w..][..h * w];
            for oi in 0..ho {
                for oj in 0..wo {
                    let mut acc = 0.0;
                    for ki in 0..kh {
                        let row = &plane[(oi * kh + ki) * w + oj * kw..][..kw];
                        acc += row.iter().sum::<f64>();
                    }
                    o[oi * wo + oj] = acc * inv;
                }
            }
        }
        let out = ArrayD::from_shape_vec(IxDyn(&[b, c, ho, wo]), out).unwrap();
        Var::from_op(out, vec![self.clone()], move |g, sink| {
            let g = g.as_standard_layout();
            let gs = g.as_slice().unwrap();
            let mut dx = vec![0.0; b * c * h * w];
            for plane_idx in 0..b * c {
                let gp = &gs[plane_idx * ho * wo..][..ho * wo];
                let dp = &mut dx[plane_idx * h * w..][..h * w];
                for oi in 0..ho {
                    for oj in 0..wo {
                        let v = gp[oi * wo + oj] * inv;
                        for ki in 0..kh {
                            for x in &mut dp[(oi * kh + ki) * w + oj * kw..][..kw] {
                                *x += v;
                            }
                        }
                    }
                }
            }
            sink.add(0, ArrayD::from_shape_vec(IxDyn(&[b, c, h, w]), dx).unwrap());
        })
    }

    /// Training-mode batch normalisation over `[B, C, H, W]` using batch
    /// statistics. Returns the normalised output together with the batch
    /// mean and biased variance per channel.
    pub fn batch_norm2d(&self, gamma: &Var, beta: &Var, eps: f64) -> (Var, Vec<f64>, Vec<f64>) {
        let s = self.shape().to_vec();
        assert_eq!(s.len(), 4, "batch_norm2d input must be 4-D");
        let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
        let n = (b * hw) as f64;
        let x = self.value().as_standard_layout().to_owned();
        let xs = x.as_slice().unwrap();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut acc = 0.0;
            for bi in 0..b {
                acc += xs[(bi * c + ch) * hw..][..hw].iter().sum::<f64>();
            }
            mean[ch] = acc / n;
            let mut acc2 = 0.0;
            for bi in 0..b {
                acc2 += xs[(bi * c + ch) * hw..][..hw].iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
            }
            var[ch] = acc2 / n;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let gam = gamma.value().iter().copied().collect::<Vec<_>>();
        let bet = beta.value().iter().copied().collect::<Vec<_>>();
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * hw;
                for k in 0..hw {
                    let xh = (xs[base + k] - mean[ch]) * inv_std[ch];
                    xhat[base + k] = xh;
                    out[base + k] = gam[ch] * xh + bet[ch];
                }
            }
        }
        let out = ArrayD::from_shape_vec(IxDyn(&s), out).unwrap();
        let shape = s.clone();
        let y = Var::from_op(out, vec![self.clone(), gamma.clone(), beta.clone()], move |g, sink| {
            let g = g.as_standard_layout();
            let gs = g.as_slice().unwrap();
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for bi in 0..b {
                for ch in 0..c {
                    let base = (bi * c + ch) * hw;
                    for k in 0..hw {
                        dgamma[ch] += gs[base + k] * xhat[base + k];
                        dbeta[ch] += gs[base + k];
                    }
                }
            }
            if sink.needs(0) {
                let gam: Vec<f64> = sink.value(1).iter().copied().collect();
                let mut dx = vec![0.0; gs.len()];
                for ch in 0..c {
                    // dxhat = g * gamma; sums over the channel
                    let sum_dxhat = dbeta[ch] * gam[ch];
                    let sum_dxhat_xhat = dgamma[ch] * gam[ch];
                    for bi in 0..b {
                        let base = (bi * c + ch) * hw;
                        for k in 0..hw {
                            let dxhat = gs[base + k] * gam[ch];
                            dx[base + k] = inv_std[ch] / n
                                * (n * dxhat - sum_dxhat - xhat[base + k] * sum_dxhat_xhat);
                        }
                    }
                }
                sink.add(0, ArrayD::from_shape_vec(IxDyn(&shape), dx).unwrap());
            }
            if sink.needs(1) {
                sink.add(1, ArrayD::from_shape_vec(IxDyn(&[c]), dgamma).unwrap());
            }
            if sink.needs(2) {
                sink.add(2, ArrayD::from_shape_vec(IxDyn(&[c]), dbeta).unwrap());
            }
        });
        (y, mean, var)
    }
}
