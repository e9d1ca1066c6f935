//! Forward kernels and their vector-Jacobian products.
//!
//! Every output element is reduced in a fixed order (channel-major, then
//! kernel row, then kernel column for convolution), so parallel and serial
//! execution produce identical bits. rayon only splits work across
//! independent output elements.

use rayon::prelude::*;

use super::{Edge, Result, Shape, Tensor, TensorError};

/// Work threshold (in multiply-adds) below which the convolution kernels
/// stay on the calling thread; splitting tiny problems costs more than it
/// saves and the result is bit-identical either way.
const PAR_MIN_WORK: usize = 1 << 15;

/// Weights, bias, and zero-padding of one convolution layer.
///
/// `weight` has shape `(c_out, c_in, k_h, k_w)`; `bias` has shape
/// `(1, c_out, 1, 1)`. Stride is always 1.
#[derive(Clone)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub padding: (usize, usize),
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Tensor, padding: (usize, usize)) -> Result<ConvParams> {
        let w = weight.shape();
        if w.n == 0 || w.c == 0 || w.h == 0 || w.w == 0 {
            return Err(TensorError::BadWeightShape(w));
        }
        let expected_bias = Shape::new(1, w.n, 1, 1);
        if bias.shape() != expected_bias {
            return Err(TensorError::BadBiasShape {
                c_out: w.n,
                got: bias.shape(),
            });
        }
        Ok(ConvParams {
            weight,
            bias,
            padding,
        })
    }

    /// Same-size mode: zero padding of `((k_h-1)/2, (k_w-1)/2)` so the
    /// spatial extents are preserved. Rejects even kernels, for which no
    /// symmetric padding exists.
    pub fn same_size(weight: Tensor, bias: Tensor) -> Result<ConvParams> {
        let w = weight.shape();
        if w.h % 2 == 0 || w.w % 2 == 0 {
            return Err(TensorError::EvenKernel { kh: w.h, kw: w.w });
        }
        let padding = ((w.h - 1) / 2, (w.w - 1) / 2);
        ConvParams::new(weight, bias, padding)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c
    }

    pub fn kernel(&self) -> (usize, usize) {
        let w = self.weight.shape();
        (w.h, w.w)
    }

    /// Number of scalar parameters (weights plus biases).
    pub fn parameter_count(&self) -> usize {
        self.weight.shape().count() + self.bias.shape().count()
    }
}

impl Tensor {
    /// 2-D convolution with stride 1 and zero padding.
    pub fn conv2d(&self, params: &ConvParams) -> Result<Tensor> {
        let in_shape = self.shape();
        let w_shape = params.weight.shape();
        if in_shape.c != w_shape.c {
            return Err(TensorError::ChannelMismatch {
                input: in_shape.c,
                weight: w_shape.c,
            });
        }
        let (ph, pw) = params.padding;
        let padded_h = in_shape.h + 2 * ph;
        let padded_w = in_shape.w + 2 * pw;
        if padded_h < w_shape.h || padded_w < w_shape.w {
            return Err(TensorError::KernelTooLarge {
                padded_h,
                padded_w,
                kh: w_shape.h,
                kw: w_shape.w,
            });
        }
        let out_shape = Shape::new(
            in_shape.n,
            w_shape.n,
            padded_h - w_shape.h + 1,
            padded_w - w_shape.w + 1,
        );
        let values = self.with_values(|input| {
            params.weight.with_values(|weight| {
                params.bias.with_values(|bias| {
                    conv2d_forward(
                        input,
                        in_shape,
                        weight,
                        w_shape,
                        bias,
                        (ph, pw),
                        out_shape,
                    )
                })
            })
        });
        Ok(Tensor::from_op(
            out_shape,
            values,
            Edge::Conv2d {
                input: self.clone(),
                weight: params.weight.clone(),
                bias: params.bias.clone(),
                padding: (ph, pw),
            },
        ))
    }

    /// Elementwise `max(0, x)`.
    pub fn relu(&self) -> Tensor {
        let values = self.with_values(|v| v.iter().map(|&x| x.max(0.0)).collect());
        Tensor::from_op(
            self.shape(),
            values,
            Edge::Relu {
                input: self.clone(),
            },
        )
    }

    /// Elementwise sum of two tensors of identical shape.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                context: "add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let values = self.with_values(|a| {
            other.with_values(|b| a.iter().zip(b).map(|(x, y)| x + y).collect())
        });
        Ok(Tensor::from_op(
            self.shape(),
            values,
            Edge::Add {
                lhs: self.clone(),
                rhs: other.clone(),
            },
        ))
    }

    /// Depth-to-space rearrangement: `(n, c, h, w)` with `c` divisible by
    /// `r^2` becomes `(n, c/r^2, h*r, w*r)`. Sub-pixel index within each
    /// output cell is row-major, i.e. source channel `o*r^2 + dy*r + dx`
    /// lands at output offset `(dy, dx)`.
    pub fn pixel_shuffle(&self, upscale: usize) -> Result<Tensor> {
        if upscale == 0 {
            return Err(TensorError::ZeroUpscale);
        }
        let s = self.shape();
        let r2 = upscale * upscale;
        if s.c % r2 != 0 {
            return Err(TensorError::ShuffleChannels {
                channels: s.c,
                upscale,
            });
        }
        let out_shape = Shape::new(s.n, s.c / r2, s.h * upscale, s.w * upscale);
        let values = self.with_values(|input| {
            let mut out = vec![0.0; out_shape.count()];
            for n in 0..s.n {
                for o in 0..out_shape.c {
                    for y in 0..s.h {
                        for x in 0..s.w {
                            for dy in 0..upscale {
                                for dx in 0..upscale {
                                    let src = s.offset(n, o * r2 + dy * upscale + dx, y, x);
                                    let dst = out_shape.offset(
                                        n,
                                        o,
                                        y * upscale + dy,
                                        x * upscale + dx,
                                    );
                                    out[dst] = input[src];
                                }
                            }
                        }
                    }
                }
            }
            out
        });
        Ok(Tensor::from_op(
            out_shape,
            values,
            Edge::PixelShuffle {
                input: self.clone(),
                upscale,
            },
        ))
    }

    /// Mean absolute error against a non-differentiable target; returns a
    /// scalar tensor.
    pub fn l1_loss(&self, target: &Tensor) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(TensorError::ShapeMismatch {
                context: "l1_loss",
                left: self.shape(),
                right: target.shape(),
            });
        }
        if target.requires_grad() {
            return Err(TensorError::DifferentiableTarget);
        }
        let value = self.with_values(|p| {
            target.with_values(|t| {
                let mut acc = 0.0;
                for (a, b) in p.iter().zip(t) {
                    acc += (a - b).abs();
                }
                acc / p.len() as f64
            })
        });
        Ok(Tensor::from_op(
            Shape::scalar(),
            vec![value],
            Edge::L1Loss {
                pred: self.clone(),
                target: target.clone(),
            },
        ))
    }

    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let value = self.with_values(|v| {
            let mut acc = 0.0;
            for x in v {
                acc += x;
            }
            acc
        });
        Tensor::from_op(
            Shape::scalar(),
            vec![value],
            Edge::Sum {
                input: self.clone(),
            },
        )
    }
}

/// Concatenate along the channel axis; all inputs must share `(n, h, w)`.
/// Channel blocks appear in argument order.
pub fn concat_channels(inputs: &[Tensor]) -> Result<Tensor> {
    let first = inputs.first().ok_or(TensorError::EmptyConcat)?;
    let base = first.shape();
    let mut total_c = 0;
    for t in inputs {
        let s = t.shape();
        if s.n != base.n || s.h != base.h || s.w != base.w {
            return Err(TensorError::ShapeMismatch {
                context: "concat_channels",
                left: base,
                right: s,
            });
        }
        total_c += s.c;
    }
    let out_shape = Shape::new(base.n, total_c, base.h, base.w);
    let plane = base.h * base.w;
    let mut out = vec![0.0; out_shape.count()];
    for n in 0..base.n {
        let mut c_base = 0;
        for t in inputs {
            let s = t.shape();
            t.with_values(|v| {
                let src_start = n * s.c * plane;
                let dst_start = (n * total_c + c_base) * plane;
                out[dst_start..dst_start + s.c * plane]
                    .copy_from_slice(&v[src_start..src_start + s.c * plane]);
            });
            c_base += s.c;
        }
    }
    Ok(Tensor::from_op(
        out_shape,
        out,
        Edge::ConcatChannels {
            inputs: inputs.to_vec(),
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward(
    input: &[f64],
    in_shape: Shape,
    weight: &[f64],
    w_shape: Shape,
    bias: &[f64],
    padding: (usize, usize),
    out_shape: Shape,
) -> Vec<f64> {
    let mut out = vec![0.0; out_shape.count()];
    let plane = out_shape.h * out_shape.w;
    let work = out_shape.count() * w_shape.c * w_shape.h * w_shape.w;
    let slab = |idx: usize, out_slab: &mut [f64]| {
        let n = idx / out_shape.c;
        let o = idx % out_shape.c;
        conv2d_forward_slab(
            input, in_shape, weight, w_shape, bias, padding, out_shape, n, o, out_slab,
        );
    };
    if work >= PAR_MIN_WORK && out_shape.n * out_shape.c > 1 {
        out.par_chunks_mut(plane).enumerate().for_each(|(idx, s)| slab(idx, s));
    } else {
        out.chunks_mut(plane).enumerate().for_each(|(idx, s)| slab(idx, s));
    }
    out
}

/// One `(n, o)` output plane. Each element starts from the bias and
/// accumulates input*weight products with channel-major, then kernel-row,
/// then kernel-column ordering; out-of-range taps are skipped, which is
/// equivalent to zero padding.
///
/// Interior pixels (full kernel support) run four output elements at a
/// time; the four accumulator chains are independent, so each element's
/// summation order is exactly that of the scalar path.
#[allow(clippy::too_many_arguments)]
#[inline]
fn conv2d_forward_slab(
    input: &[f64],
    in_shape: Shape,
    weight: &[f64],
    w_shape: Shape,
    bias: &[f64],
    (ph, pw): (usize, usize),
    out_shape: Shape,
    n: usize,
    o: usize,
    out_slab: &mut [f64],
) {
    let (kh, kw) = (w_shape.h, w_shape.w);
    let b = bias[o];

    let scalar = |x: usize, y: usize, dy_lo: usize, dy_hi: usize| -> f64 {
        let dx_lo = pw.saturating_sub(x);
        let dx_hi = kw.min((in_shape.w + pw).saturating_sub(x));
        let taps = dx_hi.saturating_sub(dx_lo);
        let mut acc = b;
        if taps > 0 {
            for i in 0..in_shape.c {
                let in_chan = (n * in_shape.c + i) * in_shape.h;
                let w_chan = (o * w_shape.c + i) * kh;
                for dy in dy_lo..dy_hi {
                    let yy = y + dy - ph;
                    let in_row = (in_chan + yy) * in_shape.w + x + dx_lo - pw;
                    let w_row = (w_chan + dy) * kw + dx_lo;
                    for (iv, wv) in input[in_row..in_row + taps]
                        .iter()
                        .zip(&weight[w_row..w_row + taps])
                    {
                        acc += iv * wv;
                    }
                }
            }
        }
        acc
    };

    // x with full horizontal kernel support: [pw, in_w + pw - kw + 1).
    let fast_lo = pw.min(out_shape.w);
    let fast_hi = (in_shape.w + pw + 1)
        .saturating_sub(kw)
        .min(out_shape.w)
        .max(fast_lo);

    for y in 0..out_shape.h {
        let dy_lo = ph.saturating_sub(y);
        let dy_hi = kh.min((in_shape.h + ph).saturating_sub(y));
        let row_out = y * out_shape.w;
        for x in 0..fast_lo {
            out_slab[row_out + x] = scalar(x, y, dy_lo, dy_hi);
        }
        let mut x = fast_lo;
        while x + 4 <= fast_hi {
            let mut acc = [b; 4];
            for i in 0..in_shape.c {
                let in_chan = (n * in_shape.c + i) * in_shape.h;
                let w_chan = (o * w_shape.c + i) * kh;
                for dy in dy_lo..dy_hi {
                    let yy = y + dy - ph;
                    let in_row = (in_chan + yy) * in_shape.w + x - pw;
                    let irow = &input[in_row..in_row + kw + 3];
                    let wrow = &weight[(w_chan + dy) * kw..(w_chan + dy) * kw + kw];
                    for (dx, wv) in wrow.iter().enumerate() {
                        acc[0] += irow[dx] * wv;
                        acc[1] += irow[dx + 1] * wv;
                        acc[2] += irow[dx + 2] * wv;
                        acc[3] += irow[dx + 3] * wv;
                    }
                }
            }
            out_slab[row_out + x..row_out + x + 4].copy_from_slice(&acc);
            x += 4;
        }
        for x in x..out_shape.w {
            out_slab[row_out + x] = scalar(x, y, dy_lo, dy_hi);
        }
    }
}

/// Gradient w.r.t. the convolution input: full correlation of the output
/// gradient with the kernel, reduced per element in (o, dy, dx) order.
pub(crate) fn conv2d_backward_input(
    grad_out: &[f64],
    out_shape: Shape,
    weight: &[f64],
    w_shape: Shape,
    in_shape: Shape,
    (ph, pw): (usize, usize),
) -> Vec<f64> {
    let mut grad_in = vec![0.0; in_shape.count()];
    let plane = in_shape.h * in_shape.w;
    let work = in_shape.count() * w_shape.n * w_shape.h * w_shape.w;
    let (kh, kw) = (w_shape.h, w_shape.w);
    let slab = |idx: usize, g_slab: &mut [f64]| {
        let n = idx / in_shape.c;
        let i = idx % in_shape.c;

        let scalar = |xx: usize, yy: usize, dy_lo: usize, dy_hi: usize| -> f64 {
            let dx_lo = (xx + pw + 1).saturating_sub(out_shape.w);
            let dx_hi = kw.min(xx + pw + 1);
            let taps = dx_hi.saturating_sub(dx_lo);
            let mut acc = 0.0;
            if taps > 0 {
                for o in 0..w_shape.n {
                    let g_chan = (n * out_shape.c + o) * out_shape.h;
                    let w_chan = (o * w_shape.c + i) * kh;
                    for dy in dy_lo..dy_hi {
                        let y = yy + ph - dy;
                        let g_row = (g_chan + y) * out_shape.w;
                        let w_row = (w_chan + dy) * kw;
                        // x runs opposite to dx: ascending dx reads the
                        // gradient row right-to-left.
                        let g_start = g_row + (xx + pw + 1 - dx_hi);
                        for (wv, gv) in weight[w_row + dx_lo..w_row + dx_hi]
                            .iter()
                            .zip(grad_out[g_start..g_start + taps].iter().rev())
                        {
                            acc += wv * gv;
                        }
                    }
                }
            }
            acc
        };

        // xx with full kernel support: x = xx + pw - dx stays inside the
        // gradient plane for every dx.
        let fast_lo = (kw.saturating_sub(pw + 1)).min(in_shape.w);
        let fast_hi = (out_shape.w.saturating_sub(pw))
            .min(in_shape.w)
            .max(fast_lo);

        for yy in 0..in_shape.h {
            // grad_out row y = yy + ph - dy must lie in [0, out_h).
            let dy_lo = (yy + ph + 1).saturating_sub(out_shape.h);
            let dy_hi = kh.min(yy + ph + 1);
            let row_out = yy * in_shape.w;
            for xx in 0..fast_lo {
                g_slab[row_out + xx] = scalar(xx, yy, dy_lo, dy_hi);
            }
            let mut xx = fast_lo;
            while xx + 4 <= fast_hi {
                let mut acc = [0.0f64; 4];
                for o in 0..w_shape.n {
                    let g_chan = (n * out_shape.c + o) * out_shape.h;
                    let w_chan = (o * w_shape.c + i) * kh;
                    for dy in dy_lo..dy_hi {
                        let y = yy + ph - dy;
                        let g_base = (g_chan + y) * out_shape.w + (xx + pw + 1 - kw);
                        let grow = &grad_out[g_base..g_base + kw + 3];
                        let w_row = (w_chan + dy) * kw;
                        let wrow = &weight[w_row..w_row + kw];
                        for (dx, wv) in wrow.iter().enumerate() {
                            let g_off = kw - 1 - dx;
                            acc[0] += wv * grow[g_off];
                            acc[1] += wv * grow[g_off + 1];
                            acc[2] += wv * grow[g_off + 2];
                            acc[3] += wv * grow[g_off + 3];
                        }
                    }
                }
                g_slab[row_out + xx..row_out + xx + 4].copy_from_slice(&acc);
                xx += 4;
            }
            for xx in xx..in_shape.w {
                g_slab[row_out + xx] = scalar(xx, yy, dy_lo, dy_hi);
            }
        }
    };
    if work >= PAR_MIN_WORK && in_shape.n * in_shape.c > 1 {
        grad_in.par_chunks_mut(plane).enumerate().for_each(|(idx, s)| slab(idx, s));
    } else {
        grad_in.chunks_mut(plane).enumerate().for_each(|(idx, s)| slab(idx, s));
    }
    grad_in
}

/// Gradient w.r.t. the kernel, reduced per weight element in (n, y, x) order.
pub(crate) fn conv2d_backward_weight(
    grad_out: &[f64],
    out_shape: Shape,
    input: &[f64],
    in_shape: Shape,
    w_shape: Shape,
    (ph, pw): (usize, usize),
) -> Vec<f64> {
    let mut grad_w = vec![0.0; w_shape.count()];
    let plane = w_shape.h * w_shape.w;
    let work = out_shape.count() * w_shape.c * w_shape.h * w_shape.w;
    let (kh, kw) = (w_shape.h, w_shape.w);
    // x with every kernel column in range: [pw, in_w + pw - kw + 1).
    let fast_lo = pw.min(out_shape.w);
    let fast_hi = (in_shape.w + pw + 1)
        .saturating_sub(kw)
        .min(out_shape.w)
        .max(fast_lo);
    let slab = |idx: usize, w_slab: &mut [f64]| {
        let o = idx / w_shape.c;
        let i = idx % w_shape.c;
        for dy in 0..kh {
            let y_lo = ph.saturating_sub(dy);
            let y_hi = out_shape.h.min((in_shape.h + ph).saturating_sub(dy));
            // One accumulator per kernel column; all of them sweep (n, y, x)
            // in ascending order, sharing each gradient load.
            let mut acc = vec![0.0f64; kw];
            for n in 0..out_shape.n {
                let g_chan = (n * out_shape.c + o) * out_shape.h;
                let in_chan = (n * in_shape.c + i) * in_shape.h;
                for y in y_lo..y_hi {
                    let g_row = (g_chan + y) * out_shape.w;
                    let in_row = (in_chan + (y + dy - ph)) * in_shape.w;
                    for x in 0..fast_lo {
                        weight_edge_taps(
                            &mut acc, grad_out, input, g_row, in_row, x, pw, kw, in_shape.w,
                        );
                    }
                    for x in fast_lo..fast_hi {
                        let g = grad_out[g_row + x];
                        let irow = &input[in_row + x - pw..in_row + x - pw + kw];
                        for (a, iv) in acc.iter_mut().zip(irow) {
                            *a += g * iv;
                        }
                    }
                    for x in fast_hi..out_shape.w {
                        weight_edge_taps(
                            &mut acc, grad_out, input, g_row, in_row, x, pw, kw, in_shape.w,
                        );
                    }
                }
            }
            w_slab[dy * kw..(dy + 1) * kw].copy_from_slice(&acc);
        }
    };
    if work >= PAR_MIN_WORK && w_shape.n * w_shape.c > 1 {
        grad_w.par_chunks_mut(plane).enumerate().for_each(|(idx, s)| slab(idx, s));
    } else {
        grad_w.chunks_mut(plane).enumerate().for_each(|(idx, s)| slab(idx, s));
    }
    grad_w
}

/// Kernel-column updates for a boundary pixel of the weight-gradient sweep.
#[allow(clippy::too_many_arguments)]
#[inline]
fn weight_edge_taps(
    acc: &mut [f64],
    grad_out: &[f64],
    input: &[f64],
    g_row: usize,
    in_row: usize,
    x: usize,
    pw: usize,
    kw: usize,
    in_w: usize,
) {
    let g = grad_out[g_row + x];
    let dx_lo = pw.saturating_sub(x);
    let dx_hi = kw.min((in_w + pw).saturating_sub(x));
    for dx in dx_lo..dx_hi {
        acc[dx] += g * input[in_row + x + dx - pw];
    }
}

/// Gradient w.r.t. the bias: per output channel, sum of the output gradient
/// in (n, y, x) order.
pub(crate) fn conv2d_backward_bias(grad_out: &[f64], out_shape: Shape) -> Vec<f64> {
    let mut grad_b = vec![0.0; out_shape.c];
    let plane = out_shape.h * out_shape.w;
    for (o, gb) in grad_b.iter_mut().enumerate() {
        let mut acc = 0.0;
        for n in 0..out_shape.n {
            let start = (n * out_shape.c + o) * plane;
            for g in &grad_out[start..start + plane] {
                acc += g;
            }
        }
        *gb = acc;
    }
    grad_b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(shape: Shape, values: Vec<f64>) -> Tensor {
        Tensor::from_values(shape, values).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let input = tensor(Shape::new(1, 1, 2, 3), vec![1.0, -2.0, 3.0, 4.0, 5.5, -6.0]);
        let params = ConvParams::same_size(
            tensor(Shape::new(1, 1, 1, 1), vec![1.0]),
            Tensor::zeros(Shape::new(1, 1, 1, 1)),
        )
        .unwrap();
        let out = input.conv2d(&params).unwrap();
        assert_eq!(out.shape(), input.shape());
        assert_eq!(out.values(), input.values());
    }

    #[test]
    fn all_ones_kernel_counts_padded_overlap() {
        let input = tensor(Shape::new(1, 1, 3, 3), vec![1.0; 9]);
        let params = ConvParams::same_size(
            tensor(Shape::new(1, 1, 3, 3), vec![1.0; 9]),
            Tensor::zeros(Shape::new(1, 1, 1, 1)),
        )
        .unwrap();
        let out = input.conv2d(&params).unwrap();
        assert_eq!(
            out.values(),
            vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]
        );
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let input = tensor(Shape::new(1, 2, 3, 3), vec![0.0; 18]);
        let params = ConvParams::same_size(
            Tensor::zeros(Shape::new(1, 3, 3, 3)),
            Tensor::zeros(Shape::new(1, 1, 1, 1)),
        )
        .unwrap();
        assert!(matches!(
            input.conv2d(&params),
            Err(TensorError::ChannelMismatch { input: 2, weight: 3 })
        ));
    }

    #[test]
    fn even_kernel_same_size_is_rejected() {
        let result = ConvParams::same_size(
            Tensor::zeros(Shape::new(1, 1, 2, 2)),
            Tensor::zeros(Shape::new(1, 1, 1, 1)),
        );
        assert!(matches!(result, Err(TensorError::EvenKernel { kh: 2, kw: 2 })));
    }

    #[test]
    fn relu_clamps_negatives() {
        let input = tensor(Shape::new(1, 1, 1, 3), vec![-1.0, 0.0, 2.0]);
        assert_eq!(input.relu().values(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn concat_orders_channel_blocks() {
        let a = tensor(Shape::new(1, 2, 1, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let b = tensor(Shape::new(1, 3, 1, 2), vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let out = concat_channels(&[a, b]).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 5, 1, 2));
        assert_eq!(
            out.values(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
        );
    }

    #[test]
    fn concat_single_input_is_identity() {
        let a = tensor(Shape::new(2, 1, 2, 2), (0..8).map(f64::from).collect());
        let out = concat_channels(std::slice::from_ref(&a)).unwrap();
        assert_eq!(out.shape(), a.shape());
        assert_eq!(out.values(), a.values());
    }

    #[test]
    fn concat_rejects_mismatched_spatial_dims() {
        let a = Tensor::zeros(Shape::new(1, 1, 2, 2));
        let b = Tensor::zeros(Shape::new(1, 1, 3, 2));
        assert!(concat_channels(&[a, b]).is_err());
    }

    #[test]
    fn add_identity_and_shape_check() {
        let a = tensor(Shape::new(1, 1, 1, 3), vec![1.0, -2.0, 3.0]);
        let z = Tensor::zeros(a.shape());
        assert_eq!(a.add(&z).unwrap().values(), a.values());
        let bad = Tensor::zeros(Shape::new(1, 1, 1, 4));
        assert!(a.add(&bad).is_err());
    }

    #[test]
    fn pixel_shuffle_r1_is_identity() {
        let a = tensor(Shape::new(1, 3, 2, 2), (0..12).map(f64::from).collect());
        let out = a.pixel_shuffle(1).unwrap();
        assert_eq!(out.shape(), a.shape());
        assert_eq!(out.values(), a.values());
    }

    #[test]
    fn pixel_shuffle_channel_order_is_row_major() {
        let a = tensor(Shape::new(1, 4, 1, 1), vec![10.0, 20.0, 30.0, 40.0]);
        let out = a.pixel_shuffle(2).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(out.values(), vec![10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn pixel_shuffle_rejects_indivisible_channels() {
        let a = Tensor::zeros(Shape::new(1, 3, 2, 2));
        assert!(matches!(
            a.pixel_shuffle(2),
            Err(TensorError::ShuffleChannels { channels: 3, upscale: 2 })
        ));
    }

    #[test]
    fn l1_loss_hand_values() {
        let pred = tensor(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]);
        let target = tensor(Shape::new(1, 1, 1, 2), vec![0.0, 4.0]);
        let loss = pred.l1_loss(&target).unwrap();
        assert_eq!(loss.item(), 1.5);

        let same = pred.l1_loss(&pred.clone()).unwrap();
        assert_eq!(same.item(), 0.0);
    }

    #[test]
    fn l1_loss_rejects_differentiable_target() {
        let pred = Tensor::zeros(Shape::new(1, 1, 1, 2));
        let target = Tensor::param(Shape::new(1, 1, 1, 2), vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            pred.l1_loss(&target),
            Err(TensorError::DifferentiableTarget)
        ));
    }
}
