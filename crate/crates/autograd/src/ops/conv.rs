//! 2-D convolution (cross-correlation, no kernel flip) and its adjoint, both
//! lowered to GEMM through im2col / col2im.

use crate::error::{geometry, mismatch, Result};
use crate::ops::linalg::gemm_rm;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn for_conv(op: &'static str, channels: usize, height: usize, width: usize, kh: usize, kw: usize, stride: usize, padding: usize) -> Result<Self> {
        if stride == 0 {
            return Err(geometry(op, "stride must be positive"));
        }
        if kh == 0 || kw == 0 {
            return Err(geometry(op, "empty kernel"));
        }
        let (ph, pw) = (height + 2 * padding, width + 2 * padding);
        if ph < kh || pw < kw {
            return Err(geometry(op, format!("kernel {kh}x{kw} exceeds padded input {ph}x{pw}")));
        }
        Ok(Self {
            channels,
            height,
            width,
            kh,
            kw,
            stride,
            padding,
            out_h: (ph - kh) / stride + 1,
            out_w: (pw - kw) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Calls `f(col_index, image_index)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (s, p) = (self.stride as isize, self.padding as isize);
        let ncols = self.col_cols();
        for c in 0..self.channels {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    for oh in 0..self.out_h {
                        let ih = oh as isize * s - p + ki as isize;
                        if ih < 0 || ih >= self.height as isize {
                            continue;
                        }
                        let img_row = (c * self.height + ih as usize) * self.width;
                        let col_row = row * ncols + oh * self.out_w;
                        for ow in 0..self.out_w {
                            let iw = ow as isize * s - p + kj as isize;
                            if iw < 0 || iw >= self.width as isize {
                                continue;
                            }
                            f(col_row + ow, img_row + iw as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col<E: Scalar>(&self, image: &[E], cols: &mut [E]) {
        cols.iter_mut().for_each(|v| *v = E::zero());
        self.for_each_tap(|ci, ii| cols[ci] = image[ii]);
    }

    fn col2im<E: Scalar>(&self, cols: &[E], image: &mut [E]) {
        image.iter_mut().for_each(|v| *v = E::zero());
        self.for_each_tap(|ci, ii| image[ii] += cols[ci]);
    }
}

fn bias_grad<E: Scalar>(g: &[E], channels: usize, plane: usize) -> Vec<E> {
    let mut gb = vec![E::zero(); channels];
    for (i, chunk) in g.chunks(plane).enumerate() {
        gb[i % channels] += chunk.iter().fold(E::zero(), |s, &v| s + v);
    }
    gb
}

fn add_bias<E: Scalar>(out: &mut [E], bias: &[E], plane: usize) {
    let c = bias.len();
    for (i, chunk) in out.chunks_mut(plane).enumerate() {
        let b = bias[i % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn check_bias<E: Scalar>(op: &'static str, bias: Option<&Tensor<E>>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(mismatch(op, &[channels], b.shape())),
        _ => Ok(()),
    }
}

/// `x: [B, C, H, W]`, `w: [O, C, kH, kW]`, optional `bias: [O]`.
/// Output `[B, O, H', W']` with `H' = (H + 2p - kH) / s + 1`.
pub fn conv2d<E: Scalar>(x: &Tensor<E>, w: &Tensor<E>, bias: Option<&Tensor<E>>, stride: usize, padding: usize) -> Result<Tensor<E>> {
    const OP: &str = "conv2d";
    let (&[bsz, c, h, wd], &[o, c2, kh, kw]) = (x.shape(), w.shape()) else {
        return Err(mismatch(OP, x.shape(), w.shape()));
    };
    if c != c2 {
        return Err(mismatch(OP, x.shape(), w.shape()));
    }
    check_bias(OP, bias, o)?;
    let geo = Geometry::for_conv(OP, c, h, wd, kh, kw, stride, padding)?;
    let (rows, ncols) = (geo.col_rows(), geo.col_cols());
    let in_plane = c * h * wd;
    let out_item = o * ncols;

    let keep_cols = w.requires_grad();
    let mut saved_cols = Vec::new();
    let mut out = vec![E::zero(); bsz * out_item];
    let mut cols = vec![E::zero(); rows * ncols];
    for (xi, oi) in x.data().chunks(in_plane).zip(out.chunks_mut(out_item)) {
        geo.im2col(xi, &mut cols);
        gemm_rm(o, rows, ncols, w.data(), false, &cols, false, oi, false);
        if keep_cols {
            saved_cols.extend_from_slice(&cols);
        }
    }
    if let Some(b) = bias {
        add_bias(&mut out, b.data(), ncols);
    }

    let (xc, wc) = (x.clone(), w.clone());
    let b_req = bias.is_some_and(Tensor::requires_grad);
    let has_bias = bias.is_some();
    let backward = Box::new(move |g: &[E]| {
        let gw = wc.requires_grad().then(|| {
            let mut gw = vec![E::zero(); o * rows];
            for (gi, ci) in g.chunks(out_item).zip(saved_cols.chunks(rows * ncols)) {
                gemm_rm(o, ncols, rows, gi, false, ci, true, &mut gw, true);
            }
            gw
        });
        let gx = xc.requires_grad().then(|| {
            let mut gx = vec![E::zero(); bsz * in_plane];
            let mut gcols = vec![E::zero(); rows * ncols];
            for (gi, gxi) in g.chunks(out_item).zip(gx.chunks_mut(in_plane)) {
                gemm_rm(rows, o, ncols, wc.data(), true, gi, false, &mut gcols, false);
                geo.col2im(&gcols, gxi);
            }
            gx
        });
        let mut grads = vec![gx, gw];
        if has_bias {
            grads.push(b_req.then(|| bias_grad(g, o, ncols)));
        }
        grads
    });
    let mut parents = vec![x.clone(), w.clone()];
    parents.extend(bias.cloned());
    Tensor::from_op(OP, out, vec![bsz, o, geo.out_h, geo.out_w], parents, backward)
}

/// Adjoint of [`conv2d`] with respect to its input.
///
/// `x: [B, Cin, H, W]`, `w: [Cin, Cout, kH, kW]` (the weight of the conv2d
/// mapping `Cout -> Cin`), optional `bias: [Cout]`. Output spatial size is
/// `(H - 1) * s - 2p + kH`.
pub fn conv_transpose2d<E: Scalar>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<E>> {
    const OP: &str = "conv_transpose2d";
    let (&[bsz, cin, h, wd], &[cin2, cout, kh, kw]) = (x.shape(), w.shape()) else {
        return Err(mismatch(OP, x.shape(), w.shape()));
    };
    if cin != cin2 {
        return Err(mismatch(OP, x.shape(), w.shape()));
    }
    check_bias(OP, bias, cout)?;
    if stride == 0 {
        return Err(geometry(OP, "stride must be positive"));
    }
    let full_h = (h.saturating_sub(1)) * stride + kh;
    let full_w = (wd.saturating_sub(1)) * stride + kw;
    if h == 0 || wd == 0 || full_h <= 2 * padding || full_w <= 2 * padding {
        return Err(geometry(OP, format!("input {h}x{wd} with kernel {kh}x{kw}, stride {stride}, padding {padding}")));
    }
    let (out_h, out_w) = (full_h - 2 * padding, full_w - 2 * padding);
    // Geometry of the forward conv this op is the adjoint of.
    let geo = Geometry::for_conv(OP, cout, out_h, out_w, kh, kw, stride, padding)?;
    debug_assert_eq!((geo.out_h, geo.out_w), (h, wd));
    let (rows, ncols) = (geo.col_rows(), geo.col_cols());
    let in_item = cin * ncols;
    let out_item = cout * out_h * out_w;

    let mut out = vec![E::zero(); bsz * out_item];
    let mut cols = vec![E::zero(); rows * ncols];
    for (xi, oi) in x.data().chunks(in_item).zip(out.chunks_mut(out_item)) {
        gemm_rm(rows, cin, ncols, w.data(), true, xi, false, &mut cols, false);
        geo.col2im(&cols, oi);
    }
    if let Some(b) = bias {
        add_bias(&mut out, b.data(), out_h * out_w);
    }

    let (xc, wc) = (x.clone(), w.clone());
    let b_req = bias.is_some_and(Tensor::requires_grad);
    let has_bias = bias.is_some();
    let backward = Box::new(move |g: &[E]| {
        let need_w = wc.requires_grad();
        let need_x = xc.requires_grad();
        let mut gw = need_w.then(|| vec![E::zero(); cin * rows]);
        let mut gx = need_x.then(|| vec![E::zero(); bsz * in_item]);
        if need_w || need_x {
            let mut gcols = vec![E::zero(); rows * ncols];
            for (i, gi) in g.chunks(out_item).enumerate() {
                geo.im2col(gi, &mut gcols);
                if let Some(gw) = gw.as_mut() {
                    let xi = &xc.data()[i * in_item..(i + 1) * in_item];
                    gemm_rm(cin, ncols, rows, xi, false, &gcols, true, gw, true);
                }
                if let Some(gx) = gx.as_mut() {
                    let gxi = &mut gx[i * in_item..(i + 1) * in_item];
                    gemm_rm(cin, rows, ncols, wc.data(), false, &gcols, false, gxi, false);
                }
            }
        }
        let mut grads = vec![gx, gw];
        if has_bias {
            grads.push(b_req.then(|| bias_grad(g, cout, out_h * out_w)));
        }
        grads
    });
    let mut parents = vec![x.clone(), w.clone()];
    parents.extend(bias.cloned());
    Tensor::from_op(OP, out, vec![bsz, cout, out_h, out_w], parents, backward)
}
