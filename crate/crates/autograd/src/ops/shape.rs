use crate::error::{geometry, mismatch, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

impl<E: Scalar> Tensor<E> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<E>> {
        if numel(shape) != self.numel() {
            return Err(mismatch("reshape", self.shape(), shape));
        }
        let backward = Box::new(|g: &[E]| vec![Some(g.to_vec())]);
        Tensor::from_op("reshape", self.data().to_vec(), shape.to_vec(), vec![self.clone()], backward)
    }
}

/// Concatenates `[B, Ci, H, W]` tensors along the channel axis.
pub fn concat_channels<E: Scalar>(parts: &[Tensor<E>]) -> Result<Tensor<E>> {
    const OP: &str = "concat_channels";
    let first = parts.first().ok_or_else(|| geometry(OP, "nothing to concatenate"))?;
    let &[b, _, h, w] = first.shape() else {
        return Err(geometry(OP, format!("expected rank 4, got {:?}", first.shape())));
    };
    for p in parts {
        match p.shape() {
            &[pb, _, ph, pw] if (pb, ph, pw) == (b, h, w) => {}
            other => return Err(mismatch(OP, first.shape(), other)),
        }
    }
    let plane = h * w;
    let chans: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
    let total: usize = chans.iter().sum();
    let mut out = Vec::with_capacity(b * total * plane);
    for i in 0..b {
        for (p, &c) in parts.iter().zip(&chans) {
            out.extend_from_slice(&p.data()[i * c * plane..(i + 1) * c * plane]);
        }
    }
    let backward = Box::new(move |g: &[E]| {
        let mut grads: Vec<Vec<E>> = chans.iter().map(|&c| Vec::with_capacity(b * c * plane)).collect();
        for item in g.chunks(total * plane) {
            let mut off = 0;
            for (gp, &c) in grads.iter_mut().zip(&chans) {
                gp.extend_from_slice(&item[off..off + c * plane]);
                off += c * plane;
            }
        }
        grads.into_iter().map(Some).collect()
    });
    Tensor::from_op(OP, out, vec![b, total, h, w], parts.to_vec(), backward)
}

/// Source taps for one output coordinate of a half-pixel-centred linear
/// resize: `(lo, hi, weight_of_hi)`.
fn taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resize of the two trailing axes of `[B, C, H, W]` to `size`,
/// sampling at pixel centres (the `align_corners = false` convention).
pub fn resize_bilinear<E: Scalar>(x: &Tensor<E>, size: (usize, usize)) -> Result<Tensor<E>> {
    const OP: &str = "resize_bilinear";
    let &[b, c, h, w] = x.shape() else {
        return Err(geometry(OP, format!("expected rank 4, got {:?}", x.shape())));
    };
    let (oh, ow) = size;
    if h == 0 || w == 0 || oh == 0 || ow == 0 {
        return Err(geometry(OP, "empty spatial extent"));
    }
    let rows = taps(oh, h);
    let cols = taps(ow, w);
    let planes = b * c;
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        for &(r0, r1, fr) in &rows {
            let fr = E::of(fr);
            for &(c0, c1, fc) in &cols {
                let fc = E::of(fc);
                let top = src[r0 * w + c0] * (E::one() - fc) + src[r0 * w + c1] * fc;
                let bot = src[r1 * w + c0] * (E::one() - fc) + src[r1 * w + c1] * fc;
                out.push(top * (E::one() - fr) + bot * fr);
            }
        }
    }
    let backward = Box::new(move |g: &[E]| {
        let mut gx = vec![E::zero(); planes * h * w];
        for p in 0..planes {
            let dst = &mut gx[p * h * w..(p + 1) * h * w];
            let gp = &g[p * oh * ow..(p + 1) * oh * ow];
            for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
                let fr = E::of(fr);
                for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                    let fc = E::of(fc);
                    let gi = gp[i * ow + j];
                    dst[r0 * w + c0] += gi * (E::one() - fr) * (E::one() - fc);
                    dst[r0 * w + c1] += gi * (E::one() - fr) * fc;
                    dst[r1 * w + c0] += gi * fr * (E::one() - fc);
                    dst[r1 * w + c1] += gi * fr * fc;
                }
            }
        }
        vec![Some(gx)]
    });
    Tensor::from_op(OP, out, vec![b, c, oh, ow], vec![x.clone()], backward)
}
