use crate::error::{geometry, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Pooling over the two trailing axes of `[B, C, H, W]`, no padding.
/// Max-pool backward routes each gradient to the first maximal element of its
/// window in row-major order.
pub fn pool2d<E: Scalar>(kind: PoolKind, x: &Tensor<E>, kernel: (usize, usize), stride: (usize, usize)) -> Result<Tensor<E>> {
    const OP: &str = "pool2d";
    let &[b, c, h, w] = x.shape() else {
        return Err(geometry(OP, format!("expected rank 4, got {:?}", x.shape())));
    };
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
        return Err(geometry(OP, "kernel and stride must be positive"));
    }
    if kh > h || kw > w {
        return Err(geometry(OP, format!("window {kh}x{kw} exceeds input {h}x{w}")));
    }
    let (oh, ow) = ((h - kh) / sh + 1, (w - kw) / sw + 1);
    let planes = b * c;
    let mut out = Vec::with_capacity(planes * oh * ow);
    // For max pooling: flat input index that won each output cell.
    let mut argmax = Vec::new();
    let inv = E::one() / E::of((kh * kw) as f64);
    for p in 0..planes {
        let plane = &x.data()[p * h * w..(p + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let (r0, c0) = (i * sh, j * sw);
                match kind {
                    PoolKind::Max => {
                        let mut best = r0 * w + c0;
                        for r in r0..r0 + kh {
                            for cc in c0..c0 + kw {
                                if plane[r * w + cc] > plane[best] {
                                    best = r * w + cc;
                                }
                            }
                        }
                        out.push(plane[best]);
                        argmax.push(p * h * w + best);
                    }
                    PoolKind::Avg => {
                        let mut s = E::zero();
                        for r in r0..r0 + kh {
                            for cc in c0..c0 + kw {
                                s += plane[r * w + cc];
                            }
                        }
                        out.push(s * inv);
                    }
                }
            }
        }
    }
    let backward = Box::new(move |g: &[E]| {
        let mut gx = vec![E::zero(); planes * h * w];
        match kind {
            PoolKind::Max => {
                for (&gi, &src) in g.iter().zip(&argmax) {
                    gx[src] += gi;
                }
            }
            PoolKind::Avg => {
                for p in 0..planes {
                    for i in 0..oh {
                        for j in 0..ow {
                            let gi = g[(p * oh + i) * ow + j] * inv;
                            for r in i * sh..i * sh + kh {
                                for cc in j * sw..j * sw + kw {
                                    gx[p * h * w + r * w + cc] += gi;
                                }
                            }
                        }
                    }
                }
            }
        }
        vec![Some(gx)]
    });
    Tensor::from_op(
        match kind {
            PoolKind::Max => "max_pool2d",
            PoolKind::Avg => "avg_pool2d",
        },
        out,
        vec![b, c, oh, ow],
        vec![x.clone()],
        backward,
    )
}
