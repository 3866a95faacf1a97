//! Spatial ops: convolution, pooling, resampling.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{expect_chw, matmul_raw, transpose_raw};
use super::Tensor;
use crate::dim_err;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleMode {
    Nearest,
    Bilinear,
}

/// im2col: [C,H,W] -> [C*k*k, Hout*Wout] for a k x k window.
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    hout: usize,
    wout: usize,
) -> Vec<f64> {
    let cols = hout * wout;
    let mut out = vec![0.0; c * k * k * cols];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k * k + ky * k + kx) * cols;
                for oy in 0..hout {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = ci * h * w + iy as usize * w;
                    for ox in 0..wout {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out[row + oy * wout + ox] = x[src_row + ix as usize];
                    }
                }
            }
        }
    }
    out
}

/// Scatter-add inverse of im2col.
fn col2im(
    cols_data: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    hout: usize,
    wout: usize,
) -> Vec<f64> {
    let cols = hout * wout;
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k * k + ky * k + kx) * cols;
                for oy in 0..hout {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = ci * h * w + iy as usize * w;
                    for ox in 0..wout {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out[dst_row + ix as usize] += cols_data[row + oy * wout + ox];
                    }
                }
            }
        }
    }
    out
}

impl Tensor {
    /// 2-D cross-correlation. input [C_in,H,W], weight [C_out,C_in,k,k],
    /// bias [C_out].
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let (cin, h, w) = expect_chw(self)?;
        let (cout, wcin, k) = match weight.shape() {
            [co, ci, kh, kw] if kh == kw => (*co, *ci, *kh),
            s => return Err(dim_err!("conv2d weight must be [Cout,Cin,k,k], got {:?}", s)),
        };
        if k % 2 == 0 {
            return Err(dim_err!("conv2d kernel size {} must be odd", k));
        }
        if wcin != cin {
            return Err(dim_err!(
                "conv2d channel mismatch: input C={} vs weight Cin={}",
                cin,
                wcin
            ));
        }
        if bias.shape() != [cout] {
            return Err(dim_err!(
                "conv2d bias shape {:?} must be [{}]",
                bias.shape(),
                cout
            ));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(dim_err!(
                "conv2d: kernel {} larger than padded input {}x{}",
                k,
                h + 2 * pad,
                w + 2 * pad
            ));
        }
        if (h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0 {
            return Err(dim_err!(
                "conv2d: output size not integral for H={} W={} k={} stride={} pad={}",
                h, w, k, stride, pad
            ));
        }
        let hout = (h + 2 * pad - k) / stride + 1;
        let wout = (w + 2 * pad - k) / stride + 1;
        let ncols = hout * wout;

        let cols_data = im2col(self.data(), cin, h, w, k, stride, pad, hout, wout);
        let mut out = matmul_raw(weight.data(), &cols_data, cout, cin * k * k, ncols);
        for co in 0..cout {
            let b = bias.data()[co];
            for v in out[co * ncols..(co + 1) * ncols].iter_mut() {
                *v += b;
            }
        }

        let (xc, wc) = (self.clone(), weight.clone());
        Ok(Tensor::from_op(
            vec![cout, hout, wout],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |g| {
                let kk = cin * k * k;
                // dW = dOut . cols^T
                let cols_data = im2col(xc.data(), cin, h, w, k, stride, pad, hout, wout);
                let cols_t = transpose_raw(&cols_data, kk, ncols);
                let dw = matmul_raw(g, &cols_t, cout, ncols, kk);
                // dX = col2im(W^T . dOut)
                let wt = transpose_raw(wc.data(), cout, kk);
                let dcols = matmul_raw(&wt, g, kk, cout, ncols);
                let dx = col2im(&dcols, cin, h, w, k, stride, pad, hout, wout);
                // db = per-channel sum
                let mut db = vec![0.0; cout];
                for co in 0..cout {
                    db[co] = g[co * ncols..(co + 1) * ncols].iter().sum();
                }
                vec![dx, dw, db]
            }),
        ))
    }

    /// 2x2 max pooling with stride 2; gradient to the first argmax.
    pub fn max_pool2(&self) -> Result<Tensor> {
        let (c, h, w) = expect_chw(self)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(dim_err!("max_pool2 needs even H,W, got {}x{}", h, w));
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut out = vec![0.0; c * ho * wo];
        let mut arg = vec![0usize; c * ho * wo];
        for ci in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut bix = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let ix = ci * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                            if self.data()[ix] > best {
                                best = self.data()[ix];
                                bix = ix;
                            }
                        }
                    }
                    let o = ci * ho * wo + oy * wo + ox;
                    out[o] = best;
                    arg[o] = bix;
                }
            }
        }
        let n = self.len();
        Ok(Tensor::from_op(
            vec![c, ho, wo],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; n];
                for (o, &ix) in arg.iter().enumerate() {
                    gx[ix] += g[o];
                }
                vec![gx]
            }),
        ))
    }

    /// Resize [C,H,W] to [C,th,tw]. Bilinear uses half-pixel centers with
    /// edge clamping; nearest picks the covering source pixel.
    pub fn resample(&self, th: usize, tw: usize, mode: ResampleMode) -> Result<Tensor> {
        let (c, h, w) = expect_chw(self)?;
        if th == 0 || tw == 0 {
            return Err(dim_err!("resample target {}x{} must be >= 1", th, tw));
        }
        // (source index, weight) pairs per target pixel, shared by fwd/bwd
        let plan_y = axis_plan(h, th, mode);
        let plan_x = axis_plan(w, tw, mode);
        let mut out = vec![0.0; c * th * tw];
        for ci in 0..c {
            for oy in 0..th {
                for ox in 0..tw {
                    let mut acc = 0.0;
                    for &(sy, wy) in &plan_y[oy] {
                        for &(sx, wx) in &plan_x[ox] {
                            acc += wy * wx * self.data()[ci * h * w + sy * w + sx];
                        }
                    }
                    out[ci * th * tw + oy * tw + ox] = acc;
                }
            }
        }
        let n = self.len();
        Ok(Tensor::from_op(
            vec![c, th, tw],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; n];
                for ci in 0..c {
                    for oy in 0..th {
                        for ox in 0..tw {
                            let gv = g[ci * th * tw + oy * tw + ox];
                            for &(sy, wy) in &plan_y[oy] {
                                for &(sx, wx) in &plan_x[ox] {
                                    gx[ci * h * w + sy * w + sx] += gv * wy * wx;
                                }
                            }
                        }
                    }
                }
                vec![gx]
            }),
        ))
    }
}

/// Per-axis interpolation plan: for each target index, the source indices
/// and weights contributing to it.
fn axis_plan(src: usize, dst: usize, mode: ResampleMode) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| match mode {
            ResampleMode::Nearest => {
                let s = ((i as f64 + 0.5) * scale) as usize;
                vec![(s.min(src - 1), 1.0)]
            }
            ResampleMode::Bilinear => {
                let x = (i as f64 + 0.5) * scale - 0.5;
                let x0 = libm::floor(x);
                let frac = x - x0;
                let lo = (x0.max(0.0) as usize).min(src - 1);
                let hi = ((x0 + 1.0).max(0.0) as usize).min(src - 1);
                if lo == hi {
                    vec![(lo, 1.0)]
                } else {
                    vec![(lo, 1.0 - frac), (hi, frac)]
                }
            }
        })
        .collect()
}

/// Plain (non-differentiable) bilinear resize of a single-channel buffer.
/// Shared with the metrics pipeline, which resizes predictions to the
/// ground-truth resolution.
pub fn resize_bilinear(data: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    let plan_y = axis_plan(h, th, ResampleMode::Bilinear);
    let plan_x = axis_plan(w, tw, ResampleMode::Bilinear);
    let mut out = vec![0.0; th * tw];
    for oy in 0..th {
        for ox in 0..tw {
            let mut acc = 0.0;
            for &(sy, wy) in &plan_y[oy] {
                for &(sx, wx) in &plan_x[ox] {
                    acc += wy * wx * data[sy * w + sx];
                }
            }
            out[oy * tw + ox] = acc;
        }
    }
    out
}
