//! Elementwise, matrix, reduction and shape ops with their backward rules.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{broadcast_shape, broadcast_strides, numel, reduce_broadcast, strides_of, Tensor};
use crate::dim_err;
use crate::error::Result;

fn binary_forward(
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let shape = broadcast_shape(a.shape(), b.shape())?;
    let n = numel(&shape);
    let sa = broadcast_strides(a.shape(), &shape);
    let sb = broadcast_strides(b.shape(), &shape);
    let so = strides_of(&shape);
    let mut out = vec![0.0; n];
    let (da, db) = (a.data(), b.data());
    if a.shape() == shape.as_slice() && b.shape() == shape.as_slice() {
        for i in 0..n {
            out[i] = f(da[i], db[i]);
        }
    } else {
        for (lin, o) in out.iter_mut().enumerate() {
            let mut ia = 0;
            let mut ib = 0;
            for (i, os) in so.iter().enumerate() {
                let idx = (lin / os) % shape[i];
                ia += idx * sa[i];
                ib += idx * sb[i];
            }
            *o = f(da[ia], db[ib]);
        }
    }
    Ok((shape, out))
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (shape, out) = binary_forward(self, other, |x, y| x + y)?;
        let (ash, bsh) = (self.shape().to_vec(), other.shape().to_vec());
        let osh = shape.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                vec![
                    reduce_broadcast(g, &osh, &ash),
                    reduce_broadcast(g, &osh, &bsh),
                ]
            }),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let (shape, out) = binary_forward(self, other, |x, y| x - y)?;
        let (ash, bsh) = (self.shape().to_vec(), other.shape().to_vec());
        let osh = shape.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                vec![
                    reduce_broadcast(g, &osh, &ash),
                    reduce_broadcast(&neg, &osh, &bsh),
                ]
            }),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (shape, out) = binary_forward(self, other, |x, y| x * y)?;
        let (a, b) = (self.clone(), other.clone());
        let osh = shape.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let sa = broadcast_strides(a.shape(), &osh);
                let sb = broadcast_strides(b.shape(), &osh);
                let so = strides_of(&osh);
                let mut ga = vec![0.0; osh.iter().product()];
                let mut gb = vec![0.0; osh.iter().product()];
                for lin in 0..g.len() {
                    let mut ia = 0;
                    let mut ib = 0;
                    for (i, os) in so.iter().enumerate() {
                        let idx = (lin / os) % osh[i];
                        ia += idx * sa[i];
                        ib += idx * sb[i];
                    }
                    ga[lin] = g[lin] * b.data()[ib];
                    gb[lin] = g[lin] * a.data()[ia];
                }
                vec![
                    reduce_broadcast(&ga, &osh, a.shape()),
                    reduce_broadcast(&gb, &osh, b.shape()),
                ]
            }),
        ))
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        let (shape, out) = binary_forward(self, other, |x, y| x / y)?;
        let (a, b) = (self.clone(), other.clone());
        let osh = shape.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let sa = broadcast_strides(a.shape(), &osh);
                let sb = broadcast_strides(b.shape(), &osh);
                let so = strides_of(&osh);
                let mut ga = vec![0.0; g.len()];
                let mut gb = vec![0.0; g.len()];
                for lin in 0..g.len() {
                    let mut ia = 0;
                    let mut ib = 0;
                    for (i, os) in so.iter().enumerate() {
                        let idx = (lin / os) % osh[i];
                        ia += idx * sa[i];
                        ib += idx * sb[i];
                    }
                    let (x, y) = (a.data()[ia], b.data()[ib]);
                    ga[lin] = g[lin] / y;
                    gb[lin] = -g[lin] * x / (y * y);
                }
                vec![
                    reduce_broadcast(&ga, &osh, a.shape()),
                    reduce_broadcast(&gb, &osh, b.shape()),
                ]
            }),
        ))
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|x| c * x).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().map(|x| c * x).collect()]),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|x| x + c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| vec![g.to_vec()]),
        )
    }

    pub fn relu(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| x.max(0.0)).collect();
        let src = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                // subgradient 0 at exactly 0
                vec![g
                    .iter()
                    .zip(src.data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect()]
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let out: Vec<f64> = self
            .data()
            .iter()
            .map(|x| 1.0 / (1.0 + libm::exp(-x)))
            .collect();
        let vals = out.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(&vals)
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect()]
            }),
        )
    }

    pub fn ln(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| libm::log(*x)).collect();
        let src = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().zip(src.data()).map(|(g, x)| g / x).collect()]),
        )
    }

    pub fn sqrt(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| libm::sqrt(*x)).collect();
        let vals = out.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(&vals)
                    .map(|(g, s)| g * 0.5 / s)
                    .collect()]
            }),
        )
    }

    /// Clamp to [lo, hi]; gradient passes through strictly inside the range.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| x.clamp(lo, hi)).collect();
        let src = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(src.data())
                    .map(|(g, x)| if *x > lo && *x < hi { *g } else { 0.0 })
                    .collect()]
            }),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(dim_err!(
                "reshape {:?} -> {:?}: element count mismatch",
                self.shape(),
                shape
            ));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.data().to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![g.to_vec()]),
        ))
    }

    /// 2-D matrix product [M,K] x [K,N] -> [M,N].
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self, other);
        let (m, k) = match a.shape() {
            [m, k] => (*m, *k),
            s => return Err(dim_err!("matmul lhs must be 2-D, got {:?}", s)),
        };
        let (k2, n) = match b.shape() {
            [k2, n] => (*k2, *n),
            s => return Err(dim_err!("matmul rhs must be 2-D, got {:?}", s)),
        };
        if k != k2 {
            return Err(dim_err!(
                "matmul inner dimensions disagree: [{},{}] x [{},{}]",
                m,
                k,
                k2,
                n
            ));
        }
        let out = matmul_raw(a.data(), b.data(), m, k, n);
        let (ac, bc) = (a.clone(), b.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            out,
            vec![a.clone(), b.clone()],
            Box::new(move |g| {
                // dA = dC . B^T ; dB = A^T . dC
                let bt = transpose_raw(bc.data(), k, n);
                let da = matmul_raw(g, &bt, m, n, k);
                let at = transpose_raw(ac.data(), m, k);
                let db = matmul_raw(&at, g, k, m, n);
                vec![da, db]
            }),
        ))
    }

    /// 2-D transpose.
    pub fn t(&self) -> Result<Tensor> {
        let (m, n) = match self.shape() {
            [m, n] => (*m, *n),
            s => return Err(dim_err!("t() needs a 2-D tensor, got {:?}", s)),
        };
        let out = transpose_raw(self.data(), m, n);
        Ok(Tensor::from_op(
            vec![n, m],
            out,
            vec![self.clone()],
            Box::new(move |g| vec![transpose_raw(g, n, m)]),
        ))
    }

    /// Softmax along `axis`; slices along that axis sum to 1.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(dim_err!(
                "softmax axis {} out of range for shape {:?}",
                axis,
                shape
            ));
        }
        let d = shape[axis];
        let stride = shape[axis + 1..].iter().product::<usize>();
        let outer = self.len() / (d * stride);
        let mut out = vec![0.0; self.len()];
        let x = self.data();
        for o in 0..outer {
            for s in 0..stride {
                let base = o * d * stride + s;
                let mut mx = f64::NEG_INFINITY;
                for i in 0..d {
                    mx = mx.max(x[base + i * stride]);
                }
                let mut z = 0.0;
                for i in 0..d {
                    let e = libm::exp(x[base + i * stride] - mx);
                    out[base + i * stride] = e;
                    z += e;
                }
                for i in 0..d {
                    out[base + i * stride] /= z;
                }
            }
        }
        let vals = out.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; g.len()];
                for o in 0..outer {
                    for s in 0..stride {
                        let base = o * d * stride + s;
                        let mut dot = 0.0;
                        for i in 0..d {
                            let ix = base + i * stride;
                            dot += g[ix] * vals[ix];
                        }
                        for i in 0..d {
                            let ix = base + i * stride;
                            gx[ix] = vals[ix] * (g[ix] - dot);
                        }
                    }
                }
                vec![gx]
            }),
        ))
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.len();
        Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |g| vec![vec![g[0]; n]]),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.len() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Mean over every axis except `axis`; result shape is all-1 except `axis`.
    /// Used by batch normalization for per-channel statistics.
    pub fn mean_except_axis(&self, axis: usize) -> Result<Tensor> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(dim_err!(
                "mean axis {} out of range for {:?}",
                axis,
                shape
            ));
        }
        let d = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let outer = self.len() / (d * stride);
        let count = (outer * stride) as f64;
        let mut out = vec![0.0; d];
        for o in 0..outer {
            for i in 0..d {
                for s in 0..stride {
                    out[i] += self.data()[o * d * stride + i * stride + s];
                }
            }
        }
        for v in out.iter_mut() {
            *v /= count;
        }
        let mut oshape = vec![1usize; shape.len()];
        oshape[axis] = d;
        Ok(Tensor::from_op(
            oshape,
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; outer * d * stride];
                for o in 0..outer {
                    for i in 0..d {
                        for s in 0..stride {
                            gx[o * d * stride + i * stride + s] = g[i] / count;
                        }
                    }
                }
                vec![gx]
            }),
        ))
    }

    /// Concatenate along `axis`. All other dimensions must agree.
    pub fn concat(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
        if tensors.is_empty() {
            return Err(dim_err!("concat of zero tensors"));
        }
        let rank = tensors[0].shape().len();
        if axis >= rank {
            return Err(dim_err!("concat axis {} out of range", axis));
        }
        let mut oshape = tensors[0].shape().to_vec();
        oshape[axis] = 0;
        for t in tensors {
            if t.shape().len() != rank {
                return Err(dim_err!("concat rank mismatch"));
            }
            for i in 0..rank {
                if i != axis && t.shape()[i] != oshape[i] {
                    return Err(dim_err!(
                        "concat shape mismatch on axis {}: {:?} vs {:?}",
                        i,
                        tensors[0].shape(),
                        t.shape()
                    ));
                }
            }
            oshape[axis] += t.shape()[axis];
        }
        let stride: usize = oshape[axis + 1..].iter().product();
        let outer: usize = oshape[..axis].iter().product();
        let total_ax = oshape[axis];
        let mut out = vec![0.0; numel(&oshape)];
        let mut off = 0usize;
        for t in tensors {
            let ax = t.shape()[axis];
            for o in 0..outer {
                let src = &t.data()[o * ax * stride..(o + 1) * ax * stride];
                let dst_base = o * total_ax * stride + off * stride;
                out[dst_base..dst_base + ax * stride].copy_from_slice(src);
            }
            off += ax;
        }
        let sizes: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        Ok(Tensor::from_op(
            oshape,
            out,
            tensors.to_vec(),
            Box::new(move |g| {
                let mut parts = Vec::with_capacity(sizes.len());
                let mut off = 0usize;
                for &ax in &sizes {
                    let mut p = vec![0.0; outer * ax * stride];
                    for o in 0..outer {
                        let src_base = o * total_ax * stride + off * stride;
                        p[o * ax * stride..(o + 1) * ax * stride]
                            .copy_from_slice(&g[src_base..src_base + ax * stride]);
                    }
                    parts.push(p);
                    off += ax;
                }
                parts
            }),
        ))
    }

    /// Global max pool [C,H,W] -> [C,1,1]; gradient routes to the first argmax.
    pub fn global_max_pool(&self) -> Result<Tensor> {
        let (c, h, w) = expect_chw(self)?;
        if h * w == 0 {
            return Err(dim_err!("global_max_pool on empty spatial extent"));
        }
        let mut out = vec![0.0; c];
        let mut arg = vec![0usize; c];
        for ci in 0..c {
            let base = ci * h * w;
            let mut best = f64::NEG_INFINITY;
            for i in 0..h * w {
                let v = self.data()[base + i];
                if v > best {
                    best = v;
                    arg[ci] = base + i;
                }
            }
            out[ci] = best;
        }
        let n = self.len();
        Ok(Tensor::from_op(
            vec![c, 1, 1],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; n];
                for (ci, &ix) in arg.iter().enumerate() {
                    gx[ix] += g[ci];
                }
                vec![gx]
            }),
        ))
    }

    /// Max along the channel axis [C,H,W] -> [1,H,W].
    pub fn channel_max_pool(&self) -> Result<Tensor> {
        let (c, h, w) = expect_chw(self)?;
        if c == 0 {
            return Err(dim_err!("channel_max_pool on zero channels"));
        }
        let hw = h * w;
        let mut out = vec![0.0; hw];
        let mut arg = vec![0usize; hw];
        for i in 0..hw {
            let mut best = f64::NEG_INFINITY;
            for ci in 0..c {
                let v = self.data()[ci * hw + i];
                if v > best {
                    best = v;
                    arg[i] = ci * hw + i;
                }
            }
            out[i] = best;
        }
        let n = self.len();
        Ok(Tensor::from_op(
            vec![1, h, w],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; n];
                for (i, &ix) in arg.iter().enumerate() {
                    gx[ix] += g[i];
                }
                vec![gx]
            }),
        ))
    }
}

pub(crate) fn expect_chw(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [c, h, w] => Ok((*c, *h, *w)),
        s => Err(dim_err!("expected [C,H,W] tensor, got {:?}", s)),
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}
