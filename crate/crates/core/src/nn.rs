//! Trainable layers: parameters, convolution, linear, batch norm, and the
//! SGD-with-momentum update.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{contract_err, dim_err};

/// A trainable tensor plus its optimizer momentum buffer.
pub struct Param {
    tensor: Tensor,
    momentum: Vec<f64>,
}

impl Param {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Param> {
        let tensor = Tensor::leaf(shape, data)?;
        let momentum = vec![0.0; tensor.len()];
        Ok(Param { tensor, momentum })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn set_values(&mut self, data: Vec<f64>) -> Result<()> {
        if data.len() != self.tensor.len() {
            return Err(dim_err!(
                "parameter load: {} values for shape {:?}",
                data.len(),
                self.tensor.shape()
            ));
        }
        self.tensor = Tensor::leaf(&self.tensor.shape().to_vec(), data)?;
        self.momentum = vec![0.0; self.tensor.len()];
        Ok(())
    }

    pub fn clear_grad(&self) {
        self.tensor.clear_grad();
    }
}

/// Anything holding parameters exposes them to optimizers and checkpoints.
pub trait Module {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param));
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param));
    /// Visit every batch-norm layer, for running-statistics snapshots.
    /// Required (no default) so containers cannot silently drop layers.
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d));
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        alloc::format!("{prefix}.{name}")
    }
}

/// Uniform init in +-sqrt(6/fan_in).
fn init_uniform(rng: &mut Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = libm::sqrt(6.0 / fan_in as f64);
    (0..n).map(|_| rng.range(-bound, bound)).collect()
}

pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> Result<Conv2d> {
        let fan_in = cin * k * k;
        Ok(Conv2d {
            weight: Param::new(&[cout, cin, k, k], init_uniform(rng, cout * cin * k * k, fan_in))?,
            bias: Param::new(&[cout], vec![0.0; cout])?,
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(self.weight.tensor(), self.bias.tensor(), self.stride, self.pad)
    }
}

impl Module for Conv2d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_stats(&self, _prefix: &str, _f: &mut dyn FnMut(String, &BatchNorm2d)) {}
}

/// Fully connected layer on row vectors: [B,in] x [in,out] + bias.
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(n_in: usize, n_out: usize, rng: &mut Rng) -> Result<Linear> {
        Ok(Linear {
            weight: Param::new(&[n_in, n_out], init_uniform(rng, n_in * n_out, n_in))?,
            bias: Param::new(&[n_out], vec![0.0; n_out])?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(self.weight.tensor())?.add(self.bias.tensor())
    }
}

impl Module for Linear {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_stats(&self, _prefix: &str, _f: &mut dyn FnMut(String, &BatchNorm2d)) {}
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization over [N,C,H,W] (or [C,H,W], treated as N = 1).
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    running_mean: RefCell<Vec<f64>>,
    running_var: RefCell<Vec<f64>>,
    channels: usize,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Result<BatchNorm2d> {
        Ok(BatchNorm2d {
            gamma: Param::new(&[channels], vec![1.0; channels])?,
            beta: Param::new(&[channels], vec![0.0; channels])?,
            running_mean: RefCell::new(vec![0.0; channels]),
            running_var: RefCell::new(vec![1.0; channels]),
            channels,
        })
    }

    pub fn running_stats(&self) -> (Vec<f64>, Vec<f64>) {
        (self.running_mean.borrow().clone(), self.running_var.borrow().clone())
    }

    pub fn set_running_stats(&self, mean: Vec<f64>, var: Vec<f64>) {
        *self.running_mean.borrow_mut() = mean;
        *self.running_var.borrow_mut() = var;
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        let (squeeze, x4) = match x.shape() {
            [c, h, w] => (true, x.reshape(&[1, *c, *h, *w])?),
            [_, _, _, _] => (false, x.clone()),
            s => return Err(dim_err!("batchnorm input must be 3-D or 4-D, got {:?}", s)),
        };
        let c = x4.shape()[1];
        if c != self.channels {
            return Err(dim_err!(
                "batchnorm channel mismatch: input C={} vs gamma C={}",
                c,
                self.channels
            ));
        }
        let cshape = [1usize, c, 1, 1];
        let y = if training {
            let mu = x4.mean_except_axis(1)?.reshape(&cshape)?;
            let xc = x4.sub(&mu)?;
            let var = xc.mul(&xc)?.mean_except_axis(1)?.reshape(&cshape)?;
            {
                let mut rm = self.running_mean.borrow_mut();
                let mut rv = self.running_var.borrow_mut();
                for i in 0..c {
                    rm[i] = (1.0 - BN_MOMENTUM) * rm[i] + BN_MOMENTUM * mu.data()[i];
                    rv[i] = (1.0 - BN_MOMENTUM) * rv[i] + BN_MOMENTUM * var.data()[i];
                }
            }
            let xhat = xc.div(&var.add_scalar(BN_EPS).sqrt())?;
            self.affine(&xhat, &cshape)?
        } else {
            let rm = Tensor::new(&cshape, self.running_mean.borrow().clone())?;
            let rv = Tensor::new(&cshape, self.running_var.borrow().clone())?;
            let xhat = x4.sub(&rm)?.div(&rv.add_scalar(BN_EPS).sqrt())?;
            self.affine(&xhat, &cshape)?
        };
        if squeeze {
            let s = x.shape().to_vec();
            y.reshape(&s)
        } else {
            Ok(y)
        }
    }

    fn affine(&self, xhat: &Tensor, cshape: &[usize]) -> Result<Tensor> {
        let g = self.gamma.tensor().reshape(cshape)?;
        let b = self.beta.tensor().reshape(cshape)?;
        xhat.mul(&g)?.add(&b)
    }
}

impl Module for BatchNorm2d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        f(String::from(prefix), self);
    }
}

/// Conv -> BN -> ReLU, the workhorse block of the encoder and both
/// aggregation paths.
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new(cin: usize, cout: usize, k: usize, pad: usize, rng: &mut Rng) -> Result<ConvBnRelu> {
        Ok(ConvBnRelu {
            conv: Conv2d::new(cin, cout, k, 1, pad, rng)?,
            bn: BatchNorm2d::new(cout)?,
        })
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        Ok(self.bn.forward(&self.conv.forward(x)?, training)?.relu())
    }
}

impl Module for ConvBnRelu {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.conv.visit_params_ref(&join(prefix, "conv"), f);
        self.bn.visit_params_ref(&join(prefix, "bn"), f);
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        self.bn.visit_stats(&join(prefix, "bn"), f);
    }
}

/// SGD with momentum and weight decay:
/// v <- momentum*v + grad + weight_decay*w ; w <- w - lr*v.
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn step(&self, model: &mut dyn Module) -> Result<()> {
        let mut failed: Option<crate::Error> = None;
        model.visit_params("", &mut |name, p| {
            if failed.is_some() {
                return;
            }
            let grad = match p.tensor.grad() {
                Some(g) => g,
                None => {
                    failed = Some(contract_err!("sgd_step: parameter '{name}' has no gradient"));
                    return;
                }
            };
            let mut w = p.tensor.data().to_vec();
            for i in 0..w.len() {
                p.momentum[i] =
                    self.momentum * p.momentum[i] + grad[i] + self.weight_decay * w[i];
                w[i] -= self.lr * p.momentum[i];
            }
            let momentum = core::mem::take(&mut p.momentum);
            // set_values resets momentum, so restore it afterwards
            p.set_values(w).expect("shape preserved");
            p.momentum = momentum;
            p.clear_grad();
        });
        match failed {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Clear gradients on every parameter.
    pub fn zero_grad(model: &mut dyn Module) {
        model.visit_params("", &mut |_, p| p.clear_grad());
    }
}
