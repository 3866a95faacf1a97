//! Central finite-difference verification of the reverse-mode gradients.
//!
//! Each checked coordinate is probed at two step sizes; coordinates where
//! the two estimates disagree (a kink of ReLU / max-pool was crossed) are
//! skipped rather than reported as gradient bugs. The skip fraction is
//! part of the result so callers can bound it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Relative-error denominator floor (absolute tolerance regime below it).
pub const REL_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug, Default)]
pub struct CheckResult {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl CheckResult {
    pub fn merge(&mut self, other: &CheckResult) {
        self.max_rel = self.max_rel.max(other.max_rel);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }

    pub fn skip_fraction(&self) -> f64 {
        if self.checked + self.skipped == 0 {
            0.0
        } else {
            self.skipped as f64 / (self.checked + self.skipped) as f64
        }
    }
}

/// Which coordinates of the inputs to probe.
pub enum Coords {
    All,
    /// `count` coordinates per input tensor, chosen by the given seed.
    Sample { count: usize, seed: u64 },
}

/// Check the gradient of a scalar-valued function of leaf tensors.
///
/// `f` is re-evaluated with perturbed copies of the inputs, so it must be
/// a pure function of them.
pub fn check_fn<F>(f: F, inputs: &[Tensor], coords: Coords, h: f64) -> Result<CheckResult>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    for t in inputs {
        t.clear_grad();
    }
    let loss = f(inputs)?;
    loss.backward()?;
    let grads: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| alloc::vec![0.0; t.len()]))
        .collect();

    let eval = |ti: usize, ci: usize, delta: f64| -> Result<f64> {
        let mut perturbed: Vec<Tensor> = Vec::with_capacity(inputs.len());
        for (k, t) in inputs.iter().enumerate() {
            if k == ti {
                let mut d = t.data().to_vec();
                d[ci] += delta;
                perturbed.push(Tensor::new(t.shape(), d)?);
            } else {
                perturbed.push(t.detach());
            }
        }
        f(&perturbed)?.item()
    };

    let mut result = CheckResult::default();
    for (ti, t) in inputs.iter().enumerate() {
        if !t.requires_grad() {
            continue;
        }
        let coord_list: Vec<usize> = match &coords {
            Coords::All => (0..t.len()).collect(),
            Coords::Sample { count, seed } => {
                let mut rng = Rng::seed_from_u64(seed.wrapping_add(ti as u64));
                (0..*count).map(|_| rng.below(t.len())).collect()
            }
        };
        for ci in coord_list {
            let fd_h = (eval(ti, ci, h)? - eval(ti, ci, -h)?) / (2.0 * h);
            let h2 = h / 2.0;
            let fd_h2 = (eval(ti, ci, h2)? - eval(ti, ci, -h2)?) / (2.0 * h2);
            // a kink crossed inside the stencil makes the two estimates
            // disagree far beyond the O(h^2) truncation error
            let gap = (fd_h - fd_h2).abs();
            if gap > 0.05 * fd_h.abs().max(fd_h2.abs()).max(1e-3) {
                result.skipped += 1;
                continue;
            }
            let analytic = grads[ti][ci];
            let rel = (analytic - fd_h2).abs() / analytic.abs().max(fd_h2.abs()).max(REL_FLOOR);
            result.max_rel = result.max_rel.max(rel);
            result.checked += 1;
        }
    }
    Ok(result)
}

/// Named per-target results of the full gradient suite.
pub struct SuiteEntry {
    pub name: String,
    pub result: CheckResult,
}

fn rand_leaf(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
    Tensor::leaf(shape, data).expect("shape/data consistent")
}

fn rand_unit_leaf(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.range(0.05, 0.95)).collect();
    Tensor::leaf(shape, data).expect("shape/data consistent")
}

/// Finite-difference suite over every differentiable op and each module.
/// `trials` seeded rounds per target.
pub fn run_suite(base_seed: u64, trials: usize) -> Result<Vec<SuiteEntry>> {
    use crate::aiam::AiamBlock;
    use crate::loss::{bce_loss, jhol_loss, LossConfig, SaliencyPair};
    use crate::ndam::NdamBlock;
    use crate::network::{Model, ModelConfig};
    use crate::nn::BatchNorm2d;
    use crate::tensor::ResampleMode;

    let mut entries: Vec<SuiteEntry> = Vec::new();
    let mut push = |name: &str, r: CheckResult| {
        entries.push(SuiteEntry {
            name: String::from(name),
            result: r,
        })
    };
    let h = DEFAULT_STEP;

    // --- elementwise / broadcast binary ops ---
    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(t as u64));
        let a = rand_leaf(&[3, 4], &mut rng);
        let b = rand_leaf(&[3, 4], &mut rng);
        let c = rand_leaf(&[3, 1, 1], &mut rng);
        let x = rand_leaf(&[3, 2, 2], &mut rng);
        acc.merge(&check_fn(
            |i| Ok(i[0].add(&i[1])?.mul(&i[0])?.sum_all()),
            &[a.clone(), b.clone()],
            Coords::All,
            h,
        )?);
        acc.merge(&check_fn(
            |i| {
                let d = i[1].add_scalar(3.0);
                Ok(i[0].mul(&i[1])?.div(&d)?.sub(&i[1])?.sum_all())
            },
            &[a, b],
            Coords::All,
            h,
        )?);
        // broadcast [3,1,1] over [3,2,2]
        acc.merge(&check_fn(
            |i| Ok(i[0].mul(&i[1])?.add(&i[1])?.sum_all()),
            &[x, c],
            Coords::All,
            h,
        )?);
    }
    push("elementwise+broadcast", acc);

    // --- unary ops ---
    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(1000 + t as u64));
        let a = rand_leaf(&[4, 3], &mut rng);
        let u = rand_unit_leaf(&[4, 3], &mut rng);
        acc.merge(&check_fn(
            |i| {
                Ok(i[0]
                    .sigmoid()
                    .mul(&i[0].relu())?
                    .add(&i[0].clamp(-0.5, 0.5))?
                    .sum_all())
            },
            &[a],
            Coords::All,
            h,
        )?);
        acc.merge(&check_fn(
            |i| Ok(i[0].ln().add(&i[0].sqrt())?.mean_all()),
            &[u],
            Coords::All,
            h,
        )?);
    }
    push("unary (sigmoid/relu/clamp/ln/sqrt)", acc);

    // --- matmul / transpose / softmax ---
    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(2000 + t as u64));
        let a = rand_leaf(&[3, 5], &mut rng);
        let b = rand_leaf(&[5, 2], &mut rng);
        acc.merge(&check_fn(
            |i| {
                Ok(i[0]
                    .matmul(&i[1])?
                    .t()?
                    .softmax(1)?
                    .mul(&i[0].matmul(&i[1])?.t()?)?
                    .sum_all())
            },
            &[a, b],
            Coords::All,
            h,
        )?);
    }
    push("matmul/transpose/softmax", acc);

    // --- conv2d ---
    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(3000 + t as u64));
        let x = rand_leaf(&[2, 5, 5], &mut rng);
        let w = rand_leaf(&[3, 2, 3, 3], &mut rng);
        let b = rand_leaf(&[3], &mut rng);
        acc.merge(&check_fn(
            |i| {
                let y = i[0].conv2d(&i[1], &i[2], 1, 1)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[x, w, b],
            Coords::All,
            h,
        )?);
    }
    push("conv2d", acc);

    // --- pooling ---
    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(4000 + t as u64));
        let x = rand_leaf(&[2, 4, 4], &mut rng);
        acc.merge(&check_fn(
            |i| {
                let a = i[0].max_pool2()?.sum_all();
                let b = i[0].global_max_pool()?.sum_all();
                let c = i[0].channel_max_pool()?.sum_all();
                a.add(&b)?.add(&c)
            },
            &[x],
            Coords::All,
            h,
        )?);
    }
    push("max pooling (2x2/global/channel)", acc);

    // --- resample / concat ---
    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(5000 + t as u64));
        let x = rand_leaf(&[2, 3, 3], &mut rng);
        let y = rand_leaf(&[1, 3, 3], &mut rng);
        acc.merge(&check_fn(
            |i| {
                let up = i[0].resample(6, 6, ResampleMode::Bilinear)?;
                let nn = i[0].resample(2, 2, ResampleMode::Nearest)?;
                let cat = Tensor::concat(&[i[0].clone(), i[1].clone()], 0)?;
                up.sum_all()
                    .add(&nn.sum_all())?
                    .add(&cat.mean_all())
            },
            &[x, y],
            Coords::All,
            h,
        )?);
    }
    push("resample/concat", acc);

    // --- batch norm (training mode) ---
    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(6000 + t as u64));
        let x = rand_leaf(&[2, 3, 4, 4], &mut rng);
        let bn = BatchNorm2d::new(3)?;
        acc.merge(&check_fn(
            |i| {
                let y = bn.forward(&i[0], true)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[x],
            Coords::All,
            h,
        )?);
    }
    push("batchnorm2d", acc);

    // --- losses ---
    let mut acc = CheckResult::default();
    let cfg = LossConfig::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(7000 + t as u64));
        let p = rand_unit_leaf(&[4, 4], &mut rng);
        let g = rand_unit_leaf(&[4, 4], &mut rng);
        acc.merge(&check_fn(
            |i| {
                let pair = SaliencyPair::new(i[0].clone(), i[1].clone())?;
                let b = bce_loss(&pair, &cfg)?;
                let j = jhol_loss(&pair, &cfg)?;
                b.add(&j)
            },
            &[p, g],
            Coords::All,
            h,
        )?);
    }
    push("bce+jhol", acc);

    // --- full modules: sampled coordinates ---
    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(8000 + t as u64));
        let block = NdamBlock::new(8, true, true, &mut rng)?;
        let a = rand_leaf(&[8, 4, 4], &mut rng);
        let b = rand_leaf(&[8, 4, 4], &mut rng);
        acc.merge(&check_fn(
            |i| {
                let y = block.forward(&i[0], &i[1])?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[a, b],
            Coords::Sample {
                count: 6,
                seed: base_seed.wrapping_add(80_000 + t as u64),
            },
            h,
        )?);
    }
    push("ndam block", acc);

    let mut acc = CheckResult::default();
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(9000 + t as u64));
        let block = AiamBlock::new(4, 6, 8, true, true, &mut rng)?;
        let low = rand_leaf(&[4, 8, 8], &mut rng);
        let mid = rand_leaf(&[6, 4, 4], &mut rng);
        let high = rand_leaf(&[8, 2, 2], &mut rng);
        acc.merge(&check_fn(
            |i| {
                let y = block.forward(&i[0], &i[1], &i[2], true)?;
                Ok(y.mul(&y)?.sum_all())
            },
            &[low, mid, high],
            Coords::Sample {
                count: 4,
                seed: base_seed.wrapping_add(90_000 + t as u64),
            },
            h,
        )?);
    }
    push("aiam block", acc);

    let mut acc = CheckResult::default();
    let net_cfg = ModelConfig {
        channels: alloc::vec![4, 4, 8, 8, 8],
        input: 32,
        ndam_p1: true,
        ndam_p2: true,
        aiam_i1: true,
        aiam_i2: true,
        side_outputs: false,
    };
    for t in 0..trials {
        let mut rng = Rng::seed_from_u64(base_seed.wrapping_add(10_000 + t as u64));
        let model = Model::build(net_cfg.clone(), base_seed.wrapping_add(t as u64))?;
        let rgb = rand_unit_leaf(&[3, 32, 32], &mut rng);
        let depth = rand_unit_leaf(&[1, 32, 32], &mut rng);
        let gt = {
            let data = (0..32 * 32).map(|_| if rng.chance(0.3) { 1.0 } else { 0.0 }).collect();
            Tensor::new(&[32, 32], data)?
        };
        acc.merge(&check_fn(
            |i| {
                let out = model.forward(&i[0], &i[1], true)?;
                let pred = out.saliency.reshape(&[32, 32])?;
                let pair = SaliencyPair::new(pred, i[2].clone())?;
                crate::loss::total_loss(&pair, &[], &cfg)
            },
            &[rgb, depth, gt],
            Coords::Sample {
                count: 3,
                seed: base_seed.wrapping_add(100_000 + t as u64),
            },
            h,
        )?);
    }
    push("full network (32x32 inputs)", acc);

    Ok(entries)
}
