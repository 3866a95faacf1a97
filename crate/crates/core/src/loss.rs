//! Saliency training losses: pixelwise binary cross entropy plus four
//! ratio terms (false-positive mass over prediction mass, false-negative
//! mass over ground-truth mass, error over union, and negative-agreement
//! over non-error mass), combined with trade-off weights.

use alloc::vec::Vec;

use crate::dim_err;
use crate::error::Result;
use crate::tensor::Tensor;

/// Trade-off weights and the numeric-stability epsilon.
#[derive(Clone, Copy, Debug)]
pub struct LossConfig {
    pub lambda: [f64; 4],
    pub mu: f64,
    pub eps: f64,
    /// Use the written sum reduction for BCE instead of the per-pixel mean.
    pub bce_sum: bool,
    /// Replace the negative-agreement term by its complement (1 - L4).
    pub l4_complement: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: [1.0; 4],
            mu: 1.0,
            eps: 1e-8,
            bce_sum: false,
            l4_complement: false,
        }
    }
}

/// A prediction map and its ground truth, same H x W, values in [0,1].
pub struct SaliencyPair {
    pub pred: Tensor,
    pub gt: Tensor,
}

impl SaliencyPair {
    pub fn new(pred: Tensor, gt: Tensor) -> Result<SaliencyPair> {
        if pred.shape() != gt.shape() {
            return Err(dim_err!(
                "saliency pair shapes differ: pred {:?} vs gt {:?}",
                pred.shape(),
                gt.shape()
            ));
        }
        Ok(SaliencyPair { pred, gt })
    }
}

/// The four ratio terms; `degenerate` flags an (almost) all-zero ground
/// truth whose false-negative ratio is held up by the epsilon guard alone.
pub struct JholTerms {
    pub terms: [Tensor; 4],
    pub degenerate: bool,
}

/// Binary cross entropy; predictions are clamped to [eps, 1-eps].
pub fn bce_loss(pair: &SaliencyPair, cfg: &LossConfig) -> Result<Tensor> {
    let p = pair.pred.clamp(cfg.eps, 1.0 - cfg.eps);
    let g = &pair.gt;
    let one_minus_p = p.neg().add_scalar(1.0);
    let one_minus_g = g.neg().add_scalar(1.0);
    let ll = g
        .mul(&p.ln())?
        .add(&one_minus_g.mul(&one_minus_p.ln())?)?;
    let total = ll.sum_all().neg();
    if cfg.bce_sum {
        Ok(total)
    } else {
        Ok(total.scale(1.0 / pair.pred.len() as f64))
    }
}

/// The four ratio terms, each differentiable, with eps-guarded denominators.
pub fn jhol_terms(pair: &SaliencyPair, cfg: &LossConfig) -> Result<JholTerms> {
    let eps = cfg.eps;
    let p = pair.pred.clamp(eps, 1.0 - eps);
    let g = &pair.gt;
    let one_minus_p = p.neg().add_scalar(1.0);
    let one_minus_g = g.neg().add_scalar(1.0);

    let fp = p.mul(&one_minus_g)?; // p(1-g)
    let fn_ = g.mul(&one_minus_p)?; // g(1-p)
    let tn = one_minus_p.mul(&one_minus_g)?; // (1-p)(1-g)

    let sum_p = p.sum_all();
    let sum_g = g.sum_all();
    let sum_fp = fp.sum_all();
    let sum_fn = fn_.sum_all();

    let l1 = sum_fp.div(&sum_p.add_scalar(eps))?;
    let l2 = sum_fn.div(&sum_g.add_scalar(eps))?;

    // union = p + g - pg
    let union = p.add(g)?.sub(&p.mul(g)?)?.sum_all();
    let l3 = sum_fp.add(&sum_fn)?.div(&union.add_scalar(eps))?;

    // non-error mass = 1 - p(1-g) - g(1-p)
    let agree = fp.add(&fn_)?.neg().add_scalar(1.0).sum_all();
    let l4_raw = tn.sum_all().div(&agree.add_scalar(eps))?;
    let l4 = if cfg.l4_complement {
        l4_raw.neg().add_scalar(1.0)
    } else {
        l4_raw
    };

    let degenerate = sum_g.item()? <= eps;
    Ok(JholTerms {
        terms: [l1, l2, l3, l4],
        degenerate,
    })
}

/// Weighted sum of the four ratio terms.
pub fn jhol_loss(pair: &SaliencyPair, cfg: &LossConfig) -> Result<Tensor> {
    let t = jhol_terms(pair, cfg)?;
    let mut acc = Tensor::scalar(0.0);
    for (term, lam) in t.terms.iter().zip(cfg.lambda) {
        if lam != 0.0 {
            acc = acc.add(&term.scale(lam))?;
        }
    }
    Ok(acc)
}

/// BCE + mu * (weighted ratio terms), summed over the final prediction and
/// any side-output pairs.
pub fn total_loss(pair: &SaliencyPair, side_pairs: &[SaliencyPair], cfg: &LossConfig) -> Result<Tensor> {
    let mut acc = single_total(pair, cfg)?;
    for side in side_pairs {
        acc = acc.add(&single_total(side, cfg)?)?;
    }
    Ok(acc)
}

fn single_total(pair: &SaliencyPair, cfg: &LossConfig) -> Result<Tensor> {
    let bce = bce_loss(pair, cfg)?;
    if cfg.mu == 0.0 {
        return Ok(bce);
    }
    bce.add(&jhol_loss(pair, cfg)?.scale(cfg.mu))
}

/// Plain-buffer evaluation of the four ratio terms, no graph involved.
/// Useful for logging; the differentiable path is `jhol_terms`.
pub fn jhol_values(pred: &[f64], gt: &[f64], eps: f64) -> [f64; 4] {
    let mut sp = 0.0;
    let mut sg = 0.0;
    let mut sfp = 0.0;
    let mut sfn = 0.0;
    let mut stn = 0.0;
    let mut sunion = 0.0;
    let mut sagree = 0.0;
    for (&p0, &g) in pred.iter().zip(gt) {
        let p = p0.clamp(eps, 1.0 - eps);
        sp += p;
        sg += g;
        sfp += p * (1.0 - g);
        sfn += g * (1.0 - p);
        stn += (1.0 - p) * (1.0 - g);
        sunion += p + g - p * g;
        sagree += 1.0 - p * (1.0 - g) - g * (1.0 - p);
    }
    [
        sfp / (sp + eps),
        sfn / (sg + eps),
        (sfp + sfn) / (sunion + eps),
        stn / (sagree + eps),
    ]
}

/// Convenience: tensors from raw [H,W] buffers.
pub fn pair_from_slices(pred: &[f64], gt: &[f64], h: usize, w: usize) -> Result<SaliencyPair> {
    SaliencyPair::new(
        Tensor::new(&[h, w], Vec::from(pred))?,
        Tensor::new(&[h, w], Vec::from(gt))?,
    )
}
