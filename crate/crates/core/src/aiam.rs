//! Adjacent interactive aggregation of three neighboring encoder levels.
//!
//! Two interaction paths run at the middle level's resolution: a
//! progressive path (low -> mid, then -> high) and a jumping path
//! (low + high first, then mid). Their sum passes through a residual
//! block. Fusion steps are concat followed by a 3x3 conv-BN-ReLU.

use alloc::string::String;

use crate::error::Result;
use crate::nn::{BatchNorm2d, Conv2d, ConvBnRelu, Module, Param};
use crate::rng::Rng;
use crate::tensor::{ResampleMode, Tensor};
use crate::dim_err;

fn chw(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [c, h, w] => Ok((*c, *h, *w)),
        s => Err(dim_err!("expected [C,H,W], got {:?}", s)),
    }
}

/// Check the low/mid/high resolutions step by exactly 2x.
fn check_adjacent(f_low: &Tensor, f_mid: &Tensor, f_high: &Tensor) -> Result<()> {
    let (_, hl, wl) = chw(f_low)?;
    let (_, hm, wm) = chw(f_mid)?;
    let (_, hh, wh) = chw(f_high)?;
    if hl != 2 * hm || wl != 2 * wm || hm != 2 * hh || wm != 2 * wh {
        return Err(dim_err!(
            "aiam levels must step by 2x: {}x{} / {}x{} / {}x{}",
            hl, wl, hm, wm, hh, wh
        ));
    }
    Ok(())
}

/// One concat-then-reduce fusion step.
struct Fusion {
    block: ConvBnRelu,
}

impl Fusion {
    fn new(cin: usize, cout: usize, rng: &mut Rng) -> Result<Fusion> {
        Ok(Fusion {
            block: ConvBnRelu::new(cin, cout, 3, 1, rng)?,
        })
    }

    fn forward(&self, a: &Tensor, b: &Tensor, training: bool) -> Result<Tensor> {
        let cat = Tensor::concat(&[a.clone(), b.clone()], 0)?;
        self.block.forward(&cat, training)
    }
}

impl Module for Fusion {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.block.visit_params(prefix, f);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.block.visit_params_ref(prefix, f);
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        self.block.visit_stats(prefix, f);
    }
}

/// Residual block: two conv-BN-ReLU stages with an identity skip.
pub struct ResidualBlock {
    first: ConvBnRelu,
    second: ConvBnRelu,
}

impl ResidualBlock {
    pub fn new(c: usize, rng: &mut Rng) -> Result<ResidualBlock> {
        Ok(ResidualBlock {
            first: ConvBnRelu::new(c, c, 3, 1, rng)?,
            second: ConvBnRelu::new(c, c, 3, 1, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<Tensor> {
        let y = self.second.forward(&self.first.forward(x, training)?, training)?;
        y.add(x)
    }
}

impl Module for ResidualBlock {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.first.visit_params(&alloc::format!("{prefix}.first"), f);
        self.second.visit_params(&alloc::format!("{prefix}.second"), f);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.first.visit_params_ref(&alloc::format!("{prefix}.first"), f);
        self.second.visit_params_ref(&alloc::format!("{prefix}.second"), f);
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        self.first.visit_stats(&alloc::format!("{prefix}.first"), f);
        self.second.visit_stats(&alloc::format!("{prefix}.second"), f);
    }
}

/// Aggregation block for one level triple (c_low, c_mid, c_high channels).
/// Either path can be disabled; with both disabled the block passes the
/// middle feature through unchanged.
pub struct AiamBlock {
    pub c_mid: usize,
    progressive: Option<(Fusion, Fusion)>,
    jumping: Option<(Fusion, Fusion)>,
    residual: Option<ResidualBlock>,
}

impl AiamBlock {
    pub fn new(
        c_low: usize,
        c_mid: usize,
        c_high: usize,
        i1: bool,
        i2: bool,
        rng: &mut Rng,
    ) -> Result<AiamBlock> {
        let progressive = if i1 {
            Some((
                Fusion::new(c_low + c_mid, c_mid, rng)?,
                Fusion::new(c_mid + c_high, c_mid, rng)?,
            ))
        } else {
            None
        };
        let jumping = if i2 {
            Some((
                Fusion::new(c_low + c_high, c_mid, rng)?,
                Fusion::new(c_mid + c_mid, c_mid, rng)?,
            ))
        } else {
            None
        };
        let residual = if i1 || i2 {
            Some(ResidualBlock::new(c_mid, rng)?)
        } else {
            None
        };
        Ok(AiamBlock {
            c_mid,
            progressive,
            jumping,
            residual,
        })
    }

    pub fn has_progressive(&self) -> bool {
        self.progressive.is_some()
    }

    pub fn has_jumping(&self) -> bool {
        self.jumping.is_some()
    }

    /// Progressive path: low joins mid first, the result joins high.
    pub fn interaction_i1(
        &self,
        f_low: &Tensor,
        f_mid: &Tensor,
        f_high: &Tensor,
        training: bool,
    ) -> Result<Tensor> {
        check_adjacent(f_low, f_mid, f_high)?;
        let (fuse_lm, fuse_h) = self
            .progressive
            .as_ref()
            .ok_or_else(|| dim_err!("progressive path disabled"))?;
        let (_, hm, wm) = chw(f_mid)?;
        let low = f_low.max_pool2()?;
        let step1 = fuse_lm.forward(&low, f_mid, training)?;
        let high = f_high.resample(hm, wm, ResampleMode::Bilinear)?;
        fuse_h.forward(&step1, &high, training)
    }

    /// Jumping path: low and high join each other first, mid joins last.
    pub fn interaction_i2(
        &self,
        f_low: &Tensor,
        f_mid: &Tensor,
        f_high: &Tensor,
        training: bool,
    ) -> Result<Tensor> {
        check_adjacent(f_low, f_mid, f_high)?;
        let (fuse_lh, fuse_m) = self
            .jumping
            .as_ref()
            .ok_or_else(|| dim_err!("jumping path disabled"))?;
        let (_, hm, wm) = chw(f_mid)?;
        let low = f_low.max_pool2()?;
        let high = f_high.resample(hm, wm, ResampleMode::Bilinear)?;
        let jump = fuse_lh.forward(&low, &high, training)?;
        fuse_m.forward(&jump, f_mid, training)
    }

    /// Sum of the enabled paths, refined by the residual block.
    pub fn forward(
        &self,
        f_low: &Tensor,
        f_mid: &Tensor,
        f_high: &Tensor,
        training: bool,
    ) -> Result<Tensor> {
        check_adjacent(f_low, f_mid, f_high)?;
        let combined = match (&self.progressive, &self.jumping) {
            (Some(_), Some(_)) => {
                let a = self.interaction_i1(f_low, f_mid, f_high, training)?;
                let b = self.interaction_i2(f_low, f_mid, f_high, training)?;
                a.add(&b)?
            }
            (Some(_), None) => self.interaction_i1(f_low, f_mid, f_high, training)?,
            (None, Some(_)) => self.interaction_i2(f_low, f_mid, f_high, training)?,
            (None, None) => return Ok(f_mid.clone()),
        };
        match &self.residual {
            Some(r) => r.forward(&combined, training),
            None => Ok(combined),
        }
    }
}

impl Module for AiamBlock {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        if let Some((a, b)) = &mut self.progressive {
            a.visit_params(&alloc::format!("{prefix}.i1.fuse_low_mid"), f);
            b.visit_params(&alloc::format!("{prefix}.i1.fuse_high"), f);
        }
        if let Some((a, b)) = &mut self.jumping {
            a.visit_params(&alloc::format!("{prefix}.i2.fuse_low_high"), f);
            b.visit_params(&alloc::format!("{prefix}.i2.fuse_mid"), f);
        }
        if let Some(r) = &mut self.residual {
            r.visit_params(&alloc::format!("{prefix}.residual"), f);
        }
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        if let Some((a, b)) = &self.progressive {
            a.visit_params_ref(&alloc::format!("{prefix}.i1.fuse_low_mid"), f);
            b.visit_params_ref(&alloc::format!("{prefix}.i1.fuse_high"), f);
        }
        if let Some((a, b)) = &self.jumping {
            a.visit_params_ref(&alloc::format!("{prefix}.i2.fuse_low_high"), f);
            b.visit_params_ref(&alloc::format!("{prefix}.i2.fuse_mid"), f);
        }
        if let Some(r) = &self.residual {
            r.visit_params_ref(&alloc::format!("{prefix}.residual"), f);
        }
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        if let Some((a, b)) = &self.progressive {
            a.visit_stats(&alloc::format!("{prefix}.i1.fuse_low_mid"), f);
            b.visit_stats(&alloc::format!("{prefix}.i1.fuse_high"), f);
        }
        if let Some((a, b)) = &self.jumping {
            a.visit_stats(&alloc::format!("{prefix}.i2.fuse_low_high"), f);
            b.visit_stats(&alloc::format!("{prefix}.i2.fuse_mid"), f);
        }
        if let Some(r) = &self.residual {
            r.visit_stats(&alloc::format!("{prefix}.residual"), f);
        }
    }
}

/// Decoder-side fusion: concat the decoder feature with the aggregated
/// RGB feature and reduce back to the level width with a 3x3 conv.
pub struct DecoderFuse {
    conv: Conv2d,
    pub channels: usize,
}

impl DecoderFuse {
    pub fn new(channels: usize, rng: &mut Rng) -> Result<DecoderFuse> {
        Ok(DecoderFuse {
            conv: Conv2d::new(2 * channels, channels, 3, 1, 1, rng)?,
            channels,
        })
    }

    pub fn forward(&self, f_rgbd: &Tensor, f_rgb_agg: &Tensor) -> Result<Tensor> {
        let (_, hd, wd) = chw(f_rgbd)?;
        let (_, ha, wa) = chw(f_rgb_agg)?;
        let dec = if (hd, wd) != (ha, wa) {
            f_rgbd.resample(ha, wa, ResampleMode::Bilinear)?
        } else {
            f_rgbd.clone()
        };
        let cat = Tensor::concat(&[dec, f_rgb_agg.clone()], 0)?;
        self.conv.forward(&cat)
    }
}

impl Module for DecoderFuse {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.conv.visit_params(prefix, f);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.conv.visit_params_ref(prefix, f);
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        self.conv.visit_stats(prefix, f);
    }
}
