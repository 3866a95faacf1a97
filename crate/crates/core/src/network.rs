//! The full two-stream RGB-D saliency network: 5-stage encoders for both
//! modalities, nested dual attention on the fused features of levels 3-5,
//! adjacent aggregation of the RGB features at levels 2-4, and a top-down
//! decoder with concat-reduce lateral fusion and a sigmoid head.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::aiam::{AiamBlock, DecoderFuse};
use crate::error::{Error, Result};
use crate::ndam::NdamBlock;
use crate::nn::{BatchNorm2d, Conv2d, ConvBnRelu, Module, Param};
use crate::rng::Rng;
use crate::tensor::{ResampleMode, Tensor};
use crate::dim_err;

pub const NDAM_LEVELS: [usize; 3] = [3, 4, 5];
pub const AIAM_LEVELS: [usize; 3] = [2, 3, 4];

/// Architecture and ablation switches.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    /// Channel width of each of the 5 encoder stages.
    pub channels: Vec<usize>,
    /// Square input resolution; must be divisible by 32.
    pub input: usize,
    pub ndam_p1: bool,
    pub ndam_p2: bool,
    pub aiam_i1: bool,
    pub aiam_i2: bool,
    /// Emit per-level side predictions from the decoder (levels 2-4).
    pub side_outputs: bool,
}

impl ModelConfig {
    pub fn toy() -> ModelConfig {
        ModelConfig {
            channels: vec![16, 32, 64, 96, 128],
            input: 64,
            ndam_p1: true,
            ndam_p2: true,
            aiam_i1: true,
            aiam_i2: true,
            side_outputs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != 5 {
            return Err(Error::Config(alloc::format!(
                "expected 5 stage channel counts, got {}",
                self.channels.len()
            )));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::Config(String::from("zero-width encoder stage")));
        }
        if self.input % 32 != 0 || self.input == 0 {
            return Err(Error::Config(alloc::format!(
                "input resolution {} must be a positive multiple of 32",
                self.input
            )));
        }
        Ok(())
    }
}

/// Report of the realized wiring, used by ablation checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchitectureAudit {
    pub ndam_levels: Vec<usize>,
    pub aiam_levels: Vec<usize>,
    pub ndam_p1: bool,
    pub ndam_p2: bool,
    pub aiam_i1: bool,
    pub aiam_i2: bool,
    pub side_outputs: bool,
}

/// One encoder stage: 2x max pool then conv-BN-ReLU.
struct EncoderStage {
    block: ConvBnRelu,
}

struct Encoder {
    stages: Vec<EncoderStage>,
}

impl Encoder {
    fn new(in_channels: usize, widths: &[usize], rng: &mut Rng) -> Result<Encoder> {
        let mut stages = Vec::new();
        let mut cin = in_channels;
        for &cout in widths {
            stages.push(EncoderStage {
                block: ConvBnRelu::new(cin, cout, 3, 1, rng)?,
            });
            cin = cout;
        }
        Ok(Encoder { stages })
    }

    /// Returns the 5 per-level feature maps, level i at 1/2^i resolution.
    fn forward(&self, x: &Tensor, training: bool) -> Result<Vec<Tensor>> {
        let mut feats = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        for stage in &self.stages {
            cur = stage.block.forward(&cur.max_pool2()?, training)?;
            feats.push(cur.clone());
        }
        Ok(feats)
    }
}

impl Module for Encoder {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.block.visit_params(&alloc::format!("{prefix}.stage{}", i + 1), f);
        }
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        for (i, s) in self.stages.iter().enumerate() {
            s.block.visit_params_ref(&alloc::format!("{prefix}.stage{}", i + 1), f);
        }
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        for (i, s) in self.stages.iter().enumerate() {
            s.block.visit_stats(&alloc::format!("{prefix}.stage{}", i + 1), f);
        }
    }
}

/// Forward output: the final saliency map plus any side predictions.
pub struct ModelOutput {
    /// [1, H, W] saliency in (0,1) at the configured input resolution.
    pub saliency: Tensor,
    /// Side predictions (levels 2..4, same resolution), when enabled.
    pub side: Vec<Tensor>,
}

pub struct Model {
    pub config: ModelConfig,
    rgb_encoder: Encoder,
    depth_encoder: Encoder,
    /// Fusion blocks for levels 3,4,5 (in that order).
    ndam: Vec<NdamBlock>,
    /// Aggregation blocks for levels 2,3,4 (in that order).
    aiam: Vec<AiamBlock>,
    /// 1x1 channel-reduction convs between decoder levels (5->4, 4->3, 3->2, 2->1).
    dec_reduce: Vec<Conv2d>,
    /// 1x1 alignment of aggregated RGB features, levels 4,3,2.
    align: Vec<Conv2d>,
    /// Concat-reduce fusion at levels 4,3,2.
    fuse: Vec<DecoderFuse>,
    /// Level-1 concat fusion and the prediction head.
    level1_fuse: ConvBnRelu,
    head: Conv2d,
    side_heads: Vec<Conv2d>,
}

impl Model {
    /// Deterministic construction from a seed.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = Rng::seed_from_u64(seed);
        let ch = &config.channels;
        let rgb_encoder = Encoder::new(3, ch, &mut rng)?;
        let depth_encoder = Encoder::new(1, ch, &mut rng)?;
        let ndam = NDAM_LEVELS
            .iter()
            .map(|&lvl| NdamBlock::new(ch[lvl - 1], config.ndam_p1, config.ndam_p2, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let aiam = AIAM_LEVELS
            .iter()
            .map(|&lvl| {
                AiamBlock::new(
                    ch[lvl - 2],
                    ch[lvl - 1],
                    ch[lvl],
                    config.aiam_i1,
                    config.aiam_i2,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let dec_reduce = (1..5)
            .rev()
            .map(|i| Conv2d::new(ch[i], ch[i - 1], 1, 1, 0, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let align = [4usize, 3, 2]
            .iter()
            .map(|&lvl| Conv2d::new(ch[lvl - 1], ch[lvl - 1], 1, 1, 0, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let fuse = [4usize, 3, 2]
            .iter()
            .map(|&lvl| DecoderFuse::new(ch[lvl - 1], &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let level1_fuse = ConvBnRelu::new(2 * ch[0], ch[0], 3, 1, &mut rng)?;
        let head = Conv2d::new(ch[0], 1, 1, 1, 0, &mut rng)?;
        let side_heads = if config.side_outputs {
            [4usize, 3, 2]
                .iter()
                .map(|&lvl| Conv2d::new(ch[lvl - 1], 1, 1, 1, 0, &mut rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Model {
            config,
            rgb_encoder,
            depth_encoder,
            ndam,
            aiam,
            dec_reduce,
            align,
            fuse,
            level1_fuse,
            head,
            side_heads,
        })
    }

    pub fn audit(&self) -> ArchitectureAudit {
        ArchitectureAudit {
            ndam_levels: NDAM_LEVELS.to_vec(),
            aiam_levels: AIAM_LEVELS.to_vec(),
            ndam_p1: self.ndam.iter().all(|b| b.has_phase1()),
            ndam_p2: self.ndam.iter().all(|b| b.has_phase2()),
            aiam_i1: self.aiam.iter().all(|b| b.has_progressive()),
            aiam_i2: self.aiam.iter().all(|b| b.has_jumping()),
            side_outputs: !self.side_heads.is_empty(),
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params_ref("", &mut |_, p| n += p.tensor().len());
        n
    }

    pub fn forward(&self, rgb: &Tensor, depth: &Tensor, training: bool) -> Result<ModelOutput> {
        let r = self.config.input;
        if rgb.shape() != [3, r, r] {
            return Err(dim_err!(
                "rgb input must be [3,{r},{r}], got {:?}",
                rgb.shape()
            ));
        }
        if depth.shape() != [1, r, r] {
            return Err(dim_err!(
                "depth input must be [1,{r},{r}], got {:?}",
                depth.shape()
            ));
        }
        let f_rgb = self.rgb_encoder.forward(rgb, training)?;
        let f_d = self.depth_encoder.forward(depth, training)?;

        // fused + attention-enhanced features at levels 3..5
        let mut f_cm = Vec::with_capacity(3);
        for (k, &lvl) in NDAM_LEVELS.iter().enumerate() {
            let out = self.ndam[k]
                .forward(&f_rgb[lvl - 1], &f_d[lvl - 1])
                .map_err(|e| dim_err!("ndam level {lvl}: {e}"))?;
            f_cm.push(out);
        }

        // aggregated RGB features at levels 2..4
        let mut f_agg = Vec::with_capacity(3);
        for (k, &lvl) in AIAM_LEVELS.iter().enumerate() {
            let out = self.aiam[k]
                .forward(&f_rgb[lvl - 2], &f_rgb[lvl - 1], &f_rgb[lvl], training)
                .map_err(|e| dim_err!("aiam level {lvl}: {e}"))?;
            f_agg.push(out);
        }
        let agg_at = |lvl: usize| &f_agg[AIAM_LEVELS.iter().position(|&l| l == lvl).unwrap()];

        // decoder, top-down from the enhanced level-5 features
        let mut dec = f_cm[2].clone(); // level 5
        let mut side_feats = Vec::new();
        for (step, &lvl) in [4usize, 3, 2].iter().enumerate() {
            let (th, tw) = {
                let s = dec.shape();
                (s[1] * 2, s[2] * 2)
            };
            let up = self.dec_reduce[step]
                .forward(&dec)?
                .resample(th, tw, ResampleMode::Bilinear)?;
            let f_rgbd = if lvl >= 3 {
                // enhanced cross-modal features join at their level
                up.add(&f_cm[lvl - 3])
                    .map_err(|e| dim_err!("decoder level {lvl}: {e}"))?
            } else {
                up
            };
            let aligned = self.align[step].forward(agg_at(lvl))?;
            dec = self.fuse[step]
                .forward(&f_rgbd, &aligned)
                .map_err(|e| dim_err!("decoder fuse level {lvl}: {e}"))?;
            if !self.side_heads.is_empty() {
                side_feats.push((step, dec.clone()));
            }
        }

        // level 1: join the finest RGB features, then predict
        let (th, tw) = {
            let s = dec.shape();
            (s[1] * 2, s[2] * 2)
        };
        let up = self.dec_reduce[3]
            .forward(&dec)?
            .resample(th, tw, ResampleMode::Bilinear)?;
        let cat = Tensor::concat(&[up, f_rgb[0].clone()], 0)?;
        let fine = self.level1_fuse.forward(&cat, training)?;
        let logits = self.head.forward(&fine)?;
        let saliency = logits
            .sigmoid()
            .resample(r, r, ResampleMode::Bilinear)?;

        let mut side = Vec::new();
        for (step, feat) in side_feats {
            let s = self.side_heads[step]
                .forward(&feat)?
                .sigmoid()
                .resample(r, r, ResampleMode::Bilinear)?;
            side.push(s);
        }
        Ok(ModelOutput { saliency, side })
    }

    /// Inference at arbitrary resolution: resize inputs to the configured
    /// resolution, forward in eval mode, resize back, quantize to 0..255.
    pub fn predict(&self, rgb: &Tensor, depth: &Tensor) -> Result<(Vec<u8>, usize, usize)> {
        let (h, w) = match rgb.shape() {
            [3, h, w] => (*h, *w),
            s => return Err(dim_err!("predict rgb must be [3,H,W], got {:?}", s)),
        };
        if depth.shape() != [1, h, w] {
            return Err(dim_err!(
                "predict depth must be [1,{h},{w}], got {:?}",
                depth.shape()
            ));
        }
        let r = self.config.input;
        let rgb_r = rgb.detach().resample(r, r, ResampleMode::Bilinear)?;
        let depth_r = depth.detach().resample(r, r, ResampleMode::Bilinear)?;
        let out = self.forward(&rgb_r, &depth_r, false)?;
        let full = out.saliency.resample(h, w, ResampleMode::Bilinear)?;
        let bytes = full
            .data()
            .iter()
            .map(|&v| libm::round(v.clamp(0.0, 1.0) * 255.0) as u8)
            .collect();
        Ok((bytes, h, w))
    }
}

impl Module for Model {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        let p = |s: &str| {
            if prefix.is_empty() {
                String::from(s)
            } else {
                alloc::format!("{prefix}.{s}")
            }
        };
        self.rgb_encoder.visit_params(&p("rgb_enc"), f);
        self.depth_encoder.visit_params(&p("depth_enc"), f);
        for (k, &lvl) in NDAM_LEVELS.iter().enumerate() {
            self.ndam[k].visit_params(&p(&alloc::format!("ndam{lvl}")), f);
        }
        for (k, &lvl) in AIAM_LEVELS.iter().enumerate() {
            self.aiam[k].visit_params(&p(&alloc::format!("aiam{lvl}")), f);
        }
        for (i, c) in self.dec_reduce.iter_mut().enumerate() {
            c.visit_params(&p(&alloc::format!("dec_reduce{}", 5 - i)), f);
        }
        let lvls = [4usize, 3, 2];
        for (i, c) in self.align.iter_mut().enumerate() {
            c.visit_params(&p(&alloc::format!("align{}", lvls[i])), f);
        }
        for (i, c) in self.fuse.iter_mut().enumerate() {
            c.visit_params(&p(&alloc::format!("fuse{}", lvls[i])), f);
        }
        self.level1_fuse.visit_params(&p("level1_fuse"), f);
        self.head.visit_params(&p("head"), f);
        for (i, c) in self.side_heads.iter_mut().enumerate() {
            c.visit_params(&p(&alloc::format!("side{}", lvls[i])), f);
        }
    }

    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        let p = |s: &str| {
            if prefix.is_empty() {
                String::from(s)
            } else {
                alloc::format!("{prefix}.{s}")
            }
        };
        self.rgb_encoder.visit_params_ref(&p("rgb_enc"), f);
        self.depth_encoder.visit_params_ref(&p("depth_enc"), f);
        for (k, &lvl) in NDAM_LEVELS.iter().enumerate() {
            self.ndam[k].visit_params_ref(&p(&alloc::format!("ndam{lvl}")), f);
        }
        for (k, &lvl) in AIAM_LEVELS.iter().enumerate() {
            self.aiam[k].visit_params_ref(&p(&alloc::format!("aiam{lvl}")), f);
        }
        for (i, c) in self.dec_reduce.iter().enumerate() {
            c.visit_params_ref(&p(&alloc::format!("dec_reduce{}", 5 - i)), f);
        }
        let lvls = [4usize, 3, 2];
        for (i, c) in self.align.iter().enumerate() {
            c.visit_params_ref(&p(&alloc::format!("align{}", lvls[i])), f);
        }
        for (i, c) in self.fuse.iter().enumerate() {
            c.visit_params_ref(&p(&alloc::format!("fuse{}", lvls[i])), f);
        }
        self.level1_fuse.visit_params_ref(&p("level1_fuse"), f);
        self.head.visit_params_ref(&p("head"), f);
        for (i, c) in self.side_heads.iter().enumerate() {
            c.visit_params_ref(&p(&alloc::format!("side{}", lvls[i])), f);
        }
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        let p = |s: &str| {
            if prefix.is_empty() {
                String::from(s)
            } else {
                alloc::format!("{prefix}.{s}")
            }
        };
        self.rgb_encoder.visit_stats(&p("rgb_enc"), f);
        self.depth_encoder.visit_stats(&p("depth_enc"), f);
        for (k, &lvl) in NDAM_LEVELS.iter().enumerate() {
            self.ndam[k].visit_stats(&p(&alloc::format!("ndam{lvl}")), f);
        }
        for (k, &lvl) in AIAM_LEVELS.iter().enumerate() {
            self.aiam[k].visit_stats(&p(&alloc::format!("aiam{lvl}")), f);
        }
        for (i, c) in self.dec_reduce.iter().enumerate() {
            c.visit_stats(&p(&alloc::format!("dec_reduce{}", 5 - i)), f);
        }
        let lvls = [4usize, 3, 2];
        for (i, c) in self.align.iter().enumerate() {
            c.visit_stats(&p(&alloc::format!("align{}", lvls[i])), f);
        }
        for (i, c) in self.fuse.iter().enumerate() {
            c.visit_stats(&p(&alloc::format!("fuse{}", lvls[i])), f);
        }
        self.level1_fuse.visit_stats(&p("level1_fuse"), f);
        self.head.visit_stats(&p("head"), f);
        for (i, c) in self.side_heads.iter().enumerate() {
            c.visit_stats(&p(&alloc::format!("side{}", lvls[i])), f);
        }
    }
}

/// Gather (name, values, shape) snapshots of every parameter, for
/// checkpointing.
pub fn named_parameters(model: &Model) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out = Vec::new();
    model.visit_params_ref("", &mut |name, p| {
        out.push((name, p.tensor().shape().to_vec(), p.tensor().data().to_vec()));
    });
    out
}

/// Load parameter values by name. Every model parameter must be present
/// and every checkpoint entry must be consumed, so an architecture
/// mismatch fails in either direction.
pub fn load_parameters(model: &mut Model, values: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
    let mut failed: Option<Error> = None;
    let mut used = alloc::vec![false; values.len()];
    model.visit_params("", &mut |name, p| {
        if failed.is_some() {
            return;
        }
        match values.iter().position(|(n, _, _)| *n == name) {
            Some(idx) => {
                used[idx] = true;
                let (_, shape, data) = &values[idx];
                if shape != p.tensor().shape() {
                    failed = Some(dim_err!(
                        "checkpoint shape {:?} vs model {:?} for '{name}'",
                        shape,
                        p.tensor().shape()
                    ));
                    return;
                }
                if let Err(e) = p.set_values(data.clone()) {
                    failed = Some(e);
                }
            }
            None => {
                failed = Some(Error::Contract(alloc::format!(
                    "checkpoint missing parameter '{name}'"
                )));
            }
        }
    });
    if let Some(e) = failed {
        return Err(e);
    }
    if let Some(idx) = used.iter().position(|&u| !u) {
        return Err(Error::Contract(alloc::format!(
            "checkpoint parameter '{}' does not exist in the model",
            values[idx].0
        )));
    }
    Ok(())
}

/// Snapshot of every batch-norm running mean/variance, for checkpointing.
pub fn named_stats(model: &Model) -> Vec<(String, Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    model.visit_stats("", &mut |name, bn| {
        let (mean, var) = bn.running_stats();
        out.push((name, mean, var));
    });
    out
}

/// Restore batch-norm running statistics by name; strict in both
/// directions like parameter loading.
pub fn load_stats(model: &Model, stats: &[(String, Vec<f64>, Vec<f64>)]) -> Result<()> {
    let mut failed: Option<Error> = None;
    let mut used = alloc::vec![false; stats.len()];
    model.visit_stats("", &mut |name, bn| {
        if failed.is_some() {
            return;
        }
        match stats.iter().position(|(n, _, _)| *n == name) {
            Some(idx) => {
                used[idx] = true;
                let (_, mean, var) = &stats[idx];
                let want = bn.running_stats().0.len();
                if mean.len() != want || var.len() != want {
                    failed = Some(dim_err!(
                        "running stats for '{name}': {}/{} values vs {want} channels",
                        mean.len(),
                        var.len()
                    ));
                    return;
                }
                bn.set_running_stats(mean.clone(), var.clone());
            }
            None => {
                failed = Some(Error::Contract(alloc::format!(
                    "checkpoint missing running stats for '{name}'"
                )));
            }
        }
    });
    if let Some(e) = failed {
        return Err(e);
    }
    if let Some(idx) = used.iter().position(|&u| !u) {
        return Err(Error::Contract(alloc::format!(
            "checkpoint stats '{}' have no batch-norm layer in the model",
            stats[idx].0
        )));
    }
    Ok(())
}
