//! Nested dual attention over fused RGB + depth features.
//!
//! Phase 1 works on the flattened [C, X] view (X = H*W): a channel
//! affinity stage followed by a position affinity stage, both with
//! residual connections. Phase 2 gates the [C, H, W] view with a
//! channel gate (MLP over global max pooling) and a spatial gate
//! (7x7 conv over the channel-wise max map).

use alloc::string::String;
use alloc::vec;

use crate::error::Result;
use crate::nn::{BatchNorm2d, Conv2d, Linear, Module, Param};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{dim_err, Error};

/// Channel reduction for the position-attention projections.
pub fn reduced_channels(c: usize) -> usize {
    (c / 8).max(1)
}

/// MLP reduction ratio for the phase-2 channel gate.
pub const MLP_RATIO: usize = 8;
/// Kernel size of the phase-2 spatial gate conv.
pub const SPATIAL_GATE_KERNEL: usize = 7;

/// 1x1 projection on the [C, X] view: a learned [out, in] matrix plus bias.
struct Proj {
    weight: Param,
    bias: Param,
    n_in: usize,
}

impl Proj {
    fn new(n_in: usize, n_out: usize, rng: &mut Rng) -> Result<Proj> {
        let bound = libm::sqrt(6.0 / n_in as f64);
        let w = (0..n_out * n_in).map(|_| rng.range(-bound, bound)).collect();
        Ok(Proj {
            weight: Param::new(&[n_out, n_in], w)?,
            bias: Param::new(&[n_out, 1], vec![0.0; n_out])?,
            n_in,
        })
    }

    /// Identity-initialized square projection (test support).
    fn identity(n: usize) -> Result<Proj> {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Ok(Proj {
            weight: Param::new(&[n, n], w)?,
            bias: Param::new(&[n, 1], vec![0.0; n])?,
            n_in: n,
        })
    }

    fn forward(&self, f: &Tensor) -> Result<Tensor> {
        if f.shape().first() != Some(&self.n_in) {
            return Err(dim_err!(
                "projection expects {} channels, got {:?}",
                self.n_in,
                f.shape()
            ));
        }
        self.weight.tensor().matmul(f)?.add(self.bias.tensor())
    }
}

impl Module for Proj {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(alloc::format!("{prefix}.weight"), &mut self.weight);
        f(alloc::format!("{prefix}.bias"), &mut self.bias);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(alloc::format!("{prefix}.weight"), &self.weight);
        f(alloc::format!("{prefix}.bias"), &self.bias);
    }
    fn visit_stats(&self, _prefix: &str, _f: &mut dyn FnMut(String, &BatchNorm2d)) {}
}

/// The channel-affinity stage of phase 1.
pub struct ChannelAffinity {
    query: Proj,
    key: Proj,
    value: Proj,
}

impl ChannelAffinity {
    fn new(c: usize, rng: &mut Rng) -> Result<Self> {
        Ok(ChannelAffinity {
            query: Proj::new(c, c, rng)?,
            key: Proj::new(c, c, rng)?,
            value: Proj::new(c, c, rng)?,
        })
    }

    fn identity(c: usize) -> Result<Self> {
        Ok(ChannelAffinity {
            query: Proj::identity(c)?,
            key: Proj::identity(c)?,
            value: Proj::identity(c)?,
        })
    }

    /// out = softmax(Q K^T)^T V + f, with Q,K,V 1x1 projections of f.
    pub fn forward(&self, f: &Tensor) -> Result<Tensor> {
        let q = self.query.forward(f)?;
        let k = self.key.forward(f)?;
        let v = self.value.forward(f)?;
        let affinity = q.matmul(&k.t()?)?; // [C,C]
        let attn = affinity.softmax(1)?; // rows sum to 1
        attn.t()?.matmul(&v)?.add(f)
    }

    /// Row-stochastic attention matrix, for invariant checks.
    pub fn attention_matrix(&self, f: &Tensor) -> Result<Tensor> {
        let q = self.query.forward(f)?;
        let k = self.key.forward(f)?;
        q.matmul(&k.t()?)?.softmax(1)
    }
}

impl Module for ChannelAffinity {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.query.visit_params(&alloc::format!("{prefix}.query"), f);
        self.key.visit_params(&alloc::format!("{prefix}.key"), f);
        self.value.visit_params(&alloc::format!("{prefix}.value"), f);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.query.visit_params_ref(&alloc::format!("{prefix}.query"), f);
        self.key.visit_params_ref(&alloc::format!("{prefix}.key"), f);
        self.value.visit_params_ref(&alloc::format!("{prefix}.value"), f);
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        self.query.visit_stats(&alloc::format!("{prefix}.query"), f);
        self.key.visit_stats(&alloc::format!("{prefix}.key"), f);
        self.value.visit_stats(&alloc::format!("{prefix}.value"), f);
    }
}

/// The position-affinity stage of phase 1. Query/key/value run at C/8
/// channels; a trailing projection restores C channels.
pub struct PositionAffinity {
    query: Proj,
    key: Proj,
    value: Proj,
    out: Proj,
}

impl PositionAffinity {
    fn new(c: usize, rng: &mut Rng) -> Result<Self> {
        let cr = reduced_channels(c);
        Ok(PositionAffinity {
            query: Proj::new(c, cr, rng)?,
            key: Proj::new(c, cr, rng)?,
            value: Proj::new(c, cr, rng)?,
            out: Proj::new(cr, c, rng)?,
        })
    }

    fn identity(c: usize) -> Result<Self> {
        debug_assert_eq!(reduced_channels(c), c);
        Ok(PositionAffinity {
            query: Proj::identity(c)?,
            key: Proj::identity(c)?,
            value: Proj::identity(c)?,
            out: Proj::identity(c)?,
        })
    }

    /// out = W_o (V softmax(Q^T K)^T) + f.
    pub fn forward(&self, f: &Tensor) -> Result<Tensor> {
        let q = self.query.forward(f)?;
        let k = self.key.forward(f)?;
        let v = self.value.forward(f)?;
        let affinity = q.t()?.matmul(&k)?; // [X,X]
        let attn = affinity.softmax(1)?;
        let mixed = v.matmul(&attn.t()?)?; // [C/8,X]
        self.out.forward(&mixed)?.add(f)
    }

    pub fn attention_matrix(&self, f: &Tensor) -> Result<Tensor> {
        let q = self.query.forward(f)?;
        let k = self.key.forward(f)?;
        q.t()?.matmul(&k)?.softmax(1)
    }
}

impl Module for PositionAffinity {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.query.visit_params(&alloc::format!("{prefix}.query"), f);
        self.key.visit_params(&alloc::format!("{prefix}.key"), f);
        self.value.visit_params(&alloc::format!("{prefix}.value"), f);
        self.out.visit_params(&alloc::format!("{prefix}.out"), f);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.query.visit_params_ref(&alloc::format!("{prefix}.query"), f);
        self.key.visit_params_ref(&alloc::format!("{prefix}.key"), f);
        self.value.visit_params_ref(&alloc::format!("{prefix}.value"), f);
        self.out.visit_params_ref(&alloc::format!("{prefix}.out"), f);
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        self.query.visit_stats(&alloc::format!("{prefix}.query"), f);
        self.key.visit_stats(&alloc::format!("{prefix}.key"), f);
        self.value.visit_stats(&alloc::format!("{prefix}.value"), f);
        self.out.visit_stats(&alloc::format!("{prefix}.out"), f);
    }
}

/// Phase 2: channel gate then spatial gate, both multiplicative.
pub struct GatePhase {
    mlp_in: Linear,
    mlp_out: Linear,
    spatial: Conv2d,
    channels: usize,
}

impl GatePhase {
    fn new(c: usize, rng: &mut Rng) -> Result<Self> {
        let hidden = (c / MLP_RATIO).max(1);
        Ok(GatePhase {
            mlp_in: Linear::new(c, hidden, rng)?,
            mlp_out: Linear::new(hidden, c, rng)?,
            spatial: Conv2d::new(
                1,
                1,
                SPATIAL_GATE_KERNEL,
                1,
                SPATIAL_GATE_KERNEL / 2,
                rng,
            )?,
            channels: c,
        })
    }

    /// sigmoid(MLP(GMP(x))) as a [C,1,1] gate.
    pub fn channel_gate(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.channels;
        let pooled = x.global_max_pool()?.reshape(&[1, c])?;
        let h = self.mlp_in.forward(&pooled)?.relu();
        let gate = self.mlp_out.forward(&h)?.sigmoid();
        gate.reshape(&[c, 1, 1])
    }

    /// sigmoid(Conv(GMPC(x))) as a [1,H,W] gate.
    pub fn spatial_gate(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.spatial.forward(&x.channel_max_pool()?)?.sigmoid())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let gated = x.mul(&self.channel_gate(x)?)?;
        gated.mul(&self.spatial_gate(&gated)?)
    }
}

impl Module for GatePhase {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.mlp_in.visit_params(&alloc::format!("{prefix}.mlp_in"), f);
        self.mlp_out.visit_params(&alloc::format!("{prefix}.mlp_out"), f);
        self.spatial.visit_params(&alloc::format!("{prefix}.spatial"), f);
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.mlp_in.visit_params_ref(&alloc::format!("{prefix}.mlp_in"), f);
        self.mlp_out.visit_params_ref(&alloc::format!("{prefix}.mlp_out"), f);
        self.spatial.visit_params_ref(&alloc::format!("{prefix}.spatial"), f);
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        self.mlp_in.visit_stats(&alloc::format!("{prefix}.mlp_in"), f);
        self.mlp_out.visit_stats(&alloc::format!("{prefix}.mlp_out"), f);
        self.spatial.visit_stats(&alloc::format!("{prefix}.spatial"), f);
    }
}

/// One nested dual attention block at a fixed channel width.
/// Either phase can be disabled for ablation; with both disabled the
/// block is the identity on the fused features.
pub struct NdamBlock {
    pub channels: usize,
    phase1: Option<(ChannelAffinity, PositionAffinity)>,
    phase2: Option<GatePhase>,
}

impl NdamBlock {
    pub fn new(channels: usize, p1: bool, p2: bool, rng: &mut Rng) -> Result<NdamBlock> {
        let phase1 = if p1 {
            Some((ChannelAffinity::new(channels, rng)?, PositionAffinity::new(channels, rng)?))
        } else {
            None
        };
        let phase2 = if p2 { Some(GatePhase::new(channels, rng)?) } else { None };
        Ok(NdamBlock { channels, phase1, phase2 })
    }

    /// Block whose phase-1 projections are identity matrices (only valid
    /// when C/8 reduction keeps the width, i.e. C < 16). Test support.
    pub fn with_identity_phase1(channels: usize) -> Result<NdamBlock> {
        if reduced_channels(channels) != channels {
            return Err(Error::Config(alloc::format!(
                "identity phase-1 needs reduced width == width, C={channels}"
            )));
        }
        Ok(NdamBlock {
            channels,
            phase1: Some((
                ChannelAffinity::identity(channels)?,
                PositionAffinity::identity(channels)?,
            )),
            phase2: None,
        })
    }

    pub fn has_phase1(&self) -> bool {
        self.phase1.is_some()
    }

    pub fn has_phase2(&self) -> bool {
        self.phase2.is_some()
    }

    /// Plain elementwise sum of the two modality features.
    pub fn fuse_modalities(f_rgb: &Tensor, f_d: &Tensor) -> Result<Tensor> {
        if f_rgb.shape() != f_d.shape() {
            return Err(dim_err!(
                "modality fusion: rgb {:?} vs depth {:?}",
                f_rgb.shape(),
                f_d.shape()
            ));
        }
        f_rgb.add(f_d)
    }

    /// Phase 1 alone on the flattened [C,X] view.
    pub fn attention_p1(&self, f: &Tensor) -> Result<Tensor> {
        match &self.phase1 {
            Some((ch, pos)) => pos.forward(&ch.forward(f)?),
            None => Ok(f.clone()),
        }
    }

    /// Phase 2 alone on the [C,H,W] view.
    pub fn attention_p2(&self, f: &Tensor) -> Result<Tensor> {
        match &self.phase2 {
            Some(g) => g.forward(f),
            None => Ok(f.clone()),
        }
    }

    /// Both attention matrices of phase 1 for a given input (channel
    /// affinity [C,C], position affinity [X,X]); None when phase 1 is off.
    pub fn p1_attention_matrices(&self, f_flat: &Tensor) -> Result<Option<(Tensor, Tensor)>> {
        match &self.phase1 {
            Some((ch, pos)) => {
                let a = ch.attention_matrix(f_flat)?;
                let after = ch.forward(f_flat)?;
                let b = pos.attention_matrix(&after)?;
                Ok(Some((a, b)))
            }
            None => Ok(None),
        }
    }

    /// Full block: fuse, run phase 1 on the flat view, phase 2 on the
    /// spatial view.
    pub fn forward(&self, f_rgb: &Tensor, f_d: &Tensor) -> Result<Tensor> {
        let fused = Self::fuse_modalities(f_rgb, f_d)?;
        self.enhance(&fused)
    }

    /// The attention part alone, on already-fused features.
    pub fn enhance(&self, fused: &Tensor) -> Result<Tensor> {
        let (c, h, w) = match fused.shape() {
            [c, h, w] => (*c, *h, *w),
            s => return Err(dim_err!("ndam expects [C,H,W], got {:?}", s)),
        };
        if c != self.channels {
            return Err(dim_err!(
                "ndam channel mismatch: input C={} vs block C={}",
                c,
                self.channels
            ));
        }
        let flat = fused.reshape(&[c, h * w])?;
        let p1 = self.attention_p1(&flat)?;
        let spatial = p1.reshape(&[c, h, w])?;
        self.attention_p2(&spatial)
    }
}

impl Module for NdamBlock {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        if let Some((ch, pos)) = &mut self.phase1 {
            ch.visit_params(&alloc::format!("{prefix}.p1.channel"), f);
            pos.visit_params(&alloc::format!("{prefix}.p1.position"), f);
        }
        if let Some(g) = &mut self.phase2 {
            g.visit_params(&alloc::format!("{prefix}.p2"), f);
        }
    }
    fn visit_params_ref(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        if let Some((ch, pos)) = &self.phase1 {
            ch.visit_params_ref(&alloc::format!("{prefix}.p1.channel"), f);
            pos.visit_params_ref(&alloc::format!("{prefix}.p1.position"), f);
        }
        if let Some(g) = &self.phase2 {
            g.visit_params_ref(&alloc::format!("{prefix}.p2"), f);
        }
    }
    fn visit_stats(&self, prefix: &str, f: &mut dyn FnMut(String, &BatchNorm2d)) {
        if let Some((ch, pos)) = &self.phase1 {
            ch.visit_stats(&alloc::format!("{prefix}.p1.channel"), f);
            pos.visit_stats(&alloc::format!("{prefix}.p1.position"), f);
        }
        if let Some(g) = &self.phase2 {
            g.visit_stats(&alloc::format!("{prefix}.p2"), f);
        }
    }
}
