//! Synthetic RGB-D saliency samples: random geometric foreground shapes
//! over textured backgrounds with a depth plane separating the two, plus
//! the flip / crop / rotate augmentations.

use sod_core::rng::Rng;
use sod_core::Tensor;

/// One training sample, planar buffers at a shared resolution.
#[derive(Clone, Debug)]
pub struct Sample {
    pub h: usize,
    pub w: usize,
    /// [3,H,W] in [0,1].
    pub rgb: Vec<f64>,
    /// [H,W] in [0,1].
    pub depth: Vec<f64>,
    /// [H,W] binary {0,1}.
    pub gt: Vec<f64>,
}

impl Sample {
    pub fn tensors(&self) -> (Tensor, Tensor, Tensor) {
        let rgb = Tensor::new(&[3, self.h, self.w], self.rgb.clone()).expect("rgb buffer");
        let depth = Tensor::new(&[1, self.h, self.w], self.depth.clone()).expect("depth buffer");
        let gt = Tensor::new(&[1, self.h, self.w], self.gt.clone()).expect("gt buffer");
        (rgb, depth, gt)
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Rect {
        y0: f64,
        x0: f64,
        y1: f64,
        x1: f64,
    },
    Ellipse {
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
    },
    Triangle {
        a: (f64, f64),
        b: (f64, f64),
        c: (f64, f64),
    },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
            Shape::Ellipse { cy, cx, ry, rx } => {
                let dy = (y - cy) / ry;
                let dx = (x - cx) / rx;
                dy * dy + dx * dx <= 1.0
            }
            Shape::Triangle { a, b, c } => {
                let sign = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
                    (p.0 - r.0) * (q.1 - r.1) - (q.0 - r.0) * (p.1 - r.1)
                };
                let p = (y, x);
                let d1 = sign(p, a, b);
                let d2 = sign(p, b, c);
                let d3 = sign(p, c, a);
                let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(neg && pos)
            }
        }
    }
}

fn random_shape(rng: &mut Rng, h: f64, w: f64) -> Shape {
    let scale = rng.range(0.15, 0.45);
    let cy = rng.range(0.2 * h, 0.8 * h);
    let cx = rng.range(0.2 * w, 0.8 * w);
    match rng.below(3) {
        0 => Shape::Rect {
            y0: cy - scale * h / 2.0,
            x0: cx - scale * w * rng.range(0.4, 0.8),
            y1: cy + scale * h / 2.0,
            x1: cx + scale * w * rng.range(0.4, 0.8),
        },
        1 => Shape::Ellipse {
            cy,
            cx,
            ry: scale * h / 2.0,
            rx: scale * w / 2.0 * rng.range(0.6, 1.4),
        },
        _ => {
            let r = scale * h.min(w) / 1.6;
            let base = rng.range(0.0, core::f64::consts::TAU);
            let mut pts = [(0.0, 0.0); 3];
            for (k, p) in pts.iter_mut().enumerate() {
                let ang = base + k as f64 * core::f64::consts::TAU / 3.0 + rng.range(-0.3, 0.3);
                *p = (cy + r * ang.sin(), cx + r * ang.cos());
            }
            Shape::Triangle {
                a: pts[0],
                b: pts[1],
                c: pts[2],
            }
        }
    }
}

/// Foreground-fraction bounds the generator retries into.
pub const FG_MIN: f64 = 0.05;
pub const FG_MAX: f64 = 0.6;

fn render_mask(shapes: &[Shape], h: usize, w: usize) -> (Vec<f64>, f64) {
    let mut gt = vec![0.0; h * w];
    let mut fg = 0usize;
    for y in 0..h {
        for x in 0..w {
            if shapes
                .iter()
                .any(|s| s.contains(y as f64 + 0.5, x as f64 + 0.5))
            {
                gt[y * w + x] = 1.0;
                fg += 1;
            }
        }
    }
    (gt, fg as f64 / (h * w) as f64)
}

/// One sample from its own RNG stream. `contrast` in [0,1] scales the
/// depth separation and color separation between foreground and
/// background; 1.0 is the dataset default.
pub fn synth_sample(rng: &mut Rng, resolution: usize, contrast: f64) -> Sample {
    let (h, w) = (resolution, resolution);
    // retry until the mask lands in the contracted coverage band
    let (gt, _) = loop {
        let n_shapes = 1 + rng.below(3);
        let shapes: Vec<Shape> = (0..n_shapes)
            .map(|_| random_shape(rng, h as f64, w as f64))
            .collect();
        let (gt, frac) = render_mask(&shapes, h, w);
        if (FG_MIN..=FG_MAX).contains(&frac) {
            break (gt, frac);
        }
    };

    // depth: smooth background plane, foreground pulled near the camera
    let gy = rng.range(-0.15, 0.15);
    let gx = rng.range(-0.15, 0.15);
    let bg_depth = rng.range(0.65, 0.85);
    let fg_depth = bg_depth - contrast * rng.range(0.35, 0.5);
    let mut depth = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let plane = gy * (y as f64 / h as f64 - 0.5) + gx * (x as f64 / w as f64 - 0.5);
            let base = if gt[i] > 0.5 { fg_depth } else { bg_depth };
            depth[i] = (base + plane + rng.range(-0.02, 0.02)).clamp(0.0, 1.0);
        }
    }

    // rgb: distinct foreground/background colors plus texture noise
    let bg_col = [rng.uniform(), rng.uniform(), rng.uniform()];
    let mut fg_col = [rng.uniform(), rng.uniform(), rng.uniform()];
    for c in 0..3 {
        // push the foreground color away from the background color
        fg_col[c] = bg_col[c] + contrast * (fg_col[c] - bg_col[c]).signum() * f64::max(0.5, (fg_col[c] - bg_col[c]).abs());
        fg_col[c] = fg_col[c].clamp(0.0, 1.0);
    }
    let tex = rng.range(0.03, 0.12);
    let mut rgb = vec![0.0; 3 * h * w];
    for i in 0..h * w {
        let col = if gt[i] > 0.5 { &fg_col } else { &bg_col };
        for c in 0..3 {
            rgb[c * h * w + i] = (col[c] + rng.range(-tex, tex)).clamp(0.0, 1.0);
        }
    }

    Sample {
        h,
        w,
        rgb,
        depth,
        gt,
    }
}

/// Seeded dataset: sample i draws from `seed`'s split stream at index i,
/// so generation is order-independent and reproducible.
pub fn synth_dataset(n: usize, resolution: usize, seed: u64) -> Vec<Sample> {
    let base = Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| synth_sample(&mut base.split(i as u64), resolution, 1.0))
        .collect()
}

fn bilinear_at(data: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    // edge-clamped sampling
    let y = y.clamp(0.0, h as f64 - 1.0);
    let x = x.clamp(0.0, w as f64 - 1.0);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let a = data[y0 * w + x0];
    let b = data[y0 * w + x1];
    let c = data[y1 * w + x0];
    let d = data[y1 * w + x1];
    a * (1.0 - fy) * (1.0 - fx) + b * (1.0 - fy) * fx + c * fy * (1.0 - fx) + d * fy * fx
}

fn nearest_at(data: &[f64], h: usize, w: usize, y: f64, x: f64, fill: Option<f64>) -> f64 {
    let yi = y.round();
    let xi = x.round();
    if yi < 0.0 || xi < 0.0 || yi >= h as f64 || xi >= w as f64 {
        if let Some(f) = fill {
            return f;
        }
    }
    let yi = (yi.max(0.0) as usize).min(h - 1);
    let xi = (xi.max(0.0) as usize).min(w - 1);
    data[yi * w + xi]
}

/// Apply `map` (output pixel -> source coordinates) to all three fields:
/// bilinear edge-clamp for rgb/depth, nearest for gt with `gt_fill` used
/// outside the source frame.
fn warp(sample: &Sample, gt_fill: Option<f64>, map: impl Fn(f64, f64) -> (f64, f64)) -> Sample {
    let (h, w) = (sample.h, sample.w);
    let mut out = Sample {
        h,
        w,
        rgb: vec![0.0; 3 * h * w],
        depth: vec![0.0; h * w],
        gt: vec![0.0; h * w],
    };
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = map(y as f64, x as f64);
            let i = y * w + x;
            for c in 0..3 {
                out.rgb[c * h * w + i] =
                    bilinear_at(&sample.rgb[c * h * w..(c + 1) * h * w], h, w, sy, sx);
            }
            out.depth[i] = bilinear_at(&sample.depth, h, w, sy, sx);
            out.gt[i] = nearest_at(&sample.gt, h, w, sy, sx, gt_fill);
        }
    }
    out
}

pub fn hflip(sample: &Sample) -> Sample {
    let w = sample.w;
    warp(sample, None, move |y, x| (y, (w - 1) as f64 - x))
}

/// Crop to `factor` of the original size at a random offset, then scale
/// back to the full resolution.
pub fn crop_resize(sample: &Sample, rng: &mut Rng, factor: f64) -> Sample {
    let (h, w) = (sample.h as f64, sample.w as f64);
    let ch = h * factor;
    let cw = w * factor;
    let oy = rng.range(0.0, h - ch);
    let ox = rng.range(0.0, w - cw);
    warp(sample, None, move |y, x| {
        (oy + y / (h - 1.0) * (ch - 1.0), ox + x / (w - 1.0) * (cw - 1.0))
    })
}

/// Rotate by `degrees` around the center. Exposed corners become
/// background in gt and edge-clamp in rgb/depth.
pub fn rotate(sample: &Sample, degrees: f64) -> Sample {
    let rad = degrees.to_radians();
    let (s, c) = rad.sin_cos();
    let cy = (sample.h as f64 - 1.0) / 2.0;
    let cx = (sample.w as f64 - 1.0) / 2.0;
    warp(sample, Some(0.0), move |y, x| {
        let dy = y - cy;
        let dx = x - cx;
        (cy + c * dy - s * dx, cx + s * dy + c * dx)
    })
}

pub const CROP_FACTOR: f64 = 0.9;
pub const MAX_ROTATION_DEG: f64 = 10.0;

/// The training-time augmentation chain: coin-flip mirror, 90% crop with
/// resize back, and a rotation within +-10 degrees.
pub fn augment(sample: &Sample, rng: &mut Rng) -> Sample {
    let mut cur = if rng.chance(0.5) {
        hflip(sample)
    } else {
        sample.clone()
    };
    cur = crop_resize(&cur, rng, CROP_FACTOR);
    cur = rotate(&cur, rng.range(-MAX_ROTATION_DEG, MAX_ROTATION_DEG));
    debug_assert!(cur.gt.iter().all(|&v| v == 0.0 || v == 1.0));
    cur
}
