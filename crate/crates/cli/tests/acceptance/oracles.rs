//! Independent reference implementations used only by the acceptance
//! suite. Everything here is written naively (per-threshold rescans,
//! O(n^2) distance search, scalar accumulation) so that agreement with
//! the library is meaningful evidence, not a tautology.

use sod_core::metrics::{GrayMap, BETA2_F, BETA2_WEIGHTED, CURVE_POINTS, S_ALPHA};
use sod_core::rng::Rng;

const EPS: f64 = 1e-12;

pub fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn f_beta(prec: f64, rec: f64, beta2: f64) -> f64 {
    let d = beta2 * prec + rec;
    if d <= 0.0 {
        0.0
    } else {
        (1.0 + beta2) * prec * rec / d
    }
}

/// Per-threshold full-image rescan; returns (precision, recall, f_curve,
/// f_max, f_adaptive).
pub fn pr_oracle(pred: &GrayMap, gt: &GrayMap) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64) {
    let fg: Vec<bool> = gt.data.iter().map(|&g| g >= 0.5).collect();
    let n_fg = fg.iter().filter(|&&b| b).count();
    let mut precision = vec![0.0; CURVE_POINTS];
    let mut recall = vec![0.0; CURVE_POINTS];
    let mut f_curve = vec![0.0; CURVE_POINTS];
    for t in 1..=255usize {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (p, &isfg) in pred.data.iter().zip(&fg) {
            if (quantize(*p) as usize) >= t {
                if isfg {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let prec = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let rec = if n_fg == 0 { 0.0 } else { tp as f64 / n_fg as f64 };
        precision[t - 1] = prec;
        recall[t - 1] = rec;
        f_curve[t - 1] = f_beta(prec, rec, BETA2_F);
    }
    let f_max = f_curve.iter().cloned().fold(0.0, f64::max);
    let tau = (2.0 * pred.data.iter().sum::<f64>() / pred.data.len() as f64).min(1.0);
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (p, &isfg) in pred.data.iter().zip(&fg) {
        if tau > 0.0 && (quantize(*p) as f64 / 255.0) >= tau {
            if isfg {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let prec = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let rec = if n_fg == 0 { 0.0 } else { tp as f64 / n_fg as f64 };
    (precision, recall, f_curve, f_max, f_beta(prec, rec, BETA2_F))
}

/// Exact nearest-foreground distance by quadratic search.
pub fn dist_oracle(mask: &[bool], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::INFINITY;
            for yy in 0..h {
                for xx in 0..w {
                    if mask[yy * w + xx] {
                        let dy = y as f64 - yy as f64;
                        let dx = x as f64 - xx as f64;
                        best = best.min((dy * dy + dx * dx).sqrt());
                    }
                }
            }
            out[y * w + x] = best;
        }
    }
    out
}

/// Literal transcription of the weighted F-measure.
pub fn weighted_oracle(pred: &GrayMap, gt: &GrayMap) -> f64 {
    let (h, w) = (pred.h, pred.w);
    let fg: Vec<bool> = gt.data.iter().map(|&g| g >= 0.5).collect();
    let err: Vec<f64> = pred
        .data
        .iter()
        .zip(&fg)
        .map(|(p, &g)| (p - if g { 1.0 } else { 0.0 }).abs())
        .collect();
    // 7x7 gaussian, sigma 5, normalized over the window
    let mut kernel = [[0.0f64; 7]; 7];
    let mut ksum = 0.0;
    for (ky, row) in kernel.iter_mut().enumerate() {
        for (kx, v) in row.iter_mut().enumerate() {
            let dy = ky as f64 - 3.0;
            let dx = kx as f64 - 3.0;
            *v = (-(dy * dy + dx * dx) / 50.0).exp();
            ksum += *v;
        }
    }
    let mut smoothed = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..7 {
                for kx in 0..7 {
                    let sy = y as isize + ky as isize - 3;
                    let sx = x as isize + kx as isize - 3;
                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                        acc += err[sy as usize * w + sx as usize] * kernel[ky][kx] / ksum;
                    }
                }
            }
            smoothed[y * w + x] = acc;
        }
    }
    let dist = dist_oracle(&fg, h, w);
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fnn = 0.0;
    for i in 0..h * w {
        if fg[i] {
            let e = err[i].min(smoothed[i]);
            tp += 1.0 - e;
            fnn += e;
        } else {
            fp += err[i] * (2.0 - (0.5f64.ln() / 5.0 * dist[i]).exp());
        }
    }
    let prec = tp / (tp + fp + EPS);
    let rec = tp / (tp + fnn + EPS);
    f_beta(prec, rec, BETA2_WEIGHTED)
}

fn ssim_oracle(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mg = g.iter().sum::<f64>() / n;
    let dn = if p.len() > 1 { n - 1.0 } else { 1.0 };
    let vp = p.iter().map(|v| (v - mp) * (v - mp)).sum::<f64>() / dn;
    let vg = g.iter().map(|v| (v - mg) * (v - mg)).sum::<f64>() / dn;
    let cov = p
        .iter()
        .zip(g)
        .map(|(a, b)| (a - mp) * (b - mg))
        .sum::<f64>()
        / dn;
    let alpha = 4.0 * mp * mg * cov;
    let beta = (mp * mp + mg * mg) * (vp + vg);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn object_oracle(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    2.0 * m / (m * m + 1.0 + 2.0 * var.sqrt() + EPS)
}

/// Structure measure rewritten from the published formulas.
pub fn s_oracle(pred: &GrayMap, gt: &GrayMap) -> f64 {
    let fg: Vec<bool> = gt.data.iter().map(|&g| g >= 0.5).collect();
    let n_fg = fg.iter().filter(|&&b| b).count();
    let mean_p = pred.data.iter().sum::<f64>() / pred.data.len() as f64;
    if n_fg == 0 {
        return (1.0 - mean_p).clamp(0.0, 1.0);
    }
    if n_fg == fg.len() {
        return mean_p.clamp(0.0, 1.0);
    }
    let mu = n_fg as f64 / fg.len() as f64;
    let fg_vals: Vec<f64> = pred
        .data
        .iter()
        .zip(&fg)
        .filter(|(_, &m)| m)
        .map(|(p, _)| *p)
        .collect();
    let bg_vals: Vec<f64> = pred
        .data
        .iter()
        .zip(&fg)
        .filter(|(_, &m)| !m)
        .map(|(p, _)| 1.0 - *p)
        .collect();
    let s_object = mu * object_oracle(&fg_vals) + (1.0 - mu) * object_oracle(&bg_vals);
    let (h, w) = (gt.h, gt.w);
    let mut cy = 0.0;
    let mut cx = 0.0;
    for y in 0..h {
        for x in 0..w {
            if fg[y * w + x] {
                cy += y as f64;
                cx += x as f64;
            }
        }
    }
    let cy = ((cy / n_fg as f64) as usize).min(h - 1);
    let cx = ((cx / n_fg as f64) as usize).min(w - 1);
    let mut s_region = 0.0;
    for (y0, y1, x0, x1) in [
        (0, cy + 1, 0, cx + 1),
        (0, cy + 1, cx + 1, w),
        (cy + 1, h, 0, cx + 1),
        (cy + 1, h, cx + 1, w),
    ] {
        let mut pq = Vec::new();
        let mut gq = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                pq.push(pred.data[y * w + x]);
                gq.push(if fg[y * w + x] { 1.0 } else { 0.0 });
            }
        }
        if !pq.is_empty() {
            s_region += (pq.len() as f64 / (h * w) as f64) * ssim_oracle(&pq, &gq);
        }
    }
    (S_ALPHA * s_object + (1.0 - S_ALPHA) * s_region).clamp(0.0, 1.0)
}

/// Enhanced-alignment measure rewritten from the published formulas.
pub fn e_oracle(pred: &GrayMap, gt: &GrayMap) -> f64 {
    let tau = (2.0 * pred.data.iter().sum::<f64>() / pred.data.len() as f64).min(1.0);
    let b: Vec<f64> = pred
        .data
        .iter()
        .map(|&p| if tau > 0.0 && p >= tau { 1.0 } else { 0.0 })
        .collect();
    let g: Vec<f64> = gt
        .data
        .iter()
        .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
        .collect();
    let n = b.len() as f64;
    let mb = b.iter().sum::<f64>() / n;
    let mg = g.iter().sum::<f64>() / n;
    let mut acc = 0.0;
    for i in 0..b.len() {
        let pp = b[i] - mb;
        let pg = g[i] - mg;
        let xi = 2.0 * pp * pg / (pp * pp + pg * pg + EPS);
        acc += (xi + 1.0) * (xi + 1.0) / 4.0;
    }
    acc / n
}

/// Seeded pair generator: smooth-ish prediction, blobby binary gt.
pub fn random_pair(rng: &mut Rng, h: usize, w: usize) -> (GrayMap, GrayMap) {
    let cy = rng.range(0.0, h as f64);
    let cx = rng.range(0.0, w as f64);
    let r = rng.range(2.0, h.min(w) as f64 / 1.5);
    let noise = rng.range(0.0, 0.4);
    let mut pred = Vec::with_capacity(h * w);
    let mut gt = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            let inside = d < r;
            gt.push(f64::from(inside));
            let base = if inside { 0.8 } else { 0.15 };
            pred.push((base + rng.range(-noise, noise)).clamp(0.0, 1.0));
        }
    }
    (
        GrayMap::new(h, w, pred).unwrap(),
        GrayMap::new(h, w, gt).unwrap(),
    )
}

/// Scalar transcription of the four hybrid ratio terms.
pub fn ratio_oracle(pred: &[f64], gt: &[f64], eps: f64) -> [f64; 4] {
    let clamp = |v: f64| v.max(eps).min(1.0 - eps);
    let n = pred.len();
    let mut num = [0.0f64; 4];
    let mut den = [0.0f64; 4];
    for i in 0..n {
        let p = clamp(pred[i]);
        let g = gt[i];
        num[0] += p * (1.0 - g);
        den[0] += p;
        num[1] += g * (1.0 - p);
        den[1] += g;
        num[2] += p * (1.0 - g) + g * (1.0 - p);
        den[2] += p + g - p * g;
        num[3] += (1.0 - p) * (1.0 - g);
        den[3] += 1.0 - p * (1.0 - g) - g * (1.0 - p);
    }
    [
        num[0] / (den[0] + eps),
        num[1] / (den[1] + eps),
        num[2] / (den[2] + eps),
        num[3] / (den[3] + eps),
    ]
}
