//! Saliency evaluation: MAE, max/average/weighted F-measure, S-measure,
//! E-measure, and the 255-point PR / F curves.
//!
//! F-measure style metrics follow the 8-bit protocol: predictions are
//! quantized to 255 levels and thresholds walk the same grid, so the
//! adaptive threshold always coincides with a grid threshold.

use alloc::vec;
use alloc::vec::Vec;

use crate::dim_err;
use crate::error::{Error, Result};
use crate::tensor::resize_bilinear;

pub const CURVE_POINTS: usize = 255;
/// beta^2 for max/average F-measure.
pub const BETA2_F: f64 = 0.3;
/// beta^2 for the weighted F-measure.
pub const BETA2_WEIGHTED: f64 = 1.0;
pub const S_ALPHA: f64 = 0.5;
const EPS: f64 = 1e-12;

/// Single-channel grayscale map in [0,1].
#[derive(Clone, Debug)]
pub struct GrayMap {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl GrayMap {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<GrayMap> {
        if data.len() != h * w {
            return Err(dim_err!("gray map {}x{} with {} values", h, w, data.len()));
        }
        Ok(GrayMap { h, w, data })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn resized(&self, h: usize, w: usize) -> GrayMap {
        if (h, w) == (self.h, self.w) {
            return self.clone();
        }
        GrayMap {
            h,
            w,
            data: resize_bilinear(&self.data, self.h, self.w, h, w),
        }
    }
}

/// Metrics for one prediction/ground-truth pair.
#[derive(Clone, Debug)]
pub struct ImageMetrics {
    pub s_alpha: f64,
    pub f_max: f64,
    pub f_avg: f64,
    pub f_weighted: f64,
    pub e_xi: f64,
    pub mae: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_curve: Vec<f64>,
    /// Ground truth had no foreground (or no background) pixels.
    pub degenerate: bool,
}

/// Dataset-level aggregate: per-image metrics averaged, curves averaged
/// pointwise.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub s_alpha: f64,
    pub f_max: f64,
    pub f_avg: f64,
    pub f_weighted: f64,
    pub e_xi: f64,
    pub mae: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_curve: Vec<f64>,
    pub images: usize,
    pub degenerate_images: usize,
}

fn check_same(pred: &GrayMap, gt: &GrayMap) -> Result<()> {
    if (pred.h, pred.w) != (gt.h, gt.w) {
        return Err(dim_err!(
            "pred {}x{} vs gt {}x{}",
            pred.h,
            pred.w,
            gt.h,
            gt.w
        ));
    }
    Ok(())
}

pub fn mae(pred: &GrayMap, gt: &GrayMap) -> Result<f64> {
    check_same(pred, gt)?;
    let s: f64 = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(p, g)| (p - g).abs())
        .sum();
    Ok(s / pred.data.len() as f64)
}

/// The adaptive binarization threshold min(2*mean, 1).
pub fn adaptive_threshold(pred: &GrayMap) -> f64 {
    (2.0 * pred.mean()).min(1.0)
}

fn quantize(p: f64) -> u8 {
    libm::round(p.clamp(0.0, 1.0) * 255.0) as u8
}

fn f_beta(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom <= 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

/// PR curve plus max/average F-measure over the 255-threshold grid.
/// `gt` is binarized at 0.5. Returns (precision, recall, f_curve, f_max,
/// f_avg, degenerate).
pub fn pr_and_f(pred: &GrayMap, gt: &GrayMap) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, f64, f64, bool)> {
    check_same(pred, gt)?;
    let q: Vec<u8> = pred.data.iter().map(|&p| quantize(p)).collect();
    let fg: Vec<bool> = gt.data.iter().map(|&g| g >= 0.5).collect();
    let n_fg = fg.iter().filter(|&&b| b).count();
    let degenerate = n_fg == 0;

    // histogram counts per quantized level, split by gt class
    let mut pos_hist = [0usize; 256];
    let mut neg_hist = [0usize; 256];
    for (qv, &isfg) in q.iter().zip(&fg) {
        if isfg {
            pos_hist[*qv as usize] += 1;
        } else {
            neg_hist[*qv as usize] += 1;
        }
    }
    // threshold t in 1..=255 selects quantized levels >= t
    let mut precision = vec![0.0; CURVE_POINTS];
    let mut recall = vec![0.0; CURVE_POINTS];
    let mut f_curve = vec![0.0; CURVE_POINTS];
    let mut tp = 0usize;
    let mut fp = 0usize;
    for t in (1..=255usize).rev() {
        tp += pos_hist[t];
        fp += neg_hist[t];
        let prec = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let rec = if n_fg == 0 { 0.0 } else { tp as f64 / n_fg as f64 };
        precision[t - 1] = prec;
        recall[t - 1] = rec;
        f_curve[t - 1] = f_beta(prec, rec, BETA2_F);
    }
    let f_max = f_curve.iter().cloned().fold(0.0, f64::max);

    // adaptive threshold; with 8-bit predictions this always coincides
    // with a grid threshold (or an all-zero prediction)
    let tau = adaptive_threshold(pred);
    let mut tp_a = 0usize;
    let mut fp_a = 0usize;
    for (qv, &isfg) in q.iter().zip(&fg) {
        if (*qv as f64 / 255.0) >= tau && tau > 0.0 {
            if isfg {
                tp_a += 1;
            } else {
                fp_a += 1;
            }
        }
    }
    let prec_a = if tp_a + fp_a == 0 { 0.0 } else { tp_a as f64 / (tp_a + fp_a) as f64 };
    let rec_a = if n_fg == 0 { 0.0 } else { tp_a as f64 / n_fg as f64 };
    let f_avg = f_beta(prec_a, rec_a, BETA2_F);

    Ok((precision, recall, f_curve, f_max, f_avg, degenerate))
}

/// Exact Euclidean distance transform: per-pixel distance to the nearest
/// `true` pixel (two-pass 1-D lower envelope method on squared distances).
pub fn distance_transform(mask: &[bool], h: usize, w: usize) -> Vec<f64> {
    const INF: f64 = 1e20;
    let mut d = vec![INF; h * w];
    for (i, &m) in mask.iter().enumerate() {
        if m {
            d[i] = 0.0;
        }
    }
    let mut col = vec![0.0; h.max(w)];
    // columns
    for x in 0..w {
        for y in 0..h {
            col[y] = d[y * w + x];
        }
        let out = dt_1d(&col[..h]);
        for y in 0..h {
            d[y * w + x] = out[y];
        }
    }
    // rows
    for y in 0..h {
        for x in 0..w {
            col[x] = d[y * w + x];
        }
        let out = dt_1d(&col[..w]);
        for x in 0..w {
            d[y * w + x] = out[x];
        }
    }
    d.iter().map(|&sq| libm::sqrt(sq)).collect()
}

fn dt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut out = vec![0.0; n];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        out[q] = dq * dq + f[p];
    }
    out
}

/// Normalized 2-D Gaussian kernel.
fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = size as isize / 2;
    let mut k = Vec::with_capacity(size * size);
    let mut sum = 0.0;
    for y in -half..=half {
        for x in -half..=half {
            let v = libm::exp(-((x * x + y * y) as f64) / (2.0 * sigma * sigma));
            k.push(v);
            sum += v;
        }
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Zero-padded 2-D convolution with a square kernel.
fn conv_same(data: &[f64], h: usize, w: usize, kernel: &[f64], ksize: usize) -> Vec<f64> {
    let half = ksize as isize / 2;
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in -half..=half {
                for kx in -half..=half {
                    let (sy, sx) = (y + ky, x + kx);
                    if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                        continue;
                    }
                    acc += data[sy as usize * w + sx as usize]
                        * kernel[((ky + half) * ksize as isize + kx + half) as usize];
                }
            }
            out[(y * w as isize + x) as usize] = acc;
        }
    }
    out
}

/// Weighted F-measure: errors on the foreground are smoothed by a 7x7
/// Gaussian (sigma 5) and capped by the raw error; background errors are
/// scaled by 2 - exp(ln(0.5)/5 * distance-to-foreground).
pub fn weighted_f(pred: &GrayMap, gt: &GrayMap) -> Result<(f64, bool)> {
    check_same(pred, gt)?;
    let (h, w) = (pred.h, pred.w);
    let fg: Vec<bool> = gt.data.iter().map(|&g| g >= 0.5).collect();
    if fg.iter().all(|&b| !b) {
        return Ok((0.0, true));
    }
    let err: Vec<f64> = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(p, g)| (p - if *g >= 0.5 { 1.0 } else { 0.0 }).abs())
        .collect();
    let kernel = gaussian_kernel(7, 5.0);
    let smoothed = conv_same(&err, h, w, &kernel, 7);
    let dist = distance_transform(&fg, h, w);
    let ln_half = libm::log(0.5);
    let mut tp_w = 0.0;
    let mut fp_w = 0.0;
    let mut fn_w = 0.0;
    for i in 0..h * w {
        if fg[i] {
            let ew = err[i].min(smoothed[i]);
            tp_w += 1.0 - ew;
            fn_w += ew;
        } else {
            let b = 2.0 - libm::exp(ln_half / 5.0 * dist[i]);
            fp_w += err[i] * b;
        }
    }
    let prec = tp_w / (tp_w + fp_w + EPS);
    let rec = tp_w / (tp_w + fn_w + EPS);
    Ok((f_beta(prec, rec, BETA2_WEIGHTED), false))
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for x in xs.clone() {
        sum += x;
        n += 1;
    }
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = sum / n as f64;
    let mut var = 0.0;
    for x in xs {
        var += (x - mean) * (x - mean);
    }
    (mean, libm::sqrt(var / n as f64), n)
}

fn object_score(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (m, s, n) = mean_std(xs);
    if n == 0 {
        return 0.0;
    }
    2.0 * m / (m * m + 1.0 + 2.0 * s + EPS)
}

/// Regional SSIM used by the structure measure.
fn region_ssim(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len();
    if n == 0 {
        return 0.0;
    }
    let (mp, _, _) = mean_std(p.iter().cloned());
    let (mg, _, _) = mean_std(g.iter().cloned());
    let nf = n as f64;
    let mut vp = 0.0;
    let mut vg = 0.0;
    let mut cov = 0.0;
    for i in 0..n {
        vp += (p[i] - mp) * (p[i] - mp);
        vg += (g[i] - mg) * (g[i] - mg);
        cov += (p[i] - mp) * (g[i] - mg);
    }
    // sample statistics (n-1) as in the reference formulation
    let denom_n = if n > 1 { nf - 1.0 } else { 1.0 };
    vp /= denom_n;
    vg /= denom_n;
    cov /= denom_n;
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

/// Structure measure: object similarity mixed with region similarity at
/// alpha = 0.5. Degenerate ground truths fall back to mean-based scores.
pub fn s_measure(pred: &GrayMap, gt: &GrayMap) -> Result<f64> {
    check_same(pred, gt)?;
    let fg: Vec<bool> = gt.data.iter().map(|&g| g >= 0.5).collect();
    let n_fg = fg.iter().filter(|&&b| b).count();
    if n_fg == 0 {
        return Ok((1.0 - pred.mean()).clamp(0.0, 1.0));
    }
    if n_fg == fg.len() {
        return Ok(pred.mean().clamp(0.0, 1.0));
    }
    let mu = n_fg as f64 / fg.len() as f64;

    // object part
    let fg_scores = pred
        .data
        .iter()
        .zip(&fg)
        .filter(|(_, &m)| m)
        .map(|(p, _)| *p);
    let bg_scores = pred
        .data
        .iter()
        .zip(&fg)
        .filter(|(_, &m)| !m)
        .map(|(p, _)| 1.0 - *p);
    let s_object = mu * object_score(fg_scores) + (1.0 - mu) * object_score(bg_scores);

    // region part: split both maps into 4 blocks at the gt centroid
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
    let gt_bin: Vec<f64> = fg.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let total = (h * w) as f64;
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
                gq.push(gt_bin[y * w + x]);
            }
        }
        let weight = pq.len() as f64 / total;
        if !pq.is_empty() {
            s_region += weight * region_ssim(&pq, &gq);
        }
    }

    Ok((S_ALPHA * s_object + (1.0 - S_ALPHA) * s_region).clamp(0.0, 1.0))
}

/// Enhanced alignment measure on the adaptively binarized prediction.
pub fn e_measure(pred: &GrayMap, gt: &GrayMap) -> Result<f64> {
    check_same(pred, gt)?;
    let tau = adaptive_threshold(pred);
    let b: Vec<f64> = pred
        .data
        .iter()
        .map(|&p| if p >= tau && tau > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let g: Vec<f64> = gt.data.iter().map(|&g| if g >= 0.5 { 1.0 } else { 0.0 }).collect();
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let mg = g.iter().sum::<f64>() / g.len() as f64;
    let mut acc = 0.0;
    for i in 0..b.len() {
        let pp = b[i] - mb;
        let pg = g[i] - mg;
        let xi = 2.0 * pp * pg / (pp * pp + pg * pg + EPS);
        acc += (xi + 1.0) * (xi + 1.0) / 4.0;
    }
    Ok(acc / b.len() as f64)
}

/// All metrics for one pair; the prediction is resampled bilinearly to the
/// ground-truth resolution first.
pub fn evaluate_pair(pred: &GrayMap, gt: &GrayMap) -> Result<ImageMetrics> {
    let pred = pred.resized(gt.h, gt.w);
    let (precision, recall, f_curve, f_max, f_avg, degenerate) = pr_and_f(&pred, gt)?;
    let (fw, deg_w) = weighted_f(&pred, gt)?;
    Ok(ImageMetrics {
        s_alpha: s_measure(&pred, gt)?,
        f_max,
        f_avg,
        f_weighted: fw,
        e_xi: e_measure(&pred, gt)?,
        mae: mae(&pred, gt)?,
        precision,
        recall,
        f_curve,
        degenerate: degenerate || deg_w,
    })
}

/// Average per-image metrics over a dataset; curves averaged pointwise.
pub fn evaluate_dataset(pairs: &[(GrayMap, GrayMap)]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Contract(alloc::format!(
            "evaluate_dataset on an empty dataset"
        )));
    }
    let mut report = MetricsReport {
        s_alpha: 0.0,
        f_max: 0.0,
        f_avg: 0.0,
        f_weighted: 0.0,
        e_xi: 0.0,
        mae: 0.0,
        precision: vec![0.0; CURVE_POINTS],
        recall: vec![0.0; CURVE_POINTS],
        f_curve: vec![0.0; CURVE_POINTS],
        images: pairs.len(),
        degenerate_images: 0,
    };
    for (pred, gt) in pairs {
        let m = evaluate_pair(pred, gt)?;
        report.s_alpha += m.s_alpha;
        report.f_max += m.f_max;
        report.f_avg += m.f_avg;
        report.f_weighted += m.f_weighted;
        report.e_xi += m.e_xi;
        report.mae += m.mae;
        for i in 0..CURVE_POINTS {
            report.precision[i] += m.precision[i];
            report.recall[i] += m.recall[i];
            report.f_curve[i] += m.f_curve[i];
        }
        if m.degenerate {
            report.degenerate_images += 1;
        }
    }
    let n = pairs.len() as f64;
    report.s_alpha /= n;
    report.f_max /= n;
    report.f_avg /= n;
    report.f_weighted /= n;
    report.e_xi /= n;
    report.mae /= n;
    for i in 0..CURVE_POINTS {
        report.precision[i] /= n;
        report.recall[i] /= n;
        report.f_curve[i] /= n;
    }
    Ok(report)
}
