//! Per-pixel likelihood maps, their fusion, and peak-rank scoring.

use std::fmt;

use crate::error::{Error, Result};
use crate::features::{PHoG, PhogIndex};
use crate::image::{ColorImage, GrayImage, MapKind, Rect, ScalarMap};
use crate::integral::IntegralHistogramTensor;
use crate::swih::{swlh_query, KernelSpec, WeightedQuadrantSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Ncc,
    ColorRatio,
    HistDistance,
    WeightedHistDistance,
    Phog,
    Fused,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Ncc => "ncc",
            Channel::ColorRatio => "color",
            Channel::HistDistance => "hist",
            Channel::WeightedHistDistance => "swih",
            Channel::Phog => "phog",
            Channel::Fused => "fused",
        })
    }
}

/// Match probability per pixel, every value in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    channel: Channel,
}

impl LikelihoodMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, channel: Channel) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::mismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("likelihood {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
            channel,
        })
    }

    pub fn constant(width: usize, height: usize, v: f64, channel: Channel) -> Result<Self> {
        Self::new(width, height, vec![v; width * height], channel)
    }

    /// Build from values that are in range up to rounding; clamps.
    pub(crate) fn from_clamped(width: usize, height: usize, mut values: Vec<f64>, channel: Channel) -> Self {
        values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Self::new(width, height, values, channel).expect("clamped values and matching size")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn to_scalar(&self) -> ScalarMap {
        ScalarMap::new(self.width, self.height, self.values.clone(), MapKind::Generic).expect("same dimensions")
    }

    /// 8-bit rendering, 1.0 → 255.
    pub fn to_gray(&self) -> GrayImage {
        let data = self.values.iter().map(|&v| (v * 255.0).round() as u8).collect();
        GrayImage::new(self.width, self.height, data).expect("same dimensions")
    }

    pub fn from_gray(img: &GrayImage, channel: Channel) -> Self {
        let values = img.data().iter().map(|&v| f64::from(v) / 255.0).collect();
        Self::new(img.width(), img.height(), values, channel).expect("8-bit values are in range")
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }
}

// ---------------------------------------------------------------------------
// NCC

/// Running sums of `v` and `v²` with a zero border row and column.
struct SumTables {
    stride: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl SumTables {
    fn new(m: &ScalarMap) -> Self {
        let (w, h) = (m.width(), m.height());
        let stride = w + 1;
        let mut s1 = vec![0.0; stride * (h + 1)];
        let mut s2 = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let (mut r1, mut r2) = (0.0, 0.0);
            for x in 0..w {
                let v = m.get(x, y);
                r1 += v;
                r2 += v * v;
                let i = (y + 1) * stride + x + 1;
                s1[i] = s1[i - stride] + r1;
                s2[i] = s2[i - stride] + r2;
            }
        }
        Self { stride, s1, s2 }
    }

    fn sums(&self, x: usize, y: usize, w: usize, h: usize) -> (f64, f64) {
        let s = self.stride;
        let (a, b, c, d) = (y * s + x, y * s + x + w, (y + h) * s + x, (y + h) * s + x + w);
        (
            self.s1[d] - self.s1[b] - self.s1[c] + self.s1[a],
            self.s2[d] - self.s2[b] - self.s2[c] + self.s2[a],
        )
    }
}

/// `Σv² − (Σv)²/n`, with values lost in cancellation treated as 0.
fn centered_energy(sum: f64, sum_sq: f64, n: f64) -> f64 {
    let e = sum_sq - sum * sum / n;
    if e <= 1e-10 * sum_sq.abs().max(f64::MIN_POSITIVE) {
        0.0
    } else {
        e
    }
}

/// Normalized cross-correlation mapped to [0, 1] by `(γ + 1) / 2`.
///
/// The result has one entry per template offset: size
/// `(W − w + 1) × (H − h + 1)`, entry `(u, v)` comparing the template with
/// the search patch whose top-left corner is `(u, v)`. Offsets where either
/// side has zero variance score 0.5.
pub fn ncc_map(search: &ScalarMap, template: &ScalarMap) -> Result<LikelihoodMap> {
    let (sw, sh, tw, th) = (search.width(), search.height(), template.width(), template.height());
    if tw > sw || th > sh {
        return Err(Error::invalid(format!(
            "template {tw}x{th} is larger than search window {sw}x{sh}"
        )));
    }
    let n = (tw * th) as f64;
    let t_mean = template.values().iter().sum::<f64>() / n;
    let t_c: Vec<f64> = template.values().iter().map(|v| v - t_mean).collect();
    let t_energy = {
        let sq: f64 = template.values().iter().map(|v| v * v).sum();
        centered_energy(t_mean * n, sq, n)
    };
    let tables = SumTables::new(search);
    let (ow, oh) = (sw - tw + 1, sh - th + 1);
    let mut out = vec![0.5; ow * oh];
    if t_energy > 0.0 {
        let sv = search.values();
        for v in 0..oh {
            for u in 0..ow {
                let (s1, s2) = tables.sums(u, v, tw, th);
                let f_energy = centered_energy(s1, s2, n);
                if f_energy == 0.0 {
                    continue;
                }
                let mut num = 0.0;
                for j in 0..th {
                    let row = &sv[(v + j) * sw + u..(v + j) * sw + u + tw];
                    let trow = &t_c[j * tw..(j + 1) * tw];
                    num += row.iter().zip(trow).map(|(a, b)| a * b).sum::<f64>();
                }
                let gamma = (num / (f_energy * t_energy).sqrt()).clamp(-1.0, 1.0);
                out[v * ow + u] = (gamma + 1.0) / 2.0;
            }
        }
    }
    Ok(LikelihoodMap::from_clamped(ow, oh, out, Channel::Ncc))
}

pub fn ncc_map_gray(search: &GrayImage, template: &GrayImage) -> Result<LikelihoodMap> {
    ncc_map(&search.to_scalar(), &template.to_scalar())
}

/// Place an offset-indexed map into a `width × height` frame so each value
/// sits at the center pixel of its patch; uncovered cells are 0.
pub fn embed_centered(
    valid: &LikelihoodMap,
    width: usize,
    height: usize,
    patch_w: usize,
    patch_h: usize,
) -> Result<LikelihoodMap> {
    if valid.width + patch_w - 1 != width || valid.height + patch_h - 1 != height {
        return Err(Error::mismatch(format!(
            "{}x{} offsets with a {patch_w}x{patch_h} patch do not tile {width}x{height}",
            valid.width, valid.height
        )));
    }
    let mut out = vec![0.0; width * height];
    let (ox, oy) = (patch_w / 2, patch_h / 2);
    for v in 0..valid.height {
        for u in 0..valid.width {
            out[(v + oy) * width + u + ox] = valid.get(u, v);
        }
    }
    LikelihoodMap::new(width, height, out, valid.channel)
}

// ---------------------------------------------------------------------------
// color model

pub const COLOR_BINS_PER_CHANNEL: usize = 32;
pub const COLOR_BINS: usize = COLOR_BINS_PER_CHANNEL * COLOR_BINS_PER_CHANNEL * COLOR_BINS_PER_CHANNEL;

#[inline]
pub fn color_bin(rgb: [u8; 3]) -> usize {
    (usize::from(rgb[0] >> 3) << 10) | (usize::from(rgb[1] >> 3) << 5) | usize::from(rgb[2] >> 3)
}

/// Foreground and background 32³ RGB histograms.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorModel {
    fg: Vec<f64>,
    bg: Vec<f64>,
    fg_area: f64,
    bg_area: f64,
}

impl ColorModel {
    /// From raw histograms; areas are their totals.
    pub fn from_histograms(fg: Vec<f64>, bg: Vec<f64>) -> Result<Self> {
        if fg.len() != COLOR_BINS || bg.len() != COLOR_BINS {
            return Err(Error::mismatch(format!("color histograms need {COLOR_BINS} bins")));
        }
        if fg.iter().chain(&bg).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("color counts must be finite and nonnegative"));
        }
        let (fg_area, bg_area) = (fg.iter().sum(), bg.iter().sum());
        Ok(Self {
            fg,
            bg,
            fg_area,
            bg_area,
        })
    }

    pub fn fg(&self) -> &[f64] {
        &self.fg
    }

    pub fn bg(&self) -> &[f64] {
        &self.bg
    }

    pub fn fg_area(&self) -> f64 {
        self.fg_area
    }

    pub fn bg_area(&self) -> f64 {
        self.bg_area
    }

    /// `fg / (fg + bg)` for one bin; 0.5 when the bin was never seen.
    #[inline]
    pub fn ratio(&self, bin: usize) -> f64 {
        let (f, b) = (self.fg[bin], self.bg[bin]);
        if f + b == 0.0 {
            0.5
        } else {
            f / (f + b)
        }
    }

    /// `alpha · new + (1 − alpha) · self`, bin by bin.
    pub fn blend(&self, new: &ColorModel, alpha: f64) -> ColorModel {
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(o, n)| alpha * n + (1.0 - alpha) * o).collect()
        };
        ColorModel {
            fg: mix(&self.fg, &new.fg),
            bg: mix(&self.bg, &new.bg),
            fg_area: alpha * new.fg_area + (1.0 - alpha) * self.fg_area,
            bg_area: alpha * new.bg_area + (1.0 - alpha) * self.bg_area,
        }
    }
}

/// Histograms of `fg` and of the ring around it: `fg` dilated by
/// `bg_margin` on every side, clipped to the image, minus `fg`.
pub fn model_fg_bg(img: &ColorImage, fg: Rect, bg_margin: usize) -> Result<ColorModel> {
    fg.check_inside(img.width(), img.height())?;
    let m = bg_margin as isize;
    let outer = Rect::new(fg.x - m, fg.y - m, fg.w + 2 * bg_margin, fg.h + 2 * bg_margin)
        .clip(img.width(), img.height())
        .expect("contains fg");
    if outer.area() == fg.area() {
        return Err(Error::Empty(format!(
            "background ring around {fg} with margin {bg_margin} is empty"
        )));
    }
    let mut fgh = vec![0.0; COLOR_BINS];
    let mut bgh = vec![0.0; COLOR_BINS];
    for y in outer.y..outer.bottom() {
        for x in outer.x..outer.right() {
            let b = color_bin(img.get(x as usize, y as usize));
            if fg.contains(x, y) {
                fgh[b] += 1.0;
            } else {
                bgh[b] += 1.0;
            }
        }
    }
    ColorModel::from_histograms(fgh, bgh)
}

pub fn color_ratio_map(img: &ColorImage, model: &ColorModel) -> LikelihoodMap {
    let (w, h) = (img.width(), img.height());
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            values.push(model.ratio(color_bin(img.get(x, y))));
        }
    }
    LikelihoodMap::from_clamped(w, h, values, Channel::ColorRatio)
}

// ---------------------------------------------------------------------------
// histogram distances

pub fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Distance between two unit-mass histograms mapped to `1 − d / 2^(1/p)`.
pub fn distance_likelihood(a: &[f64], b: &[f64], p: f64) -> f64 {
    (1.0 - minkowski(a, b, p) / 2f64.powf(1.0 / p)).clamp(0.0, 1.0)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("Minkowski order must be >= 1, got {p}")))
    }
}

/// Sliding-window histogram match. Each center whose `kw × kh` window fits
/// scores `1 − d/d_max` between its normalized local histogram and
/// `template`; other pixels are 0.
pub fn hist_distance_map(
    ih: &IntegralHistogramTensor,
    template: &[f64],
    kw: usize,
    kh: usize,
    p: f64,
) -> Result<LikelihoodMap> {
    check_p(p)?;
    let (w, h, b) = (ih.width(), ih.height(), ih.bins());
    if template.len() != b {
        return Err(Error::mismatch(format!(
            "template has {} bins, tensor {b}",
            template.len()
        )));
    }
    if kw == 0 || kh == 0 || kw > w || kh > h {
        return Err(Error::invalid(format!("kernel {kw}x{kh} exceeds the {w}x{h} image")));
    }
    let n = (kw * kh) as f64;
    let mut out = vec![0.0; w * h];
    let mut counts = vec![0u64; b];
    let mut local = vec![0.0; b];
    for y0 in 0..=h - kh {
        for x0 in 0..=w - kw {
            ih.region_into(x0, y0, x0 + kw, y0 + kh, &mut counts);
            for (l, &c) in local.iter_mut().zip(&counts) {
                *l = c as f64 / n;
            }
            out[(y0 + kh / 2) * w + x0 + kw / 2] = distance_likelihood(&local, template, p);
        }
    }
    Ok(LikelihoodMap::from_clamped(w, h, out, Channel::HistDistance))
}

/// As [`hist_distance_map`] but with spatially weighted local histograms.
pub fn swlh_distance_map(
    set: &WeightedQuadrantSet,
    template: &[f64],
    spec: &KernelSpec,
    p: f64,
) -> Result<LikelihoodMap> {
    check_p(p)?;
    let (w, h) = (set.width(), set.height());
    if template.len() != set.bins() {
        return Err(Error::mismatch("template and tensor bin counts differ"));
    }
    if spec.kw > w || spec.kh > h {
        return Err(Error::invalid(format!("kernel {spec} exceeds the {w}x{h} image")));
    }
    let mut out = vec![0.0; w * h];
    for cy in spec.north()..=h - spec.south() {
        for cx in spec.west()..=w - spec.east() {
            let local = swlh_query(set, cx, cy, spec)?.normalized();
            out[cy * w + cx] = distance_likelihood(&local, template, p);
        }
    }
    Ok(LikelihoodMap::from_clamped(w, h, out, Channel::WeightedHistDistance))
}

// ---------------------------------------------------------------------------
// PHoG kernel

/// Weighted sum of per-level intersections, finest level last:
/// `I⁰/2^L + Σ_{l≥1} I^l / 2^(L−l+1)`.
pub fn pyramid_match(intersections: &[f64]) -> f64 {
    assert!(!intersections.is_empty(), "need at least level 0");
    let big_l = intersections.len() - 1;
    let mut k = intersections[0] / 2f64.powi(big_l as i32);
    for (l, &i) in intersections.iter().enumerate().skip(1) {
        k += i / 2f64.powi((big_l - l + 1) as i32);
    }
    k
}

/// Pyramid match kernel on per-level unit-mass descriptors; 1 for a
/// descriptor against itself.
pub fn phog_kernel(x: &PHoG, y: &PHoG) -> Result<f64> {
    if x.levels() != y.levels() || x.bins() != y.bins() {
        return Err(Error::mismatch(format!(
            "PHoG shapes differ: L={}, k={} vs L={}, k={}",
            x.levels(),
            x.bins(),
            y.levels(),
            y.bins()
        )));
    }
    let (xn, yn) = (x.normalized(), y.normalized());
    let inter: Vec<f64> = (0..=x.levels())
        .map(|l| xn.level(l).iter().zip(yn.level(l)).map(|(a, b)| a.min(*b)).sum())
        .collect();
    Ok(pyramid_match(&inter).clamp(0.0, 1.0))
}

/// Kernel score of every chip against `template`, stored at chip centers.
pub fn phog_map(index: &PhogIndex, template: &PHoG, chip_w: usize, chip_h: usize) -> Result<LikelihoodMap> {
    index.check_chip(chip_w, chip_h)?;
    let (w, h) = (index.width(), index.height());
    let tn = template.normalized();
    let mut out = vec![0.0; w * h];
    for y in 0..=h - chip_h {
        for x in 0..=w - chip_w {
            let d = index.descriptor(x, y, chip_w, chip_h);
            out[(y + chip_h / 2) * w + x + chip_w / 2] = phog_kernel(&d, &tn)?;
        }
    }
    Ok(LikelihoodMap::from_clamped(w, h, out, Channel::Phog))
}

// ---------------------------------------------------------------------------
// fusion and scoring

/// Convex per-pixel combination. `weights` are rescaled to sum to 1; `None`
/// means equal weights.
pub fn fuse_maps(maps: &[&LikelihoodMap], weights: Option<&[f64]>) -> Result<LikelihoodMap> {
    let first = maps.first().ok_or_else(|| Error::Empty("no maps to fuse".into()))?;
    if let Some(m) = maps.iter().find(|m| m.width != first.width || m.height != first.height) {
        return Err(Error::mismatch(format!(
            "cannot fuse {}x{} with {}x{}",
            first.width, first.height, m.width, m.height
        )));
    }
    let w: Vec<f64> = match weights {
        None => vec![1.0; maps.len()],
        Some(w) if w.len() == maps.len() => w.to_vec(),
        Some(w) => return Err(Error::mismatch(format!("{} weights for {} maps", w.len(), maps.len()))),
    };
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("fusion weights must be finite and nonnegative"));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("fusion weights sum to zero"));
    }
    let mut out = vec![0.0; first.values.len()];
    for (m, wi) in maps.iter().zip(&w) {
        let wi = wi / total;
        for (o, v) in out.iter_mut().zip(&m.values) {
            *o += wi * v;
        }
    }
    Ok(LikelihoodMap::from_clamped(
        first.width,
        first.height,
        out,
        Channel::Fused,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    /// Smoothed height used for ranking.
    pub height: f64,
    /// Unsmoothed map value at the peak.
    pub value: f64,
    /// 1 for the highest peak.
    pub rank: usize,
}

/// 3×3 mean over the in-bounds neighbourhood.
fn smooth3(map: &LikelihoodMap) -> Vec<f64> {
    let (w, h) = (map.width as isize, map.height as isize);
    let mut out = Vec::with_capacity(map.values.len());
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut n) = (0.0, 0.0);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        s += map.values[(ny * w + nx) as usize];
                        n += 1.0;
                    }
                }
            }
            out.push(s / n);
        }
    }
    out
}

/// Strict 8-neighbour maxima of the 3×3-smoothed map, highest first; ties
/// keep scan order.
pub fn find_peaks(map: &LikelihoodMap) -> Vec<Peak> {
    let s = smooth3(map);
    let (w, h) = (map.width as isize, map.height as isize);
    let mut peaks = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = s[(y * w + x) as usize];
            let mut is_max = true;
            'n: for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && nx < w && ny < h && s[(ny * w + nx) as usize] >= v {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                peaks.push(Peak {
                    x: x as usize,
                    y: y as usize,
                    height: v,
                    value: map.values[(y * w + x) as usize],
                    rank: 0,
                });
            }
        }
    }
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    for (i, p) in peaks.iter_mut().enumerate() {
        p.rank = i + 1;
    }
    peaks
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MapScore {
    /// Rank of the best peak inside the ground truth, or `peaks + 1`.
    pub score: usize,
    pub peaks: usize,
    pub hit: bool,
}

pub fn score_map(map: &LikelihoodMap, gt: Rect) -> Result<MapScore> {
    gt.check_inside(map.width, map.height)?;
    let peaks = find_peaks(map);
    let hit = peaks.iter().find(|p| gt.contains(p.x as isize, p.y as isize));
    Ok(MapScore {
        score: hit.map_or(peaks.len() + 1, |p| p.rank),
        peaks: peaks.len(),
        hit: hit.is_some(),
    })
}

/// Mean score over frames with a score; `None` marks occluded frames.
pub fn subset_score(scores: &[Option<f64>]) -> Option<f64> {
    let seen: Vec<f64> = scores.iter().flatten().copied().collect();
    if seen.is_empty() {
        None
    } else {
        Some(seen.iter().sum::<f64>() / seen.len() as f64)
    }
}
