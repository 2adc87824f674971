//! Low-level feature bank: gradients, structure-tensor and Hessian
//! responses, LBP codes, Canny edges and the pyramid HoG descriptor.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{bin_of, BinMap, GrayImage, MapKind, ScalarMap};
use crate::integral::{self, IntegralHistogramTensor, ScanSchedule};
use crate::swih::{to_fixed, FIXED_ONE};

pub const HARRIS_K: f64 = 0.04;
pub const LBP_POINTS: usize = 16;
pub const LBP_RADIUS: f64 = 2.0;
/// Number of distinct uniform-pattern histogram bins (popcount 0..=16).
pub const LBP_BINS: usize = LBP_POINTS + 1;

// ---------------------------------------------------------------------------
// filtering

/// Normalized Gaussian taps on `[-r, r]`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// First-derivative-of-Gaussian taps scaled so a unit ramp responds with
/// exactly 1. Correlation form: `out(x) = Σ k[i]·in(x + i − r)`.
pub fn gaussian_derivative_kernel(sigma: f64) -> Vec<f64> {
    let g = gaussian_kernel(sigma);
    let r = (g.len() / 2) as isize;
    let norm: f64 = (-r..=r).zip(&g).map(|(i, &v)| (i * i) as f64 * v).sum();
    (-r..=r).zip(&g).map(|(i, &v)| i as f64 * v / norm).collect()
}

/// Correlate every row with `k` (centered), clamping at the borders.
pub fn correlate_rows(m: &ScalarMap, k: &[f64]) -> ScalarMap {
    let r = (k.len() / 2) as isize;
    let (w, h) = (m.width(), m.height());
    let mut out = ScalarMap::zeros(w, h, m.kind());
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * m.get_clamped(x as isize + i as isize - r, y as isize);
            }
            out.set(x, y, acc);
        }
    }
    out
}

pub fn correlate_cols(m: &ScalarMap, k: &[f64]) -> ScalarMap {
    let r = (k.len() / 2) as isize;
    let (w, h) = (m.width(), m.height());
    let mut out = ScalarMap::zeros(w, h, m.kind());
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * m.get_clamped(x as isize, y as isize + i as isize - r);
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Separable Gaussian blur; identity for `sigma == 0`.
pub fn gaussian_blur(m: &ScalarMap, sigma: f64) -> ScalarMap {
    if sigma <= 0.0 {
        return m.clone();
    }
    let g = gaussian_kernel(sigma);
    correlate_cols(&correlate_rows(m, &g), &g)
}

/// `(∂x, ∂y)` by central differences (`sigma == 0`) or Gaussian
/// derivatives.
pub fn derivatives(m: &ScalarMap, sigma: f64) -> (ScalarMap, ScalarMap) {
    if sigma <= 0.0 {
        let d = [-0.5, 0.0, 0.5];
        (correlate_rows(m, &d), correlate_cols(m, &d))
    } else {
        let g = gaussian_kernel(sigma);
        let dg = gaussian_derivative_kernel(sigma);
        let gx = correlate_cols(&correlate_rows(m, &dg), &g);
        let gy = correlate_rows(&correlate_cols(m, &dg), &g);
        (gx, gy)
    }
}

/// Angle of the line through the origin and `(vx, vy)`, in degrees folded
/// into [−90, 90). The zero vector maps to 0.
#[inline]
pub fn fold_orientation(vx: f64, vy: f64) -> f64 {
    if vx == 0.0 && vy == 0.0 {
        return 0.0;
    }
    let mut a = vy.atan2(vx).to_degrees();
    while a >= 90.0 {
        a -= 180.0;
    }
    while a < -90.0 {
        a += 180.0;
    }
    a
}

// ---------------------------------------------------------------------------
// gradients and tensors

#[derive(Clone, Debug)]
pub struct GradientMaps {
    pub gx: ScalarMap,
    pub gy: ScalarMap,
    pub magnitude: ScalarMap,
    /// Degrees in [−90, 90).
    pub orientation: ScalarMap,
}

pub fn gradient_maps(img: &GrayImage, sigma: f64) -> GradientMaps {
    gradient_maps_of(&img.to_scalar(), sigma)
}

pub fn gradient_maps_of(m: &ScalarMap, sigma: f64) -> GradientMaps {
    let (gx, gy) = derivatives(m, sigma);
    let (w, h) = (m.width(), m.height());
    let magnitude = ScalarMap::from_fn(w, h, MapKind::GradientMagnitude, |x, y| {
        gx.get(x, y).hypot(gy.get(x, y))
    });
    let orientation = ScalarMap::from_fn(w, h, MapKind::OrientationDegrees, |x, y| {
        fold_orientation(gx.get(x, y), gy.get(x, y))
    });
    GradientMaps {
        gx: gx.with_kind(MapKind::GradientX),
        gy: gy.with_kind(MapKind::GradientY),
        magnitude,
        orientation,
    }
}

/// Smoothed outer product of the gradient.
#[derive(Clone, Debug)]
pub struct StructureTensor {
    pub jxx: ScalarMap,
    pub jxy: ScalarMap,
    pub jyy: ScalarMap,
}

/// Integration scale used when the derivative scale is 0.
pub const DEFAULT_INTEGRATION_SIGMA: f64 = 1.0;

pub fn structure_tensor(img: &GrayImage, sigma: f64) -> StructureTensor {
    let (gx, gy) = derivatives(&img.to_scalar(), sigma);
    let (w, h) = (img.width(), img.height());
    let prod =
        |f: &dyn Fn(f64, f64) -> f64| ScalarMap::from_fn(w, h, MapKind::Generic, |x, y| f(gx.get(x, y), gy.get(x, y)));
    let rho = if sigma > 0.0 { sigma } else { DEFAULT_INTEGRATION_SIGMA };
    StructureTensor {
        jxx: gaussian_blur(&prod(&|a, _| a * a), rho),
        jxy: gaussian_blur(&prod(&|a, b| a * b), rho),
        jyy: gaussian_blur(&prod(&|_, b| b * b), rho),
    }
}

/// Eigenvalues `(λmax, λmin)` of `[[a, b], [b, c]]`.
#[inline]
pub fn symmetric_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean + d, mean - d)
}

#[derive(Clone, Debug)]
pub struct Hessian {
    pub ixx: ScalarMap,
    pub ixy: ScalarMap,
    pub iyy: ScalarMap,
}

pub fn hessian(img: &GrayImage, sigma: f64) -> Hessian {
    let m = img.to_scalar();
    let (w, h) = (m.width(), m.height());
    if sigma <= 0.0 {
        let at = |x: usize, y: usize, dx: isize, dy: isize| m.get_clamped(x as isize + dx, y as isize + dy);
        Hessian {
            ixx: ScalarMap::from_fn(w, h, MapKind::Generic, |x, y| {
                at(x, y, 1, 0) - 2.0 * at(x, y, 0, 0) + at(x, y, -1, 0)
            }),
            iyy: ScalarMap::from_fn(w, h, MapKind::Generic, |x, y| {
                at(x, y, 0, 1) - 2.0 * at(x, y, 0, 0) + at(x, y, 0, -1)
            }),
            ixy: ScalarMap::from_fn(w, h, MapKind::Generic, |x, y| {
                0.25 * (at(x, y, 1, 1) - at(x, y, 1, -1) - at(x, y, -1, 1) + at(x, y, -1, -1))
            }),
        }
    } else {
        let (gx, gy) = derivatives(&m, sigma);
        let d = [-0.5, 0.0, 0.5];
        Hessian {
            ixx: correlate_rows(&gx, &d),
            ixy: correlate_cols(&gx, &d),
            iyy: correlate_cols(&gy, &d),
        }
    }
}

// ---------------------------------------------------------------------------
// feature maps

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    GradientMagnitude,
    Orientation,
    Beltrami,
    Harris,
    ShiTomasi,
    Cumani,
    ShapeIndex,
    Nci,
    EigvecOrientation,
    Lbp,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 10] = [
        FeatureKind::GradientMagnitude,
        FeatureKind::Orientation,
        FeatureKind::Beltrami,
        FeatureKind::Harris,
        FeatureKind::ShiTomasi,
        FeatureKind::Cumani,
        FeatureKind::ShapeIndex,
        FeatureKind::Nci,
        FeatureKind::EigvecOrientation,
        FeatureKind::Lbp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::GradientMagnitude => "gradient-magnitude",
            FeatureKind::Orientation => "orientation",
            FeatureKind::Beltrami => "beltrami",
            FeatureKind::Harris => "harris",
            FeatureKind::ShiTomasi => "shi-tomasi",
            FeatureKind::Cumani => "cumani",
            FeatureKind::ShapeIndex => "shape-index",
            FeatureKind::Nci => "nci",
            FeatureKind::EigvecOrientation => "eigvec-orientation",
            FeatureKind::Lbp => "lbp",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .or(match s.as_str() {
                "gm" | "magnitude" => Some(FeatureKind::GradientMagnitude),
                "si" => Some(FeatureKind::ShapeIndex),
                "shitomasi" => Some(FeatureKind::ShiTomasi),
                _ => None,
            })
            .ok_or_else(|| Error::invalid(format!("unknown feature kind `{s}`")))
    }
}

pub fn feature_map(img: &GrayImage, kind: FeatureKind, sigma: f64) -> ScalarMap {
    let (w, h) = (img.width(), img.height());
    match kind {
        FeatureKind::GradientMagnitude => gradient_maps(img, sigma).magnitude,
        FeatureKind::Orientation => gradient_maps(img, sigma).orientation,
        FeatureKind::Beltrami | FeatureKind::Harris | FeatureKind::ShiTomasi | FeatureKind::Cumani => {
            let t = structure_tensor(img, sigma);
            let (tag, f): (MapKind, fn(f64, f64) -> f64) = match kind {
                FeatureKind::Beltrami => (MapKind::Beltrami, |l1, l2| 1.0 + (l1 + l2) + l1 * l2),
                FeatureKind::Harris => (MapKind::Harris, |l1, l2| l1 * l2 - HARRIS_K * (l1 + l2) * (l1 + l2)),
                FeatureKind::ShiTomasi => (MapKind::ShiTomasi, |_, l2| l2),
                _ => (MapKind::Cumani, |l1, _| l1),
            };
            ScalarMap::from_fn(w, h, tag, |x, y| {
                let (l1, l2) = symmetric_eigenvalues(t.jxx.get(x, y), t.jxy.get(x, y), t.jyy.get(x, y));
                f(l1, l2)
            })
        }
        FeatureKind::ShapeIndex => {
            let hs = hessian(img, sigma);
            ScalarMap::from_fn(w, h, MapKind::ShapeIndex, |x, y| {
                let (lmax, lmin) = symmetric_eigenvalues(hs.ixx.get(x, y), hs.ixy.get(x, y), hs.iyy.get(x, y));
                shape_index(lmax, lmin)
            })
        }
        FeatureKind::Nci => {
            let hs = hessian(img, sigma);
            ScalarMap::from_fn(w, h, MapKind::Nci, |x, y| {
                let (l1, l2) = symmetric_eigenvalues(hs.ixx.get(x, y), hs.ixy.get(x, y), hs.iyy.get(x, y));
                ((l1 * l1 + l2 * l2).sqrt() / (1.0 + f64::from(img.get(x, y)))).atan()
            })
        }
        FeatureKind::EigvecOrientation => {
            let hs = hessian(img, sigma);
            ScalarMap::from_fn(w, h, MapKind::EigvecOrientation, |x, y| {
                let (ixx, ixy, iyy) = (hs.ixx.get(x, y), hs.ixy.get(x, y), hs.iyy.get(x, y));
                let (lmax, _) = symmetric_eigenvalues(ixx, ixy, iyy);
                fold_orientation(lmax - iyy, ixy)
            })
        }
        FeatureKind::Lbp => lbp_map(img),
    }
}

/// `atan2(λmin, λmax)`, with the flat case pinned to 0.
#[inline]
pub fn shape_index(lmax: f64, lmin: f64) -> f64 {
    if lmax == 0.0 && lmin == 0.0 {
        0.0
    } else {
        // adding 0.0 turns a -0.0 result into +0.0
        lmin.atan2(lmax) + 0.0
    }
}

// ---------------------------------------------------------------------------
// LBP

const LBP_FRAC_BITS: u32 = 12;

/// Integer bilinear taps for one circle sample: the four neighbour offsets
/// and weights summing to `2^(2·LBP_FRAC_BITS)`.
fn lbp_taps() -> [([isize; 2], [i64; 4]); LBP_POINTS] {
    let one = 1i64 << LBP_FRAC_BITS;
    std::array::from_fn(|p| {
        let a = 2.0 * std::f64::consts::PI * p as f64 / LBP_POINTS as f64;
        // y grows downwards, so counter-clockwise sampling subtracts sin
        let (sx, sy) = (LBP_RADIUS * a.cos(), -LBP_RADIUS * a.sin());
        let (fx, fy) = (sx.floor(), sy.floor());
        let wx = ((sx - fx) * one as f64).round() as i64;
        let wy = ((sy - fy) * one as f64).round() as i64;
        (
            [fx as isize, fy as isize],
            [(one - wx) * (one - wy), wx * (one - wy), (one - wx) * wy, wx * wy],
        )
    })
}

/// 16-bit LBP codes at radius 2, border samples clamped.
pub fn lbp_map(img: &GrayImage) -> ScalarMap {
    let taps = lbp_taps();
    let (w, h) = (img.width() as isize, img.height() as isize);
    let px = |x: isize, y: isize| i64::from(img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize));
    ScalarMap::from_fn(img.width(), img.height(), MapKind::LbpCode, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let center = px(x, y) << (2 * LBP_FRAC_BITS);
        let mut code = 0u32;
        for (p, ([ox, oy], wt)) in taps.iter().enumerate() {
            let (x0, y0) = (x + ox, y + oy);
            let v = wt[0] * px(x0, y0) + wt[1] * px(x0 + 1, y0) + wt[2] * px(x0, y0 + 1) + wt[3] * px(x0 + 1, y0 + 1);
            if v >= center {
                code |= 1 << p;
            }
        }
        f64::from(code)
    })
}

/// Histogram bin of an LBP code: the number of set sample bits.
pub fn lbp_bins(codes: &ScalarMap) -> Result<BinMap> {
    let data = codes.values().iter().map(|&c| (c as u32).count_ones() as u16).collect();
    BinMap::new(codes.width(), codes.height(), LBP_BINS, data)
}

// ---------------------------------------------------------------------------
// Canny

fn sobel(img: &GrayImage) -> (ScalarMap, ScalarMap) {
    let m = img.to_scalar();
    let (w, h) = (m.width(), m.height());
    let at = |x: usize, y: usize, dx: isize, dy: isize| m.get_clamped(x as isize + dx, y as isize + dy);
    let gx = ScalarMap::from_fn(w, h, MapKind::GradientX, |x, y| {
        (at(x, y, 1, -1) + 2.0 * at(x, y, 1, 0) + at(x, y, 1, 1))
            - (at(x, y, -1, -1) + 2.0 * at(x, y, -1, 0) + at(x, y, -1, 1))
    });
    let gy = ScalarMap::from_fn(w, h, MapKind::GradientY, |x, y| {
        (at(x, y, -1, 1) + 2.0 * at(x, y, 0, 1) + at(x, y, 1, 1))
            - (at(x, y, -1, -1) + 2.0 * at(x, y, 0, -1) + at(x, y, 1, -1))
    });
    (gx, gy)
}

/// Sobel magnitude after non-maximum suppression along the gradient
/// direction quantized to 0°, 45°, 90° or 135°. A pixel survives when it is
/// ≥ its backward neighbour and > its forward neighbour, which keeps one
/// pixel of a two-pixel plateau.
pub fn nms_magnitude(img: &GrayImage) -> ScalarMap {
    let (gx, gy) = sobel(img);
    let (w, h) = (img.width(), img.height());
    let mag = ScalarMap::from_fn(w, h, MapKind::GradientMagnitude, |x, y| {
        gx.get(x, y).hypot(gy.get(x, y))
    });
    ScalarMap::from_fn(w, h, MapKind::GradientMagnitude, |x, y| {
        let m = mag.get(x, y);
        if m == 0.0 {
            return 0.0;
        }
        let mut a = gy.get(x, y).atan2(gx.get(x, y)).to_degrees();
        if a < 0.0 {
            a += 180.0;
        }
        let (dx, dy) = if !(22.5..157.5).contains(&a) {
            (1, 0)
        } else if a < 67.5 {
            (1, 1)
        } else if a < 112.5 {
            (0, 1)
        } else {
            (-1, 1)
        };
        let (xi, yi) = (x as isize, y as isize);
        let back = mag.get_clamped(xi - dx, yi - dy);
        let fwd = mag.get_clamped(xi + dx, yi + dy);
        let back_ok = xi - dx < 0 || yi - dy < 0 || yi - dy >= h as isize || xi - dx >= w as isize || m >= back;
        let fwd_ok = xi + dx < 0 || yi + dy < 0 || yi + dy >= h as isize || xi + dx >= w as isize || m > fwd;
        if back_ok && fwd_ok {
            m
        } else {
            0.0
        }
    })
}

/// Canny edges in {0, 1}: strong pixels have NMS magnitude > `hi`, and weak
/// pixels (> `lo`) survive when 8-connected to a strong one.
pub fn edge_map(img: &GrayImage, lo: f64, hi: f64) -> Result<ScalarMap> {
    if !(lo >= 0.0 && lo <= hi) {
        return Err(Error::invalid(format!(
            "edge thresholds need 0 <= lo <= hi, got {lo}, {hi}"
        )));
    }
    Ok(hysteresis(&nms_magnitude(img), lo, hi))
}

/// Canny with thresholds at 10% and 20% of the peak gradient magnitude.
pub fn edge_map_auto(img: &GrayImage) -> ScalarMap {
    let nms = nms_magnitude(img);
    let (_, peak) = nms.min_max();
    hysteresis(&nms, 0.1 * peak, 0.2 * peak)
}

fn hysteresis(nms: &ScalarMap, lo: f64, hi: f64) -> ScalarMap {
    let (w, h) = (nms.width(), nms.height());
    let mut out = ScalarMap::zeros(w, h, MapKind::Edge);
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let v = nms.get(x, y);
            if v > 0.0 && v > hi {
                out.set(x, y, 1.0);
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let v = nms.get(nx, ny);
                if out.get(nx, ny) == 0.0 && v > 0.0 && v > lo {
                    out.set(nx, ny, 1.0);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// pyramid HoG

/// Concatenated per-level cell histograms; level `l` holds `4^l` cells in
/// row-major order, `bins` entries each.
#[derive(Clone, Debug, PartialEq)]
pub struct PHoG {
    levels: usize,
    bins: usize,
    data: Vec<f64>,
}

impl PHoG {
    pub fn new(levels: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::descriptor_len(levels, bins) {
            return Err(Error::mismatch(format!(
                "descriptor of {} values for L={levels}, k={bins}",
                data.len()
            )));
        }
        Ok(Self { levels, bins, data })
    }

    /// `k · Σ_{l=0..=L} 4^l`.
    pub fn descriptor_len(levels: usize, bins: usize) -> usize {
        bins * (0..=levels).map(|l| 1usize << (2 * l)).sum::<usize>()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn level_offset(&self, l: usize) -> usize {
        self.bins * (0..l).map(|i| 1usize << (2 * i)).sum::<usize>()
    }

    /// All cells of level `l`, concatenated.
    pub fn level(&self, l: usize) -> &[f64] {
        let start = self.level_offset(l);
        &self.data[start..start + self.bins * (1 << (2 * l))]
    }

    pub fn level_mut(&mut self, l: usize) -> &mut [f64] {
        let start = self.level_offset(l);
        let n = self.bins * (1 << (2 * l));
        &mut self.data[start..start + n]
    }

    /// Copy with every level scaled to unit mass (empty levels stay zero).
    pub fn normalized(&self) -> PHoG {
        let mut out = self.clone();
        for l in 0..=self.levels {
            let lv = out.level_mut(l);
            let s: f64 = lv.iter().sum();
            if s > 0.0 {
                lv.iter_mut().for_each(|v| *v /= s);
            }
        }
        out
    }
}

/// Orientation bins, edge-masked magnitude weights, and the weighted
/// integral histogram for one window.
pub struct PhogIndex {
    levels: usize,
    bins: usize,
    tensor: IntegralHistogramTensor,
}

impl PhogIndex {
    /// Gradient orientation in `bins` bins over [−90, 90), weighted by
    /// gradient magnitude on Canny edge pixels and 0 elsewhere.
    pub fn from_window(window: &GrayImage, levels: usize, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("PHoG needs at least one bin"));
        }
        let g = gradient_maps(window, 0.0);
        let edges = edge_map_auto(window);
        let bin_data = g
            .orientation
            .values()
            .iter()
            .map(|&a| bin_of(a, bins, -90.0, 90.0) as u16)
            .collect();
        let bin_map = BinMap::new(window.width(), window.height(), bins, bin_data)?;
        let weights: Vec<f64> = g
            .magnitude
            .values()
            .iter()
            .zip(edges.values())
            .map(|(&m, &e)| if e > 0.0 { m } else { 0.0 })
            .collect();
        Self::from_bins(&bin_map, &weights, levels)
    }

    /// Index over caller-supplied bins and per-pixel weights.
    pub fn from_bins(bin_map: &BinMap, weights: &[f64], levels: usize) -> Result<Self> {
        if weights.len() != bin_map.data().len() {
            return Err(Error::mismatch("one weight per pixel is required"));
        }
        let fixed: Vec<u64> = weights.iter().map(|&w| to_fixed(w)).collect();
        let tensor = integral::build_weighted(bin_map, &fixed, &ScanSchedule::sequential())?;
        Ok(Self {
            levels,
            bins: bin_map.bins(),
            tensor,
        })
    }

    pub fn width(&self) -> usize {
        self.tensor.width()
    }

    pub fn height(&self) -> usize {
        self.tensor.height()
    }

    pub fn check_chip(&self, chip_w: usize, chip_h: usize) -> Result<()> {
        let s = 1usize << self.levels;
        if chip_w == 0 || chip_h == 0 || !chip_w.is_multiple_of(s) || !chip_h.is_multiple_of(s) {
            return Err(Error::invalid(format!(
                "chip {chip_w}x{chip_h} is not divisible by 2^{} = {s}",
                self.levels
            )));
        }
        if chip_w > self.width() || chip_h > self.height() {
            return Err(Error::invalid(format!(
                "chip {chip_w}x{chip_h} exceeds the {}x{} window",
                self.width(),
                self.height()
            )));
        }
        Ok(())
    }

    /// Descriptor of the chip with top-left `(x, y)`; the chip must have
    /// passed [`PhogIndex::check_chip`] and lie inside the window.
    pub fn descriptor(&self, x: usize, y: usize, chip_w: usize, chip_h: usize) -> PHoG {
        let mut data = Vec::with_capacity(PHoG::descriptor_len(self.levels, self.bins));
        let mut cell = vec![0u64; self.bins];
        for l in 0..=self.levels {
            let s = 1usize << l;
            let (cw, ch) = (chip_w / s, chip_h / s);
            for i in 0..s {
                for j in 0..s {
                    let (x0, y0) = (x + j * cw, y + i * ch);
                    self.tensor.region_into(x0, y0, x0 + cw, y0 + ch, &mut cell);
                    data.extend(cell.iter().map(|&v| v as f64 / FIXED_ONE as f64));
                }
            }
        }
        PHoG {
            levels: self.levels,
            bins: self.bins,
            data,
        }
    }
}

/// Descriptors for every chip position, row-major over top-left corners.
pub fn pyramid_hog(window: &GrayImage, levels: usize, bins: usize, chip_w: usize, chip_h: usize) -> Result<Vec<PHoG>> {
    let index = PhogIndex::from_window(window, levels, bins)?;
    all_chips(&index, chip_w, chip_h)
}

/// [`pyramid_hog`] over caller-supplied orientation bins and weights.
pub fn pyramid_hog_from_bins(
    bin_map: &BinMap,
    weights: &[f64],
    levels: usize,
    chip_w: usize,
    chip_h: usize,
) -> Result<Vec<PHoG>> {
    let index = PhogIndex::from_bins(bin_map, weights, levels)?;
    all_chips(&index, chip_w, chip_h)
}

fn all_chips(index: &PhogIndex, chip_w: usize, chip_h: usize) -> Result<Vec<PHoG>> {
    index.check_chip(chip_w, chip_h)?;
    let mut out = Vec::with_capacity((index.width() - chip_w + 1) * (index.height() - chip_h + 1));
    for y in 0..=index.height() - chip_h {
        for x in 0..=index.width() - chip_w {
            out.push(index.descriptor(x, y, chip_w, chip_h));
        }
    }
    Ok(out)
}
