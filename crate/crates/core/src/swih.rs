//! Spatially weighted local histograms.
//!
//! A Manhattan kernel centered at `(cx, cy)` gives pixel `(x, y)` the
//! weight `wmax − |x − cx| − |y − cy|`. Inside each of the four quadrants
//! around the center that weight is an affine function of `(x, y)` with
//! slopes ±1, so it splits into a location-independent ramp (built once
//! per image into a weighted integral histogram) plus a per-query
//! constant. The constant times the plain pixel count of the quadrant
//! restores the exact weighted sum, so quadrant queries stay O(1).
//!
//! All weighted sums are 16.16 fixed point, which makes the exact path and
//! the brute-force reference comparable bit for bit.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{BinMap, MapKind, Rect, ScalarMap};
use crate::integral::{self, IntegralHistogramTensor, ScanSchedule};

pub const FIXED_SHIFT: u32 = 16;
pub const FIXED_ONE: u64 = 1 << FIXED_SHIFT;

/// Real weight to 16.16 fixed point, rounded to nearest.
pub fn to_fixed(w: f64) -> u64 {
    assert!(w.is_finite() && w >= 0.0, "weights must be finite and nonnegative");
    (w * FIXED_ONE as f64).round() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Weighting {
    Manhattan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KernelSpec {
    pub kw: usize,
    pub kh: usize,
    pub weighting: Weighting,
}

impl KernelSpec {
    pub fn new(kw: usize, kh: usize) -> Result<Self> {
        if kw == 0 || kh == 0 {
            return Err(Error::invalid(format!("kernel {kw}x{kh} must be at least 1x1")));
        }
        Ok(Self {
            kw,
            kh,
            weighting: Weighting::Manhattan,
        })
    }

    /// Columns left of the center.
    pub fn west(&self) -> usize {
        self.kw / 2
    }

    /// Columns from the center rightwards, center included.
    pub fn east(&self) -> usize {
        self.kw - self.kw / 2
    }

    pub fn north(&self) -> usize {
        self.kh / 2
    }

    pub fn south(&self) -> usize {
        self.kh - self.kh / 2
    }

    /// Weight at the center; the farthest corner gets exactly 1.
    pub fn w_max(&self) -> u64 {
        (self.kw / 2 + self.kh / 2 + 1) as u64
    }

    /// Integer kernel weight at offset `(dx, dy)` from the center.
    #[inline]
    pub fn weight(&self, dx: isize, dy: isize) -> u64 {
        match self.weighting {
            Weighting::Manhattan => self.w_max() - dx.unsigned_abs() as u64 - dy.unsigned_abs() as u64,
        }
    }

    pub fn window(&self, cx: isize, cy: isize) -> Rect {
        Rect::new(cx - self.west() as isize, cy - self.north() as isize, self.kw, self.kh)
    }

    pub fn check_window(&self, cx: isize, cy: isize, width: usize, height: usize) -> Result<()> {
        self.window(cx, cy).check_inside(width, height)
    }

    /// Half-open quadrant rectangle `(x0, y0, x1, y1)`; may be empty.
    pub fn quadrant_bounds(&self, q: Quadrant, cx: usize, cy: usize) -> (usize, usize, usize, usize) {
        let (x0, x1) = if q.east() {
            (cx, cx + self.east())
        } else {
            (cx - self.west(), cx)
        };
        let (y0, y1) = if q.south() {
            (cy, cy + self.south())
        } else {
            (cy - self.north(), cy)
        };
        (x0, y0, x1, y1)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.kw, self.kh)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// `"31x31"` or a single side `"31"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad kernel size `{s}`, expected WxH"));
        let mut parts = s.split(['x', 'X']);
        let kw: usize = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let kh = match parts.next() {
            Some(p) => p.trim().parse().map_err(|_| bad())?,
            None => kw,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        KernelSpec::new(kw, kh)
    }
}

/// The direction in which a quadrant's weights decrease.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quadrant {
    SE,
    SW,
    NE,
    NW,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::SE, Quadrant::SW, Quadrant::NE, Quadrant::NW];

    fn east(self) -> bool {
        matches!(self, Quadrant::SE | Quadrant::NE)
    }

    fn south(self) -> bool {
        matches!(self, Quadrant::SE | Quadrant::SW)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Quadrant that a 180° image rotation maps this one onto.
    pub fn opposite(self) -> Quadrant {
        match self {
            Quadrant::SE => Quadrant::NW,
            Quadrant::SW => Quadrant::NE,
            Quadrant::NE => Quadrant::SW,
            Quadrant::NW => Quadrant::SE,
        }
    }
}

/// Affine ramp `sx·x + sy·y + c`, at least 1 over the whole image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Ramp {
    sx: i64,
    sy: i64,
    c: i64,
}

impl Ramp {
    fn new(q: Quadrant, width: usize, height: usize, x_active: bool, y_active: bool) -> Self {
        let sx = if !x_active {
            0
        } else if q.east() {
            -1
        } else {
            1
        };
        let sy = if !y_active {
            0
        } else if q.south() {
            -1
        } else {
            1
        };
        let (w, h) = (width as i64, height as i64);
        let c = match q {
            Quadrant::SE => w + h - 1,
            Quadrant::SW => h,
            Quadrant::NE => w,
            Quadrant::NW => 1,
        };
        Self { sx, sy, c }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> i64 {
        self.sx * x as i64 + self.sy * y as i64 + self.c
    }

    /// Constant restoring the kernel weight: `weight = ramp + offset`.
    #[inline]
    fn offset(&self, spec: &KernelSpec, cx: usize, cy: usize) -> i64 {
        spec.w_max() as i64 - self.sx * cx as i64 - self.sy * cy as i64 - self.c
    }
}

/// Full-image weight field for one quadrant direction.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    width: usize,
    height: usize,
    weights: Vec<f64>,
    quadrant: Quadrant,
}

impl WeightField {
    pub fn new(width: usize, height: usize, weights: Vec<f64>, quadrant: Quadrant) -> Result<Self> {
        if width == 0 || height == 0 || weights.len() != width * height {
            return Err(Error::mismatch(format!(
                "{} weights for a {width}x{height} field",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(Self {
            width,
            height,
            weights,
            quadrant,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn quadrant(&self) -> Quadrant {
        self.quadrant
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }

    pub fn to_fixed(&self) -> Vec<u64> {
        self.weights.iter().map(|&w| to_fixed(w)).collect()
    }
}

/// The four location-independent ramps, ordered as [`Quadrant::ALL`].
///
/// An axis along which the kernel is one pixel wide gets a zero slope, so a
/// 1×1 kernel yields four constant fields.
pub fn quadrant_weight_fields(width: usize, height: usize, spec: &KernelSpec) -> [WeightField; 4] {
    Quadrant::ALL.map(|q| {
        let ramp = Ramp::new(q, width, height, spec.kw > 1, spec.kh > 1);
        let mut weights = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                weights.push(ramp.at(x, y) as f64);
            }
        }
        WeightField {
            width,
            height,
            weights,
            quadrant: q,
        }
    })
}

/// Weighted integral histogram of `map` under `field` (16.16 fixed point).
pub fn build_weighted_ih(
    map: &BinMap,
    field: &WeightField,
    schedule: &ScanSchedule,
) -> Result<IntegralHistogramTensor> {
    if field.width != map.width() || field.height != map.height() {
        return Err(Error::mismatch(format!(
            "{}x{} field for a {}x{} map",
            field.width,
            field.height,
            map.width(),
            map.height()
        )));
    }
    integral::build_weighted(map, &field.to_fixed(), schedule)
}

/// Four quadrant-weighted tensors plus the plain count tensor.
#[derive(Clone, Debug)]
pub struct WeightedQuadrantSet {
    ramps: [Ramp; 4],
    tensors: Vec<IntegralHistogramTensor>,
    counts: IntegralHistogramTensor,
    x_active: bool,
    y_active: bool,
}

impl WeightedQuadrantSet {
    /// Build for kernels of the same shape class as `spec`. A set built
    /// with a kernel wider than one pixel on both axes serves every kernel
    /// size.
    pub fn build(map: &BinMap, spec: &KernelSpec, schedule: &ScanSchedule) -> Result<Self> {
        let (x_active, y_active) = (spec.kw > 1, spec.kh > 1);
        let fields = quadrant_weight_fields(map.width(), map.height(), spec);
        let tensors = fields
            .iter()
            .map(|f| build_weighted_ih(map, f, schedule))
            .collect::<Result<Vec<_>>>()?;
        let counts = integral::build(map, schedule)?;
        let ramps = Quadrant::ALL.map(|q| Ramp::new(q, map.width(), map.height(), x_active, y_active));
        Ok(Self {
            ramps,
            tensors,
            counts,
            x_active,
            y_active,
        })
    }

    pub fn tensor(&self, q: Quadrant) -> &IntegralHistogramTensor {
        &self.tensors[q.index()]
    }

    pub fn counts(&self) -> &IntegralHistogramTensor {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.bins()
    }

    pub fn width(&self) -> usize {
        self.counts.width()
    }

    pub fn height(&self) -> usize {
        self.counts.height()
    }
}

/// Raw per-quadrant weighted sums, 16.16 fixed point, ordered as
/// [`Quadrant::ALL`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightedHistogram {
    pub quadrants: [Vec<u64>; 4],
}

impl WeightedHistogram {
    fn zeros(bins: usize) -> Self {
        Self {
            quadrants: std::array::from_fn(|_| vec![0; bins]),
        }
    }

    pub fn bins(&self) -> usize {
        self.quadrants[0].len()
    }

    pub fn quadrant(&self, q: Quadrant) -> &[u64] {
        &self.quadrants[q.index()]
    }

    /// Quadrant sums added bin by bin.
    pub fn total(&self) -> Vec<u64> {
        (0..self.bins())
            .map(|k| self.quadrants.iter().map(|q| q[k]).sum())
            .collect()
    }

    pub fn mass(&self) -> u64 {
        self.quadrants.iter().flatten().sum()
    }

    /// Whole-kernel histogram scaled to unit mass.
    pub fn normalized(&self) -> Vec<f64> {
        normalize_counts(&self.total())
    }

    /// Each nonempty quadrant scaled to unit mass, then summed and the
    /// result rescaled to unit mass.
    pub fn normalized_per_quadrant(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.bins()];
        for q in &self.quadrants {
            let m: u64 = q.iter().sum();
            if m > 0 {
                for (o, &v) in out.iter_mut().zip(q) {
                    *o += v as f64 / m as f64;
                }
            }
        }
        let s: f64 = out.iter().sum();
        if s > 0.0 {
            out.iter_mut().for_each(|v| *v /= s);
        }
        out
    }
}

pub fn normalize_counts(h: &[u64]) -> Vec<f64> {
    let m: u64 = h.iter().sum();
    if m == 0 {
        return vec![0.0; h.len()];
    }
    h.iter().map(|&v| v as f64 / m as f64).collect()
}

/// O(1) weighted local histogram at `(cx, cy)`.
pub fn swlh_query(set: &WeightedQuadrantSet, cx: usize, cy: usize, spec: &KernelSpec) -> Result<WeightedHistogram> {
    spec.check_window(cx as isize, cy as isize, set.width(), set.height())?;
    if (spec.kw > 1 && !set.x_active) || (spec.kh > 1 && !set.y_active) {
        return Err(Error::invalid(format!(
            "quadrant set was built for one-pixel kernels and cannot serve {spec}"
        )));
    }
    let mut out = WeightedHistogram::zeros(set.bins());
    query_into(set, cx, cy, spec, &mut out);
    Ok(out)
}

/// Unchecked query used by sliding-window loops.
fn query_into(set: &WeightedQuadrantSet, cx: usize, cy: usize, spec: &KernelSpec, out: &mut WeightedHistogram) {
    for q in Quadrant::ALL {
        let (x0, y0, x1, y1) = spec.quadrant_bounds(q, cx, cy);
        let dst = &mut out.quadrants[q.index()];
        if x0 == x1 || y0 == y1 {
            dst.iter_mut().for_each(|v| *v = 0);
            continue;
        }
        let ramp = &set.ramps[q.index()];
        let shift = i128::from(ramp.offset(spec, cx, cy)) << FIXED_SHIFT;
        let t = &set.tensors[q.index()];
        for (k, d) in dst.iter_mut().enumerate() {
            let ramp_sum = i128::from(t.bin_sum(k, x0, y0, x1, y1));
            let count = i128::from(set.counts.bin_sum(k, x0, y0, x1, y1));
            let v = ramp_sum + shift * count;
            debug_assert!(v >= 0, "kernel weights are positive");
            *d = v as u64;
        }
    }
}

/// Direct double loop over the kernel window; the reference.
pub fn brute_force_swlh(map: &BinMap, cx: usize, cy: usize, spec: &KernelSpec) -> Result<WeightedHistogram> {
    spec.check_window(cx as isize, cy as isize, map.width(), map.height())?;
    let mut out = WeightedHistogram::zeros(map.bins());
    for q in Quadrant::ALL {
        let (x0, y0, x1, y1) = spec.quadrant_bounds(q, cx, cy);
        let dst = &mut out.quadrants[q.index()];
        for y in y0..y1 {
            for x in x0..x1 {
                let w = spec.weight(x as isize - cx as isize, y as isize - cy as isize);
                dst[map.get(x, y)] += w << FIXED_SHIFT;
            }
        }
    }
    Ok(out)
}

/// Nested-rectangle approximation with `layers` constant-weight rings,
/// normalized to unit mass.
///
/// Ring `j` lies between rectangles `j − 1` and `j`, whose extents on each
/// side of the center are `round(j·e/layers)` of the kernel's extent `e`.
/// A ring is weighted by the kernel weight at its inner edge, averaged over
/// the horizontal and vertical axes.
pub fn wedding_cake_swlh(
    tensor: &IntegralHistogramTensor,
    cx: usize,
    cy: usize,
    spec: &KernelSpec,
    layers: usize,
) -> Result<Vec<f64>> {
    if layers == 0 {
        return Err(Error::invalid("wedding cake needs at least one layer"));
    }
    spec.check_window(cx as isize, cy as isize, tensor.width(), tensor.height())?;
    let b = tensor.bins();
    // extents beyond the center pixel on each side
    let (left, right) = (spec.west(), spec.east() - 1);
    let (up, down) = (spec.north(), spec.south() - 1);
    let scaled = |e: usize, j: usize| ((j * e) as f64 / layers as f64).round() as usize;
    let wmax = spec.w_max() as f64;

    let mut out = vec![0.0; b];
    let mut inner = vec![0u64; b];
    let mut outer = vec![0u64; b];
    let mut prev: Option<(usize, usize)> = None;
    for j in 1..=layers {
        let (l, r, u, d) = (scaled(left, j), scaled(right, j), scaled(up, j), scaled(down, j));
        tensor.region_into(cx - l, cy - u, cx + r + 1, cy + d + 1, &mut outer);
        let weight = match prev {
            None => wmax,
            Some((ex, ey)) => ((wmax - ex as f64) + (wmax - ey as f64)) / 2.0,
        };
        for k in 0..b {
            out[k] += weight * (outer[k] - inner[k]) as f64;
        }
        std::mem::swap(&mut inner, &mut outer);
        prev = Some((l.max(r), u.max(d)));
    }
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|v| *v /= s);
    }
    Ok(out)
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "histograms differ in length");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwlhMethod {
    Exact,
    Cake { layers: usize },
    Brute,
}

/// Sliding-window matching surface: at every center whose kernel window
/// fits, `1 − ½·L1` between the local weighted histogram and the one at
/// `template_center`. Centers without a full window get 0.
pub fn swlh_surface(
    map: &BinMap,
    spec: &KernelSpec,
    method: SwlhMethod,
    template_center: (usize, usize),
    schedule: &ScanSchedule,
) -> Result<ScalarMap> {
    let (w, h) = (map.width(), map.height());
    let (tx, ty) = template_center;
    spec.check_window(tx as isize, ty as isize, w, h)?;

    enum Engine {
        Exact(WeightedQuadrantSet),
        Cake(IntegralHistogramTensor, usize),
        Brute,
    }
    let engine = match method {
        SwlhMethod::Exact => Engine::Exact(WeightedQuadrantSet::build(map, spec, schedule)?),
        SwlhMethod::Cake { layers } => Engine::Cake(integral::build(map, schedule)?, layers),
        SwlhMethod::Brute => Engine::Brute,
    };
    let local = |cx: usize, cy: usize| -> Result<Vec<f64>> {
        match &engine {
            Engine::Exact(set) => Ok(swlh_query(set, cx, cy, spec)?.normalized()),
            Engine::Cake(t, layers) => wedding_cake_swlh(t, cx, cy, spec, *layers),
            Engine::Brute => Ok(brute_force_swlh(map, cx, cy, spec)?.normalized()),
        }
    };
    let template = local(tx, ty)?;
    let mut out = ScalarMap::zeros(w, h, MapKind::Generic);
    if spec.kw > w || spec.kh > h {
        return Ok(out);
    }
    for cy in spec.north()..=h - spec.south() {
        for cx in spec.west()..=w - spec.east() {
            let hist = local(cx, cy)?;
            let l1: f64 = hist.iter().zip(&template).map(|(a, b)| (a - b).abs()).sum();
            out.set(cx, cy, (1.0 - 0.5 * l1).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral::ScheduleKind;
    use proptest::prelude::*;

    fn lcg_map(w: usize, h: usize, b: usize, seed: u64) -> BinMap {
        let mut s = seed;
        let data = (0..w * h)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) % b as u64) as u16
            })
            .collect();
        BinMap::new(w, h, b, data).unwrap()
    }

    #[test]
    fn kernel_extents() {
        let k = KernelSpec::new(4, 5).unwrap();
        assert_eq!((k.west(), k.east(), k.north(), k.south()), (2, 2, 2, 3));
        assert_eq!(k.w_max(), 5);
        assert_eq!(k.window(10, 10), Rect::new(8, 8, 4, 5));
        assert_eq!(k.weight(-2, -2), 1);
        assert_eq!(k.weight(1, 2), 2);
        assert_eq!("31x15".parse::<KernelSpec>().unwrap(), KernelSpec::new(31, 15).unwrap());
        assert_eq!("7".parse::<KernelSpec>().unwrap(), KernelSpec::new(7, 7).unwrap());
        assert!("0x3".parse::<KernelSpec>().is_err());
        assert!("3y3".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn one_by_one_fields_are_constant() {
        let spec = KernelSpec::new(1, 1).unwrap();
        for f in quadrant_weight_fields(6, 4, &spec) {
            let first = f.weights()[0];
            assert!(f.weights().iter().all(|&v| v == first));
            assert!(first >= 1.0);
        }
    }

    #[test]
    fn four_by_four_fields_follow_manhattan_ramp() {
        let spec = KernelSpec::new(4, 4).unwrap();
        let (w, h) = (9usize, 7usize);
        let fields = quadrant_weight_fields(w, h, &spec);
        let (cx, cy) = (4usize, 3usize);
        for f in &fields {
            let q = f.quadrant();
            let (x0, y0, x1, y1) = spec.quadrant_bounds(q, cx, cy);
            // inside the quadrant, field + a constant is the kernel weight
            let mut delta = None;
            for y in y0..y1 {
                for x in x0..x1 {
                    let kernel = spec.weight(x as isize - cx as isize, y as isize - cy as isize) as f64;
                    let d = kernel - f.get(x, y);
                    assert_eq!(*delta.get_or_insert(d), d, "{q:?} at ({x},{y})");
                }
            }
            assert!(f.weights().iter().all(|&v| v >= 1.0));
        }
        let se = &fields[Quadrant::SE.index()];
        let nw = &fields[Quadrant::NW.index()];
        for y in 0..h {
            for x in 0..w {
                assert_eq!(nw.get(x, y), se.get(w - 1 - x, h - 1 - y));
            }
        }
    }

    #[test]
    fn weighted_ih_matches_double_loop() {
        let m = lcg_map(16, 16, 5, 77);
        let mut s = 5u64;
        let weights: Vec<f64> = (0..256)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                (s >> 40) as f64 / 1000.0
            })
            .collect();
        let field = WeightField::new(16, 16, weights.clone(), Quadrant::SE).unwrap();
        let t = build_weighted_ih(&m, &field, &ScanSchedule::new(ScheduleKind::WavefrontTiled, 4, 2)).unwrap();
        for k in 0..5 {
            for y in 0..=16 {
                for x in 0..=16 {
                    let mut want = 0u64;
                    for j in 0..y {
                        for i in 0..x {
                            if m.get(i, j) == k {
                                want += to_fixed(weights[j * 16 + i]);
                            }
                        }
                    }
                    assert_eq!(t.get(k, y, x), want);
                }
            }
        }
        let bad = WeightField::new(15, 16, vec![1.0; 240], Quadrant::SE).unwrap();
        assert!(build_weighted_ih(&m, &bad, &ScanSchedule::sequential()).is_err());
    }

    #[test]
    fn constant_image_is_one_bin() {
        let m = BinMap::new(12, 12, 4, vec![2; 144]).unwrap();
        let spec = KernelSpec::new(5, 7).unwrap();
        let set = WeightedQuadrantSet::build(&m, &spec, &ScanSchedule::sequential()).unwrap();
        let h = swlh_query(&set, 6, 6, &spec).unwrap();
        let total = h.total();
        let mut kernel_sum = 0;
        for dy in -3..=3isize {
            for dx in -2..=2isize {
                kernel_sum += spec.weight(dx, dy) << FIXED_SHIFT;
            }
        }
        assert_eq!(total, vec![0, 0, kernel_sum, 0]);
        assert_eq!(h.normalized(), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn one_by_one_kernel_is_one_hot() {
        let m = lcg_map(8, 8, 6, 4);
        let spec = KernelSpec::new(1, 1).unwrap();
        let set = WeightedQuadrantSet::build(&m, &spec, &ScanSchedule::sequential()).unwrap();
        for (x, y) in [(0, 0), (3, 5), (7, 7)] {
            let h = swlh_query(&set, x, y, &spec).unwrap().normalized();
            let mut want = vec![0.0; 6];
            want[m.get(x, y)] = 1.0;
            assert_eq!(h, want);
        }
        // a one-pixel set cannot answer for wider kernels
        assert!(swlh_query(&set, 4, 4, &KernelSpec::new(3, 3).unwrap()).is_err());
    }

    #[test]
    fn window_out_of_bounds() {
        let m = lcg_map(8, 8, 3, 1);
        let spec = KernelSpec::new(5, 5).unwrap();
        let set = WeightedQuadrantSet::build(&m, &spec, &ScanSchedule::sequential()).unwrap();
        assert!(matches!(swlh_query(&set, 1, 4, &spec), Err(Error::OutOfBounds { .. })));
        assert!(matches!(
            brute_force_swlh(&m, 6, 4, &spec),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn exhaustive_on_small_images() {
        for seed in 0..6 {
            let m = lcg_map(8, 8, 3, seed);
            let set =
                WeightedQuadrantSet::build(&m, &KernelSpec::new(2, 2).unwrap(), &ScanSchedule::sequential()).unwrap();
            for kw in 1..=8 {
                for kh in 1..=8 {
                    let spec = KernelSpec::new(kw, kh).unwrap();
                    for cy in spec.north()..=8 - spec.south() {
                        for cx in spec.west()..=8 - spec.east() {
                            assert_eq!(
                                swlh_query(&set, cx, cy, &spec).unwrap(),
                                brute_force_swlh(&m, cx, cy, &spec).unwrap(),
                                "kernel {spec} at ({cx},{cy})"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unit_weights_reduce_to_plain_histogram() {
        let m = lcg_map(10, 10, 4, 8);
        let plain = integral::build(&m, &ScanSchedule::sequential()).unwrap();
        let spec = KernelSpec::new(5, 5).unwrap();
        let cake = wedding_cake_swlh(&plain, 5, 5, &spec, 1).unwrap();
        let h = plain.region_histogram(spec.window(5, 5)).unwrap();
        let want = normalize_counts(&h);
        for (a, b) in cake.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cake_tracks_brute_force() {
        let m = lcg_map(40, 40, 4, 21);
        let t = integral::build(&m, &ScanSchedule::sequential()).unwrap();
        let spec = KernelSpec::new(21, 21).unwrap();
        let brute = brute_force_swlh(&m, 20, 20, &spec).unwrap().normalized();
        let e1 = mse(&wedding_cake_swlh(&t, 20, 20, &spec, 1).unwrap(), &brute);
        let e10 = mse(&wedding_cake_swlh(&t, 20, 20, &spec, 10).unwrap(), &brute);
        assert!(e10 < e1, "{e10} vs {e1}");
        assert!(wedding_cake_swlh(&t, 20, 20, &spec, 0).is_err());
    }

    #[test]
    fn normalizations() {
        let h = WeightedHistogram {
            quadrants: [vec![2, 2], vec![0, 4], vec![0, 0], vec![4, 0]],
        };
        assert_eq!(h.total(), vec![6, 6]);
        assert_eq!(h.normalized(), vec![0.5, 0.5]);
        let per = h.normalized_per_quadrant();
        assert!((per[0] - 1.5 / 3.0).abs() < 1e-15);
        assert!((per[1] - 1.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn surface_peaks_at_template() {
        let m = lcg_map(24, 24, 4, 3);
        let spec = KernelSpec::new(7, 7).unwrap();
        for method in [SwlhMethod::Exact, SwlhMethod::Brute, SwlhMethod::Cake { layers: 3 }] {
            let s = swlh_surface(&m, &spec, method, (12, 12), &ScanSchedule::sequential()).unwrap();
            assert!((s.get(12, 12) - 1.0).abs() < 1e-12);
            assert_eq!(s.get(0, 0), 0.0);
            assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let exact = swlh_surface(&m, &spec, SwlhMethod::Exact, (12, 12), &ScanSchedule::sequential()).unwrap();
        let brute = swlh_surface(&m, &spec, SwlhMethod::Brute, (12, 12), &ScanSchedule::sequential()).unwrap();
        assert_eq!(exact, brute);
    }

    proptest! {
        #[test]
        fn query_equals_brute_force(w in 1usize..20, h in 1usize..20, b in 1usize..6, seed in any::<u64>(),
                                    kw in 1usize..20, kh in 1usize..20, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            prop_assume!(kw <= w && kh <= h);
            let spec = KernelSpec::new(kw, kh).unwrap();
            let m = lcg_map(w, h, b, seed);
            let set = WeightedQuadrantSet::build(&m, &KernelSpec::new(3, 3).unwrap(),
                &ScanSchedule::new(ScheduleKind::CrossWeaveTiled, 4, 2)).unwrap();
            let cx = spec.west() + ((w - kw) as f64 * fx) as usize;
            let cy = spec.north() + ((h - kh) as f64 * fy) as usize;
            prop_assert_eq!(swlh_query(&set, cx, cy, &spec).unwrap(), brute_force_swlh(&m, cx, cy, &spec).unwrap());
        }

        #[test]
        fn rotation_swaps_quadrants(w in 3usize..16, h in 3usize..16, seed in any::<u64>(),
                                    rw in 0usize..4, rh in 0usize..4, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let spec = KernelSpec::new(2 * rw + 1, 2 * rh + 1).unwrap();
            prop_assume!(spec.kw <= w && spec.kh <= h);
            let m = lcg_map(w, h, 4, seed);
            let rotated: Vec<u16> = m.data().iter().rev().copied().collect();
            let r = BinMap::new(w, h, 4, rotated).unwrap();
            let cx = rw + ((w - spec.kw) as f64 * fx) as usize;
            let cy = rh + ((h - spec.kh) as f64 * fy) as usize;
            let a = brute_force_swlh(&m, cx, cy, &spec).unwrap();
            let b = brute_force_swlh(&r, w - 1 - cx, h - 1 - cy, &spec).unwrap();
            prop_assert_eq!(a.total(), b.total());
            prop_assert_eq!(a.mass(), b.mass());
        }
    }
}
