//! Single-object tracking: Kalman prediction and fusion, centroid snapping,
//! direction learning, blended target models and the per-frame loop.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::features::{PHoG, PhogIndex};
use crate::image::{box_mean, quantize, AnyImage, ColorImage, GrayImage, MapKind, Rect, ScalarMap};
use crate::integral::ScanSchedule;
use crate::likelihood::{
    embed_centered, find_peaks, fuse_maps, model_fg_bg, ncc_map, phog_map, swlh_distance_map, Channel, ColorModel,
    LikelihoodMap,
};
use crate::swih::{brute_force_swlh, KernelSpec, WeightedQuadrantSet};

/// One video frame in both gray and color form.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub gray: GrayImage,
    pub color: ColorImage,
}

impl Frame {
    pub fn from_gray(gray: GrayImage) -> Self {
        let color = ColorImage::from_gray(&gray);
        Self { gray, color }
    }

    pub fn from_color(color: ColorImage) -> Self {
        let gray = AnyImage::Color(color.clone()).into_gray();
        Self { gray, color }
    }

    pub fn from_any(img: AnyImage) -> Self {
        match img {
            AnyImage::Gray(g) => Self::from_gray(g),
            AnyImage::Color(c) => Self::from_color(c),
        }
    }

    pub fn width(&self) -> usize {
        self.gray.width()
    }

    pub fn height(&self) -> usize {
        self.gray.height()
    }
}

// ---------------------------------------------------------------------------
// Kalman

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KalmanConfig {
    /// Initial covariance scale.
    pub alpha: f64,
    /// Process noise scale.
    pub q: f64,
    /// Measurement noise scale at full confidence.
    pub beta: f64,
    /// Smallest accepted confidence, also the regularizer for a singular S.
    pub eps: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            q: 0.01,
            beta: 4.0,
            eps: 1e-3,
        }
    }
}

/// Constant-velocity state `[cx, cy, vx, vy]` with covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    x: Vector4<f64>,
    p: Matrix4<f64>,
    q: Matrix4<f64>,
}

impl KalmanState {
    pub fn new(cx: f64, cy: f64, cfg: &KalmanConfig) -> Self {
        Self {
            x: Vector4::new(cx, cy, 0.0, 0.0),
            p: Matrix4::identity() * cfg.alpha,
            q: Matrix4::identity() * cfg.q,
        }
    }

    pub fn from_parts(x: Vector4<f64>, p: Matrix4<f64>, q: Matrix4<f64>) -> Result<Self> {
        let s = Self { x, p, q };
        if !s.is_valid() || !is_psd(&q) {
            return Err(Error::invalid("state must be finite with PSD covariance and noise"));
        }
        Ok(s)
    }

    pub fn transition() -> Matrix4<f64> {
        #[rustfmt::skip]
        let f = Matrix4::new(
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        f
    }

    pub fn observation() -> Matrix2x4<f64> {
        Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    }

    pub fn x(&self) -> &Vector4<f64> {
        &self.x
    }

    pub fn p(&self) -> &Matrix4<f64> {
        &self.p
    }

    pub fn q(&self) -> &Matrix4<f64> {
        &self.q
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.x[2], self.x[3])
    }

    /// Finite, with a covariance that is PSD after symmetrization.
    pub fn is_valid(&self) -> bool {
        self.x.iter().all(|v| v.is_finite()) && is_psd(&self.p)
    }

    pub fn predict(&self) -> Self {
        let f = Self::transition();
        Self {
            x: f * self.x,
            p: f * self.p * f.transpose() + self.q,
            q: self.q,
        }
    }
}

fn is_psd(m: &Matrix4<f64>) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    let jitter = 1e-12 * (1.0 + sym.trace().abs());
    (sym + Matrix4::identity() * jitter).cholesky().is_some()
}

/// Predicted state and the search window around it, `search_factor` times
/// the target extent.
pub fn kalman_predict(state: &KalmanState, scale: (usize, usize), search_factor: f64) -> (KalmanState, Rect) {
    let pred = state.predict();
    let (cx, cy) = pred.center();
    let w = ((scale.0 as f64 * search_factor).round() as usize).max(1);
    let h = ((scale.1 as f64 * search_factor).round() as usize).max(1);
    let rect = Rect::centered(cx.round() as isize, cy.round() as isize, w, h);
    (pred, rect)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuseOutcome {
    pub state: KalmanState,
    /// The innovation covariance was singular and got `eps·I` added.
    pub regularized: bool,
}

/// Measurement update with `R = (β / conf)·I`.
pub fn kalman_fuse(state: &KalmanState, z: (f64, f64), conf: f64, cfg: &KalmanConfig) -> Result<FuseOutcome> {
    if !(conf >= cfg.eps && conf <= 1.0) {
        return Err(Error::invalid(format!("confidence {conf} outside [{}, 1]", cfg.eps)));
    }
    if !z.0.is_finite() || !z.1.is_finite() {
        return Err(Error::invalid("measurement must be finite"));
    }
    let h = KalmanState::observation();
    let r = Matrix2::identity() * (cfg.beta / conf);
    let mut s = h * state.p * h.transpose() + r;
    let mut regularized = false;
    let s_inv = match s.try_inverse() {
        Some(inv) if s.determinant().abs() > f64::EPSILON * s.norm_squared().max(f64::MIN_POSITIVE) => inv,
        _ => {
            s += Matrix2::identity() * cfg.eps;
            regularized = true;
            s.try_inverse()
                .ok_or_else(|| Error::invalid("innovation covariance stays singular"))?
        }
    };
    let gain = state.p * h.transpose() * s_inv;
    let innovation = Vector2::new(z.0, z.1) - h * state.x;
    let x = state.x + gain * innovation;
    let p = state.p - gain * s * gain.transpose() + state.q;
    Ok(FuseOutcome {
        state: KalmanState {
            x,
            p: (p + p.transpose()) * 0.5,
            q: state.q,
        },
        regularized,
    })
}

// ---------------------------------------------------------------------------
// centroid snapping

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CamshiftOutcome {
    pub center: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
    /// The window held no mass; `center` is where the search stopped.
    pub zero_mass: bool,
}

/// Move a box of half-extents `window / 2` to the weighted centroid of
/// `map` inside it until the step is shorter than `delta`.
pub fn camshift_refine(
    map: &LikelihoodMap,
    init: (f64, f64),
    window: (usize, usize),
    delta: f64,
    max_iter: usize,
) -> Result<CamshiftOutcome> {
    let (w, h) = (map.width() as f64, map.height() as f64);
    if !(init.0 >= 0.0 && init.1 >= 0.0 && init.0 < w && init.1 < h) {
        return Err(Error::invalid(format!(
            "start ({}, {}) lies outside the {w}x{h} map",
            init.0, init.1
        )));
    }
    if !(delta > 0.0) || window.0 == 0 || window.1 == 0 {
        return Err(Error::invalid("camshift needs delta > 0 and a nonempty window"));
    }
    // odd extents keep the window symmetric about its center pixel
    let (ww, wh) = (window.0 / 2 * 2 + 1, window.1 / 2 * 2 + 1);
    let mut center = init;
    for it in 1..=max_iter {
        let rect = Rect::centered(center.0.round() as isize, center.1.round() as isize, ww, wh)
            .clip(map.width(), map.height());
        let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
        if let Some(r) = rect {
            for y in r.y as usize..r.bottom() as usize {
                for x in r.x as usize..r.right() as usize {
                    let v = map.get(x, y);
                    m00 += v;
                    m10 += v * x as f64;
                    m01 += v * y as f64;
                }
            }
        }
        if m00 <= 0.0 {
            return Ok(CamshiftOutcome {
                center,
                iterations: it,
                converged: false,
                zero_mass: true,
            });
        }
        let next = (m10 / m00, m01 / m00);
        let step = (next.0 - center.0).hypot(next.1 - center.1);
        center = next;
        if step < delta {
            return Ok(CamshiftOutcome {
                center,
                iterations: it,
                converged: true,
                zero_mass: false,
            });
        }
    }
    Ok(CamshiftOutcome {
        center,
        iterations: max_iter,
        converged: false,
        zero_mass: false,
    })
}

// ---------------------------------------------------------------------------
// direction

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    E,
    N,
    W,
    S,
    Unknown,
}

impl Direction {
    /// Counterclockwise from +x, image y pointing down.
    pub fn angle(self) -> Option<f64> {
        match self {
            Direction::E => Some(0.0),
            Direction::N => Some(90.0),
            Direction::W => Some(180.0),
            Direction::S => Some(270.0),
            Direction::Unknown => None,
        }
    }

    /// Dominant axis of a displacement; horizontal wins ties.
    pub fn of_displacement(dx: f64, dy: f64) -> Direction {
        if dx == 0.0 && dy == 0.0 {
            Direction::Unknown
        } else if dx.abs() >= dy.abs() {
            if dx > 0.0 {
                Direction::E
            } else {
                Direction::W
            }
        } else if dy > 0.0 {
            Direction::S
        } else {
            Direction::N
        }
    }
}

/// Walk back from the newest center to the first one at least `min_dist`
/// away and quantize that displacement.
pub fn learn_direction(centers: &[(f64, f64)], min_dist: f64) -> Direction {
    let Some(&last) = centers.last() else {
        return Direction::Unknown;
    };
    for &p in centers.iter().rev().skip(1) {
        let (dx, dy) = (last.0 - p.0, last.1 - p.1);
        if dx.hypot(dy) >= min_dist {
            return Direction::of_displacement(dx, dy);
        }
    }
    Direction::Unknown
}

fn exact_sin_cos(theta: f64) -> (f64, f64) {
    let t = theta.rem_euclid(360.0);
    match t {
        0.0 => (0.0, 1.0),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        270.0 => (-1.0, 0.0),
        _ => t.to_radians().sin_cos(),
    }
}

fn bilinear(m: &ScalarMap, sx: f64, sy: f64) -> f64 {
    let (w, h) = (m.width(), m.height());
    if !(sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64) {
        return 0.0;
    }
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let top = if fx == 0.0 {
        m.get(x0, y0)
    } else {
        m.get(x0, y0) * (1.0 - fx) + m.get(x1, y0) * fx
    };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 {
        m.get(x0, y1)
    } else {
        m.get(x0, y1) * (1.0 - fx) + m.get(x1, y1) * fx
    };
    top * (1.0 - fy) + bottom * fy
}

/// Rotate `m` counterclockwise by `theta` degrees about `center` by
/// inverse bilinear warping; samples outside the source are 0.
pub fn align_map(m: &ScalarMap, center: (f64, f64), theta: f64) -> Result<ScalarMap> {
    if !theta.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let (s, c) = exact_sin_cos(theta);
    Ok(ScalarMap::from_fn(m.width(), m.height(), m.kind(), |x, y| {
        let (u, v) = (x as f64 - center.0, y as f64 - center.1);
        bilinear(m, center.0 + u * c - v * s, center.1 + u * s + v * c)
    }))
}

pub fn align_roi(roi: &GrayImage, center: (f64, f64), theta: f64) -> Result<GrayImage> {
    let out = align_map(&roi.to_scalar(), center, theta)?;
    Ok(out.to_gray_clamped())
}

// ---------------------------------------------------------------------------
// target model

#[derive(Clone, Debug, PartialEq)]
pub struct TargetModel {
    pub template: ScalarMap,
    pub color: ColorModel,
    pub phog: PHoG,
    /// Unit-mass spatially weighted intensity histogram.
    pub hist: Vec<f64>,
    pub scale: (usize, usize),
    /// Heading the template was captured in.
    pub direction: Direction,
}

/// Largest chip not exceeding `(w, h)` whose sides divide by `2^levels`.
fn phog_chip(w: usize, h: usize, levels: usize) -> Result<(usize, usize)> {
    let s = 1usize << levels;
    let (cw, ch) = (w - w % s, h - h % s);
    if cw == 0 || ch == 0 {
        return Err(Error::invalid(format!(
            "target {w}x{h} is smaller than the 2^{levels} PHoG grid"
        )));
    }
    Ok((cw, ch))
}

fn template_phog(chip: &GrayImage, cfg: &TrackerConfig) -> Result<PHoG> {
    let (cw, ch) = phog_chip(chip.width(), chip.height(), cfg.phog_levels)?;
    let index = PhogIndex::from_window(chip, cfg.phog_levels, cfg.phog_bins)?;
    let (ox, oy) = ((chip.width() - cw) / 2, (chip.height() - ch) / 2);
    Ok(index.descriptor(ox, oy, cw, ch).normalized())
}

fn template_hist(chip: &GrayImage, bins: usize) -> Result<Vec<f64>> {
    let (w, h) = (chip.width(), chip.height());
    let spec = KernelSpec::new(w, h)?;
    let q = quantize(chip, bins, 0.0, 256.0)?;
    Ok(brute_force_swlh(&q, w / 2, h / 2, &spec)?.normalized())
}

pub fn build_model(frame: &Frame, rect: Rect, cfg: &TrackerConfig) -> Result<TargetModel> {
    rect.check_inside(frame.width(), frame.height())?;
    let chip = frame.gray.crop(rect)?;
    Ok(TargetModel {
        template: chip.to_scalar(),
        color: model_fg_bg(&frame.color, rect, cfg.bg_margin.max(1))?,
        phog: template_phog(&chip, cfg)?,
        hist: template_hist(&chip, cfg.hist_bins)?,
        scale: (rect.w, rect.h),
        direction: Direction::Unknown,
    })
}

fn unit_mass(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.into_iter().map(|x| x / s).collect()
    } else {
        v
    }
}

/// `α·new + (1 − α)·old` for every descriptor; histograms renormalized.
pub fn update_model(model: &TargetModel, new: &TargetModel, alpha: f64) -> Result<TargetModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("blend factor {alpha} outside [0, 1]")));
    }
    if model.scale != new.scale
        || model.hist.len() != new.hist.len()
        || model.phog.levels() != new.phog.levels()
        || model.phog.bins() != new.phog.bins()
    {
        return Err(Error::mismatch("target models have different shapes"));
    }
    let mix = |a: f64, b: f64| alpha * b + (1.0 - alpha) * a;
    let template = ScalarMap::from_fn(model.scale.0, model.scale.1, MapKind::Intensity, |x, y| {
        mix(model.template.get(x, y), new.template.get(x, y))
    });
    let phog_data = model
        .phog
        .data()
        .iter()
        .zip(new.phog.data())
        .map(|(a, b)| mix(*a, *b))
        .collect();
    let phog = PHoG::new(model.phog.levels(), model.phog.bins(), phog_data)?.normalized();
    let hist = unit_mass(model.hist.iter().zip(&new.hist).map(|(a, b)| mix(*a, *b)).collect());
    Ok(TargetModel {
        template,
        color: model.color.blend(&new.color, alpha),
        phog,
        hist,
        scale: model.scale,
        direction: model.direction,
    })
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    /// NCC, color, histogram and PHoG fusion weights.
    pub weights: [f64; 4],
    pub search_factor: f64,
    pub conf_tau: f64,
    pub update_alpha: f64,
    pub kalman: KalmanConfig,
    pub hist_bins: usize,
    pub minkowski_p: f64,
    pub phog_levels: usize,
    pub phog_bins: usize,
    pub bg_margin: usize,
    pub camshift_delta: f64,
    pub camshift_iters: usize,
    pub align: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            weights: [0.25; 4],
            search_factor: 3.0,
            conf_tau: 0.4,
            update_alpha: 0.1,
            kalman: KalmanConfig::default(),
            hist_bins: 16,
            minkowski_p: 1.0,
            phog_levels: 1,
            phog_bins: 8,
            bg_margin: 8,
            camshift_delta: 0.5,
            camshift_iters: 10,
            align: true,
        }
    }
}

impl TrackerConfig {
    /// Apply `key=value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line {}: expected key=value", n + 1)))?;
            c.set(key.trim(), value.trim())
                .map_err(|e| Error::Format(format!("config line {}: {e}", n + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid(format!("bad value `{v}` for {key}")))
        }
        match key {
            "weights.ncc" => self.weights[0] = num(key, value)?,
            "weights.color" => self.weights[1] = num(key, value)?,
            "weights.hist" => self.weights[2] = num(key, value)?,
            "weights.phog" => self.weights[3] = num(key, value)?,
            "search_factor" => self.search_factor = num(key, value)?,
            "conf_tau" => self.conf_tau = num(key, value)?,
            "update_alpha" => self.update_alpha = num(key, value)?,
            "kalman.alpha" => self.kalman.alpha = num(key, value)?,
            "kalman.q" => self.kalman.q = num(key, value)?,
            "kalman.beta" => self.kalman.beta = num(key, value)?,
            "kalman.eps" => self.kalman.eps = num(key, value)?,
            "hist_bins" => self.hist_bins = num(key, value)?,
            "minkowski_p" => self.minkowski_p = num(key, value)?,
            "phog_levels" => self.phog_levels = num(key, value)?,
            "phog_bins" => self.phog_bins = num(key, value)?,
            "bg_margin" => self.bg_margin = num(key, value)?,
            "camshift_delta" => self.camshift_delta = num(key, value)?,
            "camshift_iters" => self.camshift_iters = num(key, value)?,
            "align" => self.align = num(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.weights.iter().any(|w| !(*w >= 0.0)) || self.weights.iter().sum::<f64>() <= 0.0 {
            return bad("fusion weights must be nonnegative with a positive sum");
        }
        if !(self.search_factor >= 1.0) {
            return bad("search_factor must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.conf_tau) || !(0.0..=1.0).contains(&self.update_alpha) {
            return bad("conf_tau and update_alpha must lie in [0, 1]");
        }
        let k = &self.kalman;
        if !(k.alpha >= 0.0 && k.q >= 0.0 && k.beta >= 0.0 && k.eps > 0.0 && k.eps <= 1.0) {
            return bad("Kalman parameters must be nonnegative with eps in (0, 1]");
        }
        if self.hist_bins == 0 || self.hist_bins > 256 || self.phog_bins == 0 || self.phog_bins > 180 {
            return bad("bin counts out of range");
        }
        if !(self.minkowski_p >= 1.0) || !(self.camshift_delta > 0.0) {
            return bad("minkowski_p must be >= 1 and camshift_delta > 0");
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// tracklets

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Features,
    FusedKf,
    Reinit,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Features => "features",
            Source::FusedKf => "fused-kf",
            Source::Reinit => "reinit",
        })
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "features" => Ok(Source::Features),
            "fused-kf" => Ok(Source::FusedKf),
            "reinit" => Ok(Source::Reinit),
            _ => Err(Error::Format(format!("unknown record source `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackRecord {
    pub frame: usize,
    pub center: (f64, f64),
    pub bbox: Rect,
    pub conf: f64,
    pub source: Source,
}

impl fmt::Display for TrackRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{:.3},{:.3},{},{:.6},{}",
            self.frame, self.center.0, self.center.1, self.bbox, self.conf, self.source
        )
    }
}

impl FromStr for TrackRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let p: Vec<&str> = line.trim().split(',').collect();
        if p.len() != 9 {
            return Err(Error::Format(format!("tracklet line `{line}` needs 9 fields")));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad number `{s}` in `{line}`")))
        };
        Ok(TrackRecord {
            frame: p[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad frame in `{line}`")))?,
            center: (num(p[1])?, num(p[2])?),
            bbox: Rect::parse(&p[3..7].join(",")).map_err(|e| Error::Format(e.to_string()))?,
            conf: num(p[7])?,
            source: p[8].trim().parse()?,
        })
    }
}

/// Per-frame records with strictly increasing frame indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tracklet {
    records: Vec<TrackRecord>,
}

impl Tracklet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: TrackRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.frame <= last.frame {
                return Err(Error::invalid(format!(
                    "frame {} does not follow frame {}",
                    r.frame, last.frame
                )));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn records(&self) -> &[TrackRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&TrackRecord> {
        self.records.last()
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| r.center).collect()
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Tracklet::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            t.push(line.parse()?)?;
        }
        Ok(t)
    }
}

// ---------------------------------------------------------------------------
// session

/// Channel likelihoods over one search window, in fusion order.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMaps {
    pub window: Rect,
    pub ncc: LikelihoodMap,
    pub color: LikelihoodMap,
    pub hist: LikelihoodMap,
    pub phog: LikelihoodMap,
}

impl ChannelMaps {
    pub fn fused(&self, weights: &[f64; 4]) -> Result<LikelihoodMap> {
        fuse_maps(&[&self.ncc, &self.color, &self.hist, &self.phog], Some(weights))
    }
}

/// Template chip and PHoG rotated for the current heading.
struct Aligned {
    template: ScalarMap,
    phog: PHoG,
}

fn aligned_descriptors(model: &TargetModel, heading: Direction, cfg: &TrackerConfig) -> Result<Aligned> {
    let delta = match (cfg.align, heading.angle(), model.direction.angle()) {
        (true, Some(now), Some(then)) if now != then => now - then,
        _ => {
            return Ok(Aligned {
                template: model.template.clone(),
                phog: model.phog.clone(),
            })
        }
    };
    let (w, h) = model.scale;
    let center = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let template = align_map(&model.template, center, delta)?;
    let phog = template_phog(&template.to_gray_clamped(), cfg)?;
    Ok(Aligned { template, phog })
}

/// All four channel maps over `window`, which must lie inside the frame and
/// hold the target extent. Channels run in parallel; results do not depend
/// on scheduling.
pub fn channel_maps(
    frame: &Frame,
    window: Rect,
    model: &TargetModel,
    heading: Direction,
    cfg: &TrackerConfig,
) -> Result<ChannelMaps> {
    window.check_inside(frame.width(), frame.height())?;
    let (tw, th) = model.scale;
    if window.w < tw || window.h < th {
        return Err(Error::invalid(format!(
            "search window {}x{} is smaller than the {tw}x{th} target",
            window.w, window.h
        )));
    }
    let aligned = aligned_descriptors(model, heading, cfg)?;
    let gray = frame.gray.crop(window)?;
    let (ww, wh) = (window.w, window.h);

    let ncc = || -> Result<LikelihoodMap> {
        let valid = ncc_map(&gray.to_scalar(), &aligned.template)?;
        embed_centered(&valid, ww, wh, tw, th)
    };
    let color = || -> Result<LikelihoodMap> {
        let ratio = crate::likelihood::color_ratio_map(&frame.color.crop(window)?, &model.color);
        let smooth = box_mean(&ratio.to_scalar(), tw, th);
        let values = smooth.values().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        LikelihoodMap::new(ww, wh, values, Channel::ColorRatio)
    };
    let hist = || -> Result<LikelihoodMap> {
        let spec = KernelSpec::new(tw, th)?;
        let bins = quantize(&gray, cfg.hist_bins, 0.0, 256.0)?;
        let set = WeightedQuadrantSet::build(&bins, &spec, &ScanSchedule::sequential())?;
        swlh_distance_map(&set, &model.hist, &spec, cfg.minkowski_p)
    };
    let phog = || -> Result<LikelihoodMap> {
        let (cw, ch) = phog_chip(tw, th, cfg.phog_levels)?;
        let index = PhogIndex::from_window(&gray, cfg.phog_levels, cfg.phog_bins)?;
        phog_map(&index, &aligned.phog, cw, ch)
    };
    let ((ncc, color), (hist, phog)) = rayon::join(|| rayon::join(ncc, color), || rayon::join(hist, phog));
    Ok(ChannelMaps {
        window,
        ncc: ncc?,
        color: color?,
        hist: hist?,
        phog: phog?,
    })
}

/// Highest unsmoothed value in the 3×3 neighbourhood of `(x, y)`; scan
/// order breaks ties.
fn raw_argmax_near(map: &LikelihoodMap, x: usize, y: usize) -> (usize, usize) {
    let mut best = (x, y);
    for ny in y.saturating_sub(1)..=(y + 1).min(map.height() - 1) {
        for nx in x.saturating_sub(1)..=(x + 1).min(map.width() - 1) {
            if map.get(nx, ny) > map.get(best.0, best.1) {
                best = (nx, ny);
            }
        }
    }
    best
}

pub struct TrackingSession {
    config: TrackerConfig,
    model: TargetModel,
    kalman: KalmanState,
    heading: Direction,
    tracklet: Tracklet,
}

impl TrackingSession {
    pub fn start(frame: &Frame, index: usize, init: Rect, config: &TrackerConfig) -> Result<Self> {
        config.validate()?;
        let model = build_model(frame, init, config)?;
        let center = init.center();
        let mut tracklet = Tracklet::new();
        tracklet.push(TrackRecord {
            frame: index,
            center,
            bbox: init,
            conf: 1.0,
            source: Source::Reinit,
        })?;
        Ok(Self {
            config: config.clone(),
            model,
            kalman: KalmanState::new(center.0, center.1, &config.kalman),
            heading: Direction::Unknown,
            tracklet,
        })
    }

    pub fn model(&self) -> &TargetModel {
        &self.model
    }

    pub fn kalman(&self) -> &KalmanState {
        &self.kalman
    }

    pub fn heading(&self) -> Direction {
        self.heading
    }

    pub fn tracklet(&self) -> &Tracklet {
        &self.tracklet
    }

    pub fn into_tracklet(self) -> Tracklet {
        self.tracklet
    }

    fn bbox_at(&self, c: (f64, f64)) -> Rect {
        Rect::centered(
            c.0.round() as isize,
            c.1.round() as isize,
            self.model.scale.0,
            self.model.scale.1,
        )
    }

    pub fn step(&mut self, frame: &Frame, index: usize) -> Result<TrackRecord> {
        let cfg = &self.config;
        let (pred, search) = kalman_predict(&self.kalman, self.model.scale, cfg.search_factor);
        let window = search
            .clip(frame.width(), frame.height())
            .filter(|w| w.w >= self.model.scale.0 && w.h >= self.model.scale.1);

        let measured = match window {
            Some(win) => {
                let maps = channel_maps(frame, win, &self.model, self.heading, cfg)?;
                let fused = maps.fused(&cfg.weights)?;
                let (px, py, conf) = match find_peaks(&fused).first() {
                    Some(p) => {
                        let (x, y) = raw_argmax_near(&fused, p.x, p.y);
                        (x, y, p.height)
                    }
                    None => {
                        let (x, y) = fused.argmax();
                        (x, y, fused.get(x, y))
                    }
                };
                Some((win, fused, (px as f64, py as f64), conf.clamp(0.0, 1.0)))
            }
            None => None,
        };

        let record = match measured {
            Some((win, fused, peak, conf)) if conf >= cfg.conf_tau => {
                let snap = camshift_refine(&fused, peak, self.model.scale, cfg.camshift_delta, cfg.camshift_iters)?;
                let local = if snap.zero_mass { peak } else { snap.center };
                let z = (win.x as f64 + local.0, win.y as f64 + local.1);
                self.kalman = kalman_fuse(&pred, z, conf.max(cfg.kalman.eps), &cfg.kalman)?.state;
                let bbox = self.bbox_at(z);
                if bbox.is_inside(frame.width(), frame.height()) {
                    let fresh = build_model(frame, bbox, cfg)?;
                    let direction = self.model.direction;
                    self.model = update_model(&self.model, &fresh, cfg.update_alpha)?;
                    self.model.direction = direction;
                }
                TrackRecord {
                    frame: index,
                    center: z,
                    bbox,
                    conf,
                    source: Source::Features,
                }
            }
            Some((win, _, peak, conf)) => {
                let z = (win.x as f64 + peak.0, win.y as f64 + peak.1);
                self.kalman = kalman_fuse(&pred, z, conf.max(cfg.kalman.eps), &cfg.kalman)?.state;
                let c = self.kalman.center();
                TrackRecord {
                    frame: index,
                    center: c,
                    bbox: self.bbox_at(c),
                    conf,
                    source: Source::FusedKf,
                }
            }
            None => {
                self.kalman = pred;
                let c = self.kalman.center();
                TrackRecord {
                    frame: index,
                    center: c,
                    bbox: self.bbox_at(c),
                    conf: 0.0,
                    source: Source::FusedKf,
                }
            }
        };
        self.tracklet.push(record)?;

        let (w, h) = self.model.scale;
        self.heading = learn_direction(&self.tracklet.centers(), 2.0 * w.max(h) as f64);
        if self.model.direction == Direction::Unknown {
            self.model.direction = self.heading;
        }
        Ok(record)
    }
}

/// Track through `frames`, starting from `init` on the first one.
pub fn track_sequence(frames: &[Frame], init: Rect, config: &TrackerConfig) -> Result<Tracklet> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Empty("no frames to track".into()))?;
    let mut s = TrackingSession::start(first, 0, init, config)?;
    for (i, f) in frames.iter().enumerate().skip(1) {
        s.step(f, i).map_err(|e| Error::at_stage("track", i, e))?;
    }
    Ok(s.into_tracklet())
}

/// Adapter that lets the reset harness drive a fresh session on every
/// (re)initialization; all emitted records are kept.
pub struct SessionTracker<'a> {
    frames: &'a [Frame],
    config: TrackerConfig,
    session: Option<TrackingSession>,
    records: Vec<TrackRecord>,
}

impl<'a> SessionTracker<'a> {
    pub fn new(frames: &'a [Frame], config: &TrackerConfig) -> Self {
        Self {
            frames,
            config: config.clone(),
            session: None,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[TrackRecord] {
        &self.records
    }

    fn frame(&self, i: usize) -> Result<&'a Frame> {
        self.frames
            .get(i)
            .ok_or_else(|| Error::invalid(format!("frame {i} is past the end of the sequence")))
    }
}

impl crate::eval::ResettableTracker for SessionTracker<'_> {
    fn init(&mut self, frame: usize, rect: Rect) -> Result<()> {
        let s = TrackingSession::start(self.frame(frame)?, frame, rect, &self.config)?;
        self.records.extend(s.tracklet().last().copied());
        self.session = Some(s);
        Ok(())
    }

    fn track(&mut self, frame: usize) -> Result<Rect> {
        let f = self.frame(frame)?;
        let s = self
            .session
            .as_mut()
            .ok_or_else(|| Error::invalid("track called before init"))?;
        let r = s.step(f, frame)?;
        self.records.push(r);
        Ok(r.bbox)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn predict_examples() {
        let cfg = KalmanConfig::default();
        let s = KalmanState::from_parts(
            Vector4::new(10.0, 20.0, 1.0, 2.0),
            Matrix4::identity(),
            Matrix4::identity() * cfg.q,
        )
        .unwrap();
        let (p, rect) = kalman_predict(&s, (10, 6), 2.0);
        assert_eq!(p.center(), (11.0, 22.0));
        assert_eq!(rect, Rect::centered(11, 22, 20, 12));

        let still = KalmanState::new(5.0, 5.0, &cfg);
        let p = still.predict();
        assert_eq!(p.center(), (5.0, 5.0));
        let f = KalmanState::transition();
        assert_eq!(p.p(), &(f * still.p() * f.transpose() + still.q()));
    }

    #[test]
    fn two_predicts_equal_squared_transition() {
        let s = KalmanState::from_parts(
            Vector4::new(3.0, -2.0, 0.5, 1.5),
            Matrix4::new(
                2.0, 0.1, 0.3, 0.0, 0.1, 1.0, 0.0, 0.2, 0.3, 0.0, 0.5, 0.0, 0.0, 0.2, 0.0, 0.4,
            ),
            Matrix4::identity() * 0.01,
        )
        .unwrap();
        let two = s.predict().predict();
        let f = KalmanState::transition();
        let f2 = f * f;
        let x = f2 * s.x();
        let p = f2 * s.p() * f2.transpose() + f * s.q() * f.transpose() + s.q();
        assert!((two.x() - x).amax() < 1e-9);
        assert!((two.p() - p).amax() < 1e-9);
    }

    #[test]
    fn fuse_limits_and_scalar_oracle() {
        let cfg = KalmanConfig {
            beta: 1e-9,
            ..KalmanConfig::default()
        };
        let s = KalmanState::new(0.0, 0.0, &cfg);
        let out = kalman_fuse(&s, (7.0, -3.0), 1.0, &cfg).unwrap();
        assert!(close(out.state.center().0, 7.0, 1e-6) && close(out.state.center().1, -3.0, 1e-6));

        let cfg = KalmanConfig {
            beta: 1e9,
            ..KalmanConfig::default()
        };
        let out = kalman_fuse(&s, (7.0, -3.0), cfg.eps, &cfg).unwrap();
        assert!(close(out.state.center().0, 0.0, 1e-9));

        // each axis decouples into a scalar update on (position, velocity)
        let cfg = KalmanConfig::default();
        let (p0, conf, z) = (2.5, 0.5, 4.0);
        let s = KalmanState::from_parts(
            Vector4::new(1.0, 1.0, 0.0, 0.0),
            Matrix4::identity() * p0,
            Matrix4::identity() * cfg.q,
        )
        .unwrap();
        let out = kalman_fuse(&s, (z, z), conf, &cfg).unwrap();
        let r = cfg.beta / conf;
        let k = p0 / (p0 + r);
        assert!(close(out.state.center().0, 1.0 + k * (z - 1.0), 1e-12));
        assert!(close(out.state.p()[(0, 0)], p0 - k * k * (p0 + r) + cfg.q, 1e-12));
        assert!(close(out.state.p()[(2, 2)], p0 + cfg.q, 1e-12));
        assert!(!out.regularized);

        assert!(kalman_fuse(&s, (1.0, 1.0), 0.0, &cfg).is_err());
    }

    #[test]
    fn singular_innovation_is_regularized() {
        let cfg = KalmanConfig {
            beta: 0.0,
            ..KalmanConfig::default()
        };
        let s = KalmanState::from_parts(Vector4::zeros(), Matrix4::zeros(), Matrix4::zeros()).unwrap();
        let out = kalman_fuse(&s, (1.0, 1.0), 1.0, &cfg).unwrap();
        assert!(out.regularized);
        assert!(out.state.is_valid());
    }

    #[test]
    fn constant_velocity_converges() {
        let cfg = KalmanConfig::default();
        let mut s = KalmanState::new(0.0, 0.0, &cfg);
        let mut err = f64::INFINITY;
        for t in 1..=30 {
            s = kalman_fuse(&s.predict(), (2.0 * t as f64, -(t as f64)), 1.0, &cfg)
                .unwrap()
                .state;
            err = (s.center().0 - 2.0 * t as f64).hypot(s.center().1 + t as f64);
        }
        assert!(err < 0.05, "{err}");
    }

    fn impulse(w: usize, h: usize, at: (usize, usize)) -> LikelihoodMap {
        let mut v = vec![0.0; w * h];
        v[at.1 * w + at.0] = 1.0;
        LikelihoodMap::new(w, h, v, Channel::Fused).unwrap()
    }

    #[test]
    fn camshift_examples() {
        let m = impulse(12, 12, (5, 7));
        let out = camshift_refine(&m, (3.0, 3.0), (9, 9), 0.1, 10).unwrap();
        assert_eq!(out.center, (5.0, 7.0));
        assert!(out.converged);

        let blob = LikelihoodMap::new(
            21,
            21,
            (0..441)
                .map(|i| {
                    let (x, y) = ((i % 21) as f64 - 10.0, (i / 21) as f64 - 10.0);
                    (-(x * x + y * y) / 8.0).exp()
                })
                .collect(),
            Channel::Fused,
        )
        .unwrap();
        let out = camshift_refine(&blob, (10.0, 10.0), (7, 7), 0.01, 10).unwrap();
        assert!(close(out.center.0, 10.0, 1e-12) && close(out.center.1, 10.0, 1e-12));
        assert_eq!(out.iterations, 1);

        let zero = LikelihoodMap::constant(8, 8, 0.0, Channel::Fused).unwrap();
        let out = camshift_refine(&zero, (4.0, 4.0), (3, 3), 0.5, 5).unwrap();
        assert!(out.zero_mass);
        assert_eq!(out.center, (4.0, 4.0));
        assert!(camshift_refine(&zero, (9.0, 4.0), (3, 3), 0.5, 5).is_err());
        assert!(camshift_refine(&zero, (4.0, 4.0), (3, 3), 0.0, 5).is_err());
    }

    #[test]
    fn camshift_two_lobes_matches_naive_iteration() {
        let (w, h) = (40, 20);
        let lobe = |x: f64, y: f64, cx: f64, a: f64| a * (-((x - cx).powi(2) + (y - 10.0).powi(2)) / 6.0).exp();
        let vals: Vec<f64> = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                lobe(x, y, 8.0, 0.3) + lobe(x, y, 30.0, 1.0)
            })
            .collect();
        let m = LikelihoodMap::new(w, h, vals.clone(), Channel::Fused).unwrap();
        let out = camshift_refine(&m, (11.0, 11.0), (9, 9), 0.01, 50).unwrap();

        let mut c: (f64, f64) = (11.0, 11.0);
        for _ in 0..50 {
            let (cx, cy) = (c.0.round() as isize, c.1.round() as isize);
            let (mut m0, mut mx, mut my) = (0.0, 0.0, 0.0);
            for y in (cy - 4).max(0)..=(cy + 4).min(h as isize - 1) {
                for x in (cx - 4).max(0)..=(cx + 4).min(w as isize - 1) {
                    let v = vals[y as usize * w + x as usize];
                    m0 += v;
                    mx += v * x as f64;
                    my += v * y as f64;
                }
            }
            let n = (mx / m0, my / m0);
            let d = (n.0 - c.0).hypot(n.1 - c.1);
            c = n;
            if d < 0.01 {
                break;
            }
        }
        assert_eq!(out.center, c);
        assert!(out.center.0 < 12.0);
    }

    #[test]
    fn direction_examples() {
        let line: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 2.0, 5.0)).collect();
        assert_eq!(learn_direction(&line, 10.0), Direction::E);
        assert_eq!(learn_direction(&line[..3], 10.0), Direction::Unknown);
        assert_eq!(learn_direction(&[], 1.0), Direction::Unknown);

        // east for 30 px, then north for 15
        let mut l: Vec<(f64, f64)> = (0..=30).map(|i| (i as f64, 40.0)).collect();
        l.extend((1..=15).map(|i| (30.0, 40.0 - i as f64)));
        assert_eq!(learn_direction(&l, 12.0), Direction::N);
        // reaches back to (16, 40): displacement (14, -15)
        assert_eq!(learn_direction(&l, 20.0), Direction::N);
        // reaches back to (4, 40): displacement (26, -15)
        assert_eq!(learn_direction(&l, 30.0), Direction::E);
        assert_eq!(learn_direction(&l, 40.0), Direction::Unknown);
        assert_eq!(Direction::of_displacement(0.0, 3.0), Direction::S);
        assert_eq!(Direction::of_displacement(-3.0, 3.0), Direction::W);
    }

    fn random_gray(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.gen())
    }

    #[test]
    fn align_examples() {
        let img = random_gray(9, 9, 1);
        assert_eq!(align_roi(&img, (4.0, 4.0), 0.0).unwrap(), img);
        let r = align_roi(&img, (4.0, 4.0), 90.0).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                assert_eq!(r.get(x, y), img.get(8 - y, x));
            }
        }
        let m = img.to_scalar();
        let a = align_map(&m, (3.3, 4.1), 360.0).unwrap();
        let b = align_map(&m, (3.3, 4.1), 0.0).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(p, q)| (p - q).abs() <= 1e-9));
        // a point pointing east turns north at 90°
        let mut arrow = GrayImage::filled(9, 9, 0);
        arrow.set(7, 4, 255);
        assert_eq!(align_roi(&arrow, (4.0, 4.0), 90.0).unwrap().get(4, 1), 255);
    }

    #[test]
    fn align_round_trip_on_interior() {
        let img = GrayImage::from_fn(31, 31, |x, y| {
            ((x as f64 * 0.15).sin() * 60.0 + (y as f64 * 0.1).cos() * 60.0 + 128.0) as u8
        });
        let c = (15.0, 15.0);
        let back = align_roi(&align_roi(&img, c, 30.0).unwrap(), c, 330.0).unwrap();
        for y in 10..21 {
            for x in 10..21 {
                assert!(img.get(x, y).abs_diff(back.get(x, y)) <= 2, "({x},{y})");
            }
        }
    }

    fn scene(w: usize, h: usize, target: Rect, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let color = ColorImage::from_fn(w, h, |x, y| {
            if target.contains(x as isize, y as isize) {
                let (dx, dy) = (x as isize - target.x, y as isize - target.y);
                let v = (dx * 17 + dy * 31) as u8 % 64;
                [200 + v / 2, 40 + v, 30]
            } else {
                let n: u8 = rng.gen_range(0..40);
                [60 + n, 90 + n, 120 + n]
            }
        });
        Frame::from_color(color)
    }

    #[test]
    fn model_update_blends() {
        let cfg = TrackerConfig::default();
        let a = build_model(
            &scene(60, 60, Rect::new(20, 20, 12, 12), 1),
            Rect::new(20, 20, 12, 12),
            &cfg,
        )
        .unwrap();
        let b = build_model(
            &scene(60, 60, Rect::new(22, 20, 12, 12), 2),
            Rect::new(20, 20, 12, 12),
            &cfg,
        )
        .unwrap();
        let same = |m: &TargetModel, r: &TargetModel| {
            assert_eq!(m.template, r.template);
            assert_eq!(m.color, r.color);
            assert!(m.hist.iter().zip(&r.hist).all(|(x, y)| close(*x, *y, 1e-12)));
            assert!(m
                .phog
                .data()
                .iter()
                .zip(r.phog.data())
                .all(|(x, y)| close(*x, *y, 1e-12)));
        };
        same(&update_model(&a, &b, 0.0).unwrap(), &a);
        same(&update_model(&a, &b, 1.0).unwrap(), &b);
        let half = update_model(&a, &b, 0.5).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                assert_eq!(
                    half.template.get(x, y),
                    (a.template.get(x, y) + b.template.get(x, y)) / 2.0
                );
            }
        }
        assert!(close(half.hist.iter().sum::<f64>(), 1.0, 1e-12));
        let c = build_model(
            &scene(60, 60, Rect::new(20, 20, 10, 12), 1),
            Rect::new(20, 20, 10, 12),
            &cfg,
        )
        .unwrap();
        assert!(update_model(&a, &c, 0.5).is_err());
    }

    #[test]
    fn tracks_static_target() {
        let rect = Rect::new(30, 24, 12, 12);
        let frames: Vec<Frame> = (0..8).map(|i| scene(80, 64, rect, i)).collect();
        let t = track_sequence(&frames, rect, &TrackerConfig::default()).unwrap();
        let (gx, gy) = rect.center();
        for r in t.records() {
            assert!((r.center.0 - gx).hypot(r.center.1 - gy) <= 1.0, "{r}");
        }
    }

    #[test]
    fn channel_fusion_is_schedule_independent() {
        let rect = Rect::new(30, 24, 12, 12);
        let f = scene(80, 64, rect, 3);
        let cfg = TrackerConfig::default();
        let model = build_model(&f, rect, &cfg).unwrap();
        let win = Rect::new(20, 14, 36, 36);
        let a = channel_maps(&f, win, &model, Direction::Unknown, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| channel_maps(&f, win, &model, Direction::Unknown, &cfg))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fused(&cfg.weights).unwrap(), b.fused(&cfg.weights).unwrap());
    }

    #[test]
    fn tracklet_text_round_trip() {
        let mut t = Tracklet::new();
        t.push(TrackRecord {
            frame: 0,
            center: (10.5, 3.0),
            bbox: Rect::new(5, -2, 11, 10),
            conf: 1.0,
            source: Source::Reinit,
        })
        .unwrap();
        t.push(TrackRecord {
            frame: 2,
            center: (12.25, 4.0),
            bbox: Rect::new(7, -1, 11, 10),
            conf: 0.3125,
            source: Source::FusedKf,
        })
        .unwrap();
        assert_eq!(Tracklet::parse(&t.to_text()).unwrap(), t);
        assert!(t
            .push(TrackRecord {
                frame: 2,
                ..t.records()[0]
            })
            .is_err());
        assert!(Tracklet::parse("1,2,3").is_err());
    }

    #[test]
    fn config_parsing() {
        let c = TrackerConfig::parse("# tuned\nweights.ncc = 0.4\nconf_tau=0.3\nalign=false\n").unwrap();
        assert_eq!(c.weights[0], 0.4);
        assert_eq!(c.conf_tau, 0.3);
        assert!(!c.align);
        assert!(TrackerConfig::parse("bogus=1").is_err());
        assert!(TrackerConfig::parse("conf_tau").is_err());
        assert!(TrackerConfig::parse("conf_tau=2").is_err());
    }

    proptest! {
        #[test]
        fn fuse_trace_bound(p in prop::collection::vec(0.0f64..3.0, 4), z in (-50.0f64..50.0, -50.0f64..50.0), conf in 0.001f64..=1.0) {
            let cfg = KalmanConfig::default();
            let prior = Matrix4::from_diagonal(&Vector4::from_vec(p));
            let s = KalmanState::from_parts(Vector4::new(1.0, 2.0, 0.5, 0.0), prior, Matrix4::identity() * cfg.q).unwrap();
            let out = kalman_fuse(&s, z, conf, &cfg).unwrap();
            prop_assert!(out.state.p().trace() <= s.p().trace() + s.q().trace() + 1e-9);
            prop_assert!(out.state.is_valid());
        }

        #[test]
        fn quarter_turns_are_permutations(seed in any::<u64>(), n in 2usize..12, k in 0usize..4) {
            let img = random_gray(n, n, seed);
            let c = ((n as f64 - 1.0) / 2.0, (n as f64 - 1.0) / 2.0);
            let mut want = img.clone();
            for _ in 0..k {
                let prev = want.clone();
                want = GrayImage::from_fn(n, n, |x, y| prev.get(n - 1 - y, x));
            }
            prop_assert_eq!(align_roi(&img, c, 90.0 * k as f64).unwrap(), want);
        }
    }
}
