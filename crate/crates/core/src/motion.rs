//! Moving-object detection: temporal-median backgrounds, the flux-tensor
//! trace, depth-based suppression and geodesic active contours.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::derivatives;
use crate::image::{box_mean, quantize, GrayImage, MapKind, Rect, ScalarMap};
use crate::integral::{build, IntegralHistogramTensor, ScanSchedule};

/// Odd-length run of equally sized frames centered on the middle one.
#[derive(Clone, Debug)]
pub struct FrameWindow {
    frames: Vec<GrayImage>,
}

impl FrameWindow {
    pub fn new(frames: Vec<GrayImage>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Empty("frame window".into()))?;
        if frames.len().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "frame window length must be odd, got {}",
                frames.len()
            )));
        }
        let (w, h) = (first.width(), first.height());
        if let Some(f) = frames.iter().find(|f| f.width() != w || f.height() != h) {
            return Err(Error::mismatch(format!(
                "frame {}x{} in a {w}x{h} window",
                f.width(),
                f.height()
            )));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[GrayImage] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn center_index(&self) -> usize {
        self.frames.len() / 2
    }

    pub fn center(&self) -> &GrayImage {
        &self.frames[self.center_index()]
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }
}

// ---------------------------------------------------------------------------
// medians

/// Intensity at the center of bin `k` of `bins` equal bins over [0, 256).
#[inline]
pub fn bin_center(k: usize, bins: usize) -> u8 {
    (((k as f64 + 0.5) * 256.0 / bins as f64).floor()).min(255.0) as u8
}

/// Sum of per-frame integral histograms over a sliding frame window.
#[derive(Clone, Debug)]
pub struct JointHistogram {
    bins: usize,
    width: usize,
    height: usize,
    frames: VecDeque<IntegralHistogramTensor>,
    joint: Vec<u64>,
    schedule: ScanSchedule,
}

impl JointHistogram {
    pub fn new(window: &FrameWindow, bins: usize, schedule: &ScanSchedule) -> Result<Self> {
        let mut j = Self {
            bins,
            width: window.width(),
            height: window.height(),
            frames: VecDeque::with_capacity(window.len()),
            joint: vec![0; bins * (window.width() + 1) * (window.height() + 1)],
            schedule: *schedule,
        };
        for f in window.frames() {
            let t = j.tensor_of(f)?;
            j.add(&t);
            j.frames.push_back(t);
        }
        Ok(j)
    }

    fn tensor_of(&self, frame: &GrayImage) -> Result<IntegralHistogramTensor> {
        if frame.width() != self.width || frame.height() != self.height {
            return Err(Error::mismatch(format!(
                "frame {}x{} in a {}x{} window",
                frame.width(),
                frame.height(),
                self.width,
                self.height
            )));
        }
        build(&quantize(frame, self.bins, 0.0, 256.0)?, &self.schedule)
    }

    fn add(&mut self, t: &IntegralHistogramTensor) {
        self.joint.iter_mut().zip(t.data()).for_each(|(j, v)| *j += v);
    }

    fn subtract(&mut self, t: &IntegralHistogramTensor) {
        self.joint.iter_mut().zip(t.data()).for_each(|(j, v)| *j -= v);
    }

    /// Add `head` and drop the oldest frame.
    pub fn slide(&mut self, head: &GrayImage) -> Result<()> {
        let t = self.tensor_of(head)?;
        self.add(&t);
        let tail = self.frames.pop_front().expect("window is never empty");
        self.subtract(&tail);
        self.frames.push_back(t);
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn joint(&self) -> &[u64] {
        &self.joint
    }

    /// Joint count of bin `k` over `[x0, x1) × [y0, y1)`.
    #[inline]
    fn bin_sum(&self, k: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let s = self.width + 1;
        let p = &self.joint[k * s * (self.height + 1)..];
        p[y1 * s + x1] + p[y0 * s + x0] - p[y0 * s + x1] - p[y1 * s + x0]
    }

    /// Per-pixel median over the clipped `kw × kh` neighbourhood of every
    /// frame, reported as a bin center.
    pub fn median(&self, kw: usize, kh: usize) -> Result<GrayImage> {
        if kw.is_multiple_of(2) || kh.is_multiple_of(2) {
            return Err(Error::invalid(format!("median kernel {kw}x{kh} must be odd")));
        }
        if kw > self.width || kh > self.height {
            return Err(Error::invalid(format!(
                "median kernel {kw}x{kh} exceeds the {}x{} image",
                self.width, self.height
            )));
        }
        let (rx, ry) = (kw / 2, kh / 2);
        let n = self.frames.len() as u64;
        let mut out = GrayImage::filled(self.width, self.height, 0);
        for y in 0..self.height {
            let (y0, y1) = (y.saturating_sub(ry), (y + ry + 1).min(self.height));
            for x in 0..self.width {
                let (x0, x1) = (x.saturating_sub(rx), (x + rx + 1).min(self.width));
                let count = n * ((x1 - x0) * (y1 - y0)) as u64;
                let half = count.div_ceil(2);
                let mut cdf = 0;
                let mut k = 0;
                while k < self.bins {
                    cdf += self.bin_sum(k, x0, y0, x1, y1);
                    if cdf >= half {
                        break;
                    }
                    k += 1;
                }
                out.set(x, y, bin_center(k.min(self.bins - 1), self.bins));
            }
        }
        Ok(out)
    }
}

pub fn median_background_ih(
    window: &FrameWindow,
    bins: usize,
    kw: usize,
    kh: usize,
    schedule: &ScanSchedule,
) -> Result<GrayImage> {
    JointHistogram::new(window, bins, schedule)?.median(kw, kh)
}

/// Exact per-pixel temporal median.
pub fn median_background_sort(window: &FrameWindow) -> GrayImage {
    let (w, h, n) = (window.width(), window.height(), window.len());
    let mut buf = vec![0u8; n];
    let mut out = GrayImage::filled(w, h, 0);
    for i in 0..w * h {
        for (b, f) in buf.iter_mut().zip(window.frames()) {
            *b = f.data()[i];
        }
        let (_, m, _) = buf.select_nth_unstable(n / 2);
        out.data_mut()[i] = *m;
    }
    out
}

// ---------------------------------------------------------------------------
// masks

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blob {
    pub id: usize,
    pub bbox: Rect,
    pub area: usize,
}

/// Binary foreground with its 8-connected components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
    blobs: Vec<Blob>,
    min_blob: usize,
}

impl MotionMask {
    /// Label `data` (nonzero = foreground) and drop components smaller than
    /// `min_blob` pixels.
    pub fn from_binary(width: usize, height: usize, data: Vec<u8>, min_blob: usize) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::mismatch(format!(
                "{} mask values for {width}x{height}",
                data.len()
            )));
        }
        let mut m = Self {
            width,
            height,
            data: data.into_iter().map(|v| u8::from(v != 0)).collect(),
            blobs: Vec::new(),
            min_blob,
        };
        m.relabel();
        Ok(m)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
            blobs: Vec::new(),
            min_blob: 1,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn blobs(&self) -> &[Blob] {
        &self.blobs
    }

    pub fn min_blob(&self) -> usize {
        self.min_blob
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn boxes(&self) -> Vec<Rect> {
        self.blobs.iter().map(|b| b.bbox).collect()
    }

    /// 0/255 image.
    pub fn to_gray(&self) -> GrayImage {
        let data = self.data.iter().map(|&v| v * 255).collect();
        GrayImage::new(self.width, self.height, data).expect("same dimensions")
    }

    fn relabel(&mut self) {
        let (w, h) = (self.width, self.height);
        let mut label = vec![0usize; w * h];
        let mut stack = Vec::new();
        let mut comps: Vec<(Vec<usize>, Rect)> = Vec::new();
        for start in 0..w * h {
            if self.data[start] == 0 || label[start] != 0 {
                continue;
            }
            let id = comps.len() + 1;
            label[start] = id;
            stack.push(start);
            let mut pixels = Vec::new();
            let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
            while let Some(i) = stack.pop() {
                pixels.push(i);
                let (x, y) = (i % w, i / w);
                (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let j = ny * w + nx;
                        if self.data[j] != 0 && label[j] == 0 {
                            label[j] = id;
                            stack.push(j);
                        }
                    }
                }
            }
            let bbox = Rect::new(x0 as isize, y0 as isize, x1 - x0 + 1, y1 - y0 + 1);
            comps.push((pixels, bbox));
        }
        self.blobs.clear();
        for (pixels, bbox) in comps {
            if pixels.len() < self.min_blob {
                for i in pixels {
                    self.data[i] = 0;
                }
            } else {
                self.blobs.push(Blob {
                    id: self.blobs.len() + 1,
                    bbox,
                    area: pixels.len(),
                });
            }
        }
    }
}

fn morph(src: &[u8], w: usize, h: usize, dilate: bool) -> Vec<u8> {
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = !dilate;
            'n: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let on = src[ny * w + nx] != 0;
                    if dilate && on {
                        acc = true;
                        break 'n;
                    }
                    if !dilate && !on {
                        acc = false;
                        break 'n;
                    }
                }
            }
            out[y * w + x] = u8::from(acc);
        }
    }
    out
}

/// 3×3 opening followed by 3×3 closing; out-of-image neighbours are ignored.
pub fn open_close(src: &[u8], w: usize, h: usize) -> Vec<u8> {
    let opened = morph(&morph(src, w, h, false), w, h, true);
    morph(&morph(&opened, w, h, true), w, h, false)
}

pub fn subtract_threshold(frame: &GrayImage, background: &GrayImage, tau: u8, min_blob: usize) -> Result<MotionMask> {
    let (w, h) = (frame.width(), frame.height());
    if background.width() != w || background.height() != h {
        return Err(Error::mismatch(format!(
            "frame {w}x{h} vs background {}x{}",
            background.width(),
            background.height()
        )));
    }
    let raw: Vec<u8> = frame
        .data()
        .iter()
        .zip(background.data())
        .map(|(a, b)| u8::from(a.abs_diff(*b) > tau))
        .collect();
    MotionMask::from_binary(w, h, open_close(&raw, w, h), min_blob)
}

// ---------------------------------------------------------------------------
// flux tensor

/// Trace of the flux tensor at the window's center frame, using the three
/// central frames, box-averaged over `avg_window`.
pub fn flux_trace(window: &FrameWindow, sigma_d: f64, avg_window: usize) -> Result<ScalarMap> {
    if window.len() < 3 {
        return Err(Error::invalid(format!(
            "flux trace needs at least 3 frames, got {}",
            window.len()
        )));
    }
    if avg_window == 0 {
        return Err(Error::invalid("averaging window must be positive"));
    }
    let c = window.center_index();
    let prev = window.frames()[c - 1].to_scalar();
    let cur = window.frames()[c].to_scalar();
    let next = window.frames()[c + 1].to_scalar();
    let (pgx, pgy) = derivatives(&prev, sigma_d);
    let (ngx, ngy) = derivatives(&next, sigma_d);
    let (w, h) = (window.width(), window.height());
    let raw = ScalarMap::from_fn(w, h, MapKind::FluxTrace, |x, y| {
        let ixt = (ngx.get(x, y) - pgx.get(x, y)) / 2.0;
        let iyt = (ngy.get(x, y) - pgy.get(x, y)) / 2.0;
        let itt = next.get(x, y) - 2.0 * cur.get(x, y) + prev.get(x, y);
        ixt * ixt + iyt * iyt + itt * itt
    });
    let mean = box_mean(&raw, avg_window, avg_window);
    // summed-area differences can leave tiny negative residue
    Ok(ScalarMap::from_fn(w, h, MapKind::FluxTrace, |x, y| {
        mean.get(x, y).max(0.0)
    }))
}

/// `1 / (1 + trace)`.
pub fn edge_indicator(trace: &ScalarMap) -> Result<ScalarMap> {
    if let Some(v) = trace.values().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("flux trace must be nonnegative, got {v}")));
    }
    Ok(ScalarMap::from_fn(
        trace.width(),
        trace.height(),
        MapKind::EdgeIndicator,
        |x, y| 1.0 / (1.0 + trace.get(x, y)),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectMethod {
    MedianIh,
    MedianSort,
    Flux,
}

impl std::str::FromStr for DetectMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median-ih" => Ok(Self::MedianIh),
            "median-sort" => Ok(Self::MedianSort),
            "flux" => Ok(Self::Flux),
            _ => Err(Error::invalid(format!("unknown detection method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DetectParams {
    pub method: DetectMethod,
    /// Frames on each side of the center.
    pub half_window: usize,
    pub bins: usize,
    pub kernel: usize,
    pub tau: u8,
    pub min_blob: usize,
    pub sigma_d: f64,
    pub avg_window: usize,
    /// Trace threshold for the flux method.
    pub flux_tau: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            method: DetectMethod::MedianSort,
            half_window: 8,
            bins: 64,
            kernel: 1,
            tau: 25,
            min_blob: 10,
            sigma_d: 1.0,
            avg_window: 5,
            flux_tau: 50.0,
        }
    }
}

/// Motion masks for every frame whose full window lies inside `frames`;
/// entry `i` of the result belongs to frame `i + half_window`. Frames are
/// processed in parallel.
pub fn detect_sequence(frames: &[GrayImage], params: &DetectParams) -> Result<Vec<MotionMask>> {
    let t = 2 * params.half_window + 1;
    if frames.len() < t {
        return Err(Error::invalid(format!(
            "{} frames are fewer than the window length {t}",
            frames.len()
        )));
    }
    (0..=frames.len() - t)
        .into_par_iter()
        .map(|s| {
            let window = FrameWindow::new(frames[s..s + t].to_vec())?;
            detect_window(&window, params)
        })
        .collect()
}

pub fn detect_window(window: &FrameWindow, params: &DetectParams) -> Result<MotionMask> {
    let (w, h) = (window.width(), window.height());
    match params.method {
        DetectMethod::MedianSort => subtract_threshold(
            window.center(),
            &median_background_sort(window),
            params.tau,
            params.min_blob,
        ),
        DetectMethod::MedianIh => {
            let bg = median_background_ih(
                window,
                params.bins,
                params.kernel,
                params.kernel,
                &ScanSchedule::sequential(),
            )?;
            subtract_threshold(window.center(), &bg, params.tau, params.min_blob)
        }
        DetectMethod::Flux => {
            let trace = flux_trace(window, params.sigma_d, params.avg_window)?;
            let raw: Vec<u8> = trace.values().iter().map(|&v| u8::from(v > params.flux_tau)).collect();
            MotionMask::from_binary(w, h, open_close(&raw, w, h), params.min_blob)
        }
    }
}

// ---------------------------------------------------------------------------
// depth

/// Height above ground in meters; NaN marks missing data.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::mismatch(format!(
                "{} depth values for {width}x{height}",
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("depth values must be finite or nan"));
        }
        Ok(Self { width, height, values })
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// `"width height"` then one line of reals per row, `nan` for nodata.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut dim = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Format(format!("depth map is missing its {what}")))?
                .parse()
                .map_err(|_| Error::Format(format!("bad depth map {what}")))
        };
        let (w, h) = (dim("width")?, dim("height")?);
        let values: Vec<f64> = tokens
            .map(|t| {
                if t.eq_ignore_ascii_case("nan") {
                    Ok(f64::NAN)
                } else {
                    t.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad depth value `{t}`")))
                }
            })
            .collect::<Result<_>>()?;
        if values.len() != w * h {
            return Err(Error::Truncated {
                expected: w * h,
                found: values.len(),
            });
        }
        Self::new(w, h, values).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.width, self.height);
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|v| if v.is_nan() { "nan".to_string() } else { v.to_string() })
                .collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub const DEFAULT_H_TAU: f64 = 20.0;

/// Clear foreground standing higher than `h_tau`, then relabel.
pub fn depth_filter(mask: &MotionMask, depth: &DepthMap, h_tau: f64) -> Result<MotionMask> {
    if mask.width != depth.width || mask.height != depth.height {
        return Err(Error::mismatch(format!(
            "mask {}x{} vs depth {}x{}",
            mask.width, mask.height, depth.width, depth.height
        )));
    }
    let data = mask
        .data
        .iter()
        .zip(&depth.values)
        .map(|(&m, &d)| if d > h_tau { 0 } else { m })
        .collect();
    MotionMask::from_binary(mask.width, mask.height, data, mask.min_blob)
}

// ---------------------------------------------------------------------------
// level sets

const FAR: f64 = 1e20;

/// Squared distance transform of a sampled function along one line.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let para = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for q in 1..n {
        let mut s = para(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = para(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Euclidean distance from every pixel to the nearest `seed` pixel.
pub fn distance_transform(seed: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut g: Vec<f64> = seed.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let n = w.max(h);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = g[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            g[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&g[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        g[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    g.into_iter().map(|d| if d >= FAR { FAR } else { d.sqrt() }).collect()
}

/// Signed distance, negative inside; boundary pixels sit at ±0.5.
pub fn signed_distance(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    let outside: Vec<bool> = mask.iter().map(|m| !m).collect();
    let d_in = distance_transform(mask, w, h);
    let d_out = distance_transform(&outside, w, h);
    let cap = (w + h) as f64;
    mask.iter()
        .zip(d_in.iter().zip(&d_out))
        .map(|(&m, (&di, &dout))| if m { -(dout.min(cap) - 0.5) } else { di.min(cap) - 0.5 })
        .collect()
}

const REDISTANCE_STEPS: usize = 10;

/// Relax `φ` toward a signed distance with `φ_τ = S(φ₀)(1 − |∇φ|)`, keeping
/// the zero level set in place to sub-pixel accuracy.
pub fn redistance(phi: &mut Vec<f64>, w: usize, h: usize, steps: usize) {
    const DTAU: f64 = 0.5;
    let sign: Vec<f64> = phi.iter().map(|&p| p / (p * p + 1.0).sqrt()).collect();
    let mut next = phi.clone();
    for _ in 0..steps {
        let at = |f: &[f64], x: isize, y: isize| -> f64 {
            f[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
        };
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                let p = phi[i];
                let (a, b) = (p - at(phi, x - 1, y), at(phi, x + 1, y) - p);
                let (c, d) = (p - at(phi, x, y - 1), at(phi, x, y + 1) - p);
                let s = sign[i];
                let g2 = if s > 0.0 {
                    a.max(0.0).powi(2).max(b.min(0.0).powi(2)) + c.max(0.0).powi(2).max(d.min(0.0).powi(2))
                } else {
                    a.min(0.0).powi(2).max(b.max(0.0).powi(2)) + c.min(0.0).powi(2).max(d.max(0.0).powi(2))
                };
                next[i] = p - DTAU * s * (g2.sqrt() - 1.0);
            }
        }
        std::mem::swap(phi, &mut next);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GacParams {
    /// Balloon speed; positive shrinks the contour.
    pub c: f64,
    pub dt: f64,
    pub iters: usize,
    pub reinit_every: usize,
}

impl Default for GacParams {
    fn default() -> Self {
        Self {
            c: 0.2,
            dt: 0.25,
            iters: 400,
            reinit_every: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GacOutcome {
    pub mask: Vec<bool>,
    /// Inside area before the first step and after every step.
    pub area_history: Vec<usize>,
}

pub const CURVATURE_EPS: f64 = 1e-8;

/// Evolve `φ_t = g·(c + κ)·|∇φ| + ∇φ·∇g` from the signed distance of
/// `initial` and return `{φ < 0}`.
pub fn gac_refine(initial: &[bool], w: usize, h: usize, g: &ScalarMap, params: &GacParams) -> Result<GacOutcome> {
    if initial.len() != w * h || g.width() != w || g.height() != h {
        return Err(Error::mismatch(format!(
            "mask of {} values, g {}x{}, image {w}x{h}",
            initial.len(),
            g.width(),
            g.height()
        )));
    }
    if !(params.dt > 0.0 && params.dt <= 0.25) {
        return Err(Error::invalid(format!("time step {} must lie in (0, 0.25]", params.dt)));
    }
    if params.iters == 0 {
        return Err(Error::invalid("at least one iteration is required"));
    }
    if !params.c.is_finite() || g.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("balloon speed and g must be finite"));
    }
    let at = |f: &[f64], x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        f[yc * w + xc]
    };
    let gv = g.values();
    let (gx, gy): (Vec<f64>, Vec<f64>) = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            (
                (at(gv, x + 1, y) - at(gv, x - 1, y)) / 2.0,
                (at(gv, x, y + 1) - at(gv, x, y - 1)) / 2.0,
            )
        })
        .unzip();

    let mut phi = signed_distance(initial, w, h);
    let area = |phi: &[f64]| phi.iter().filter(|&&p| p < 0.0).count();
    let mut history = vec![area(&phi)];
    let mut next = vec![0.0; w * h];
    for it in 1..=params.iters {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                let p = phi[i];
                let (xm, xp) = (p - at(&phi, x - 1, y), at(&phi, x + 1, y) - p);
                let (ym, yp) = (p - at(&phi, x, y - 1), at(&phi, x, y + 1) - p);

                // balloon: φ_t = F|∇φ|, an inward front for F > 0
                let f = gv[i] * params.c;
                let grad_up = if f > 0.0 {
                    (xm.min(0.0).powi(2) + xp.max(0.0).powi(2) + ym.min(0.0).powi(2) + yp.max(0.0).powi(2)).sqrt()
                } else {
                    (xm.max(0.0).powi(2) + xp.min(0.0).powi(2) + ym.max(0.0).powi(2) + yp.min(0.0).powi(2)).sqrt()
                };

                let px = (xp + xm) / 2.0;
                let py = (yp + ym) / 2.0;
                let pxx = xp - xm;
                let pyy = yp - ym;
                let pxy = (at(&phi, x + 1, y + 1) - at(&phi, x - 1, y + 1) - at(&phi, x + 1, y - 1)
                    + at(&phi, x - 1, y - 1))
                    / 4.0;
                let g2 = px * px + py * py;
                let kappa = (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (g2.powf(1.5) + CURVATURE_EPS);
                let curv = gv[i] * kappa * g2.sqrt();

                // advection along ∇g, upwinded
                let adv = gx[i] * if gx[i] < 0.0 { xm } else { xp } + gy[i] * if gy[i] < 0.0 { ym } else { yp };

                next[i] = p + params.dt * (f * grad_up + curv + adv);
            }
        }
        std::mem::swap(&mut phi, &mut next);
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: it });
        }
        if params.reinit_every > 0 && it % params.reinit_every == 0 {
            redistance(&mut phi, w, h, REDISTANCE_STEPS);
        }
        history.push(area(&phi));
    }
    Ok(GacOutcome {
        mask: phi.iter().map(|&p| p < 0.0).collect(),
        area_history: history,
    })
}
