//! Image containers, grayscale conversion, histogram-bin quantization and
//! binary PGM/PPM IO.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit single-channel image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len(), 1)?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
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

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Copy of the sub-image covered by `r`, which must lie inside the image.
    pub fn crop(&self, r: Rect) -> Result<GrayImage> {
        r.check_inside(self.width, self.height)?;
        let (x0, y0) = (r.x as usize, r.y as usize);
        let mut data = Vec::with_capacity(r.w * r.h);
        for y in y0..y0 + r.h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + r.w]);
        }
        GrayImage::new(r.w, r.h, data)
    }

    pub fn to_scalar(&self) -> ScalarMap {
        ScalarMap::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f64::from(v)).collect(),
            MapKind::Intensity,
        )
        .expect("dimensions already validated")
    }
}

/// 8-bit RGB image stored as three row-major planes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    r: Vec<u8>,
    g: Vec<u8>,
    b: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, r: Vec<u8>, g: Vec<u8>, b: Vec<u8>) -> Result<Self> {
        check_dims(width, height, r.len(), 1)?;
        if g.len() != r.len() || b.len() != r.len() {
            return Err(Error::mismatch("color planes differ in size"));
        }
        Ok(Self { width, height, r, g, b })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        let n = width * height;
        let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for y in 0..height {
            for x in 0..width {
                let [pr, pg, pb] = f(x, y);
                r.push(pr);
                g.push(pg);
                b.push(pb);
            }
        }
        Self { width, height, r, g, b }
    }

    /// Gray image replicated into all three channels.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            r: img.data.clone(),
            g: img.data.clone(),
            b: img.data.clone(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn red(&self) -> &[u8] {
        &self.r
    }

    pub fn green(&self) -> &[u8] {
        &self.g
    }

    pub fn blue(&self) -> &[u8] {
        &self.b
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = y * self.width + x;
        [self.r[i], self.g[i], self.b[i]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = y * self.width + x;
        self.r[i] = rgb[0];
        self.g[i] = rgb[1];
        self.b[i] = rgb[2];
    }

    pub fn crop(&self, rect: Rect) -> Result<ColorImage> {
        rect.check_inside(self.width, self.height)?;
        let (x0, y0) = (rect.x as usize, rect.y as usize);
        Ok(ColorImage::from_fn(rect.w, rect.h, |x, y| self.get(x0 + x, y0 + y)))
    }
}

/// Either kind of image a PNM file can hold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnyImage {
    Gray(GrayImage),
    Color(ColorImage),
}

impl AnyImage {
    pub fn width(&self) -> usize {
        match self {
            AnyImage::Gray(g) => g.width(),
            AnyImage::Color(c) => c.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            AnyImage::Gray(g) => g.height(),
            AnyImage::Color(c) => c.height(),
        }
    }

    pub fn into_gray(self) -> GrayImage {
        match self {
            AnyImage::Gray(g) => g,
            AnyImage::Color(c) => to_grayscale(&c),
        }
    }

    pub fn into_color(self) -> ColorImage {
        match self {
            AnyImage::Gray(g) => ColorImage::from_gray(&g),
            AnyImage::Color(c) => c,
        }
    }
}

/// Per-pixel histogram bin indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinMap {
    width: usize,
    height: usize,
    bins: usize,
    data: Vec<u16>,
}

impl BinMap {
    pub fn new(width: usize, height: usize, bins: usize, data: Vec<u16>) -> Result<Self> {
        check_dims(width, height, data.len(), 1)?;
        if bins == 0 || bins > usize::from(u16::MAX) + 1 {
            return Err(Error::invalid(format!("bin count {bins} out of range")));
        }
        if let Some(bad) = data.iter().find(|&&v| usize::from(v) >= bins) {
            return Err(Error::invalid(format!("bin index {bad} is not below bin count {bins}")));
        }
        Ok(Self {
            width,
            height,
            bins,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> usize {
        usize::from(self.data[y * self.width + x])
    }

    pub fn crop(&self, r: Rect) -> Result<BinMap> {
        r.check_inside(self.width, self.height)?;
        let (x0, y0) = (r.x as usize, r.y as usize);
        let mut data = Vec::with_capacity(r.w * r.h);
        for y in y0..y0 + r.h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + r.w]);
        }
        BinMap::new(r.w, r.h, self.bins, data)
    }
}

/// Axis-aligned rectangle: top-left corner plus extent.
///
/// Coordinates are signed so that tracker boxes may hang off the frame;
/// operations that query image data require the rectangle to be inside.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: isize,
    pub y: isize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: isize, y: isize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    /// Rectangle of extent `w`×`h` whose center pixel is `(cx, cy)`.
    ///
    /// The center pixel sits at offset `w / 2` from the left edge, so odd
    /// extents are symmetric and even ones lean right/down.
    pub fn centered(cx: isize, cy: isize, w: usize, h: usize) -> Self {
        Self::new(cx - (w / 2) as isize, cy - (h / 2) as isize, w, h)
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn right(&self) -> isize {
        self.x + self.w as isize
    }

    pub fn bottom(&self) -> isize {
        self.y + self.h as isize
    }

    /// Center pixel consistent with [`Rect::centered`].
    pub fn center_pixel(&self) -> (isize, isize) {
        (self.x + (self.w / 2) as isize, self.y + (self.h / 2) as isize)
    }

    /// Geometric center.
    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        self.w >= 1 && self.h >= 1
    }

    pub fn is_inside(&self, width: usize, height: usize) -> bool {
        self.is_valid()
            && self.x >= 0
            && self.y >= 0
            && self.right() <= width as isize
            && self.bottom() <= height as isize
    }

    pub fn check_inside(&self, width: usize, height: usize) -> Result<()> {
        if self.is_inside(width, height) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                rect: self.to_string(),
                width,
                height,
            })
        }
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(Rect::new(x0, y0, (x1 - x0) as usize, (y1 - y0) as usize))
        } else {
            None
        }
    }

    pub fn intersection_area(&self, other: &Rect) -> usize {
        self.intersection(other).map_or(0, |r| r.area())
    }

    /// Clip to the image; `None` when nothing remains.
    pub fn clip(&self, width: usize, height: usize) -> Option<Rect> {
        self.intersection(&Rect::new(0, 0, width, height))
    }

    pub fn contains(&self, x: isize, y: isize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    /// Parse `"x,y,w,h"`.
    pub fn parse(s: &str) -> Result<Rect> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::invalid(format!("expected x,y,w,h but got `{s}`")));
        }
        let num = |p: &str| -> Result<f64> {
            p.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number `{p}` in `{s}`")))
        };
        let (x, y, w, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?, num(parts[3])?);
        if w < 1.0 || h < 1.0 {
            return Err(Error::invalid(format!("rectangle `{s}` has empty extent")));
        }
        Ok(Rect::new(
            x.round() as isize,
            y.round() as isize,
            w.round() as usize,
            h.round() as usize,
        ))
    }
}

impl std::str::FromStr for Rect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Rect> {
        Rect::parse(s)
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

/// What a [`ScalarMap`] holds; determines its legal value range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapKind {
    Intensity,
    GradientX,
    GradientY,
    GradientMagnitude,
    /// Degrees in [-90, 90).
    OrientationDegrees,
    Beltrami,
    Harris,
    ShiTomasi,
    Cumani,
    /// Radians in [-3π/4, π/4].
    ShapeIndex,
    /// Radians in [0, π].
    Nci,
    /// Degrees in [-90, 90).
    EigvecOrientation,
    LbpCode,
    Edge,
    FluxTrace,
    EdgeIndicator,
    Generic,
}

impl MapKind {
    /// Closed value range for bounded kinds.
    pub fn range(self) -> Option<(f64, f64)> {
        use std::f64::consts::PI;
        match self {
            MapKind::OrientationDegrees | MapKind::EigvecOrientation => Some((-90.0, 90.0)),
            MapKind::ShapeIndex => Some((-3.0 * PI / 4.0, PI / 4.0)),
            MapKind::Nci => Some((0.0, PI)),
            MapKind::Edge => Some((0.0, 1.0)),
            MapKind::EdgeIndicator => Some((0.0, 1.0)),
            MapKind::LbpCode => Some((0.0, 65535.0)),
            _ => None,
        }
    }
}

/// Real-valued per-pixel map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    kind: MapKind,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, kind: MapKind) -> Result<Self> {
        check_dims(width, height, values.len(), 1)?;
        Ok(Self {
            width,
            height,
            values,
            kind,
        })
    }

    pub fn zeros(width: usize, height: usize, kind: MapKind) -> Self {
        assert!(width >= 1 && height >= 1, "map dimensions must be positive");
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            kind,
        }
    }

    pub fn from_fn(width: usize, height: usize, kind: MapKind, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(width, height, kind);
        for y in 0..height {
            for x in 0..width {
                m.values[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: MapKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.values[yc * self.width + xc]
    }

    pub fn crop(&self, r: Rect) -> Result<ScalarMap> {
        r.check_inside(self.width, self.height)?;
        let (x0, y0) = (r.x as usize, r.y as usize);
        Ok(ScalarMap::from_fn(r.w, r.h, self.kind, |x, y| self.get(x0 + x, y0 + y)))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Linear min-max rescale to 8 bits, for inspection output.
    pub fn to_gray_scaled(&self) -> GrayImage {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        let data = self
            .values
            .iter()
            .map(|&v| {
                if span > 0.0 && span.is_finite() {
                    (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        GrayImage::new(self.width, self.height, data).expect("same dimensions")
    }

    /// Values rounded and clamped to [0, 255].
    pub fn to_gray_clamped(&self) -> GrayImage {
        let data = self.values.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        GrayImage::new(self.width, self.height, data).expect("same dimensions")
    }
}

fn check_dims(width: usize, height: usize, len: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if len != width * height * channels {
        return Err(Error::mismatch(format!(
            "buffer of {len} values does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// Intensity as the unweighted RGB mean, rounded to nearest.
pub fn to_grayscale(img: &ColorImage) -> GrayImage {
    let data = img
        .r
        .iter()
        .zip(&img.g)
        .zip(&img.b)
        .map(|((&r, &g), &b)| {
            // sum/3 never lands on .5, so +1 then floor-divide rounds correctly
            ((u16::from(r) + u16::from(g) + u16::from(b) + 1) / 3) as u8
        })
        .collect();
    GrayImage::new(img.width, img.height, data).expect("same dimensions")
}

/// Mean over the in-bounds part of a `bw × bh` box centered on each pixel.
pub fn box_mean(m: &ScalarMap, bw: usize, bh: usize) -> ScalarMap {
    let (w, h) = (m.width(), m.height());
    let s = w + 1;
    let mut sat = vec![0.0; s * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += m.get(x, y);
            sat[(y + 1) * s + x + 1] = sat[y * s + x + 1] + row;
        }
    }
    let (rx, ry) = (bw / 2, bh / 2);
    ScalarMap::from_fn(w, h, m.kind(), |x, y| {
        let (x0, y0) = (x.saturating_sub(rx), y.saturating_sub(ry));
        let (x1, y1) = ((x + bw - rx).min(w), (y + bh - ry).min(h));
        let sum = sat[y1 * s + x1] - sat[y0 * s + x1] - sat[y1 * s + x0] + sat[y0 * s + x0];
        sum / ((x1 - x0) * (y1 - y0)) as f64
    })
}

/// Uniform-width bin index with border clamping.
#[inline]
pub fn bin_of(v: f64, bins: usize, lo: f64, hi: f64) -> usize {
    let t = ((v - lo) * bins as f64 / (hi - lo)).floor();
    if t.is_nan() || t < 0.0 {
        0
    } else if t >= bins as f64 {
        bins - 1
    } else {
        t as usize
    }
}

fn check_quantizer(bins: usize, lo: f64, hi: f64) -> Result<()> {
    if bins == 0 || bins > usize::from(u16::MAX) + 1 {
        return Err(Error::invalid(format!("bin count {bins} out of range")));
    }
    if !(lo < hi) {
        return Err(Error::invalid(format!("empty range [{lo}, {hi})")));
    }
    Ok(())
}

/// Quantize 8-bit intensities into `bins` uniform bins over `[lo, hi)`.
pub fn quantize(img: &GrayImage, bins: usize, lo: f64, hi: f64) -> Result<BinMap> {
    check_quantizer(bins, lo, hi)?;
    let data = img
        .data
        .iter()
        .map(|&v| bin_of(f64::from(v), bins, lo, hi) as u16)
        .collect();
    BinMap::new(img.width, img.height, bins, data)
}

/// Quantize a real-valued map; same rule as [`quantize`].
pub fn quantize_map(map: &ScalarMap, bins: usize, lo: f64, hi: f64) -> Result<BinMap> {
    check_quantizer(bins, lo, hi)?;
    let data = map.values.iter().map(|&v| bin_of(v, bins, lo, hi) as u16).collect();
    BinMap::new(map.width, map.height, bins, data)
}

// ---------------------------------------------------------------------------
// PNM IO

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::Format("file too short for a PNM magic number".into()));
    }
    let magic = [bytes[0], bytes[1]];
    if magic != *b"P5" && magic != *b"P6" {
        return Err(Error::Format(format!(
            "unsupported magic `{}`; expected P5 or P6",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between tokens
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("header ended early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("expected a number at byte {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::Format(format!("header number `{text}` out of range")))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(Error::Format(format!("zero-sized image {w}x{h}")));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    Ok(Header {
        magic,
        width: w as usize,
        height: h as usize,
        payload_start: pos,
    })
}

/// Decode a binary PGM (P5) or PPM (P6) from memory.
pub fn decode_pnm(bytes: &[u8]) -> Result<AnyImage> {
    let hdr = parse_header(bytes)?;
    let channels = if hdr.magic == *b"P5" { 1 } else { 3 };
    let expected = hdr.width * hdr.height * channels;
    let payload = &bytes[hdr.payload_start..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let payload = &payload[..expected];
    if channels == 1 {
        Ok(AnyImage::Gray(GrayImage::new(hdr.width, hdr.height, payload.to_vec())?))
    } else {
        let n = hdr.width * hdr.height;
        let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for px in payload.chunks_exact(3) {
            r.push(px[0]);
            g.push(px[1]);
            b.push(px[2]);
        }
        Ok(AnyImage::Color(ColorImage::new(hdr.width, hdr.height, r, g, b)?))
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.r.len() * 3);
    for i in 0..img.r.len() {
        out.extend_from_slice(&[img.r[i], img.g[i], img.b[i]]);
    }
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<AnyImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    load_image(path).map(AnyImage::into_gray)
}

pub fn load_color(path: impl AsRef<Path>) -> Result<ColorImage> {
    load_image(path).map(AnyImage::into_color)
}

pub fn save_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn save_color(path: impl AsRef<Path>, img: &ColorImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn save_image(path: impl AsRef<Path>, img: &AnyImage) -> Result<()> {
    match img {
        AnyImage::Gray(g) => save_gray(path, g),
        AnyImage::Color(c) => save_color(path, c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_small_pgm() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 64, 128, 255]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(
            img,
            AnyImage::Gray(GrayImage::new(2, 2, vec![0, 64, 128, 255]).unwrap())
        );
    }

    #[test]
    fn decodes_red_ppm_pixel() {
        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0]);
        let AnyImage::Color(c) = decode_pnm(&bytes).unwrap() else {
            panic!("expected color image");
        };
        assert_eq!((c.red(), c.green(), c.blue()), (&[255u8][..], &[0u8][..], &[0u8][..]));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend_from_slice(&[7; 8]);
        let err = decode_pnm(&bytes).unwrap_err();
        assert!(matches!(err, Error::Truncated { expected: 16, found: 8 }));
        assert!(err.to_string().contains("truncated payload"));
    }

    #[test]
    fn header_errors() {
        assert!(matches!(decode_pnm(b"P2\n1 1\n255\n0"), Err(Error::Format(_))));
        assert!(matches!(decode_pnm(b"P5\n1 x\n255\n0"), Err(Error::Format(_))));
        assert!(matches!(
            decode_pnm(b"P5\n1 1\n65535\n00"),
            Err(Error::UnsupportedMaxval(65535))
        ));
        // comment lines are allowed between header tokens
        let img = decode_pnm(b"P5\n# made by hand\n1 1\n255\n\x2a").unwrap();
        assert_eq!(img.into_gray().data(), &[42]);
    }

    #[test]
    fn grayscale_examples() {
        let c = ColorImage::from_fn(3, 1, |x, _| match x {
            0 => [255, 255, 255],
            1 => [0, 0, 0],
            _ => [10, 20, 40],
        });
        assert_eq!(to_grayscale(&c).data(), &[255, 0, 23]);
    }

    #[test]
    fn quantize_examples() {
        let img = GrayImage::new(3, 1, vec![0, 255, 128]).unwrap();
        let q32 = quantize(&img, 32, 0.0, 256.0).unwrap();
        assert_eq!(q32.get(0, 0), 0);
        assert_eq!(q32.get(1, 0), 31);
        let q16 = quantize(&img, 16, 0.0, 256.0).unwrap();
        assert_eq!(q16.get(2, 0), 8);
        // values outside the range clamp to the border bins
        assert_eq!(bin_of(-5.0, 4, 0.0, 1.0), 0);
        assert_eq!(bin_of(7.0, 4, 0.0, 1.0), 3);
        assert!(quantize(&img, 0, 0.0, 1.0).is_err());
        assert!(quantize(&img, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn rect_helpers() {
        let r = Rect::parse("1, 2, 3, 4").unwrap();
        assert_eq!(r, Rect::new(1, 2, 3, 4));
        assert_eq!(r.to_string(), "1,2,3,4");
        assert!(Rect::parse("1,2,0,4").is_err());
        assert!(r.is_inside(4, 6));
        assert!(!r.is_inside(3, 6));
        assert_eq!(Rect::centered(5, 5, 3, 3), Rect::new(4, 4, 3, 3));
        assert_eq!(Rect::centered(5, 5, 4, 4).center_pixel(), (5, 5));
        let a = Rect::new(0, 0, 10, 10);
        assert_eq!(a.intersection_area(&Rect::new(5, 0, 10, 10)), 50);
        assert_eq!(a.intersection_area(&Rect::new(10, 0, 10, 10)), 0);
    }

    proptest! {
        #[test]
        fn pnm_round_trip(w in 1usize..12, h in 1usize..12, seed in any::<u64>(), color in any::<bool>()) {
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 56) as u8 };
            let img = if color {
                AnyImage::Color(ColorImage::from_fn(w, h, |_, _| [next(), next(), next()]))
            } else {
                AnyImage::Gray(GrayImage::from_fn(w, h, |_, _| next()))
            };
            let bytes = match &img {
                AnyImage::Gray(g) => encode_pgm(g),
                AnyImage::Color(c) => encode_ppm(c),
            };
            prop_assert_eq!(decode_pnm(&bytes).unwrap(), img);
        }

        #[test]
        fn quantize_is_monotone(a in 0u8..=255, b in 0u8..=255, bins in 1usize..300) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(bin_of(f64::from(lo), bins, 0.0, 256.0) <= bin_of(f64::from(hi), bins, 0.0, 256.0));
        }

        #[test]
        fn gray_within_channel_bounds(r in 0u8..=255, g in 0u8..=255, b in 0u8..=255) {
            let c = ColorImage::from_fn(1, 1, |_, _| [r, g, b]);
            let v = to_grayscale(&c).data()[0];
            prop_assert!(v >= r.min(g).min(b) && v <= r.max(g).max(b));
        }
    }
}
