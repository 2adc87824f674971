//! Integral-histogram tensors built under four interchangeable scan
//! schedules, O(1) region queries, schedule analytics and the `IHT1` dump.
//!
//! Every schedule writes the same padded layout: `b` planes of
//! `(h + 1) × (w + 1)` counts, plane-major then row-major, with row 0 and
//! column 0 of every plane held at zero. All arithmetic is integer, so the
//! schedules agree bit for bit regardless of tiling or worker count.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};
use crate::image::{BinMap, Rect};

/// Default tensor budget for [`build`]: 4 GiB.
pub const DEFAULT_BUDGET_BYTES: u64 = 4 << 30;

pub const DEFAULT_TILE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Sequential,
    ScanTransposeScan,
    CrossWeaveTiled,
    WavefrontTiled,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 4] = [
        ScheduleKind::Sequential,
        ScheduleKind::ScanTransposeScan,
        ScheduleKind::CrossWeaveTiled,
        ScheduleKind::WavefrontTiled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Sequential => "seq",
            ScheduleKind::ScanTransposeScan => "cw-sts",
            ScheduleKind::CrossWeaveTiled => "cw-tis",
            ScheduleKind::WavefrontTiled => "wf-tis",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "seq" | "sequential" => Ok(ScheduleKind::Sequential),
            "cw-sts" | "sts" | "scan-transpose-scan" => Ok(ScheduleKind::ScanTransposeScan),
            "cw-tis" | "cross-weave" | "crossweave" => Ok(ScheduleKind::CrossWeaveTiled),
            "wf-tis" | "wavefront" => Ok(ScheduleKind::WavefrontTiled),
            other => Err(Error::invalid(format!("unknown schedule `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScanSchedule {
    pub kind: ScheduleKind,
    /// Tile side in pixels; ignored by the untiled kinds.
    pub tile: usize,
    pub threads: usize,
}

impl ScanSchedule {
    pub fn new(kind: ScheduleKind, tile: usize, threads: usize) -> Self {
        Self { kind, tile, threads }
    }

    pub fn sequential() -> Self {
        Self::new(ScheduleKind::Sequential, DEFAULT_TILE, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::invalid("schedule needs at least one thread"));
        }
        if self.tile == 0 {
            return Err(Error::invalid("tile size must be positive"));
        }
        Ok(())
    }
}

impl Default for ScanSchedule {
    fn default() -> Self {
        Self::sequential()
    }
}

/// `b × (h+1) × (w+1)` cumulative bin counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegralHistogramTensor {
    bins: usize,
    height: usize,
    width: usize,
    data: Vec<u64>,
}

impl IntegralHistogramTensor {
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Image height (the tensor has one extra padding row).
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    fn stride(&self) -> usize {
        self.width + 1
    }

    #[inline]
    fn plane_len(&self) -> usize {
        (self.width + 1) * (self.height + 1)
    }

    /// Entry at padded coordinates: `y ∈ [0, h]`, `x ∈ [0, w]`.
    #[inline]
    pub fn get(&self, k: usize, y: usize, x: usize) -> u64 {
        self.data[k * self.plane_len() + y * self.stride() + x]
    }

    pub fn plane(&self, k: usize) -> &[u64] {
        let n = self.plane_len();
        &self.data[k * n..(k + 1) * n]
    }

    /// Sum of bin `k` over `[x0, x1) × [y0, y1)`; bounds unchecked beyond
    /// slice indexing.
    #[inline]
    pub fn bin_sum(&self, k: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let p = &self.data[k * self.plane_len()..];
        let s = self.stride();
        p[y1 * s + x1] + p[y0 * s + x0] - p[y0 * s + x1] - p[y1 * s + x0]
    }

    /// Writes the histogram of `[x0, x1) × [y0, y1)` into `out`.
    #[inline]
    pub fn region_into(&self, x0: usize, y0: usize, x1: usize, y1: usize, out: &mut [u64]) {
        let n = self.plane_len();
        let s = self.stride();
        let (a, b, c, d) = (y1 * s + x1, y0 * s + x0, y0 * s + x1, y1 * s + x0);
        for (k, o) in out.iter_mut().enumerate().take(self.bins) {
            let p = &self.data[k * n..(k + 1) * n];
            *o = p[a] + p[b] - p[c] - p[d];
        }
    }

    /// Histogram of the pixels covered by `r`.
    pub fn region_histogram(&self, r: Rect) -> Result<Vec<u64>> {
        r.check_inside(self.width, self.height)?;
        let (x0, y0) = (r.x as usize, r.y as usize);
        let mut out = vec![0; self.bins];
        self.region_into(x0, y0, x0 + r.w, y0 + r.h, &mut out);
        Ok(out)
    }

    pub fn to_dump_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 8);
        out.extend_from_slice(b"IHT1");
        for v in [self.bins, self.height, self.width, 8] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_dump_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != b"IHT1" {
            return Err(Error::Format("missing IHT1 header".into()));
        }
        let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (bins, height, width, elem) = (field(0), field(1), field(2), field(3));
        if elem != 8 {
            return Err(Error::Format(format!("unsupported element size {elem}")));
        }
        let count = bins * (height + 1) * (width + 1);
        let expected = count * 8;
        let payload = &bytes[20..];
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: payload.len(),
            });
        }
        let data = payload[..expected]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            bins,
            height,
            width,
            data,
        })
    }

    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_dump_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_dump(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_dump_bytes(&bytes)
    }
}

/// Per-pixel contribution `Q(k, y, x)`.
trait Source: Sync {
    fn at(&self, k: usize, idx: usize) -> u64;
}

struct Indicator<'a>(&'a [u16]);

impl Source for Indicator<'_> {
    #[inline(always)]
    fn at(&self, k: usize, idx: usize) -> u64 {
        u64::from(usize::from(self.0[idx]) == k)
    }
}

struct Weighted<'a> {
    bins: &'a [u16],
    weights: &'a [u64],
}

impl Source for Weighted<'_> {
    #[inline(always)]
    fn at(&self, k: usize, idx: usize) -> u64 {
        if usize::from(self.bins[idx]) == k {
            self.weights[idx]
        } else {
            0
        }
    }
}

/// Build the count tensor, refusing tensors above [`DEFAULT_BUDGET_BYTES`].
pub fn build(map: &BinMap, schedule: &ScanSchedule) -> Result<IntegralHistogramTensor> {
    build_with_budget(map, schedule, DEFAULT_BUDGET_BYTES)
}

pub fn build_with_budget(map: &BinMap, schedule: &ScanSchedule, budget: u64) -> Result<IntegralHistogramTensor> {
    run(map, &Indicator(map.data()), schedule, budget)
}

/// Build a tensor whose pixels contribute `weights[i]` instead of 1.
pub fn build_weighted(map: &BinMap, weights: &[u64], schedule: &ScanSchedule) -> Result<IntegralHistogramTensor> {
    if weights.len() != map.data().len() {
        return Err(Error::mismatch(format!(
            "{} weights for a {}x{} map",
            weights.len(),
            map.width(),
            map.height()
        )));
    }
    let src = Weighted {
        bins: map.data(),
        weights,
    };
    run(map, &src, schedule, DEFAULT_BUDGET_BYTES)
}

fn run<S: Source>(map: &BinMap, src: &S, schedule: &ScanSchedule, budget: u64) -> Result<IntegralHistogramTensor> {
    schedule.validate()?;
    let (w, h, b) = (map.width(), map.height(), map.bins());
    let needed = estimate_memory(w, h, b, 8).tensor_bytes;
    if needed > budget {
        return Err(Error::Capacity { needed, budget });
    }
    let mut data = vec![0u64; b * (h + 1) * (w + 1)];
    let geom = Geom { b, h, w };
    match schedule.kind {
        ScheduleKind::Sequential => sequential(&mut data, src, geom),
        kind => {
            let pool = pool(schedule.threads);
            pool.install(|| match kind {
                ScheduleKind::ScanTransposeScan => scan_transpose_scan(&mut data, src, geom),
                ScheduleKind::CrossWeaveTiled => cross_weave(&mut data, src, geom, schedule.tile),
                ScheduleKind::WavefrontTiled => wavefront(&mut data, src, geom, schedule.tile),
                ScheduleKind::Sequential => unreachable!(),
            });
        }
    }
    Ok(IntegralHistogramTensor {
        bins: b,
        height: h,
        width: w,
        data,
    })
}

/// Worker pools cached per thread count.
fn pool(threads: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    pools
        .entry(threads)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .thread_name(move |i| format!("ih-{threads}-{i}"))
                    .build()
                    .expect("thread pool construction"),
            )
        })
        .clone()
}

#[derive(Clone, Copy)]
struct Geom {
    b: usize,
    h: usize,
    w: usize,
}

impl Geom {
    #[inline]
    fn stride(self) -> usize {
        self.w + 1
    }

    #[inline]
    fn plane(self) -> usize {
        (self.w + 1) * (self.h + 1)
    }
}

/// Raw tensor pointer shared by tasks that write disjoint regions.
#[derive(Clone, Copy)]
struct SharedMut(*mut u64);

// SAFETY: every task that receives a `SharedMut` writes a region no other
// concurrently running task reads or writes; the schedules below state the
// partition at each use.
unsafe impl Send for SharedMut {}
unsafe impl Sync for SharedMut {}

fn sequential<S: Source>(data: &mut [u64], src: &S, g: Geom) {
    let s = g.stride();
    for (k, plane) in data.chunks_exact_mut(g.plane()).enumerate() {
        for y in 0..g.h {
            let (above, rest) = plane.split_at_mut((y + 1) * s);
            let prev = &above[y * s..];
            let cur = &mut rest[..s];
            let row = y * g.w;
            for x in 0..g.w {
                cur[x + 1] = prev[x + 1] + cur[x] - prev[x] + src.at(k, row + x);
            }
        }
    }
}

/// Inclusive prefix sum of `src` row `y` into the padded row `dst[1..]`.
#[inline]
fn row_prefix<S: Source>(dst: &mut [u64], src: &S, k: usize, y: usize, w: usize) {
    let row = y * w;
    let mut acc = 0u64;
    for x in 0..w {
        acc += src.at(k, row + x);
        dst[x + 1] = acc;
    }
}

const TRANSPOSE_BLOCK: usize = 32;

/// `dst[c][r] = src[r][c]` for a `rows × cols` source.
fn transpose(src: &[u64], dst: &mut [u64], rows: usize, cols: usize) {
    for r0 in (0..rows).step_by(TRANSPOSE_BLOCK) {
        for c0 in (0..cols).step_by(TRANSPOSE_BLOCK) {
            for r in r0..(r0 + TRANSPOSE_BLOCK).min(rows) {
                for c in c0..(c0 + TRANSPOSE_BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

fn scan_transpose_scan<S: Source>(data: &mut [u64], src: &S, g: Geom) {
    let s = g.stride();
    let (rows, cols) = (g.h + 1, g.w + 1);
    data.par_chunks_mut(g.plane()).enumerate().for_each(|(k, plane)| {
        // horizontal scan, one task per row
        plane[s..]
            .par_chunks_mut(s)
            .enumerate()
            .for_each(|(y, row)| row_prefix(row, src, k, y, g.w));
        let mut t = vec![0u64; plane.len()];
        transpose(plane, &mut t, rows, cols);
        // rows of the transpose are image columns; column 0 stays zero
        t.par_chunks_mut(rows).for_each(|col| {
            for i in 1..rows {
                col[i] += col[i - 1];
            }
        });
        transpose(&t, plane, cols, rows);
    });
}

fn cross_weave<S: Source>(data: &mut [u64], src: &S, g: Geom, tile: usize) {
    let s = g.stride();
    let strips_y = g.h.div_ceil(tile);
    let strips_x = g.w.div_ceil(tile);

    // Horizontal pass: each (bin, row strip) task walks its tiles left to
    // right; the running row sums are the carry between tiles.
    data.par_chunks_mut(g.plane()).enumerate().for_each(|(k, plane)| {
        plane[s..].par_chunks_mut(tile * s).enumerate().for_each(|(sy, strip)| {
            let rows = strip.len() / s;
            let mut carry = vec![0u64; rows];
            for tx in 0..strips_x {
                let x0 = tx * tile;
                let x1 = (x0 + tile).min(g.w);
                for (r, acc) in carry.iter_mut().enumerate() {
                    let row = &mut strip[r * s..(r + 1) * s];
                    let base = (sy * tile + r) * g.w;
                    for x in x0..x1 {
                        *acc += src.at(k, base + x);
                        row[x + 1] = *acc;
                    }
                }
            }
        });
    });

    // Vertical pass: each (bin, column strip) task walks its tiles top to
    // bottom, accumulating the row above into each row.
    let ptr = SharedMut(data.as_mut_ptr());
    (0..g.b * strips_x).into_par_iter().for_each(|task| {
        let (k, tx) = (task / strips_x, task % strips_x);
        let x0 = tx * tile + 1;
        let x1 = (x0 + tile).min(g.w + 1);
        let base = k * g.plane();
        for ty in 0..strips_y {
            let y0 = ty * tile + 1;
            let y1 = (y0 + tile).min(g.h + 1);
            for y in y0..y1 {
                // SAFETY: this task owns columns [x0, x1) of plane k; no
                // other task touches them during the vertical pass.
                unsafe {
                    let p = ptr;
                    let cur = p.0.add(base + y * s);
                    let prev = p.0.add(base + (y - 1) * s);
                    for x in x0..x1 {
                        *cur.add(x) += *prev.add(x);
                    }
                }
            }
        }
    });
}

fn wavefront<S: Source>(data: &mut [u64], src: &S, g: Geom, tile: usize) {
    let s = g.stride();
    let tiles_y = g.h.div_ceil(tile);
    let tiles_x = g.w.div_ceil(tile);
    // Row prefix at the right edge of the last finished tile, per bin.
    let mut boundary = vec![0u64; g.b * g.h];
    let bnd = SharedMut(boundary.as_mut_ptr());
    let ptr = SharedMut(data.as_mut_ptr());

    for d in 0..tiles_x + tiles_y - 1 {
        let ty_lo = d.saturating_sub(tiles_x - 1);
        let ty_hi = d.min(tiles_y - 1);
        let span = ty_hi - ty_lo + 1;
        (0..g.b * span).into_par_iter().for_each(|task| {
            let k = task / span;
            let ty = ty_lo + task % span;
            let tx = d - ty;
            let (y0, y1) = (ty * tile, ((ty + 1) * tile).min(g.h));
            let (x0, x1) = (tx * tile, ((tx + 1) * tile).min(g.w));
            let base = k * g.plane();
            // SAFETY: tiles on one anti-diagonal have distinct row ranges
            // and distinct column ranges. Each task writes only its own
            // tile of plane k and boundary rows [y0, y1) of bin k. It reads
            // the padded row y0 above the tile, which belongs to a tile of
            // the previous diagonal (or the zero padding) and is final.
            unsafe {
                let (p, c) = (ptr, bnd);
                for y in y0..y1 {
                    let carry = c.0.add(k * g.h + y);
                    let row = p.0.add(base + (y + 1) * s);
                    let mut acc = *carry;
                    let srow = y * g.w;
                    for x in x0..x1 {
                        acc += src.at(k, srow + x);
                        *row.add(x + 1) = acc;
                    }
                    *carry = acc;
                }
                for y in y0..y1 {
                    let cur = p.0.add(base + (y + 1) * s);
                    let prev = p.0.add(base + y * s);
                    for x in x0 + 1..x1 + 1 {
                        *cur.add(x) += *prev.add(x);
                    }
                }
            }
        });
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleStats {
    pub wavefront_iterations: usize,
    pub tile_count: usize,
    pub scan_efficiency: f64,
}

/// Tile and scan analytics for a `w × h` image.
///
/// `scan_efficiency` is `3(n−1) / (n·log2 n)`, capped at 1 for the short
/// scans where that expression exceeds it.
pub fn schedule_stats(w: usize, h: usize, tile: usize, scan_len: usize) -> ScheduleStats {
    assert!(
        w >= 1 && h >= 1 && tile >= 1 && scan_len >= 1,
        "arguments must be positive"
    );
    let (tx, ty) = (w.div_ceil(tile), h.div_ceil(tile));
    let scan_efficiency = if scan_len == 1 {
        1.0
    } else {
        let n = scan_len as f64;
        (3.0 * (n - 1.0) / (n * n.log2())).min(1.0)
    };
    ScheduleStats {
        wavefront_iterations: tx + ty - 1,
        tile_count: tx * ty,
        scan_efficiency,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryEstimate {
    /// Padded tensor: `b·(h+1)·(w+1)·elem_bytes`.
    pub tensor_bytes: u64,
    /// Unpadded product `b·h·w·elem_bytes`.
    pub raw_bytes: u64,
    /// Set when an argument is zero.
    pub warning: bool,
}

pub fn estimate_memory(w: usize, h: usize, b: usize, elem_bytes: usize) -> MemoryEstimate {
    let (w, h, b, e) = (w as u64, h as u64, b as u64, elem_bytes as u64);
    if w == 0 || h == 0 || b == 0 || e == 0 {
        return MemoryEstimate {
            tensor_bytes: 0,
            raw_bytes: 0,
            warning: true,
        };
    }
    MemoryEstimate {
        tensor_bytes: b.saturating_mul(h + 1).saturating_mul(w + 1).saturating_mul(e),
        raw_bytes: b.saturating_mul(h).saturating_mul(w).saturating_mul(e),
        warning: false,
    }
}

/// Direct per-pixel count over `r`; the reference for region queries.
pub fn brute_force_histogram(map: &BinMap, r: Rect) -> Result<Vec<u64>> {
    r.check_inside(map.width(), map.height())?;
    let mut out = vec![0; map.bins()];
    for y in r.y as usize..r.bottom() as usize {
        for x in r.x as usize..r.right() as usize {
            out[map.get(x, y)] += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(w: usize, h: usize, b: usize, v: &[u16]) -> BinMap {
        BinMap::new(w, h, b, v.to_vec()).unwrap()
    }

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
    fn two_by_two_example() {
        let t = build(&map(2, 2, 2, &[0, 1, 1, 0]), &ScanSchedule::sequential()).unwrap();
        assert_eq!(t.get(0, 2, 2), 2);
        assert_eq!(t.get(1, 2, 2), 2);
        assert_eq!(t.get(0, 1, 1), 1);
        assert_eq!(t.get(1, 1, 1), 0);
    }

    #[test]
    fn single_pixel_example() {
        let t = build(&map(1, 1, 8, &[5]), &ScanSchedule::sequential()).unwrap();
        for k in 0..8 {
            for y in 0..2 {
                for x in 0..2 {
                    let want = u64::from(k == 5 && y == 1 && x == 1);
                    assert_eq!(t.get(k, y, x), want);
                }
            }
        }
    }

    #[test]
    fn region_queries_small() {
        let m = map(3, 2, 3, &[0, 1, 2, 2, 2, 1]);
        let t = build(&m, &ScanSchedule::sequential()).unwrap();
        assert_eq!(t.region_histogram(Rect::new(0, 0, 3, 2)).unwrap(), vec![1, 2, 3]);
        assert_eq!(t.region_histogram(Rect::new(1, 1, 1, 1)).unwrap(), vec![0, 0, 1]);
        assert_eq!(t.region_histogram(Rect::new(2, 0, 1, 2)).unwrap(), vec![0, 1, 1]);
        assert!(matches!(
            t.region_histogram(Rect::new(2, 0, 2, 2)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn schedules_agree_on_ragged_sizes() {
        for (w, h, tile) in [(1, 1, 4), (7, 5, 4), (33, 17, 8), (40, 64, 32), (65, 3, 64)] {
            let m = lcg_map(w, h, 5, (w * 131 + h) as u64);
            let want = build(&m, &ScanSchedule::sequential()).unwrap();
            for kind in ScheduleKind::ALL {
                for threads in [1, 3] {
                    let got = build(&m, &ScanSchedule::new(kind, tile, threads)).unwrap();
                    assert_eq!(got, want, "{kind} tile {tile} threads {threads} on {w}x{h}");
                }
            }
        }
    }

    #[test]
    fn weighted_build_scales_counts() {
        let m = lcg_map(9, 6, 4, 3);
        let ones = vec![1u64 << 16; 54];
        let plain = build(&m, &ScanSchedule::sequential()).unwrap();
        for kind in ScheduleKind::ALL {
            let t = build_weighted(&m, &ones, &ScanSchedule::new(kind, 4, 2)).unwrap();
            assert!(t.data().iter().zip(plain.data()).all(|(&a, &b)| a == b << 16));
        }
        let zeros = vec![0u64; 54];
        let t = build_weighted(&m, &zeros, &ScanSchedule::sequential()).unwrap();
        assert!(t.data().iter().all(|&v| v == 0));
        assert!(build_weighted(&m, &zeros[1..], &ScanSchedule::sequential()).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let m = lcg_map(10, 10, 4, 1);
        let err = build_with_budget(&m, &ScanSchedule::sequential(), 100).unwrap_err();
        assert!(matches!(
            err,
            Error::Capacity {
                needed: 3872,
                budget: 100
            }
        ));
        assert!(build(&m, &ScanSchedule::new(ScheduleKind::WavefrontTiled, 4, 0)).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = schedule_stats(512, 512, 32, 1024);
        assert_eq!((s.wavefront_iterations, s.tile_count), (31, 256));
        assert!((s.scan_efficiency - 0.29970703125).abs() < 1e-12);
        let one = schedule_stats(64, 64, 64, 1);
        assert_eq!((one.wavefront_iterations, one.tile_count), (1, 1));
        assert_eq!(one.scan_efficiency, 1.0);
        assert_eq!(schedule_stats(33, 1, 32, 8).tile_count, 2);
    }

    #[test]
    fn memory_examples() {
        assert_eq!(estimate_memory(2048, 2048, 64, 1).raw_bytes, 256 << 20);
        assert_eq!(estimate_memory(512, 512, 32, 8).raw_bytes, 64 << 20);
        assert_eq!(estimate_memory(512, 512, 32, 8).tensor_bytes, 32 * 513 * 513 * 8);
        let z = estimate_memory(5, 5, 0, 8);
        assert_eq!((z.tensor_bytes, z.warning), (0, true));
    }

    #[test]
    fn dump_round_trip() {
        let t = build(&lcg_map(5, 4, 3, 9), &ScanSchedule::sequential()).unwrap();
        let bytes = t.to_dump_bytes();
        assert_eq!(&bytes[..4], b"IHT1");
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &8u32.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 3 * 5 * 6 * 8);
        assert_eq!(IntegralHistogramTensor::from_dump_bytes(&bytes).unwrap(), t);
        assert!(matches!(
            IntegralHistogramTensor::from_dump_bytes(&bytes[..40]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn schedule_names_parse() {
        for kind in ScheduleKind::ALL {
            assert_eq!(kind.name().parse::<ScheduleKind>().unwrap(), kind);
        }
        assert!("bogus".parse::<ScheduleKind>().is_err());
    }

    proptest! {
        #[test]
        fn tensor_invariants(w in 1usize..20, h in 1usize..20, b in 1usize..6, seed in any::<u64>()) {
            let m = lcg_map(w, h, b, seed);
            let t = build(&m, &ScanSchedule::new(ScheduleKind::WavefrontTiled, 4, 2)).unwrap();
            for y in 0..=h {
                for x in 0..=w {
                    let total: u64 = (0..b).map(|k| t.get(k, y, x)).sum();
                    prop_assert_eq!(total, (y * x) as u64);
                    for k in 0..b {
                        if x > 0 { prop_assert!(t.get(k, y, x) >= t.get(k, y, x - 1)); }
                        if y > 0 { prop_assert!(t.get(k, y, x) >= t.get(k, y - 1, x)); }
                    }
                }
            }
        }

        #[test]
        fn region_matches_counting(w in 1usize..24, h in 1usize..24, seed in any::<u64>(),
                                   a in any::<(u16, u16, u16, u16)>()) {
            let m = lcg_map(w, h, 7, seed);
            let t = build(&m, &ScanSchedule::new(ScheduleKind::CrossWeaveTiled, 8, 2)).unwrap();
            let x0 = usize::from(a.0) % w;
            let y0 = usize::from(a.1) % h;
            let r = Rect::new(x0 as isize, y0 as isize, 1 + usize::from(a.2) % (w - x0), 1 + usize::from(a.3) % (h - y0));
            let got = t.region_histogram(r).unwrap();
            prop_assert_eq!(got.iter().sum::<u64>(), r.area() as u64);
            prop_assert_eq!(got, brute_force_histogram(&m, r).unwrap());
        }
    }
}
