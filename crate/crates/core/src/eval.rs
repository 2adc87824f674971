//! Tracking and detection evaluation.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::Rect;
use crate::motion::MotionMask;

/// Intersection over union; 0 for empty rectangles.
pub fn overlap(a: Rect, b: Rect) -> f64 {
    let inter = a.intersection_area(&b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroundTruth {
    Box(Rect),
    Occluded,
}

/// One line per frame: `x,y,w,h` or `occluded`.
pub fn parse_track_gt(text: &str) -> Result<Vec<GroundTruth>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let l = l.trim();
            if l.eq_ignore_ascii_case("occluded") {
                Ok(GroundTruth::Occluded)
            } else {
                Rect::parse(l)
                    .map(GroundTruth::Box)
                    .map_err(|e| Error::Format(e.to_string()))
            }
        })
        .collect()
}

/// One line per frame of `;`-separated `x,y,w,h` boxes; an empty line or
/// `none` means no objects.
pub fn parse_det_gt(text: &str) -> Result<Vec<Vec<Rect>>> {
    text.lines()
        .map(|l| {
            let l = l.trim();
            if l.is_empty() || l.eq_ignore_ascii_case("none") {
                return Ok(Vec::new());
            }
            l.split(';')
                .map(|b| Rect::parse(b).map_err(|e| Error::Format(e.to_string())))
                .collect()
        })
        .collect()
}

/// A tracker that the reset harness can (re)start from ground truth.
pub trait ResettableTracker {
    fn init(&mut self, frame: usize, rect: Rect) -> Result<()>;
    fn track(&mut self, frame: usize) -> Result<Rect>;
}

pub const SKIP_AFTER_FAILURE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrameStatus {
    /// Started from ground truth; scores overlap 1.
    Init,
    Tracked(f64),
    Failure,
    Skipped,
    Occluded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackEvalReport {
    /// Mean overlap over init and tracked frames.
    pub accuracy: f64,
    /// Failure count.
    pub robustness: usize,
    /// Failures per frame.
    pub mfr: f64,
    pub frames: usize,
    pub frames_used: usize,
    pub per_frame: Vec<FrameStatus>,
}

impl TrackEvalReport {
    pub fn overlaps(&self) -> Vec<Option<f64>> {
        self.per_frame
            .iter()
            .map(|s| match s {
                FrameStatus::Init => Some(1.0),
                FrameStatus::Tracked(o) => Some(*o),
                FrameStatus::Failure => Some(0.0),
                FrameStatus::Skipped | FrameStatus::Occluded => None,
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        format!(
            "frames={}\nframes_used={}\naccuracy={:.6}\nrobustness={}\nmfr={:.6}\n",
            self.frames, self.frames_used, self.accuracy, self.robustness, self.mfr
        )
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("frame,status,overlap\n");
        for (i, (st, ov)) in self.per_frame.iter().zip(self.overlaps()).enumerate() {
            let name = match st {
                FrameStatus::Init => "init",
                FrameStatus::Tracked(_) => "tracked",
                FrameStatus::Failure => "failure",
                FrameStatus::Skipped => "skipped",
                FrameStatus::Occluded => "occluded",
            };
            let ov = ov.map_or(String::new(), |o| format!("{o:.6}"));
            let _ = writeln!(s, "{i},{name},{ov}");
        }
        s
    }
}

/// Run `tracker` over all frames of `gt`. A zero-overlap frame is a
/// failure: the next five frames are skipped and the tracker restarts from
/// ground truth at the first visible frame after them. Occluded frames are
/// tracked but not scored.
pub fn eval_reset<T: ResettableTracker>(tracker: &mut T, gt: &[GroundTruth]) -> Result<TrackEvalReport> {
    let n = gt.len();
    let mut status = Vec::with_capacity(n);
    let mut failures = 0;
    let mut need_init = true;
    let mut i = 0;
    let stage = |stage: &'static str, frame: usize| move |e: Error| Error::at_stage(stage, frame, e);
    while i < n {
        if need_init {
            match gt[i] {
                GroundTruth::Occluded => status.push(FrameStatus::Occluded),
                GroundTruth::Box(r) => {
                    tracker.init(i, r).map_err(stage("init", i))?;
                    status.push(FrameStatus::Init);
                    need_init = false;
                }
            }
            i += 1;
            continue;
        }
        let out = tracker.track(i).map_err(stage("track", i))?;
        match gt[i] {
            GroundTruth::Occluded => status.push(FrameStatus::Occluded),
            GroundTruth::Box(g) => {
                let ov = overlap(out, g);
                if ov > 0.0 {
                    status.push(FrameStatus::Tracked(ov));
                } else {
                    failures += 1;
                    status.push(FrameStatus::Failure);
                    let skip = SKIP_AFTER_FAILURE.min(n - i - 1);
                    status.extend(std::iter::repeat_n(FrameStatus::Skipped, skip));
                    i += skip;
                    need_init = true;
                }
            }
        }
        i += 1;
    }
    let used: Vec<f64> = status
        .iter()
        .filter_map(|s| match s {
            FrameStatus::Init => Some(1.0),
            FrameStatus::Tracked(o) => Some(*o),
            _ => None,
        })
        .collect();
    Ok(TrackEvalReport {
        accuracy: if used.is_empty() {
            0.0
        } else {
            used.iter().sum::<f64>() / used.len() as f64
        },
        robustness: failures,
        mfr: if n == 0 { 0.0 } else { failures as f64 / n as f64 },
        frames: n,
        frames_used: used.len(),
        per_frame: status,
    })
}

/// Precision, recall and their harmonic mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Ground truth was empty, so recall is 1 by convention.
    pub empty_gt: bool,
}

impl Prf {
    /// From true positives, false positives and false negatives. No
    /// detections give precision 0, or 1 when ground truth is empty too.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Prf {
        let precision = if tp + fp == 0 {
            if tp + fn_ > 0 {
                0.0
            } else {
                1.0
            }
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let empty_gt = tp + fn_ == 0;
        let recall = if empty_gt { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let denom = 2 * tp + fp + fn_;
        let f = if denom == 0 {
            1.0
        } else {
            (2 * tp) as f64 / denom as f64
        };
        Prf {
            precision,
            recall,
            f,
            empty_gt,
        }
    }

    /// From matched/total counts on each side, for many-to-many matching.
    pub fn from_matches(matched_det: usize, det: usize, matched_gt: usize, gt: usize) -> Prf {
        let precision = if det == 0 {
            if gt > 0 {
                0.0
            } else {
                1.0
            }
        } else {
            matched_det as f64 / det as f64
        };
        let empty_gt = gt == 0;
        let recall = if empty_gt { 1.0 } else { matched_gt as f64 / gt as f64 };
        Prf {
            precision,
            recall,
            f: harmonic(precision, recall),
            empty_gt,
        }
    }

    fn mean(items: &[Prf]) -> Prf {
        if items.is_empty() {
            return Prf {
                precision: 0.0,
                recall: 0.0,
                f: 0.0,
                empty_gt: false,
            };
        }
        let n = items.len() as f64;
        Prf {
            precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
            recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
            f: items.iter().map(|p| p.f).sum::<f64>() / n,
            empty_gt: items.iter().any(|p| p.empty_gt),
        }
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Pixel counts of one mask against the union of ground-truth boxes.
pub fn pixel_counts(mask: &MotionMask, gt: &[Rect]) -> (u64, u64, u64) {
    let (w, h) = (mask.width(), mask.height());
    let mut inside = vec![false; w * h];
    for r in gt.iter().filter_map(|r| r.clip(w, h)) {
        for y in r.y as usize..r.bottom() as usize {
            inside[y * w + r.x as usize..y * w + r.right() as usize].fill(true);
        }
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&m, &g) in mask.data().iter().zip(&inside) {
        match (m != 0, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

/// Bidirectional box matching: a detection and a ground-truth box match when
/// their intersection covers at least `tau` of either one. Returns
/// `(matched detections, matched ground truths)`.
pub fn match_objects(det: &[Rect], gt: &[Rect], tau: f64) -> (usize, usize) {
    let mut gt_hit = vec![false; gt.len()];
    let mut det_hit = 0;
    for d in det {
        let mut hit = false;
        for (g, flag) in gt.iter().zip(gt_hit.iter_mut()) {
            let inter = d.intersection_area(g) as f64;
            if inter > 0.0 && (inter / d.area() as f64 >= tau || inter / g.area() as f64 >= tau) {
                hit = true;
                *flag = true;
            }
        }
        det_hit += usize::from(hit);
    }
    (det_hit, gt_hit.iter().filter(|&&h| h).count())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetEvalReport {
    pub pixel: Prf,
    pub object: Prf,
    pub per_frame: Vec<(Prf, Prf)>,
}

impl DetEvalReport {
    pub fn summary(&self) -> String {
        let (p, o) = (&self.pixel, &self.object);
        format!(
            "frames={}\npixel_precision={:.6}\npixel_recall={:.6}\npixel_f={:.6}\nobject_precision={:.6}\nobject_recall={:.6}\nobject_f={:.6}\nzero_gt={}\n",
            self.per_frame.len(),
            p.precision,
            p.recall,
            p.f,
            o.precision,
            o.recall,
            o.f,
            p.empty_gt || o.empty_gt
        )
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("frame,pixel_p,pixel_r,pixel_f,object_p,object_r,object_f\n");
        for (i, (p, o)) in self.per_frame.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.precision, p.recall, p.f, o.precision, o.recall, o.f
            );
        }
        s
    }
}

/// Per-frame pixel and object scores, averaged over frames.
pub fn eval_detection(masks: &[MotionMask], gt: &[Vec<Rect>], tau: f64) -> Result<DetEvalReport> {
    if masks.len() != gt.len() {
        return Err(Error::mismatch(format!(
            "{} masks for {} ground-truth frames",
            masks.len(),
            gt.len()
        )));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("match threshold {tau} outside (0, 1]")));
    }
    let per_frame: Vec<(Prf, Prf)> = masks
        .iter()
        .zip(gt)
        .map(|(m, g)| {
            let (tp, fp, fn_) = pixel_counts(m, g);
            let boxes = m.boxes();
            let (md, mg) = match_objects(&boxes, g, tau);
            (
                Prf::from_counts(tp, fp, fn_),
                Prf::from_matches(md, boxes.len(), mg, g.len()),
            )
        })
        .collect();
    let pixels: Vec<Prf> = per_frame.iter().map(|p| p.0).collect();
    let objects: Vec<Prf> = per_frame.iter().map(|p| p.1).collect();
    Ok(DetEvalReport {
        pixel: Prf::mean(&pixels),
        object: Prf::mean(&objects),
        per_frame,
    })
}
