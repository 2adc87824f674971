use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spct::eval::{eval_reset, FrameStatus, GroundTruth};
use spct::image::{ColorImage, Rect};
use spct::tracker::{track_sequence, Frame, SessionTracker, Source, TrackerConfig};

/// Orange textured target over bluish noise; `pos(t)` gives its top-left
/// corner, `None` hides it.
fn sequence(n: usize, pos: impl Fn(usize) -> Option<(isize, isize)>) -> (Vec<Frame>, Vec<GroundTruth>) {
    let (w, h) = (160, 80);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let bg: Vec<[u8; 3]> = (0..w * h)
        .map(|_| {
            let v: u8 = rng.gen_range(0..40);
            [60 + v, 90 + v, 120 + v]
        })
        .collect();
    let mut frames = Vec::new();
    let mut gt = Vec::new();
    for t in 0..n {
        let target = pos(t).map(|(x, y)| Rect::new(x, y, 12, 12));
        let color = ColorImage::from_fn(w, h, |x, y| match target {
            Some(r) if r.contains(x as isize, y as isize) => {
                let v = ((x as isize - r.x) * 17 + (y as isize - r.y) * 31) as u8 % 64;
                [230, 150 + v, 60 + v / 2]
            }
            _ => bg[y * w + x],
        });
        frames.push(Frame::from_color(color));
        gt.push(target.map_or(GroundTruth::Occluded, GroundTruth::Box));
    }
    (frames, gt)
}

#[test]
fn occluded_frames_stay_on_the_hidden_target() {
    let path = |t: usize| (10 + 2 * t as isize, 34);
    let (frames, _) = sequence(36, |t| (!(20..25).contains(&t)).then(|| path(t)));
    let cfg = TrackerConfig::default();
    let tracklet = track_sequence(&frames, Rect::new(10, 34, 12, 12), &cfg).unwrap();
    for r in tracklet.records().iter().filter(|r| (20..25).contains(&r.frame)) {
        assert_eq!(r.source, Source::FusedKf, "{r}");
        assert!(r.conf < cfg.conf_tau, "{r}");
        let (x, y) = path(r.frame);
        assert!(
            r.bbox.intersection_area(&Rect::new(x, y, 12, 12)) > 0,
            "frame {} lost the target: {r}",
            r.frame
        );
    }
    let last = tracklet.last().unwrap();
    assert_eq!(last.source, Source::Features);
    assert!(
        (last.center.0 - 86.0).abs() <= 1.0 && (last.center.1 - 40.0).abs() <= 1.0,
        "{last}"
    );
}

#[test]
fn teleport_is_a_failure_then_a_reset() {
    let (frames, gt) = sequence(20, |t| Some(if t < 8 { (20 + t as isize, 30) } else { (120, 10) }));
    let mut tracker = SessionTracker::new(&frames, &TrackerConfig::default());
    let rep = eval_reset(&mut tracker, &gt).unwrap();
    assert_eq!(rep.per_frame[8], FrameStatus::Failure);
    assert!(rep.per_frame[9..14].iter().all(|s| *s == FrameStatus::Skipped));
    assert_eq!(rep.per_frame[14], FrameStatus::Init);
    assert_eq!(rep.robustness, 1);
    assert!(tracker.records().iter().filter(|r| r.source == Source::Reinit).count() == 2);
}

#[test]
fn tracking_is_independent_of_thread_count() {
    let (frames, _) = sequence(12, |t| Some((10 + 2 * t as isize, 34)));
    let init = Rect::new(10, 34, 12, 12);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| track_sequence(&frames, init, &TrackerConfig::default()).unwrap())
    };
    let one = run(1);
    assert_eq!(run(4), one);
}
