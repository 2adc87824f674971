use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spct::image::{quantize, save_color, save_gray, ColorImage, GrayImage, Rect};
use spct::integral::{build, IntegralHistogramTensor, ScanSchedule};

fn spct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spct"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn noise(w: usize, h: usize, seed: u32) -> GrayImage {
    let mut s = seed.wrapping_mul(2_654_435_761).max(1);
    GrayImage::from_fn(w, h, |_, _| {
        s ^= s << 13;
        s ^= s >> 17;
        s ^= s << 5;
        (s >> 24) as u8
    })
}

#[test]
fn integral_dump_matches_library_build() {
    let dir = tempfile::tempdir().unwrap();
    let img = noise(37, 23, 1);
    let (input, out) = (dir.path().join("in.pgm"), dir.path().join("ih.bin"));
    save_gray(&input, &img).unwrap();
    let o = spct(&[
        "integral",
        "--in",
        p(&input),
        "--bins",
        "8",
        "--schedule",
        "wf-tis",
        "--tile",
        "8",
        "--threads",
        "3",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(value(&stdout(&o), "bins"), "8");
    let dumped = IntegralHistogramTensor::read_dump(&out).unwrap();
    let expected = build(&quantize(&img, 8, 0.0, 256.0).unwrap(), &ScanSchedule::sequential()).unwrap();
    assert_eq!(dumped, expected);
}

#[test]
fn exit_codes_separate_io_from_contract_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.pgm");
    let out = dir.path().join("o.bin");
    let o = spct(&["integral", "--in", p(&missing), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));

    let truncated = dir.path().join("short.pgm");
    std::fs::write(&truncated, b"P5\n4 4\n255\n\x01\x02\x03").unwrap();
    assert_eq!(
        spct(&["integral", "--in", p(&truncated), "--out", p(&out)])
            .status
            .code(),
        Some(3)
    );

    let good = dir.path().join("good.pgm");
    save_gray(&good, &noise(8, 8, 2)).unwrap();
    assert_eq!(
        spct(&["integral", "--in", p(&good), "--bins", "0", "--out", p(&out)])
            .status
            .code(),
        Some(2)
    );
    let o = spct(&["integral", "--in", p(&good), "--budget-mb", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    assert_eq!(
        spct(&["integral", "--in", p(&good), "--schedule", "zigzag", "--out", p(&out)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bench_reports_every_schedule() {
    let o = spct(&[
        "bench-ih",
        "--size",
        "64x48",
        "--bins",
        "8",
        "--tile",
        "16",
        "--threads",
        "2",
        "--repeat",
        "1",
    ]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    for k in ["seq_ms", "cw-sts_ms", "cw-tis_ms", "wf-tis_ms"] {
        value(&text, k).parse::<f64>().unwrap();
    }
    assert_eq!(value(&text, "identical"), "true");
}

#[test]
fn swlh_feature_and_phog_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.pgm");
    save_gray(&input, &noise(40, 32, 3)).unwrap();
    for method in ["exact", "cake", "brute"] {
        let out = dir.path().join(format!("{method}.pgm"));
        let o = spct(&[
            "swlh",
            "--in",
            p(&input),
            "--bins",
            "8",
            "--kernel",
            "9x7",
            "--method",
            method,
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{o:?}");
    }
    let exact = std::fs::read(dir.path().join("exact.pgm")).unwrap();
    assert_eq!(exact, std::fs::read(dir.path().join("brute.pgm")).unwrap());

    let out = dir.path().join("harris.pgm");
    assert!(
        spct(&["feature", "--in", p(&input), "--kind", "harris", "--out", p(&out)])
            .status
            .success()
    );
    let img = spct::image::load_gray(&out).unwrap();
    assert_eq!((img.width(), img.height()), (40, 32));

    let out = dir.path().join("phog.txt");
    let o = spct(&[
        "phog",
        "--in",
        p(&input),
        "--levels",
        "1",
        "--bins",
        "4",
        "--chip",
        "16x16",
        "--stride",
        "8",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    // x in {0, 8, 16, 24}, y in {0, 8, 16}
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().all(|l| l.split(' ').count() == 20));
    let o = spct(&[
        "phog",
        "--in",
        p(&input),
        "--levels",
        "2",
        "--chip",
        "10x10",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn likelihood_then_score_finds_the_template() {
    let dir = tempfile::tempdir().unwrap();
    let search = noise(48, 40, 4);
    let template = search.crop(Rect::new(20, 14, 10, 10)).unwrap();
    let (s, t) = (dir.path().join("s.pgm"), dir.path().join("t.pgm"));
    save_gray(&s, &search).unwrap();
    save_gray(&t, &template).unwrap();
    for channel in ["ncc", "hist", "phog", "color"] {
        let out = dir.path().join(format!("{channel}.pgm"));
        let o = spct(&[
            "likelihood",
            "--search",
            p(&s),
            "--template",
            p(&t),
            "--channel",
            channel,
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{channel}: {o:?}");
    }
    let o = spct(&["score", "--map", p(&dir.path().join("ncc.pgm")), "--gt", "20,14,10,10"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert_eq!(value(&text, "score"), "1");
    assert_eq!(value(&text, "hit"), "true");
}

/// Bright 8x8 square moving right over static noise.
fn motion_sequence(dir: &Path, n: usize) -> (PathBuf, String) {
    let bg = noise(64, 40, 5);
    let mut list = String::new();
    let mut gt = String::new();
    for t in 0..n {
        let r = Rect::new(4 + 3 * t as isize, 16, 8, 8);
        let img = GrayImage::from_fn(64, 40, |x, y| {
            if r.contains(x as isize, y as isize) {
                255
            } else {
                bg.get(x, y) / 4
            }
        });
        let name = format!("f{t:03}.pgm");
        save_gray(dir.join(&name), &img).unwrap();
        list.push_str(&name);
        list.push('\n');
        gt.push_str(&format!("{r}\n"));
    }
    let seq = dir.join("seq.txt");
    std::fs::write(&seq, list).unwrap();
    (seq, gt)
}

#[test]
fn detect_then_eval_det() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, gt) = motion_sequence(dir.path(), 13);
    let gt_path = dir.path().join("gt.txt");
    std::fs::write(&gt_path, gt).unwrap();
    let masks = dir.path().join("masks");
    let o = spct(&[
        "detect",
        "--seq",
        p(&seq),
        "--method",
        "median-ih",
        "--half-window",
        "3",
        "--bins",
        "32",
        "--out-dir",
        p(&masks),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(std::fs::read_dir(&masks).unwrap().count(), 7);
    assert!(masks.join("mask_00003.pgm").exists());

    let csv = dir.path().join("det.csv");
    let o = spct(&["eval-det", "--masks", p(&masks), "--gt", p(&gt_path), "--csv", p(&csv)]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert_eq!(value(&text, "object_precision").parse::<f64>().unwrap(), 1.0, "{text}");
    assert_eq!(value(&text, "object_recall").parse::<f64>().unwrap(), 1.0, "{text}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 8);

    // every pixel is above the height limit, so nothing survives
    let depth = dir.path().join("depth.txt");
    let mut d = String::from("64 40\n");
    for _ in 0..40 {
        d.push_str(&vec!["30"; 64].join(" "));
        d.push('\n');
    }
    std::fs::write(&depth, d).unwrap();
    let filtered = dir.path().join("filtered");
    let o = spct(&[
        "detect",
        "--seq",
        p(&seq),
        "--half-window",
        "3",
        "--depth",
        p(&depth),
        "--out-dir",
        p(&filtered),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).lines().all(|l| l.contains("foreground=0")));
}

#[test]
fn flux_detection_with_contour_refinement_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, _) = motion_sequence(dir.path(), 5);
    let masks = dir.path().join("masks");
    let o = spct(&[
        "detect",
        "--seq",
        p(&seq),
        "--method",
        "flux",
        "--half-window",
        "1",
        "--gac",
        "--gac-iters",
        "20",
        "--out-dir",
        p(&masks),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).lines().count(), 3);
}

fn color_sequence(dir: &Path, n: usize) -> (PathBuf, String) {
    let bg = noise(96, 48, 6);
    let mut list = String::new();
    let mut gt = String::new();
    for t in 0..n {
        let r = Rect::new(10 + 2 * t as isize, 18, 12, 12);
        let img = ColorImage::from_fn(96, 48, |x, y| {
            if r.contains(x as isize, y as isize) {
                let v = ((x as isize - r.x) * 17 + (y as isize - r.y) * 31) as u8 % 64;
                [230, 150 + v, 60 + v / 2]
            } else {
                let v = bg.get(x, y) / 7;
                [60 + v, 90 + v, 120 + v]
            }
        });
        let name = format!("c{t:03}.ppm");
        save_color(dir.join(&name), &img).unwrap();
        list.push_str(&name);
        list.push('\n');
        gt.push_str(&format!("{r}\n"));
    }
    let seq = dir.join("seq.txt");
    std::fs::write(&seq, list).unwrap();
    (seq, gt)
}

#[test]
fn track_and_eval_track() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, gt) = color_sequence(dir.path(), 12);
    let cfg = dir.path().join("spct.cfg");
    std::fs::write(&cfg, "# tracker settings\nsearch_factor=3\nweights.ncc=0.25\n").unwrap();
    let out = dir.path().join("tracklet.txt");
    for buffers in ["1", "2"] {
        let o = spct(&[
            "track",
            "--seq",
            p(&seq),
            "--init",
            "10,18,12,12",
            "--config",
            p(&cfg),
            "--buffers",
            buffers,
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{o:?}");
        assert_eq!(value(&stdout(&o), "frames"), "12");
    }
    let tracklet = spct::tracker::Tracklet::parse(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(tracklet.records().len(), 12);
    let last = tracklet.last().unwrap();
    assert!(
        (last.center.0 - 38.0).abs() <= 1.0 && (last.center.1 - 24.0).abs() <= 1.0,
        "{last}"
    );

    let gt_path = dir.path().join("gt.txt");
    std::fs::write(&gt_path, gt).unwrap();
    let csv = dir.path().join("track.csv");
    let o = spct(&["eval-track", "--seq", p(&seq), "--gt", p(&gt_path), "--csv", p(&csv)]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert_eq!(value(&text, "robustness"), "0");
    assert!(value(&text, "accuracy").parse::<f64>().unwrap() > 0.8, "{text}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 13);

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "weights.ncc=-1\n").unwrap();
    let o = spct(&[
        "track",
        "--seq",
        p(&seq),
        "--init",
        "10,18,12,12",
        "--config",
        p(&bad),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = spct(&[
        "track",
        "--seq",
        p(&dir.path().join("nope.txt")),
        "--init",
        "10,18,12,12",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_frame_inside_the_pipeline_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, _) = color_sequence(dir.path(), 4);
    std::fs::remove_file(dir.path().join("c002.ppm")).unwrap();
    let out = dir.path().join("t.txt");
    let o = spct(&["track", "--seq", p(&seq), "--init", "10,18,12,12", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("frame 2"));
}
