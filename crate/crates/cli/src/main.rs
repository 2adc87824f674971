use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::{debug, info};

use spct::eval::{eval_detection, eval_reset, parse_det_gt, parse_track_gt};
use spct::features::{feature_map, FeatureKind, PhogIndex};
use spct::image::{load_color, load_gray, load_image, quantize, save_gray, BinMap, ColorImage, GrayImage, Rect};
use spct::integral::{build, build_with_budget, ScanSchedule, ScheduleKind, DEFAULT_BUDGET_BYTES};
use spct::likelihood::{
    color_bin, color_ratio_map, embed_centered, hist_distance_map, ncc_map_gray, phog_map, score_map, Channel,
    ColorModel, LikelihoodMap, COLOR_BINS,
};
use spct::motion::{
    depth_filter, detect_sequence, edge_indicator, flux_trace, gac_refine, DepthMap, DetectMethod, DetectParams,
    FrameWindow, GacParams, MotionMask, DEFAULT_H_TAU,
};
use spct::pipeline::{read_sequence_list, run_pipeline};
use spct::swih::{swlh_surface, KernelSpec, SwlhMethod};
use spct::tracker::{Frame, SessionTracker, TrackerConfig, TrackingSession};
use spct::{Error, Result};

#[derive(Parser)]
#[command(name = "spct", version, about = "Integral histograms, motion detection and tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an integral histogram tensor and write its binary dump.
    Integral {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[arg(long, default_value = "seq")]
        schedule: ScheduleKind,
        #[arg(long, default_value_t = 32)]
        tile: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Memory budget for the tensor in MiB.
        #[arg(long)]
        budget_mb: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time every scan schedule on one image and check they agree.
    BenchIh {
        /// Image to bin; a random one of `--size` is used when absent.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, default_value = "1024x1024")]
        size: Dims,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[arg(long, default_value_t = 32)]
        tile: usize,
        #[arg(long, default_value_t = 8)]
        threads: usize,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
    },
    /// Sliding-window weighted-histogram matching surface.
    Swlh {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 16)]
        bins: usize,
        #[arg(long, default_value = "31x31")]
        kernel: Dims,
        #[arg(long, value_enum, default_value = "exact")]
        method: SwlhArg,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        /// Template center; defaults to the image center.
        #[arg(long)]
        at: Option<Point>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-pixel feature map, min-max scaled to 8 bits.
    Feature {
        #[arg(long = "in")]
        input: PathBuf,
        /// gradient-magnitude, orientation, beltrami, harris, shi-tomasi,
        /// cumani, shape-index, nci, eigvec-orientation or lbp.
        #[arg(long)]
        kind: FeatureKind,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// PHoG descriptors of every chip position, one per line.
    Phog {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long, default_value_t = 16)]
        bins: usize,
        #[arg(long, default_value = "32x32")]
        chip: Dims,
        /// Step between chip positions.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Likelihood map of a template over a search window.
    ///
    /// Histogram distances become likelihoods as 1 − d/d_max, with
    /// d_max = 2^(1/p) the largest Minkowski distance between two
    /// unit-mass histograms.
    Likelihood {
        #[arg(long)]
        search: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long, value_enum)]
        channel: ChannelArg,
        /// Gray-level bins for the hist channel.
        #[arg(long, default_value_t = 16)]
        bins: usize,
        /// Minkowski order for the hist channel.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long, default_value_t = 8)]
        phog_bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank of the best likelihood peak inside the ground-truth box.
    Score {
        #[arg(long)]
        map: PathBuf,
        /// Box as x,y,w,h.
        #[arg(long)]
        gt: Rect,
    },
    /// Moving-object masks for every frame with a full temporal window.
    Detect {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long, default_value = "median-sort")]
        method: DetectMethod,
        #[arg(long, default_value_t = 8)]
        half_window: usize,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        #[arg(long, default_value_t = 25)]
        tau: u8,
        #[arg(long, default_value_t = 10)]
        min_blob: usize,
        #[arg(long, default_value_t = 50.0)]
        flux_tau: f64,
        /// Height map; pixels above `--h-tau` meters are cleared.
        #[arg(long)]
        depth: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_H_TAU)]
        h_tau: f64,
        /// Refine each mask with an active contour on the flux trace.
        #[arg(long)]
        gac: bool,
        /// Balloon speed of the contour.
        #[arg(long, default_value_t = 0.2)]
        gac_c: f64,
        #[arg(long, default_value_t = 400)]
        gac_iters: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Track one target through a sequence.
    Track {
        #[arg(long)]
        seq: PathBuf,
        /// Initial box as x,y,w,h on the first frame.
        #[arg(long)]
        init: Rect,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Frames decoded ahead of the tracker; 1 disables the decoder thread.
        #[arg(long, default_value_t = 2)]
        buffers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reset-based tracking evaluation against per-frame boxes.
    EvalTrack {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Pixel and object precision/recall of saved masks.
    EvalDet {
        /// Directory of mask PGMs; the last number in each file name is the
        /// frame index.
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SwlhArg {
    Exact,
    Cake,
    Brute,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Ncc,
    Color,
    Hist,
    Phog,
}

/// `WxH`.
#[derive(Clone, Copy, Debug)]
struct Dims(usize, usize);

impl std::str::FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
        Ok(Dims(parse(w)?, parse(h)?))
    }
}

/// `x,y`.
#[derive(Clone, Copy, Debug)]
struct Point(usize, usize);

impl std::str::FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
        Ok(Point(parse(x)?, parse(y)?))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spct: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Integral {
            input,
            bins,
            schedule,
            tile,
            threads,
            budget_mb,
            out,
        } => {
            let img = load_gray(&input)?;
            let map = quantize(&img, bins, 0.0, 256.0)?;
            let sched = ScanSchedule::new(schedule, tile, threads);
            let budget = budget_mb.map_or(DEFAULT_BUDGET_BYTES, |m| m << 20);
            let start = Instant::now();
            let t = build_with_budget(&map, &sched, budget)?;
            let elapsed = start.elapsed();
            t.write_dump(&out)?;
            print!(
                "width={}\nheight={}\nbins={}\nschedule={schedule}\nelapsed_ms={:.3}\n",
                t.width(),
                t.height(),
                t.bins(),
                elapsed.as_secs_f64() * 1e3
            );
            Ok(())
        }
        Command::BenchIh {
            input,
            size,
            bins,
            tile,
            threads,
            repeat,
        } => bench_ih(input.as_deref(), size, bins, tile, threads, repeat),
        Command::Swlh {
            input,
            bins,
            kernel,
            method,
            layers,
            at,
            out,
        } => {
            let img = load_gray(&input)?;
            let map = quantize(&img, bins, 0.0, 256.0)?;
            let spec = KernelSpec::new(kernel.0, kernel.1)?;
            let method = match method {
                SwlhArg::Exact => SwlhMethod::Exact,
                SwlhArg::Cake => SwlhMethod::Cake { layers },
                SwlhArg::Brute => SwlhMethod::Brute,
            };
            let at = at.unwrap_or(Point(img.width() / 2, img.height() / 2));
            let surface = swlh_surface(&map, &spec, method, (at.0, at.1), &ScanSchedule::sequential())?;
            let lmap = LikelihoodMap::new(
                surface.width(),
                surface.height(),
                surface.into_values(),
                Channel::WeightedHistDistance,
            )?;
            save_gray(&out, &lmap.to_gray())
        }
        Command::Feature {
            input,
            kind,
            sigma,
            out,
        } => {
            let img = load_gray(&input)?;
            save_gray(&out, &feature_map(&img, kind, sigma).to_gray_scaled())
        }
        Command::Phog {
            input,
            levels,
            bins,
            chip,
            stride,
            out,
        } => {
            if stride == 0 {
                return Err(Error::InvalidArgument("stride must be positive".into()));
            }
            let img = load_gray(&input)?;
            let index = PhogIndex::from_window(&img, levels, bins)?;
            index.check_chip(chip.0, chip.1)?;
            let mut text = String::new();
            for y in (0..=img.height() - chip.1).step_by(stride) {
                for x in (0..=img.width() - chip.0).step_by(stride) {
                    let d = index.descriptor(x, y, chip.0, chip.1);
                    let line: Vec<String> = d.data().iter().map(|v| format!("{v}")).collect();
                    let _ = writeln!(text, "{}", line.join(" "));
                }
            }
            fs::write(&out, text).map_err(|e| io_error(&out, e))
        }
        Command::Likelihood {
            search,
            template,
            channel,
            bins,
            p,
            levels,
            phog_bins,
            out,
        } => {
            let map = likelihood(&search, &template, channel, bins, p, levels, phog_bins)?;
            save_gray(&out, &map.to_gray())
        }
        Command::Score { map, gt } => {
            let m = LikelihoodMap::from_gray(&load_gray(&map)?, Channel::Fused);
            let s = score_map(&m, gt)?;
            print!("score={}\npeaks={}\nhit={}\n", s.score, s.peaks, s.hit);
            Ok(())
        }
        Command::Detect {
            seq,
            method,
            half_window,
            bins,
            tau,
            min_blob,
            flux_tau,
            depth,
            h_tau,
            gac,
            gac_c,
            gac_iters,
            out_dir,
        } => {
            let params = DetectParams {
                method,
                half_window,
                bins,
                tau,
                min_blob,
                flux_tau,
                ..DetectParams::default()
            };
            let gac = gac.then_some(GacParams {
                c: gac_c,
                iters: gac_iters,
                ..GacParams::default()
            });
            detect(&seq, &params, depth.as_deref(), h_tau, gac, &out_dir)
        }
        Command::Track {
            seq,
            init,
            config,
            buffers,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let paths = read_sequence_list(&seq)?;
            let mut session: Option<TrackingSession> = None;
            let report = run_pipeline(
                &paths,
                buffers,
                |_, p| load_image(p).map(Frame::from_any),
                |i, frame| match session.as_mut() {
                    Some(s) => s.step(&frame, i).map(|_| ()),
                    None => {
                        session = Some(TrackingSession::start(&frame, i, init, &cfg)?);
                        Ok(())
                    }
                },
                |_, ()| Ok(()),
            )?;
            let tracklet = session.map(TrackingSession::into_tracklet).unwrap_or_default();
            fs::write(&out, tracklet.to_text()).map_err(|e| io_error(&out, e))?;
            print!("{}", report.summary());
            Ok(())
        }
        Command::EvalTrack { seq, gt, config, csv } => {
            let cfg = load_config(config.as_deref())?;
            let frames = read_sequence_list(&seq)?
                .iter()
                .map(|p| load_image(p).map(Frame::from_any))
                .collect::<Result<Vec<_>>>()?;
            let gt = parse_track_gt(&read_text(&gt)?)?;
            if gt.len() != frames.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} ground-truth lines for {} frames",
                    gt.len(),
                    frames.len()
                )));
            }
            let mut tracker = SessionTracker::new(&frames, &cfg);
            let report = eval_reset(&mut tracker, &gt)?;
            print!("{}", report.summary());
            if let Some(path) = csv {
                fs::write(&path, report.csv()).map_err(|e| io_error(&path, e))?;
            }
            Ok(())
        }
        Command::EvalDet { masks, gt, tau, csv } => {
            let gt = parse_det_gt(&read_text(&gt)?)?;
            let (frames, loaded) = load_masks(&masks)?;
            let aligned = frames
                .iter()
                .map(|&f| {
                    gt.get(f)
                        .cloned()
                        .ok_or_else(|| Error::DimensionMismatch(format!("no ground truth line for frame {f}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let report = eval_detection(&loaded, &aligned, tau)?;
            print!("{}", report.summary());
            if let Some(path) = csv {
                fs::write(&path, report.csv()).map_err(|e| io_error(&path, e))?;
            }
            Ok(())
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn load_config(path: Option<&Path>) -> Result<TrackerConfig> {
    match path {
        Some(p) => TrackerConfig::parse(&read_text(p)?),
        None => Ok(TrackerConfig::default()),
    }
}

fn bench_ih(input: Option<&Path>, size: Dims, bins: usize, tile: usize, threads: usize, repeat: usize) -> Result<()> {
    let map = match input {
        Some(p) => quantize(&load_gray(p)?, bins, 0.0, 256.0)?,
        None => {
            // xorshift is plenty for benchmark input
            let mut s = 0x2545_f491_4f6c_dd1du64;
            let data = (0..size.0 * size.1)
                .map(|_| {
                    s ^= s << 13;
                    s ^= s >> 7;
                    s ^= s << 17;
                    (s % bins as u64) as u16
                })
                .collect();
            BinMap::new(size.0, size.1, bins, data)?
        }
    };
    let reference = build(&map, &ScanSchedule::sequential())?;
    let mut identical = true;
    let mut out = format!(
        "width={}\nheight={}\nbins={bins}\nthreads={threads}\n",
        map.width(),
        map.height()
    );
    for kind in ScheduleKind::ALL {
        let sched = ScanSchedule::new(kind, tile, threads);
        let mut best = f64::INFINITY;
        for _ in 0..repeat.max(1) {
            let start = Instant::now();
            let t = build(&map, &sched)?;
            best = best.min(start.elapsed().as_secs_f64());
            identical &= t.data() == reference.data();
        }
        debug!("{kind}: best of {repeat} runs {best:.6}s");
        let _ = writeln!(out, "{kind}_ms={:.3}", best * 1e3);
    }
    let _ = writeln!(out, "identical={identical}");
    print!("{out}");
    if identical {
        Ok(())
    } else {
        Err(Error::InvalidArgument("schedules produced different tensors".into()))
    }
}

fn color_histogram(img: &ColorImage) -> Vec<f64> {
    let mut h = vec![0.0; COLOR_BINS];
    for y in 0..img.height() {
        for x in 0..img.width() {
            h[color_bin(img.get(x, y))] += 1.0;
        }
    }
    h
}

fn likelihood(
    search: &Path,
    template: &Path,
    channel: ChannelArg,
    bins: usize,
    p: f64,
    levels: usize,
    phog_bins: usize,
) -> Result<LikelihoodMap> {
    match channel {
        ChannelArg::Ncc => {
            let (s, t) = (load_gray(search)?, load_gray(template)?);
            let valid = ncc_map_gray(&s, &t)?;
            embed_centered(&valid, s.width(), s.height(), t.width(), t.height())
        }
        ChannelArg::Color => {
            // template pixels are the foreground model, the search window the background
            let (s, t) = (load_color(search)?, load_color(template)?);
            let model = ColorModel::from_histograms(color_histogram(&t), color_histogram(&s))?;
            Ok(color_ratio_map(&s, &model))
        }
        ChannelArg::Hist => {
            let (s, t) = (load_gray(search)?, load_gray(template)?);
            let ih = build(&quantize(&s, bins, 0.0, 256.0)?, &ScanSchedule::sequential())?;
            let th = build(&quantize(&t, bins, 0.0, 256.0)?, &ScanSchedule::sequential())?;
            let counts = th.region_histogram(Rect::new(0, 0, t.width(), t.height()))?;
            let n = (t.width() * t.height()) as f64;
            let model: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
            hist_distance_map(&ih, &model, t.width(), t.height(), p)
        }
        ChannelArg::Phog => {
            let (s, t) = (load_gray(search)?, load_gray(template)?);
            let cell = 1usize << levels;
            let (cw, ch) = (t.width() - t.width() % cell, t.height() - t.height() % cell);
            let tindex = PhogIndex::from_window(&t, levels, phog_bins)?;
            tindex.check_chip(cw, ch)?;
            let model = tindex
                .descriptor((t.width() - cw) / 2, (t.height() - ch) / 2, cw, ch)
                .normalized();
            let index = PhogIndex::from_window(&s, levels, phog_bins)?;
            phog_map(&index, &model, cw, ch)
        }
    }
}

fn detect(
    seq: &Path,
    params: &DetectParams,
    depth: Option<&Path>,
    h_tau: f64,
    gac: Option<GacParams>,
    out_dir: &Path,
) -> Result<()> {
    let frames = read_sequence_list(seq)?
        .iter()
        .map(load_gray)
        .collect::<Result<Vec<GrayImage>>>()?;
    let depth = depth.map(DepthMap::load).transpose()?;
    let masks = detect_sequence(&frames, params)?;
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let t = 2 * params.half_window + 1;
    let mut out = String::new();
    for (i, mask) in masks.into_iter().enumerate() {
        let frame = i + params.half_window;
        let mut mask = mask;
        if let Some(g) = &gac {
            let window = FrameWindow::new(frames[i..i + t].to_vec())?;
            let edge = edge_indicator(&flux_trace(&window, params.sigma_d, params.avg_window)?)?;
            let seed: Vec<bool> = mask.data().iter().map(|&v| v != 0).collect();
            let refined = gac_refine(&seed, mask.width(), mask.height(), &edge, g)?;
            let data = refined.mask.iter().map(|&b| u8::from(b)).collect();
            mask = MotionMask::from_binary(mask.width(), mask.height(), data, params.min_blob)?;
        }
        if let Some(d) = &depth {
            mask = depth_filter(&mask, d, h_tau)?;
        }
        save_gray(out_dir.join(format!("mask_{frame:05}.pgm")), &mask.to_gray())?;
        let _ = writeln!(
            out,
            "frame={frame} foreground={} blobs={}",
            mask.foreground(),
            mask.blobs().len()
        );
    }
    info!("wrote masks to {}", out_dir.display());
    print!("{out}");
    Ok(())
}

/// Frame index from the last run of digits in a file stem.
fn frame_number(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end].rfind(|c: char| !c.is_ascii_digit()).map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

fn load_masks(dir: &Path) -> Result<(Vec<usize>, Vec<MotionMask>)> {
    let mut entries: Vec<(usize, PathBuf)> = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let path = e.map_err(|e| io_error(dir, e))?.path();
        if path.extension().and_then(|x| x.to_str()) != Some("pgm") {
            continue;
        }
        let n = frame_number(&path).ok_or_else(|| {
            Error::InvalidArgument(format!("mask {} has no frame number in its name", path.display()))
        })?;
        entries.push((n, path));
    }
    if entries.is_empty() {
        return Err(Error::Empty(format!("no .pgm masks in {}", dir.display())));
    }
    entries.sort();
    let masks = entries
        .iter()
        .map(|(_, p)| {
            let g = load_gray(p)?;
            MotionMask::from_binary(g.width(), g.height(), g.into_data(), 1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((entries.into_iter().map(|(n, _)| n).collect(), masks))
}
