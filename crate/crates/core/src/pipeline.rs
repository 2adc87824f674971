//! Decode → compute → encode over a frame sequence, optionally with decoding
//! running one or more frames ahead on its own thread.

use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineReport {
    pub frames: usize,
    pub elapsed: Duration,
    pub fps: f64,
}

impl PipelineReport {
    pub fn summary(&self) -> String {
        format!(
            "frames={}\nelapsed_s={:.6}\nfps={:.3}\n",
            self.frames,
            self.elapsed.as_secs_f64(),
            self.fps
        )
    }
}

fn stage_error(stage: &'static str, frame: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::at_stage(stage, frame, e)
}

/// Run every input through the three stages in order. With `buffers == 1`
/// the stages alternate on the calling thread; with more, a decoder thread
/// keeps up to `buffers − 1` decoded frames queued while the caller
/// computes and encodes. Outputs are the same either way.
pub fn run_pipeline<I, T, U, D, C, E>(
    inputs: &[I],
    buffers: usize,
    decode: D,
    mut compute: C,
    mut encode: E,
) -> Result<PipelineReport>
where
    I: Sync,
    T: Send,
    D: Fn(usize, &I) -> Result<T> + Sync,
    C: FnMut(usize, T) -> Result<U>,
    E: FnMut(usize, U) -> Result<()>,
{
    if buffers == 0 {
        return Err(Error::invalid("the pipeline needs at least one buffer"));
    }
    let start = Instant::now();
    if buffers == 1 {
        for (i, input) in inputs.iter().enumerate() {
            let t = decode(i, input).map_err(stage_error("decode", i))?;
            let u = compute(i, t).map_err(stage_error("compute", i))?;
            encode(i, u).map_err(stage_error("encode", i))?;
        }
    } else {
        thread::scope(|s| -> Result<()> {
            let (tx, rx) = sync_channel::<Result<T>>(buffers - 1);
            let decode = &decode;
            s.spawn(move || {
                for (i, input) in inputs.iter().enumerate() {
                    let item = decode(i, input).map_err(stage_error("decode", i));
                    let failed = item.is_err();
                    if tx.send(item).is_err() || failed {
                        break;
                    }
                }
            });
            for i in 0..inputs.len() {
                let t = rx
                    .recv()
                    .map_err(|_| Error::at_stage("decode", i, Error::Empty("decoder stopped early".into())))??;
                let u = compute(i, t).map_err(stage_error("compute", i))?;
                encode(i, u).map_err(stage_error("encode", i))?;
            }
            Ok(())
        })?;
    }
    let elapsed = start.elapsed();
    let secs = elapsed.as_secs_f64();
    Ok(PipelineReport {
        frames: inputs.len(),
        elapsed,
        fps: if secs > 0.0 { inputs.len() as f64 / secs } else { 0.0 },
    })
}

/// One image path per line, relative paths taken from the list's directory;
/// blank lines and `#` comments are ignored.
pub fn read_sequence_list(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect())
}
