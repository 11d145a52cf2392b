use std::collections::VecDeque;
use std::fs;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::Path;

use super::{MapSource, Pipeline, PipelineConfig, ACTIONS_FILE, SKELETONS_FILE};
use crate::error::{Error, Result};
use crate::ingest::service::{IngestEvent, IngestService, DEFAULT_QUEUE};
use crate::ingest::{edge_preprocess, synchronize_streams, ImuSample, SensorFrame};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServeOptions {
    pub host: IpAddr,
    pub port: u16,
    /// Stop after the first producer's end of stream.
    pub once: bool,
    pub queue_capacity: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: crate::ingest::service::DEFAULT_PORT,
            once: true,
            queue_capacity: DEFAULT_QUEUE,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServeSummary {
    pub connections: usize,
    pub frames: usize,
    pub imu_samples: usize,
    pub rejected_messages: usize,
    pub failed_clips: usize,
}

/// Listens for producers and decodes frames as they arrive: the ingest
/// reader thread feeds a bounded queue that this thread drains. Each frame is
/// paired with the nearest smoothed IMU sample received so far. Skeleton
/// and action lines are appended to `out_dir` as frames complete.
pub fn serve(
    cfg: &PipelineConfig,
    opts: &ServeOptions,
    out_dir: impl AsRef<Path>,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<ServeSummary> {
    if cfg.decoder.source == MapSource::Oracle {
        return Err(Error::Config(
            "live sources have no ground truth; set decoder.source to \"heads\"".into(),
        ));
    }
    let pipeline = Pipeline::new(cfg)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut skeletons = BufWriter::new(fs::File::create(out_dir.join(SKELETONS_FILE))?);
    let mut actions = BufWriter::new(fs::File::create(out_dir.join(ACTIONS_FILE))?);

    let service = IngestService::bind((opts.host, opts.port), opts.queue_capacity)?;
    on_bound(service.local_addr()?);

    let pre = &cfg.preprocess;
    let imu_keep = 8 * pre.imu_window;
    let mut summary = ServeSummary::default();
    loop {
        let (rx, reader) = service.accept()?;
        summary.connections += 1;
        let mut clip: VecDeque<SensorFrame> = VecDeque::with_capacity(pre.clip_len);
        let mut imu: VecDeque<ImuSample> = VecDeque::new();
        for event in rx {
            match event {
                Ok(IngestEvent::Imu(s)) => {
                    summary.imu_samples += 1;
                    if imu.back().is_some_and(|b| b.timestamp_us > s.timestamp_us) {
                        summary.rejected_messages += 1;
                        continue;
                    }
                    imu.push_back(s);
                    if imu.len() > imu_keep {
                        imu.pop_front();
                    }
                }
                Ok(IngestEvent::Frame(f)) => {
                    let index = summary.frames;
                    summary.frames += 1;
                    if clip.back().is_some_and(|b| (b.width, b.height, b.channels) != (f.width, f.height, f.channels)) {
                        clip.clear();
                    }
                    clip.push_back(f);
                    if clip.len() > pre.clip_len {
                        clip.pop_front();
                    }
                    let frames = clip.make_contiguous();
                    let recent = imu.make_contiguous();
                    let out = pipeline.prepare(index, frames, None, None).and_then(|mut p| {
                        let smoothed = edge_preprocess(recent, pre.imu_window)?;
                        let last = std::slice::from_ref(frames.last().expect("just pushed"));
                        let synced = synchronize_streams(last, &smoothed, pre.sync_tolerance_us)?;
                        p.imu = synced[0].imu;
                        p.imu_skew_us = synced[0].skew_us;
                        Ok(pipeline.finish(&p, &cfg.decoder))
                    });
                    let out = out.unwrap_or_else(|e| {
                        super::FrameOutput::failed(index, frames.last().map_or(0, |f| f.timestamp_us), &e)
                    });
                    if out.error.is_some() {
                        summary.failed_clips += 1;
                    }
                    writeln!(skeletons, "{}", out.skeleton_line(pipeline.topology())?)?;
                    writeln!(actions, "{}", out.action_line()?)?;
                    skeletons.flush()?;
                    actions.flush()?;
                }
                Err(e) => {
                    summary.rejected_messages += 1;
                    eprintln!("ingest: {e}");
                }
            }
        }
        match reader.join() {
            Ok(Ok(_)) => {}
            Ok(Err(e)) => eprintln!("ingest: connection closed: {e}"),
            Err(_) => return Err(Error::Stream { frame: summary.frames, message: "ingest reader panicked".into() }),
        }
        if opts.once {
            return Ok(summary);
        }
    }
}
