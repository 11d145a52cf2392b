//! Sensor ingest: the framed wire protocol, on-edge IMU smoothing, stream
//! synchronisation, a TCP ingest service, and a deterministic scene
//! simulator that stands in for real cameras and IMUs.

pub mod service;
pub mod sim;
pub mod wire;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorFrame {
    pub seq: u32,
    pub timestamp_us: u64,
    pub width: u16,
    pub height: u16,
    /// 1 = grayscale.
    pub channels: u8,
    /// Row-major, interleaved channels.
    pub pixels: Vec<u8>,
}

impl SensorFrame {
    pub fn new(
        seq: u32,
        timestamp_us: u64,
        width: u16,
        height: u16,
        channels: u8,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        let expected = width as usize * height as usize * channels as usize;
        if channels == 0 || expected == 0 {
            return Err(Error::invalid("frame dimensions must be non-zero"));
        }
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "{}x{}x{} frame needs {expected} pixel bytes, got {}",
                width,
                height,
                channels,
                pixels.len()
            )));
        }
        Ok(SensorFrame {
            seq,
            timestamp_us,
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Pixels as a `(C, H, W)` tensor of raw byte values.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w, c) = (self.height as usize, self.width as usize, self.channels as usize);
        let mut data = vec![0.0; c * h * w];
        for (i, &p) in self.pixels.iter().enumerate() {
            let ch = i % c;
            let pix = i / c;
            data[ch * h * w + pix] = p as f64;
        }
        Tensor::new(vec![c, h, w], data).expect("frame dims validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub seq: u32,
    pub timestamp_us: u64,
    /// m/s^2
    pub accel: [f64; 3],
    /// rad/s
    pub gyro: [f64; 3],
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.accel.iter().chain(&self.gyro).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncedRecord {
    pub frame: SensorFrame,
    pub imu: Option<ImuSample>,
    /// IMU timestamp minus frame timestamp, when paired.
    pub skew_us: Option<i64>,
}

/// Centred moving average of every accel/gyro component; windows shrink at
/// the stream ends. Sequence numbers and timestamps pass through.
pub fn edge_preprocess(stream: &[ImuSample], window: usize) -> Result<Vec<ImuSample>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "smoothing window must be odd and positive, got {window}"
        )));
    }
    let half = window / 2;
    let n = stream.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let count = (hi - lo + 1) as f64;
            let mut accel = [0.0; 3];
            let mut gyro = [0.0; 3];
            for s in &stream[lo..=hi] {
                for a in 0..3 {
                    accel[a] += s.accel[a];
                    gyro[a] += s.gyro[a];
                }
            }
            ImuSample {
                accel: accel.map(|v| v / count),
                gyro: gyro.map(|v| v / count),
                ..stream[i]
            }
        })
        .collect())
}

fn check_sorted<T>(items: &[T], ts: impl Fn(&T) -> u64, what: &str) -> Result<()> {
    if let Some(i) = items.windows(2).position(|w| ts(&w[0]) > ts(&w[1])) {
        return Err(Error::Unsorted(format!(
            "{what} timestamps decrease at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Pairs each frame with the IMU sample nearest in time (earlier sample on
/// ties) when it lies within `tolerance_us`. Output follows frame order.
pub fn synchronize_streams(
    frames: &[SensorFrame],
    imu: &[ImuSample],
    tolerance_us: u64,
) -> Result<Vec<SyncedRecord>> {
    check_sorted(frames, |f| f.timestamp_us, "frame")?;
    check_sorted(imu, |s| s.timestamp_us, "imu")?;
    Ok(frames
        .iter()
        .map(|f| {
            let t = f.timestamp_us;
            let after = imu.partition_point(|s| s.timestamp_us < t);
            // First index of the latest timestamp strictly before t.
            let before = after.checked_sub(1).map(|b| {
                let ts = imu[b].timestamp_us;
                imu.partition_point(|s| s.timestamp_us < ts)
            });
            let nearest = match (before, imu.get(after)) {
                (Some(b), Some(a)) => {
                    if imu[b].timestamp_us.abs_diff(t) <= a.timestamp_us.abs_diff(t) {
                        Some(imu[b])
                    } else {
                        Some(*a)
                    }
                }
                (Some(b), None) => Some(imu[b]),
                (None, a) => a.copied(),
            };
            let paired = nearest.filter(|s| s.timestamp_us.abs_diff(t) <= tolerance_us);
            SyncedRecord {
                frame: f.clone(),
                skew_us: paired.map(|s| s.timestamp_us as i64 - t as i64),
                imu: paired,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn imu(seq: u32, ts: u64, ax: f64) -> ImuSample {
        ImuSample {
            seq,
            timestamp_us: ts,
            accel: [ax, 0.0, 9.81],
            gyro: [0.0; 3],
        }
    }

    fn frame(seq: u32, ts: u64) -> SensorFrame {
        SensorFrame::new(seq, ts, 1, 1, 1, vec![0]).unwrap()
    }

    #[test]
    fn moving_average_examples() {
        let s: Vec<_> = [1.0, 2.0, 3.0].iter().enumerate().map(|(i, &v)| imu(i as u32, i as u64, v)).collect();
        assert_eq!(edge_preprocess(&s, 1).unwrap(), s);
        let out = edge_preprocess(&s, 3).unwrap();
        assert_eq!(out[1].accel[0], 2.0);
        assert_eq!(out[0].accel[0], 1.5);
        assert_eq!(out[0].seq, 0);
        let c: Vec<_> = (0..6).map(|i| imu(i, i as u64 * 10, 4.0)).collect();
        assert_eq!(edge_preprocess(&c, 5).unwrap(), c);
        assert!(edge_preprocess(&[], 3).unwrap().is_empty());
        assert!(edge_preprocess(&s, 2).is_err());
    }

    #[test]
    fn sync_examples() {
        let frames: Vec<_> = (0..3).map(|i| frame(i, 1000 * i as u64)).collect();
        let samples: Vec<_> = (0..3).map(|i| imu(i, 1000 * i as u64, 0.0)).collect();
        let recs = synchronize_streams(&frames, &samples, 10).unwrap();
        assert!(recs.iter().all(|r| r.skew_us == Some(0)));

        let far = vec![imu(0, 50_000, 0.0)];
        let recs = synchronize_streams(&frames, &far, 100).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.imu.is_none()));

        let unsorted = vec![frame(0, 10), frame(1, 5)];
        assert!(matches!(synchronize_streams(&unsorted, &[], 1), Err(Error::Unsorted(_))));
    }

    #[test]
    fn sync_prefers_earlier_on_ties() {
        let recs = synchronize_streams(&[frame(0, 100)], &[imu(0, 90, 0.0), imu(1, 110, 0.0)], 50).unwrap();
        assert_eq!(recs[0].imu.unwrap().seq, 0);
        assert_eq!(recs[0].skew_us, Some(-10));
    }
}
