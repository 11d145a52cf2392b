//! TCP ingest: a reader thread decodes framed messages and hands them to
//! the consumer by value through a bounded queue. A full queue blocks the
//! reader, which in turn stops draining the socket.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::{self, JoinHandle};

use super::wire::{encode_message, read_message, MsgType, WireError};
use super::{ImuSample, SensorFrame};
use crate::error::{Error, Result};

pub const PORT_ENV: &str = "IE_INGEST_PORT";
pub const DEFAULT_PORT: u16 = 7450;
pub const DEFAULT_QUEUE: usize = 64;

/// Listener port: `IE_INGEST_PORT` when set, `fallback` otherwise.
pub fn resolve_port(fallback: u16) -> Result<u16> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{PORT_ENV}={v:?} is not a port number"))),
        Err(_) => Ok(fallback),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestEvent {
    Frame(SensorFrame),
    Imu(ImuSample),
}

/// Per-stream outcome reported when the reader stops.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub messages: usize,
    /// Messages dropped for a CRC or payload error after which the stream
    /// could still be followed.
    pub rejected: usize,
    pub saw_end: bool,
}

fn stream_err(index: usize, e: impl std::fmt::Display) -> Error {
    Error::Stream {
        frame: index,
        message: e.to_string(),
    }
}

/// Spawns a reader over any byte stream. Each decoded frame or IMU sample
/// is sent as `Ok`; recoverable message faults are sent as `Err` and
/// skipped. The reader ends at end-of-stream, EOF, a framing fault it
/// cannot resynchronise from, or when the receiver is dropped.
pub fn spawn_reader<R>(
    mut reader: R,
    capacity: usize,
) -> (Receiver<Result<IngestEvent>>, JoinHandle<Result<IngestSummary>>)
where
    R: Read + Send + 'static,
{
    let (tx, rx) = sync_channel(capacity.max(1));
    let handle = thread::spawn(move || {
        let mut summary = IngestSummary::default();
        loop {
            let index = summary.messages;
            let msg = match read_message(&mut reader)? {
                None => break,
                Some(m) => m,
            };
            summary.messages += 1;
            let event = match msg {
                Ok((MsgType::EndOfStream, _)) => {
                    summary.saw_end = true;
                    break;
                }
                Ok((MsgType::Camera, p)) => SensorFrame::from_payload(&p)
                    .map(IngestEvent::Frame)
                    .map_err(|e| stream_err(index, e)),
                Ok((MsgType::Imu, p)) => ImuSample::from_payload(&p)
                    .map(IngestEvent::Imu)
                    .map_err(|e| stream_err(index, e)),
                // The full message was consumed, so the next header is aligned.
                Err(e @ (WireError::CrcMismatch { .. } | WireError::UnknownType(_))) => {
                    Err(stream_err(index, e))
                }
                Err(e) => {
                    let _ = tx.send(Err(stream_err(index, &e)));
                    return Err(stream_err(index, e));
                }
            };
            if event.is_err() {
                summary.rejected += 1;
            }
            if tx.send(event).is_err() {
                break;
            }
        }
        Ok(summary)
    });
    (rx, handle)
}

pub struct IngestService {
    listener: TcpListener,
    capacity: usize,
}

impl IngestService {
    pub fn bind(addr: impl Into<SocketAddr>, capacity: usize) -> Result<Self> {
        Ok(IngestService {
            listener: TcpListener::bind(addr.into())?,
            capacity,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Blocks for the next producer connection and starts its reader.
    pub fn accept(
        &self,
    ) -> Result<(Receiver<Result<IngestEvent>>, JoinHandle<Result<IngestSummary>>)> {
        let (stream, _) = self.listener.accept()?;
        Ok(spawn_reader(stream, self.capacity))
    }
}

/// Writes frames and IMU samples merged by timestamp (frames first on
/// equal timestamps), followed by an end-of-stream message.
pub fn write_merged<W: Write>(w: &mut W, frames: &[SensorFrame], imu: &[ImuSample]) -> Result<()> {
    let (mut i, mut j) = (0, 0);
    while i < frames.len() || j < imu.len() {
        let take_frame = match (frames.get(i), imu.get(j)) {
            (Some(f), Some(s)) => f.timestamp_us <= s.timestamp_us,
            (Some(_), None) => true,
            _ => false,
        };
        if take_frame {
            w.write_all(&frames[i].encode())?;
            i += 1;
        } else {
            w.write_all(&imu[j].encode())?;
            j += 1;
        }
    }
    w.write_all(&encode_message(MsgType::EndOfStream, &[])?)?;
    w.flush()?;
    Ok(())
}

/// Connects to an ingest service and streams a recorded scene.
pub fn send_scene(addr: SocketAddr, frames: &[SensorFrame], imu: &[ImuSample]) -> Result<()> {
    let mut s = TcpStream::connect(addr)?;
    write_merged(&mut s, frames, imu)
}
