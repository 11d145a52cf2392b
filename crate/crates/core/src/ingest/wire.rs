//! Framed sensor messages.
//!
//! ```text
//! offset  size  field
//! 0       2     magic 0x49 0x45
//! 2       1     version 0x01
//! 3       1     message type (0x01 camera, 0x02 imu, 0x03 end of stream)
//! 4       4     payload length, big-endian u32
//! 8       n     payload
//! 8+n     4     CRC-32 (IEEE, reflected, init/xorout 0xFFFFFFFF) of bytes 0..8+n, big-endian
//! ```

use std::io::{self, Read};

use thiserror::Error;

use super::{ImuSample, SensorFrame};

pub const MAGIC: [u8; 2] = [0x49, 0x45];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 8;
pub const CRC_LEN: usize = 4;
/// Header plus CRC trailer.
pub const OVERHEAD: usize = HEADER_LEN + CRC_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Camera = 0x01,
    Imu = 0x02,
    EndOfStream = 0x03,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(MsgType::Camera),
            0x02 => Some(MsgType::Imu),
            0x03 => Some(MsgType::EndOfStream),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported protocol version {0:#04x}")]
    BadVersion(u8),
    #[error("truncated message: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("crc mismatch: header says {expected:#010x}, computed {computed:#010x}")]
    CrcMismatch { expected: u32, computed: u32 },
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("payload of {0} bytes does not fit a u32 length")]
    Oversized(usize),
    #[error("malformed payload: {0}")]
    BadPayload(String),
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

pub fn encode_message(msg_type: MsgType, payload: &[u8]) -> Result<Vec<u8>, WireError> {
    let len = u32::try_from(payload.len()).map_err(|_| WireError::Oversized(payload.len()))?;
    let mut out = Vec::with_capacity(payload.len() + OVERHEAD);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type as u8);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

/// Validates and decodes the message at the start of `bytes`, returning the
/// type, the payload, and the number of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(MsgType, Vec<u8>, usize), WireError> {
    if bytes.len() < 2 {
        return Err(WireError::Truncated {
            needed: OVERHEAD,
            available: bytes.len(),
        });
    }
    if bytes[..2] != MAGIC {
        return Err(WireError::BadMagic([bytes[0], bytes[1]]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: OVERHEAD,
            available: bytes.len(),
        });
    }
    if bytes[2] != VERSION {
        return Err(WireError::BadVersion(bytes[2]));
    }
    let len = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let total = len + OVERHEAD;
    if bytes.len() < total {
        return Err(WireError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    let body_end = HEADER_LEN + len;
    let expected = u32::from_be_bytes(bytes[body_end..total].try_into().unwrap());
    let computed = crc32(&bytes[..body_end]);
    if expected != computed {
        return Err(WireError::CrcMismatch { expected, computed });
    }
    let msg_type = MsgType::from_byte(bytes[3]).ok_or(WireError::UnknownType(bytes[3]))?;
    Ok((msg_type, bytes[HEADER_LEN..body_end].to_vec(), total))
}

/// Decodes exactly one message; trailing bytes are an error.
pub fn decode_message(bytes: &[u8]) -> Result<(MsgType, Vec<u8>), WireError> {
    let (t, payload, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - used));
    }
    Ok((t, payload))
}

/// Reads one message from a byte stream. Returns `Ok(None)` on a clean EOF
/// before the first header byte.
pub fn read_message<R: Read>(r: &mut R) -> io::Result<Option<Result<(MsgType, Vec<u8>), WireError>>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..])? {
            0 if got == 0 => return Ok(None),
            0 => {
                return Ok(Some(Err(WireError::Truncated {
                    needed: OVERHEAD,
                    available: got,
                })))
            }
            n => got += n,
        }
    }
    if header[..2] != MAGIC {
        return Ok(Some(Err(WireError::BadMagic([header[0], header[1]]))));
    }
    let len = u32::from_be_bytes(header[4..8].try_into().unwrap()) as usize;
    let mut buf = header.to_vec();
    buf.resize(HEADER_LEN + len + CRC_LEN, 0);
    let mut filled = HEADER_LEN;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => {
                return Ok(Some(Err(WireError::Truncated {
                    needed: buf.len(),
                    available: filled,
                })))
            }
            n => filled += n,
        }
    }
    Ok(Some(decode_message(&buf)))
}

fn take<const N: usize>(p: &[u8], at: &mut usize) -> Result<[u8; N], WireError> {
    let s = p
        .get(*at..*at + N)
        .ok_or_else(|| WireError::BadPayload(format!("payload ends at byte {}", p.len())))?;
    *at += N;
    Ok(s.try_into().unwrap())
}

pub const FRAME_HEADER_LEN: usize = 4 + 8 + 2 + 2 + 1;
pub const IMU_PAYLOAD_LEN: usize = 4 + 8 + 6 * 4;

impl SensorFrame {
    /// `seq u32 | timestamp_us u64 | width u16 | height u16 | channels u8 | pixels`.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut p = Vec::with_capacity(FRAME_HEADER_LEN + self.pixels.len());
        p.extend_from_slice(&self.seq.to_be_bytes());
        p.extend_from_slice(&self.timestamp_us.to_be_bytes());
        p.extend_from_slice(&self.width.to_be_bytes());
        p.extend_from_slice(&self.height.to_be_bytes());
        p.push(self.channels);
        p.extend_from_slice(&self.pixels);
        p
    }

    pub fn from_payload(p: &[u8]) -> Result<Self, WireError> {
        let mut at = 0;
        let seq = u32::from_be_bytes(take(p, &mut at)?);
        let timestamp_us = u64::from_be_bytes(take(p, &mut at)?);
        let width = u16::from_be_bytes(take(p, &mut at)?);
        let height = u16::from_be_bytes(take(p, &mut at)?);
        let [channels] = take::<1>(p, &mut at)?;
        let pixels = p[at..].to_vec();
        SensorFrame::new(seq, timestamp_us, width, height, channels, pixels)
            .map_err(|e| WireError::BadPayload(e.to_string()))
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_message(MsgType::Camera, &self.to_payload()).expect("frame fits a u32 length")
    }
}

impl ImuSample {
    /// `seq u32 | timestamp_us u64 | accel 3 x f32 | gyro 3 x f32`. The
    /// in-memory `f64` components are narrowed to `f32` on the wire.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut p = Vec::with_capacity(IMU_PAYLOAD_LEN);
        p.extend_from_slice(&self.seq.to_be_bytes());
        p.extend_from_slice(&self.timestamp_us.to_be_bytes());
        for v in self.accel.iter().chain(&self.gyro) {
            p.extend_from_slice(&(*v as f32).to_be_bytes());
        }
        p
    }

    pub fn from_payload(p: &[u8]) -> Result<Self, WireError> {
        if p.len() != IMU_PAYLOAD_LEN {
            return Err(WireError::BadPayload(format!(
                "imu payload is {} bytes, expected {IMU_PAYLOAD_LEN}",
                p.len()
            )));
        }
        let mut at = 0;
        let seq = u32::from_be_bytes(take(p, &mut at)?);
        let timestamp_us = u64::from_be_bytes(take(p, &mut at)?);
        let mut vals = [0.0f64; 6];
        for v in &mut vals {
            *v = f32::from_be_bytes(take(p, &mut at)?) as f64;
        }
        let s = ImuSample {
            seq,
            timestamp_us,
            accel: [vals[0], vals[1], vals[2]],
            gyro: [vals[3], vals[4], vals[5]],
        };
        if !s.is_finite() {
            return Err(WireError::BadPayload("non-finite imu value".into()));
        }
        Ok(s)
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_message(MsgType::Imu, &self.to_payload()).expect("imu payload is small")
    }
}
