//! Length-prefixed frames exchanged between the aggregation server and clients.
//!
//! ```text
//! "FQKL" | version u8 | type u8 | payload_len u64 | payload
//! HELLO  (0x01): client u32 | samples u64
//! GLOBAL (0x02): round u32 | checkpoint
//! UPDATE (0x03): round u32 | samples u64 | checkpoint
//! DONE   (0x04): empty
//! ```

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const WIRE_MAGIC: [u8; 4] = *b"FQKL";
pub const WIRE_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;
pub const DEFAULT_MAX_FRAME: u64 = 1 << 30;

const HELLO: u8 = 0x01;
const GLOBAL: u8 = 0x02;
const UPDATE: u8 = 0x03;
const DONE: u8 = 0x04;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Hello { client: u32, samples: u64 },
    Global { round: u32, blob: Vec<u8> },
    Update { round: u32, samples: u64, blob: Vec<u8> },
    Done,
}

impl WireMessage {
    fn type_code(&self) -> u8 {
        match self {
            WireMessage::Hello { .. } => HELLO,
            WireMessage::Global { .. } => GLOBAL,
            WireMessage::Update { .. } => UPDATE,
            WireMessage::Done => DONE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "HELLO",
            WireMessage::Global { .. } => "GLOBAL",
            WireMessage::Update { .. } => "UPDATE",
            WireMessage::Done => "DONE",
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            WireMessage::Hello { client, samples } => {
                p.extend_from_slice(&client.to_le_bytes());
                p.extend_from_slice(&samples.to_le_bytes());
            }
            WireMessage::Global { round, blob } => {
                p.extend_from_slice(&round.to_le_bytes());
                p.extend_from_slice(blob);
            }
            WireMessage::Update { round, samples, blob } => {
                p.extend_from_slice(&round.to_le_bytes());
                p.extend_from_slice(&samples.to_le_bytes());
                p.extend_from_slice(blob);
            }
            WireMessage::Done => {}
        }
        p
    }
}

pub fn wire_encode(msg: &WireMessage) -> Vec<u8> {
    let payload = msg.payload();
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(WIRE_VERSION);
    out.push(msg.type_code());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Validates a header and returns `(type, payload length)`.
fn parse_header(header: &[u8; HEADER_LEN], max_len: u64) -> Result<(u8, u64)> {
    let magic: [u8; 4] = header[..4].try_into().unwrap();
    if magic != WIRE_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if header[4] != WIRE_VERSION {
        return Err(Error::BadVersion(header[4]));
    }
    let kind = header[5];
    if !(HELLO..=DONE).contains(&kind) {
        return Err(Error::UnknownType(kind));
    }
    let len = u64::from_le_bytes(header[6..].try_into().unwrap());
    if len > max_len {
        return Err(Error::FrameTooLarge { len, max: max_len });
    }
    Ok((kind, len))
}

fn parse_payload(kind: u8, p: &[u8]) -> Result<WireMessage> {
    let short = |what: &str| Error::Protocol(format!("{what} payload of {} bytes is too short", p.len()));
    let u32_at = |at: usize| u32::from_le_bytes(p[at..at + 4].try_into().unwrap());
    let u64_at = |at: usize| u64::from_le_bytes(p[at..at + 8].try_into().unwrap());
    match kind {
        HELLO => {
            if p.len() != 12 {
                return Err(Error::Protocol(format!("HELLO payload must be 12 bytes, got {}", p.len())));
            }
            Ok(WireMessage::Hello {
                client: u32_at(0),
                samples: u64_at(4),
            })
        }
        GLOBAL => {
            if p.len() < 4 {
                return Err(short("GLOBAL"));
            }
            Ok(WireMessage::Global {
                round: u32_at(0),
                blob: p[4..].to_vec(),
            })
        }
        UPDATE => {
            if p.len() < 12 {
                return Err(short("UPDATE"));
            }
            Ok(WireMessage::Update {
                round: u32_at(0),
                samples: u64_at(4),
                blob: p[12..].to_vec(),
            })
        }
        DONE => {
            if !p.is_empty() {
                return Err(Error::Protocol("DONE carries a payload".into()));
            }
            Ok(WireMessage::Done)
        }
        other => Err(Error::UnknownType(other)),
    }
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn wire_decode(bytes: &[u8]) -> Result<WireMessage> {
    wire_decode_with_limit(bytes, DEFAULT_MAX_FRAME)
}

pub fn wire_decode_with_limit(bytes: &[u8], max_len: u64) -> Result<WireMessage> {
    let header: [u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .ok_or_else(|| Error::TruncatedFrame(format!("{} of {HEADER_LEN} header bytes", bytes.len())))?
        .try_into()
        .unwrap();
    let (kind, len) = parse_header(&header, max_len)?;
    let body = &bytes[HEADER_LEN..];
    if (body.len() as u64) < len {
        return Err(Error::TruncatedFrame(format!("{} of {len} payload bytes", body.len())));
    }
    if body.len() as u64 > len {
        return Err(Error::Protocol(format!("{} bytes after frame", body.len() as u64 - len)));
    }
    parse_payload(kind, body)
}

fn read_full(stream: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    stream.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::TruncatedFrame(format!("stream ended inside {what}")),
        _ => Error::Io(e),
    })
}

/// Reads one frame from a stream.
pub fn read_message(stream: &mut impl Read, max_len: u64) -> Result<WireMessage> {
    let mut header = [0u8; HEADER_LEN];
    read_full(stream, &mut header, "frame header")?;
    let (kind, len) = parse_header(&header, max_len)?;
    let mut payload = vec![0u8; len as usize];
    read_full(stream, &mut payload, "frame payload")?;
    parse_payload(kind, &payload)
}

pub fn write_message(stream: &mut impl Write, msg: &WireMessage) -> Result<()> {
    stream.write_all(&wire_encode(msg))?;
    stream.flush()?;
    Ok(())
}
