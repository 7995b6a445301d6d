//! Length-prefixed binary frames.
//!
//! ```text
//! u32 len | session id (16) | round u32 | sender u8 | kind u8 | flags u8 | u32 payload len | payload
//! ```
//! All integers are little-endian; `len` counts every byte after itself.

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 16 + 4 + 1 + 1 + 1 + 4;

/// Flag bit reserved for an anonymity layer between clients and servers.
pub const FLAG_ANON: u8 = 0b1;

pub type SessionId = [u8; 16];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum PayloadKind {
    Field = 1,
    Bits = 2,
    Point = 3,
    Scalar = 4,
    KeySetup = 5,
    Control = 6,
    Register = 16,
    RegisterAck = 17,
    IssueTuples = 18,
    TupleBatch = 19,
    QuoteFees = 20,
    FeeQuote = 21,
    Bundle = 32,
    Challenge = 33,
    Response = 34,
    Total = 35,
    Bill = 36,
    Price = 37,
    Error = 63,
}

impl PayloadKind {
    pub fn from_u8(v: u8) -> Result<Self> {
        use PayloadKind::*;
        Ok(match v {
            1 => Field,
            2 => Bits,
            3 => Point,
            4 => Scalar,
            5 => KeySetup,
            6 => Control,
            16 => Register,
            17 => RegisterAck,
            18 => IssueTuples,
            19 => TupleBatch,
            20 => QuoteFees,
            21 => FeeQuote,
            32 => Bundle,
            33 => Challenge,
            34 => Response,
            35 => Total,
            36 => Bill,
            37 => Price,
            63 => Error,
            other => return Err(crate::error::Error::Malformed(format!("unknown payload kind {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub session: SessionId,
    pub round: u32,
    pub sender: u8,
    pub kind: PayloadKind,
    pub flags: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(session: SessionId, round: u32, sender: u8, kind: PayloadKind, payload: Vec<u8>) -> Self {
        Frame { session, round, sender, kind, flags: 0, payload }
    }

    pub fn encoded_len(&self) -> usize {
        4 + HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&((HEADER_LEN + self.payload.len()) as u32).to_le_bytes());
        out.extend_from_slice(&self.session);
        out.extend_from_slice(&self.round.to_le_bytes());
        out.push(self.sender);
        out.push(self.kind as u8);
        out.push(self.flags);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one complete frame including its length prefix.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Malformed("truncated frame".into()));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        if bytes.len() != 4 + len {
            return Err(Error::Malformed(format!("frame length {len} does not match {} bytes", bytes.len() - 4)));
        }
        Self::decode_body(&bytes[4..])
    }

    /// Decodes a frame body (everything after the length prefix).
    pub fn decode_body(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(Error::Malformed("truncated frame header".into()));
        }
        let mut session = [0u8; 16];
        session.copy_from_slice(&b[..16]);
        let round = u32::from_le_bytes(b[16..20].try_into().unwrap());
        let sender = b[20];
        let kind = PayloadKind::from_u8(b[21])?;
        let flags = b[22];
        let plen = u32::from_le_bytes(b[23..27].try_into().unwrap()) as usize;
        if b.len() != HEADER_LEN + plen {
            return Err(Error::Malformed("payload length does not match frame".into()));
        }
        Ok(Frame { session, round, sender, kind, flags, payload: b[HEADER_LEN..].to_vec() })
    }
}

/// Reads one frame from a byte stream. Returns `Ok(None)` on clean end of stream.
pub fn read_frame<R: std::io::Read>(r: &mut R) -> Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Malformed(format!("frame of {len} bytes")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Frame::decode_body(&body).map(Some)
}

pub fn write_frame<W: std::io::Write>(w: &mut W, f: &Frame) -> Result<()> {
    w.write_all(&f.encode())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut f = Frame::new([9; 16], 77, 2, PayloadKind::Field, vec![1, 2, 3, 4, 5]);
        f.flags = FLAG_ANON;
        let bytes = f.encode();
        assert_eq!(bytes.len(), f.encoded_len());
        assert_eq!(Frame::decode(&bytes).unwrap(), f);
        let mut cur = std::io::Cursor::new(bytes.clone());
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), f);
        assert!(read_frame(&mut cur).unwrap().is_none());
    }

    #[test]
    fn rejects_bad_lengths_and_kinds() {
        let f = Frame::new([0; 16], 1, 0, PayloadKind::Point, vec![0; 33]);
        let mut bytes = f.encode();
        assert!(Frame::decode(&bytes[..bytes.len() - 1]).is_err());
        bytes[4 + 21] = 250;
        assert!(Frame::decode(&bytes).is_err());
    }
}
