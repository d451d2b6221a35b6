use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Bytes before the payload on the wire: u32 length, u64 session, u32 round, u8 kind.
pub const WIRE_HEADER_LEN: usize = 4 + 8 + 4 + 1;

/// Upper bound on a single payload; protects the reader from garbage lengths.
pub const MAX_PAYLOAD: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum FrameKind {
    Control = 0x01,
    /// Active party -> server: shares of the gradient vectors.
    GradientShares = 0x02,
    /// Provider -> server: shares of a binned one-hot matrix (or bin column).
    BinShares = 0x03,
    /// Server -> server protocol traffic.
    Reshare = 0x04,
    /// Server -> active party: shares of aggregated gradients.
    AggregateShares = 0x05,
    /// Active -> provider: sample space of a node.
    SampleSpace = 0x06,
    /// Active -> split owner: chosen `(j*, s*)`.
    SplitRequest = 0x07,
    /// Split owner -> active: left sample space.
    LeftSet = 0x08,
    DirectionQuery = 0x09,
    DirectionBits = 0x0a,
    /// Server -> designated party: shares to reconstruct.
    RevealShares = 0x0b,
    /// Generic data frame (tests, loopback echo).
    Data = 0x0c,
    /// Never emitted by the protocol; the audit flags any occurrence.
    PlainFeatures = 0x0d,
    /// Never emitted by the protocol; the audit flags any occurrence.
    PlainLabels = 0x0e,
    /// Never emitted by the protocol; the audit flags any occurrence.
    PlainGradients = 0x0f,
}

impl FrameKind {
    pub fn from_u8(b: u8) -> Result<Self> {
        use FrameKind::*;
        Ok(match b {
            0x01 => Control,
            0x02 => GradientShares,
            0x03 => BinShares,
            0x04 => Reshare,
            0x05 => AggregateShares,
            0x06 => SampleSpace,
            0x07 => SplitRequest,
            0x08 => LeftSet,
            0x09 => DirectionQuery,
            0x0a => DirectionBits,
            0x0b => RevealShares,
            0x0c => Data,
            0x0d => PlainFeatures,
            0x0e => PlainLabels,
            0x0f => PlainGradients,
            other => return Err(Error::FrameDecode(format!("unknown frame kind {other:#04x}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub session_id: u64,
    pub round_no: u32,
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(session_id: u64, round_no: u32, kind: FrameKind, payload: Vec<u8>) -> Self {
        Frame {
            session_id,
            round_no,
            kind,
            payload,
        }
    }

    pub fn wire_len(&self) -> usize {
        WIRE_HEADER_LEN + self.payload.len()
    }

    /// `[u32 payload_len][u64 session][u32 round][u8 kind][payload]`, little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let len = u32::try_from(self.payload.len())
            .ok()
            .filter(|&l| (l as usize) <= MAX_PAYLOAD)
            .ok_or_else(|| Error::FrameDecode(format!("payload of {} bytes too large", self.payload.len())))?;
        let mut head = [0u8; WIRE_HEADER_LEN];
        head[0..4].copy_from_slice(&len.to_le_bytes());
        head[4..12].copy_from_slice(&self.session_id.to_le_bytes());
        head[12..16].copy_from_slice(&self.round_no.to_le_bytes());
        head[16] = self.kind as u8;
        w.write_all(&head)?;
        w.write_all(&self.payload)?;
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        self.write_to(&mut out).expect("vec write");
        out
    }

    /// Returns `Ok(None)` on a clean end of stream before any header byte.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Frame>> {
        let mut head = [0u8; WIRE_HEADER_LEN];
        let mut filled = 0;
        while filled < head.len() {
            match r.read(&mut head[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(Error::FrameDecode("truncated frame header".into())),
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let len = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::FrameDecode(format!("payload length {len} exceeds limit")));
        }
        let session_id = u64::from_le_bytes(head[4..12].try_into().unwrap());
        let round_no = u32::from_le_bytes(head[12..16].try_into().unwrap());
        let kind = FrameKind::from_u8(head[16])?;
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Ok(Some(Frame {
            session_id,
            round_no,
            kind,
            payload,
        }))
    }

    pub fn decode(buf: &[u8]) -> Result<Frame> {
        let mut cur = std::io::Cursor::new(buf);
        let f = Frame::read_from(&mut cur)?.ok_or_else(|| Error::FrameDecode("empty buffer".into()))?;
        if cur.position() as usize != buf.len() {
            return Err(Error::FrameDecode("trailing bytes after frame".into()));
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wire_layout() {
        let f = Frame::new(0x0102, 7, FrameKind::Data, vec![9, 8, 7]);
        let b = f.encode();
        assert_eq!(b.len(), WIRE_HEADER_LEN + 3);
        assert_eq!(&b[0..4], &3u32.to_le_bytes());
        assert_eq!(&b[4..12], &0x0102u64.to_le_bytes());
        assert_eq!(&b[12..16], &7u32.to_le_bytes());
        assert_eq!(b[16], 0x0c);
        assert_eq!(&b[17..], &[9, 8, 7]);
    }

    #[test]
    fn truncated_and_unknown() {
        let b = Frame::new(1, 1, FrameKind::Data, vec![1, 2, 3, 4]).encode();
        assert!(Frame::decode(&b[..b.len() - 1]).is_err());
        assert!(Frame::decode(&b[..5]).is_err());
        let mut bad = b.clone();
        bad[16] = 0xff;
        assert!(Frame::decode(&bad).is_err());
        let mut trailing = b;
        trailing.push(0);
        assert!(Frame::decode(&trailing).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(session: u64, round: u32, payload in proptest::collection::vec(any::<u8>(), 0..512)) {
            let f = Frame::new(session, round, FrameKind::Reshare, payload);
            prop_assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
        }
    }
}
