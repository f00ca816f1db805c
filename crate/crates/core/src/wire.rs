//! Versioned protocol frames.
//!
//! ```text
//! version (1) | protocol id (1) | msg type (1) | payload length (4, BE) | payload
//! ```

use std::fmt;

use crate::group::{GroupConfig, GroupElement};
use crate::{Error, Result};

pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 7;
pub const MAX_PAYLOAD: usize = 1 << 24;

/// Length of every confirmation tag.
pub const TAG_LEN: usize = 32;

pub const MSG1: u8 = 0x01;
pub const MSG2: u8 = 0x02;
pub const MSG3: u8 = 0x03;
pub const MSG4: u8 = 0x04;
/// Second message of the reversed-confirmation variants (ephemeral plus server tag).
pub const MSG2_WITH_CONFIRMATION: u8 = 0x12;
/// Sent by the service after it accepted; carries the session-key check value.
pub const ACCEPT: u8 = 0x20;
/// Opaque rejection, always with an empty payload.
pub const REJECT: u8 = 0xFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolId {
    Ssca = 0x01,
    Pscab = 0x02,
    Pscabv = 0x03,
    Pscav = 0x04,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 4] = [
        ProtocolId::Ssca,
        ProtocolId::Pscab,
        ProtocolId::Pscabv,
        ProtocolId::Pscav,
    ];

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0x01 => Ok(ProtocolId::Ssca),
            0x02 => Ok(ProtocolId::Pscab),
            0x03 => Ok(ProtocolId::Pscabv),
            0x04 => Ok(ProtocolId::Pscav),
            other => Err(Error::UnknownProtocol(other)),
        }
    }

    pub fn byte(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::Ssca => "ssca",
            ProtocolId::Pscab => "pscab",
            ProtocolId::Pscabv => "pscabv",
            ProtocolId::Pscav => "pscav",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ProtocolId::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolFrame {
    pub protocol: ProtocolId,
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl ProtocolFrame {
    pub fn new(protocol: ProtocolId, msg_type: u8, payload: Vec<u8>) -> Self {
        ProtocolFrame {
            protocol,
            msg_type,
            payload,
        }
    }

    pub fn reject(protocol: ProtocolId) -> Self {
        ProtocolFrame::new(protocol, REJECT, Vec::new())
    }

    pub fn is_reject(&self) -> bool {
        self.msg_type == REJECT
    }

    pub fn encode(&self) -> Vec<u8> {
        assert!(self.payload.len() <= MAX_PAYLOAD, "payload exceeds frame limit");
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(VERSION);
        out.push(self.protocol.byte());
        out.push(self.msg_type);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated);
        }
        let header: &[u8; HEADER_LEN] = bytes[..HEADER_LEN].try_into().expect("length checked");
        let (protocol, msg_type, len) = parse_header(header)?;
        let body = &bytes[HEADER_LEN..];
        match body.len().cmp(&len) {
            std::cmp::Ordering::Less => Err(Error::Truncated),
            std::cmp::Ordering::Greater => Err(Error::LengthMismatch),
            std::cmp::Ordering::Equal => Ok(ProtocolFrame::new(protocol, msg_type, body.to_vec())),
        }
    }

    /// Checks protocol and message type, handing back the payload.
    pub fn expect(&self, protocol: ProtocolId, msg_type: u8) -> Result<&[u8]> {
        if self.protocol != protocol {
            return Err(Error::UnknownProtocol(self.protocol.byte()));
        }
        if self.msg_type == REJECT {
            return Err(Error::Rejected);
        }
        if self.msg_type != msg_type {
            return Err(Error::UnexpectedMessage(self.msg_type));
        }
        Ok(&self.payload)
    }
}

/// Validates a frame header and returns `(protocol, msg type, payload length)`.
pub fn parse_header(header: &[u8; HEADER_LEN]) -> Result<(ProtocolId, u8, usize)> {
    if header[0] != VERSION {
        return Err(Error::BadVersion(header[0]));
    }
    let protocol = ProtocolId::from_byte(header[1])?;
    let len = u32::from_be_bytes(header[3..7].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(Error::PayloadTooLarge);
    }
    Ok((protocol, header[2], len))
}

/// Builds payloads from fixed-width and u16-length-prefixed fields.
#[derive(Default)]
pub struct PayloadWriter {
    buf: Vec<u8>,
}

impl PayloadWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fixed(mut self, bytes: &[u8]) -> Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn var(mut self, bytes: &[u8]) -> Self {
        let len = u16::try_from(bytes.len()).expect("field longer than 65535 bytes");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct PayloadReader<'a> {
    rest: &'a [u8],
}

impl<'a> PayloadReader<'a> {
    pub fn new(payload: &'a [u8]) -> Self {
        PayloadReader { rest: payload }
    }

    pub fn fixed(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.rest.len() < len {
            return Err(Error::InvalidEncoding);
        }
        let (head, tail) = self.rest.split_at(len);
        self.rest = tail;
        Ok(head)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.fixed(N)?.try_into().expect("length checked"))
    }

    pub fn var(&mut self) -> Result<&'a [u8]> {
        let len = u16::from_be_bytes(self.array::<2>()?) as usize;
        self.fixed(len)
    }

    pub fn finish(self) -> Result<()> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidEncoding)
        }
    }
}

/// First message of the group protocols: `var(C) || R_A`.
pub fn hello_frame(protocol: ProtocolId, identity: &[u8], r_a: &GroupElement) -> ProtocolFrame {
    let payload = PayloadWriter::new().var(identity).fixed(&r_a.to_bytes()).finish();
    ProtocolFrame::new(protocol, MSG1, payload)
}

pub fn parse_hello(config: &GroupConfig, protocol: ProtocolId, frame: &ProtocolFrame) -> Result<(Vec<u8>, GroupElement)> {
    let mut r = PayloadReader::new(frame.expect(protocol, MSG1)?);
    let identity = r.var()?.to_vec();
    let r_a = config.decode_element(r.fixed(config.element_len())?)?;
    r.finish()?;
    Ok((identity, r_a))
}

/// Second message of the group protocols: `R_B`.
pub fn parse_reply(config: &GroupConfig, protocol: ProtocolId, frame: &ProtocolFrame) -> Result<GroupElement> {
    let mut r = PayloadReader::new(frame.expect(protocol, MSG2)?);
    let r_b = config.decode_element(r.fixed(config.element_len())?)?;
    r.finish()?;
    Ok(r_b)
}

/// Reversed-order second message: `R_B || C_S`.
pub fn parse_reply_with_confirmation(
    config: &GroupConfig,
    protocol: ProtocolId,
    frame: &ProtocolFrame,
) -> Result<(GroupElement, [u8; TAG_LEN])> {
    let mut r = PayloadReader::new(frame.expect(protocol, MSG2_WITH_CONFIRMATION)?);
    let r_b = config.decode_element(r.fixed(config.element_len())?)?;
    let tag = r.array()?;
    r.finish()?;
    Ok((r_b, tag))
}

/// A payload made of exactly one confirmation tag.
pub fn parse_tag(protocol: ProtocolId, msg_type: u8, frame: &ProtocolFrame) -> Result<[u8; TAG_LEN]> {
    let mut r = PayloadReader::new(frame.expect(protocol, msg_type)?);
    let tag = r.array()?;
    r.finish()?;
    Ok(tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn truncated_frame_is_rejected() {
        let f = ProtocolFrame::new(ProtocolId::Pscab, MSG1, vec![1, 2, 3]);
        let bytes = f.encode();
        assert_eq!(ProtocolFrame::decode(&bytes[..bytes.len() - 1]), Err(Error::Truncated));
        assert_eq!(ProtocolFrame::decode(&bytes[..3]), Err(Error::Truncated));
    }

    #[test]
    fn bad_version_and_protocol() {
        let mut bytes = ProtocolFrame::new(ProtocolId::Ssca, MSG1, vec![]).encode();
        bytes[0] = 0x02;
        assert_eq!(ProtocolFrame::decode(&bytes), Err(Error::BadVersion(0x02)));
        bytes[0] = VERSION;
        bytes[1] = 0x09;
        assert_eq!(ProtocolFrame::decode(&bytes), Err(Error::UnknownProtocol(0x09)));
    }

    #[test]
    fn trailing_bytes_and_oversize() {
        let mut bytes = ProtocolFrame::new(ProtocolId::Ssca, MSG1, vec![7]).encode();
        bytes.push(0);
        assert_eq!(ProtocolFrame::decode(&bytes), Err(Error::LengthMismatch));
        let header = [VERSION, 0x01, MSG1, 0x01, 0x00, 0x00, 0x01];
        assert_eq!(parse_header(&header), Err(Error::PayloadTooLarge));
    }

    #[test]
    fn reject_frames_are_surfaced() {
        let f = ProtocolFrame::reject(ProtocolId::Pscav);
        assert!(f.payload.is_empty());
        assert_eq!(f.expect(ProtocolId::Pscav, MSG2), Err(Error::Rejected));
    }

    #[test]
    fn payload_reader_rejects_leftovers() {
        let p = PayloadWriter::new().var(b"abc").fixed(&[1, 2]).finish();
        let mut r = PayloadReader::new(&p);
        assert_eq!(r.var().unwrap(), b"abc");
        assert_eq!(r.fixed(1).unwrap(), &[1]);
        assert!(r.finish().is_err());
    }

    proptest! {
        #[test]
        fn prop_frame_round_trip(pid in 1u8..=4, msg in any::<u8>(),
                                 payload in proptest::collection::vec(any::<u8>(), 0..512)) {
            let f = ProtocolFrame::new(ProtocolId::from_byte(pid).unwrap(), msg, payload);
            prop_assert_eq!(ProtocolFrame::decode(&f.encode()).unwrap(), f);
        }

        #[test]
        fn prop_decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = ProtocolFrame::decode(&bytes);
        }
    }
}
