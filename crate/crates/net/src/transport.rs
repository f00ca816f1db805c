//! Reading and writing whole frames on a byte stream.

use std::io::{self, Read, Write};

use scauth::wire::{self, ProtocolFrame, ProtocolId, HEADER_LEN};

/// Why no frame could be read.
#[derive(Debug)]
pub enum ReadError {
    /// The stream failed, timed out or closed.
    Io(io::Error),
    /// The bytes did not form an acceptable frame. `protocol` is the header's
    /// protocol id when that much was valid.
    Invalid {
        protocol: Option<ProtocolId>,
        error: scauth::Error,
    },
}

impl From<ReadError> for crate::NetError {
    fn from(e: ReadError) -> Self {
        match e {
            ReadError::Io(e) => crate::NetError::Network(e),
            ReadError::Invalid { error, .. } => crate::NetError::Protocol(error),
        }
    }
}

/// Reads one frame whose payload is at most `max_payload` bytes.
pub fn read_frame<R: Read>(stream: &mut R, max_payload: usize) -> Result<ProtocolFrame, ReadError> {
    let mut header = [0u8; HEADER_LEN];
    stream.read_exact(&mut header).map_err(ReadError::Io)?;
    let protocol = ProtocolId::from_byte(header[1]).ok();
    let (protocol, msg_type, len) =
        wire::parse_header(&header).map_err(|error| ReadError::Invalid { protocol, error })?;
    if len > max_payload {
        return Err(ReadError::Invalid {
            protocol: Some(protocol),
            error: scauth::Error::PayloadTooLarge,
        });
    }
    let mut payload = vec![0u8; len];
    stream.read_exact(&mut payload).map_err(ReadError::Io)?;
    Ok(ProtocolFrame::new(protocol, msg_type, payload))
}

pub fn write_frame<W: Write>(stream: &mut W, frame: &ProtocolFrame) -> io::Result<()> {
    stream.write_all(&frame.encode())?;
    stream.flush()
}
