//! The card-and-reader side of a network handshake.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::time::Duration;

use scauth::handshake::{CardStep, Credential};
use scauth::wire::{ProtocolFrame, ProtocolId, ACCEPT, REJECT};
use scauth::SessionKey;

use crate::error::{NetError, NetResult};
use crate::image;
use crate::transport::{read_frame, write_frame};

/// Upper bound on any frame the server legitimately sends.
const MAX_SERVER_PAYLOAD: usize = 1 << 12;

#[derive(Debug)]
pub struct AuthReport {
    pub protocol: ProtocolId,
    /// Public fingerprint of the agreed session key, 16 hex digits.
    pub check: String,
}

fn next_frame<S: Read>(stream: &mut S) -> NetResult<ProtocolFrame> {
    let frame = read_frame(stream, MAX_SERVER_PAYLOAD)?;
    if frame.msg_type == REJECT {
        return Err(NetError::Rejected);
    }
    Ok(frame)
}

/// Runs one handshake for `card` over `stream`. `persist` sees the card after
/// every change to its stored state, so an interrupted run still counts
/// against the card's attempt limit.
pub fn authenticate<S, P>(stream: &mut S, card: &mut Credential, password: &[u8], mut persist: P) -> NetResult<AuthReport>
where
    S: Read + Write,
    P: FnMut(&Credential) -> NetResult<()>,
{
    let protocol = card.protocol();
    let started = card.start(password);
    persist(card)?;
    let (flow, hello) = started?;
    write_frame(stream, &hello).map_err(NetError::Network)?;

    let reply = next_frame(stream)?;
    let (pending, key) = match flow.step(card, password, &reply) {
        Ok(CardStep::Accept(Some(last), key)) => {
            write_frame(stream, &last).map_err(NetError::Network)?;
            (None, Some(key))
        }
        Ok(CardStep::Accept(None, key)) => (None, Some(key)),
        Ok(CardStep::Continue(next, frame)) => {
            write_frame(stream, &frame).map_err(NetError::Network)?;
            (Some(next), None)
        }
        Err(e) => {
            persist(card)?;
            return Err(e.into());
        }
    };
    let key: SessionKey = match (pending, key) {
        (_, Some(key)) => key,
        (Some(next), None) => {
            let confirmation = next_frame(stream)?;
            match next.step(card, password, &confirmation) {
                Ok(CardStep::Accept(_, key)) => key,
                Ok(CardStep::Continue(..)) => return Err(NetError::Protocol(scauth::Error::UnexpectedMessage(confirmation.msg_type))),
                Err(e) => return Err(e.into()),
            }
        }
        (None, None) => unreachable!("every step yields a flow or a key"),
    };
    persist(card)?;

    let verdict = next_frame(stream)?;
    if verdict.protocol != protocol || verdict.msg_type != ACCEPT || verdict.payload != key.check_value() {
        return Err(NetError::Rejected);
    }
    Ok(AuthReport {
        protocol,
        check: key.check_hex(),
    })
}

/// Loads the card image at `card_path`, authenticates against `server` and
/// writes the card's updated state back.
pub fn authenticate_with_image(card_path: &Path, server: SocketAddr, password: &[u8], timeout: Duration) -> NetResult<AuthReport> {
    let mut card = image::load(card_path)?;
    if card.counter().is_destroyed() {
        return Err(NetError::CardDestroyed);
    }
    let mut stream = TcpStream::connect_timeout(&server, timeout).map_err(NetError::Network)?;
    stream.set_read_timeout(Some(timeout)).map_err(NetError::Network)?;
    stream.set_write_timeout(Some(timeout)).map_err(NetError::Network)?;
    let _ = stream.set_nodelay(true);
    authenticate(&mut stream, &mut card, password, |c| image::save(card_path, c))
}
