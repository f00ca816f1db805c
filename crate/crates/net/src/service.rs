//! The TCP authentication service.
//!
//! Each connection carries exactly one handshake. Anything out of place, a
//! second hello included, earns the single opaque reject frame and the
//! connection is closed.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};
use rand::{CryptoRng, RngCore};

use scauth::handshake::Authenticator;
use scauth::wire::{ProtocolFrame, ProtocolId, ACCEPT, MSG1, MSG3};

use crate::error::NetResult;
use crate::store::ServerStore;
use crate::transport::{read_frame, write_frame, ReadError};

#[derive(Clone, Copy, Debug)]
pub struct ServiceConfig {
    pub read_timeout: Duration,
    /// Larger frames are refused before their payload is read.
    pub max_payload: usize,
    /// Connections beyond this many are refused at once.
    pub max_connections: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            read_timeout: Duration::from_secs(10),
            max_payload: 1 << 16,
            max_connections: 256,
        }
    }
}

/// How one connection ended.
#[derive(Debug, PartialEq, Eq)]
pub enum SessionOutcome {
    Accepted { protocol: ProtocolId, identity: Vec<u8> },
    Rejected,
    /// The peer went away or timed out before the handshake finished.
    Closed,
}

pub struct AuthService {
    servers: BTreeMap<ProtocolId, Authenticator>,
    config: ServiceConfig,
}

impl AuthService {
    /// Serves every protocol the store has credentials for, or only `only`.
    pub fn from_store(store: &ServerStore, only: Option<ProtocolId>, config: ServiceConfig) -> NetResult<Self> {
        let mut servers = BTreeMap::new();
        for protocol in store.protocols() {
            if only.is_some_and(|p| p != protocol) {
                continue;
            }
            if let Some(server) = store.authenticator(protocol)? {
                servers.insert(protocol, server);
            }
        }
        Ok(AuthService { servers, config })
    }

    pub fn protocols(&self) -> Vec<ProtocolId> {
        self.servers.keys().copied().collect()
    }

    pub fn config(&self) -> ServiceConfig {
        self.config
    }

    /// Runs one handshake over `stream`.
    pub fn handle<S: Read + Write, R: RngCore + CryptoRng>(&self, stream: &mut S, session: u64, rng: &mut R) -> SessionOutcome {
        let max = self.config.max_payload;
        let hello = match read_frame(stream, max) {
            Ok(f) => f,
            Err(e) => return refuse_unread(stream, session, e),
        };
        let protocol = hello.protocol;
        let server = match self.servers.get(&protocol) {
            Some(s) if hello.msg_type == MSG1 => s,
            Some(_) => return refuse(stream, session, protocol, "unexpected message"),
            None => return refuse(stream, session, protocol, "protocol not served"),
        };
        let (flow, reply) = match server.respond(&hello, rng) {
            Ok(v) => v,
            Err(e) => return refuse(stream, session, protocol, &e.to_string()),
        };
        let identity = flow.identity().to_vec();
        if let Err(e) = write_frame(stream, &reply) {
            return closed(session, &e);
        }

        let confirmation = match read_frame(stream, max) {
            Ok(f) => f,
            Err(e) => return refuse_unread(stream, session, e),
        };
        if confirmation.protocol != protocol || confirmation.msg_type != MSG3 {
            return refuse(stream, session, protocol, "unexpected message");
        }
        let (last, key) = match flow.finish(&confirmation) {
            Ok(v) => v,
            Err(e) => return refuse(stream, session, protocol, &e.to_string()),
        };
        let sent = last
            .map_or(Ok(()), |f| write_frame(stream, &f))
            .and_then(|()| write_frame(stream, &ProtocolFrame::new(protocol, ACCEPT, key.check_value().to_vec())));
        if let Err(e) = sent {
            return closed(session, &e);
        }
        info!("session {session}: accept {protocol} identity={}", hex::encode(&identity));
        SessionOutcome::Accepted { protocol, identity }
    }

    /// Binds `addr` and serves on a background thread.
    pub fn spawn(self, addr: SocketAddr) -> io::Result<ServiceHandle> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let service = Arc::new(self);
        let thread = thread::spawn(move || service.accept_loop(listener, &flag));
        Ok(ServiceHandle {
            addr: local,
            stop,
            thread: Some(thread),
        })
    }

    /// Accepts connections on `listener` until the process exits.
    pub fn serve(self, listener: TcpListener) {
        Arc::new(self).accept_loop(listener, &AtomicBool::new(false));
    }

    fn accept_loop(self: Arc<Self>, listener: TcpListener, stop: &AtomicBool) {
        let sessions = AtomicU64::new(1);
        let active = Arc::new(AtomicUsize::new(0));
        for incoming in listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let mut stream = match incoming {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let session = sessions.fetch_add(1, Ordering::Relaxed);
            if active.fetch_add(1, Ordering::SeqCst) >= self.config.max_connections {
                active.fetch_sub(1, Ordering::SeqCst);
                warn!("session {session}: reject (too many connections)");
                let _ = write_frame(&mut stream, &ProtocolFrame::reject(ProtocolId::Ssca));
                continue;
            }
            let service = Arc::clone(&self);
            let active = Arc::clone(&active);
            thread::spawn(move || {
                service.handle_tcp(stream, session);
                active.fetch_sub(1, Ordering::SeqCst);
            });
        }
    }

    fn handle_tcp(&self, mut stream: TcpStream, session: u64) {
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "?".into());
        debug!("session {session}: connection from {peer}");
        if let Err(e) = stream.set_read_timeout(Some(self.config.read_timeout)) {
            warn!("session {session}: {e}");
            return;
        }
        let _ = stream.set_nodelay(true);
        self.handle(&mut stream, session, &mut rand::thread_rng());
    }
}

fn refuse<S: Write>(stream: &mut S, session: u64, protocol: ProtocolId, reason: &str) -> SessionOutcome {
    warn!("session {session}: reject {protocol} ({reason})");
    let _ = write_frame(stream, &ProtocolFrame::reject(protocol));
    SessionOutcome::Rejected
}

fn refuse_unread<S: Write>(stream: &mut S, session: u64, error: ReadError) -> SessionOutcome {
    match error {
        ReadError::Io(e) => closed(session, &e),
        ReadError::Invalid { protocol, error } => {
            refuse(stream, session, protocol.unwrap_or(ProtocolId::Ssca), &error.to_string())
        }
    }
}

fn closed(session: u64, error: &io::Error) -> SessionOutcome {
    info!("session {session}: closed ({})", error.kind());
    SessionOutcome::Closed
}

/// A service running on a background thread; stops when dropped.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept so the loop sees the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
