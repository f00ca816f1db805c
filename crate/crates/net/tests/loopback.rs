//! The service and client talking over real loopback sockets.

mod common;

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use scauth::group::GroupConfig;
use scauth::wire::{ProtocolFrame, ProtocolId, ACCEPT, MSG1, MSG2, REJECT};
use scauth_net::client::{authenticate, authenticate_with_image};
use scauth_net::image;
use scauth_net::service::{AuthService, ServiceConfig, ServiceHandle, SessionOutcome};
use scauth_net::store::ServerStore;
use scauth_net::transport::{read_frame, write_frame};
use scauth_net::NetError;

use common::{hostile_input, split_frames, MemStream};

const PASSWORD: &[u8] = b"open sesame";
const TIMEOUT: Duration = Duration::from_secs(5);

struct Deployment {
    dir: tempfile::TempDir,
    store: ServerStore,
    service: ServiceHandle,
}

impl Deployment {
    /// One card per protocol, `card-<protocol>.img`, all with password `PASSWORD`.
    fn new(limit: u32) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut store = ServerStore::new(GroupConfig::mersenne61(), b"auth.example").unwrap();
        for p in ProtocolId::ALL {
            let card = store.personalize(p, format!("user-{p}").as_bytes(), PASSWORD, limit, &mut rng).unwrap();
            image::save(&dir.path().join(format!("card-{p}.img")), &card).unwrap();
        }
        let service = AuthService::from_store(&store, None, ServiceConfig::default())
            .unwrap()
            .spawn("127.0.0.1:0".parse().unwrap())
            .unwrap();
        Deployment { dir, store, service }
    }

    fn card(&self, p: ProtocolId) -> PathBuf {
        self.dir.path().join(format!("card-{p}.img"))
    }

    fn addr(&self) -> SocketAddr {
        self.service.addr()
    }

    fn auth(&self, p: ProtocolId, password: &[u8]) -> Result<String, NetError> {
        authenticate_with_image(&self.card(p), self.addr(), password, TIMEOUT).map(|r| r.check)
    }
}

fn connect(addr: SocketAddr) -> TcpStream {
    let s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(TIMEOUT)).unwrap();
    s
}

/// Everything the peer sends until it closes the connection.
fn drain(stream: &mut TcpStream) -> Vec<ProtocolFrame> {
    let mut frames = Vec::new();
    while let Ok(f) = read_frame(stream, 1 << 16) {
        frames.push(f);
    }
    let mut rest = Vec::new();
    let _ = stream.read_to_end(&mut rest);
    assert!(rest.is_empty());
    frames
}

#[test]
fn every_protocol_authenticates_over_tcp() {
    let d = Deployment::new(0);
    for p in ProtocolId::ALL {
        let check = d.auth(p, PASSWORD).unwrap();
        assert_eq!(check.len(), 16);
        assert!(check.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));
        // Fresh ephemerals every run give a fresh key.
        assert_ne!(d.auth(p, PASSWORD).unwrap(), check);
    }
}

#[test]
fn check_value_matches_the_servers_key() {
    let d = Deployment::new(0);
    for p in ProtocolId::ALL {
        let mut card = image::load(&d.card(p)).unwrap();
        let mut stream = Recorder(connect(d.addr()), Vec::new());
        let report = authenticate(&mut stream, &mut card, PASSWORD, |_| Ok(())).unwrap();
        let from_server = split_frames(&stream.1);
        let accept = from_server.last().unwrap();
        assert_eq!(accept.msg_type, ACCEPT);
        assert_eq!(hex::encode(&accept.payload), report.check);
    }
}

/// Keeps a copy of every byte read through it.
struct Recorder(TcpStream, Vec<u8>);

impl Read for Recorder {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.0.read(buf)?;
        self.1.extend_from_slice(&buf[..n]);
        Ok(n)
    }
}

impl Write for Recorder {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

#[test]
fn wrong_password_is_rejected_and_service_keeps_serving() {
    let d = Deployment::new(0);
    for p in ProtocolId::ALL {
        assert!(matches!(d.auth(p, b"not it"), Err(NetError::Rejected)), "{p}");
        assert!(d.auth(p, PASSWORD).is_ok(), "{p}");
    }
}

#[test]
fn concurrent_clients_all_succeed() {
    let d = Deployment::new(0);
    let addr = d.addr();
    let workers: Vec<_> = ProtocolId::ALL
        .into_iter()
        .flat_map(|p| std::iter::repeat_n(p, 4))
        .enumerate()
        .map(|(i, p)| {
            let card = image::encode(&image::load(&d.card(p)).unwrap());
            thread::spawn(move || {
                let mut card = image::decode(&card).unwrap();
                let mut stream = connect(addr);
                let pw: &[u8] = if i % 3 == 0 { b"wrong" } else { PASSWORD };
                (i, authenticate(&mut stream, &mut card, pw, |_| Ok(())).is_ok())
            })
        })
        .collect();
    for w in workers {
        let (i, ok) = w.join().unwrap();
        assert_eq!(ok, i % 3 != 0, "client {i}");
    }
}

#[test]
fn second_session_on_one_connection_is_rejected() {
    let d = Deployment::new(0);
    for p in ProtocolId::ALL {
        let mut card = image::load(&d.card(p)).unwrap();
        let mut stream = connect(d.addr());
        let (_, hello) = card.start(PASSWORD).unwrap();
        write_frame(&mut stream, &hello).unwrap();
        assert_eq!(read_frame(&mut stream, 1 << 16).unwrap().msg_type, MSG2);
        let (_, second) = card.start(PASSWORD).unwrap();
        write_frame(&mut stream, &second).unwrap();
        let frames = drain(&mut stream);
        assert_eq!(frames, vec![ProtocolFrame::reject(p)], "{p}");
    }
}

#[test]
fn malformed_frames_get_an_opaque_reject() {
    let d = Deployment::new(0);
    let cases: Vec<Vec<u8>> = vec![
        vec![0x02, 0x01, MSG1, 0, 0, 0, 0],
        vec![0x01, 0x09, MSG1, 0, 0, 0, 0],
        vec![0x01, 0x04, MSG1, 0, 0, 0, 3, 1, 2, 3],
        vec![0x01, 0x02, 0x03, 0, 0, 0, 0],
        vec![0x01, 0x01, MSG1, 0xff, 0xff, 0xff, 0xff],
    ];
    for bytes in cases {
        let mut stream = connect(d.addr());
        stream.write_all(&bytes).unwrap();
        let frames = drain(&mut stream);
        assert_eq!(frames.len(), 1, "{bytes:02x?}");
        assert_eq!(frames[0].msg_type, REJECT);
        assert!(frames[0].payload.is_empty());
    }
    assert!(d.auth(ProtocolId::Pscav, PASSWORD).is_ok());
}

#[test]
fn unknown_identity_is_rejected_like_a_wrong_password() {
    let d = Deployment::new(0);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut other = ServerStore::new(GroupConfig::mersenne61(), b"auth.example").unwrap();
    let card = other.personalize(ProtocolId::Pscav, b"stranger", PASSWORD, 0, &mut rng).unwrap();
    let path = d.dir.path().join("stranger.img");
    image::save(&path, &card).unwrap();
    let result = authenticate_with_image(&path, d.addr(), PASSWORD, TIMEOUT);
    assert!(matches!(result, Err(NetError::Rejected)));
}

#[test]
fn counter_survives_restarts_and_destroys_the_card() {
    let d = Deployment::new(3);
    let p = ProtocolId::Pscab;
    for _ in 0..3 {
        assert!(matches!(d.auth(p, b"guess"), Err(NetError::Rejected)));
    }
    let err = d.auth(p, PASSWORD).unwrap_err();
    assert!(matches!(err, NetError::CardDestroyed));
    assert_eq!(err.exit_code(), 5);
    // Destroyed for good, even with the right password.
    assert!(matches!(d.auth(p, PASSWORD), Err(NetError::CardDestroyed)));
}

#[test]
fn successful_login_resets_the_counter() {
    let d = Deployment::new(3);
    for p in ProtocolId::ALL {
        assert!(matches!(d.auth(p, b"guess"), Err(NetError::Rejected)));
        assert!(matches!(d.auth(p, b"guess"), Err(NetError::Rejected)));
        d.auth(p, PASSWORD).unwrap();
        assert_eq!(image::load(&d.card(p)).unwrap().counter().used(), 0, "{p}");
    }
}

#[test]
fn server_down_is_a_network_error() {
    let d = Deployment::new(0);
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let err = authenticate_with_image(&d.card(ProtocolId::Ssca), addr, PASSWORD, TIMEOUT).unwrap_err();
    assert!(matches!(err, NetError::Network(_)));
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn store_file_round_trips_byte_for_byte() {
    let d = Deployment::new(0);
    let a = d.dir.path().join("a.db");
    let b = d.dir.path().join("b.db");
    d.store.save(&a).unwrap();
    ServerStore::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn protocol_filter_limits_what_is_served() {
    let d = Deployment::new(0);
    let only = AuthService::from_store(&d.store, Some(ProtocolId::Ssca), ServiceConfig::default())
        .unwrap()
        .spawn("127.0.0.1:0".parse().unwrap())
        .unwrap();
    assert!(authenticate_with_image(&d.card(ProtocolId::Ssca), only.addr(), PASSWORD, TIMEOUT).is_ok());
    let err = authenticate_with_image(&d.card(ProtocolId::Pscav), only.addr(), PASSWORD, TIMEOUT).unwrap_err();
    assert!(matches!(err, NetError::Rejected));
}

fn honest_hellos(store: &ServerStore) -> Vec<Vec<u8>> {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut scratch = ServerStore::new(store.config(), store.server_identity()).unwrap();
    ProtocolId::ALL
        .into_iter()
        .map(|p| {
            let mut card = scratch.personalize(p, b"fuzz", b"pw", 0, &mut rng).unwrap();
            card.start(b"pw").unwrap().1.encode()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn handler_never_accepts_or_misbehaves_on_hostile_input(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut store = ServerStore::new(GroupConfig::mersenne61(), b"srv").unwrap();
        for p in ProtocolId::ALL {
            store.personalize(p, b"fuzz", b"pw", 0, &mut rng).unwrap();
        }
        let service = AuthService::from_store(&store, None, ServiceConfig::default()).unwrap();
        let hellos = honest_hellos(&store);
        let mut stream = MemStream::new(hostile_input(&mut rng, &hellos));
        let outcome = service.handle(&mut stream, 1, &mut rng);
        let accepted = matches!(outcome, SessionOutcome::Accepted { .. });
        prop_assert!(!accepted);
        let frames = stream.written_frames();
        prop_assert!(frames.len() <= 2);
        if outcome == SessionOutcome::Rejected {
            let last = frames.last().unwrap();
            prop_assert_eq!(last.msg_type, REJECT);
            prop_assert!(last.payload.is_empty());
        }
    }
}
