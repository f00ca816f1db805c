#![allow(dead_code)]

use std::io::{self, Cursor, Read, Write};

use rand::Rng;
use scauth::wire::{ProtocolFrame, HEADER_LEN};

/// A byte stream that replays fixed input and records what was written.
pub struct MemStream {
    input: Cursor<Vec<u8>>,
    pub output: Vec<u8>,
}

impl MemStream {
    pub fn new(input: Vec<u8>) -> Self {
        MemStream {
            input: Cursor::new(input),
            output: Vec::new(),
        }
    }

    pub fn written_frames(&self) -> Vec<ProtocolFrame> {
        split_frames(&self.output)
    }
}

impl Read for MemStream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.input.read(buf)
    }
}

impl Write for MemStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.output.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Splits a byte stream into frames, failing on any leftover.
pub fn split_frames(mut rest: &[u8]) -> Vec<ProtocolFrame> {
    let mut frames = Vec::new();
    while !rest.is_empty() {
        assert!(rest.len() >= HEADER_LEN, "partial header");
        let len = u32::from_be_bytes(rest[3..7].try_into().unwrap()) as usize;
        assert!(rest.len() >= HEADER_LEN + len, "partial frame");
        let (frame, tail) = rest.split_at(HEADER_LEN + len);
        frames.push(ProtocolFrame::decode(frame).expect("malformed frame"));
        rest = tail;
    }
    frames
}

const MSG_TYPES: [u8; 8] = [0x01, 0x02, 0x03, 0x04, 0x12, 0x20, 0xff, 0x7e];

fn random_frame<R: Rng>(rng: &mut R) -> Vec<u8> {
    let mut out = vec![0x01, rng.gen_range(0..=5), MSG_TYPES[rng.gen_range(0..MSG_TYPES.len())]];
    let len = rng.gen_range(0..80usize);
    let declared = match rng.gen_range(0..10) {
        0 => u32::MAX,
        1 => len as u32 + rng.gen_range(1..10),
        _ => len as u32,
    };
    out.extend_from_slice(&declared.to_be_bytes());
    let mut payload = vec![0u8; len];
    rng.fill_bytes(&mut payload);
    out.extend_from_slice(&payload);
    out
}

/// One hostile input for a service connection. `hellos` are honest first
/// messages that the fuzzer may mutate, truncate or follow with garbage.
pub fn hostile_input<R: Rng>(rng: &mut R, hellos: &[Vec<u8>]) -> Vec<u8> {
    let hello = &hellos[rng.gen_range(0..hellos.len())];
    match rng.gen_range(0..6) {
        0 => {
            let mut bytes = vec![0u8; rng.gen_range(0..64)];
            rng.fill_bytes(&mut bytes);
            bytes
        }
        1 => random_frame(rng),
        2 => {
            let mut bytes = hello.clone();
            for _ in 0..rng.gen_range(1..4) {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] ^= 1 << rng.gen_range(0..8);
            }
            bytes
        }
        3 => hello[..rng.gen_range(0..hello.len())].to_vec(),
        4 => {
            let mut bytes = hello.clone();
            bytes.extend(random_frame(rng));
            bytes
        }
        _ => {
            // An honest hello followed by a second hello: a new session on a busy connection.
            let mut bytes = hello.clone();
            bytes.extend_from_slice(&hellos[rng.gen_range(0..hellos.len())]);
            bytes
        }
    }
}
