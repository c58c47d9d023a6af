//! Covert channel through the ciphertext side channel.
//!
//! The sender encodes each secret byte as the index of the 16-byte block it
//! rewrites on a 4 KiB encoding page, then touches four more pages (loop
//! counter, temporary, two loads) so that every page in the collector's data
//! queue is evicted once per byte. Each byte therefore costs five faults.

use alloc::vec::Vec;

use rand::RngCore;

use crate::rng::rng_from;
use crate::sim::{page_addr, Addr, PageKind, SimError, SimMachine, BLOCK_SIZE};
use crate::trace::{Gpn, MarkerKind, Trace, TraceEvent};

pub const FAULTS_PER_BYTE: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SecretMessage {
    pub bytes: Vec<u8>,
    pub repetitions: usize,
}

impl SecretMessage {
    pub fn random(len: usize, repetitions: usize, seed: u64) -> Self {
        let mut bytes = alloc::vec![0u8; len];
        rng_from(seed).fill_bytes(&mut bytes);
        SecretMessage { bytes, repetitions }
    }
}

impl Default for SecretMessage {
    fn default() -> Self {
        SecretMessage::random(48, 100, 0)
    }
}

pub struct CovertSender {
    code: Gpn,
    encode: Addr,
    counter: Addr,
    temp: Addr,
    loads: [Addr; 2],
}

impl CovertSender {
    pub fn setup(m: &mut SimMachine) -> Self {
        let code = m.alloc(1, PageKind::Code);
        let mut page = || page_addr(m.alloc(1, PageKind::Data));
        CovertSender {
            code,
            encode: page(),
            counter: page(),
            temp: page(),
            loads: [page(), page()],
        }
    }

    pub fn encode_page(&self) -> Gpn {
        crate::sim::gpn_of(self.encode)
    }

    /// Transmits every repetition of `msg` inside one START/STOP window.
    pub fn send(&self, m: &mut SimMachine, msg: &SecretMessage) -> Result<(), SimError> {
        m.marker(MarkerKind::Start);
        m.exec(self.code)?;
        let mut sent: u64 = 0;
        for _ in 0..msg.repetitions {
            for &b in &msg.bytes {
                sent += 1;
                let mut block = [0u8; BLOCK_SIZE];
                block[..8].copy_from_slice(&sent.to_le_bytes());
                m.write(self.encode + b as u64 * BLOCK_SIZE as u64, &block)?;
                m.write_u64(self.counter, sent)?;
                m.write_u64(self.temp, sent.wrapping_mul(31))?;
                m.read_u64(self.loads[0])?;
                m.read_u64(self.loads[1])?;
            }
        }
        m.marker(MarkerKind::Stop);
        Ok(())
    }
}

/// Index of the first byte the decoder could not recover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("undecodable byte at position {position}")]
pub struct DecodeError {
    pub position: usize,
}

/// Recovers the transmitted bytes from a targeted page+cipher trace.
///
/// The first data fault after START identifies the encoding page. Every
/// later fault on it opens a new byte slot, and the slot must contain
/// exactly one ciphertext diff on that page; its block index is the byte.
pub fn covert_decode(trace: &Trace) -> Result<Vec<u8>, DecodeError> {
    let mut encode = None;
    let mut slots: Vec<Vec<u8>> = Vec::new();
    for e in trace.windowed() {
        match *e {
            TraceEvent::DataAccess { gpn, .. } => {
                let enc = *encode.get_or_insert(gpn);
                if gpn == enc {
                    slots.push(Vec::new());
                }
            }
            TraceEvent::CiphertextDiff { gpn, block, .. } if Some(gpn) == encode => match slots.last_mut() {
                Some(slot) => slot.push(block),
                None => return Err(DecodeError { position: 0 }),
            },
            _ => {}
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(position, s)| match s[..] {
            [b] => Ok(b),
            _ => Err(DecodeError { position }),
        })
        .collect()
}
