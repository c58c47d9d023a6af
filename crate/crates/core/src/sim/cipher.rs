//! Deterministic, address-tweaked block "encryption".
//!
//! Each 16-byte block is enciphered with a six-round Feistel network over
//! two 64-bit halves. Round keys are derived from the machine key, the page
//! number and the block index, so the same plaintext at two addresses gives
//! unrelated ciphertexts while the same plaintext at one address always
//! gives the same ciphertext. For a fixed address the map is a bijection.

use crate::rng::mix64;
use crate::trace::{Block16, Gpn};

const ROUNDS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cipher {
    key: u64,
}

impl Cipher {
    pub fn new(key: u64) -> Self {
        Cipher { key }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    fn round_keys(&self, gpn: Gpn, block: u8) -> [u64; ROUNDS] {
        let tweak = mix64(self.key ^ mix64(gpn.0.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((block as u64) << 48)));
        let mut keys = [0u64; ROUNDS];
        let mut k = tweak;
        for rk in keys.iter_mut() {
            k = mix64(k.wrapping_add(0x6a09_e667_f3bc_c909));
            *rk = k;
        }
        keys
    }

    /// Ciphertext of `plain` stored at block `block` of page `gpn`.
    pub fn encrypt(&self, gpn: Gpn, block: u8, plain: &Block16) -> Block16 {
        let keys = self.round_keys(gpn, block);
        let mut l = u64::from_le_bytes(plain[..8].try_into().unwrap());
        let mut r = u64::from_le_bytes(plain[8..].try_into().unwrap());
        for k in keys {
            let f = mix64(r ^ k);
            let nl = r;
            r = l ^ f;
            l = nl;
        }
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&l.to_le_bytes());
        out[8..].copy_from_slice(&r.to_le_bytes());
        out
    }

    pub fn decrypt(&self, gpn: Gpn, block: u8, ct: &Block16) -> Block16 {
        let keys = self.round_keys(gpn, block);
        let mut l = u64::from_le_bytes(ct[..8].try_into().unwrap());
        let mut r = u64::from_le_bytes(ct[8..].try_into().unwrap());
        for k in keys.iter().rev() {
            let f = mix64(l ^ k);
            let nr = l;
            l = r ^ f;
            r = nr;
        }
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&l.to_le_bytes());
        out[8..].copy_from_slice(&r.to_le_bytes());
        out
    }
}
