//! Instrumented victim programs running on [`SimMachine`](crate::sim::SimMachine).
//!
//! Every workload allocates its own code pages and drives the machine the
//! way the real program would touch memory: function calls execute the
//! callee's code page, data structures live in simulated pages, and all
//! loads and stores go through the machine so the collector sees them.

pub mod covert;
pub mod dummy_loop;
pub mod hashmap;
pub mod oram;
pub mod phh;
pub mod pir;
mod simvec;

pub use simvec::SimVec;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
