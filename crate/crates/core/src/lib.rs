//! Simulated confidential-VM side-channel collection and leakage analysis.
//!
//! The crate is `no_std` + `alloc`. It covers the whole pipeline below the
//! I/O layer: a paged guest with deterministic per-block ciphertexts, a
//! hypervisor-style collector that turns raw memory events into traces,
//! instrumented victim workloads, the distinguishing and fingerprinting
//! games, handcrafted features, the classifiers that score leakage, and the
//! dummy-injection mitigation.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod features;
pub mod games;
pub mod mitigation;
pub mod rng;
pub mod sim;
pub mod trace;
pub mod workloads;

pub use trace::{parse_trace, trace_stats, write_trace, Channel, ChannelSet, Gpn, Trace, TraceEvent};
