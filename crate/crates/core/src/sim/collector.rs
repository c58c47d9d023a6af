//! Hypervisor-side collection: turns the raw tap into a trace.
//!
//! One code page is mapped at a time, so every switch of executing page
//! is a code fetch. Data pages live in a FIFO queue; touching a page that
//! is not queued is a data fault. A page's cache-line set and ciphertext
//! diffs are read out when it leaves the queue, which is when a real
//! attacker would unmap it and probe.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use rand::Rng;

use super::{Cipher, MemEvent, PageAttrs};
use crate::rng::{derive_seed, rng_from, SimRng};
use crate::trace::{
    Block16, Channel, ChannelSet, CounterSnapshot, Gpn, LineSet, MarkerKind, Trace, TraceError, TraceEvent,
};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CacheNoise {
    /// Probability that a touched line is missed.
    pub drop_prob: f64,
    /// Probability that an untouched line shows up anyway.
    pub flip_prob: f64,
}

impl Default for CacheNoise {
    fn default() -> Self {
        CacheNoise {
            drop_prob: 0.0,
            flip_prob: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CollectorPolicy {
    pub channels: ChannelSet,
    pub data_queue_len: usize,
    pub skip_unencrypted: bool,
    pub skip_reserved: bool,
    pub targeted: bool,
    pub cache_noise: CacheNoise,
    pub rng_seed: u64,
}

impl Default for CollectorPolicy {
    fn default() -> Self {
        CollectorPolicy {
            channels: ChannelSet::of(&[Channel::Page]),
            data_queue_len: 4,
            skip_unencrypted: true,
            skip_reserved: true,
            targeted: false,
            cache_noise: CacheNoise::default(),
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("no channels enabled")]
    NoChannels,
    #[error("the {0} channel needs the page channel")]
    NeedsPage(&'static str),
    #[error("data_queue_len must be at least 1")]
    QueueLen,
    #[error("{0} must lie in [0, 1]")]
    Probability(&'static str),
}

impl CollectorPolicy {
    pub fn with_channels(channels: &[Channel]) -> Self {
        CollectorPolicy {
            channels: ChannelSet::of(channels),
            ..Self::default()
        }
    }

    pub fn targeted(mut self, on: bool) -> Self {
        self.targeted = on;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let ch = self.channels;
        if ch.is_empty() {
            return Err(PolicyError::NoChannels);
        }
        for c in [Channel::Cache, Channel::Pmc] {
            if ch.contains(c) && !ch.contains(Channel::Page) {
                return Err(PolicyError::NeedsPage(c.name()));
            }
        }
        if self.data_queue_len == 0 {
            return Err(PolicyError::QueueLen);
        }
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.cache_noise.drop_prob) {
            return Err(PolicyError::Probability("cache_noise.drop_prob"));
        }
        if !ok(self.cache_noise.flip_prob) {
            return Err(PolicyError::Probability("cache_noise.flip_prob"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CollectError {
    #[error("invalid policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("tap event {index}: unbalanced marker")]
    UnbalancedMarkers { index: usize },
    #[error("{0}")]
    Trace(#[from] TraceError),
}

struct Resident {
    gpn: Gpn,
    touched: LineSet,
    in_step: bool,
    /// block -> (plaintext at fault time, latest plaintext)
    written: BTreeMap<u8, (Block16, Block16)>,
    event: Option<usize>,
}

struct Collector<'a> {
    policy: &'a CollectorPolicy,
    cipher: &'a Cipher,
    out: Vec<TraceEvent>,
    code: Option<Gpn>,
    queue: VecDeque<Resident>,
    counters: [u64; 5],
    rng: SimRng,
}

impl Collector<'_> {
    fn on(&self, c: Channel) -> bool {
        self.policy.channels.contains(c)
    }

    fn snapshot(&mut self) {
        if self.on(Channel::Pmc) {
            self.out.push(TraceEvent::Counters(CounterSnapshot::from_values(self.counters)));
        }
        self.counters = [0; 5];
    }

    fn noisy_lines(&mut self, touched: LineSet) -> LineSet {
        let noise = self.policy.cache_noise;
        if noise.drop_prob == 0.0 && noise.flip_prob == 0.0 {
            return touched;
        }
        let mut lines = LineSet::EMPTY;
        for l in 0..64u8 {
            let keep = if touched.contains(l) {
                noise.drop_prob == 0.0 || !self.rng.gen_bool(noise.drop_prob)
            } else {
                noise.flip_prob > 0.0 && self.rng.gen_bool(noise.flip_prob)
            };
            if keep {
                lines.insert(l);
            }
        }
        lines
    }

    fn evict(&mut self, r: Resident) {
        if let Some(idx) = r.event {
            if self.on(Channel::Cache) {
                let lines = self.noisy_lines(r.touched);
                if let TraceEvent::DataAccess { lines: slot, .. } = &mut self.out[idx] {
                    *slot = lines;
                }
            }
        }
        if self.on(Channel::Cipher) {
            for (&block, (orig, latest)) in &r.written {
                if orig != latest {
                    self.out.push(TraceEvent::CiphertextDiff {
                        gpn: r.gpn,
                        block,
                        before: self.cipher.encrypt(r.gpn, block, orig),
                        after: self.cipher.encrypt(r.gpn, block, latest),
                    });
                }
            }
        }
    }

    fn flush(&mut self, emit: bool) {
        while let Some(r) = self.queue.pop_front() {
            if emit {
                self.evict(r);
            }
        }
        self.code = None;
    }

    fn data_access(&mut self, gpn: Gpn, line: u8) -> &mut Resident {
        let pos = match self.queue.iter().position(|r| r.gpn == gpn) {
            Some(p) => p,
            None => {
                if self.queue.len() >= self.policy.data_queue_len {
                    // Oldest page not needed by the current step; grow if none.
                    if let Some(victim) = self.queue.iter().position(|r| !r.in_step) {
                        let r = self.queue.remove(victim).unwrap();
                        self.evict(r);
                    }
                }
                let event = if self.on(Channel::Page) {
                    self.out.push(TraceEvent::DataAccess {
                        gpn,
                        lines: LineSet::EMPTY,
                    });
                    Some(self.out.len() - 1)
                } else {
                    None
                };
                if event.is_some() {
                    self.snapshot();
                }
                self.queue.push_back(Resident {
                    gpn,
                    touched: LineSet::EMPTY,
                    in_step: false,
                    written: BTreeMap::new(),
                    event,
                });
                self.queue.len() - 1
            }
        };
        let r = &mut self.queue[pos];
        r.touched.insert(line);
        r.in_step = true;
        r
    }

    fn step_boundary(&mut self) {
        for r in self.queue.iter_mut() {
            r.in_step = false;
        }
        while self.queue.len() > self.policy.data_queue_len {
            let r = self.queue.pop_front().unwrap();
            self.evict(r);
        }
    }
}

/// Replays `tap` through the collector state machine.
///
/// This is a pure function of its inputs: the only randomness is the cache
/// noise generator, seeded from `policy.rng_seed` and `seed`. Pages that
/// `attrs` does not know are treated as ordinary encrypted data pages.
pub fn collect(
    tap: &[MemEvent],
    attrs: impl Fn(Gpn) -> Option<PageAttrs>,
    cipher: &Cipher,
    policy: &CollectorPolicy,
    seed: u64,
) -> Result<Trace, CollectError> {
    policy.validate()?;
    let mut c = Collector {
        policy,
        cipher,
        out: Vec::new(),
        code: None,
        queue: VecDeque::new(),
        counters: [0; 5],
        rng: rng_from(derive_seed(policy.rng_seed, seed)),
    };
    let skipped = |g: Gpn| match attrs(g) {
        Some(a) => (policy.skip_unencrypted && !a.encrypted) || (policy.skip_reserved && a.reserved),
        None => false,
    };
    let mut window_open = false;
    let mut active = !policy.targeted;

    for (index, ev) in tap.iter().enumerate() {
        if let MemEvent::MarkerRaw(kind) = *ev {
            let opening = kind == MarkerKind::Start;
            if opening == window_open {
                return Err(CollectError::UnbalancedMarkers { index });
            }
            window_open = opening;
            if policy.targeted {
                if opening {
                    c.flush(false);
                    c.counters = [0; 5];
                    c.out.push(TraceEvent::Marker(MarkerKind::Start));
                } else {
                    c.flush(true);
                    c.out.push(TraceEvent::Marker(MarkerKind::Stop));
                }
                active = opening;
            }
            continue;
        }
        if !active {
            continue;
        }
        match *ev {
            MemEvent::Exec { gpn } => {
                if skipped(gpn) {
                    continue;
                }
                c.counters[0] += 1;
                c.counters[1] += 1;
                if c.code != Some(gpn) {
                    c.code = Some(gpn);
                    if c.on(Channel::Page) {
                        c.out.push(TraceEvent::CodeFetch { gpn });
                        c.snapshot();
                    }
                }
            }
            MemEvent::Read { gpn, line } => {
                if skipped(gpn) {
                    continue;
                }
                c.counters[0] += 1;
                c.counters[1] += 1;
                c.data_access(gpn, line);
            }
            MemEvent::Write {
                gpn,
                line,
                block,
                old_plain,
                new_plain,
            } => {
                if skipped(gpn) {
                    continue;
                }
                c.counters[0] += 1;
                c.counters[1] += 2;
                let r = c.data_access(gpn, line);
                r.written.entry(block).or_insert((old_plain, old_plain)).1 = new_plain;
            }
            MemEvent::Branch { taken, is_return } => {
                c.counters[0] += 1;
                c.counters[1] += 1;
                c.counters[2] += 1;
                c.counters[3] += taken as u64;
                c.counters[4] += is_return as u64;
            }
            MemEvent::StepBoundary => c.step_boundary(),
            MemEvent::MarkerRaw(_) => unreachable!(),
        }
    }
    if window_open {
        return Err(CollectError::UnbalancedMarkers { index: tap.len() });
    }
    if active {
        c.flush(true);
    }
    Ok(Trace::new(seed, policy.channels, c.out)?)
}
