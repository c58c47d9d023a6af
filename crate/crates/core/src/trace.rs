//! Side-channel trace model and its line-oriented text format.
//!
//! A trace file is a short header followed by one event per line:
//!
//! ```text
//! SEED 42
//! NUM 1
//! CHANNELS page,cache,cipher
//! CF 123dce
//! MA 141b69 CL 60
//! CI 141b69 BK 3 000102030405060708090a0b0c0d0e0f 0f0e0d0c0b0a09080706050403020100
//! PN 12 14 2 1 0
//! ```
//!
//! Hex is lowercase without a `0x` prefix. Lines starting with `#` are
//! comments. Header lines are optional on input (missing fields default to
//! zero / empty) but are always emitted on output, so `write_trace` is the
//! canonical form.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use rand::Rng;

/// Guest physical page numbers must stay below this bound.
pub const GPN_LIMIT: u64 = 1 << 40;

/// Guest physical page number (4 kB units).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Gpn(pub u64);

impl fmt::Display for Gpn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x}", self.0)
    }
}

/// Set of 64-byte cache-line indices within one page, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct LineSet(u64);

impl LineSet {
    pub const EMPTY: LineSet = LineSet(0);

    pub fn from_bits(bits: u64) -> Self {
        LineSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// Adds `line`; returns `false` if the index is not a valid line (>= 64).
    pub fn insert(&mut self, line: u8) -> bool {
        if line >= 64 {
            return false;
        }
        self.0 |= 1 << line;
        true
    }

    pub fn contains(self, line: u8) -> bool {
        line < 64 && self.0 & (1 << line) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Line indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0u8..64).filter(move |&l| self.0 & (1 << l) != 0)
    }
}

impl FromIterator<u8> for LineSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut s = LineSet::EMPTY;
        for l in iter {
            s.insert(l);
        }
        s
    }
}

/// Observation channels the collector can enable.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Channel {
    Page,
    Cache,
    Cipher,
    Pmc,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Page, Channel::Cache, Channel::Cipher, Channel::Pmc];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Page => "page",
            Channel::Cache => "cache",
            Channel::Cipher => "cipher",
            Channel::Pmc => "pmc",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(into = "Vec<Channel>", from = "Vec<Channel>")
)]
pub struct ChannelSet(u8);

impl ChannelSet {
    pub const NONE: ChannelSet = ChannelSet(0);
    pub const ALL: ChannelSet = ChannelSet(0b1111);

    pub fn of(channels: &[Channel]) -> Self {
        channels.iter().copied().collect()
    }

    pub fn contains(self, c: Channel) -> bool {
        self.0 & c.bit() != 0
    }

    pub fn insert(&mut self, c: Channel) {
        self.0 |= c.bit();
    }

    pub fn remove(&mut self, c: Channel) {
        self.0 &= !c.bit();
    }

    pub fn without(mut self, c: Channel) -> Self {
        self.remove(c);
        self
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Channels in canonical order (page, cache, cipher, pmc).
    pub fn iter(self) -> impl Iterator<Item = Channel> {
        Channel::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl FromIterator<Channel> for ChannelSet {
    fn from_iter<I: IntoIterator<Item = Channel>>(iter: I) -> Self {
        let mut s = ChannelSet::NONE;
        for c in iter {
            s.insert(c);
        }
        s
    }
}

impl From<Vec<Channel>> for ChannelSet {
    fn from(v: Vec<Channel>) -> Self {
        v.into_iter().collect()
    }
}

impl From<ChannelSet> for Vec<Channel> {
    fn from(s: ChannelSet) -> Self {
        s.iter().collect()
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.iter().enumerate() {
            if i > 0 {
                f.write_char(',')?;
            }
            f.write_str(c.name())?;
        }
        Ok(())
    }
}

impl FromStr for ChannelSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(ChannelSet::NONE);
        }
        s.split(',').map(|p| p.trim().parse::<Channel>()).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MarkerKind {
    Start,
    Stop,
}

/// Performance-counter deltas since the previous snapshot.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct CounterSnapshot {
    pub instructions: u64,
    pub uops: u64,
    pub branches: u64,
    pub taken_branches: u64,
    pub returns: u64,
}

impl CounterSnapshot {
    pub fn values(&self) -> [u64; 5] {
        [
            self.instructions,
            self.uops,
            self.branches,
            self.taken_branches,
            self.returns,
        ]
    }

    pub fn from_values(v: [u64; 5]) -> Self {
        CounterSnapshot {
            instructions: v[0],
            uops: v[1],
            branches: v[2],
            taken_branches: v[3],
            returns: v[4],
        }
    }
}

/// 16-byte ciphertext block value.
pub type Block16 = [u8; 16];

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum TraceEvent {
    CodeFetch {
        gpn: Gpn,
    },
    /// A data-page fault. `lines` holds the cache lines observed on the page
    /// until its eviction; it is empty when the cache channel is off.
    DataAccess {
        gpn: Gpn,
        lines: LineSet,
    },
    CiphertextDiff {
        gpn: Gpn,
        block: u8,
        before: Block16,
        after: Block16,
    },
    Counters(CounterSnapshot),
    Marker(MarkerKind),
}

impl TraceEvent {
    pub fn gpn(&self) -> Option<Gpn> {
        match *self {
            TraceEvent::CodeFetch { gpn }
            | TraceEvent::DataAccess { gpn, .. }
            | TraceEvent::CiphertextDiff { gpn, .. } => Some(gpn),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("event {index}: page number {gpn:#x} exceeds 2^40")]
    GpnOutOfRange { index: usize, gpn: u64 },
    #[error("event {index}: ciphertext diff with identical before/after")]
    UnchangedDiff { index: usize },
    #[error("event {index}: markers must alternate START/STOP")]
    UnbalancedMarkers { index: usize },
}

/// A collected side-channel trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    seed: u64,
    channels: ChannelSet,
    num_code_pages: u32,
    events: Vec<TraceEvent>,
}

impl Trace {
    /// Builds a trace, checking event invariants and computing the
    /// number of distinct code pages.
    pub fn new(seed: u64, channels: ChannelSet, events: Vec<TraceEvent>) -> Result<Self, TraceError> {
        let mut in_window = false;
        let mut code_pages = BTreeSet::new();
        for (index, ev) in events.iter().enumerate() {
            if let Some(gpn) = ev.gpn() {
                if gpn.0 >= GPN_LIMIT {
                    return Err(TraceError::GpnOutOfRange { index, gpn: gpn.0 });
                }
            }
            match ev {
                TraceEvent::CodeFetch { gpn } => {
                    code_pages.insert(*gpn);
                }
                TraceEvent::CiphertextDiff { before, after, .. } if before == after => {
                    return Err(TraceError::UnchangedDiff { index });
                }
                TraceEvent::Marker(kind) => {
                    let expect_start = !in_window;
                    if (*kind == MarkerKind::Start) != expect_start {
                        return Err(TraceError::UnbalancedMarkers { index });
                    }
                    in_window = !in_window;
                }
                _ => {}
            }
        }
        if in_window {
            return Err(TraceError::UnbalancedMarkers { index: events.len() });
        }
        Ok(Trace {
            seed,
            channels,
            num_code_pages: code_pages.len() as u32,
            events,
        })
    }

    pub fn empty(seed: u64, channels: ChannelSet) -> Self {
        Trace {
            seed,
            channels,
            num_code_pages: 0,
            events: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn channels(&self) -> ChannelSet {
        self.channels
    }

    pub fn num_code_pages(&self) -> u32 {
        self.num_code_pages
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }

    pub fn has_markers(&self) -> bool {
        self.events.iter().any(|e| matches!(e, TraceEvent::Marker(_)))
    }

    /// Events inside START/STOP windows, or every event when the trace has
    /// no markers. Markers themselves are skipped.
    pub fn windowed(&self) -> impl Iterator<Item = &TraceEvent> + '_ {
        let mut inside = !self.has_markers();
        self.events.iter().filter(move |e| match e {
            TraceEvent::Marker(MarkerKind::Start) => {
                inside = true;
                false
            }
            TraceEvent::Marker(MarkerKind::Stop) => {
                inside = false;
                false
            }
            _ => inside,
        })
    }

    /// Rewrites every page number through `f`. Used for relabeling checks.
    pub fn map_pages(&self, mut f: impl FnMut(Gpn) -> Gpn) -> Result<Trace, TraceError> {
        let events = self
            .events
            .iter()
            .map(|e| match *e {
                TraceEvent::CodeFetch { gpn } => TraceEvent::CodeFetch { gpn: f(gpn) },
                TraceEvent::DataAccess { gpn, lines } => TraceEvent::DataAccess { gpn: f(gpn), lines },
                TraceEvent::CiphertextDiff { gpn, block, before, after } => TraceEvent::CiphertextDiff {
                    gpn: f(gpn),
                    block,
                    before,
                    after,
                },
                other => other,
            })
            .collect();
        Trace::new(self.seed, self.channels, events)
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SEED {}", self.seed)?;
        writeln!(f, "NUM {}", self.num_code_pages)?;
        if self.channels.is_empty() {
            writeln!(f, "CHANNELS")?;
        } else {
            writeln!(f, "CHANNELS {}", self.channels)?;
        }
        for ev in &self.events {
            write_event(f, ev)?;
            f.write_char('\n')?;
        }
        Ok(())
    }
}

fn write_hex16(f: &mut impl fmt::Write, b: &Block16) -> fmt::Result {
    for byte in b {
        write!(f, "{byte:02x}")?;
    }
    Ok(())
}

fn write_event(f: &mut impl fmt::Write, ev: &TraceEvent) -> fmt::Result {
    match ev {
        TraceEvent::CodeFetch { gpn } => write!(f, "CF {gpn}"),
        TraceEvent::DataAccess { gpn, lines } => {
            write!(f, "MA {gpn}")?;
            for (i, l) in lines.iter().enumerate() {
                f.write_str(if i == 0 { " CL " } else { "," })?;
                write!(f, "{l}")?;
            }
            Ok(())
        }
        TraceEvent::CiphertextDiff { gpn, block, before, after } => {
            write!(f, "CI {gpn} BK {block} ")?;
            write_hex16(f, before)?;
            f.write_char(' ')?;
            write_hex16(f, after)
        }
        TraceEvent::Counters(c) => {
            let v = c.values();
            write!(f, "PN {} {} {} {} {}", v[0], v[1], v[2], v[3], v[4])
        }
        TraceEvent::Marker(MarkerKind::Start) => f.write_str("MARK START"),
        TraceEvent::Marker(MarkerKind::Stop) => f.write_str("MARK STOP"),
    }
}

/// Serializes a trace in canonical text form.
pub fn write_trace(t: &Trace) -> String {
    t.to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("syntax error: {0}")]
    Syntax(&'static str),
    #[error("cache-line index {0} out of range 0..63")]
    LineIndexOutOfRange(u64),
    #[error("block index {0} out of range 0..255")]
    BlockIndexOutOfRange(u64),
    #[error("malformed hex `{0}`")]
    MalformedHex(String),
    #[error("malformed number `{0}`")]
    MalformedNumber(String),
    #[error("page number exceeds 2^40")]
    GpnOutOfRange,
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("duplicate {0} header")]
    DuplicateHeader(&'static str),
    #[error("header line after first event")]
    HeaderAfterEvents,
    #[error("NUM {declared} does not match {observed} distinct code pages")]
    NumMismatch { declared: u32, observed: u32 },
    #[error("{0}")]
    Invalid(TraceError),
}

fn parse_gpn(tok: &str) -> Result<Gpn, ParseErrorKind> {
    if tok.is_empty() || tok.len() > 16 || !tok.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(ParseErrorKind::MalformedHex(tok.to_string()));
    }
    let v = u64::from_str_radix(tok, 16).map_err(|_| ParseErrorKind::MalformedHex(tok.to_string()))?;
    if v >= GPN_LIMIT {
        return Err(ParseErrorKind::GpnOutOfRange);
    }
    Ok(Gpn(v))
}

fn parse_hex16(tok: &str) -> Result<Block16, ParseErrorKind> {
    let bytes = tok.as_bytes();
    if bytes.len() != 32 || !bytes.iter().all(|b| b.is_ascii_hexdigit()) {
        return Err(ParseErrorKind::MalformedHex(tok.to_string()));
    }
    let mut out = [0u8; 16];
    for (i, o) in out.iter_mut().enumerate() {
        let pair = &tok[2 * i..2 * i + 2];
        *o = u8::from_str_radix(pair, 16).map_err(|_| ParseErrorKind::MalformedHex(tok.to_string()))?;
    }
    Ok(out)
}

fn parse_dec<T: FromStr>(tok: &str) -> Result<T, ParseErrorKind> {
    if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseErrorKind::MalformedNumber(tok.to_string()));
    }
    tok.parse().map_err(|_| ParseErrorKind::MalformedNumber(tok.to_string()))
}

fn parse_lines(tok: &str) -> Result<LineSet, ParseErrorKind> {
    let mut set = LineSet::EMPTY;
    for part in tok.split(',') {
        let v: u64 = parse_dec(part)?;
        if v >= 64 {
            return Err(ParseErrorKind::LineIndexOutOfRange(v));
        }
        set.insert(v as u8);
    }
    Ok(set)
}

fn parse_event(tokens: &[&str]) -> Result<TraceEvent, ParseErrorKind> {
    use ParseErrorKind::Syntax;
    match tokens {
        ["CF", gpn] => Ok(TraceEvent::CodeFetch { gpn: parse_gpn(gpn)? }),
        ["MA", gpn] => Ok(TraceEvent::DataAccess {
            gpn: parse_gpn(gpn)?,
            lines: LineSet::EMPTY,
        }),
        ["MA", gpn, "CL", lines] => Ok(TraceEvent::DataAccess {
            gpn: parse_gpn(gpn)?,
            lines: parse_lines(lines)?,
        }),
        ["MA", ..] => Err(Syntax("expected `MA <gpn>[ CL <idx>[,<idx>...]]`")),
        ["CI", gpn, "BK", block, before, after] => {
            let gpn = parse_gpn(gpn)?;
            let b: u64 = parse_dec(block)?;
            if b > 255 {
                return Err(ParseErrorKind::BlockIndexOutOfRange(b));
            }
            Ok(TraceEvent::CiphertextDiff {
                gpn,
                block: b as u8,
                before: parse_hex16(before)?,
                after: parse_hex16(after)?,
            })
        }
        ["CI", ..] => Err(Syntax("expected `CI <gpn> BK <idx> <hex32> <hex32>`")),
        ["PN", a, b, c, d, e] => Ok(TraceEvent::Counters(CounterSnapshot::from_values([
            parse_dec(a)?,
            parse_dec(b)?,
            parse_dec(c)?,
            parse_dec(d)?,
            parse_dec(e)?,
        ]))),
        ["PN", ..] => Err(Syntax("expected five counter values after PN")),
        ["MARK", "START"] => Ok(TraceEvent::Marker(MarkerKind::Start)),
        ["MARK", "STOP"] => Ok(TraceEvent::Marker(MarkerKind::Stop)),
        ["MARK", ..] => Err(Syntax("expected `MARK START` or `MARK STOP`")),
        [other, ..] => Err(ParseErrorKind::UnknownDirective((*other).to_string())),
        [] => Err(Syntax("empty line")),
    }
}

/// Parses the text form produced by [`write_trace`].
pub fn parse_trace(text: &str) -> Result<Trace, ParseError> {
    let mut seed: Option<u64> = None;
    let mut num: Option<u32> = None;
    let mut channels: Option<ChannelSet> = None;
    let mut events = Vec::new();
    let mut event_lines = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |kind| ParseError { line, kind };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let header = match tokens[0] {
            "SEED" | "NUM" | "CHANNELS" => true,
            _ => false,
        };
        if header {
            if !events.is_empty() {
                return Err(err(ParseErrorKind::HeaderAfterEvents));
            }
            match tokens.as_slice() {
                ["SEED", v] => {
                    if seed.replace(parse_dec(v).map_err(err)?).is_some() {
                        return Err(err(ParseErrorKind::DuplicateHeader("SEED")));
                    }
                }
                ["NUM", v] => {
                    if num.replace(parse_dec(v).map_err(err)?).is_some() {
                        return Err(err(ParseErrorKind::DuplicateHeader("NUM")));
                    }
                }
                ["CHANNELS"] | ["CHANNELS", _] => {
                    let list = tokens.get(1).copied().unwrap_or("");
                    let set = list
                        .parse::<ChannelSet>()
                        .map_err(|c| err(ParseErrorKind::UnknownChannel(c)))?;
                    if channels.replace(set).is_some() {
                        return Err(err(ParseErrorKind::DuplicateHeader("CHANNELS")));
                    }
                }
                _ => return Err(err(ParseErrorKind::Syntax("malformed header line"))),
            }
            continue;
        }
        events.push(parse_event(&tokens).map_err(err)?);
        event_lines.push(line);
    }

    let trace = Trace::new(seed.unwrap_or(0), channels.unwrap_or_default(), events).map_err(|e| {
        let idx = match e {
            TraceError::GpnOutOfRange { index, .. }
            | TraceError::UnchangedDiff { index }
            | TraceError::UnbalancedMarkers { index } => index,
        };
        let line = event_lines
            .get(idx)
            .copied()
            .unwrap_or_else(|| text.lines().count());
        ParseError {
            line,
            kind: ParseErrorKind::Invalid(e),
        }
    })?;
    if let Some(declared) = num {
        if declared != trace.num_code_pages() {
            return Err(ParseError {
                line: 0,
                kind: ParseErrorKind::NumMismatch {
                    declared,
                    observed: trace.num_code_pages(),
                },
            });
        }
    }
    Ok(trace)
}

/// Event counts used by the F1/F2 feature sets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub total_cf: u64,
    pub unique_cf: u64,
    pub total_da: u64,
    pub unique_da: u64,
    pub total_lines: u64,
    pub unique_lines: u64,
    pub total_ci: u64,
    pub unique_ci_blocks: u64,
}

/// Random valid trace over a small page pool, for fuzzing and oracle tests.
/// Only events the given channels can produce are generated; with
/// `windows` the events are split into START/STOP windows with gaps.
pub fn random_trace<R: Rng + ?Sized>(rng: &mut R, max_events: usize, channels: ChannelSet, windows: bool) -> Trace {
    let n = rng.gen_range(0..=max_events);
    let code: Vec<u64> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..GPN_LIMIT)).collect();
    let data: Vec<u64> = (0..rng.gen_range(1..10)).map(|_| rng.gen_range(0..GPN_LIMIT)).collect();
    let mut events = Vec::with_capacity(n + 8);
    let mut open = false;
    for _ in 0..n {
        if windows && rng.gen_bool(0.05) {
            events.push(TraceEvent::Marker(if open { MarkerKind::Stop } else { MarkerKind::Start }));
            open = !open;
        }
        let kind = rng.gen_range(0..4);
        let ev = match kind {
            0 => TraceEvent::CodeFetch {
                gpn: Gpn(code[rng.gen_range(0..code.len())]),
            },
            2 if channels.contains(Channel::Cipher) => {
                let before: Block16 = rng.gen();
                let mut after = before;
                after[rng.gen_range(0..16)] ^= rng.gen_range(1..=255u8);
                TraceEvent::CiphertextDiff {
                    gpn: Gpn(data[rng.gen_range(0..data.len())]),
                    block: rng.gen(),
                    before,
                    after,
                }
            }
            3 if channels.contains(Channel::Pmc) => {
                let mut v = [0u64; 5];
                for x in &mut v {
                    *x = rng.gen_range(0..1000);
                }
                TraceEvent::Counters(CounterSnapshot::from_values(v))
            }
            _ => {
                let lines = if channels.contains(Channel::Cache) {
                    LineSet::from_bits(rng.gen::<u64>() & rng.gen::<u64>() & rng.gen::<u64>())
                } else {
                    LineSet::EMPTY
                };
                TraceEvent::DataAccess {
                    gpn: Gpn(data[rng.gen_range(0..data.len())]),
                    lines,
                }
            }
        };
        events.push(ev);
    }
    if open {
        events.push(TraceEvent::Marker(MarkerKind::Stop));
    }
    Trace::new(rng.gen(), channels, events).expect("generator emits valid traces")
}

/// Counts over the marker-windowed events. "Unique" fields count distinct
/// pages, (page, line) pairs and (page, block) pairs respectively.
pub fn trace_stats(t: &Trace) -> TraceStats {
    let mut s = TraceStats::default();
    let mut cf = BTreeSet::new();
    let mut da = BTreeSet::new();
    let mut lines = BTreeSet::new();
    let mut blocks = BTreeSet::new();
    for ev in t.windowed() {
        match *ev {
            TraceEvent::CodeFetch { gpn } => {
                s.total_cf += 1;
                cf.insert(gpn);
            }
            TraceEvent::DataAccess { gpn, lines: ls } => {
                s.total_da += 1;
                da.insert(gpn);
                s.total_lines += u64::from(ls.len());
                for l in ls.iter() {
                    lines.insert((gpn, l));
                }
            }
            TraceEvent::CiphertextDiff { gpn, block, .. } => {
                s.total_ci += 1;
                blocks.insert((gpn, block));
            }
            _ => {}
        }
    }
    s.unique_cf = cf.len() as u64;
    s.unique_da = da.len() as u64;
    s.unique_lines = lines.len() as u64;
    s.unique_ci_blocks = blocks.len() as u64;
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cf(g: u64) -> TraceEvent {
        TraceEvent::CodeFetch { gpn: Gpn(g) }
    }

    fn ma(g: u64) -> TraceEvent {
        TraceEvent::DataAccess {
            gpn: Gpn(g),
            lines: LineSet::EMPTY,
        }
    }

    #[test]
    fn parses_cache_line_example() {
        let t = parse_trace("MA 141b69 CL 60\n").unwrap();
        assert_eq!(
            t.events(),
            &[TraceEvent::DataAccess {
                gpn: Gpn(0x141b69),
                lines: [60u8].into_iter().collect()
            }]
        );
    }

    #[test]
    fn num_zero_header_gives_empty_trace() {
        let t = parse_trace("NUM 0\n").unwrap();
        assert!(t.events().is_empty());
        assert_eq!(t.num_code_pages(), 0);
    }

    #[test]
    fn writes_single_code_fetch() {
        let t = Trace::new(0, ChannelSet::of(&[Channel::Page]), vec![cf(0x10)]).unwrap();
        let text = write_trace(&t);
        assert_eq!(text, "SEED 0\nNUM 1\nCHANNELS page\nCF 10\n");
    }

    #[test]
    fn writes_ciphertext_diff() {
        let mut after = [0u8; 16];
        after[15] = 0xab;
        let t = Trace::new(
            7,
            ChannelSet::of(&[Channel::Cipher]),
            vec![TraceEvent::CiphertextDiff {
                gpn: Gpn(0x2a),
                block: 3,
                before: [0; 16],
                after,
            }],
        )
        .unwrap();
        let text = write_trace(&t);
        let last = text.lines().last().unwrap();
        assert_eq!(
            last,
            "CI 2a BK 3 00000000000000000000000000000000 000000000000000000000000000000ab"
        );
        assert_eq!(parse_trace(&text).unwrap(), t);
    }

    #[test]
    fn line_set_serialized_ascending() {
        let lines: LineSet = [9u8, 1, 5].into_iter().collect();
        let t = Trace::new(0, ChannelSet::ALL, vec![TraceEvent::DataAccess { gpn: Gpn(1), lines }]).unwrap();
        assert!(write_trace(&t).ends_with("MA 1 CL 1,5,9\n"));
    }

    #[test]
    fn stats_direct_count() {
        let t = Trace::new(0, ChannelSet::ALL, vec![cf(0x10), cf(0x10), ma(0x20)]).unwrap();
        let s = trace_stats(&t);
        assert_eq!((s.total_cf, s.unique_cf, s.total_da, s.unique_da), (2, 1, 1, 1));
        assert_eq!(trace_stats(&Trace::empty(0, ChannelSet::ALL)), TraceStats::default());
    }

    #[test]
    fn stats_respect_marker_window() {
        let events = vec![
            cf(1),
            TraceEvent::Marker(MarkerKind::Start),
            cf(2),
            ma(3),
            TraceEvent::Marker(MarkerKind::Stop),
            ma(4),
        ];
        let s = trace_stats(&Trace::new(0, ChannelSet::ALL, events).unwrap());
        assert_eq!((s.total_cf, s.total_da), (1, 1));
    }

    #[test]
    fn rejects_out_of_range_indices() {
        let e = parse_trace("MA 10 CL 64\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert_eq!(e.kind, ParseErrorKind::LineIndexOutOfRange(64));
        let e = parse_trace("# c\nCI 10 BK 256 00000000000000000000000000000000 00000000000000000000000000000001\n")
            .unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.kind, ParseErrorKind::BlockIndexOutOfRange(256));
    }

    #[test]
    fn rejects_malformed_hex_and_syntax() {
        assert!(matches!(
            parse_trace("CF 0x10\n").unwrap_err().kind,
            ParseErrorKind::MalformedHex(_)
        ));
        assert!(matches!(
            parse_trace("CF 10\nXX 1\n").unwrap_err(),
            ParseError { line: 2, kind: ParseErrorKind::UnknownDirective(_) }
        ));
        assert!(matches!(
            parse_trace("CI 10 BK 1 00 00\n").unwrap_err().kind,
            ParseErrorKind::MalformedHex(_)
        ));
        assert_eq!(
            parse_trace("CF 10000000000\n").unwrap_err().kind,
            ParseErrorKind::GpnOutOfRange
        );
    }

    #[test]
    fn rejects_unchanged_diff_and_bad_markers() {
        let same = "CI 1 BK 0 0000000000000000000000000000000f 0000000000000000000000000000000f\n";
        assert!(matches!(
            parse_trace(same).unwrap_err().kind,
            ParseErrorKind::Invalid(TraceError::UnchangedDiff { .. })
        ));
        let e = parse_trace("MARK STOP\n").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Invalid(TraceError::UnbalancedMarkers { .. })));
        assert!(parse_trace("MARK START\nCF 1\n").is_err());
    }

    #[test]
    fn num_header_must_match() {
        let e = parse_trace("NUM 2\nCF 1\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NumMismatch { declared: 2, observed: 1 });
    }

    #[test]
    fn header_after_events_rejected() {
        let e = parse_trace("CF 1\nSEED 3\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::HeaderAfterEvents);
    }
}
