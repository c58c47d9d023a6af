//! Handcrafted feature sets F1–F5 and the sequence tokenizer.
//!
//! | set | contents | length |
//! |-----|----------|--------|
//! | F1 | total/unique code fetches and data accesses | 4 |
//! | F2 | total/unique cache lines and ciphertext blocks | 4 |
//! | F3 | cache-line index histogram, block index histogram | 64 + 256 |
//! | F4 | order statistics and histograms of five per-event families | 5 × (11 + N) |
//! | F5 | per-page fault counts for the first code and data pages | M_CF + M_DA |
//!
//! All features are computed over the marker-windowed events.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::sim::{BLOCKS_PER_PAGE, LINES_PER_PAGE};
use crate::trace::{Channel, ChannelSet, Gpn, Trace, TraceEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FeatureSet {
    F1,
    F2,
    F3,
    F4,
    F5,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [FeatureSet::F1, FeatureSet::F2, FeatureSet::F3, FeatureSet::F4, FeatureSet::F5];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::F1 => "F1",
            FeatureSet::F2 => "F2",
            FeatureSet::F3 => "F3",
            FeatureSet::F4 => "F4",
            FeatureSet::F5 => "F5",
        }
    }

    /// Channels whose events feed this set.
    pub fn channels(self) -> ChannelSet {
        match self {
            FeatureSet::F1 | FeatureSet::F5 => ChannelSet::of(&[Channel::Page]),
            FeatureSet::F2 | FeatureSet::F3 | FeatureSet::F4 => {
                ChannelSet::of(&[Channel::Page, Channel::Cache, Channel::Cipher])
            }
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature set `{0}` (expected F1..F5)")]
pub struct UnknownFeatureSet(pub String);

impl FromStr for FeatureSet {
    type Err = UnknownFeatureSet;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownFeatureSet(s.into()))
    }
}

/// Parses a comma-separated list such as `F1,F3`. `all` or `union`
/// selects every set.
pub fn parse_feature_sets(s: &str) -> Result<Vec<FeatureSet>, UnknownFeatureSet> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("all") || s.eq_ignore_ascii_case("union") {
        return Ok(FeatureSet::ALL.to_vec());
    }
    let mut out: Vec<FeatureSet> = s.split(',').map(str::parse).collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FeatureParams {
    pub hist_bins: usize,
    pub max_code_pages: usize,
    pub max_data_pages: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            hist_bins: 10,
            max_code_pages: 64,
            max_data_pages: 64,
        }
    }
}

/// The five multisets summarized by F4, in schema order.
pub const F4_FAMILIES: [&str; 5] = ["da_per_cf", "lines_total", "lines_unique", "blocks_total", "blocks_unique"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureName {
    pub name: String,
    pub set: FeatureSet,
}

pub fn feature_len(set: FeatureSet, params: &FeatureParams) -> usize {
    match set {
        FeatureSet::F1 | FeatureSet::F2 => 4,
        FeatureSet::F3 => LINES_PER_PAGE + BLOCKS_PER_PAGE,
        FeatureSet::F4 => F4_FAMILIES.len() * (11 + params.hist_bins),
        FeatureSet::F5 => params.max_code_pages + params.max_data_pages,
    }
}

/// Column names for `sets` in extraction order.
pub fn feature_schema(sets: &[FeatureSet], params: &FeatureParams) -> Vec<FeatureName> {
    let mut out = Vec::new();
    for &set in sets {
        let mut push = |name: String| out.push(FeatureName { name, set });
        match set {
            FeatureSet::F1 => ["cf_total", "cf_unique", "da_total", "da_unique"]
                .into_iter()
                .for_each(|n| push(format!("F1.{n}"))),
            FeatureSet::F2 => ["lines_total", "lines_unique", "blocks_total", "blocks_unique"]
                .into_iter()
                .for_each(|n| push(format!("F2.{n}"))),
            FeatureSet::F3 => {
                (0..LINES_PER_PAGE).for_each(|i| push(format!("F3.line_{i:02}")));
                (0..BLOCKS_PER_PAGE).for_each(|i| push(format!("F3.block_{i:03}")));
            }
            FeatureSet::F4 => {
                for fam in F4_FAMILIES {
                    push(format!("F4.{fam}.min"));
                    push(format!("F4.{fam}.max"));
                    (1..=9).for_each(|q| push(format!("F4.{fam}.q{q}")));
                    (0..params.hist_bins).for_each(|b| push(format!("F4.{fam}.hist_{b:02}")));
                }
            }
            FeatureSet::F5 => {
                (0..params.max_code_pages).for_each(|i| push(format!("F5.code_{i:02}")));
                (0..params.max_data_pages).for_each(|i| push(format!("F5.data_{i:02}")));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Channels the requested sets use but the trace lacks. Their
    /// features are zero.
    pub missing: ChannelSet,
}

/// Extracts `sets`, concatenated in the given order.
pub fn extract_features(trace: &Trace, sets: &[FeatureSet], params: &FeatureParams) -> FeatureVector {
    let agg = Aggregates::of(trace);
    let mut values = Vec::with_capacity(sets.iter().map(|&s| feature_len(s, params)).sum());
    let mut missing = ChannelSet::NONE;
    for &set in sets {
        for c in set.channels().iter() {
            if !trace.channels().contains(c) {
                missing.insert(c);
            }
        }
        match set {
            FeatureSet::F1 => values.extend([
                agg.cf.len() as f64,
                count_unique(&agg.cf) as f64,
                agg.da.len() as f64,
                count_unique(&agg.da) as f64,
            ]),
            FeatureSet::F2 => values.extend([
                agg.lines.len() as f64,
                count_unique(&agg.lines) as f64,
                agg.blocks.len() as f64,
                count_unique(&agg.blocks) as f64,
            ]),
            FeatureSet::F3 => {
                let mut h = [0f64; LINES_PER_PAGE + BLOCKS_PER_PAGE];
                for &(_, l) in &agg.lines {
                    h[l as usize] += 1.0;
                }
                for &(_, b) in &agg.blocks {
                    h[LINES_PER_PAGE + b as usize] += 1.0;
                }
                values.extend_from_slice(&h);
            }
            FeatureSet::F4 => {
                for fam in agg.f4_families() {
                    summarize(fam, params.hist_bins, &mut values);
                }
            }
            FeatureSet::F5 => {
                page_frequencies(&agg.cf, params.max_code_pages, &mut values);
                page_frequencies(&agg.da, params.max_data_pages, &mut values);
            }
        }
    }
    FeatureVector { values, missing }
}

struct Aggregates {
    cf: Vec<Gpn>,
    da: Vec<Gpn>,
    lines: Vec<(Gpn, u8)>,
    blocks: Vec<(Gpn, u8)>,
    da_per_cf: Vec<u64>,
}

impl Aggregates {
    fn of(trace: &Trace) -> Self {
        let mut a = Aggregates {
            cf: Vec::new(),
            da: Vec::new(),
            lines: Vec::new(),
            blocks: Vec::new(),
            da_per_cf: Vec::new(),
        };
        for e in trace.windowed() {
            match e {
                TraceEvent::CodeFetch { gpn } => {
                    a.cf.push(*gpn);
                    a.da_per_cf.push(0);
                }
                TraceEvent::DataAccess { gpn, lines } => {
                    a.da.push(*gpn);
                    a.lines.extend(lines.iter().map(|l| (*gpn, l)));
                    if let Some(last) = a.da_per_cf.last_mut() {
                        *last += 1;
                    }
                }
                TraceEvent::CiphertextDiff { gpn, block, .. } => a.blocks.push((*gpn, *block)),
                _ => {}
            }
        }
        a
    }

    fn f4_families(&self) -> [Vec<u64>; 5] {
        let per_page = |items: &[(Gpn, u8)]| {
            let mut m: BTreeMap<Gpn, (u64, BTreeSet<u8>)> = BTreeMap::new();
            for &(g, x) in items {
                let e = m.entry(g).or_default();
                e.0 += 1;
                e.1.insert(x);
            }
            let total = m.values().map(|v| v.0).collect::<Vec<_>>();
            let unique = m.values().map(|v| v.1.len() as u64).collect::<Vec<_>>();
            (total, unique)
        };
        let (lt, lu) = per_page(&self.lines);
        let (bt, bu) = per_page(&self.blocks);
        [self.da_per_cf.clone(), lt, lu, bt, bu]
    }
}

fn count_unique<T: Ord>(xs: &[T]) -> usize {
    xs.iter().collect::<BTreeSet<_>>().len()
}

/// min, max, nearest-rank deciles q1..q9, then a `bins`-bin histogram
/// over `[0, max]`. An empty multiset yields zeros.
fn summarize(mut xs: Vec<u64>, bins: usize, out: &mut Vec<f64>) {
    if xs.is_empty() {
        out.extend(core::iter::repeat(0.0).take(11 + bins));
        return;
    }
    xs.sort_unstable();
    let n = xs.len();
    let max = xs[n - 1];
    out.push(xs[0] as f64);
    out.push(max as f64);
    for q in 1..=9 {
        let rank = (q * n).div_ceil(10).max(1);
        out.push(xs[rank - 1] as f64);
    }
    let start = out.len();
    out.extend(core::iter::repeat(0.0).take(bins));
    if bins > 0 {
        for &x in &xs {
            let b = if max == 0 {
                0
            } else {
                ((x as u128 * bins as u128) / max as u128).min(bins as u128 - 1) as usize
            };
            out[start + b] += 1.0;
        }
    }
}

fn page_frequencies(pages: &[Gpn], limit: usize, out: &mut Vec<f64>) {
    let mut order: Vec<Gpn> = Vec::new();
    let mut counts: BTreeMap<Gpn, u64> = BTreeMap::new();
    for &g in pages {
        let c = counts.entry(g).or_insert(0);
        if *c == 0 {
            order.push(g);
        }
        *c += 1;
    }
    for i in 0..limit {
        out.push(order.get(i).map_or(0.0, |g| counts[g] as f64));
    }
}

pub const VOCAB_SIZE: u32 = 10_000;
pub const MAX_TOKENS: usize = 5000;

pub const TOKEN_PAD: u32 = 0;
pub const TOKEN_OOV: u32 = 1;
pub const TOKEN_CHANGED: u32 = 2;
pub const TOKEN_LINE_BASE: u32 = 3;
pub const TOKEN_BLOCK_BASE: u32 = TOKEN_LINE_BASE + LINES_PER_PAGE as u32;
pub const TOKEN_CODE_BASE: u32 = TOKEN_BLOCK_BASE + BLOCKS_PER_PAGE as u32;
pub const CODE_SLOTS: u32 = 4838;
pub const TOKEN_DATA_BASE: u32 = TOKEN_CODE_BASE + CODE_SLOTS;
pub const DATA_SLOTS: u32 = VOCAB_SIZE - TOKEN_DATA_BASE;

/// Token ids for the windowed events. Pages become first-appearance
/// indices (`CODE_i`, `DATA_j`), each data access is followed by its
/// `LINE_k` tokens, and each ciphertext diff becomes `BLOCK_b CHANGED`.
/// Only the last [`MAX_TOKENS`] tokens are kept.
pub fn tokenize(trace: &Trace) -> Vec<u32> {
    let mut code: BTreeMap<Gpn, u32> = BTreeMap::new();
    let mut data: BTreeMap<Gpn, u32> = BTreeMap::new();
    let index = |map: &mut BTreeMap<Gpn, u32>, g: Gpn, base: u32, slots: u32| {
        let next = map.len() as u32;
        let i = *map.entry(g).or_insert(next);
        if i < slots {
            base + i
        } else {
            TOKEN_OOV
        }
    };
    let mut out = Vec::new();
    for e in trace.windowed() {
        match e {
            TraceEvent::CodeFetch { gpn } => out.push(index(&mut code, *gpn, TOKEN_CODE_BASE, CODE_SLOTS)),
            TraceEvent::DataAccess { gpn, lines } => {
                out.push(index(&mut data, *gpn, TOKEN_DATA_BASE, DATA_SLOTS));
                out.extend(lines.iter().map(|l| TOKEN_LINE_BASE + l as u32));
            }
            TraceEvent::CiphertextDiff { block, .. } => {
                out.push(TOKEN_BLOCK_BASE + *block as u32);
                out.push(TOKEN_CHANGED);
            }
            _ => {}
        }
    }
    if out.len() > MAX_TOKENS {
        out.drain(..out.len() - MAX_TOKENS);
    }
    out
}
