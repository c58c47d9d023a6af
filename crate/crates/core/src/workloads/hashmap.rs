//! Chained hash map with a prime bucket ladder, laid out in simulated memory.
//!
//! Layout:
//! - header page: `[bucket_count, size, buckets_addr, node_count]`
//! - bucket array: `bucket_count` 8-byte head pointers (0 = empty)
//! - nodes: 256 bytes each, 16 per page:
//!   `[next u64, hash u64, value u64, key_len u64, key bytes (<= 224)]`
//!
//! New nodes are pushed at the head of their chain. Inserting a new key
//! when `size + 1 > bucket_count` first rehashes into the next ladder
//! prime: every old bucket is read and every node is relinked.

use alloc::string::String;
use alloc::vec::Vec;

use super::fnv1a;
use crate::sim::{page_addr, Addr, PageKind, SimError, SimMachine, PAGE_SIZE};
use crate::trace::Gpn;

pub const DEFAULT_LADDER: [u64; 14] = [
    13, 29, 59, 127, 257, 541, 1109, 2357, 5087, 10273, 20753, 42043, 85229, 172933,
];

pub const NODE_SIZE: u64 = 256;
pub const NODES_PER_PAGE: u64 = PAGE_SIZE as u64 / NODE_SIZE;
pub const MAX_KEY_LEN: usize = 224;

const KEY_OFFSET: u64 = 32;

#[derive(Clone, Copy, Debug)]
pub struct HashMapCode {
    pub insert: Gpn,
    pub find: Gpn,
    pub rehash: Gpn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InsertOutcome {
    pub node: Addr,
    pub inserted: bool,
    pub rehashed: bool,
}

#[derive(Clone, Debug)]
pub struct SimHashMap {
    header: Addr,
    code: HashMapCode,
    ladder: Vec<u64>,
    node_pages: Vec<Gpn>,
    node_count: u64,
    rehashes: u64,
}

impl SimHashMap {
    pub fn new(m: &mut SimMachine, ladder: &[u64]) -> Result<Self, SimError> {
        if ladder.is_empty() || ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::Workload("prime ladder must be non-empty and increasing"));
        }
        let code = HashMapCode {
            insert: m.alloc(1, PageKind::Code),
            find: m.alloc(1, PageKind::Code),
            rehash: m.alloc(1, PageKind::Code),
        };
        let header = page_addr(m.alloc(1, PageKind::Data));
        let bc = ladder[0];
        let buckets = alloc_buckets(m, bc);
        m.write(header, &words(&[bc, 0, buckets, 0]))?;
        Ok(SimHashMap {
            header,
            code,
            ladder: ladder.to_vec(),
            node_pages: Vec::new(),
            node_count: 0,
            rehashes: 0,
        })
    }

    pub fn code(&self) -> HashMapCode {
        self.code
    }

    pub fn rehashes(&self) -> u64 {
        self.rehashes
    }

    pub fn node_count(&self) -> u64 {
        self.node_count
    }

    pub fn node_addr(&self, index: u64) -> Addr {
        page_addr(self.node_pages[(index / NODES_PER_PAGE) as usize]) + (index % NODES_PER_PAGE) * NODE_SIZE
    }

    fn read_header(&self, m: &mut SimMachine) -> Result<[u64; 4], SimError> {
        let mut b = [0u8; 32];
        m.read(self.header, &mut b)?;
        Ok(core::array::from_fn(|i| u64::from_le_bytes(b[i * 8..i * 8 + 8].try_into().unwrap())))
    }

    /// Walks the chain of `hash`; returns the matching node, if any.
    fn probe(&self, m: &mut SimMachine, bucket_addr: Addr, hash: u64, key: &[u8]) -> Result<Option<Addr>, SimError> {
        let mut cur = m.read_u64(bucket_addr)?;
        while cur != 0 {
            let mut hdr = [0u8; 16];
            m.read(cur, &mut hdr)?;
            let next = u64::from_le_bytes(hdr[..8].try_into().unwrap());
            let h = u64::from_le_bytes(hdr[8..].try_into().unwrap());
            let mut hit = false;
            if h == hash {
                let len = m.read_u64(cur + 24)? as usize;
                if len == key.len() {
                    let mut stored = alloc::vec![0u8; len];
                    m.read(cur + KEY_OFFSET, &mut stored)?;
                    hit = stored == key;
                }
            }
            m.branch(hit);
            if hit {
                return Ok(Some(cur));
            }
            cur = next;
        }
        Ok(None)
    }

    /// Looks `key` up; `caller` is the code page control returns to.
    pub fn find(&self, m: &mut SimMachine, caller: Gpn, key: &[u8]) -> Result<Option<Addr>, SimError> {
        m.call(caller, self.code.find, |m| {
            let [bc, _, buckets, _] = self.read_header(m)?;
            let hash = fnv1a(key);
            self.probe(m, buckets + (hash % bc) * 8, hash, key)
        })
    }

    /// Adds one occurrence of `key`.
    pub fn insert(&mut self, m: &mut SimMachine, caller: Gpn, key: &[u8]) -> Result<InsertOutcome, SimError> {
        self.insert_with(m, caller, key, 1)
    }

    /// Inserts `key` with `count` if absent, otherwise adds `count` to it.
    pub fn insert_with(
        &mut self,
        m: &mut SimMachine,
        caller: Gpn,
        key: &[u8],
        count: u64,
    ) -> Result<InsertOutcome, SimError> {
        if key.len() > MAX_KEY_LEN {
            return Err(SimError::Workload("key longer than 224 bytes"));
        }
        m.exec(self.code.insert)?;
        let [mut bc, size, mut buckets, _] = self.read_header(m)?;
        let hash = fnv1a(key);
        if let Some(node) = self.probe(m, buckets + (hash % bc) * 8, hash, key)? {
            let v = m.read_u64(node + 16)?;
            m.write_u64(node + 16, v + count)?;
            m.ret();
            m.exec(caller)?;
            return Ok(InsertOutcome {
                node,
                inserted: false,
                rehashed: false,
            });
        }
        let rehashed = size + 1 > bc;
        m.branch(rehashed);
        if rehashed {
            (bc, buckets) = self.rehash(m, bc, buckets)?;
        }
        let bucket_addr = buckets + (hash % bc) * 8;
        let head = m.read_u64(bucket_addr)?;
        let node = self.alloc_node(m);
        let mut bytes = alloc::vec![0u8; KEY_OFFSET as usize + key.len()];
        bytes[..32].copy_from_slice(&words(&[head, hash, count, key.len() as u64]));
        bytes[32..].copy_from_slice(key);
        m.write(node, &bytes)?;
        m.write_u64(bucket_addr, node)?;
        m.write(self.header + 8, &(size + 1).to_le_bytes())?;
        m.write(self.header + 24, &self.node_count.to_le_bytes())?;
        m.ret();
        m.exec(caller)?;
        Ok(InsertOutcome {
            node,
            inserted: true,
            rehashed,
        })
    }

    fn alloc_node(&mut self, m: &mut SimMachine) -> Addr {
        if self.node_count % NODES_PER_PAGE == 0 {
            self.node_pages.push(m.alloc(1, PageKind::Data));
        }
        let a = self.node_addr(self.node_count);
        self.node_count += 1;
        a
    }

    fn rehash(&mut self, m: &mut SimMachine, bc: u64, buckets: Addr) -> Result<(u64, Addr), SimError> {
        let new_bc = *self
            .ladder
            .iter()
            .find(|&&p| p > bc)
            .ok_or(SimError::Workload("prime ladder exhausted"))?;
        m.exec(self.code.rehash)?;
        let new_buckets = alloc_buckets(m, new_bc);
        for i in 0..bc {
            let mut cur = m.read_u64(buckets + i * 8)?;
            while cur != 0 {
                let mut hdr = [0u8; 16];
                m.read(cur, &mut hdr)?;
                let next = u64::from_le_bytes(hdr[..8].try_into().unwrap());
                let h = u64::from_le_bytes(hdr[8..].try_into().unwrap());
                let slot = new_buckets + (h % new_bc) * 8;
                let head = m.read_u64(slot)?;
                m.write_u64(cur, head)?;
                m.write_u64(slot, cur)?;
                cur = next;
            }
        }
        m.write(self.header, &new_bc.to_le_bytes())?;
        m.write(self.header + 16, &new_buckets.to_le_bytes())?;
        m.ret();
        m.exec(self.code.insert)?;
        self.rehashes += 1;
        Ok((new_bc, new_buckets))
    }

    /// Reads a node's key and count without recording accesses.
    pub fn peek_node(&self, m: &SimMachine, node: Addr) -> Result<(String, u64), SimError> {
        let mut hdr = [0u8; 32];
        m.peek(node, &mut hdr)?;
        let count = u64::from_le_bytes(hdr[16..24].try_into().unwrap());
        let len = u64::from_le_bytes(hdr[24..32].try_into().unwrap()) as usize;
        let mut key = alloc::vec![0u8; len];
        m.peek(node + KEY_OFFSET, &mut key)?;
        Ok((String::from_utf8_lossy(&key).into_owned(), count))
    }

    /// Current bucket count and size, peeked.
    pub fn shape(&self, m: &SimMachine) -> Result<(u64, u64), SimError> {
        let mut b = [0u8; 16];
        m.peek(self.header, &mut b)?;
        Ok((
            u64::from_le_bytes(b[..8].try_into().unwrap()),
            u64::from_le_bytes(b[8..].try_into().unwrap()),
        ))
    }

    /// Every (bucket, node chain) pair, peeked. Used to compare layouts.
    pub fn layout(&self, m: &SimMachine) -> Result<Vec<Vec<Addr>>, SimError> {
        let mut hdr = [0u8; 32];
        m.peek(self.header, &mut hdr)?;
        let bc = u64::from_le_bytes(hdr[..8].try_into().unwrap());
        let buckets = u64::from_le_bytes(hdr[16..24].try_into().unwrap());
        let mut out = Vec::new();
        for i in 0..bc {
            let mut chain = Vec::new();
            let mut b = [0u8; 8];
            m.peek(buckets + i * 8, &mut b)?;
            let mut cur = u64::from_le_bytes(b);
            while cur != 0 {
                chain.push(cur);
                m.peek(cur, &mut b)?;
                cur = u64::from_le_bytes(b);
            }
            out.push(chain);
        }
        Ok(out)
    }
}

/// Smallest ladder prime `>= n`, or `None` past the top.
pub fn ladder_prime_at_least(ladder: &[u64], n: u64) -> Option<u64> {
    ladder.iter().copied().find(|&p| p >= n)
}

fn alloc_buckets(m: &mut SimMachine, bc: u64) -> Addr {
    let pages = ((bc * 8) as usize).div_ceil(PAGE_SIZE);
    page_addr(m.alloc(pages, PageKind::Data))
}

fn words<const N: usize>(w: &[u64; N]) -> Vec<u8> {
    w.iter().flat_map(|x| x.to_le_bytes()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_collect, CollectorPolicy};
    use crate::trace::TraceEvent;
    use alloc::format;

    fn setup() -> (SimMachine, SimHashMap, Gpn) {
        let mut m = SimMachine::new(9);
        let caller = m.alloc(1, PageKind::Code);
        let map = SimHashMap::new(&mut m, &DEFAULT_LADDER).unwrap();
        (m, map, caller)
    }

    #[test]
    fn counts_and_finds() {
        let (mut m, mut map, caller) = setup();
        for _ in 0..3 {
            map.insert(&mut m, caller, b"a").unwrap();
        }
        map.insert(&mut m, caller, b"b").unwrap();
        let a = map.find(&mut m, caller, b"a").unwrap().unwrap();
        assert_eq!(map.peek_node(&m, a).unwrap(), ("a".into(), 3));
        assert!(map.find(&mut m, caller, b"zzz").unwrap().is_none());
        assert_eq!(map.shape(&m).unwrap(), (13, 2));
    }

    #[test]
    fn rehash_exactly_when_size_exceeds_buckets() {
        let (mut m, mut map, caller) = setup();
        for i in 0..13 {
            let o = map.insert(&mut m, caller, format!("k{i}").as_bytes()).unwrap();
            assert!(!o.rehashed);
        }
        // duplicates never rehash
        assert!(!map.insert(&mut m, caller, b"k0").unwrap().rehashed);
        let o = map.insert(&mut m, caller, b"k13").unwrap();
        assert!(o.rehashed);
        assert_eq!(map.shape(&m).unwrap(), (29, 14));
        for i in 0..14 {
            assert!(map.find(&mut m, caller, format!("k{i}").as_bytes()).unwrap().is_some());
        }
    }

    #[test]
    fn rehash_touches_all_bucket_and_node_pages() {
        let (mut m, mut map, caller) = setup();
        for i in 0..257 {
            map.insert(&mut m, caller, format!("key-{i}").as_bytes()).unwrap();
        }
        let old_layout = map.layout(&m).unwrap();
        let node_pages: alloc::collections::BTreeSet<u64> =
            old_layout.iter().flatten().map(|a| a / PAGE_SIZE as u64).collect();
        let (mut_trace, _) = run_collect(&mut m, &CollectorPolicy::default(), 0, |m| {
            let o = map.insert(m, caller, b"one-more")?;
            assert!(o.rehashed);
            Ok(())
        })
        .unwrap();
        let faulted: alloc::collections::BTreeSet<u64> = mut_trace
            .events()
            .iter()
            .filter_map(|e| match e {
                TraceEvent::DataAccess { gpn, .. } => Some(gpn.0),
                _ => None,
            })
            .collect();
        assert!(node_pages.is_subset(&faulted));
    }

    #[test]
    fn same_multiset_same_layout() {
        let keys = ["x", "y", "x", "z", "w", "y"];
        let build = |order: &[&str]| {
            let (mut m, mut map, caller) = setup();
            for k in order {
                map.insert(&mut m, caller, k.as_bytes()).unwrap();
            }
            let mut chains: Vec<Vec<(String, u64)>> = map
                .layout(&m)
                .unwrap()
                .iter()
                .map(|c| {
                    let mut v: Vec<_> = c.iter().map(|&a| map.peek_node(&m, a).unwrap()).collect();
                    v.sort();
                    v
                })
                .collect();
            chains.sort();
            chains
        };
        let a = build(&keys);
        let mut rev = keys;
        rev.reverse();
        assert_eq!(a, build(&rev));
    }

    #[test]
    fn ladder_exhaustion_is_an_error() {
        let mut m = SimMachine::new(0);
        let caller = m.alloc(1, PageKind::Code);
        let mut map = SimHashMap::new(&mut m, &[2, 3]).unwrap();
        for k in ["a", "b", "c"] {
            map.insert(&mut m, caller, k.as_bytes()).unwrap();
        }
        assert!(map.insert(&mut m, caller, b"d").is_err());
        assert_eq!(ladder_prime_at_least(&DEFAULT_LADDER, 301), Some(541));
    }
}
