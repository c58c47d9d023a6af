//! Path ORAM, and a PIR server that keeps its database in one.
//!
//! [`PathOram`] is the client logic: a binary tree of buckets holding up to
//! four blocks each, a position map assigning every block a leaf, and a
//! stash. Each access reads one root-to-leaf path into the stash, remaps the
//! block to a fresh random leaf, and greedily writes the path back from the
//! leaf upwards.
//!
//! [`OramPir`] mirrors that state into simulated memory. Every slot write
//! carries a fresh random nonce mixed into its contents, so re-writing the
//! same block changes its ciphertext. With `zero_block_flaw` set, blocks
//! whose payload is all zeros are written with nonce 0 and no masking, so
//! their ciphertext is stable, which is the leak this model reproduces.

use alloc::vec::Vec;

use rand::Rng;

use super::pir::{Value, VALUE_SIZE};
use crate::rng::{mix64, rng_from, SimRng};
use crate::sim::{page_addr, Addr, PageKind, SimError, SimMachine, PAGE_SIZE};
use crate::trace::Gpn;

pub const BUCKET_SLOTS: usize = 4;
/// Slot: 16-byte metadata block `[id u32, leaf u32, nonce u64]` + payload.
pub const SLOT_SIZE: usize = 16 + VALUE_SIZE;
pub const BUCKET_SIZE: usize = BUCKET_SLOTS * SLOT_SIZE;
pub const BUCKETS_PER_PAGE: usize = PAGE_SIZE / BUCKET_SIZE;

const EMPTY_ID: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OramBlock {
    pub id: u32,
    pub leaf: u32,
    pub data: Value,
}

pub type Bucket = [Option<OramBlock>; BUCKET_SLOTS];

#[derive(Clone, Debug)]
pub struct PathOram {
    height: u32,
    buckets: Vec<Bucket>,
    position: Vec<u32>,
    stash: Vec<OramBlock>,
    max_stash: usize,
    rng: SimRng,
}

impl PathOram {
    /// Builds an ORAM over `data`, placing every block on the path to a
    /// random leaf (deepest free bucket first, stash if the path is full).
    pub fn new(data: &[Value], seed: u64) -> Self {
        let n = data.len().max(2);
        let height = usize::BITS - (n - 1).leading_zeros();
        let mut oram = PathOram {
            height,
            buckets: alloc::vec![[None; BUCKET_SLOTS]; (1usize << (height + 1)) - 1],
            position: Vec::with_capacity(data.len()),
            stash: Vec::new(),
            max_stash: 0,
            rng: rng_from(seed),
        };
        for (id, d) in data.iter().enumerate() {
            let leaf = oram.random_leaf();
            oram.position.push(leaf);
            let block = OramBlock {
                id: id as u32,
                leaf,
                data: *d,
            };
            let path = oram.path(leaf);
            let free = path
                .iter()
                .rev()
                .find_map(|&b| oram.buckets[b].iter().position(Option::is_none).map(|s| (b, s)));
            match free {
                Some((b, s)) => oram.buckets[b][s] = Some(block),
                None => oram.stash.push(block),
            }
        }
        oram
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn leaves(&self) -> u32 {
        1 << self.height
    }

    pub fn num_blocks(&self) -> usize {
        self.position.len()
    }

    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn stash(&self) -> &[OramBlock] {
        &self.stash
    }

    pub fn max_stash(&self) -> usize {
        self.max_stash
    }

    pub fn bucket(&self, idx: usize) -> &Bucket {
        &self.buckets[idx]
    }

    pub fn position(&self, id: u32) -> u32 {
        self.position[id as usize]
    }

    fn random_leaf(&mut self) -> u32 {
        self.rng.gen_range(0..self.leaves())
    }

    /// Bucket index at `level` (0 = root) on the path to `leaf`.
    fn node_at(&self, leaf: u32, level: u32) -> usize {
        (1usize << level) - 1 + (leaf >> (self.height - level)) as usize
    }

    /// Bucket indices from the root down to `leaf`.
    pub fn path(&self, leaf: u32) -> Vec<usize> {
        (0..=self.height).map(|l| self.node_at(leaf, l)).collect()
    }

    /// Reads block `id`, replacing its payload when `write` is given.
    /// Returns the payload held before the access.
    pub fn access(&mut self, id: u32, write: Option<Value>) -> Result<Value, SimError> {
        if id as usize >= self.position.len() {
            return Err(SimError::Workload("ORAM block id out of range"));
        }
        let leaf = self.position[id as usize];
        let new_leaf = self.random_leaf();
        self.position[id as usize] = new_leaf;
        let path = self.path(leaf);
        for &b in &path {
            for slot in self.buckets[b].iter_mut() {
                if let Some(block) = slot.take() {
                    self.stash.push(block);
                }
            }
        }
        let block = self
            .stash
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or(SimError::Workload("ORAM invariant broken: block not on its path"))?;
        let old = block.data;
        if let Some(v) = write {
            block.data = v;
        }
        block.leaf = new_leaf;
        self.max_stash = self.max_stash.max(self.stash.len());
        for level in (0..=self.height).rev() {
            let node = self.node_at(leaf, level);
            let shift = self.height - level;
            let mut filled = 0;
            let mut i = 0;
            while i < self.stash.len() && filled < BUCKET_SLOTS {
                if self.stash[i].leaf >> shift == leaf >> shift {
                    self.buckets[node][filled] = Some(self.stash.remove(i));
                    filled += 1;
                } else {
                    i += 1;
                }
            }
        }
        Ok(old)
    }

    /// Every block is in the stash or on the path to its assigned leaf.
    pub fn check_invariant(&self) -> bool {
        let mut seen = alloc::vec![false; self.position.len()];
        for b in &self.stash {
            if b.leaf != self.position[b.id as usize] || seen[b.id as usize] {
                return false;
            }
            seen[b.id as usize] = true;
        }
        for (idx, bucket) in self.buckets.iter().enumerate() {
            for b in bucket.iter().flatten() {
                let leaf = self.position[b.id as usize];
                if b.leaf != leaf || !self.path(leaf).contains(&idx) || seen[b.id as usize] {
                    return false;
                }
                seen[b.id as usize] = true;
            }
        }
        seen.iter().all(|&s| s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OramPirParams {
    pub zero_block_flaw: bool,
    /// Slots in the fixed stash region; overflow is counted, not fatal.
    pub stash_capacity: usize,
    /// Untraced accesses run after building, to reach a steady state.
    pub warmup_accesses: usize,
}

impl Default for OramPirParams {
    fn default() -> Self {
        OramPirParams {
            zero_block_flaw: false,
            stash_capacity: 32,
            warmup_accesses: 0,
        }
    }
}

/// PIR server whose records live in a [`PathOram`] mirrored into guest memory.
pub struct OramPir {
    oram: PathOram,
    params: OramPirParams,
    code: Gpn,
    tree: Addr,
    posmap: Addr,
    stash_region: Addr,
    overflows: u64,
}

impl OramPir {
    pub fn setup(m: &mut SimMachine, db: &[Value], params: OramPirParams, seed: u64) -> Result<Self, SimError> {
        if db.is_empty() {
            return Err(SimError::Workload("ORAM database is empty"));
        }
        let mut oram = PathOram::new(db, seed);
        let mut warm = rng_from(seed ^ 0x5741_524d);
        for _ in 0..params.warmup_accesses {
            let id = warm.gen_range(0..db.len() as u32);
            oram.access(id, None)?;
        }
        let code = m.alloc(1, PageKind::Code);
        let tree = page_addr(m.alloc(oram.num_buckets().div_ceil(BUCKETS_PER_PAGE), PageKind::Data));
        let posmap = page_addr(m.alloc((db.len().div_ceil(2) * 16).div_ceil(PAGE_SIZE), PageKind::Data));
        let stash_region = page_addr(m.alloc((params.stash_capacity * SLOT_SIZE).div_ceil(PAGE_SIZE).max(1), PageKind::Data));
        let mut pir = OramPir {
            oram,
            params,
            code,
            tree,
            posmap,
            stash_region,
            overflows: 0,
        };
        let mut rng = rng_from(seed ^ 0x494e_4954);
        pir.write_posmap(m, &mut rng)?;
        for b in 0..pir.oram.num_buckets() {
            pir.write_bucket(m, b, &mut rng)?;
        }
        pir.write_stash(m, &mut rng)?;
        Ok(pir)
    }

    pub fn oram(&self) -> &PathOram {
        &self.oram
    }

    pub fn overflows(&self) -> u64 {
        self.overflows
    }

    fn bucket_addr(&self, b: usize) -> Addr {
        self.tree + (b / BUCKETS_PER_PAGE * PAGE_SIZE + b % BUCKETS_PER_PAGE * BUCKET_SIZE) as u64
    }

    fn posmap_len(&self) -> usize {
        self.oram.num_blocks().div_ceil(2) * 16
    }

    fn encode_slot(&self, block: Option<&OramBlock>, rng: &mut SimRng) -> [u8; SLOT_SIZE] {
        let (id, leaf, data) = match block {
            Some(b) => (b.id, b.leaf, b.data),
            None => (EMPTY_ID, 0, [0u8; VALUE_SIZE]),
        };
        let unmasked = self.params.zero_block_flaw && data.iter().all(|&x| x == 0);
        let nonce = if unmasked { 0 } else { rng.gen::<u64>() | 1 };
        let mut out = [0u8; SLOT_SIZE];
        out[..4].copy_from_slice(&id.to_le_bytes());
        out[4..8].copy_from_slice(&leaf.to_le_bytes());
        out[8..16].copy_from_slice(&nonce.to_le_bytes());
        for (i, chunk) in data.chunks(8).enumerate() {
            let w = u64::from_le_bytes(chunk.try_into().unwrap());
            let pad = if unmasked { 0 } else { mix64(nonce ^ (i as u64 + 1)) };
            out[16 + i * 8..24 + i * 8].copy_from_slice(&(w ^ pad).to_le_bytes());
        }
        out
    }

    fn write_bucket(&self, m: &mut SimMachine, b: usize, rng: &mut SimRng) -> Result<(), SimError> {
        let base = self.bucket_addr(b);
        for (s, slot) in self.oram.bucket(b).iter().enumerate() {
            let bytes = self.encode_slot(slot.as_ref(), rng);
            m.write(base + (s * SLOT_SIZE) as u64, &bytes)?;
        }
        Ok(())
    }

    fn write_stash(&mut self, m: &mut SimMachine, rng: &mut SimRng) -> Result<(), SimError> {
        let cap = self.params.stash_capacity;
        if self.oram.stash().len() > cap {
            self.overflows += 1;
        }
        for s in 0..cap {
            let bytes = self.encode_slot(self.oram.stash().get(s), rng);
            m.write(self.stash_region + (s * SLOT_SIZE) as u64, &bytes)?;
        }
        Ok(())
    }

    fn write_posmap(&self, m: &mut SimMachine, rng: &mut SimRng) -> Result<(), SimError> {
        for pair in 0..self.posmap_len() / 16 {
            let nonce = rng.gen::<u64>() | 1;
            let leaf = |i: usize| {
                if i < self.oram.num_blocks() {
                    self.oram.position(i as u32)
                } else {
                    0
                }
            };
            let packed = (leaf(2 * pair) as u64) | ((leaf(2 * pair + 1) as u64) << 32);
            let mut bytes = [0u8; 16];
            bytes[..8].copy_from_slice(&nonce.to_le_bytes());
            bytes[8..].copy_from_slice(&(packed ^ mix64(nonce)).to_le_bytes());
            m.write(self.posmap + pair as u64 * 16, &bytes)?;
        }
        Ok(())
    }

    /// One oblivious read of record `index`. `rng` supplies write nonces.
    pub fn lookup(&mut self, m: &mut SimMachine, index: u64, rng: &mut SimRng) -> Result<Value, SimError> {
        if index as usize >= self.oram.num_blocks() {
            return Err(SimError::Workload("record index out of range"));
        }
        m.exec(self.code)?;
        let mut buf = alloc::vec![0u8; self.posmap_len()];
        m.read(self.posmap, &mut buf)?;
        let path = self.oram.path(self.oram.position(index as u32));
        let mut bucket = [0u8; BUCKET_SIZE];
        for &b in &path {
            m.read(self.bucket_addr(b), &mut bucket)?;
        }
        let mut stash = alloc::vec![0u8; self.params.stash_capacity * SLOT_SIZE];
        m.read(self.stash_region, &mut stash)?;

        let value = self.oram.access(index as u32, None)?;

        self.write_posmap(m, rng)?;
        for &b in path.iter().rev() {
            self.write_bucket(m, b, rng)?;
        }
        self.write_stash(m, rng)?;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_collect, CollectorPolicy};
    use crate::trace::{trace_stats, Channel};
    use crate::workloads::pir::pir_database;

    #[test]
    fn read_after_write() {
        let db = pir_database(64, 0.0, 1);
        let mut o = PathOram::new(&db, 3);
        let v = [7u8; VALUE_SIZE];
        o.access(10, Some(v)).unwrap();
        assert_eq!(o.access(10, None).unwrap(), v);
        assert_eq!(o.access(11, None).unwrap(), db[11]);
        assert!(o.check_invariant());
    }

    #[test]
    fn invariant_holds_over_random_accesses() {
        let db = pir_database(100, 0.5, 2);
        let mut o = PathOram::new(&db, 4);
        let mut r = rng_from(5);
        for _ in 0..2000 {
            let id = r.gen_range(0..100);
            assert_eq!(o.access(id, None).unwrap(), db[id as usize]);
        }
        assert!(o.check_invariant());
    }

    #[test]
    fn stash_stays_small() {
        let db = pir_database(1 << 10, 0.0, 6);
        let mut o = PathOram::new(&db, 8);
        let mut r = rng_from(9);
        for _ in 0..10_000 {
            o.access(r.gen_range(0..1 << 10), None).unwrap();
        }
        assert!(o.max_stash() < 100, "max stash {}", o.max_stash());
        assert!(o.check_invariant());
    }

    #[test]
    fn tree_shape() {
        let o = PathOram::new(&pir_database(64, 0.0, 1), 1);
        assert_eq!(o.height(), 6);
        assert_eq!(o.num_buckets(), 127);
        assert_eq!(o.path(0), [0, 1, 3, 7, 15, 31, 63]);
        assert_eq!(*o.path(63).last().unwrap(), 126);
    }

    #[test]
    fn sim_lookup_returns_record() {
        let db = pir_database(64, 0.5, 7);
        let mut m = SimMachine::new(1);
        let mut pir = OramPir::setup(&mut m, &db, OramPirParams::default(), 9).unwrap();
        let mut rng = rng_from(2);
        for i in [0u64, 5, 63, 5] {
            assert_eq!(pir.lookup(&mut m, i, &mut rng).unwrap(), db[i as usize]);
        }
        assert!(pir.lookup(&mut m, 64, &mut rng).is_err());
    }

    #[test]
    fn flaw_suppresses_diffs_of_zero_blocks() {
        let db = pir_database(64, 1.0, 7);
        let policy = CollectorPolicy::with_channels(&[Channel::Page, Channel::Cipher]);
        let diffs = |flaw: bool| {
            let mut m = SimMachine::new(1);
            let params = OramPirParams {
                zero_block_flaw: flaw,
                ..OramPirParams::default()
            };
            let mut pir = OramPir::setup(&mut m, &db, params, 9).unwrap();
            let mut rng = rng_from(2);
            let (t, _) = run_collect(&mut m, &policy, 0, |m| pir.lookup(m, 3, &mut rng)).unwrap();
            trace_stats(&t).total_ci
        };
        assert!(diffs(true) < diffs(false));
    }
}
