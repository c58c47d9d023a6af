//! Private information retrieval back-ends without ORAM: a hash-map lookup
//! and a constant-time linear scan.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::hashmap::{SimHashMap, DEFAULT_LADDER};
use crate::rng::rng_from;
use crate::sim::{page_addr, Addr, PageKind, SimError, SimMachine, PAGE_SIZE};
use crate::trace::Gpn;

pub const VALUE_SIZE: usize = 64;

pub type Value = [u8; VALUE_SIZE];

/// Deterministic database of 64-byte values. Roughly `zero_fraction` of
/// the records are all-zero; the rest are random and never all-zero.
pub fn pir_database(db_size: usize, zero_fraction: f64, db_seed: u64) -> Vec<Value> {
    let mut rng = rng_from(db_seed);
    (0..db_size)
        .map(|_| {
            let mut v = [0u8; VALUE_SIZE];
            if rng.gen::<f64>() >= zero_fraction {
                rng.fill_bytes(&mut v);
                v[0] |= 1;
            }
            v
        })
        .collect()
}

/// Key under which record `i` is stored in the hash-map back-end.
pub fn pir_key(i: u64) -> String {
    format!("key-{i:06}")
}

/// Hash-map lookup: request, map header, bucket, node, value, response.
/// Missing keys skip the value read and take a different code path.
pub struct NaivePir {
    handler: Gpn,
    found: Gpn,
    missing: Gpn,
    map: SimHashMap,
    values: Addr,
    request: Addr,
    response: Addr,
}

impl NaivePir {
    pub fn setup(m: &mut SimMachine, db: &[Value]) -> Result<Self, SimError> {
        let handler = m.alloc(1, PageKind::Code);
        let found = m.alloc(1, PageKind::Code);
        let missing = m.alloc(1, PageKind::Code);
        let mut map = SimHashMap::new(m, &DEFAULT_LADDER)?;
        let values = page_addr(m.alloc((db.len() * VALUE_SIZE).div_ceil(PAGE_SIZE).max(1), PageKind::Data));
        for (i, v) in db.iter().enumerate() {
            map.insert_with(m, handler, pir_key(i as u64).as_bytes(), i as u64)?;
            m.write(values + (i * VALUE_SIZE) as u64, v)?;
        }
        let request = page_addr(m.alloc(1, PageKind::Data));
        let response = page_addr(m.alloc(1, PageKind::Data));
        Ok(NaivePir {
            handler,
            found,
            missing,
            map,
            values,
            request,
            response,
        })
    }

    pub fn lookup(&self, m: &mut SimMachine, key: &[u8]) -> Result<Option<Value>, SimError> {
        m.exec(self.handler)?;
        m.write(self.request, key)?;
        let node = self.map.find(m, self.handler, key)?;
        m.branch(node.is_some());
        match node {
            Some(node) => m.call(self.handler, self.found, |m| {
                let idx = m.read_u64(node + 16)?;
                let mut v = [0u8; VALUE_SIZE];
                m.read(self.values + idx * VALUE_SIZE as u64, &mut v)?;
                m.write(self.response, &v)?;
                Ok(Some(v))
            }),
            None => m.call(self.handler, self.missing, |m| {
                m.write_u64(self.response, u64::MAX)?;
                Ok(None)
            }),
        }
    }
}

/// Constant-time linear scan: every record is read and the accumulator is
/// rewritten through a branch-free select on every iteration.
pub struct ScanPir {
    code: Gpn,
    db: Addr,
    len: u64,
    acc: Addr,
    response: Addr,
}

impl ScanPir {
    pub fn setup(m: &mut SimMachine, db: &[Value]) -> Result<Self, SimError> {
        let code = m.alloc(1, PageKind::Code);
        let base = page_addr(m.alloc((db.len() * VALUE_SIZE).div_ceil(PAGE_SIZE).max(1), PageKind::Data));
        for (i, v) in db.iter().enumerate() {
            m.write(base + (i * VALUE_SIZE) as u64, v)?;
        }
        let acc = page_addr(m.alloc(1, PageKind::Data));
        // leftover from an earlier request
        m.write(acc, &[0xa5u8; VALUE_SIZE])?;
        let response = page_addr(m.alloc(1, PageKind::Data));
        Ok(ScanPir {
            code,
            db: base,
            len: db.len() as u64,
            acc,
            response,
        })
    }

    pub fn lookup(&self, m: &mut SimMachine, index: u64) -> Result<Value, SimError> {
        if index >= self.len {
            return Err(SimError::Workload("record index out of range"));
        }
        m.exec(self.code)?;
        m.write(self.acc, &[0u8; VALUE_SIZE])?;
        for i in 0..self.len {
            let mut rec = [0u8; VALUE_SIZE];
            m.read(self.db + i * VALUE_SIZE as u64, &mut rec)?;
            let mut cur = [0u8; VALUE_SIZE];
            m.read(self.acc, &mut cur)?;
            // all-ones when i == index, all-zeros otherwise
            let mask = ((i ^ index).wrapping_sub(1) >> 63) as u8 * 0xff;
            let mut next = [0u8; VALUE_SIZE];
            for j in 0..VALUE_SIZE {
                next[j] = (rec[j] & mask) | (cur[j] & !mask);
            }
            m.write(self.acc, &next)?;
        }
        let mut out = [0u8; VALUE_SIZE];
        m.read(self.acc, &mut out)?;
        m.write(self.response, &out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_collect, CollectorPolicy};
    use crate::trace::{Channel, TraceEvent};

    #[test]
    fn database_zero_fraction() {
        let db = pir_database(1000, 0.3, 1);
        let zeros = db.iter().filter(|v| v.iter().all(|&b| b == 0)).count();
        assert!((250..350).contains(&zeros));
        assert_eq!(db, pir_database(1000, 0.3, 1));
    }

    #[test]
    fn naive_returns_values_and_missing() {
        let db = pir_database(50, 0.0, 2);
        let mut m = SimMachine::new(1);
        let pir = NaivePir::setup(&mut m, &db).unwrap();
        assert_eq!(pir.lookup(&mut m, pir_key(7).as_bytes()).unwrap(), Some(db[7]));
        assert_eq!(pir.lookup(&mut m, b"nope").unwrap(), None);
    }

    #[test]
    fn naive_missing_key_takes_different_code_path() {
        let db = pir_database(50, 0.0, 2);
        let policy = CollectorPolicy::default();
        let cf = |key: &[u8]| {
            let mut m = SimMachine::new(1);
            let pir = NaivePir::setup(&mut m, &db).unwrap();
            let (t, _) = run_collect(&mut m, &policy, 0, |m| pir.lookup(m, key)).unwrap();
            t.events()
                .iter()
                .filter_map(|e| match e {
                    TraceEvent::CodeFetch { gpn } => Some(*gpn),
                    _ => None,
                })
                .collect::<Vec<_>>()
        };
        let present = cf(pir_key(3).as_bytes());
        assert_ne!(present, cf(b"key-999999"));
        assert_eq!(present, cf(pir_key(3).as_bytes()));
    }

    #[test]
    fn naive_fifth_access_signatures_mostly_distinct() {
        let db = pir_database(1000, 0.0, 2);
        let mut m = SimMachine::new(1);
        let pir = NaivePir::setup(&mut m, &db).unwrap();
        let policy = CollectorPolicy::with_channels(&[Channel::Page, Channel::Cache]);
        let sigs: Vec<_> = (0..1000)
            .map(|k| {
                let (t, _) = run_collect(&mut m, &policy, 0, |m| pir.lookup(m, pir_key(k).as_bytes())).unwrap();
                t.events()
                    .iter()
                    .filter(|e| matches!(e, TraceEvent::DataAccess { .. }))
                    .nth(4)
                    .cloned()
            })
            .collect();
        let mut same = 0u64;
        for i in 0..sigs.len() {
            for j in i + 1..sigs.len() {
                same += (sigs[i] == sigs[j]) as u64;
            }
        }
        let pairs = 1000 * 999 / 2;
        assert!((same as f64) / (pairs as f64) <= 0.01, "{same} of {pairs} pairs collide");
    }

    #[test]
    fn scan_is_correct() {
        let db = pir_database(100, 0.2, 3);
        let mut m = SimMachine::new(1);
        let pir = ScanPir::setup(&mut m, &db).unwrap();
        for i in [0, 42, 99] {
            assert_eq!(pir.lookup(&mut m, i).unwrap(), db[i as usize]);
        }
        assert!(pir.lookup(&mut m, 100).is_err());
    }

    #[test]
    fn scan_page_trace_independent_of_index_but_cipher_is_not() {
        let db = pir_database(256, 0.0, 4);
        let collect = |index: u64, channels: &[Channel]| {
            let mut m = SimMachine::new(7);
            let pir = ScanPir::setup(&mut m, &db).unwrap();
            let policy = CollectorPolicy::with_channels(channels);
            run_collect(&mut m, &policy, 0, |m| pir.lookup(m, index)).unwrap().0
        };
        let page = [Channel::Page];
        assert_eq!(collect(0, &page), collect(255, &page));
        let both = [Channel::Page, Channel::Cipher];
        assert_ne!(collect(0, &both), collect(255, &both));
    }
}
