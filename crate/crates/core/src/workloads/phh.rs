//! Private heavy hitters: aggregate inputs in a hash map, then release the
//! keys whose Laplace-noised count clears the stability threshold.
//!
//! The noise loop iterates the key vector, so its length is the number of
//! distinct keys. With `mitigated` set, a random number of dummy keys from a
//! reserved namespace is inserted between the two phases; the dummies
//! lengthen the loop but never appear in the released output.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::hashmap::{SimHashMap, DEFAULT_LADDER, MAX_KEY_LEN};
use super::SimVec;
use crate::mitigation::{laplace, threshold, DummySampler};
use crate::rng::SimRng;
use crate::sim::{page_addr, Addr, PageKind, SimError, SimMachine};
use crate::trace::{Gpn, MarkerKind};

pub const DUMMY_PREFIX: &str = "dummy://";

const INPUT_SLOT: u64 = 256;

/// Which part of the run the START/STOP markers enclose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PhhStage {
    #[default]
    Full,
    Aggregate,
    NoiseThreshold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhhParams {
    pub eps: f64,
    pub delta: f64,
    pub mitigated: bool,
    pub stage: PhhStage,
    pub ladder: Vec<u64>,
}

impl PhhParams {
    pub fn new(eps: f64, delta: f64) -> Self {
        PhhParams {
            eps,
            delta,
            mitigated: false,
            stage: PhhStage::Full,
            ladder: DEFAULT_LADDER.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(SimError::Workload("eps must be positive and finite"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SimError::Workload("delta must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhhOutput {
    /// Released (key, noisy count) pairs, in key-vector order.
    pub released: Vec<(String, i64)>,
    pub loop_iterations: u64,
    pub dummies: u64,
    pub rehashes: u64,
    /// Indices of inputs whose insertion triggered a rehash.
    pub rehashed_inputs: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct PhhCode {
    pub ingest: Gpn,
    pub dummies: Gpn,
    pub noise_loop: Gpn,
    pub laplace: Gpn,
    pub release: Gpn,
}

/// A PHH instance with its inputs loaded into guest memory.
pub struct Phh {
    params: PhhParams,
    code: PhhCode,
    map: SimHashMap,
    keys: SimVec,
    released: SimVec,
    rng_state: Addr,
    inputs: Vec<Addr>,
}

impl Phh {
    /// Allocates the program and copies `inputs` into an input buffer.
    /// Run this before tracing starts.
    pub fn setup<K: AsRef<[u8]>>(m: &mut SimMachine, inputs: &[K], params: &PhhParams) -> Result<Self, SimError> {
        params.validate()?;
        if inputs.is_empty() {
            return Err(SimError::Workload("PHH needs at least one input"));
        }
        let code = PhhCode {
            ingest: m.alloc(1, PageKind::Code),
            dummies: m.alloc(1, PageKind::Code),
            noise_loop: m.alloc(1, PageKind::Code),
            laplace: m.alloc(1, PageKind::Code),
            release: m.alloc(1, PageKind::Code),
        };
        let map = SimHashMap::new(m, &params.ladder)?;
        let globals = page_addr(m.alloc(1, PageKind::Data));
        let keys = SimVec::new(m, globals)?;
        let released = SimVec::new(m, globals + 64)?;
        let per_page = 4096 / INPUT_SLOT as usize;
        let first = page_addr(m.alloc(inputs.len().div_ceil(per_page), PageKind::Data));
        let mut slots = Vec::with_capacity(inputs.len());
        for (i, k) in inputs.iter().enumerate() {
            let k = k.as_ref();
            if k.len() > MAX_KEY_LEN {
                return Err(SimError::Workload("input longer than 224 bytes"));
            }
            let a = first + i as u64 * INPUT_SLOT;
            m.write_u64(a, k.len() as u64)?;
            m.write(a + 8, k)?;
            slots.push(a);
        }
        Ok(Phh {
            params: params.clone(),
            code,
            map,
            keys,
            released,
            rng_state: globals + 128,
            inputs: slots,
        })
    }

    pub fn code(&self) -> PhhCode {
        self.code
    }

    pub fn map(&self) -> &SimHashMap {
        &self.map
    }

    fn window(&self, m: &mut SimMachine, stage: PhhStage, kind: MarkerKind) {
        if self.params.stage == stage {
            m.marker(kind);
        }
    }

    pub fn run(&mut self, m: &mut SimMachine, rng: &mut SimRng) -> Result<PhhOutput, SimError> {
        let mut out = PhhOutput::default();
        self.window(m, PhhStage::Full, MarkerKind::Start);

        // Phase 1: aggregation.
        self.window(m, PhhStage::Aggregate, MarkerKind::Start);
        for i in 0..self.inputs.len() {
            m.exec(self.code.ingest)?;
            let slot = self.inputs[i];
            let len = m.read_u64(slot)? as usize;
            let mut key = alloc::vec![0u8; len];
            m.read(slot + 8, &mut key)?;
            let o = self.map.insert(m, self.code.ingest, &key)?;
            m.branch(o.inserted);
            if o.inserted {
                self.keys.push(m, o.node)?;
            }
            if o.rehashed {
                out.rehashed_inputs.push(i);
            }
        }
        self.window(m, PhhStage::Aggregate, MarkerKind::Stop);

        // Dummy injection sits between the two collection windows.
        if self.params.mitigated {
            let sampler = DummySampler::new(self.params.eps, self.params.delta)
                .map_err(|_| SimError::Workload("invalid dummy parameters"))?;
            let count = sampler.sample(rng);
            let salt: u64 = rng.gen();
            m.exec(self.code.dummies)?;
            for j in 0..count {
                let key = format!("{DUMMY_PREFIX}{salt:016x}/{j}");
                let o = self.map.insert(m, self.code.dummies, key.as_bytes())?;
                self.keys.push(m, o.node)?;
            }
            out.dummies = count;
        }

        // Phase 2: noise and threshold over the key vector.
        self.window(m, PhhStage::NoiseThreshold, MarkerKind::Start);
        let t = threshold(self.params.eps, self.params.delta);
        m.exec(self.code.noise_loop)?;
        let n = self.keys.len(m)?;
        let mut survivors = Vec::new();
        for i in 0..n {
            let node = self.keys.get(m, i)?;
            let count = m.read_u64(node + 16)?;
            let noise = m.call(self.code.noise_loop, self.code.laplace, |m| {
                let state = m.read_u64(self.rng_state)?;
                m.write_u64(self.rng_state, state.wrapping_add(1))?;
                Ok(laplace(rng, 1.0 / self.params.eps))
            })?;
            let noisy = count as i64 + libm::round(noise) as i64;
            let keep = noisy as f64 >= t;
            m.branch(keep);
            if keep {
                m.call(self.code.noise_loop, self.code.release, |m| {
                    self.released.push(m, node)?;
                    self.released.push(m, noisy as u64)
                })?;
                survivors.push((node, noisy));
            }
            out.loop_iterations += 1;
        }
        self.window(m, PhhStage::NoiseThreshold, MarkerKind::Stop);
        self.window(m, PhhStage::Full, MarkerKind::Stop);

        for (node, noisy) in survivors {
            let (key, _) = self.map.peek_node(m, node)?;
            if !key.starts_with(DUMMY_PREFIX) {
                out.released.push((key, noisy));
            }
        }
        out.rehashes = self.map.rehashes();
        Ok(out)
    }
}
