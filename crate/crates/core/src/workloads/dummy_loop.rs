//! A loop whose iteration count is `base + label + m`, with `m` drawn from
//! the dummy sampler. The loop count is the only thing that depends on the
//! label, so any attacker is limited by the sampler's DP guarantee.

use crate::mitigation::DummySampler;
use crate::rng::SimRng;
use crate::sim::{page_addr, Addr, PageKind, SimError, SimMachine};
use crate::trace::{Gpn, MarkerKind};

const DATA_PAGES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DummyLoopParams {
    pub eps: f64,
    pub delta: f64,
    pub base_iterations: u64,
}

pub struct DummyLoop {
    sampler: DummySampler,
    base: u64,
    body: Gpn,
    cond: Gpn,
    data: Addr,
}

impl DummyLoop {
    pub fn setup(m: &mut SimMachine, params: &DummyLoopParams) -> Result<Self, SimError> {
        let sampler = DummySampler::new(params.eps, params.delta)
            .map_err(|_| SimError::Workload("invalid dummy parameters"))?;
        Ok(DummyLoop {
            sampler,
            base: params.base_iterations,
            body: m.alloc(1, PageKind::Code),
            cond: m.alloc(1, PageKind::Code),
            data: page_addr(m.alloc(DATA_PAGES, PageKind::Data)),
        })
    }

    /// Runs the loop for `label` in {0, 1}; returns the iteration count.
    pub fn run(&self, m: &mut SimMachine, label: bool, rng: &mut SimRng) -> Result<u64, SimError> {
        let n = self.base + label as u64 + self.sampler.sample(rng);
        m.marker(MarkerKind::Start);
        for i in 0..n {
            m.exec(self.body)?;
            m.read_u64(self.data + (i % DATA_PAGES as u64) * 4096)?;
            m.exec(self.cond)?;
            m.branch(i + 1 < n);
        }
        m.marker(MarkerKind::Stop);
        Ok(n)
    }
}
