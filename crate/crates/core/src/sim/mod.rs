//! Simulated guest memory and the raw event tap beneath trace collection.

mod cipher;
mod collector;

pub use cipher::Cipher;
pub use collector::{collect, CacheNoise, CollectError, CollectorPolicy, PolicyError};

use alloc::vec::Vec;

use crate::trace::{Block16, Gpn, MarkerKind, Trace};

pub const PAGE_SIZE: usize = 4096;
pub const LINE_SIZE: usize = 64;
pub const BLOCK_SIZE: usize = 16;
pub const LINES_PER_PAGE: usize = PAGE_SIZE / LINE_SIZE;
pub const BLOCKS_PER_PAGE: usize = PAGE_SIZE / BLOCK_SIZE;

/// First page handed out by the allocator.
pub const DEFAULT_BASE_GPN: u64 = 0x10_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PageKind {
    Code,
    Data,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PageAttrs {
    pub encrypted: bool,
    pub reserved: bool,
    pub kind: PageKind,
}

/// Guest physical byte address.
pub type Addr = u64;

pub fn page_addr(gpn: Gpn) -> Addr {
    gpn.0 * PAGE_SIZE as u64
}

pub fn gpn_of(addr: Addr) -> Gpn {
    Gpn(addr / PAGE_SIZE as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemEvent {
    Exec {
        gpn: Gpn,
    },
    Read {
        gpn: Gpn,
        line: u8,
    },
    Write {
        gpn: Gpn,
        line: u8,
        block: u8,
        old_plain: Block16,
        new_plain: Block16,
    },
    Branch {
        taken: bool,
        is_return: bool,
    },
    MarkerRaw(MarkerKind),
    StepBoundary,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("access to unmapped address {addr:#x}")]
    Fault { addr: Addr },
    #[error("end_step without matching begin_step")]
    StepGroup,
    #[error("collection failed: {0}")]
    Collect(#[from] CollectError),
    #[error("{0}")]
    Workload(&'static str),
}

/// Paged guest memory with a deterministic cipher and an event tap.
///
/// Memory is one contiguous arena starting at `base`; the allocator is a
/// bump pointer, so page numbers depend only on the allocation sequence.
pub struct SimMachine {
    base: u64,
    mem: Vec<u8>,
    attrs: Vec<PageAttrs>,
    cipher: Cipher,
    tap: Vec<MemEvent>,
    tracing: bool,
    step_depth: u32,
}

impl SimMachine {
    pub fn new(cipher_key: u64) -> Self {
        Self::with_base(DEFAULT_BASE_GPN, cipher_key)
    }

    pub fn with_base(base_gpn: u64, cipher_key: u64) -> Self {
        SimMachine {
            base: base_gpn,
            mem: Vec::new(),
            attrs: Vec::new(),
            cipher: Cipher::new(cipher_key),
            tap: Vec::new(),
            tracing: false,
            step_depth: 0,
        }
    }

    pub fn cipher(&self) -> &Cipher {
        &self.cipher
    }

    pub fn num_pages(&self) -> usize {
        self.attrs.len()
    }

    /// Allocates `n` zeroed, encrypted, non-reserved pages and returns the first.
    pub fn alloc(&mut self, n: usize, kind: PageKind) -> Gpn {
        let first = Gpn(self.base + self.attrs.len() as u64);
        self.mem.resize(self.mem.len() + n * PAGE_SIZE, 0);
        self.attrs.extend(core::iter::repeat(PageAttrs {
            encrypted: true,
            reserved: false,
            kind,
        }).take(n));
        first
    }

    fn page_index(&self, gpn: Gpn) -> Option<usize> {
        let idx = gpn.0.checked_sub(self.base)? as usize;
        (idx < self.attrs.len()).then_some(idx)
    }

    pub fn attrs(&self, gpn: Gpn) -> Option<PageAttrs> {
        self.page_index(gpn).map(|i| self.attrs[i])
    }

    pub fn set_encrypted(&mut self, gpn: Gpn, encrypted: bool) {
        if let Some(i) = self.page_index(gpn) {
            self.attrs[i].encrypted = encrypted;
        }
    }

    pub fn set_reserved(&mut self, gpn: Gpn, reserved: bool) {
        if let Some(i) = self.page_index(gpn) {
            self.attrs[i].reserved = reserved;
        }
    }

    /// Turns tap recording on or off. Setup work is normally done untraced.
    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    pub fn tap(&self) -> &[MemEvent] {
        &self.tap
    }

    pub fn take_tap(&mut self) -> Vec<MemEvent> {
        core::mem::take(&mut self.tap)
    }

    fn emit(&mut self, ev: MemEvent) {
        if self.tracing {
            self.tap.push(ev);
        }
    }

    fn end_access(&mut self) {
        if self.step_depth == 0 {
            self.emit(MemEvent::StepBoundary);
        }
    }

    /// Groups the following accesses into one step; the collector's data
    /// queue may grow to hold every page touched inside a step.
    pub fn begin_step(&mut self) {
        self.step_depth += 1;
    }

    pub fn end_step(&mut self) -> Result<(), SimError> {
        if self.step_depth == 0 {
            return Err(SimError::StepGroup);
        }
        self.step_depth -= 1;
        self.end_access();
        Ok(())
    }

    fn offset(&self, addr: Addr, len: usize) -> Result<usize, SimError> {
        let start = addr
            .checked_sub(self.base * PAGE_SIZE as u64)
            .ok_or(SimError::Fault { addr })? as usize;
        if start + len > self.mem.len() {
            return Err(SimError::Fault { addr });
        }
        Ok(start)
    }

    pub fn exec(&mut self, gpn: Gpn) -> Result<(), SimError> {
        if self.page_index(gpn).is_none() {
            return Err(SimError::Fault { addr: page_addr(gpn) });
        }
        self.emit(MemEvent::Exec { gpn });
        Ok(())
    }

    pub fn branch(&mut self, taken: bool) {
        self.emit(MemEvent::Branch { taken, is_return: false });
    }

    pub fn ret(&mut self) {
        self.emit(MemEvent::Branch { taken: true, is_return: true });
    }

    /// Executes `callee`'s code page, runs `body`, and returns to `caller`.
    pub fn call<T>(
        &mut self,
        caller: Gpn,
        callee: Gpn,
        body: impl FnOnce(&mut Self) -> Result<T, SimError>,
    ) -> Result<T, SimError> {
        self.exec(callee)?;
        let out = body(self)?;
        self.ret();
        self.exec(caller)?;
        Ok(out)
    }

    pub fn marker(&mut self, kind: MarkerKind) {
        self.emit(MemEvent::MarkerRaw(kind));
    }

    pub fn read(&mut self, addr: Addr, buf: &mut [u8]) -> Result<(), SimError> {
        let off = self.offset(addr, buf.len())?;
        buf.copy_from_slice(&self.mem[off..off + buf.len()]);
        if self.tracing && !buf.is_empty() {
            let first = addr / LINE_SIZE as u64;
            let last = (addr + buf.len() as u64 - 1) / LINE_SIZE as u64;
            for l in first..=last {
                let a = l * LINE_SIZE as u64;
                let line = ((a % PAGE_SIZE as u64) / LINE_SIZE as u64) as u8;
                self.tap.push(MemEvent::Read { gpn: gpn_of(a), line });
            }
        }
        self.end_access();
        Ok(())
    }

    pub fn write(&mut self, addr: Addr, data: &[u8]) -> Result<(), SimError> {
        let off = self.offset(addr, data.len())?;
        if data.is_empty() {
            return Ok(());
        }
        let first = addr / BLOCK_SIZE as u64;
        let last = (addr + data.len() as u64 - 1) / BLOCK_SIZE as u64;
        for b in first..=last {
            let baddr = b * BLOCK_SIZE as u64;
            let boff = (baddr - self.base * PAGE_SIZE as u64) as usize;
            // Byte range of `data` that lands in this block.
            let lo = baddr.max(addr);
            let hi = (baddr + BLOCK_SIZE as u64).min(addr + data.len() as u64);
            let old: Block16 = self.mem[boff..boff + BLOCK_SIZE].try_into().unwrap();
            let src = &data[(lo - addr) as usize..(hi - addr) as usize];
            let dst = off + (lo - addr) as usize;
            self.mem[dst..dst + src.len()].copy_from_slice(src);
            if self.tracing {
                let new: Block16 = self.mem[boff..boff + BLOCK_SIZE].try_into().unwrap();
                let in_page = baddr % PAGE_SIZE as u64;
                self.tap.push(MemEvent::Write {
                    gpn: gpn_of(baddr),
                    line: (in_page / LINE_SIZE as u64) as u8,
                    block: (in_page / BLOCK_SIZE as u64) as u8,
                    old_plain: old,
                    new_plain: new,
                });
            }
        }
        self.end_access();
        Ok(())
    }

    pub fn read_u64(&mut self, addr: Addr) -> Result<u64, SimError> {
        let mut b = [0u8; 8];
        self.read(addr, &mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn write_u64(&mut self, addr: Addr, v: u64) -> Result<(), SimError> {
        self.write(addr, &v.to_le_bytes())
    }

    /// Reads memory without recording anything. For setup and assertions.
    pub fn peek(&self, addr: Addr, buf: &mut [u8]) -> Result<(), SimError> {
        let off = self.offset(addr, buf.len())?;
        buf.copy_from_slice(&self.mem[off..off + buf.len()]);
        Ok(())
    }

    /// Current plaintext of one 16-byte block.
    pub fn block_plain(&self, gpn: Gpn, block: u8) -> Result<Block16, SimError> {
        let mut b = [0u8; 16];
        self.peek(page_addr(gpn) + block as u64 * BLOCK_SIZE as u64, &mut b)?;
        Ok(b)
    }

    pub fn ciphertext_of(&self, gpn: Gpn, block: u8, plain: &Block16) -> Block16 {
        self.cipher.encrypt(gpn, block, plain)
    }

    /// Current ciphertext of one block as the hypervisor would read it.
    pub fn block_ciphertext(&self, gpn: Gpn, block: u8) -> Result<Block16, SimError> {
        Ok(self.ciphertext_of(gpn, block, &self.block_plain(gpn, block)?))
    }

    /// Collects the tap recorded so far into a trace under `policy`.
    pub fn collect(&mut self, policy: &CollectorPolicy, seed: u64) -> Result<Trace, SimError> {
        let tap = self.take_tap();
        let attrs = |g: Gpn| self.attrs(g);
        Ok(collect(&tap, attrs, &self.cipher, policy, seed)?)
    }
}

/// Runs `f` with tracing on and collects its tap under `policy`.
///
/// Work done on `machine` before the call (loading a database, building
/// an index) is not part of the trace.
pub fn run_collect<T>(
    machine: &mut SimMachine,
    policy: &CollectorPolicy,
    seed: u64,
    f: impl FnOnce(&mut SimMachine) -> Result<T, SimError>,
) -> Result<(Trace, T), SimError> {
    policy.validate().map_err(|e| SimError::Collect(CollectError::Policy(e)))?;
    machine.take_tap();
    machine.set_tracing(true);
    let out = f(machine);
    machine.set_tracing(false);
    let out = out?;
    let trace = machine.collect(policy, seed)?;
    Ok((trace, out))
}
