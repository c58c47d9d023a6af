use crate::sim::{page_addr, Addr, PageKind, SimError, SimMachine, PAGE_SIZE};

/// Growable array of `u64` in simulated memory.
///
/// The header `[ptr, len, cap]` lives at a fixed address; growth doubles
/// the capacity into freshly allocated pages and copies element by element.
#[derive(Clone, Debug)]
pub struct SimVec {
    header: Addr,
}

impl SimVec {
    pub const INITIAL_CAP: u64 = 8;

    /// Creates an empty vector whose 24-byte header lives at `header`.
    pub fn new(m: &mut SimMachine, header: Addr) -> Result<Self, SimError> {
        let data = page_addr(m.alloc(1, PageKind::Data));
        m.write(header, &header_bytes(data, 0, Self::INITIAL_CAP))?;
        Ok(SimVec { header })
    }

    fn read_header(&self, m: &mut SimMachine) -> Result<(Addr, u64, u64), SimError> {
        let mut b = [0u8; 24];
        m.read(self.header, &mut b)?;
        let f = |i: usize| u64::from_le_bytes(b[i * 8..i * 8 + 8].try_into().unwrap());
        Ok((f(0), f(1), f(2)))
    }

    pub fn len(&self, m: &mut SimMachine) -> Result<u64, SimError> {
        Ok(self.read_header(m)?.1)
    }

    pub fn is_empty(&self, m: &mut SimMachine) -> Result<bool, SimError> {
        Ok(self.len(m)? == 0)
    }

    pub fn push(&self, m: &mut SimMachine, v: u64) -> Result<(), SimError> {
        let (mut data, len, mut cap) = self.read_header(m)?;
        if len == cap {
            let new_cap = cap * 2;
            let pages = ((new_cap * 8) as usize).div_ceil(PAGE_SIZE);
            let new_data = page_addr(m.alloc(pages, PageKind::Data));
            for i in 0..len {
                m.begin_step();
                let x = m.read_u64(data + i * 8)?;
                m.write_u64(new_data + i * 8, x)?;
                m.end_step()?;
            }
            data = new_data;
            cap = new_cap;
        }
        m.write_u64(data + len * 8, v)?;
        m.write(self.header, &header_bytes(data, len + 1, cap))
    }

    pub fn get(&self, m: &mut SimMachine, i: u64) -> Result<u64, SimError> {
        let (data, len, _) = self.read_header(m)?;
        if i >= len {
            return Err(SimError::Workload("vector index out of range"));
        }
        m.read_u64(data + i * 8)
    }

    /// Element address without touching memory; the header is peeked.
    pub fn element_addr(&self, m: &SimMachine, i: u64) -> Result<Addr, SimError> {
        let mut b = [0u8; 8];
        m.peek(self.header, &mut b)?;
        Ok(u64::from_le_bytes(b) + i * 8)
    }
}

fn header_bytes(data: Addr, len: u64, cap: u64) -> [u8; 24] {
    let mut b = [0u8; 24];
    b[..8].copy_from_slice(&data.to_le_bytes());
    b[8..16].copy_from_slice(&len.to_le_bytes());
    b[16..].copy_from_slice(&cap.to_le_bytes());
    b
}
