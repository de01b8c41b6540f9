//! Memory-system models: global coalescing, shared-memory banks and an LRU L2.

use std::num::NonZeroUsize;

use super::MachineConfig;

/// Width of one global memory transaction.
pub const SEGMENT_BYTES: u64 = 128;

/// Number of distinct aligned 128-byte segments a warp's 4-byte accesses touch.
pub fn coalesce(addrs: &[u64]) -> u64 {
    distinct_blocks(addrs, SEGMENT_BYTES, &mut Vec::new()).len() as u64
}

/// Sorted distinct `addr / block` values, built in `scratch`.
pub(crate) fn distinct_blocks<'a>(
    addrs: &[u64],
    block: u64,
    scratch: &'a mut Vec<u64>,
) -> &'a [u64] {
    scratch.clear();
    scratch.extend(addrs.iter().map(|a| a / block));
    // Lane addresses are usually already ascending.
    if !scratch.is_sorted() {
        scratch.sort_unstable();
    }
    scratch.dedup();
    scratch
}

/// Conflict degree of one warp-wide shared access: the largest number of
/// distinct 4-byte words any one bank must serve. Lanes reading the same
/// word share one access.
pub fn conflict_degree(addrs: &[u64], banks: u32) -> u64 {
    conflict_degree_in(addrs, banks, &mut Vec::new(), &mut Vec::new())
}

pub(crate) fn conflict_degree_in(
    addrs: &[u64],
    banks: u32,
    words: &mut Vec<u64>,
    per_bank: &mut Vec<u64>,
) -> u64 {
    if addrs.is_empty() {
        return 0;
    }
    let words = distinct_blocks(addrs, 4, words);
    per_bank.clear();
    per_bank.resize(banks as usize, 0);
    let mut worst = 0;
    for &w in words {
        let c = &mut per_bank[(w % banks as u64) as usize];
        *c += 1;
        worst = worst.max(*c);
    }
    worst
}

/// Extra serialisation cycles of one warp-wide shared access.
pub fn bank_conflicts(addrs: &[u64], banks: u32) -> u64 {
    conflict_degree(addrs, banks).saturating_sub(1)
}

/// Fully associative LRU cache over line ids.
pub struct LruCache {
    lines: lru::LruCache<u64, ()>,
}

impl LruCache {
    pub fn new(lines: usize) -> Self {
        LruCache {
            lines: lru::LruCache::new(NonZeroUsize::new(lines.max(1)).expect("nonzero")),
        }
    }

    /// Touches `line`; returns true on a hit. A miss fills the line,
    /// evicting the least recently used one when full.
    pub fn access(&mut self, line: u64) -> bool {
        self.lines.put(line, ()).is_some()
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Bytes fetched from DRAM for an ordered stream of `(address, size)`
/// reads through the machine's L2: one full line per miss.
pub fn l2_filter(stream: &[(u64, u64)], m: &MachineConfig) -> u64 {
    let line = m.l2_line_bytes as u64;
    let mut cache = LruCache::new(m.l2_lines as usize);
    let mut bytes = 0;
    for &(addr, size) in stream {
        if size == 0 {
            continue;
        }
        for l in addr / line..=(addr + size - 1) / line {
            if !cache.access(l) {
                bytes += line;
            }
        }
    }
    bytes
}
