//! Feedback maps: an AFL-style bucketized probe-edge map and a bit-packed
//! matcher-table access map, each paired with a "virgin" copy holding
//! everything a campaign has seen so far.

use std::path::Path;

use thiserror::Error;

pub const EDGE_MAP_SIZE: usize = 1 << 16;

const DUMP_MAGIC: &[u8; 4] = b"MFCV";
const DUMP_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("matcher index {idx} out of range for a table of {size} entries")]
    IndexOutOfRange { idx: usize, size: usize },
    #[error("corrupt coverage dump: {0}")]
    CorruptDump(String),
    #[error("matcher sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bucket bit for a hit count: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128-255.
pub fn bucket(count: u8) -> u8 {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 4,
        4..=7 => 8,
        8..=15 => 16,
        16..=31 => 32,
        32..=127 => 64,
        128..=255 => 128,
    }
}

/// Per-run edge hit counters.
#[derive(Clone, Debug)]
pub struct EdgeMap {
    counts: Vec<u8>,
    prev: u16,
    /// Indices with a non-zero counter, for cheap resets.
    touched: Vec<u16>,
}

impl Default for EdgeMap {
    fn default() -> Self {
        EdgeMap { counts: vec![0; EDGE_MAP_SIZE], prev: 0, touched: Vec::new() }
    }
}

impl EdgeMap {
    pub fn record(&mut self, probe: u16) {
        let idx = ((self.prev >> 1) ^ probe) as usize;
        let c = &mut self.counts[idx];
        if *c == 0 {
            self.touched.push(idx as u16);
        }
        *c = c.saturating_add(1);
        self.prev = probe;
    }

    pub fn counters(&self) -> &[u8] {
        &self.counts
    }

    pub fn touched(&self) -> &[u16] {
        &self.touched
    }

    pub fn reset(&mut self) {
        for &i in &self.touched {
            self.counts[i as usize] = 0;
        }
        self.touched.clear();
        self.prev = 0;
    }
}

/// One bit per matcher-table byte, least significant bit first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatcherBitmap {
    size: usize,
    bits: Vec<u8>,
}

impl MatcherBitmap {
    pub fn new(size: usize) -> MatcherBitmap {
        MatcherBitmap { size, bits: vec![0; size.div_ceil(8)] }
    }

    pub fn from_bytes(size: usize, bits: Vec<u8>) -> Result<MatcherBitmap, CoverageError> {
        if bits.len() != size.div_ceil(8) {
            return Err(CoverageError::CorruptDump(format!("{} bitmap bytes for {size} entries", bits.len())));
        }
        Ok(MatcherBitmap { size, bits })
    }

    /// Entry count.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bits
    }

    pub fn set(&mut self, idx: usize) -> Result<(), CoverageError> {
        if idx >= self.size {
            return Err(CoverageError::IndexOutOfRange { idx, size: self.size });
        }
        self.bits[idx / 8] |= 1 << (idx % 8);
        Ok(())
    }

    /// Sets bits `start..start + len`.
    pub fn set_range(&mut self, start: usize, len: usize) -> Result<(), CoverageError> {
        if start + len > self.size {
            return Err(CoverageError::IndexOutOfRange { idx: start + len - 1, size: self.size });
        }
        self.mark_range(start, len);
        Ok(())
    }

    /// Unchecked form of [`MatcherBitmap::set_range`] for the selector's
    /// inner loop; panics if the range leaves the byte buffer.
    #[inline]
    pub fn mark_range(&mut self, start: usize, len: usize) {
        let (mut i, end) = (start, start + len);
        while i < end {
            let lo = i % 8;
            let hi = (lo + end - i).min(8);
            self.bits[i / 8] |= (((1u16 << hi) - 1) ^ ((1u16 << lo) - 1)) as u8;
            i += hi - lo;
        }
    }

    pub fn get(&self, idx: usize) -> bool {
        idx < self.size && self.bits[idx / 8] & (1 << (idx % 8)) != 0
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn any_in(&self, start: usize, end: usize) -> bool {
        (start..end.min(self.size)).any(|i| self.get(i))
    }

    pub fn clear(&mut self) {
        self.bits.fill(0);
    }

    pub fn union_with(&mut self, other: &MatcherBitmap) -> Result<(), CoverageError> {
        if other.size != self.size {
            return Err(CoverageError::SizeMismatch(self.size, other.size));
        }
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    /// Bits set here but not in `seen`.
    pub fn count_new(&self, seen: &MatcherBitmap) -> usize {
        self.bits.iter().zip(&seen.bits).map(|(a, b)| (a & !b).count_ones() as usize).sum()
    }
}

/// What one execution contributed that the campaign had not seen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Novelty {
    pub new_edge_buckets: u32,
    pub new_matcher_bits: u32,
}

impl Novelty {
    pub fn is_interesting(&self) -> bool {
        self.new_edge_buckets > 0 || self.new_matcher_bits > 0
    }
}

/// Run maps plus the campaign-wide virgin maps.
#[derive(Clone, Debug)]
pub struct CoverageState {
    pub edges: EdgeMap,
    pub matcher: MatcherBitmap,
    /// Per edge index, the set of buckets ever observed.
    pub virgin_edges: Vec<u8>,
    pub virgin_matcher: MatcherBitmap,
}

impl CoverageState {
    pub fn new(matcher_size: usize) -> CoverageState {
        CoverageState {
            edges: EdgeMap::default(),
            matcher: MatcherBitmap::new(matcher_size),
            virgin_edges: vec![0; EDGE_MAP_SIZE],
            virgin_matcher: MatcherBitmap::new(matcher_size),
        }
    }

    /// Clears the run maps before an execution.
    pub fn begin_run(&mut self) {
        self.edges.reset();
        self.matcher.clear();
    }

    pub fn record_probe_edge(&mut self, probe: u16) {
        self.edges.record(probe);
    }

    pub fn record_table_access(&mut self, idx: usize) -> Result<(), CoverageError> {
        self.matcher.set(idx)
    }

    /// Novelty of the current run against the virgin maps, without
    /// updating them.
    pub fn novelty(&self) -> Novelty {
        let new_edge_buckets = self
            .edges
            .touched
            .iter()
            .filter(|&&i| bucket(self.edges.counts[i as usize]) & !self.virgin_edges[i as usize] != 0)
            .count() as u32;
        let new_matcher_bits = self.matcher.count_new(&self.virgin_matcher) as u32;
        Novelty { new_edge_buckets, new_matcher_bits }
    }

    /// Folds the current run into the virgin maps.
    pub fn commit(&mut self) {
        for &i in &self.edges.touched {
            self.virgin_edges[i as usize] |= bucket(self.edges.counts[i as usize]);
        }
        self.virgin_matcher.union_with(&self.matcher).expect("run and virgin maps share a size");
    }

    /// True iff the run shows a new edge bucket or a new matcher bit; the
    /// virgin maps are updated only in that case.
    pub fn is_interesting(&mut self) -> (bool, Novelty) {
        let n = self.novelty();
        if n.is_interesting() {
            self.commit();
        }
        (n.is_interesting(), n)
    }

    /// Distinct (edge, bucket) pairs seen so far.
    pub fn edge_buckets(&self) -> usize {
        self.virgin_edges.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Edge indices ever hit.
    pub fn edges_hit(&self) -> usize {
        self.virgin_edges.iter().filter(|b| **b != 0).count()
    }

    pub fn matcher_bits(&self) -> usize {
        self.virgin_matcher.popcount()
    }

    pub fn matcher_size(&self) -> usize {
        self.virgin_matcher.size()
    }

    /// Serializes the virgin maps.
    pub fn to_dump(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + self.virgin_matcher.bits.len() + EDGE_MAP_SIZE);
        out.extend_from_slice(DUMP_MAGIC);
        out.push(DUMP_VERSION);
        out.extend_from_slice(&(self.virgin_matcher.size as u32).to_le_bytes());
        out.extend_from_slice(&self.virgin_matcher.bits);
        out.extend_from_slice(&self.virgin_edges);
        out
    }

    pub fn from_dump(bytes: &[u8]) -> Result<CoverageState, CoverageError> {
        let corrupt = |m: &str| CoverageError::CorruptDump(m.to_string());
        if bytes.len() < 9 {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..4] != DUMP_MAGIC {
            return Err(corrupt("bad magic"));
        }
        if bytes[4] != DUMP_VERSION {
            return Err(corrupt("unsupported version"));
        }
        let size = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        let mbytes = size.div_ceil(8);
        if bytes.len() != 9 + mbytes + EDGE_MAP_SIZE {
            return Err(corrupt("length does not match the header"));
        }
        let mut cov = CoverageState::new(size);
        cov.virgin_matcher = MatcherBitmap::from_bytes(size, bytes[9..9 + mbytes].to_vec())?;
        cov.virgin_edges.copy_from_slice(&bytes[9 + mbytes..]);
        Ok(cov)
    }

    pub fn save_dump(&self, path: &Path) -> Result<(), CoverageError> {
        std::fs::write(path, self.to_dump())?;
        Ok(())
    }

    pub fn load_dump(path: &Path) -> Result<CoverageState, CoverageError> {
        CoverageState::from_dump(&std::fs::read(path)?)
    }

    /// Union of two dumps' virgin maps.
    pub fn merge(&mut self, other: &CoverageState) -> Result<(), CoverageError> {
        self.virgin_matcher.union_with(&other.virgin_matcher)?;
        for (a, b) in self.virgin_edges.iter_mut().zip(&other.virgin_edges) {
            *a |= b;
        }
        Ok(())
    }
}
