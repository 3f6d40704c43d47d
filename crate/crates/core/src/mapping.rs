// SPDX-License-Identifier: Apache-2.0

//! File-to-object layout.
//!
//! A file is either one object (`OneToOne`) or a sequence of fixed-size chunk
//! objects (`OneToN`). This module is pure arithmetic: which chunks a byte
//! range touches, whether a write can replace a chunk blindly or has to read
//! it first, and which chunk objects a file of a given size consists of.

use serde::{Deserialize, Serialize};

use crate::MIB;

pub const DEFAULT_CHUNK_SIZE: u64 = 4 * MIB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MappingScheme {
    OneToOne,
    OneToN,
}

impl MappingScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            MappingScheme::OneToOne => "1to1",
            MappingScheme::OneToN => "1toN",
        }
    }
}

/// Fixed at file creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MappingDescriptor {
    pub scheme: MappingScheme,
    /// Chunk length for `OneToN`; ignored for `OneToOne`.
    pub chunk_size: u64,
}

impl Default for MappingDescriptor {
    fn default() -> Self {
        MappingDescriptor::one_to_one()
    }
}

impl MappingDescriptor {
    pub fn one_to_one() -> Self {
        MappingDescriptor { scheme: MappingScheme::OneToOne, chunk_size: DEFAULT_CHUNK_SIZE }
    }

    /// Panics if `chunk_size` is zero.
    pub fn one_to_n(chunk_size: u64) -> Self {
        assert!(chunk_size > 0, "chunk size must be positive");
        MappingDescriptor { scheme: MappingScheme::OneToN, chunk_size }
    }

    pub fn is_chunked(&self) -> bool {
        self.scheme == MappingScheme::OneToN
    }

    /// Byte range `[start, end)` chunk `idx` covers. Unbounded for `OneToOne`.
    pub fn chunk_bounds(&self, idx: u64) -> (u64, u64) {
        match self.scheme {
            MappingScheme::OneToOne => (0, u64::MAX),
            MappingScheme::OneToN => {
                let start = idx.saturating_mul(self.chunk_size);
                (start, start.saturating_add(self.chunk_size))
            }
        }
    }

    /// Length of chunk `idx` in a file of `file_size` bytes (0 if beyond EOF).
    pub fn chunk_len(&self, idx: u64, file_size: u64) -> u64 {
        let (start, end) = self.chunk_bounds(idx);
        end.min(file_size).saturating_sub(start)
    }

    fn chunk_of(&self, offset: u64) -> u64 {
        match self.scheme {
            MappingScheme::OneToOne => 0,
            MappingScheme::OneToN => offset / self.chunk_size,
        }
    }
}

/// The part of a byte range that falls inside one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSpan {
    pub chunk_idx: u64,
    pub intra_offset: u64,
    pub span_len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkAction {
    /// The chunk's new content is fully determined by the write: one PUT.
    FullOverwrite,
    /// Live bytes outside the write survive: GET, patch, PUT.
    ReadModifyWrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkWrite {
    pub span: ChunkSpan,
    pub action: ChunkAction,
}

/// Splits `[offset, offset + len)` into per-chunk spans, in order.
///
/// `file_size` does not bound the range: writes may extend the file and reads
/// clamp before calling.
pub fn locate(desc: &MappingDescriptor, offset: u64, len: u64, _file_size: u64) -> Vec<ChunkSpan> {
    let mut spans = Vec::new();
    let end = offset.saturating_add(len);
    let mut pos = offset;
    while pos < end {
        let idx = desc.chunk_of(pos);
        let (start, chunk_end) = desc.chunk_bounds(idx);
        let span_end = chunk_end.min(end);
        spans.push(ChunkSpan { chunk_idx: idx, intra_offset: pos - start, span_len: span_end - pos });
        pos = span_end;
    }
    spans
}

/// Per-chunk actions for writing `[offset, offset + len)` into a file that
/// currently holds `file_size` bytes.
///
/// A chunk is fully overwritten when the write covers every byte of the
/// chunk that is currently live (a chunk wholly past EOF has none, so any
/// leading gap is zero-filled); otherwise it must be read, patched and
/// rewritten.
pub fn write_plan(
    desc: &MappingDescriptor,
    offset: u64,
    len: u64,
    file_size: u64,
) -> Vec<ChunkWrite> {
    let end = offset.saturating_add(len);
    locate(desc, offset, len, file_size)
        .into_iter()
        .map(|span| {
            let (chunk_start, chunk_end) = desc.chunk_bounds(span.chunk_idx);
            let live_end = chunk_end.min(file_size);
            let covered = live_end <= chunk_start || (offset <= chunk_start && end >= live_end);
            let action =
                if covered { ChunkAction::FullOverwrite } else { ChunkAction::ReadModifyWrite };
            ChunkWrite { span, action }
        })
        .collect()
}

/// `(chunk_idx, object_size)` for every chunk of a `file_size`-byte file.
///
/// `OneToOne` is always a single object, possibly empty. `OneToN` has
/// `ceil(file_size / chunk_size)` chunks with a short last one, and none for
/// an empty file.
pub fn layout(desc: &MappingDescriptor, file_size: u64) -> Vec<(u64, u64)> {
    match desc.scheme {
        MappingScheme::OneToOne => vec![(0, file_size)],
        MappingScheme::OneToN => (0..file_size.div_ceil(desc.chunk_size))
            .map(|i| (i, desc.chunk_len(i, file_size)))
            .collect(),
    }
}

/// Objects that back a file at rest. Like [`layout`], except an empty
/// chunked file keeps a zero-length chunk 0 so it stays visible to LIST.
pub fn object_set(desc: &MappingDescriptor, file_size: u64) -> Vec<(u64, u64)> {
    let objects = layout(desc, file_size);
    if objects.is_empty() {
        vec![(0, 0)]
    } else {
        objects
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const M: u64 = MIB;

    fn span(chunk_idx: u64, intra_offset: u64, span_len: u64) -> ChunkSpan {
        ChunkSpan { chunk_idx, intra_offset, span_len }
    }

    #[test]
    fn locate_straddles_chunk_boundary() {
        let d = MappingDescriptor::one_to_n(4 * M);
        assert_eq!(locate(&d, 5 * M, 4 * M, 0), vec![span(1, M, 3 * M), span(2, 0, M)]);
    }

    #[test]
    fn locate_one_to_one_is_single_span() {
        let d = MappingDescriptor::one_to_one();
        assert_eq!(locate(&d, 123, 456_789, 1), vec![span(0, 123, 456_789)]);
        assert!(locate(&d, 10, 0, 100).is_empty());
    }

    #[test]
    fn aligned_chunk_write_is_full_overwrite() {
        let d = MappingDescriptor::one_to_n(4 * M);
        let plan = write_plan(&d, 8 * M, 4 * M, 64 * M);
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].action, ChunkAction::FullOverwrite);
    }

    #[test]
    fn interior_write_into_single_object_is_rmw() {
        let d = MappingDescriptor::one_to_one();
        let plan = write_plan(&d, 8 * M, 4 * M, 64 * M);
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].action, ChunkAction::ReadModifyWrite);
    }

    #[test]
    fn write_into_fresh_chunk_past_eof_is_full_overwrite() {
        let d = MappingDescriptor::one_to_n(4 * M);
        // File is 1 MiB; the write lands mid-way into chunk 2.
        let plan = write_plan(&d, 9 * M, M, M);
        assert_eq!(plan, vec![ChunkWrite { span: span(2, M, M), action: ChunkAction::FullOverwrite }]);
        // Empty single-object file: nothing live to preserve.
        let plan = write_plan(&MappingDescriptor::one_to_one(), 100, 10, 0);
        assert_eq!(plan[0].action, ChunkAction::FullOverwrite);
    }

    #[test]
    fn write_covering_live_tail_of_partial_chunk_is_full() {
        let d = MappingDescriptor::one_to_n(4 * M);
        // Chunk 0 holds [0, 2 MiB); writing [0, 3 MiB) covers all of it.
        assert_eq!(write_plan(&d, 0, 3 * M, 2 * M)[0].action, ChunkAction::FullOverwrite);
        // Writing [1 MiB, 3 MiB) leaves [0, 1 MiB) live.
        assert_eq!(write_plan(&d, M, 2 * M, 2 * M)[0].action, ChunkAction::ReadModifyWrite);
    }

    #[test]
    fn layout_examples() {
        let d = MappingDescriptor::one_to_n(4 * M);
        assert_eq!(layout(&d, 10 * M), vec![(0, 4 * M), (1, 4 * M), (2, 2 * M)]);
        assert!(layout(&d, 0).is_empty());
        assert_eq!(object_set(&d, 0), vec![(0, 0)]);
        assert_eq!(layout(&MappingDescriptor::one_to_one(), 0), vec![(0, 0)]);
    }

    proptest! {
        #[test]
        fn locate_covers_range_exactly(
            chunk in 1u64..64,
            offset in 0u64..512,
            len in 0u64..512,
        ) {
            let d = MappingDescriptor::one_to_n(chunk);
            // Byte-marking oracle: every byte of the range is hit once.
            let mut hits = vec![0u32; (offset + len) as usize];
            let mut prev_end = offset;
            for s in locate(&d, offset, len, 0) {
                prop_assert!(s.intra_offset + s.span_len <= chunk);
                prop_assert!(s.span_len > 0);
                let abs = s.chunk_idx * chunk + s.intra_offset;
                prop_assert_eq!(abs, prev_end);
                for b in abs..abs + s.span_len {
                    hits[b as usize] += 1;
                }
                prev_end = abs + s.span_len;
            }
            prop_assert_eq!(prev_end, offset + len);
            for (i, h) in hits.iter().enumerate() {
                let inside = (i as u64) >= offset;
                prop_assert_eq!(*h, u32::from(inside));
            }
        }

        #[test]
        fn layout_sizes_sum_to_file_size(chunk in 1u64..10_000, size in 0u64..1_000_000) {
            let d = MappingDescriptor::one_to_n(chunk);
            let l = layout(&d, size);
            prop_assert_eq!(l.iter().map(|(_, s)| s).sum::<u64>(), size);
            prop_assert_eq!(l.len() as u64, size.div_ceil(chunk));
            for (i, (idx, s)) in l.iter().enumerate() {
                prop_assert_eq!(*idx, i as u64);
                prop_assert!(*s > 0 && *s <= chunk);
            }
        }

        /// Writing through the plan and reading back through `locate` matches
        /// a plain byte-array file.
        #[test]
        fn plan_then_locate_matches_byte_array(
            chunked in any::<bool>(),
            chunk in 1u64..48,
            writes in proptest::collection::vec((0u64..200, 0u64..100, any::<u8>()), 1..20),
        ) {
            let d = if chunked { MappingDescriptor::one_to_n(chunk) } else { MappingDescriptor::one_to_one() };
            let mut oracle: Vec<u8> = Vec::new();
            let mut chunks: std::collections::BTreeMap<u64, Vec<u8>> = Default::default();
            let mut size = 0u64;
            for (offset, len, byte) in writes {
                let end = offset + len;
                if oracle.len() < end as usize {
                    oracle.resize(end as usize, 0);
                }
                oracle[offset as usize..end as usize].fill(byte);
                // Gap between EOF and the write is zero-filled first.
                let eff_off = offset.min(size);
                let new_size = size.max(end);
                for w in write_plan(&d, eff_off, end - eff_off, size) {
                    let idx = w.span.chunk_idx;
                    let new_len = d.chunk_len(idx, new_size) as usize;
                    let mut buf = match w.action {
                        ChunkAction::FullOverwrite => vec![0u8; new_len],
                        ChunkAction::ReadModifyWrite => {
                            let mut b = chunks.get(&idx).cloned().unwrap_or_default();
                            prop_assert_eq!(b.len() as u64, d.chunk_len(idx, size));
                            b.resize(new_len, 0);
                            b
                        }
                    };
                    let (cs, _) = d.chunk_bounds(idx);
                    for i in 0..w.span.span_len {
                        let abs = cs + w.span.intra_offset + i;
                        buf[(w.span.intra_offset + i) as usize] =
                            if abs >= offset { byte } else { 0 };
                    }
                    chunks.insert(idx, buf);
                }
                size = new_size;
            }
            let mut read = Vec::new();
            for s in locate(&d, 0, size, size) {
                let c = &chunks[&s.chunk_idx];
                read.extend_from_slice(&c[s.intra_offset as usize..(s.intra_offset + s.span_len) as usize]);
            }
            prop_assert_eq!(read, oracle);
        }
    }
}
