//! Byte-addressable simulated memory with a 4-bit tag per 16-byte granule.
//!
//! Pages are materialized lazily on first map, each carrying a `taggable`
//! attribute (whether tag reads/writes are allowed) and a `kernel` flag so
//! the check-configuration logic can distinguish user from kernel mappings.
//! Two tag-storage schemes are accounted for: a reserved RAM region (tags
//! cost 4 bits per 128 data bits and an extra memory transaction per line
//! fill) and co-located storage (tags travel with the line for free).

use std::collections::BTreeMap;
use std::fmt;

use crate::{Result, SimError};

/// Bytes per tag granule.
pub const GRANULE_BYTES: u64 = 16;
/// Simulated page size.
pub const PAGE_BYTES: u64 = 4096;
/// Cache line size used throughout the timing model.
pub const LINE_BYTES: u64 = 64;

const GRANULES_PER_PAGE: usize = (PAGE_BYTES / GRANULE_BYTES) as usize;

/// A 4-bit memory tag. Tag 0 is the conventional "untagged" value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tag(u8);

impl Tag {
    pub const ZERO: Tag = Tag(0);
    pub const MAX: u8 = 15;

    pub fn new(value: u8) -> Result<Tag> {
        if value <= Self::MAX {
            Ok(Tag(value))
        } else {
            Err(SimError::Profile(format!("tag {value} out of range")))
        }
    }

    /// Truncating constructor, keeps the low 4 bits.
    pub fn from_bits(value: u8) -> Tag {
        Tag(value & 0xf)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x}", self.0)
    }
}

/// A 16-byte-aligned granule base address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Granule(u64);

impl Granule {
    pub fn new(base: u64) -> Result<Granule> {
        if base.is_multiple_of(GRANULE_BYTES) {
            Ok(Granule(base))
        } else {
            Err(SimError::UnalignedGranule(base))
        }
    }

    /// The granule containing `addr`.
    pub fn containing(addr: u64) -> Granule {
        Granule(addr & !(GRANULE_BYTES - 1))
    }

    pub fn base(self) -> u64 {
        self.0
    }
}

/// A 64-bit address carrying a tag in bits [56:59].
///
/// Tag insertion and extraction are pure bit operations; they never touch
/// memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TaggedAddr(u64);

const TAG_SHIFT: u32 = 56;
const TAG_MASK: u64 = 0xf << TAG_SHIFT;

impl TaggedAddr {
    /// Wraps a raw 64-bit value as-is (the tag bits are whatever the value
    /// carries).
    pub fn from_raw(raw: u64) -> TaggedAddr {
        TaggedAddr(raw)
    }

    /// Builds a tagged address from an untagged address and a tag.
    pub fn make(addr: u64, tag: Tag) -> TaggedAddr {
        TaggedAddr((addr & !TAG_MASK) | ((tag.value() as u64) << TAG_SHIFT))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn tag(self) -> Tag {
        Tag(((self.0 & TAG_MASK) >> TAG_SHIFT) as u8)
    }

    /// Address with the tag bits cleared.
    pub fn untagged(self) -> u64 {
        self.0 & !TAG_MASK
    }

    pub fn with_tag(self, tag: Tag) -> TaggedAddr {
        TaggedAddr::make(self.untagged(), tag)
    }
}

impl fmt::Display for TaggedAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Attributes of a mapped page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PageAttrs {
    /// Whether the page accepts tag reads/writes (the tagging-enabled map
    /// attribute). Tag operations on a page without it fail, mirroring
    /// mappings that reject the tagging flag.
    pub taggable: bool,
    /// Kernel (true) vs user (false) mapping.
    pub kernel: bool,
}

impl PageAttrs {
    pub fn user_tagged() -> Self {
        PageAttrs {
            taggable: true,
            kernel: false,
        }
    }

    pub fn user_plain() -> Self {
        PageAttrs::default()
    }

    pub fn kernel_tagged() -> Self {
        PageAttrs {
            taggable: true,
            kernel: true,
        }
    }
}

#[derive(Clone)]
struct PageData {
    attrs: PageAttrs,
    data: Box<[u8; PAGE_BYTES as usize]>,
    tags: [u8; GRANULES_PER_PAGE],
}

impl PageData {
    fn new(attrs: PageAttrs) -> Self {
        PageData {
            attrs,
            data: Box::new([0u8; PAGE_BYTES as usize]),
            tags: [0u8; GRANULES_PER_PAGE],
        }
    }
}

/// How an implementation stores tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagStorageScheme {
    /// Tags live in a reserved slice of RAM: 4 bits per 128 data bits of
    /// capacity, and a line fill needs a second memory transaction for the
    /// tags.
    ReservedRegion,
    /// Tags ride along with each line out-of-band (e.g. in ECC bits): no
    /// reserved RAM and no extra transaction on a fill.
    CoLocated,
}

/// Reserved-RAM bytes needed to hold tags for `data_bytes` of capacity.
pub fn storage_overhead(scheme: TagStorageScheme, data_bytes: u64) -> u64 {
    match scheme {
        // 4 tag bits per 16 data bytes = data/32 bytes, rounded up.
        TagStorageScheme::ReservedRegion => data_bytes.div_ceil(32),
        TagStorageScheme::CoLocated => 0,
    }
}

/// The minimal granule set covering `[addr, addr + len)`. Empty for
/// `len == 0`.
pub fn granules_for_range(addr: u64, len: u64) -> Vec<Granule> {
    if len == 0 {
        return Vec::new();
    }
    let first = addr & !(GRANULE_BYTES - 1);
    let last = (addr + len - 1) & !(GRANULE_BYTES - 1);
    (first..=last)
        .step_by(GRANULE_BYTES as usize)
        .map(Granule)
        .collect()
}

/// Sparse tagged memory: pages materialize on map, each holding data bytes
/// and one 4-bit tag per granule. Data writes never change tags and tag
/// writes never change data.
#[derive(Clone, Default)]
pub struct TaggedMemory {
    pages: BTreeMap<u64, PageData>,
}

impl TaggedMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Maps every page overlapping `[base, base + len)` with `attrs`.
    /// Remapping an existing page just updates its attributes.
    pub fn map(&mut self, base: u64, len: u64, attrs: PageAttrs) {
        if len == 0 {
            return;
        }
        let first = base & !(PAGE_BYTES - 1);
        let last = (base + len - 1) & !(PAGE_BYTES - 1);
        let mut page = first;
        loop {
            self.pages
                .entry(page)
                .and_modify(|p| p.attrs = attrs)
                .or_insert_with(|| PageData::new(attrs));
            if page == last {
                break;
            }
            page += PAGE_BYTES;
        }
    }

    pub fn is_mapped(&self, addr: u64) -> bool {
        self.pages.contains_key(&(addr & !(PAGE_BYTES - 1)))
    }

    pub fn page_attrs(&self, addr: u64) -> Result<PageAttrs> {
        self.pages
            .get(&(addr & !(PAGE_BYTES - 1)))
            .map(|p| p.attrs)
            .ok_or(SimError::Unmapped(addr))
    }

    fn page(&self, addr: u64) -> Result<&PageData> {
        self.pages
            .get(&(addr & !(PAGE_BYTES - 1)))
            .ok_or(SimError::Unmapped(addr))
    }

    fn page_mut(&mut self, addr: u64) -> Result<&mut PageData> {
        self.pages
            .get_mut(&(addr & !(PAGE_BYTES - 1)))
            .ok_or(SimError::Unmapped(addr))
    }

    /// Sets one granule's tag. The page must allow tagging; data bytes are
    /// untouched.
    pub fn set_tag(&mut self, granule: Granule, tag: Tag) -> Result<()> {
        let base = granule.base();
        let page = self.page_mut(base)?;
        if !page.attrs.taggable {
            return Err(SimError::NotTaggable(base));
        }
        page.tags[((base % PAGE_BYTES) / GRANULE_BYTES) as usize] = tag.value();
        Ok(())
    }

    /// Reads one granule's tag; 0 if it was never tagged.
    pub fn get_tag(&self, granule: Granule) -> Result<Tag> {
        let base = granule.base();
        let page = self.page(base)?;
        Ok(Tag(
            page.tags[((base % PAGE_BYTES) / GRANULE_BYTES) as usize]
        ))
    }

    /// Writes bytes. A granule cannot straddle pages, but a range can; the
    /// whole range must be mapped.
    pub fn write(&mut self, addr: u64, bytes: &[u8]) -> Result<()> {
        let mut addr = addr;
        let mut rest = bytes;
        while !rest.is_empty() {
            let off = (addr % PAGE_BYTES) as usize;
            let room = PAGE_BYTES as usize - off;
            let n = room.min(rest.len());
            let page = self.page_mut(addr)?;
            page.data[off..off + n].copy_from_slice(&rest[..n]);
            addr += n as u64;
            rest = &rest[n..];
        }
        Ok(())
    }

    pub fn read(&self, addr: u64, len: usize) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(len);
        let mut addr = addr;
        let mut remaining = len;
        while remaining > 0 {
            let off = (addr % PAGE_BYTES) as usize;
            let room = PAGE_BYTES as usize - off;
            let n = room.min(remaining);
            let page = self.page(addr)?;
            out.extend_from_slice(&page.data[off..off + n]);
            addr += n as u64;
            remaining -= n;
        }
        Ok(out)
    }

    /// Iterates all mapped pages as `(base, attrs)` in address order.
    pub fn pages(&self) -> impl Iterator<Item = (u64, PageAttrs)> + '_ {
        self.pages.iter().map(|(base, p)| (*base, p.attrs))
    }

    /// Flat-text snapshot of every granule with a nonzero tag, one
    /// `addr_hex tag_hex` pair per line, in address order.
    pub fn snapshot_tags(&self) -> String {
        let mut out = String::new();
        for (base, page) in &self.pages {
            for (i, tag) in page.tags.iter().enumerate() {
                if *tag != 0 {
                    let addr = base + i as u64 * GRANULE_BYTES;
                    out.push_str(&format!("{addr:x} {tag:x}\n"));
                }
            }
        }
        out
    }
}

impl fmt::Debug for TaggedMemory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TaggedMemory({} pages)", self.pages.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem_with_tagged_page() -> TaggedMemory {
        let mut mem = TaggedMemory::new();
        mem.map(0x1000, PAGE_BYTES, PageAttrs::user_tagged());
        mem
    }

    #[test]
    fn tag_roundtrip() {
        let mut mem = mem_with_tagged_page();
        let g = Granule::new(0x1000).unwrap();
        mem.set_tag(g, Tag::new(5).unwrap()).unwrap();
        assert_eq!(mem.get_tag(g).unwrap(), Tag::new(5).unwrap());
    }

    #[test]
    fn set_tag_rejects_plain_page() {
        let mut mem = TaggedMemory::new();
        mem.map(0x2000, PAGE_BYTES, PageAttrs::user_plain());
        let g = Granule::new(0x2000).unwrap();
        assert_eq!(
            mem.set_tag(g, Tag::new(1).unwrap()),
            Err(SimError::NotTaggable(0x2000))
        );
    }

    #[test]
    fn unaligned_granule_rejected() {
        assert_eq!(
            Granule::new(0x1008),
            Err(SimError::UnalignedGranule(0x1008))
        );
    }

    #[test]
    fn fresh_page_reads_tag_zero() {
        let mem = mem_with_tagged_page();
        assert_eq!(
            mem.get_tag(Granule::new(0x1000).unwrap()).unwrap(),
            Tag::ZERO
        );
    }

    #[test]
    fn get_tag_after_set_tag_nine() {
        let mut mem = mem_with_tagged_page();
        let g = Granule::new(0x1010).unwrap();
        mem.set_tag(g, Tag::new(9).unwrap()).unwrap();
        assert_eq!(mem.get_tag(g).unwrap().value(), 9);
    }

    #[test]
    fn unmapped_tag_read_errors() {
        let mem = TaggedMemory::new();
        assert_eq!(
            mem.get_tag(Granule::new(0x9000).unwrap()),
            Err(SimError::Unmapped(0x9000))
        );
    }

    #[test]
    fn granule_range_examples() {
        let bases: Vec<u64> = granules_for_range(0x1000, 16)
            .iter()
            .map(|g| g.base())
            .collect();
        assert_eq!(bases, vec![0x1000]);

        let bases: Vec<u64> = granules_for_range(0x1000, 17)
            .iter()
            .map(|g| g.base())
            .collect();
        assert_eq!(bases, vec![0x1000, 0x1010]);

        // Straddling start, computed by brute-force enumeration of covered
        // 16-byte-aligned bases.
        let brute: Vec<u64> = (0x1000u64..0x1020)
            .step_by(16)
            .filter(|b| *b + 16 > 0x1008 && *b < 0x1008 + 16)
            .collect();
        let bases: Vec<u64> = granules_for_range(0x1008, 16)
            .iter()
            .map(|g| g.base())
            .collect();
        assert_eq!(bases, brute);
        assert_eq!(bases, vec![0x1000, 0x1010]);

        assert!(granules_for_range(0x1000, 0).is_empty());
    }

    #[test]
    fn storage_overhead_values() {
        assert_eq!(storage_overhead(TagStorageScheme::ReservedRegion, 128), 4);
        assert_eq!(
            storage_overhead(TagStorageScheme::ReservedRegion, 1 << 30),
            32 << 20
        );
        assert_eq!(storage_overhead(TagStorageScheme::CoLocated, 1 << 30), 0);
        // Non-multiple rounds up.
        assert_eq!(storage_overhead(TagStorageScheme::ReservedRegion, 33), 2);
    }

    #[test]
    fn tagged_addr_bit_ops() {
        let t = Tag::new(0xb).unwrap();
        let a = TaggedAddr::make(0xdead_beef_cafe, t);
        assert_eq!(a.tag(), t);
        assert_eq!(a.untagged(), 0xdead_beef_cafe);
        assert_eq!(a.raw() >> 56 & 0xf, 0xb);
    }

    #[test]
    fn data_and_tags_are_independent() {
        let mut mem = mem_with_tagged_page();
        let g = Granule::new(0x1000).unwrap();
        mem.set_tag(g, Tag::new(7).unwrap()).unwrap();
        mem.write(0x1000, &[0xff; 16]).unwrap();
        assert_eq!(mem.get_tag(g).unwrap().value(), 7);
        mem.set_tag(g, Tag::new(2).unwrap()).unwrap();
        assert_eq!(mem.read(0x1000, 16).unwrap(), vec![0xff; 16]);
    }

    #[test]
    fn snapshot_lists_nonzero_tags_in_order() {
        let mut mem = mem_with_tagged_page();
        mem.set_tag(Granule::new(0x1020).unwrap(), Tag::new(3).unwrap())
            .unwrap();
        mem.set_tag(Granule::new(0x1000).unwrap(), Tag::new(0xf).unwrap())
            .unwrap();
        assert_eq!(mem.snapshot_tags(), "1000 f\n1020 3\n");
    }
}
