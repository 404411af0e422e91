//! Register-tile ownership layouts, shared-tile byte addressing and the
//! swizzle function family.
//!
//! Ownership maps are shipped as lookup tables in `data/layouts.json` rather
//! than formulas; each CDNA matrix instruction uses its own layout and the
//! tables are the ground truth the analyzer works from.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::machine::{DType, InstrDescriptor, LANES_PER_WAVE};

/// Matrix-core instruction shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MfmaShape {
    pub m: u32,
    pub n: u32,
    pub k: u32,
    pub dtype: DType,
}

impl MfmaShape {
    pub fn new(m: u32, n: u32, k: u32, dtype: DType) -> Self {
        Self { m, n, k, dtype }
    }

    pub fn dims(&self) -> String {
        format!("{}x{}x{}", self.m, self.n, self.k)
    }

    /// Parses "16x16x32" style dimension strings.
    pub fn parse_dims(s: &str) -> Result<(u32, u32, u32)> {
        let parts: Vec<_> = s.split('x').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidInput(format!("bad mfma shape `{s}`")));
        }
        let nums: Vec<u32> = parts
            .iter()
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::InvalidInput(format!("bad mfma shape `{s}`")))
            })
            .collect::<Result<_>>()?;
        Ok((nums[0], nums[1], nums[2]))
    }
}

/// Shipped matrix-core shapes.
pub fn shipped_shapes() -> Vec<MfmaShape> {
    vec![
        MfmaShape::new(16, 16, 32, DType::Bf16),
        MfmaShape::new(32, 32, 16, DType::Bf16),
        MfmaShape::new(16, 16, 128, DType::Fp8),
        MfmaShape::new(16, 16, 128, DType::Fp6),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    A,
    B,
    C,
}

impl Operand {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Operand::A),
            "b" | "B" => Ok(Operand::B),
            "c" | "C" | "d" | "D" => Ok(Operand::C),
            other => Err(Error::InvalidInput(format!("unknown operand `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    RowMajor,
    ColMajor,
}

impl Orientation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "row" | "row_major" => Ok(Orientation::RowMajor),
            "col" | "col_major" => Ok(Orientation::ColMajor),
            other => Err(Error::InvalidInput(format!(
                "unknown orientation `{other}`"
            ))),
        }
    }
}

/// One read issued by a lane, in element coordinates, for instructions whose
/// access pattern differs from the ownership map (transpose reads).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct ElementRead {
    pub row: u32,
    pub col: u32,
    pub elems: u32,
}

/// Explicit per-lane access pattern attached to a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessPattern {
    /// Instruction this pattern belongs to.
    pub instr: String,
    /// reads[issue][lane] = the element span that lane touches in that issue.
    pub reads: Vec<Vec<ElementRead>>,
}

/// Mapping from tile elements to (lane, register slot) ownership.
#[derive(Debug, Clone, PartialEq)]
pub struct TileLayout {
    pub name: String,
    pub rows: u32,
    pub cols: u32,
    pub dtype: DType,
    pub orientation: Orientation,
    /// Consecutive elements per lane along the fast axis.
    pub contiguity: u32,
    /// ownership[row][col] = (lane, slot).
    ownership: Vec<Vec<(u32, u32)>>,
    /// Explicit access pattern for transpose-style reads, when the
    /// instruction's addresses differ from the owned elements.
    pub access: Option<AccessPattern>,
}

impl TileLayout {
    pub fn owner(&self, row: u32, col: u32) -> (u32, u32) {
        self.ownership[row as usize][col as usize]
    }

    pub fn elements(&self) -> u32 {
        self.rows * self.cols
    }

    pub fn elems_per_lane(&self) -> u32 {
        self.elements() / LANES_PER_WAVE
    }

    /// Elements owned by `lane` in slot order.
    pub fn owned_elements(&self, lane: u32) -> Vec<(u32, u32)> {
        let mut out = vec![(u32::MAX, u32::MAX); self.elems_per_lane() as usize];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (l, s) = self.owner(r, c);
                if l == lane {
                    out[s as usize] = (r, c);
                }
            }
        }
        out
    }

    /// Checks that ownership is a bijection onto (lane, slot) pairs.
    pub fn validate(&self) -> Result<()> {
        let per_lane = self.elements() / LANES_PER_WAVE;
        if per_lane == 0 || !self.elements().is_multiple_of(LANES_PER_WAVE) {
            return Err(Error::InvalidConfig(format!(
                "layout `{}`: {} elements do not split evenly over {} lanes",
                self.name,
                self.elements(),
                LANES_PER_WAVE
            )));
        }
        let mut seen = vec![false; (LANES_PER_WAVE * per_lane) as usize];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (lane, slot) = self.owner(r, c);
                if lane >= LANES_PER_WAVE || slot >= per_lane {
                    return Err(Error::InvalidConfig(format!(
                        "layout `{}`: element ({r},{c}) maps to out-of-range lane {lane} slot {slot}",
                        self.name
                    )));
                }
                let idx = (lane * per_lane + slot) as usize;
                if seen[idx] {
                    return Err(Error::InvalidConfig(format!(
                        "layout `{}`: lane {lane} slot {slot} owns two elements",
                        self.name
                    )));
                }
                seen[idx] = true;
            }
        }
        if let Some(access) = &self.access {
            self.validate_access(access)?;
        }
        Ok(())
    }

    /// The delivery map of an explicit access pattern must cover every element
    /// exactly once, and reader and owner must share a phase.
    fn validate_access(&self, access: &AccessPattern) -> Result<()> {
        let mut covered = vec![vec![false; self.cols as usize]; self.rows as usize];
        for per_lane in &access.reads {
            if per_lane.len() != LANES_PER_WAVE as usize {
                return Err(Error::InvalidConfig(format!(
                    "layout `{}`: access issue does not list all {} lanes",
                    self.name, LANES_PER_WAVE
                )));
            }
            for read in per_lane {
                for c in read.col..read.col + read.elems {
                    if read.row >= self.rows || c >= self.cols {
                        return Err(Error::InvalidConfig(format!(
                            "layout `{}`: access read at ({},{c}) is outside the tile",
                            self.name, read.row
                        )));
                    }
                    if covered[read.row as usize][c as usize] {
                        return Err(Error::InvalidConfig(format!(
                            "layout `{}`: element ({},{c}) is read twice",
                            self.name, read.row
                        )));
                    }
                    covered[read.row as usize][c as usize] = true;
                }
            }
        }
        if covered.iter().flatten().any(|&v| !v) {
            return Err(Error::InvalidConfig(format!(
                "layout `{}`: access pattern does not cover the tile",
                self.name
            )));
        }
        Ok(())
    }

    /// Cross-lane delivery map of the explicit access pattern: for every read
    /// element, the (reader lane, owner lane, slot) triple.
    pub fn delivery_map(&self) -> Vec<(u32, u32, u32)> {
        let Some(access) = &self.access else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for per_lane in &access.reads {
            for (reader, read) in per_lane.iter().enumerate() {
                for c in read.col..read.col + read.elems {
                    let (owner, slot) = self.owner(read.row, c);
                    out.push((reader as u32, owner, slot));
                }
            }
        }
        out
    }

    /// Ownership grid as CSV, one row per line, cells "lane:slot".
    pub fn dump_grid_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let cells: Vec<String> = (0..self.cols)
                .map(|c| {
                    let (lane, slot) = self.owner(r, c);
                    format!("{lane}:{slot}")
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Swizzle family: a bijective remap of byte offsets within a shared tile.
#[derive(Debug, Clone, PartialEq)]
pub enum Swizzle {
    Identity,
    /// offset' = offset XOR (((offset >> shift) & mask) << lshift), applied to
    /// flat tile offsets; `granularity` bytes move as indivisible blocks
    /// (lshift must not touch bits below log2(granularity)).
    XorBlock {
        shift: u32,
        mask: u32,
        lshift: u32,
        granularity: u32,
    },
    /// For rows where (row / trigger_row) is odd, XOR the byte-in-row with
    /// half_bytes: with trigger_row=8 and half_bytes=32 on a 64-byte row this
    /// exchanges the first 32 bytes with the last 32 from the 8th row on.
    RowHalfSwap {
        trigger_row: u32,
        half_bytes: u32,
    },
    /// Explicit offset permutation.
    CustomTable(Vec<u32>),
}

impl Swizzle {
    pub fn xor_block(shift: u32, mask: u32, lshift: u32, granularity: u32) -> Result<Self> {
        if !granularity.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "xor_block granularity {granularity} is not a power of two"
            )));
        }
        if lshift < granularity.trailing_zeros() {
            return Err(Error::InvalidInput(format!(
                "xor_block lshift {lshift} touches bytes below the {granularity}-byte granularity"
            )));
        }
        Ok(Swizzle::XorBlock {
            shift,
            mask,
            lshift,
            granularity,
        })
    }

    pub fn row_half_swap(trigger_row: u32, half_bytes: u32) -> Result<Self> {
        if trigger_row == 0 || half_bytes == 0 {
            return Err(Error::InvalidInput(
                "row_half_swap needs trigger_row >= 1 and half_bytes >= 1".to_string(),
            ));
        }
        Ok(Swizzle::RowHalfSwap {
            trigger_row,
            half_bytes,
        })
    }

    pub fn label(&self) -> String {
        match self {
            Swizzle::Identity => "identity".to_string(),
            Swizzle::XorBlock {
                shift,
                mask,
                lshift,
                granularity,
            } => format!("xor_block:S={shift},M={mask},T={lshift},G={granularity}"),
            Swizzle::RowHalfSwap {
                trigger_row,
                half_bytes,
            } => format!("row_half_swap:R={trigger_row},H={half_bytes}"),
            Swizzle::CustomTable(_) => "custom_table".to_string(),
        }
    }

    /// Parses "identity", "row_half_swap:R=8,H=32" or "xor_block:S=7,M=3,T=3,G=8".
    pub fn parse(s: &str) -> Result<Self> {
        if s == "identity" {
            return Ok(Swizzle::Identity);
        }
        let (family, params) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("bad swizzle spec `{s}`")))?;
        let mut kv = BTreeMap::new();
        for part in params.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("bad swizzle param `{part}`")))?;
            let v: u32 = v
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad swizzle param `{part}`")))?;
            kv.insert(k.to_uppercase(), v);
        }
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("swizzle `{s}` missing param {k}")))
        };
        match family {
            "row_half_swap" => Swizzle::row_half_swap(get("R")?, get("H")?),
            "xor_block" => Swizzle::xor_block(get("S")?, get("M")?, get("T")?, get("G")?),
            other => Err(Error::InvalidInput(format!(
                "unknown swizzle family `{other}`"
            ))),
        }
    }
}

/// Applies a swizzle to a byte offset. `row` and `row_pitch` give the row
/// context needed by the row_half_swap family.
pub fn apply_swizzle(swizzle: &Swizzle, offset: u32, row: u32, row_pitch: u32) -> Result<u32> {
    match swizzle {
        Swizzle::Identity => Ok(offset),
        Swizzle::XorBlock {
            shift,
            mask,
            lshift,
            ..
        } => Ok(offset ^ (((offset >> shift) & mask) << lshift)),
        Swizzle::RowHalfSwap {
            trigger_row,
            half_bytes,
        } => {
            if half_bytes * 2 > row_pitch {
                return Err(Error::InvalidInput(format!(
                    "row_half_swap half_bytes {half_bytes} needs row pitch >= {}",
                    half_bytes * 2
                )));
            }
            if (row / trigger_row) % 2 == 1 {
                let byte_in_row = offset - row * row_pitch;
                Ok(row * row_pitch + (byte_in_row ^ half_bytes))
            } else {
                Ok(offset)
            }
        }
        Swizzle::CustomTable(table) => table.get(offset as usize).copied().ok_or_else(|| {
            Error::InvalidInput(format!(
                "custom swizzle table has no entry for offset {offset}"
            ))
        }),
    }
}

/// How element columns are placed within a row of LDS.
///
/// Dense tiles put element c at `c * bits / 8`. Slotted tiles (the FP6
/// dwordx3 pattern) place groups of `elems_per_slot` elements at
/// `slot_stride_bytes` strides, leaving pad bytes at the end of each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnPacking {
    Dense,
    Slotted {
        elems_per_slot: u32,
        slot_stride_bytes: u32,
    },
}

/// A tile in shared memory: logical (row, col) elements mapped to byte
/// offsets, then remapped by the swizzle.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedTile {
    pub rows: u32,
    pub cols: u32,
    pub dtype: DType,
    pub row_pitch_bytes: u32,
    pub packing: ColumnPacking,
    pub swizzle: Swizzle,
}

impl SharedTile {
    /// Dense tile with the minimal row pitch.
    pub fn dense(rows: u32, cols: u32, dtype: DType, swizzle: Swizzle) -> Result<Self> {
        let row_bytes = dtype.span_bytes(cols).ok_or_else(|| {
            Error::InvalidInput(format!(
                "a row of {cols} {} elements is not byte-aligned",
                dtype.name()
            ))
        })?;
        Self::with_pitch(rows, cols, dtype, row_bytes, swizzle)
    }

    pub fn with_pitch(
        rows: u32,
        cols: u32,
        dtype: DType,
        row_pitch_bytes: u32,
        swizzle: Swizzle,
    ) -> Result<Self> {
        let row_bytes = dtype.span_bytes(cols).ok_or_else(|| {
            Error::InvalidInput(format!(
                "a row of {cols} {} elements is not byte-aligned",
                dtype.name()
            ))
        })?;
        if row_pitch_bytes < row_bytes {
            return Err(Error::InvalidInput(format!(
                "row pitch {row_pitch_bytes} is below the {row_bytes}-byte row payload"
            )));
        }
        Ok(Self {
            rows,
            cols,
            dtype,
            row_pitch_bytes,
            packing: ColumnPacking::Dense,
            swizzle,
        })
    }

    /// Slotted tile: groups of `elems_per_slot` elements live at
    /// `slot_stride_bytes` strides within the row.
    pub fn slotted(
        rows: u32,
        cols: u32,
        dtype: DType,
        elems_per_slot: u32,
        slot_stride_bytes: u32,
        swizzle: Swizzle,
    ) -> Result<Self> {
        if elems_per_slot == 0 || !cols.is_multiple_of(elems_per_slot) {
            return Err(Error::InvalidInput(format!(
                "{cols} columns do not split into slots of {elems_per_slot}"
            )));
        }
        let data_bytes = dtype.span_bytes(elems_per_slot).ok_or_else(|| {
            Error::InvalidInput(format!(
                "a slot of {elems_per_slot} {} elements is not byte-aligned",
                dtype.name()
            ))
        })?;
        if slot_stride_bytes < data_bytes {
            return Err(Error::InvalidInput(format!(
                "slot stride {slot_stride_bytes} is below the {data_bytes}-byte slot payload"
            )));
        }
        let row_pitch_bytes = (cols / elems_per_slot) * slot_stride_bytes;
        Ok(Self {
            rows,
            cols,
            dtype,
            row_pitch_bytes,
            packing: ColumnPacking::Slotted {
                elems_per_slot,
                slot_stride_bytes,
            },
            swizzle,
        })
    }

    pub fn total_bytes(&self) -> u32 {
        self.rows * self.row_pitch_bytes
    }

    /// Unswizzled bit offset of element (row, col) within the tile.
    pub fn raw_bit_offset(&self, row: u32, col: u32) -> u64 {
        let bits = u64::from(self.dtype.bits_per_element());
        let row_bits = u64::from(row) * u64::from(self.row_pitch_bytes) * 8;
        match self.packing {
            ColumnPacking::Dense => row_bits + u64::from(col) * bits,
            ColumnPacking::Slotted {
                elems_per_slot,
                slot_stride_bytes,
            } => {
                let slot = u64::from(col / elems_per_slot);
                let within = u64::from(col % elems_per_slot) * bits;
                row_bits + slot * u64::from(slot_stride_bytes) * 8 + within
            }
        }
    }

    /// Unswizzled byte offset of element (row, col). Fails when the element
    /// does not start on a byte boundary (sub-byte dtypes).
    pub fn raw_offset(&self, row: u32, col: u32) -> Result<u32> {
        let bits = self.raw_bit_offset(row, col);
        if !bits.is_multiple_of(8) {
            return Err(Error::InvalidInput(format!(
                "element ({row},{col}) of dtype {} starts mid-byte",
                self.dtype.name()
            )));
        }
        Ok((bits / 8) as u32)
    }

    /// Swizzled byte offset of element (row, col).
    pub fn address(&self, row: u32, col: u32) -> Result<u32> {
        let raw = self.raw_offset(row, col)?;
        apply_swizzle(&self.swizzle, raw, row, self.row_pitch_bytes)
    }

    /// Tile matching a register layout, dense, minimal pitch.
    pub fn for_layout(layout: &TileLayout, swizzle: Swizzle) -> Result<Self> {
        Self::dense(layout.rows, layout.cols, layout.dtype, swizzle)
    }

    /// Exhaustively checks that the swizzle permutes the tile's byte offsets.
    pub fn verify_swizzle_bijective(&self) -> Result<()> {
        let total = self.total_bytes();
        let mut image = vec![u32::MAX; total as usize];
        for offset in 0..total {
            let row = offset / self.row_pitch_bytes;
            let mapped = apply_swizzle(&self.swizzle, offset, row, self.row_pitch_bytes)?;
            if mapped >= total {
                return Err(Error::SwizzleNotBijective {
                    a: offset,
                    b: offset,
                    image: mapped,
                });
            }
            if image[mapped as usize] != u32::MAX {
                return Err(Error::SwizzleNotBijective {
                    a: image[mapped as usize],
                    b: offset,
                    image: mapped,
                });
            }
            image[mapped as usize] = offset;
        }
        Ok(())
    }
}

/// One LDS access: a lane, the instruction issue it belongs to, and the
/// swizzled byte span it touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneAccess {
    pub lane: u32,
    pub issue: u32,
    pub addr: u32,
    pub len: u32,
}

/// Byte addresses each lane touches when moving `layout`'s elements through
/// `instr` against `tile`.
///
/// Layouts with an explicit access pattern for the instruction use it
/// directly; otherwise each lane's owned elements are merged into contiguous
/// byte runs and split into `bytes_per_lane` chunks. A run that is not a
/// multiple of the chunk size is an error (this is how the FP6 24-byte vs
/// 16-byte mismatch surfaces).
pub fn lane_addresses(
    layout: &TileLayout,
    tile: &SharedTile,
    instr: &InstrDescriptor,
) -> Result<Vec<LaneAccess>> {
    if tile.rows < layout.rows || tile.cols < layout.cols {
        return Err(Error::InvalidInput(format!(
            "tile {}x{} is smaller than layout {}x{}",
            tile.rows, tile.cols, layout.rows, layout.cols
        )));
    }
    if let Some(access) = &layout.access {
        if access.instr == instr.name {
            return explicit_accesses(layout, tile, instr, access);
        }
    }
    ownership_accesses(layout, tile, instr)
}

fn explicit_accesses(
    _layout: &TileLayout,
    tile: &SharedTile,
    instr: &InstrDescriptor,
    access: &AccessPattern,
) -> Result<Vec<LaneAccess>> {
    let mut out = Vec::new();
    for (issue, per_lane) in access.reads.iter().enumerate() {
        for (lane, read) in per_lane.iter().enumerate() {
            let lane = lane as u32;
            let len = tile.dtype.span_bytes(read.elems).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "read of {} {} elements is not byte-sized",
                    read.elems,
                    tile.dtype.name()
                ))
            })?;
            if len != instr.bytes_per_lane {
                return Err(Error::AccessSizeMismatch {
                    lane,
                    run_bytes: len,
                    instr: instr.name.clone(),
                    bytes_per_lane: instr.bytes_per_lane,
                });
            }
            let addr = swizzled_chunk(tile, read.row, read.col, len, lane, instr)?;
            out.push(LaneAccess {
                lane,
                issue: issue as u32,
                addr,
                len,
            });
        }
    }
    Ok(out)
}

fn ownership_accesses(
    layout: &TileLayout,
    tile: &SharedTile,
    instr: &InstrDescriptor,
) -> Result<Vec<LaneAccess>> {
    let elem_bits = u64::from(tile.dtype.bits_per_element());
    let mut out = Vec::new();
    for lane in 0..LANES_PER_WAVE {
        let elements = layout.owned_elements(lane);
        // Merge elements (in slot order) into maximal bit-contiguous runs.
        let mut runs: Vec<(u32, u32, u32)> = Vec::new(); // (row, start col, elems)
        for &(r, c) in &elements {
            let start = tile.raw_bit_offset(r, c);
            match runs.last_mut() {
                Some((rr, rc, n))
                    if tile.raw_bit_offset(*rr, *rc) + u64::from(*n) * elem_bits == start =>
                {
                    *n += 1;
                }
                _ => runs.push((r, c, 1)),
            }
        }
        let mut issue = 0u32;
        for (r, c, elems) in runs {
            let start_bits = tile.raw_bit_offset(r, c);
            let len_bits = u64::from(elems) * elem_bits;
            if !start_bits.is_multiple_of(8) || !len_bits.is_multiple_of(8) {
                return Err(Error::InvalidInput(format!(
                    "lane {lane} owns a run of {elems} {} elements that is not byte-aligned",
                    tile.dtype.name()
                )));
            }
            let bytes = (len_bits / 8) as u32;
            if !bytes.is_multiple_of(instr.bytes_per_lane) {
                return Err(Error::AccessSizeMismatch {
                    lane,
                    run_bytes: bytes,
                    instr: instr.name.clone(),
                    bytes_per_lane: instr.bytes_per_lane,
                });
            }
            let chunks = bytes / instr.bytes_per_lane;
            let elems_per_chunk = elems / chunks;
            for chunk in 0..chunks {
                let addr = swizzled_chunk(
                    tile,
                    r,
                    c + chunk * elems_per_chunk,
                    instr.bytes_per_lane,
                    lane,
                    instr,
                )?;
                out.push(LaneAccess {
                    lane,
                    issue,
                    addr,
                    len: instr.bytes_per_lane,
                });
                issue += 1;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("access list is empty".to_string()));
    }
    Ok(out)
}

/// Swizzles a byte chunk starting at element (row, col) and checks the image
/// is one contiguous, properly aligned span.
fn swizzled_chunk(
    tile: &SharedTile,
    row: u32,
    col: u32,
    len: u32,
    lane: u32,
    instr: &InstrDescriptor,
) -> Result<u32> {
    let raw_start = tile.raw_offset(row, col)?;
    if raw_start % instr.required_alignment_bytes != 0 {
        return Err(Error::Misaligned {
            lane,
            offset: raw_start,
            instr: instr.name.clone(),
            alignment: instr.required_alignment_bytes,
        });
    }
    // The chunk is contiguous in raw bytes; swizzle every byte and require
    // the image to be one contiguous span.
    let mut min = u32::MAX;
    let mut max = 0u32;
    for b in 0..len {
        let mapped = apply_swizzle(&tile.swizzle, raw_start + b, row, tile.row_pitch_bytes)?;
        min = min.min(mapped);
        max = max.max(mapped);
    }
    if max - min + 1 != len {
        return Err(Error::SwizzleSplitsAccess {
            lane,
            offset: raw_start,
            len,
        });
    }
    if min % instr.required_alignment_bytes != 0 {
        return Err(Error::Misaligned {
            lane,
            offset: min,
            instr: instr.name.clone(),
            alignment: instr.required_alignment_bytes,
        });
    }
    Ok(min)
}

// ---------------------------------------------------------------------------
// Layout registry, fed from data/layouts.json plus user config.

#[derive(Deserialize)]
struct LayoutFile {
    layouts: Vec<LayoutEntry>,
}

#[derive(Deserialize)]
struct LayoutEntry {
    name: String,
    mfma: String,
    dtype: String,
    operand: String,
    orientation: Orientation,
    rows: u32,
    cols: u32,
    contiguity: u32,
    grid: Vec<String>,
    #[serde(default)]
    access: Option<AccessEntry>,
}

#[derive(Deserialize)]
struct AccessEntry {
    instr: String,
    reads: Vec<Vec<(u32, u32, u32)>>,
}

static LAYOUT_DATA: &str = include_str!("../data/layouts.json");

/// (mfma dims, dtype, operand, orientation) -> layout name
type LayoutCombination = ((u32, u32, u32), DType, Operand, Orientation, String);

/// Registry of shipped and user-registered tile layouts.
#[derive(Debug, Clone)]
pub struct LayoutRegistry {
    layouts: Vec<TileLayout>,
    combinations: Vec<LayoutCombination>,
}

impl LayoutRegistry {
    pub fn shipped() -> Result<Self> {
        let mut reg = Self {
            layouts: Vec::new(),
            combinations: Vec::new(),
        };
        let file: LayoutFile = serde_json::from_str(LAYOUT_DATA).map_err(|e| Error::Parse {
            path: "data/layouts.json".to_string(),
            reason: e.to_string(),
        })?;
        for entry in file.layouts {
            reg.register_entry(entry, "data/layouts.json")?;
        }
        Ok(reg)
    }

    fn register_entry(&mut self, entry: LayoutEntry, origin: &str) -> Result<()> {
        let dtype = DType::parse(&entry.dtype)?;
        let mut ownership =
            vec![vec![(u32::MAX, u32::MAX); entry.cols as usize]; entry.rows as usize];
        if entry.grid.len() != entry.rows as usize {
            return Err(Error::Parse {
                path: origin.to_string(),
                reason: format!("layout `{}` grid has wrong row count", entry.name),
            });
        }
        for (r, line) in entry.grid.iter().enumerate() {
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != entry.cols as usize {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    reason: format!("layout `{}` row {r} has wrong cell count", entry.name),
                });
            }
            for (c, cell) in cells.iter().enumerate() {
                let (lane, slot) = cell.split_once(':').ok_or_else(|| Error::Parse {
                    path: origin.to_string(),
                    reason: format!("layout `{}` bad cell `{cell}`", entry.name),
                })?;
                ownership[r][c] = (
                    lane.parse().map_err(|_| Error::Parse {
                        path: origin.to_string(),
                        reason: format!("layout `{}` bad cell `{cell}`", entry.name),
                    })?,
                    slot.parse().map_err(|_| Error::Parse {
                        path: origin.to_string(),
                        reason: format!("layout `{}` bad cell `{cell}`", entry.name),
                    })?,
                );
            }
        }
        let access = entry.access.map(|a| AccessPattern {
            instr: a.instr,
            reads: a
                .reads
                .into_iter()
                .map(|issue| {
                    issue
                        .into_iter()
                        .map(|(row, col, elems)| ElementRead { row, col, elems })
                        .collect()
                })
                .collect(),
        });
        let layout = TileLayout {
            name: entry.name.clone(),
            rows: entry.rows,
            cols: entry.cols,
            dtype,
            orientation: entry.orientation,
            contiguity: entry.contiguity,
            ownership,
            access,
        };
        layout.validate()?;
        let dims = MfmaShape::parse_dims(&entry.mfma)?;
        let operand = Operand::parse(&entry.operand)?;
        self.combinations
            .push((dims, dtype, operand, entry.orientation, entry.name));
        self.layouts.retain(|l| l.name != layout.name);
        self.layouts.push(layout);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&TileLayout> {
        self.layouts
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayout(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.layouts.iter().map(|l| l.name.as_str()).collect()
    }

    /// Resolves the shipped layout for a shape/operand/orientation triple.
    ///
    /// The accumulator (C/D) table covers both MK dtypes at fp32, so for
    /// operand C the shape's dtype is not matched against the table's.
    pub fn make_layout(
        &self,
        shape: MfmaShape,
        operand: Operand,
        orientation: Orientation,
    ) -> Result<&TileLayout> {
        if shape.m < 2 || shape.n < 2 || shape.k < 2 {
            return Err(Error::InvalidInput(format!(
                "degenerate mfma shape {}",
                shape.dims()
            )));
        }
        let dims = (shape.m, shape.n, shape.k);
        let name = self
            .combinations
            .iter()
            .find(|(d, dt, op, or, _)| {
                *d == dims
                    && *op == operand
                    && *or == orientation
                    && (operand == Operand::C || *dt == shape.dtype)
            })
            .map(|(_, _, _, _, name)| name.clone())
            .ok_or_else(|| Error::UnknownLayoutCombination {
                shape: format!("{}_{}", shape.dims(), shape.dtype.name()),
                operand: format!("{operand:?}"),
                orientation: format!("{orientation:?}"),
            })?;
        self.get(&name)
    }

    /// Registers a user layout parsed from the same JSON schema as the data file.
    pub fn register_json(&mut self, json: &serde_json::Value, origin: &str) -> Result<()> {
        let entry: LayoutEntry =
            serde_json::from_value(json.clone()).map_err(|e| Error::Parse {
                path: origin.to_string(),
                reason: e.to_string(),
            })?;
        self.register_entry(entry, origin)
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // Any accepted xor_block member is a bijection on a 1 KiB tile.
        #[test]
        fn xor_block_members_are_bijective(shift in 3u32..10, mask in 1u32..16, lshift in 3u32..10) {
            if let Ok(s) = Swizzle::xor_block(shift, mask, lshift, 8) {
                let tile = SharedTile::dense(16, 32, DType::Bf16, s).unwrap();
                let total = tile.total_bytes();
                let mut seen = vec![false; total as usize];
                let mut ok = true;
                for offset in 0..total {
                    let row = offset / tile.row_pitch_bytes;
                    let mapped = apply_swizzle(&tile.swizzle, offset, row, tile.row_pitch_bytes).unwrap();
                    if mapped >= total || seen[mapped as usize] {
                        ok = false;
                        break;
                    }
                    seen[mapped as usize] = true;
                }
                // Members whose image leaves the tile are rejected rather than wrapped.
                prop_assert!(ok || tile.verify_swizzle_bijective().is_err());
            }
        }
    }
}
