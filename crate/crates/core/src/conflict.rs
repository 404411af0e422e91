//! Bank-conflict analysis for (layout, tile, swizzle, instruction) quadruples
//! and exhaustive search over swizzle families for conflict-free solutions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::{apply_swizzle, lane_addresses, LaneAccess, SharedTile, Swizzle, TileLayout};
use crate::machine::InstrDescriptor;

/// Whether two lanes of a phase reading the same word count as a conflict.
/// LDS broadcasts identical words, so the default is conflict-free; strict
/// mode mirrors a solver that treats any same-bank pair as conflicting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BroadcastPolicy {
    #[default]
    Broadcast,
    Strict,
}

impl BroadcastPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "broadcast" | "allow" => Ok(BroadcastPolicy::Broadcast),
            "strict" => Ok(BroadcastPolicy::Strict),
            other => Err(Error::InvalidInput(format!(
                "unknown broadcast policy `{other}`"
            ))),
        }
    }
}

/// Per-phase conflict summary.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub phase: usize,
    /// Max over banks of distinct words routed to that bank (1 = conflict-free).
    pub degree: u32,
    /// Banks at the max degree.
    pub conflicting_banks: Vec<u32>,
    /// Fraction of banks touched by this phase, across all issues.
    pub bank_utilization: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConflictReport {
    pub per_phase: Vec<PhaseReport>,
    pub overall_degree: u32,
    /// Estimated slowdown relative to conflict-free issue (serialized phases).
    pub est_slowdown: f64,
}

/// Counts bank conflicts per phase.
///
/// Within one issue of one phase, the degree at a bank is the number of
/// distinct words the phase's lanes route to it; the phase degree is the max
/// over banks and issues.
pub fn analyze(
    layout: &TileLayout,
    tile: &SharedTile,
    instr: &InstrDescriptor,
    policy: BroadcastPolicy,
) -> Result<ConflictReport> {
    let accesses = lane_addresses(layout, tile, instr)?;
    analyze_accesses(&accesses, instr, policy)
}

/// Conflict analysis over a raw access list (used by tests with synthetic
/// patterns and by the search re-verifier).
pub fn analyze_accesses(
    accesses: &[LaneAccess],
    instr: &InstrDescriptor,
    policy: BroadcastPolicy,
) -> Result<ConflictReport> {
    if accesses.is_empty() {
        return Err(Error::InvalidInput("access list is empty".to_string()));
    }
    let n_issues = accesses.iter().map(|a| a.issue).max().unwrap() + 1;
    let mut per_phase = Vec::new();
    for (phase_idx, lanes) in instr.phases.iter().enumerate() {
        let mut max_degree = 1u32;
        let mut worst_banks: Vec<u32> = Vec::new();
        let mut touched = vec![false; instr.n_banks as usize];
        for issue in 0..n_issues {
            // words_per_bank[bank] = distinct words (or raw touches in strict mode)
            let mut words_per_bank: Vec<Vec<u32>> = vec![Vec::new(); instr.n_banks as usize];
            for access in accesses
                .iter()
                .filter(|a| a.issue == issue && lanes.contains(&a.lane))
            {
                let mut addr = access.addr;
                while addr < access.addr + access.len {
                    let word = instr.word_of(addr);
                    let bank = instr.bank_of(addr);
                    touched[bank as usize] = true;
                    let entry = &mut words_per_bank[bank as usize];
                    if policy == BroadcastPolicy::Strict || !entry.contains(&word) {
                        entry.push(word);
                    }
                    addr = (word + 1) * instr.bank_width_bytes;
                }
            }
            for (bank, words) in words_per_bank.iter().enumerate() {
                let degree = words.len() as u32;
                if degree > max_degree {
                    max_degree = degree;
                    worst_banks = vec![bank as u32];
                } else if degree == max_degree && degree > 1 {
                    let bank = bank as u32;
                    if !worst_banks.contains(&bank) {
                        worst_banks.push(bank);
                    }
                }
            }
        }
        let utilization = touched.iter().filter(|&&t| t).count() as f64 / instr.n_banks as f64;
        per_phase.push(PhaseReport {
            phase: phase_idx,
            degree: max_degree,
            conflicting_banks: worst_banks,
            bank_utilization: utilization,
        });
    }
    let overall = per_phase.iter().map(|p| p.degree).max().unwrap_or(1);
    Ok(ConflictReport {
        per_phase,
        overall_degree: overall,
        est_slowdown: overall as f64,
    })
}

/// Fraction of the instruction's banks never touched by any phase or issue.
pub fn bank_waste(layout: &TileLayout, tile: &SharedTile, instr: &InstrDescriptor) -> Result<f64> {
    let accesses = lane_addresses(layout, tile, instr)?;
    if accesses.is_empty() {
        return Err(Error::InvalidInput("access list is empty".to_string()));
    }
    let mut touched = vec![false; instr.n_banks as usize];
    for access in &accesses {
        let mut addr = access.addr;
        while addr < access.addr + access.len {
            let word = instr.word_of(addr);
            touched[instr.bank_of(addr) as usize] = true;
            addr = (word + 1) * instr.bank_width_bytes;
        }
    }
    let unused = touched.iter().filter(|&&t| !t).count();
    Ok(unused as f64 / instr.n_banks as f64)
}

/// What a swizzle must satisfy for one (layout, instruction) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Conflict degree 1 under the instruction's phase structure.
    ConflictFree,
    /// Only preserve the layout's wide accesses; conflicts are not checked.
    ContiguityOnly,
}

#[derive(Debug, Clone)]
pub struct SwizzleConstraint {
    pub layout: TileLayout,
    pub instr: InstrDescriptor,
    pub kind: ConstraintKind,
}

impl SwizzleConstraint {
    pub fn conflict_free(layout: TileLayout, instr: InstrDescriptor) -> Self {
        Self {
            layout,
            instr,
            kind: ConstraintKind::ConflictFree,
        }
    }

    pub fn contiguity_only(layout: TileLayout, instr: InstrDescriptor) -> Self {
        Self {
            layout,
            instr,
            kind: ConstraintKind::ContiguityOnly,
        }
    }
}

/// Search space over the xor_block family.
#[derive(Debug, Clone, Serialize)]
pub struct XorBlockSpace {
    pub shift_range: (u32, u32),
    pub mask_range: (u32, u32),
    pub lshift_range: (u32, u32),
    pub granularity: u32,
}

impl XorBlockSpace {
    /// Default caps at 64-bit granularity: S in 3..=10, M in 1..=15, T in 3..=10.
    pub fn at_granularity(granularity: u32) -> Self {
        let t_min = granularity.trailing_zeros();
        Self {
            shift_range: (3, 10),
            mask_range: (1, 15),
            lshift_range: (t_min, 10),
            granularity,
        }
    }

    pub fn size(&self) -> u64 {
        let span = |(lo, hi): (u32, u32)| u64::from(hi.saturating_sub(lo)) + 1;
        span(self.shift_range) * span(self.mask_range) * span(self.lshift_range)
    }

    /// Candidates in lexicographic (shift, mask, lshift) order.
    fn candidates(&self) -> impl Iterator<Item = Swizzle> + '_ {
        let (s0, s1) = self.shift_range;
        let (m0, m1) = self.mask_range;
        let (t0, t1) = self.lshift_range;
        (s0..=s1).flat_map(move |s| {
            (m0..=m1).flat_map(move |m| {
                (t0..=t1).filter_map(move |t| Swizzle::xor_block(s, m, t, self.granularity).ok())
            })
        })
    }
}

/// Outcome of a swizzle search: either a verified witness or a certificate
/// that the whole parameter space was enumerated without one.
#[derive(Debug, Clone)]
pub enum SearchOutcome {
    Found {
        swizzle: Swizzle,
        candidates_tested: u64,
    },
    Exhausted {
        candidates_tested: u64,
        space: XorBlockSpace,
    },
}

/// Default cap on the number of candidates a search may enumerate.
pub const DEFAULT_SEARCH_CAP: u64 = 1 << 20;

/// Searches the xor_block family for a swizzle that makes every ConflictFree
/// constraint degree 1 while preserving contiguous runs of `contiguity_bytes`
/// (so the wide reads stay legal). Contiguity defaults to the widest
/// bytes_per_lane among the constraints.
///
/// A witness is re-verified through `analyze` for every constraint before it
/// is returned; candidates are enumerated in lexicographic parameter order so
/// the first witness is the smallest.
pub fn search_swizzle(
    space: &XorBlockSpace,
    constraints: &[SwizzleConstraint],
    contiguity_bytes: Option<u32>,
    cap: u64,
) -> Result<SearchOutcome> {
    if space.size() > cap {
        return Err(Error::SearchSpaceTooLarge {
            size: space.size(),
            cap,
        });
    }
    if constraints.is_empty() {
        return Ok(SearchOutcome::Found {
            swizzle: Swizzle::Identity,
            candidates_tested: 0,
        });
    }
    let contiguity = contiguity_bytes.unwrap_or_else(|| {
        constraints
            .iter()
            .map(|c| c.instr.bytes_per_lane)
            .max()
            .unwrap_or(1)
    });
    let mut tested = 0u64;
    for swizzle in space.candidates() {
        tested += 1;
        if satisfies(&swizzle, constraints, contiguity)? {
            return Ok(SearchOutcome::Found {
                swizzle,
                candidates_tested: tested,
            });
        }
    }
    Ok(SearchOutcome::Exhausted {
        candidates_tested: tested,
        space: space.clone(),
    })
}

fn satisfies(
    swizzle: &Swizzle,
    constraints: &[SwizzleConstraint],
    contiguity_bytes: u32,
) -> Result<bool> {
    for constraint in constraints {
        let tile = SharedTile::for_layout(&constraint.layout, swizzle.clone())?;
        if tile.verify_swizzle_bijective().is_err() {
            return Ok(false);
        }
        if !preserves_contiguity(&tile, contiguity_bytes) {
            return Ok(false);
        }
        if constraint.kind == ConstraintKind::ConflictFree {
            match analyze(
                &constraint.layout,
                &tile,
                &constraint.instr,
                BroadcastPolicy::Broadcast,
            ) {
                Ok(report) if report.overall_degree == 1 => {}
                Ok(_) => return Ok(false),
                // A swizzle that splits or misaligns the accesses is not a witness.
                Err(
                    Error::SwizzleSplitsAccess { .. }
                    | Error::Misaligned { .. }
                    | Error::AccessSizeMismatch { .. },
                ) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(true)
}

/// A swizzle preserves `span`-byte contiguity when every aligned span of the
/// tile maps to an aligned span in the same byte order.
fn preserves_contiguity(tile: &SharedTile, span: u32) -> bool {
    if span <= 1 {
        return true;
    }
    let total = tile.total_bytes();
    let mut start = 0;
    while start + span <= total {
        let row = start / tile.row_pitch_bytes;
        let Ok(base) = apply_swizzle(&tile.swizzle, start, row, tile.row_pitch_bytes) else {
            return false;
        };
        if base % span != 0 {
            return false;
        }
        for b in 1..span {
            let row = (start + b) / tile.row_pitch_bytes;
            match apply_swizzle(&tile.swizzle, start + b, row, tile.row_pitch_bytes) {
                Ok(mapped) if mapped == base + b => {}
                _ => return false,
            }
        }
        start += span;
    }
    true
}
