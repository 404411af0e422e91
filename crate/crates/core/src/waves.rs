//! Analytical models for wave scheduling: register-budget feasibility of
//! output tiles, arithmetic-intensity scoring, and a discrete-event ping-pong
//! timeline for alternating compute/memory wavegroups.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::MfmaShape;
use crate::machine::{DType, MachineConfig, LANES_PER_WAVE};

/// Fixed per-thread register overhead (addressing, softmax-style scratch).
/// Calibrated once against the achieved producer/consumer GEMM shapes; see
/// `register_feasibility`.
pub const DEFAULT_OVERHEAD_REGS: u32 = 24;

/// A candidate kernel schedule: producer/consumer wave counts and the output
/// tile computed per thread block.
#[derive(Debug, Clone)]
pub struct WavePlan {
    pub name: String,
    pub producers: u32,
    pub consumers: u32,
    pub output_m: u32,
    pub output_n: u32,
    pub mfma: MfmaShape,
    pub accum_dtype: DType,
    /// In-flight k-stages whose operands live in registers. The default of 1
    /// single-buffers operands in registers (deeper pipelining stages data in
    /// LDS), which reproduces the achieved feasibility boundary.
    pub pipeline_depth: u32,
    pub overhead_regs: u32,
}

impl WavePlan {
    pub fn new(
        producers: u32,
        consumers: u32,
        output_m: u32,
        output_n: u32,
        mfma: MfmaShape,
    ) -> Self {
        Self {
            name: format!("{producers}p{consumers}c_{output_m}x{output_n}"),
            producers,
            consumers,
            output_m,
            output_n,
            mfma,
            accum_dtype: DType::Fp32,
            pipeline_depth: 1,
            overhead_regs: DEFAULT_OVERHEAD_REGS,
        }
    }

    pub fn waves_per_simd(&self, machine: &MachineConfig) -> u32 {
        (self.producers + self.consumers).div_ceil(machine.simds_per_cu)
    }

    /// Static even split of the SIMD's register file.
    pub fn regs_per_wave(&self, machine: &MachineConfig) -> u32 {
        self.regs_per_simd_split(machine).0
    }

    fn regs_per_simd_split(&self, machine: &MachineConfig) -> (u32, u32) {
        let waves = self.waves_per_simd(machine).max(1);
        (machine.regs_per_simd / waves, waves)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub plan: String,
    pub waves_per_simd: u32,
    pub regs_per_wave: u32,
    pub accum_regs_per_thread: u32,
    pub operand_regs_per_thread: u32,
    pub overhead_regs: u32,
    pub total_regs_per_thread: u32,
    pub headroom: i64,
    pub feasible: bool,
    /// At one wave per SIMD the hardware splits the file into 256 VGPRs plus
    /// 256 AGPRs; reported for information, not modeled as a constraint.
    pub vgpr_agpr_split: Option<(u32, u32)>,
}

/// Consumer wave grid: the factorization of `consumers` into wm x wn
/// minimizing |m/wm - n/wn| over valid divisors.
fn consumer_tile(consumers: u32, m: u32, n: u32) -> Result<(u32, u32)> {
    let mut best: Option<(u32, u32, u32)> = None;
    for wm in 1..=consumers {
        if !consumers.is_multiple_of(wm) {
            continue;
        }
        let wn = consumers / wm;
        if !m.is_multiple_of(wm) || !n.is_multiple_of(wn) {
            continue;
        }
        let (tm, tn) = (m / wm, n / wn);
        let diff = tm.abs_diff(tn);
        if best.is_none_or(|(d, _, _)| diff < d) {
            best = Some((diff, tm, tn));
        }
    }
    best.map(|(_, tm, tn)| (tm, tn)).ok_or_else(|| {
        Error::InvalidInput(format!(
            "{consumers} consumer waves cannot tile a {m}x{n} output"
        ))
    })
}

/// Register-budget check for an output tile under the plan's wave split.
///
/// Accumulators: m*n fp32 values spread over the consumer threads. Operands:
/// per consumer thread, the A and B fragment bytes of one k-stage times the
/// pipeline depth. The plan is feasible when accumulators + operands +
/// overhead fit in the statically split per-wave register file.
pub fn register_feasibility(plan: &WavePlan, machine: &MachineConfig) -> Result<FeasibilityReport> {
    if plan.consumers == 0 {
        return Err(Error::InvalidInput(
            "a plan needs at least one consumer wave".to_string(),
        ));
    }
    if plan.output_m == 0 || plan.output_n == 0 {
        return Err(Error::InvalidInput("zero-sized output tile".to_string()));
    }
    let (regs_per_wave, waves) = plan.regs_per_simd_split(machine);
    let accum_bytes_per_el = plan.accum_dtype.bits_per_element() / 8;
    let accum_values = u64::from(plan.output_m) * u64::from(plan.output_n);
    let consumer_threads = u64::from(plan.consumers) * u64::from(LANES_PER_WAVE);
    let accum_regs =
        (accum_values * u64::from(accum_bytes_per_el)).div_ceil(consumer_threads * 4) as u32;

    let (tile_m, tile_n) = consumer_tile(plan.consumers, plan.output_m, plan.output_n)?;
    let frag_bits = u64::from(tile_m + tile_n)
        * u64::from(plan.mfma.k)
        * u64::from(plan.mfma.dtype.bits_per_element());
    let operand_regs = (frag_bits * u64::from(plan.pipeline_depth))
        .div_ceil(u64::from(LANES_PER_WAVE) * 32) as u32;

    let total = accum_regs + operand_regs + plan.overhead_regs;
    Ok(FeasibilityReport {
        plan: plan.name.clone(),
        waves_per_simd: waves,
        regs_per_wave,
        accum_regs_per_thread: accum_regs,
        operand_regs_per_thread: operand_regs,
        overhead_regs: plan.overhead_regs,
        total_regs_per_thread: total,
        headroom: i64::from(regs_per_wave) - i64::from(total),
        feasible: total <= regs_per_wave,
        vgpr_agpr_split: (waves == 1).then_some((256, 256)),
    })
}

/// Flops per byte moved for an output tile: 2mn / ((m+n) * bytes(dtype)).
/// The k extent cancels per panel, so the result is k-independent.
pub fn intensity(output_m: u32, output_n: u32, _block_k: u32, dtype: DType) -> f64 {
    let m = f64::from(output_m);
    let n = f64::from(output_n);
    let bytes = f64::from(dtype.bits_per_element()) / 8.0;
    2.0 * m * n / ((m + n) * bytes)
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedPlan {
    pub rank: usize,
    pub plan: String,
    pub feasible: bool,
    pub intensity: f64,
}

/// Orders plans by (feasible, intensity, pipeline depth), stable in the
/// declaration order on full ties. Infeasible plans sink to the back.
pub fn rank_plans(plans: &[WavePlan], machine: &MachineConfig) -> Result<Vec<RankedPlan>> {
    if plans.is_empty() {
        return Err(Error::InvalidInput("no plans to rank".to_string()));
    }
    let mut scored: Vec<(usize, bool, f64, u32)> = Vec::new();
    for (idx, plan) in plans.iter().enumerate() {
        let report = register_feasibility(plan, machine)?;
        let score = intensity(plan.output_m, plan.output_n, plan.mfma.k, plan.mfma.dtype);
        scored.push((idx, report.feasible, score, plan.pipeline_depth));
    }
    scored.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal))
            .then(b.3.cmp(&a.3))
            .then(a.0.cmp(&b.0))
    });
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(rank, (idx, feasible, score, _))| RankedPlan {
            rank,
            plan: plans[idx].name.clone(),
            feasible,
            intensity: score,
        })
        .collect())
}

/// Work cluster kind in a ping-pong timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterKind {
    Compute,
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cluster {
    pub kind: ClusterKind,
    pub duration: f64,
}

/// Cluster sequences for one or two wavegroups on a SIMD. Two groups model
/// the 8-wave ping-pong (one wave per SIMD per group); a single group of
/// mixed clusters models the finely interleaved 4-wave pattern.
#[derive(Debug, Clone)]
pub struct PingPongTimeline {
    pub groups: Vec<Vec<Cluster>>,
}

impl PingPongTimeline {
    /// Two-group timeline; sequences must have equal length and strictly
    /// alternate compute and memory, the second group starting on the
    /// opposite kind (the prologue stagger).
    pub fn two_group(a: Vec<Cluster>, b: Vec<Cluster>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidInput(
                "the two wavegroups need equal-length cluster sequences".to_string(),
            ));
        }
        let t = Self { groups: vec![a, b] };
        t.validate_alternation()?;
        Ok(t)
    }

    pub fn single_group(a: Vec<Cluster>) -> Self {
        Self { groups: vec![a] }
    }

    /// Balanced ping-pong of n cluster pairs per group.
    pub fn uniform(n: usize, compute: f64, memory: f64) -> Result<Self> {
        let mk = |first: ClusterKind| -> Vec<Cluster> {
            (0..n)
                .map(|i| {
                    let kind = if i % 2 == 0 {
                        first
                    } else if first == ClusterKind::Compute {
                        ClusterKind::Memory
                    } else {
                        ClusterKind::Compute
                    };
                    Cluster {
                        kind,
                        duration: match kind {
                            ClusterKind::Compute => compute,
                            ClusterKind::Memory => memory,
                        },
                    }
                })
                .collect()
        };
        Self::two_group(mk(ClusterKind::Compute), mk(ClusterKind::Memory))
    }

    fn validate_alternation(&self) -> Result<()> {
        for group in &self.groups {
            for pair in group.windows(2) {
                if pair[0].kind == pair[1].kind {
                    return Err(Error::InvalidInput(
                        "adjacent clusters of the same kind within a wavegroup".to_string(),
                    ));
                }
            }
        }
        if self.groups.len() == 2 {
            let first = |g: &[Cluster]| g.first().map(|c| c.kind);
            if let (Some(a), Some(b)) = (first(&self.groups[0]), first(&self.groups[1])) {
                if a == b {
                    return Err(Error::InvalidInput(
                        "both wavegroups start on the same cluster kind; stagger the prologue"
                            .to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimelineEvent {
    pub group: usize,
    pub cluster: usize,
    pub kind: ClusterKind,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PingPongResult {
    /// Fraction of the makespan the SIMD's matrix pipe is busy.
    pub occupancy: f64,
    pub makespan: f64,
    pub events: Vec<TimelineEvent>,
}

/// Event-driven simulation of the alternating wavegroups.
///
/// The compute pipe and the memory pipe each admit one cluster at a time;
/// a group's clusters run in order. Ready clusters start as soon as their
/// pipe frees up, lower group index first on ties.
pub fn pingpong_utilization(timeline: &PingPongTimeline) -> Result<PingPongResult> {
    timeline.validate_alternation()?;
    let n_groups = timeline.groups.len();
    if n_groups == 0 || timeline.groups.iter().all(|g| g.is_empty()) {
        return Ok(PingPongResult {
            occupancy: 0.0,
            makespan: 0.0,
            events: Vec::new(),
        });
    }
    let mut next = vec![0usize; n_groups]; // next cluster index per group
    let mut ready = vec![0.0f64; n_groups]; // time the group's next cluster may start
    let mut pipe_free = [0.0f64; 2]; // compute, memory
    let mut events = Vec::new();
    let mut compute_busy = 0.0;
    let mut makespan = 0.0f64;

    let total: usize = timeline.groups.iter().map(Vec::len).sum();
    for _ in 0..total {
        // Pick the startable cluster with the earliest start time.
        let mut best: Option<(f64, usize)> = None;
        for g in 0..n_groups {
            if next[g] >= timeline.groups[g].len() {
                continue;
            }
            let cluster = timeline.groups[g][next[g]];
            let pipe = cluster.kind as usize;
            let start = ready[g].max(pipe_free[pipe]);
            if best.is_none_or(|(t, _)| start < t) {
                best = Some((start, g));
            }
        }
        let (start, g) = best.ok_or_else(|| Error::Internal("no startable cluster".into()))?;
        let cluster = timeline.groups[g][next[g]];
        let end = start + cluster.duration;
        let pipe = cluster.kind as usize;
        events.push(TimelineEvent {
            group: g,
            cluster: next[g],
            kind: cluster.kind,
            start,
            end,
        });
        if cluster.kind == ClusterKind::Compute {
            compute_busy += cluster.duration;
        }
        ready[g] = end;
        pipe_free[pipe] = end;
        makespan = makespan.max(end);
        next[g] += 1;
    }
    Ok(PingPongResult {
        occupancy: if makespan > 0.0 {
            compute_busy / makespan
        } else {
            0.0
        },
        makespan,
        events,
    })
}
