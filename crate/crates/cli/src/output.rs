//! Report serialization. Rates are rounded to 4 decimal places so repeated
//! runs and golden files compare byte-for-byte.

use serde::Serialize;

use cdnasim_core::cachesim::{ScheduleKind, SimResult};
use cdnasim_core::conflict::{ConflictReport, SearchOutcome, XorBlockSpace};
use cdnasim_core::waves::{FeasibilityReport, PingPongResult};

pub fn round4(x: f64) -> f64 {
    (x * 10000.0).round() / 10000.0
}

pub fn emit(output: Option<&str>, text: &str) -> std::io::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization");
    text.push('\n');
    text
}

#[derive(Serialize)]
struct PhaseJson {
    phase: usize,
    degree: u32,
    conflicting_banks: Vec<u32>,
    bank_utilization: f64,
}

#[derive(Serialize)]
struct ConflictJson {
    layout: String,
    instr: String,
    swizzle: String,
    overall_degree: u32,
    est_slowdown: f64,
    unused_bank_fraction: f64,
    per_phase: Vec<PhaseJson>,
}

pub fn conflict_json(
    layout: &str,
    instr: &str,
    swizzle: &str,
    report: &ConflictReport,
    waste: f64,
) -> String {
    to_json(&ConflictJson {
        layout: layout.to_string(),
        instr: instr.to_string(),
        swizzle: swizzle.to_string(),
        overall_degree: report.overall_degree,
        est_slowdown: round4(report.est_slowdown),
        unused_bank_fraction: round4(waste),
        per_phase: report
            .per_phase
            .iter()
            .map(|p| PhaseJson {
                phase: p.phase,
                degree: p.degree,
                conflicting_banks: p.conflicting_banks.clone(),
                bank_utilization: round4(p.bank_utilization),
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct SearchJson {
    outcome: &'static str,
    witness: Option<String>,
    candidates_tested: u64,
    space_size: u64,
    space: SpaceJson,
}

#[derive(Serialize)]
struct SpaceJson {
    family: &'static str,
    shift_range: (u32, u32),
    mask_range: (u32, u32),
    lshift_range: (u32, u32),
    granularity: u32,
}

pub fn search_json(outcome: &SearchOutcome, space: &XorBlockSpace) -> String {
    let space_json = SpaceJson {
        family: "xor_block",
        shift_range: space.shift_range,
        mask_range: space.mask_range,
        lshift_range: space.lshift_range,
        granularity: space.granularity,
    };
    let report = match outcome {
        SearchOutcome::Found {
            swizzle,
            candidates_tested,
        } => SearchJson {
            outcome: "found",
            witness: Some(swizzle.label()),
            candidates_tested: *candidates_tested,
            space_size: space.size(),
            space: space_json,
        },
        SearchOutcome::Exhausted {
            candidates_tested, ..
        } => SearchJson {
            outcome: "exhausted",
            witness: None,
            candidates_tested: *candidates_tested,
            space_size: space.size(),
            space: space_json,
        },
    };
    to_json(&report)
}

#[derive(Serialize)]
struct PhasesJson {
    instr: String,
    n_phases: usize,
    phases: Vec<Vec<u32>>,
    n_banks: u32,
}

pub fn phases_json(instr: &str, phases: &[Vec<u32>], banks: u32) -> String {
    to_json(&PhasesJson {
        instr: instr.to_string(),
        n_phases: phases.len(),
        phases: phases.to_vec(),
        n_banks: banks,
    })
}

pub fn cache_csv(results: &[(ScheduleKind, SimResult)]) -> String {
    let mut out = String::from("schedule,l2_hit,llc_hit,bytes_hbm,eq1_bw,hier_bw\n");
    for (kind, r) in results {
        out.push_str(&format!(
            "{},{:.4},{:.4},{},{:.6e},{:.6e}\n",
            kind.label(),
            r.l2_hit,
            r.llc_hit,
            r.bytes_from_hbm,
            r.est_bandwidth,
            r.hier_bandwidth
        ));
    }
    out
}

#[derive(Serialize)]
struct CacheRowJson {
    schedule: String,
    l2_hit: f64,
    llc_hit: f64,
    llc_hit_of_total: f64,
    bytes_hbm: u64,
    eq1_bw: f64,
    hier_bw: f64,
}

#[derive(Serialize)]
struct CacheJson {
    rows: Vec<CacheRowJson>,
}

pub fn cache_json(results: &[(ScheduleKind, SimResult)]) -> String {
    to_json(&CacheJson {
        rows: results
            .iter()
            .map(|(kind, r)| CacheRowJson {
                schedule: kind.label(),
                l2_hit: round4(r.l2_hit),
                llc_hit: round4(r.llc_hit),
                llc_hit_of_total: round4(r.llc_hit_of_total),
                bytes_hbm: r.bytes_from_hbm,
                eq1_bw: r.est_bandwidth,
                hier_bw: r.hier_bandwidth,
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct PlanJson {
    plan: String,
    feasible: bool,
    waves_per_simd: u32,
    regs_per_wave: u32,
    accum_regs_per_thread: u32,
    operand_regs_per_thread: u32,
    overhead_regs: u32,
    total_regs_per_thread: u32,
    headroom: i64,
    intensity_flops_per_byte: f64,
    vgpr_agpr_split: Option<(u32, u32)>,
}

pub fn plan_json(report: &FeasibilityReport, intensity: f64) -> String {
    to_json(&PlanJson {
        plan: report.plan.clone(),
        feasible: report.feasible,
        waves_per_simd: report.waves_per_simd,
        regs_per_wave: report.regs_per_wave,
        accum_regs_per_thread: report.accum_regs_per_thread,
        operand_regs_per_thread: report.operand_regs_per_thread,
        overhead_regs: report.overhead_regs,
        total_regs_per_thread: report.total_regs_per_thread,
        headroom: report.headroom,
        intensity_flops_per_byte: round4(intensity),
        vgpr_agpr_split: report.vgpr_agpr_split,
    })
}

#[derive(Serialize)]
struct PingpongJson {
    occupancy: f64,
    makespan: f64,
    n_events: usize,
}

pub fn pingpong_json(result: &PingPongResult) -> String {
    to_json(&PingpongJson {
        occupancy: round4(result.occupancy),
        makespan: round4(result.makespan),
        n_events: result.events.len(),
    })
}
