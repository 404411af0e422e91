//! Hardware constants: chiplet topology, cache geometry and the per-instruction
//! phase/bank descriptors that the conflict analyzer and solvers consume.
//!
//! All values are immutable after construction and safe to share across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lanes per wave on CDNA hardware.
pub const LANES_PER_WAVE: u32 = 64;

/// Topology and cache geometry of a target GPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub name: String,
    /// Accelerator complex dies (chiplets).
    pub n_xcd: u32,
    /// Compute units per XCD.
    pub cus_per_xcd: u32,
    pub simds_per_cu: u32,
    pub lanes_per_wave: u32,
    /// 32-bit registers per SIMD, statically split across resident waves.
    pub regs_per_simd: u32,
    pub l2_bytes_per_xcd: u64,
    pub llc_bytes: u64,
    /// Aggregate L2 bandwidth in bytes/s (modeling constant, roughly 3x the LLC).
    pub l2_bandwidth: f64,
    /// Aggregate LLC bandwidth in bytes/s.
    pub llc_bandwidth: f64,
    pub l2_miss_penalty_ns: f64,
    pub llc_miss_penalty_ns: f64,
}

impl MachineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_xcd < 1 || self.cus_per_xcd < 1 {
            return Err(Error::InvalidConfig(format!(
                "machine `{}` needs at least one XCD and one CU per XCD",
                self.name
            )));
        }
        if self.lanes_per_wave != LANES_PER_WAVE {
            return Err(Error::InvalidConfig(format!(
                "machine `{}` has {} lanes per wave; the model assumes {}",
                self.name, self.lanes_per_wave, LANES_PER_WAVE
            )));
        }
        if self.simds_per_cu == 0 || self.regs_per_simd == 0 {
            return Err(Error::InvalidConfig(format!(
                "machine `{}` has zero SIMDs or registers",
                self.name
            )));
        }
        Ok(())
    }

    pub fn total_cus(&self) -> u32 {
        self.n_xcd * self.cus_per_xcd
    }
}

/// CDNA4-class part: 8 XCDs of 32 CUs, 4 MiB L2 per XCD.
pub fn mi355x() -> MachineConfig {
    MachineConfig {
        name: "mi355x".to_string(),
        n_xcd: 8,
        cus_per_xcd: 32,
        simds_per_cu: 4,
        lanes_per_wave: 64,
        regs_per_simd: 512,
        l2_bytes_per_xcd: 4 * 1024 * 1024,
        llc_bytes: 256 * 1024 * 1024,
        l2_bandwidth: 18.0e12,
        llc_bandwidth: 6.0e12,
        l2_miss_penalty_ns: 300.0,
        llc_miss_penalty_ns: 500.0,
    }
}

/// CDNA3-class part: 38 CUs per XCD.
pub fn mi325x() -> MachineConfig {
    MachineConfig {
        name: "mi325x".to_string(),
        cus_per_xcd: 38,
        ..mi355x()
    }
}

/// Looks up a shipped preset, or loads a machine config from a JSON file path.
pub fn preset(name: &str) -> Result<MachineConfig> {
    let config = match name {
        "mi355x" => mi355x(),
        "mi325x" => mi325x(),
        path if path.contains('.') || path.contains('/') => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_string(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_string(),
                reason: e.to_string(),
            })?
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    config.validate()?;
    Ok(config)
}

/// Element type of a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Fp32,
    Bf16,
    Fp16,
    Fp8,
    Fp6,
}

impl DType {
    pub fn bits_per_element(self) -> u32 {
        match self {
            DType::Fp32 => 32,
            DType::Bf16 | DType::Fp16 => 16,
            DType::Fp8 => 8,
            DType::Fp6 => 6,
        }
    }

    /// Byte size of `n` consecutive elements, or None when the span is not byte-aligned.
    pub fn span_bytes(self, n: u32) -> Option<u32> {
        let bits = self.bits_per_element() * n;
        bits.is_multiple_of(8).then_some(bits / 8)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fp32" => Ok(DType::Fp32),
            "bf16" => Ok(DType::Bf16),
            "fp16" => Ok(DType::Fp16),
            "fp8" => Ok(DType::Fp8),
            "fp6" => Ok(DType::Fp6),
            other => Err(Error::InvalidInput(format!("unknown dtype `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::Fp32 => "fp32",
            DType::Bf16 => "bf16",
            DType::Fp16 => "fp16",
            DType::Fp8 => "fp8",
            DType::Fp6 => "fp6",
        }
    }
}

/// Banking and phase behavior of one LDS memory instruction.
///
/// Phases partition the 64 lanes; only lanes of the same phase access LDS
/// concurrently, so conflicts are counted within a phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrDescriptor {
    pub name: String,
    pub bytes_per_lane: u32,
    pub n_banks: u32,
    pub bank_width_bytes: u32,
    /// Lane sets, one per phase, in execution order.
    pub phases: Vec<Vec<u32>>,
    pub required_alignment_bytes: u32,
}

impl InstrDescriptor {
    /// Bank index of a byte address: (addr / bank_width) mod n_banks.
    pub fn bank_of(&self, addr: u32) -> u32 {
        (addr / self.bank_width_bytes) % self.n_banks
    }

    /// Word index of a byte address (bank-width granules).
    pub fn word_of(&self, addr: u32) -> u32 {
        addr / self.bank_width_bytes
    }

    pub fn phase_of_lane(&self, lane: u32) -> Option<usize> {
        self.phases.iter().position(|p| p.contains(&lane))
    }

    /// Checks that the phase sets are disjoint and cover lanes 0..64 exactly.
    pub fn validate(&self) -> Result<()> {
        if self.bytes_per_lane == 0 || self.n_banks == 0 || self.bank_width_bytes == 0 {
            return Err(Error::InvalidConfig(format!(
                "instruction `{}` has zero-sized geometry",
                self.name
            )));
        }
        let mut seen = [false; LANES_PER_WAVE as usize];
        for phase in &self.phases {
            for &lane in phase {
                if lane >= LANES_PER_WAVE {
                    return Err(Error::InvalidConfig(format!(
                        "instruction `{}` names lane {} outside 0..{}",
                        self.name, lane, LANES_PER_WAVE
                    )));
                }
                if seen[lane as usize] {
                    return Err(Error::InvalidConfig(format!(
                        "instruction `{}` assigns lane {} to two phases",
                        self.name, lane
                    )));
                }
                seen[lane as usize] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig(format!(
                "instruction `{}` phases do not cover all 64 lanes",
                self.name
            )));
        }
        Ok(())
    }
}

fn lanes(ranges: &[(u32, u32)]) -> Vec<u32> {
    ranges.iter().flat_map(|&(a, b)| a..=b).collect()
}

/// The five shipped LDS instruction descriptors.
///
/// The four `ds_read_b128`/`ds_read_b96`/`ds_write_b64`/`ds_read_b64` phase
/// partitions and bank counts are the solver-recovered values for CDNA4.
/// `ds_read_b64_tr_b16` executes in two sequential 32-lane phases; its bank
/// width is modeled as 4 bytes (one bank spanning two 16-bit cells).
pub fn shipped_instructions() -> Vec<InstrDescriptor> {
    vec![
        InstrDescriptor {
            name: "ds_read_b128".to_string(),
            bytes_per_lane: 16,
            n_banks: 64,
            bank_width_bytes: 4,
            phases: vec![
                lanes(&[(0, 3), (12, 15), (20, 27)]),
                lanes(&[(4, 11), (16, 19), (28, 31)]),
                lanes(&[(32, 35), (44, 47), (52, 59)]),
                lanes(&[(36, 43), (48, 51), (60, 63)]),
            ],
            required_alignment_bytes: 16,
        },
        InstrDescriptor {
            name: "ds_read_b96".to_string(),
            bytes_per_lane: 12,
            n_banks: 32,
            bank_width_bytes: 4,
            phases: vec![
                lanes(&[(0, 3), (20, 23)]),
                lanes(&[(4, 7), (16, 19)]),
                lanes(&[(8, 11), (28, 31)]),
                lanes(&[(12, 15), (24, 27)]),
                lanes(&[(32, 35), (52, 55)]),
                lanes(&[(36, 39), (48, 51)]),
                lanes(&[(40, 43), (60, 63)]),
                lanes(&[(44, 47), (56, 59)]),
            ],
            required_alignment_bytes: 4,
        },
        InstrDescriptor {
            name: "ds_write_b64".to_string(),
            bytes_per_lane: 8,
            n_banks: 32,
            bank_width_bytes: 4,
            phases: vec![
                lanes(&[(0, 15)]),
                lanes(&[(16, 31)]),
                lanes(&[(32, 47)]),
                lanes(&[(48, 63)]),
            ],
            required_alignment_bytes: 4,
        },
        InstrDescriptor {
            name: "ds_read_b64".to_string(),
            bytes_per_lane: 8,
            n_banks: 64,
            bank_width_bytes: 4,
            phases: vec![lanes(&[(0, 31)]), lanes(&[(32, 63)])],
            required_alignment_bytes: 4,
        },
        InstrDescriptor {
            name: "ds_read_b64_tr_b16".to_string(),
            bytes_per_lane: 8,
            n_banks: 64,
            bank_width_bytes: 4,
            phases: vec![lanes(&[(0, 31)]), lanes(&[(32, 63)])],
            required_alignment_bytes: 4,
        },
    ]
}

/// Looks up a shipped descriptor by name.
pub fn instr(name: &str) -> Result<InstrDescriptor> {
    shipped_instructions()
        .into_iter()
        .find(|d| d.name == name)
        .ok_or_else(|| Error::UnknownInstruction(name.to_string()))
}

/// Instruction registry: shipped descriptors plus user-registered ones.
#[derive(Debug, Clone)]
pub struct InstrRegistry {
    descriptors: Vec<InstrDescriptor>,
}

impl Default for InstrRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl InstrRegistry {
    pub fn new() -> Self {
        Self {
            descriptors: shipped_instructions(),
        }
    }

    pub fn register(&mut self, descriptor: InstrDescriptor) -> Result<()> {
        descriptor.validate()?;
        // User descriptors shadow shipped ones of the same name.
        self.descriptors.retain(|d| d.name != descriptor.name);
        self.descriptors.push(descriptor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&InstrDescriptor> {
        self.descriptors
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::UnknownInstruction(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.descriptors.iter().map(|d| d.name.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_mi355x_carries_cdna4_constants() {
        let m = preset("mi355x").unwrap();
        assert_eq!(m.n_xcd, 8);
        assert_eq!(m.cus_per_xcd, 32);
        assert_eq!(m.total_cus(), 256);
        assert_eq!(m.l2_bytes_per_xcd, 4 * 1024 * 1024);
        assert_eq!(m.regs_per_simd, 512);
        assert_eq!(m.lanes_per_wave, 64);
        assert_eq!(m.simds_per_cu, 4);
        assert_eq!(m.l2_miss_penalty_ns, 300.0);
        assert_eq!(m.llc_miss_penalty_ns, 500.0);
    }

    #[test]
    fn preset_mi325x_has_38_cus_per_xcd() {
        let m = preset("mi325x").unwrap();
        assert_eq!(m.cus_per_xcd, 38);
        assert_eq!(m.n_xcd, 8);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(matches!(preset("unknown"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn preset_loads_from_json_file() {
        let dir = std::env::temp_dir().join("cdnasim_machine_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("custom.json");
        let mut m = mi355x();
        m.name = "custom".into();
        m.n_xcd = 2;
        std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
        let loaded = preset(path.to_str().unwrap()).unwrap();
        assert_eq!(loaded.n_xcd, 2);
        assert_eq!(loaded.name, "custom");
    }

    #[test]
    fn shipped_phase_partitions_are_partitions() {
        for d in shipped_instructions() {
            d.validate().unwrap();
        }
    }

    #[test]
    fn phase_bank_table_matches_solver_recovered_values() {
        let b128 = instr("ds_read_b128").unwrap();
        assert_eq!(b128.n_banks, 64);
        assert_eq!(b128.required_alignment_bytes, 16);
        assert_eq!(
            b128.phases,
            vec![
                lanes(&[(0, 3), (12, 15), (20, 27)]),
                lanes(&[(4, 11), (16, 19), (28, 31)]),
                lanes(&[(32, 35), (44, 47), (52, 59)]),
                lanes(&[(36, 43), (48, 51), (60, 63)]),
            ]
        );

        let b96 = instr("ds_read_b96").unwrap();
        assert_eq!(b96.n_banks, 32);
        assert_eq!(b96.phases.len(), 8);
        assert!(b96.phases.iter().all(|p| p.len() == 8));
        assert_eq!(b96.phases[0], lanes(&[(0, 3), (20, 23)]));

        let w64 = instr("ds_write_b64").unwrap();
        assert_eq!(w64.n_banks, 32);
        assert_eq!(
            w64.phases,
            vec![
                (0..16).collect::<Vec<_>>(),
                (16..32).collect::<Vec<_>>(),
                (32..48).collect::<Vec<_>>(),
                (48..64).collect::<Vec<_>>(),
            ]
        );

        let r64 = instr("ds_read_b64").unwrap();
        assert_eq!(r64.n_banks, 64);
        assert_eq!(
            r64.phases,
            vec![(0..32).collect::<Vec<_>>(), (32..64).collect::<Vec<_>>()]
        );

        let tr = instr("ds_read_b64_tr_b16").unwrap();
        assert_eq!(tr.phases.len(), 2);
        assert_eq!(tr.phases[0], (0..32).collect::<Vec<_>>());
        assert_eq!(tr.phases[1], (32..64).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_instruction_is_rejected() {
        assert!(matches!(
            instr("ds_read_b32"),
            Err(Error::UnknownInstruction(_))
        ));
    }

    #[test]
    fn registry_accepts_user_descriptor() {
        let mut reg = InstrRegistry::new();
        let custom = InstrDescriptor {
            name: "ds_read_b32".to_string(),
            bytes_per_lane: 4,
            n_banks: 32,
            bank_width_bytes: 4,
            phases: vec![(0..64).collect()],
            required_alignment_bytes: 4,
        };
        reg.register(custom).unwrap();
        assert_eq!(reg.get("ds_read_b32").unwrap().bytes_per_lane, 4);
        // Shipped names still resolve.
        assert!(reg.get("ds_read_b128").is_ok());
    }

    #[test]
    fn registry_rejects_non_partition() {
        let mut reg = InstrRegistry::new();
        let bad = InstrDescriptor {
            name: "bad".to_string(),
            bytes_per_lane: 4,
            n_banks: 32,
            bank_width_bytes: 4,
            phases: vec![(0..32).collect()],
            required_alignment_bytes: 4,
        };
        assert!(reg.register(bad).is_err());
    }

    #[test]
    fn fp6_span_bytes_requires_byte_alignment() {
        assert_eq!(DType::Fp6.span_bytes(32), Some(24));
        assert_eq!(DType::Fp6.span_bytes(16), Some(12));
        assert_eq!(DType::Fp6.span_bytes(3), None);
        assert_eq!(DType::Bf16.span_bytes(8), Some(16));
    }
}
