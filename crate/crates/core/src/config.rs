//! Structured config file: machine, instruction and layout overrides.
//!
//! ```json
//! {
//!   "machines":     { "name": { ...MachineConfig fields... } },
//!   "instructions": { "name": { ...InstrDescriptor fields... } },
//!   "layouts":      [ { ...same schema as data/layouts.json entries... } ]
//! }
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::layout::LayoutRegistry;
use crate::machine::{InstrDescriptor, InstrRegistry, MachineConfig};

#[derive(Deserialize, Default)]
struct ConfigFile {
    #[serde(default)]
    machines: BTreeMap<String, MachineConfig>,
    #[serde(default)]
    instructions: BTreeMap<String, InstrDescriptor>,
    #[serde(default)]
    layouts: Vec<serde_json::Value>,
}

/// Registries with shipped contents plus everything a config file adds.
pub struct Registries {
    pub machines: BTreeMap<String, MachineConfig>,
    pub instructions: InstrRegistry,
    pub layouts: LayoutRegistry,
}

impl Registries {
    pub fn shipped() -> Result<Self> {
        Ok(Self {
            machines: BTreeMap::new(),
            instructions: InstrRegistry::new(),
            layouts: LayoutRegistry::shipped()?,
        })
    }

    pub fn load_file(&mut self, path: &str) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_string(),
            source,
        })?;
        self.load_str(&text, path)
    }

    pub fn load_str(&mut self, text: &str, origin: &str) -> Result<()> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            reason: e.to_string(),
        })?;
        for (name, mut machine) in file.machines {
            machine.name = name.clone();
            machine.validate()?;
            self.machines.insert(name, machine);
        }
        for (name, mut descriptor) in file.instructions {
            descriptor.name = name;
            self.instructions.register(descriptor)?;
        }
        for layout in file.layouts {
            self.layouts.register_json(&layout, origin)?;
        }
        Ok(())
    }

    /// Machine lookup: config-file machines first, then shipped presets or a
    /// file path.
    pub fn machine(&self, name: &str) -> Result<MachineConfig> {
        if let Some(m) = self.machines.get(name) {
            return Ok(m.clone());
        }
        crate::machine::preset(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_registers_machines_instructions_and_layouts() {
        let mut regs = Registries::shipped().unwrap();
        let config = r#"{
            "machines": {
                "toy": {
                    "name": "toy", "n_xcd": 2, "cus_per_xcd": 4,
                    "simds_per_cu": 4, "lanes_per_wave": 64, "regs_per_simd": 512,
                    "l2_bytes_per_xcd": 65536, "llc_bytes": 524288,
                    "l2_bandwidth": 3.0, "llc_bandwidth": 1.0,
                    "l2_miss_penalty_ns": 300.0, "llc_miss_penalty_ns": 500.0
                }
            },
            "instructions": {
                "ds_read_b32": {
                    "name": "ds_read_b32", "bytes_per_lane": 4, "n_banks": 32,
                    "bank_width_bytes": 4,
                    "phases": [[
                        0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,
                        16,17,18,19,20,21,22,23,24,25,26,27,28,29,30,31,
                        32,33,34,35,36,37,38,39,40,41,42,43,44,45,46,47,
                        48,49,50,51,52,53,54,55,56,57,58,59,60,61,62,63
                    ]],
                    "required_alignment_bytes": 4
                }
            },
            "layouts": [{
                "name": "user4x16", "mfma": "4x4x16", "dtype": "fp32",
                "operand": "a", "orientation": "row_major",
                "rows": 4, "cols": 16, "contiguity": 1,
                "grid": [
                    "0:0 1:0 2:0 3:0 4:0 5:0 6:0 7:0 8:0 9:0 10:0 11:0 12:0 13:0 14:0 15:0",
                    "16:0 17:0 18:0 19:0 20:0 21:0 22:0 23:0 24:0 25:0 26:0 27:0 28:0 29:0 30:0 31:0",
                    "32:0 33:0 34:0 35:0 36:0 37:0 38:0 39:0 40:0 41:0 42:0 43:0 44:0 45:0 46:0 47:0",
                    "48:0 49:0 50:0 51:0 52:0 53:0 54:0 55:0 56:0 57:0 58:0 59:0 60:0 61:0 62:0 63:0"
                ]
            }]
        }"#;
        regs.load_str(config, "inline").unwrap();
        assert_eq!(regs.machine("toy").unwrap().n_xcd, 2);
        assert_eq!(regs.instructions.get("ds_read_b32").unwrap().n_banks, 32);
        assert_eq!(regs.layouts.get("user4x16").unwrap().rows, 4);
        // Shipped presets still resolve.
        assert_eq!(regs.machine("mi355x").unwrap().n_xcd, 8);
    }
}
