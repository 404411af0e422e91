//! Empirical phase and bank solvers against a pluggable conflict oracle,
//! recovering InstrDescriptor contents from black-box behavior.
//!
//! The phase solver probes every pair of lanes on the same bank with distinct
//! words; a conflict means the two lanes share a phase. The bank solver fixes
//! one lane on bank zero and roves a second lane outward; the first stride
//! that re-conflicts equals the bank count.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::machine::{InstrDescriptor, LANES_PER_WAVE};

/// Pairwise conflict probe: did issuing `instr` with `lane_a` at `addr_a` and
/// `lane_b` at `addr_b` observe a bank conflict?
pub trait ConflictOracle {
    fn probe(&self, lane_a: u32, addr_a: u32, lane_b: u32, addr_b: u32) -> Result<bool>;
}

/// Oracle backed by the shipped LDS model: a conflict occurs when the two
/// lanes share a phase and their addresses hit the same bank with different
/// words.
pub struct BuiltinOracle<'a> {
    descriptor: &'a InstrDescriptor,
}

impl<'a> BuiltinOracle<'a> {
    pub fn new(descriptor: &'a InstrDescriptor) -> Self {
        Self { descriptor }
    }
}

impl ConflictOracle for BuiltinOracle<'_> {
    fn probe(&self, lane_a: u32, addr_a: u32, lane_b: u32, addr_b: u32) -> Result<bool> {
        let d = self.descriptor;
        let same_phase = d.phase_of_lane(lane_a) == d.phase_of_lane(lane_b);
        Ok(same_phase
            && d.bank_of(addr_a) == d.bank_of(addr_b)
            && d.word_of(addr_a) != d.word_of(addr_b))
    }
}

/// Oracle replaying recorded probes from a trace table. Lookup is symmetric
/// in the two lanes; a missing probe is an error so silent guesses cannot
/// contaminate a solve.
pub struct TraceOracle {
    probes: BTreeMap<(u32, u32, u32, u32), bool>,
}

impl TraceOracle {
    /// Parses CSV rows `lane_a,addr_a,lane_b,addr_b,conflict` (header optional).
    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let mut probes = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("lane_a") || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    reason: format!("line {}: expected 5 fields", lineno + 1),
                });
            }
            let num = |s: &str| -> Result<u32> {
                s.parse().map_err(|_| Error::Parse {
                    path: origin.to_string(),
                    reason: format!("line {}: bad number `{s}`", lineno + 1),
                })
            };
            let conflict = match fields[4] {
                "0" | "false" => false,
                "1" | "true" => true,
                other => {
                    return Err(Error::Parse {
                        path: origin.to_string(),
                        reason: format!("line {}: bad conflict flag `{other}`", lineno + 1),
                    })
                }
            };
            probes.insert(
                (
                    num(fields[0])?,
                    num(fields[1])?,
                    num(fields[2])?,
                    num(fields[3])?,
                ),
                conflict,
            );
        }
        Ok(Self { probes })
    }

    /// Records the shipped model's answers for the probes `solve_phases` and
    /// `solve_banks` will ask, producing a replayable trace.
    pub fn record_builtin(descriptor: &InstrDescriptor, options: &SolverOptions) -> Self {
        let oracle = BuiltinOracle::new(descriptor);
        let mut probes = BTreeMap::new();
        for a in 0..LANES_PER_WAVE {
            for b in (a + 1)..LANES_PER_WAVE {
                let key = (a, 0, b, options.probe_stride_bytes);
                let conflict = oracle.probe(key.0, key.1, key.2, key.3).unwrap();
                probes.insert(key, conflict);
            }
        }
        // Bank-solver probes: the solver roves the second lane of the first
        // two-lane phase against its first.
        if let Some(phase) = descriptor.phases.iter().find(|p| p.len() >= 2) {
            let (fixed, rover) = (phase[0], phase[1]);
            for stride in 1..=options.probe_horizon {
                let addr_b = stride * descriptor.bank_width_bytes;
                let key = (fixed, 0, rover, addr_b);
                let conflict = oracle.probe(key.0, key.1, key.2, key.3).unwrap();
                probes.insert(key, conflict);
            }
        }
        Self { probes }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lane_a,addr_a,lane_b,addr_b,conflict\n");
        for (&(a, aa, b, ab), &c) in &self.probes {
            out.push_str(&format!("{a},{aa},{b},{ab},{}\n", u8::from(c)));
        }
        out
    }
}

impl ConflictOracle for TraceOracle {
    fn probe(&self, lane_a: u32, addr_a: u32, lane_b: u32, addr_b: u32) -> Result<bool> {
        self.probes
            .get(&(lane_a, addr_a, lane_b, addr_b))
            .or_else(|| self.probes.get(&(lane_b, addr_b, lane_a, addr_a)))
            .copied()
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "trace has no probe for lanes {lane_a}/{lane_b} at {addr_a}/{addr_b}"
                ))
            })
    }
}

/// A whole-wave experiment: per-lane byte addresses (None = lane inactive),
/// answering with the observed worst-case conflict degree (1 = none).
pub trait WaveOracle {
    fn run_wave(&self, addrs: &[Option<u32>; 64]) -> Result<u32>;
}

/// Adapts a whole-wave oracle to the pairwise probe interface by masking all
/// lanes except the probed two.
pub struct PairwiseFromWave<W: WaveOracle>(pub W);

impl<W: WaveOracle> ConflictOracle for PairwiseFromWave<W> {
    fn probe(&self, lane_a: u32, addr_a: u32, lane_b: u32, addr_b: u32) -> Result<bool> {
        let mut addrs = [None; 64];
        addrs[lane_a as usize] = Some(addr_a);
        addrs[lane_b as usize] = Some(addr_b);
        Ok(self.0.run_wave(&addrs)? > 1)
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Byte distance between the two probe addresses when testing same-bank
    /// behavior. Must be a multiple of every plausible bank span
    /// (n_banks x bank_width); 1024 covers up to 256 four-byte banks.
    pub probe_stride_bytes: u32,
    /// Max strides the bank solver roves before giving up.
    pub probe_horizon: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            probe_stride_bytes: 1024,
            probe_horizon: 512,
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Recovers the phase partition of lanes 0..64 from pairwise probes.
///
/// Positive probes are unioned; the complement is then checked, so a conflict
/// relation that is not an equivalence surfaces as an error carrying a
/// violating lane triple instead of a silently wrong partition.
#[allow(clippy::needless_range_loop)]
pub fn solve_phases(oracle: &dyn ConflictOracle, options: &SolverOptions) -> Result<Vec<Vec<u32>>> {
    let n = LANES_PER_WAVE as usize;
    let addr_a = 0;
    let addr_b = options.probe_stride_bytes;
    let mut conflict = vec![vec![false; n]; n];
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        for b in (a + 1)..n {
            let c = oracle.probe(a as u32, addr_a, b as u32, addr_b)?;
            conflict[a][b] = c;
            conflict[b][a] = c;
            if c {
                uf.union(a, b);
            }
        }
    }
    // Every same-class pair must conflict and every cross-class pair must not.
    for a in 0..n {
        for b in (a + 1)..n {
            let same_class = uf.find(a) == uf.find(b);
            if same_class != conflict[a][b] {
                // Locate a lane linking a and b to report the triple.
                let witness = (0..n)
                    .find(|&c| c != a && c != b && conflict[a][c] && conflict[c][b])
                    .unwrap_or(a);
                return Err(Error::InconsistentOracle {
                    a: a as u32,
                    b: witness as u32,
                    c: b as u32,
                });
            }
        }
    }
    let mut classes: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for lane in 0..n {
        classes.entry(uf.find(lane)).or_default().push(lane as u32);
    }
    // Classes come out ordered by their smallest lane.
    Ok(classes.into_values().collect())
}

/// Recovers the bank count: smallest positive stride (in bank-width units) at
/// which a roving lane re-conflicts with a fixed lane on bank zero.
pub fn solve_banks(
    oracle: &dyn ConflictOracle,
    bank_width_bytes: u32,
    phases: &[Vec<u32>],
    options: &SolverOptions,
) -> Result<u32> {
    let phase = phases
        .iter()
        .find(|p| p.len() >= 2)
        .ok_or_else(|| Error::InvalidInput("no phase holds two lanes".to_string()))?;
    let (fixed, rover) = (phase[0], phase[1]);
    for stride in 1..=options.probe_horizon {
        if oracle.probe(fixed, 0, rover, stride * bank_width_bytes)? {
            return Ok(stride);
        }
    }
    Err(Error::ProbeHorizonExhausted {
        horizon: options.probe_horizon,
    })
}
