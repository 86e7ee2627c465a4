//! Policy checkpoints.
//!
//! Little-endian layout:
//!
//! | field        | type            |
//! |--------------|-----------------|
//! | magic        | `b"SNCK"`       |
//! | version      | u32 (= 1)       |
//! | seed         | u64             |
//! | config hash  | u64 (FNV-1a)    |
//! | agents       | u32             |
//!
//! then per agent `obs`, `hidden`, `act` as u32 followed by
//! `NetworkShape::n_params` f64 values.

use std::path::Path;

use starnoma_core::camappo::{NetworkShape, Policy};

use crate::error::{SimError, SimResult};
use crate::tables::write_atomic;

const MAGIC: &[u8; 4] = b"SNCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub config_hash: u64,
    pub nets: Vec<(NetworkShape, Vec<f64>)>,
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Checkpoint {
    pub fn of(policy: &Policy, seed: u64, config_hash: u64) -> Self {
        Self { seed, config_hash, nets: policy.agents.iter().map(|a| (a.net.shape, a.net.params.clone())).collect() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for (shape, params) in &self.nets {
            for d in [shape.obs, shape.hidden, shape.act] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for p in params {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> SimResult<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(SimError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(SimError::Checkpoint(format!("unsupported version {version}")));
        }
        let seed = r.u64()?;
        let config_hash = r.u64()?;
        let n = r.u32()? as usize;
        let mut nets = Vec::with_capacity(n);
        for _ in 0..n {
            let shape = NetworkShape { obs: r.u32()? as usize, hidden: r.u32()? as usize, act: r.u32()? as usize };
            let params = (0..shape.n_params()).map(|_| r.u64().map(f64::from_bits)).collect::<SimResult<Vec<f64>>>()?;
            nets.push((shape, params));
        }
        if r.pos != bytes.len() {
            return Err(SimError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { seed, config_hash, nets })
    }

    pub fn save(&self, path: &Path) -> SimResult<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> SimResult<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| SimError::io(path, e))?)
    }

    /// Copies the parameters into `policy`, whose agent shapes must match.
    pub fn restore(&self, policy: &mut Policy) -> SimResult<()> {
        if policy.agents.len() != self.nets.len() {
            return Err(SimError::Checkpoint(format!("{} agents stored, policy has {}", self.nets.len(), policy.agents.len())));
        }
        for (agent, (shape, params)) in policy.agents.iter_mut().zip(&self.nets) {
            if agent.net.shape != *shape {
                return Err(SimError::Checkpoint(format!("shape mismatch: stored {shape:?}, policy {:?}", agent.net.shape)));
            }
            agent.net.params.clone_from(params);
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> SimResult<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| SimError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> SimResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> SimResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use starnoma_core::camappo::{BeamEnv, TrainConfig};
    use starnoma_core::scenario::ScenarioConfig;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn round_trip_restores_policy() {
        let env = BeamEnv::new(ScenarioConfig::tiny(), 10, 0).unwrap();
        let cfg = TrainConfig { hidden: 8, ..TrainConfig::default() };
        let a = Policy::new(&cfg, &env).unwrap();
        let ck = Checkpoint::of(&a, 4, 99);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);

        let mut b = Policy::new(&TrainConfig { seed: 1, ..cfg }, &env).unwrap();
        assert_ne!(a.agents[0].net.params, b.agents[0].net.params);
        back.restore(&mut b).unwrap();
        assert_eq!(a.agents[0].net.params, b.agents[0].net.params);

        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
