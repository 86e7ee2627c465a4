//! Scenario files.
//!
//! A scenario file is TOML. Top-level keys are the `ScenarioConfig` fields;
//! `preset = "tiny" | "default"` starts from a built-in layout and lets the
//! remaining top-level keys override individual fields. Optional tables
//! `[train]`, `[sca]`, `[bcd]` and `[eval]` tune the solvers and the
//! harness; every key in them has a default.
//!
//! ```toml
//! preset = "tiny"
//! p_max_w = 2.0
//!
//! [train]
//! total_steps = 500
//!
//! [bcd]
//! max_iters = 5
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use starnoma_core::association::MatchingOptions;
use starnoma_core::bcd::BcdOptions;
use starnoma_core::beamforming::ScaOptions;
use starnoma_core::camappo::TrainConfig;
use starnoma_core::convex::SolverOptions;
use starnoma_core::pairing::KmeansVariant;
use starnoma_core::scenario::ScenarioConfig;

use crate::error::{SimError, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaSection {
    pub epsilon: f64,
    pub max_outer: usize,
    /// Inner iteration budget of the convex solver.
    pub solver_max_iter: usize,
    pub randomization_threshold: f64,
    pub randomization_samples: usize,
}

impl Default for ScaSection {
    fn default() -> Self {
        let o = ScaOptions::default();
        Self {
            epsilon: o.epsilon,
            max_outer: o.max_outer,
            solver_max_iter: o.solver.max_iter,
            randomization_threshold: o.randomization_threshold,
            randomization_samples: o.randomization_samples,
        }
    }
}

impl ScaSection {
    pub fn options(&self) -> ScaOptions {
        ScaOptions {
            epsilon: self.epsilon,
            max_outer: self.max_outer,
            solver: SolverOptions { max_iter: self.solver_max_iter, ..SolverOptions::default() },
            randomization_threshold: self.randomization_threshold,
            randomization_samples: self.randomization_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcdSection {
    pub epsilon: f64,
    pub max_iters: usize,
    pub kmeans_variant: KmeansVariant,
}

impl Default for BcdSection {
    fn default() -> Self {
        let o = BcdOptions::default();
        Self { epsilon: o.epsilon, max_iters: o.max_iters, kmeans_variant: o.matching.kmeans_variant }
    }
}

impl BcdSection {
    pub fn options(&self) -> BcdOptions {
        BcdOptions { epsilon: self.epsilon, max_iters: self.max_iters, matching: MatchingOptions { kmeans_variant: self.kmeans_variant, ..MatchingOptions::default() } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Episodes of the untrained stochastic policy that set the baseline.
    pub baseline_episodes: usize,
    /// Steps-to-threshold target as a multiple of the baseline reward.
    pub threshold_factor: f64,
    /// Moving-average window, in episodes, for steps-to-threshold.
    pub window: usize,
    /// Timed repetitions for the inference-time column.
    pub inference_repeats: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { baseline_episodes: 20, threshold_factor: 1.2, window: 10, inference_repeats: 20 }
    }
}

/// Everything a run needs besides the CLI flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub sca: ScaSection,
    pub bcd: BcdSection,
    pub eval: EvalSection,
}

impl Settings {
    pub fn from_scenario(scenario: ScenarioConfig) -> Self {
        Self { scenario, train: TrainConfig::default(), sca: ScaSection::default(), bcd: BcdSection::default(), eval: EvalSection::default() }
    }

    /// Parses the TOML text of a scenario file.
    pub fn parse(text: &str) -> SimResult<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        let mut take = |key: &str| table.remove(key);
        let train = section::<TrainConfig>(take("train"), "train")?;
        let sca = section::<ScaSection>(take("sca"), "sca")?;
        let bcd = section::<BcdSection>(take("bcd"), "bcd")?;
        let eval = section::<EvalSection>(take("eval"), "eval")?;

        let mut scenario_table = match table.remove("preset") {
            Some(toml::Value::String(name)) => table_of(&preset(&name)?)?,
            Some(other) => return Err(SimError::Config(format!("preset must be a string, got {other}"))),
            None => toml::Table::new(),
        };
        let known = table_of(&ScenarioConfig::tiny())?;
        for (k, v) in table {
            if !known.contains_key(&k) {
                return Err(SimError::Config(format!("unknown scenario key `{k}`")));
            }
            scenario_table.insert(k, v);
        }
        let scenario: ScenarioConfig = toml::Value::Table(scenario_table).try_into().map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        scenario.validate()?;
        let train = TrainConfig { seed: scenario.seed, ..train };
        train.validate()?;
        Ok(Self { scenario, train, sca, bcd, eval })
    }

    /// Resolves `--scenario`: a preset name or a file path.
    pub fn load(source: &str) -> SimResult<Self> {
        if let Ok(cfg) = preset(source) {
            return Ok(Self::from_scenario(cfg));
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::parse(&text)
    }

    /// Full TOML form; `Settings::parse` reads it back unchanged.
    pub fn to_toml(&self) -> SimResult<String> {
        let mut table = table_of(&self.scenario)?;
        table.insert("train".into(), toml::Value::Table(table_of(&self.train)?));
        table.insert("sca".into(), toml::Value::Table(table_of(&self.sca)?));
        table.insert("bcd".into(), toml::Value::Table(table_of(&self.bcd)?));
        table.insert("eval".into(), toml::Value::Table(table_of(&self.eval)?));
        toml::to_string(&table).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self.train.seed = seed;
        self
    }
}

pub fn preset(name: &str) -> SimResult<ScenarioConfig> {
    match name {
        "tiny" => Ok(ScenarioConfig::tiny()),
        "default" => Ok(ScenarioConfig::default_layout()),
        _ => Err(SimError::Config(format!("unknown preset `{name}` (expected tiny or default)"))),
    }
}

fn section<T: Default + for<'de> Deserialize<'de>>(value: Option<toml::Value>, name: &str) -> SimResult<T> {
    match value {
        None => Ok(T::default()),
        Some(v) => v.try_into().map_err(|e: toml::de::Error| SimError::Config(format!("[{name}]: {e}"))),
    }
}

fn table_of<T: Serialize>(value: &T) -> SimResult<toml::Table> {
    match toml::Value::try_from(value).map_err(|e| SimError::Config(e.to_string()))? {
        toml::Value::Table(t) => Ok(t),
        other => Err(SimError::Config(format!("expected a table, got {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut s = Settings::from_scenario(ScenarioConfig::default_layout());
        s.train.max_grad_norm = None;
        s.train.total_steps = 77;
        s.sca.max_outer = 3;
        let text = s.to_toml().unwrap();
        assert_eq!(Settings::parse(&text).unwrap(), s);
    }

    #[test]
    fn preset_with_overrides() {
        let s = Settings::parse("preset = \"tiny\"\np_max_w = 2.0\nseed = 9\n[train]\ntotal_steps = 40\n").unwrap();
        assert_eq!(s.scenario, ScenarioConfig { p_max_w: 2.0, seed: 9, ..ScenarioConfig::tiny() });
        assert_eq!(s.train.total_steps, 40);
        assert_eq!(s.train.seed, 9);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Settings::parse("preset = \"tiny\"\nwarp = 1\n").is_err());
        assert!(Settings::parse("preset = \"huge\"\n").is_err());
        assert!(Settings::parse("preset = \"tiny\"\np_max_w = -1.0\n").is_err());
        assert!(Settings::parse("preset = \"tiny\"\n[bcd]\nsweeps = 2\n").is_err());
        assert!(Settings::parse("n_ues = 3\n").is_err());
        assert!(Settings::parse("preset = \"tiny\"\n[train]\nlr = \"fast\"\n").is_err());
    }
}
