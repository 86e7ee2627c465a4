//! `run`: train or solve, evaluate through BCD, write the result tables.
//!
//! Each `(P_max, seed)` pair is one run on the instance fixed by the scenario
//! with that seed (UE drop and channels). Policy algorithms are first trained
//! on randomized episodes, then their mean action serves as the beam block
//! of BCD on the instance. `ca` uses SCA as the beam block. Power sweeps
//! run in ascending order; for `ca`, the previous power's solution, scaled
//! to the new budget, competes with the fresh initialization as the BCD
//! start, so the reported sum rate cannot drop as power grows.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use starnoma_core::bcd::{bcd_optimize, initial_state, BcdOutcome, BeamProvider};
use starnoma_core::beamforming::{sca_optimize, BeamProblem};
use starnoma_core::camappo::{observe, run_episodes, steps_to_threshold, train_with_observer, Algorithm, BeamEnv, ImitationProvider, NoImitation, Policy, ScaImitation};
use starnoma_core::channel::{draw_channels, ChannelState};
use starnoma_core::noma::{AssignmentState, BeamformingState};
use starnoma_core::scenario::{build_topology, derive_adjacency, ScenarioConfig};
use starnoma_core::seeded_rng;

use crate::checkpoint::{fnv1a, Checkpoint};
use crate::config::Settings;
use crate::dump::write_channels;
use crate::error::{SimError, SimResult};
use crate::tables::{self, rate_rows, BcdRow, ScaRow, SummaryRow, TrainingRow};

pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Algo {
    Camappo,
    Mappo,
    Ppo,
    /// SCA inside BCD, no learning.
    Ca,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Camappo => "camappo",
            Algo::Mappo => "mappo",
            Algo::Ppo => "ppo",
            Algo::Ca => "ca",
        }
    }

    fn learner(self) -> Option<Algorithm> {
        match self {
            Algo::Camappo => Some(Algorithm::Camappo),
            Algo::Mappo => Some(Algorithm::Mappo),
            Algo::Ppo => Some(Algorithm::Ppo),
            Algo::Ca => None,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Preset name or scenario file path.
    pub scenario: String,
    pub algorithm: Algo,
    pub seeds: Vec<u64>,
    /// `P_max` values in watts; empty means the scenario's own value.
    pub power_sweep: Vec<f64>,
    pub out: PathBuf,
    pub force: bool,
    /// Overrides `[train] total_steps`.
    pub train_steps: Option<usize>,
    pub dump_channels: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> SimResult<()> {
        if self.seeds.is_empty() {
            return Err(SimError::Config("at least one seed is required".into()));
        }
        if let Some(p) = self.power_sweep.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(SimError::Config(format!("power sweep values must be positive, got {p}")));
        }
        if self.train_steps == Some(0) {
            return Err(SimError::Config("training budget must be positive".into()));
        }
        Ok(())
    }
}

fn run_stem(algo: Algo, p: f64, seed: u64) -> String {
    format!("{algo}_p{p}_s{seed}")
}

struct Instance {
    config: ScenarioConfig,
    channels: ChannelState,
    adjacency: starnoma_core::scenario::AdjacencyIndicators,
}

impl Instance {
    fn new(config: ScenarioConfig) -> SimResult<Self> {
        let topology = build_topology(&config)?;
        let adjacency = derive_adjacency(&topology);
        let channels = draw_channels(&topology, &adjacency, &config, &mut seeded_rng(config.seed).substream("channels", 0));
        Ok(Self { config, channels, adjacency })
    }

    fn problem(&self) -> BeamProblem<'_> {
        BeamProblem { channels: &self.channels, adjacency: &self.adjacency, p_max: self.config.p_max_w, r_min: self.config.r_min }
    }
}

/// Scales every active beam by `sqrt(p_new / p_old)`.
fn rescale(beams: &BeamformingState, p_old: f64, p_new: f64) -> BeamformingState {
    let s = (p_new / p_old).sqrt();
    BeamformingState { omega: beams.omega.iter().map(|ap| ap.iter().map(|w| w.scale(s)).collect()).collect(), star: beams.star.clone() }
}

struct RunResult {
    row: SummaryRow,
    solution: (AssignmentState, BeamformingState),
}

/// Runs the whole campaign and writes `summary.csv` last.
pub fn run(spec: &ExperimentSpec, settings: &Settings) -> SimResult<Vec<SummaryRow>> {
    spec.validate()?;
    let summary_path = spec.out.join(SUMMARY_FILE);
    if summary_path.exists() && !spec.force {
        return Err(SimError::OutputExists(summary_path));
    }
    std::fs::create_dir_all(&spec.out).map_err(|e| SimError::io(&spec.out, e))?;

    let mut powers = if spec.power_sweep.is_empty() { vec![settings.scenario.p_max_w] } else { spec.power_sweep.clone() };
    powers.sort_by(f64::total_cmp);
    powers.dedup();

    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let mut previous: Option<(f64, BeamformingState)> = None;
        for &p in &powers {
            let config = ScenarioConfig { p_max_w: p, seed, ..settings.scenario.clone() };
            let stem = spec.out.join(run_stem(spec.algorithm, p, seed));
            let result = run_one(spec, settings, config, &stem, previous.as_ref())?;
            previous = Some((p, result.solution.1));
            rows.push(result.row);
        }
    }
    tables::write_table(&summary_path, &rows, &tables::SUMMARY_HEADER)?;
    Ok(rows)
}

fn sibling(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_one(spec: &ExperimentSpec, settings: &Settings, config: ScenarioConfig, stem: &Path, warm: Option<&(f64, BeamformingState)>) -> SimResult<RunResult> {
    let started = Instant::now();
    let seed = config.seed;
    let instance = Instance::new(config)?;
    let problem = instance.problem();
    if spec.dump_channels {
        write_channels(&sibling(stem, "_channels.csv"), &instance.channels)?;
    }
    let bcd_opts = settings.bcd.options();
    let mut rng = seeded_rng(seed).substream("bcd", 0);
    let fresh = initial_state(&instance.config, &problem, &bcd_opts, &mut rng)?;

    let (outcome, steps, inference_s) = match spec.algorithm.learner() {
        None => {
            let sca = settings.sca.options();
            let start = match warm {
                Some((p_old, beams)) => {
                    let scaled = rescale(beams, *p_old, instance.config.p_max_w);
                    let warm_ev = problem.evaluate(&fresh.0, &scaled);
                    if warm_ev.xi >= problem.evaluate(&fresh.0, &fresh.1).xi {
                        (fresh.0.clone(), scaled)
                    } else {
                        fresh.clone()
                    }
                }
                None => fresh.clone(),
            };
            let timer = Instant::now();
            let a = problem.evaluate(&start.0, &start.1).assignment;
            sca_optimize(&problem, &a, &start.1, &sca, &mut seeded_rng(seed).substream("timing", 0))?;
            let inference_s = timer.elapsed().as_secs_f64();
            let outcome = bcd_optimize(&instance.config, &instance.channels, &instance.adjacency, BeamProvider::Sca(sca), start, &bcd_opts, &mut rng)?;
            write_sca_trace(&sibling(stem, "_sca.csv"), &outcome)?;
            (outcome, -1, inference_s)
        }
        Some(algorithm) => {
            let mut train_cfg = settings.train;
            train_cfg.algorithm = algorithm;
            train_cfg.seed = seed;
            if let Some(n) = spec.train_steps {
                train_cfg.total_steps = n;
            }
            let policy_seed_env = BeamEnv::new(instance.config.clone(), train_cfg.episode_len, seed)?;
            let untrained = Policy::new(&train_cfg, &policy_seed_env)?;
            let mut baseline_env = BeamEnv::new(instance.config.clone(), train_cfg.episode_len, seed ^ 0x5eed_ba5e)?;
            let baseline = run_episodes(&untrained, &mut baseline_env, settings.eval.baseline_episodes, Some(&mut seeded_rng(seed).substream("baseline", 0)))?;
            let baseline_mean = if baseline.is_empty() { 0.0 } else { baseline.iter().sum::<f64>() / baseline.len() as f64 };

            let mut env = policy_seed_env;
            let mut provider: Box<dyn ImitationProvider> = match algorithm {
                Algorithm::Camappo => Box::new(ScaImitation::new(settings.sca.options(), seed)),
                _ => Box::new(NoImitation),
            };
            let timer = Instant::now();
            let mut training_rows = Vec::new();
            let trained = train_with_observer(&mut env, &train_cfg, provider.as_mut(), &mut |r| training_rows.push(TrainingRow::new(r, timer.elapsed().as_secs_f64())))?;
            tables::write_table(&sibling(stem, "_training.csv"), &training_rows, &tables::TRAINING_HEADER)?;
            let hash = fnv1a(settings.to_toml()?.as_bytes());
            Checkpoint::of(&trained.policy, seed, hash).save(&sibling(stem, ".ckpt"))?;

            let threshold = settings.eval.threshold_factor * baseline_mean;
            let steps = steps_to_threshold(&trained.trace.episodes, threshold, settings.eval.window).map_or(-1, |s| s as i64);

            let obs = observe(&instance.channels, &instance.adjacency, &fresh.0, &fresh.1, instance.config.p_max_w);
            let mut times: Vec<f64> = (0..settings.eval.inference_repeats.max(1))
                .map(|_| {
                    let t = Instant::now();
                    let d = trained.policy.act(&obs, None);
                    let dt = t.elapsed().as_secs_f64();
                    d.map(|_| dt)
                })
                .collect::<Result<_, _>>()?;
            times.sort_by(f64::total_cmp);
            let inference_s = times[times.len() / 2];

            let outcome = bcd_optimize(&instance.config, &instance.channels, &instance.adjacency, BeamProvider::Policy(&trained.policy), fresh, &bcd_opts, &mut rng)?;
            (outcome, steps, inference_s)
        }
    };

    let final_ev = problem.evaluate(&outcome.state.assignment, &outcome.state.beams);
    tables::write_table(&sibling(stem, "_rates.csv"), &rate_rows(&final_ev.report), &tables::RATE_HEADER)?;
    let bcd_rows: Vec<BcdRow> = outcome.trace.iter().map(BcdRow::from).collect();
    tables::write_table(&sibling(stem, "_bcd.csv"), &bcd_rows, &tables::BCD_HEADER)?;

    let per_ue = &final_ev.report.per_ue;
    let row = SummaryRow {
        algorithm: spec.algorithm.name().into(),
        p_max_w: instance.config.p_max_w,
        seed,
        mean_throughput: per_ue.iter().sum::<f64>() / per_ue.len().max(1) as f64,
        min_throughput: final_ev.report.min_rate,
        sum_rate: final_ev.report.sum_rate,
        steps_to_threshold: steps,
        bcd_sweeps: outcome.state.iteration,
        wall_clock_s: started.elapsed().as_secs_f64(),
        inference_s,
    };
    Ok(RunResult { row, solution: (outcome.state.assignment, outcome.state.beams) })
}

fn write_sca_trace(path: &Path, outcome: &BcdOutcome) -> SimResult<()> {
    let rows: Vec<ScaRow> = outcome.trace.iter().flat_map(|it| it.sca.iter().map(move |s| ScaRow::new(it.n, s))).collect();
    tables::write_table(path, &rows, &tables::SCA_HEADER)
}
