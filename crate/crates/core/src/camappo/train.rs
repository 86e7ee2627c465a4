//! Rollouts, GAE, PPO updates with the imitation term, and evaluation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::env::{decode_actions, encode_omega, encode_phi, BeamEnv};
use super::loss::{gae, gaussian_log_prob, total_loss, Batch, LossTerms, LossWeights};
use super::network::{Adam, NetworkShape, PolicyNetwork};
use crate::beamforming::{sca_optimize, ScaOptions};
use crate::noma::BeamformingState;
use crate::rng::RandomStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Algorithm {
    /// Two agents with the imitation term.
    #[default]
    Camappo,
    /// Two agents, no imitation.
    Mappo,
    /// One agent over the concatenated action space, no imitation.
    Ppo,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum ImitationMode {
    /// `ψ0 (1 - step/total)`.
    #[default]
    Linear,
    /// `ψ0 exp(-5 step/total)`.
    Exponential,
    Constant,
}

pub fn imitation_schedule(step: usize, total_steps: usize, psi0: f64, mode: ImitationMode) -> f64 {
    let frac = if total_steps == 0 { 0.0 } else { (step.min(total_steps)) as f64 / total_steps as f64 };
    match mode {
        ImitationMode::Linear => psi0 * (1.0 - frac),
        ImitationMode::Exponential => psi0 * (-5.0 * frac).exp(),
        ImitationMode::Constant => psi0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub c1: f64,
    pub c2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// An update runs once at least this many steps are stored (checked at
    /// episode ends).
    pub rollout_steps: usize,
    /// Slots per episode.
    pub episode_len: usize,
    /// Environment steps in the whole run.
    pub total_steps: usize,
    pub hidden: usize,
    pub init_log_std: f64,
    /// Global gradient-norm clip; serialized as 0 when disabled.
    #[cfg_attr(feature = "serde", serde(with = "grad_norm_serde"))]
    pub max_grad_norm: Option<f64>,
    pub psi0: f64,
    pub schedule: ImitationMode,
    /// Steps between imitation targets inside an episode; `None` means once
    /// per episode at step 0.
    pub imitation_interval: Option<usize>,
    pub seed: u64,
}

#[cfg(feature = "serde")]
mod grad_norm_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<Option<f64>, D::Error> {
        let x = f64::deserialize(d)?;
        Ok((x > 0.0).then_some(x))
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Camappo,
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            c1: 0.5,
            c2: 0.01,
            lr: 3e-4,
            epochs: 4,
            minibatch: 64,
            rollout_steps: 200,
            episode_len: 10,
            total_steps: 2000,
            hidden: 128,
            init_log_std: 0.0,
            max_grad_norm: Some(0.5),
            psi0: 0.5,
            schedule: ImitationMode::Linear,
            imitation_interval: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.gamma) || !unit(self.lambda) {
            return Err(Error::InvalidConfig(format!("gamma {} and lambda {} must lie in [0, 1]", self.gamma, self.lambda)));
        }
        for (name, v) in [("clip_eps", self.clip_eps), ("c1", self.c1), ("c2", self.c2), ("lr", self.lr)] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.epochs == 0 || self.minibatch == 0 || self.episode_len == 0 || self.hidden == 0 || self.rollout_steps == 0 {
            return Err(Error::InvalidConfig("epochs, minibatch, rollout_steps, episode_len and hidden must be positive".into()));
        }
        if !(self.psi0 >= 0.0) {
            return Err(Error::InvalidConfig(format!("psi0 must be non-negative, got {}", self.psi0)));
        }
        if self.imitation_interval == Some(0) {
            return Err(Error::InvalidConfig("imitation interval must be positive".into()));
        }
        Ok(())
    }

    fn weights(&self) -> LossWeights {
        LossWeights { clip_eps: self.clip_eps, c1: self.c1, c2: self.c2 }
    }

    pub fn imitation_enabled(&self) -> bool {
        self.algorithm == Algorithm::Camappo
    }
}

/// Source of imitation targets.
pub trait ImitationProvider {
    /// Target beams for the environment's current state, if any.
    fn target(&mut self, env: &BeamEnv) -> Result<Option<BeamformingState>>;
}

/// No targets; used for the MAPPO and PPO baselines.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoImitation;

impl ImitationProvider for NoImitation {
    fn target(&mut self, _env: &BeamEnv) -> Result<Option<BeamformingState>> {
        Ok(None)
    }
}

/// Runs SCA from the environment's current beams.
#[derive(Debug, Clone)]
pub struct ScaImitation {
    pub options: ScaOptions,
    rng: RandomStream,
    pub solves: usize,
}

impl ScaImitation {
    pub fn new(options: ScaOptions, seed: u64) -> Self {
        Self { options, rng: crate::seeded_rng(seed).substream("imitation", 0), solves: 0 }
    }
}

impl ImitationProvider for ScaImitation {
    fn target(&mut self, env: &BeamEnv) -> Result<Option<BeamformingState>> {
        let (Some(problem), Some(ep)) = (env.problem(), env.episode()) else {
            return Ok(None);
        };
        self.solves += 1;
        Ok(Some(sca_optimize(&problem, &ep.assignment, &ep.beams, &self.options, &mut self.rng)?.beams))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentRole {
    /// Emits the active (AP beam) action.
    Active,
    /// Emits the passive (STAR-RIS) action.
    Passive,
    /// Emits both, concatenated.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub role: AgentRole,
    pub net: PolicyNetwork,
    pub optimizer: Adam,
}

/// One decision of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub raw: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub beams: BeamformingState,
}

/// The trained (or initial) agents of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub algorithm: Algorithm,
    pub agents: Vec<Agent>,
    pub layout: super::env::ActionLayout,
    pub p_max: f64,
}

impl Policy {
    pub fn new(config: &TrainConfig, env: &BeamEnv) -> Result<Self> {
        config.validate()?;
        let roles: &[AgentRole] = match config.algorithm {
            Algorithm::Camappo | Algorithm::Mappo => &[AgentRole::Active, AgentRole::Passive],
            Algorithm::Ppo => &[AgentRole::Joint],
        };
        let base = crate::seeded_rng(config.seed).substream("init", 0);
        let agents = roles
            .iter()
            .enumerate()
            .map(|(i, &role)| {
                let act = match role {
                    AgentRole::Active => env.layout.omega_dim(),
                    AgentRole::Passive => env.layout.phi_dim(),
                    AgentRole::Joint => env.layout.omega_dim() + env.layout.phi_dim(),
                };
                let shape = NetworkShape { obs: env.observation_dim(), hidden: config.hidden, act };
                let net = PolicyNetwork::new(shape, config.init_log_std, &mut base.substream("agent", i as u64));
                let optimizer = Adam::new(shape.n_params(), config.lr, config.max_grad_norm);
                Agent { role, net, optimizer }
            })
            .collect();
        Ok(Self { algorithm: config.algorithm, agents, layout: env.layout.clone(), p_max: env.config.p_max_w })
    }

    /// Samples from each agent's Gaussian, or takes its mean when `rng` is
    /// `None`.
    pub fn act(&self, obs: &[f64], mut rng: Option<&mut RandomStream>) -> Result<Decision> {
        let mut raw = Vec::with_capacity(self.agents.len());
        let mut log_probs = Vec::with_capacity(self.agents.len());
        let mut values = Vec::with_capacity(self.agents.len());
        for agent in &self.agents {
            let fp = agent.net.forward(obs);
            let ls = agent.net.log_std();
            let a: Vec<f64> = match rng.as_deref_mut() {
                Some(r) => fp.mean.iter().zip(ls).map(|(m, s)| m + s.exp() * r.normal()).collect(),
                None => fp.mean.clone(),
            };
            log_probs.push(gaussian_log_prob(&a, &fp.mean, ls));
            values.push(fp.value);
            raw.push(a);
        }
        let beams = self.decode(&raw)?;
        Ok(Decision { raw, log_probs, values, beams })
    }

    fn decode(&self, raw: &[Vec<f64>]) -> Result<BeamformingState> {
        let split = self.layout.omega_dim();
        match self.algorithm {
            Algorithm::Ppo => decode_actions(&raw[0][..split], &raw[0][split..], &self.layout, self.p_max),
            _ => decode_actions(&raw[0], &raw[1], &self.layout, self.p_max),
        }
    }

    /// Imitation targets per agent in raw-action space.
    pub fn encode(&self, beams: &BeamformingState) -> Vec<Vec<f64>> {
        let omega = encode_omega(&beams.omega, &self.layout);
        let phi = encode_phi(&beams.star, &self.layout);
        match self.algorithm {
            Algorithm::Ppo => vec![omega.into_iter().chain(phi).collect()],
            _ => vec![omega, phi],
        }
    }
}

/// Per-agent rollout storage.
#[derive(Debug, Clone, Default)]
struct Memory {
    batch: Batch,
    values: Vec<f64>,
    rewards: Vec<f64>,
    episode_start: usize,
}

impl Memory {
    fn push(&mut self, obs: Vec<f64>, action: Vec<f64>, log_prob: f64, value: f64, reward: f64, target: Option<Vec<f64>>) {
        self.batch.obs.push(obs);
        self.batch.actions.push(action);
        self.batch.old_log_probs.push(log_prob);
        self.batch.targets.push(target);
        self.values.push(value);
        self.rewards.push(reward);
    }

    /// GAE over the episode that just ended (terminal value 0).
    fn close_episode(&mut self, gamma: f64, lambda: f64) {
        let s = self.episode_start;
        let adv = gae(&self.rewards[s..], &self.values[s..], gamma, lambda);
        for (a, v) in adv.iter().zip(&self.values[s..]) {
            self.batch.advantages.push(*a);
            self.batch.returns.push(a + v);
        }
        self.episode_start = self.rewards.len();
    }

    fn len(&self) -> usize {
        self.batch.advantages.len()
    }

    fn take(&mut self) -> (Batch, Vec<f64>) {
        let out = (core::mem::take(&mut self.batch), core::mem::take(&mut self.rewards));
        self.values.clear();
        self.episode_start = 0;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub update: usize,
    pub agent: usize,
    /// Episodes finished before this update.
    pub episode: usize,
    /// Environment steps taken before this update.
    pub step: usize,
    /// Mean per-step reward over the rollout.
    pub reward: f64,
    /// Loss components averaged over the update's minibatches.
    pub losses: LossTerms,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Cumulative environment steps at the end of the episode.
    pub end_step: usize,
    /// Mean per-step reward.
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub updates: Vec<UpdateRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub actions_emitted: usize,
    pub action_violations: usize,
    /// Every agent saw the identical reward sequence in every rollout.
    pub shared_reward: bool,
    pub imitation_targets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub trace: TrainingTrace,
}

pub fn train(env: &mut BeamEnv, config: &TrainConfig, provider: &mut dyn ImitationProvider) -> Result<TrainOutcome> {
    train_with_observer(env, config, provider, &mut |_| {})
}

/// [`train`], calling `observer` after every agent update.
pub fn train_with_observer(env: &mut BeamEnv, config: &TrainConfig, provider: &mut dyn ImitationProvider, observer: &mut dyn FnMut(&UpdateRecord)) -> Result<TrainOutcome> {
    config.validate()?;
    env.episode_len = config.episode_len;
    let mut policy = Policy::new(config, env)?;
    let mut rng = crate::seeded_rng(config.seed).substream("rollout", 0);
    let mut memories: Vec<Memory> = vec![Memory::default(); policy.agents.len()];
    let mut trace = TrainingTrace { shared_reward: true, ..TrainingTrace::default() };
    let emitted0 = env.actions_emitted;
    let violations0 = env.action_violations;
    let mut step = 0;
    let mut rollout_start = 0;

    while step < config.total_steps {
        let mut obs = env.reset()?;
        let mut targets: Option<Vec<Vec<f64>>> = None;
        let mut rewards = Vec::new();
        for t in 0..config.episode_len {
            if step >= config.total_steps {
                break;
            }
            let due = match config.imitation_interval {
                None => t == 0,
                Some(k) => t % k == 0,
            };
            let psi = imitation_schedule(step, config.total_steps, config.psi0, config.schedule);
            if config.imitation_enabled() && due && psi > 0.0 {
                targets = provider.target(env)?.map(|b| policy.encode(&b));
                trace.imitation_targets += targets.is_some() as usize;
            }
            let d = policy.act(&obs, Some(&mut rng))?;
            let result = env.step(d.beams)?;
            for (i, m) in memories.iter_mut().enumerate() {
                let target = targets.as_ref().map(|t| t[i].clone());
                m.push(obs.clone(), d.raw[i].clone(), d.log_probs[i], d.values[i], result.reward, target);
            }
            rewards.push(result.reward);
            obs = result.observation;
            step += 1;
        }
        for m in &mut memories {
            m.close_episode(config.gamma, config.lambda);
        }
        trace.episodes.push(EpisodeRecord { episode: trace.episodes.len(), end_step: step, mean_reward: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64 });

        if memories[0].len() >= config.rollout_steps || step >= config.total_steps {
            // Weighted by the schedule where the rollout began, when its targets were collected.
            let psi = if config.imitation_enabled() { imitation_schedule(rollout_start, config.total_steps, config.psi0, config.schedule) } else { 0.0 };
            rollout_start = step;
            let taken: Vec<(Batch, Vec<f64>)> = memories.iter_mut().map(Memory::take).collect();
            if taken.windows(2).any(|w| w[0].1 != w[1].1) {
                trace.shared_reward = false;
            }
            let update = trace.updates.len() / policy.agents.len();
            for (i, (agent, (batch, rollout_rewards))) in policy.agents.iter_mut().zip(taken).enumerate() {
                let losses = update_agent(agent, batch, config, psi, &mut rng)?;
                let record = UpdateRecord {
                    update,
                    agent: i,
                    episode: trace.episodes.len(),
                    step,
                    reward: rollout_rewards.iter().sum::<f64>() / rollout_rewards.len().max(1) as f64,
                    losses,
                    psi,
                };
                observer(&record);
                trace.updates.push(record);
            }
        }
    }
    trace.actions_emitted = env.actions_emitted - emitted0;
    trace.action_violations = env.action_violations - violations0;
    Ok(TrainOutcome { policy, trace })
}

fn update_agent(agent: &mut Agent, mut batch: Batch, config: &TrainConfig, psi: f64, rng: &mut RandomStream) -> Result<LossTerms> {
    let n = batch.len();
    let mean = batch.advantages.iter().sum::<f64>() / n as f64;
    let var = batch.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt().max(1e-8);
    batch.advantages.iter_mut().for_each(|a| *a = (*a - mean) / sd);

    let weights = config.weights();
    let mut sum = LossTerms::default();
    let mut count = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.minibatch) {
            let mb = Batch {
                obs: chunk.iter().map(|&i| batch.obs[i].clone()).collect(),
                actions: chunk.iter().map(|&i| batch.actions[i].clone()).collect(),
                old_log_probs: chunk.iter().map(|&i| batch.old_log_probs[i]).collect(),
                advantages: chunk.iter().map(|&i| batch.advantages[i]).collect(),
                returns: chunk.iter().map(|&i| batch.returns[i]).collect(),
                targets: chunk.iter().map(|&i| batch.targets[i].clone()).collect(),
            };
            let (terms, grad) = total_loss(&agent.net, &mb, &weights, psi)?;
            agent.optimizer.step(&mut agent.net.params, &grad);
            if agent.net.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged("non-finite parameters after an update".into()));
            }
            sum.clip += terms.clip;
            sum.value += terms.value;
            sum.entropy += terms.entropy;
            sum.ca += terms.ca;
            sum.trpo += terms.trpo;
            sum.total += terms.total;
            count += 1.0;
        }
    }
    Ok(LossTerms {
        clip: sum.clip / count,
        value: sum.value / count,
        entropy: sum.entropy / count,
        ca: sum.ca / count,
        trpo: sum.trpo / count,
        total: sum.total / count,
    })
}

/// Mean per-step reward of each episode played by `policy`.
pub fn run_episodes(policy: &Policy, env: &mut BeamEnv, episodes: usize, mut rng: Option<&mut RandomStream>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset()?;
        let mut total = 0.0;
        for _ in 0..env.episode_len {
            let d = policy.act(&obs, rng.as_deref_mut())?;
            let r = env.step(d.beams)?;
            total += r.reward;
            obs = r.observation;
        }
        out.push(total / env.episode_len as f64);
    }
    Ok(out)
}

/// First step at which the trailing `window`-episode mean reward reaches
/// `threshold`.
pub fn steps_to_threshold(episodes: &[EpisodeRecord], threshold: f64, window: usize) -> Option<usize> {
    let w = window.max(1);
    (w..=episodes.len()).find_map(|end| {
        let avg = episodes[end - w..end].iter().map(|e| e.mean_reward).sum::<f64>() / w as f64;
        (avg >= threshold).then(|| episodes[end - 1].end_step)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    #[test]
    fn schedule_examples() {
        assert_eq!(imitation_schedule(0, 100, 0.5, ImitationMode::Linear), 0.5);
        assert_eq!(imitation_schedule(100, 100, 0.5, ImitationMode::Linear), 0.0);
        assert_eq!(imitation_schedule(50, 100, 0.5, ImitationMode::Linear), 0.25);
        for s in [0, 30, 100] {
            assert_eq!(imitation_schedule(s, 100, 0.5, ImitationMode::Constant), 0.5);
        }
        let e: Vec<f64> = (0..=10).map(|s| imitation_schedule(s * 10, 100, 0.5, ImitationMode::Exponential)).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0]));
    }

    fn small_config(algorithm: Algorithm) -> TrainConfig {
        TrainConfig { algorithm, hidden: 16, total_steps: 40, episode_len: 5, rollout_steps: 20, minibatch: 8, epochs: 2, seed: 3, ..TrainConfig::default() }
    }

    #[test]
    fn zero_steps_keeps_initialization() {
        let cfg = TrainConfig { total_steps: 0, ..small_config(Algorithm::Mappo) };
        let mut env = BeamEnv::new(ScenarioConfig::tiny(), cfg.episode_len, 1).unwrap();
        let out = train(&mut env, &cfg, &mut NoImitation).unwrap();
        assert_eq!(out.policy, Policy::new(&cfg, &env).unwrap());
        assert!(out.trace.updates.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_feasible() {
        for algo in [Algorithm::Mappo, Algorithm::Ppo] {
            let cfg = small_config(algo);
            let run = || {
                let mut env = BeamEnv::new(ScenarioConfig::tiny(), cfg.episode_len, 2).unwrap();
                train(&mut env, &cfg, &mut NoImitation).unwrap()
            };
            let a = run();
            let b = run();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.policy, b.policy);
            assert_eq!(a.trace.actions_emitted, 40);
            assert_eq!(a.trace.action_violations, 0);
            assert!(a.trace.shared_reward);
            assert_eq!(a.trace.episodes.len(), 8);
        }
    }

    #[test]
    fn threshold_uses_moving_average() {
        let eps: Vec<EpisodeRecord> = [1.0, 1.0, 3.0, 3.0].iter().enumerate().map(|(i, &r)| EpisodeRecord { episode: i, end_step: 10 * (i + 1), mean_reward: r }).collect();
        assert_eq!(steps_to_threshold(&eps, 2.0, 2), Some(30));
        assert_eq!(steps_to_threshold(&eps, 3.0, 2), Some(40));
        assert_eq!(steps_to_threshold(&eps, 3.5, 2), None);
    }
}
