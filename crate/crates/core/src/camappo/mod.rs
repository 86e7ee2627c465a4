//! Imitation-regularized multi-agent PPO for the beamforming variables.
//!
//! An active agent emits the AP beams and a passive agent emits the STAR-RIS
//! coefficients; both act on the same observation and receive the same
//! min-rate reward. Besides the clipped PPO objective, each agent's mean
//! action is pulled toward the SCA solution (encoded in raw-action space)
//! with a weight `ψ` that decays over training. MAPPO (`ψ = 0`) and a
//! single-agent PPO over the concatenated action are the baselines.

mod env;
mod loss;
mod network;
mod train;

pub use env::{action_violation, decode_actions, decode_omega, decode_phi, encode_omega, encode_phi, observe, reward, ActionLayout, BeamEnv, Episode, StepResult};
pub use loss::{ca_loss, ca_loss_gradient, clip_loss, gae, gaussian_entropy, gaussian_log_prob, ppo_loss, total_loss, Batch, LossTerms, LossWeights};
pub use network::{Adam, ForwardPass, NetworkShape, PolicyNetwork};
pub use train::{
    imitation_schedule, run_episodes, steps_to_threshold, train, train_with_observer, Agent, AgentRole, Algorithm, Decision, EpisodeRecord, ImitationMode, ImitationProvider, NoImitation, Policy, ScaImitation,
    TrainConfig, TrainOutcome, TrainingTrace, UpdateRecord,
};
