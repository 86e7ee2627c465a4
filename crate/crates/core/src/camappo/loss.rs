//! PPO objective pieces, the imitation loss, and their gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::network::PolicyNetwork;
use crate::{Error, Result};

/// Truncated GAE over one episode with terminal value 0.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for i in (0..n).rev() {
        let delta = rewards[i] + gamma * next_value - values[i];
        next_adv = delta + gamma * lambda * next_adv;
        adv[i] = next_adv;
        next_value = values[i];
    }
    adv
}

/// `min(r A, clip(r, 1-ε, 1+ε) A)`.
pub fn clip_loss(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clip_loss`] with respect to the ratio.
fn clip_loss_dratio(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

/// Mean squared deviation `(1/n) Σ (target_i - action_i)²`.
pub fn ca_loss(actions: &[f64], targets: &[f64]) -> Result<f64> {
    check_dims(actions, targets)?;
    Ok(actions.iter().zip(targets).map(|(a, t)| (t - a) * (t - a)).sum::<f64>() / actions.len() as f64)
}

/// Gradient of [`ca_loss`] with respect to the actions.
pub fn ca_loss_gradient(actions: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    check_dims(actions, targets)?;
    let n = actions.len() as f64;
    Ok(actions.iter().zip(targets).map(|(a, t)| -2.0 * (t - a) / n).collect())
}

fn check_dims(actions: &[f64], targets: &[f64]) -> Result<()> {
    if actions.len() != targets.len() || actions.is_empty() {
        return Err(Error::Dimension(format!("imitation loss over {} actions and {} targets", actions.len(), targets.len())));
    }
    Ok(())
}

pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - half_log_2pi
        })
        .sum()
}

/// Differential entropy of the diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    let c = 0.5 * (1.0 + (2.0 * PI).ln());
    log_std.iter().map(|ls| ls + c).sum()
}

/// Minibatch of one agent's transitions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Imitation targets in raw-action space, where available.
    pub targets: Vec<Option<Vec<f64>>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip_eps: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Loss components averaged over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// Clipped surrogate `L^CLIP` (maximized).
    pub clip: f64,
    /// Critic squared error `L^VF`.
    pub value: f64,
    pub entropy: f64,
    /// Imitation loss `L^CA`.
    pub ca: f64,
    /// Unclipped surrogate, logged only.
    pub trpo: f64,
    /// Minimized objective.
    pub total: f64,
}

/// `-(L^CLIP - c1 L^VF + c2 H)` and its parameter gradient.
pub fn ppo_loss(net: &PolicyNetwork, batch: &Batch, w: &LossWeights) -> Result<(LossTerms, Vec<f64>)> {
    loss_and_gradient(net, batch, w, 0.0)
}

/// `ppo_loss + ψ L^CA`; identical to [`ppo_loss`] when `ψ = 0`.
pub fn total_loss(net: &PolicyNetwork, batch: &Batch, w: &LossWeights, psi: f64) -> Result<(LossTerms, Vec<f64>)> {
    if !(psi >= 0.0) {
        return Err(Error::InvalidConfig(format!("imitation rate must be non-negative, got {psi}")));
    }
    loss_and_gradient(net, batch, w, psi)
}

fn loss_and_gradient(net: &PolicyNetwork, batch: &Batch, w: &LossWeights, psi: f64) -> Result<(LossTerms, Vec<f64>)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Dimension("empty batch".into()));
    }
    let act = net.shape.act;
    let log_std = net.log_std().to_vec();
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let n_targets = batch.targets.iter().filter(|t| t.is_some()).count();
    let use_ca = psi != 0.0 && n_targets > 0;
    let inv_n = 1.0 / n as f64;

    let mut grad = vec![0.0; net.params.len()];
    let mut terms = LossTerms::default();
    let mut d_log_std_total = vec![0.0; act];
    for i in 0..n {
        let fp = net.forward(&batch.obs[i]);
        let a = &batch.actions[i];
        if a.len() != act {
            return Err(Error::Dimension(format!("action of length {} for a {act}-dimensional policy", a.len())));
        }
        let ratio = (gaussian_log_prob(a, &fp.mean, &log_std) - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        terms.clip += clip_loss(ratio, adv, w.clip_eps) * inv_n;
        terms.trpo += ratio * adv * inv_n;
        let err = fp.value - batch.returns[i];
        terms.value += err * err * inv_n;

        // d(-clip)/d(mean, log_std) through the ratio.
        let g = -clip_loss_dratio(ratio, adv, w.clip_eps) * ratio * inv_n;
        let mut d_mean = vec![0.0; act];
        for j in 0..act {
            let diff = a[j] - fp.mean[j];
            d_mean[j] = g * diff * inv_var[j];
            d_log_std_total[j] += g * (diff * diff * inv_var[j] - 1.0);
        }
        if use_ca {
            if let Some(t) = &batch.targets[i] {
                let scale = psi / n_targets as f64;
                terms.ca += ca_loss(&fp.mean, t)? / n_targets as f64;
                for (d, gc) in d_mean.iter_mut().zip(ca_loss_gradient(&fp.mean, t)?) {
                    *d += scale * gc;
                }
            }
        }
        let d_value = w.c1 * 2.0 * err * inv_n;
        net.backward(&fp, &d_mean, d_value, &[], &mut grad);
    }
    terms.entropy = gaussian_entropy(&log_std);
    for d in d_log_std_total.iter_mut() {
        *d -= w.c2;
    }
    net.backward_log_std(&d_log_std_total, &mut grad);
    terms.total = -(terms.clip - w.c1 * terms.value + w.c2 * terms.entropy);
    if use_ca {
        terms.total += psi * terms.ca;
    }
    if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged(format!("non-finite loss {} (clip {}, value {}, ca {})", terms.total, terms.clip, terms.value, terms.ca)));
    }
    Ok((terms, grad))
}

#[cfg(test)]
mod tests {
    use super::super::network::NetworkShape;
    use super::*;

    #[test]
    fn gae_examples() {
        let v = [0.5, -0.2, 0.1];
        let r = [1.0, 0.3, -0.4];
        let a = gae(&r, &v, 0.9, 0.0);
        assert!((a[0] - (1.0 + 0.9 * -0.2 - 0.5)).abs() < 1e-15);
        assert!((a[2] - (-0.4 - 0.1)).abs() < 1e-15);
        assert_eq!(gae(&[1.0, 1.0], &[0.0, 0.0], 1.0, 1.0), vec![2.0, 1.0]);
        // r_n = V(s_n) - γ V(s_{n+1}) gives δ = 0 everywhere.
        let v = [2.0, 1.5, 1.0];
        let r = [2.0 - 0.9 * 1.5, 1.5 - 0.9 * 1.0, 1.0];
        assert!(gae(&r, &v, 0.9, 0.95).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_loss(1.0, 0.7, 0.2), 0.7);
        assert_eq!(clip_loss(1.0, -3.0, 0.2), -3.0);
        assert!((clip_loss(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clip_loss(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn ca_examples() {
        assert_eq!(ca_loss(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert_eq!(ca_loss(&[0.0; 4], &[2.0; 4]).unwrap(), 4.0);
        assert!(ca_loss(&[0.0; 3], &[0.0; 4]).is_err());
        let a = [0.5, -1.0, 2.0];
        let t = [1.0, -3.0, 2.5];
        for ((g, ai), ti) in ca_loss_gradient(&a, &t).unwrap().iter().zip(&a).zip(&t) {
            assert_eq!((-g).signum(), (ti - ai).signum());
        }
    }

    #[test]
    fn entropy_grows_with_std() {
        assert!(gaussian_entropy(&[0.5, 0.5]) > gaussian_entropy(&[-3.0, -3.0]));
    }

    fn toy_batch(net: &PolicyNetwork, advantages: &[f64]) -> Batch {
        let mut rng = crate::seeded_rng(9);
        let mut b = Batch::default();
        for &adv in advantages {
            let obs: Vec<f64> = (0..net.shape.obs).map(|_| rng.normal()).collect();
            let fp = net.forward(&obs);
            b.actions.push(fp.mean.iter().map(|m| m + 0.3 * rng.normal()).collect());
            b.old_log_probs.push(gaussian_log_prob(b.actions.last().unwrap(), &fp.mean, net.log_std()) + 0.05 * rng.normal());
            b.obs.push(obs);
            b.advantages.push(adv);
            b.returns.push(fp.value);
            b.targets.push(None);
        }
        b
    }

    #[test]
    fn zero_advantage_exact_critic_gives_zero_loss() {
        let net = PolicyNetwork::new(NetworkShape { obs: 3, hidden: 5, act: 2 }, 0.0, &mut crate::seeded_rng(1));
        let b = toy_batch(&net, &[0.0, 0.0, 0.0]);
        let (t, _) = ppo_loss(&net, &b, &LossWeights { clip_eps: 0.2, c1: 0.5, c2: 0.0 }).unwrap();
        assert_eq!(t.total, 0.0);
    }

    #[test]
    fn zero_psi_is_bitwise_ppo() {
        let net = PolicyNetwork::new(NetworkShape { obs: 3, hidden: 5, act: 2 }, 0.0, &mut crate::seeded_rng(1));
        let mut b = toy_batch(&net, &[0.4, -1.0, 2.0]);
        b.targets = vec![Some(vec![1.0, -1.0]); 3];
        let w = LossWeights { clip_eps: 0.2, c1: 0.5, c2: 0.01 };
        let p = ppo_loss(&net, &b, &w).unwrap();
        let t = total_loss(&net, &b, &w, 0.0).unwrap();
        assert_eq!(p.0.total.to_bits(), t.0.total.to_bits());
        assert!(p.1.iter().zip(&t.1).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
