//! Skill-conditioned softmax policy trained with REINFORCE, a
//! state-conditioned value baseline, and entropy regularization.

use rand::Rng;

use crate::grid::{GridAction, GridSpec, GridState};
use crate::net::{ParamFunction, Topology};
use crate::opt::Optimizer;
use crate::skills::{Policy, SkillEpisode, SkillId};
use crate::vic::softmax;
use crate::{Error, Result};

pub const ACTION_COUNT: usize = 5;

/// Policy network: featurize(s) -> K blocks of action logits.
#[derive(Clone, Debug)]
pub struct SkillPolicy {
    pub net: ParamFunction,
    pub skill_count: usize,
}

/// State-value baseline, skill-agnostic.
#[derive(Clone, Debug)]
pub struct Baseline {
    pub net: ParamFunction,
}

pub fn entropy(dist: &[f64]) -> f64 {
    dist.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

impl SkillPolicy {
    pub fn init<R: Rng>(spec: &GridSpec, skill_count: usize, topology: Topology, rng: &mut R) -> Self {
        Self {
            net: ParamFunction::init(topology, spec.feature_dim(), skill_count * ACTION_COUNT, rng),
            skill_count,
        }
    }

    pub fn zeros(spec: &GridSpec, skill_count: usize, topology: Topology) -> Self {
        Self {
            net: ParamFunction::zeros(topology, spec.feature_dim(), skill_count * ACTION_COUNT),
            skill_count,
        }
    }

    pub fn action_distribution(
        &self,
        spec: &GridSpec,
        s: GridState,
        w: SkillId,
    ) -> Result<Vec<f64>> {
        if w.index() >= self.skill_count {
            return Err(Error::Contract("skill out of range".into()));
        }
        let x = spec.featurize(s)?;
        let logits = self.net.forward(&x)?;
        let block = &logits[w.index() * ACTION_COUNT..(w.index() + 1) * ACTION_COUNT];
        Ok(softmax(block))
    }

    pub fn save_file(&self, path: &std::path::Path) -> Result<()> {
        self.net
            .save_file(path, &[self.skill_count as u32, ACTION_COUNT as u32])
    }

    pub fn load_file(spec: &GridSpec, path: &std::path::Path) -> Result<Self> {
        let (net, header) = ParamFunction::load_file(path)?;
        if header.len() != 2 || header[1] as usize != ACTION_COUNT {
            return Err(Error::Parse("bad policy checkpoint header".into()));
        }
        let skill_count = header[0] as usize;
        if net.output_dim != skill_count * ACTION_COUNT || net.input_dim != spec.feature_dim() {
            return Err(Error::Parse("checkpoint does not match environment".into()));
        }
        Ok(Self { net, skill_count })
    }
}

impl Policy for SkillPolicy {
    fn act<R: Rng>(&self, spec: &GridSpec, s: GridState, skill: SkillId, rng: &mut R) -> GridAction {
        let probs = self
            .action_distribution(spec, s, skill)
            .expect("policy evaluated on invalid state");
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return GridAction::ALL[i];
            }
        }
        GridAction::NoOp
    }
}

impl Baseline {
    pub fn init<R: Rng>(spec: &GridSpec, topology: Topology, rng: &mut R) -> Self {
        Self {
            net: ParamFunction::init(topology, spec.feature_dim(), 1, rng),
        }
    }

    pub fn zeros(spec: &GridSpec, topology: Topology) -> Self {
        Self {
            net: ParamFunction::zeros(topology, spec.feature_dim(), 1),
        }
    }

    pub fn value(&self, spec: &GridSpec, s: GridState) -> Result<f64> {
        Ok(self.net.forward(&spec.featurize(s)?)?[0])
    }

    pub fn save_file(&self, path: &std::path::Path) -> Result<()> {
        self.net.save_file(path, &[])
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ReinforceReport {
    pub mean_return: f64,
    pub mean_entropy: f64,
    pub baseline_loss: f64,
}

/// One REINFORCE update from labeled episodes. Advantages use undiscounted
/// reward-to-go against the baseline; the entropy bonus is weighted into the
/// same surrogate. The baseline is regressed to the reward-to-go targets.
pub fn reinforce_update(
    policy: &mut SkillPolicy,
    baseline: &mut Baseline,
    spec: &GridSpec,
    episodes: &[SkillEpisode],
    entropy_weight: f64,
    policy_opt: &mut Optimizer,
    baseline_opt: &mut Optimizer,
) -> Result<ReinforceReport> {
    let (policy_grad, baseline_grad, report) =
        reinforce_gradients(policy, baseline, spec, episodes, entropy_weight)?;
    policy_opt.apply(&mut policy.net.params, &policy_grad)?;
    baseline_opt.apply(&mut baseline.net.params, &baseline_grad)?;
    Ok(report)
}

/// The surrogate-loss gradients behind `reinforce_update`, exposed so tests
/// can check them against finite differences of the surrogate objective.
pub fn reinforce_gradients(
    policy: &SkillPolicy,
    baseline: &Baseline,
    spec: &GridSpec,
    episodes: &[SkillEpisode],
    entropy_weight: f64,
) -> Result<(Vec<f64>, Vec<f64>, ReinforceReport)> {
    if episodes.is_empty() {
        return Err(Error::Contract("no episodes for policy update".into()));
    }
    let total_steps: usize = episodes.iter().map(|e| e.horizon()).sum();
    let inv = 1.0 / total_steps as f64;
    let mut policy_grad = vec![0.0; policy.net.params.len()];
    let mut baseline_grad = vec![0.0; baseline.net.params.len()];
    let mut report = ReinforceReport::default();
    for ep in episodes {
        let w = ep.skill;
        if w.index() >= policy.skill_count {
            return Err(Error::Contract("skill out of range".into()));
        }
        // undiscounted reward-to-go
        let mut togo = vec![0.0; ep.horizon()];
        let mut acc = 0.0;
        for t in (0..ep.horizon()).rev() {
            acc += ep.rewards[t];
            togo[t] = acc;
        }
        report.mean_return += togo[0] / episodes.len() as f64;
        for t in 0..ep.horizon() {
            let s = ep.states[t];
            let x = spec.featurize(s)?;
            let b = baseline.net.forward(&x)?[0];
            let advantage = togo[t] - b;
            let logits = policy.net.forward(&x)?;
            let block = &logits[w.index() * ACTION_COUNT..(w.index() + 1) * ACTION_COUNT];
            let probs = softmax(block);
            let h = entropy(&probs);
            report.mean_entropy += h * inv;
            let a = ep.actions[t].index();
            // surrogate loss per step: -A * log pi(a) - entropy_weight * H
            let mut upstream = vec![0.0; policy.net.output_dim];
            let off = w.index() * ACTION_COUNT;
            for j in 0..ACTION_COUNT {
                let indicator = if j == a { 1.0 } else { 0.0 };
                let pg = -advantage * (indicator - probs[j]);
                let eg = entropy_weight * probs[j] * (probs[j].max(1e-300).ln() + h);
                upstream[off + j] = (pg + eg) * inv;
            }
            policy.net.backward_acc(&x, &upstream, &mut policy_grad)?;
            // baseline: squared-error regression to the reward-to-go
            let err = b - togo[t];
            report.baseline_loss += err * err * inv;
            baseline.net.backward_acc(&x, &[2.0 * err * inv], &mut baseline_grad)?;
        }
    }
    Ok((policy_grad, baseline_grad, report))
}
