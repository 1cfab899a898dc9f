//! The Wasserstein-potential objective: a multi-head potential over
//! (state, start-state) pairs, its dual-gap training loss, the transition
//! Lipschitz penalty, and the diversity-penalized shaping reward.

use rand::Rng;

use crate::grid::{GridSpec, GridState};
use crate::net::{ParamFunction, Topology};
use crate::opt::Optimizer;
use crate::skills::{SkillEpisode, SkillId, VisitationSample};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct WicConfig {
    pub eta: f64,
    pub lipschitz_weight: f64,
    pub batch_size: usize,
}

impl Default for WicConfig {
    fn default() -> Self {
        Self {
            eta: 0.9,
            lipschitz_weight: 10.0,
            batch_size: 32,
        }
    }
}

/// Per-skill potential values realized as one network with K output heads;
/// input is featurize(s) concatenated with featurize(s0).
#[derive(Clone, Debug)]
pub struct PotentialBank {
    pub net: ParamFunction,
    pub skill_count: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LossReport {
    pub potential_loss: f64,
    pub lipschitz_penalty: f64,
}

impl PotentialBank {
    pub fn init<R: Rng>(spec: &GridSpec, skill_count: usize, topology: Topology, rng: &mut R) -> Self {
        let d = spec.feature_dim();
        Self {
            net: ParamFunction::init_zero_head(topology, 2 * d, skill_count, rng),
            skill_count,
        }
    }

    pub fn zeros(spec: &GridSpec, skill_count: usize, topology: Topology) -> Self {
        let d = spec.feature_dim();
        Self {
            net: ParamFunction::zeros(topology, 2 * d, skill_count),
            skill_count,
        }
    }

    fn pair_features(&self, spec: &GridSpec, s: GridState, s0: GridState) -> Result<Vec<f64>> {
        let mut x = spec.featurize(s)?;
        x.extend(spec.featurize(s0)?);
        Ok(x)
    }

    /// All K potential heads at (s, s0) in one forward pass.
    pub fn potential_all(&self, spec: &GridSpec, s: GridState, s0: GridState) -> Result<Vec<f64>> {
        let x = self.pair_features(spec, s, s0)?;
        self.net.forward(&x)
    }

    pub fn potential(&self, spec: &GridSpec, s: GridState, s0: GridState, w: SkillId) -> Result<f64> {
        self.check_skill(w)?;
        Ok(self.potential_all(spec, s, s0)?[w.index()])
    }

    fn check_skill(&self, w: SkillId) -> Result<()> {
        if w.index() >= self.skill_count {
            return Err(Error::Contract(format!(
                "skill {} out of range (K = {})",
                w.index(),
                self.skill_count
            )));
        }
        Ok(())
    }

    /// Dual-gap loss for one skill's visitation batch:
    /// f(s0,s0,w) - mean_s f(s,s0,w). All samples must share (s0, w).
    /// Returns the loss and its parameter gradient.
    pub fn potential_loss(
        &self,
        spec: &GridSpec,
        batch: &[VisitationSample],
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.net.params.len()];
        let loss = self.potential_loss_acc(spec, batch, &mut grad)?;
        Ok((loss, grad))
    }

    fn potential_loss_acc(
        &self,
        spec: &GridSpec,
        batch: &[VisitationSample],
        grad: &mut [f64],
    ) -> Result<f64> {
        let first = batch
            .first()
            .ok_or_else(|| Error::Contract("empty visitation batch".into()))?;
        let (s0, w) = (first.start_state, first.skill);
        self.check_skill(w)?;
        if batch.iter().any(|b| b.start_state != s0 || b.skill != w) {
            return Err(Error::Contract("visitation batch mixes (s0, skill)".into()));
        }
        let mut upstream = vec![0.0; self.skill_count];
        let x0 = self.pair_features(spec, s0, s0)?;
        let f0 = self.net.forward(&x0)?[w.index()];
        upstream[w.index()] = 1.0;
        self.net.backward_acc(&x0, &upstream, grad)?;
        let inv = 1.0 / batch.len() as f64;
        upstream[w.index()] = -inv;
        let mut mean = 0.0;
        for sample in batch {
            let x = self.pair_features(spec, sample.state, s0)?;
            mean += self.net.forward(&x)?[w.index()] * inv;
            self.net.backward_acc(&x, &upstream, grad)?;
        }
        Ok(f0 - mean)
    }

    /// Hinge penalty on squared potential differences along experienced
    /// transitions: mean over pairs of max(df^2 - 1, 0).
    pub fn lipschitz_penalty(
        &self,
        spec: &GridSpec,
        pairs: &[(GridState, GridState)],
        s0: GridState,
        w: SkillId,
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.net.params.len()];
        let loss = self.lipschitz_penalty_acc(spec, pairs, s0, w, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    fn lipschitz_penalty_acc(
        &self,
        spec: &GridSpec,
        pairs: &[(GridState, GridState)],
        s0: GridState,
        w: SkillId,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_skill(w)?;
        if pairs.is_empty() {
            return Err(Error::Contract("empty transition-pair set".into()));
        }
        let inv = 1.0 / pairs.len() as f64;
        let mut loss = 0.0;
        let mut upstream = vec![0.0; self.skill_count];
        for &(s, s_next) in pairs {
            let x = self.pair_features(spec, s, s0)?;
            let x_next = self.pair_features(spec, s_next, s0)?;
            let f = self.net.forward(&x)?[w.index()];
            let f_next = self.net.forward(&x_next)?[w.index()];
            let df = f_next - f;
            let hinge = df * df - 1.0;
            if hinge > 0.0 {
                loss += hinge * inv;
                let scale = weight * 2.0 * df * inv;
                upstream[w.index()] = scale;
                self.net.backward_acc(&x_next, &upstream, grad)?;
                upstream[w.index()] = -scale;
                self.net.backward_acc(&x, &upstream, grad)?;
            }
        }
        Ok(loss)
    }

    /// Hinge penalty for every head over the same transition pairs. The
    /// heads share one forward/backward per state, so constraining them
    /// together costs a K-th of constraining them one at a time; the loss
    /// and gradient match summing `lipschitz_penalty_acc` over heads with
    /// the loss averaged over heads and the gradient at full weight each.
    fn lipschitz_penalty_all_heads_acc(
        &self,
        spec: &GridSpec,
        pairs: &[(GridState, GridState)],
        s0: GridState,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::Contract("empty transition-pair set".into()));
        }
        let inv = 1.0 / pairs.len() as f64;
        let k_inv = 1.0 / self.skill_count as f64;
        let mut loss = 0.0;
        let mut up_next = vec![0.0; self.skill_count];
        let mut up_prev = vec![0.0; self.skill_count];
        for &(s, s_next) in pairs {
            let x = self.pair_features(spec, s, s0)?;
            let x_next = self.pair_features(spec, s_next, s0)?;
            let f = self.net.forward(&x)?;
            let f_next = self.net.forward(&x_next)?;
            let mut active = false;
            for head in 0..self.skill_count {
                let df = f_next[head] - f[head];
                let hinge = df * df - 1.0;
                if hinge > 0.0 {
                    loss += hinge * inv * k_inv;
                    let scale = weight * 2.0 * df * inv;
                    up_next[head] = scale;
                    up_prev[head] = -scale;
                    active = true;
                } else {
                    up_next[head] = 0.0;
                    up_prev[head] = 0.0;
                }
            }
            if active {
                self.net.backward_acc(&x_next, &up_next, grad)?;
                self.net.backward_acc(&x, &up_prev, grad)?;
            }
        }
        Ok(loss)
    }

    /// One optimizer step on L_f + lipschitz_weight * L_c over a batch of
    /// episodes; visitation batches are drawn per episode.
    pub fn train_step<R: Rng>(
        &mut self,
        spec: &GridSpec,
        episodes: &[SkillEpisode],
        cfg: &WicConfig,
        opt: &mut Optimizer,
        rng: &mut R,
    ) -> Result<LossReport> {
        if episodes.is_empty() {
            return Err(Error::Contract("no episodes to train on".into()));
        }
        let mut grad = vec![0.0; self.net.params.len()];
        let mut report = LossReport::default();
        let inv = 1.0 / episodes.len() as f64;
        let mut scaled = vec![0.0; self.net.params.len()];
        for ep in episodes {
            let samples = crate::skills::visitation_samples(ep, cfg.batch_size, rng);
            let lf = self.potential_loss_acc(spec, &samples, &mut scaled)?;
            let pairs: Vec<(GridState, GridState)> = ep
                .states
                .windows(2)
                .map(|w2| (w2[0], w2[1]))
                .collect();
            // the dual constraint is global, so hinge every head on these
            // transitions: the reward reads all heads along this trajectory,
            // and a head left unconstrained where only other skills walk
            // accumulates stale super-unit slopes that poison the penalty term
            let lc = self.lipschitz_penalty_all_heads_acc(
                spec,
                &pairs,
                ep.start_state,
                cfg.lipschitz_weight,
                &mut scaled,
            )?;
            report.potential_loss += lf * inv;
            report.lipschitz_penalty += lc * inv;
        }
        for (g, s) in grad.iter_mut().zip(&scaled) {
            *g = s * inv;
        }
        opt.apply(&mut self.net.params, &grad)?;
        Ok(report)
    }

    /// The shaping reward: own potential gain minus eta times the best
    /// competing skill's gain. With K = 1 the penalty term is zero.
    pub fn reward(
        &self,
        spec: &GridSpec,
        s_t: GridState,
        s_next: GridState,
        s0: GridState,
        w: SkillId,
        eta: f64,
    ) -> Result<f64> {
        self.check_skill(w)?;
        let before = self.potential_all(spec, s_t, s0)?;
        let after = self.potential_all(spec, s_next, s0)?;
        Ok(reward_from_heads(&before, &after, w, eta))
    }

    /// Fills `episode.rewards` in place with the per-step shaping reward.
    pub fn label_episode_rewards(
        &self,
        spec: &GridSpec,
        episode: &mut SkillEpisode,
        eta: f64,
    ) -> Result<()> {
        self.check_skill(episode.skill)?;
        let s0 = episode.start_state;
        let mut prev = self.potential_all(spec, episode.states[0], s0)?;
        for t in 0..episode.horizon() {
            let next = self.potential_all(spec, episode.states[t + 1], s0)?;
            episode.rewards[t] = reward_from_heads(&prev, &next, episode.skill, eta);
            prev = next;
        }
        Ok(())
    }

    pub fn save_file(&self, path: &std::path::Path) -> Result<()> {
        self.net.save_file(path, &[self.skill_count as u32])
    }

    pub fn load_file(spec: &GridSpec, path: &std::path::Path) -> Result<Self> {
        let (net, header) = ParamFunction::load_file(path)?;
        let skill_count = *header
            .first()
            .ok_or_else(|| Error::Parse("missing skill-count header".into()))?
            as usize;
        if net.output_dim != skill_count || net.input_dim != 2 * spec.feature_dim() {
            return Err(Error::Parse("checkpoint does not match environment".into()));
        }
        Ok(Self { net, skill_count })
    }
}

fn reward_from_heads(before: &[f64], after: &[f64], w: SkillId, eta: f64) -> f64 {
    let own = after[w.index()] - before[w.index()];
    let mut best_other = f64::NEG_INFINITY;
    for i in 0..before.len() {
        if i != w.index() {
            best_other = best_other.max(after[i] - before[i]);
        }
    }
    if best_other == f64::NEG_INFINITY {
        own
    } else {
        own - eta * best_other
    }
}
