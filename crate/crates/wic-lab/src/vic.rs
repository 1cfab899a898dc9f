//! Discriminator baseline: classify the executed skill from an episode's
//! start and end states, and turn its log-likelihood into a terminal reward.

use rand::Rng;

use crate::grid::{GridSpec, GridState};
use crate::net::{ParamFunction, Topology};
use crate::opt::Optimizer;
use crate::skills::{SkillEpisode, SkillId};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub net: ParamFunction,
    pub skill_count: usize,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Discriminator {
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

    fn pair_features(&self, spec: &GridSpec, s_end: GridState, s0: GridState) -> Result<Vec<f64>> {
        let mut x = spec.featurize(s_end)?;
        x.extend(spec.featurize(s0)?);
        Ok(x)
    }

    /// Posterior over skills given the endpoint pair.
    pub fn skill_posterior(
        &self,
        spec: &GridSpec,
        s_end: GridState,
        s0: GridState,
    ) -> Result<Vec<f64>> {
        let x = self.pair_features(spec, s_end, s0)?;
        Ok(softmax(&self.net.forward(&x)?))
    }

    /// Mean negative log-likelihood of the true skill over the batch, with
    /// its parameter gradient.
    pub fn nll_loss(
        &self,
        spec: &GridSpec,
        batch: &[(GridState, GridState, SkillId)],
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Contract("empty discriminator batch".into()));
        }
        let mut grad = vec![0.0; self.net.params.len()];
        let inv = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &(s_end, s0, skill) in batch {
            if skill.index() >= self.skill_count {
                return Err(Error::Contract("skill out of range".into()));
            }
            let x = self.pair_features(spec, s_end, s0)?;
            let probs = softmax(&self.net.forward(&x)?);
            loss -= probs[skill.index()].max(1e-300).ln() * inv;
            // d(-log p_w)/dlogits = probs - onehot(w)
            let mut upstream = probs;
            upstream[skill.index()] -= 1.0;
            for u in &mut upstream {
                *u *= inv;
            }
            self.net.backward_acc(&x, &upstream, &mut grad)?;
        }
        Ok((loss, grad))
    }

    /// One optimizer step on the endpoint batch built from the episodes.
    pub fn train_step(
        &mut self,
        spec: &GridSpec,
        episodes: &[SkillEpisode],
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let batch: Vec<(GridState, GridState, SkillId)> = episodes
            .iter()
            .map(|ep| (ep.end_state(), ep.start_state, ep.skill))
            .collect();
        let (loss, grad) = self.nll_loss(spec, &batch)?;
        opt.apply(&mut self.net.params, &grad)?;
        Ok(loss)
    }

    /// Terminal intrinsic reward: log D(w | s_T, s0) + log K. Zero at the
    /// uninformed uniform posterior.
    pub fn reward(&self, spec: &GridSpec, episode: &SkillEpisode) -> Result<f64> {
        let probs = self.skill_posterior(spec, episode.end_state(), episode.start_state)?;
        let p = probs
            .get(episode.skill.index())
            .ok_or_else(|| Error::Contract("skill out of range".into()))?;
        Ok(p.max(1e-300).ln() + (self.skill_count as f64).ln())
    }

    /// Puts the terminal reward at the last step, zero elsewhere.
    pub fn label_episode_rewards(&self, spec: &GridSpec, episode: &mut SkillEpisode) -> Result<()> {
        let r = self.reward(spec, episode)?;
        for v in episode.rewards.iter_mut() {
            *v = 0.0;
        }
        *episode.rewards.last_mut().unwrap() = r;
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_posterior_is_uniform() {
        let spec = GridSpec::open15();
        let d = Discriminator::zeros(&spec, 4, Topology::Linear);
        let p = d
            .skill_posterior(&spec, GridState::new(3, 3), spec.start_cell)
            .unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_arithmetic_and_shift_invariance() {
        let p = softmax(&[3f64.ln(), 0.0, 0.0, 0.0]);
        assert!((p[0] - 0.5).abs() < 1e-12);
        for v in &p[1..] {
            assert!((v - 1.0 / 6.0).abs() < 1e-12);
        }
        let q = softmax(&[3f64.ln() + 7.0, 7.0, 7.0, 7.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_normalizes_on_random_probes() {
        let spec = GridSpec::four_rooms();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let d = Discriminator::init(&spec, 5, Topology::Mlp2x128, &mut rng);
        let cells = spec.valid_states();
        for _ in 0..1000 {
            let s = cells[rng.gen_range(0..cells.len())];
            let p = d.skill_posterior(&spec, s, spec.start_cell).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_at_uniform_is_log_k() {
        let spec = GridSpec::open15();
        let d = Discriminator::zeros(&spec, 4, Topology::Linear);
        let batch = vec![(GridState::new(1, 2), spec.start_cell, SkillId(3))];
        let (loss, _) = d.nll_loss(&spec, &batch).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!(d.nll_loss(&spec, &[]).is_err());
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let spec = GridSpec::four_rooms();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = Discriminator::init(&spec, 4, Topology::Mlp2x128, &mut rng);
        let cells = spec.valid_states();
        let batch: Vec<(GridState, GridState, SkillId)> = (0..6)
            .map(|_| {
                (
                    cells[rng.gen_range(0..cells.len())],
                    spec.start_cell,
                    SkillId(rng.gen_range(0..4)),
                )
            })
            .collect();
        let (_, analytic) = d.nll_loss(&spec, &batch).unwrap();
        let eps = 1e-5;
        let mut probe = d.clone();
        let mut numeric = vec![0.0; analytic.len()];
        for i in 0..numeric.len() {
            let orig = probe.net.params[i];
            probe.net.params[i] = orig + eps;
            let plus = probe.nll_loss(&spec, &batch).unwrap().0;
            probe.net.params[i] = orig - eps;
            let minus = probe.nll_loss(&spec, &batch).unwrap().0;
            probe.net.params[i] = orig;
            numeric[i] = (plus - minus) / (2.0 * eps);
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in analytic.iter().zip(&numeric) {
            num += (a - b) * (a - b);
            den += a * a + b * b;
        }
        assert!((num / den).sqrt() <= 1e-4);
    }

    #[test]
    fn reward_values() {
        let spec = GridSpec::open15();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let d = Discriminator::zeros(&spec, 4, Topology::Linear);
        let ep = crate::skills::run_skill_episode(
            &spec,
            &crate::skills::UniformPolicy,
            SkillId(2),
            spec.start_cell,
            5,
            &mut rng,
        )
        .unwrap();
        // uniform posterior -> zero reward
        assert!(d.reward(&spec, &ep).unwrap().abs() < 1e-12);
        // reward is bounded by log K and attains it only at a point mass;
        // approximate a point mass with huge logits
        let mut sharp = Discriminator::zeros(&spec, 4, Topology::Linear);
        let bias_off = 4 * sharp.net.input_dim;
        sharp.net.params[bias_off + 2] = 500.0;
        let r = sharp.reward(&spec, &ep).unwrap();
        assert!((r - 4f64.ln()).abs() < 1e-9);
        // posterior 0.1 on the true skill
        let mut weak = Discriminator::zeros(&spec, 4, Topology::Linear);
        // logits (ln(0.1/0.3), 0, 0, 0) give p0 = 0.1 with the rest at 0.3
        weak.net.params[bias_off] = (0.1f64 / 0.3).ln();
        let mut ep0 = ep.clone();
        ep0.skill = SkillId(0);
        let r = weak.reward(&spec, &ep0).unwrap();
        assert!((r - (0.1f64.ln() + 4f64.ln())).abs() < 1e-9);
        assert!(r <= 4f64.ln());
    }

    #[test]
    fn terminal_labeling() {
        let spec = GridSpec::open15();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let d = Discriminator::init(&spec, 4, Topology::Linear, &mut rng);
        let mut ep = crate::skills::run_skill_episode(
            &spec,
            &crate::skills::UniformPolicy,
            SkillId(1),
            spec.start_cell,
            6,
            &mut rng,
        )
        .unwrap();
        d.label_episode_rewards(&spec, &mut ep).unwrap();
        for r in &ep.rewards[..5] {
            assert_eq!(*r, 0.0);
        }
        assert!(ep.rewards[5] <= 4f64.ln());
    }

    #[test]
    fn loss_decreases_on_separable_fixture() {
        let spec = GridSpec::open15();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut d = Discriminator::init(&spec, 4, Topology::Linear, &mut rng);
        let endpoints = [
            GridState::new(0, 7),
            GridState::new(14, 7),
            GridState::new(7, 0),
            GridState::new(7, 14),
        ];
        let batch: Vec<(GridState, GridState, SkillId)> = endpoints
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, spec.start_cell, SkillId(i)))
            .collect();
        let mut opt = Optimizer::sgd(0.1);
        let mut last = f64::INFINITY;
        for _ in 0..12 {
            let (loss, grad) = d.nll_loss(&spec, &batch).unwrap();
            assert!(loss < last);
            last = loss;
            opt.apply(&mut d.net.params, &grad).unwrap();
        }
    }
}
