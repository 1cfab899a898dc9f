//! Skill sampling, fixed-length skill episodes, start-state chaining, and
//! visitation sampling.

use rand::Rng;

use crate::grid::{GridAction, GridSpec, GridState};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SkillId(pub usize);

impl SkillId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One T-step rollout under a fixed skill. Rewards start zeroed and are
/// labeled afterwards by whichever objective is in play.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillEpisode {
    pub skill: SkillId,
    pub start_state: GridState,
    pub states: Vec<GridState>,
    pub actions: Vec<GridAction>,
    pub rewards: Vec<f64>,
}

impl SkillEpisode {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn end_state(&self) -> GridState {
        *self.states.last().unwrap()
    }

    /// Re-applies the recorded actions and checks they reproduce the state
    /// sequence exactly.
    pub fn replay_check(&self, spec: &GridSpec) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 || self.states[0] != self.start_state {
            return Err(Error::Contract("episode shape invalid".into()));
        }
        let mut s = self.start_state;
        for (t, &a) in self.actions.iter().enumerate() {
            s = spec.step(s, a)?;
            if s != self.states[t + 1] {
                return Err(Error::Contract(format!("replay diverges at step {t}")));
            }
        }
        Ok(())
    }

    /// One episode per line: `skill start_row,start_col actions`.
    pub fn to_line(&self) -> String {
        let actions: String = self.actions.iter().map(|a| a.to_char()).collect();
        format!(
            "{} {},{} {}",
            self.skill.0, self.start_state.row, self.start_state.col, actions
        )
    }

    pub fn from_line(spec: &GridSpec, line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let skill: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("missing skill id".into()))?;
        let start = parts
            .next()
            .and_then(|s| s.split_once(','))
            .and_then(|(r, c)| Some(GridState::new(r.parse().ok()?, c.parse().ok()?)))
            .ok_or_else(|| Error::Parse("missing start cell".into()))?;
        let actions: Vec<GridAction> = parts
            .next()
            .unwrap_or("")
            .chars()
            .map(|c| GridAction::from_char(c).ok_or_else(|| Error::Parse(format!("bad action '{c}'"))))
            .collect::<Result<_>>()?;
        let mut states = vec![start];
        let mut s = start;
        for &a in &actions {
            s = spec.step(s, a)?;
            states.push(s);
        }
        let rewards = vec![0.0; actions.len()];
        Ok(Self {
            skill: SkillId(skill),
            start_state: start,
            states,
            actions,
            rewards,
        })
    }
}

/// A single state drawn from an episode's visitation distribution, uniform
/// over time steps 1..=T.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VisitationSample {
    pub state: GridState,
    pub start_state: GridState,
    pub skill: SkillId,
}

/// Skill-conditioned action selection.
pub trait Policy {
    fn act<R: Rng>(&self, spec: &GridSpec, s: GridState, skill: SkillId, rng: &mut R)
        -> GridAction;
}

/// Uniform-random policy, used for evaluation baselines and tests.
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn act<R: Rng>(&self, _: &GridSpec, _: GridState, _: SkillId, rng: &mut R) -> GridAction {
        GridAction::ALL[rng.gen_range(0..GridAction::ALL.len())]
    }
}

pub fn sample_skill<R: Rng>(rng: &mut R, k: usize) -> Result<SkillId> {
    if k == 0 {
        return Err(Error::Config {
            field: "k".into(),
            message: "skill count must be at least 1".into(),
        });
    }
    Ok(SkillId(rng.gen_range(0..k)))
}

pub fn run_skill_episode<P: Policy, R: Rng>(
    spec: &GridSpec,
    policy: &P,
    skill: SkillId,
    s0: GridState,
    horizon: usize,
    rng: &mut R,
) -> Result<SkillEpisode> {
    if horizon == 0 {
        return Err(Error::Contract("episode horizon must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    states.push(s0);
    let mut s = s0;
    for _ in 0..horizon {
        let a = policy.act(spec, s, skill, rng);
        s = spec.step(s, a)?;
        actions.push(a);
        states.push(s);
    }
    Ok(SkillEpisode {
        skill,
        start_state: s0,
        states,
        actions,
        rewards: vec![0.0; horizon],
    })
}

/// How episodes chain: reset to the spec's start cell every
/// `episodes_between_resets` episodes, otherwise seed each episode with the
/// previous end state.
#[derive(Clone, Copy, Debug)]
pub struct ChainSchedule {
    pub total_episodes: usize,
    pub episodes_between_resets: usize,
    pub horizon: usize,
    pub skill_count: usize,
}

pub fn chain_episodes<P: Policy, R: Rng>(
    spec: &GridSpec,
    policy: &P,
    schedule: ChainSchedule,
    rng: &mut R,
) -> Result<Vec<SkillEpisode>> {
    let mut chain = ChainState::new(spec.start_cell, schedule.episodes_between_resets);
    let mut episodes = Vec::with_capacity(schedule.total_episodes);
    for _ in 0..schedule.total_episodes {
        let skill = sample_skill(rng, schedule.skill_count)?;
        let s0 = chain.next_start(spec);
        let ep = run_skill_episode(spec, policy, skill, s0, schedule.horizon, rng)?;
        chain.record_end(ep.end_state());
        episodes.push(ep);
    }
    Ok(episodes)
}

/// Carries chaining across collection batches so the reset cadence survives
/// update boundaries.
#[derive(Clone, Debug)]
pub struct ChainState {
    reset_cell: GridState,
    episodes_between_resets: usize,
    since_reset: usize,
    next_start: GridState,
}

impl ChainState {
    pub fn new(reset_cell: GridState, episodes_between_resets: usize) -> Self {
        Self {
            reset_cell,
            episodes_between_resets: episodes_between_resets.max(1),
            since_reset: 0,
            next_start: reset_cell,
        }
    }

    pub fn next_start(&mut self, _spec: &GridSpec) -> GridState {
        if self.since_reset >= self.episodes_between_resets {
            self.since_reset = 0;
            self.next_start = self.reset_cell;
        }
        self.since_reset += 1;
        self.next_start
    }

    pub fn record_end(&mut self, end: GridState) {
        self.next_start = end;
    }
}

pub fn visitation_samples<R: Rng>(
    episode: &SkillEpisode,
    n: usize,
    rng: &mut R,
) -> Vec<VisitationSample> {
    let t = episode.horizon();
    (0..n)
        .map(|_| {
            let step = rng.gen_range(1..=t);
            VisitationSample {
                state: episode.states[step],
                start_state: episode.start_state,
                skill: episode.skill,
            }
        })
        .collect()
}
