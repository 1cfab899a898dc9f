//! The experiment loop: collect chained skill episodes, label intrinsic
//! rewards, update the objective model and the policy, and log metrics.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Method};
use crate::grid::{GridSpec, GridState};
use crate::opt::Optimizer;
use crate::reinforce::{reinforce_update, Baseline, SkillPolicy};
use crate::skills::{run_skill_episode, sample_skill, ChainState, SkillEpisode};
use crate::vic::Discriminator;
use crate::wic::{PotentialBank, WicConfig};
use crate::{Error, Result};

/// Number of distinct states visited in one episode, start included.
pub fn episodic_coverage(episode: &SkillEpisode) -> usize {
    let set: HashSet<GridState> = episode.states.iter().copied().collect();
    set.len()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub update: usize,
    pub mean_episodic_coverage: f64,
    pub lifetime_coverage: usize,
    pub mean_return: f64,
    pub per_skill_endpoint_distance: Vec<f64>,
}

/// The persisted metrics stream of one seeded run.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn to_csv(&self, skill_count: usize) -> String {
        let mut s = String::from("update,mean_episodic_coverage,lifetime_coverage,mean_return");
        for k in 0..skill_count {
            s.push_str(&format!(",skill{k}_endpoint_distance"));
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}",
                row.update, row.mean_episodic_coverage, row.lifetime_coverage, row.mean_return
            ));
            for d in &row.per_skill_endpoint_distance {
                s.push_str(&format!(",{d}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty metrics file".into()))?;
        let skill_count = header.split(',').count() - 4;
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != skill_count + 4 {
                return Err(Error::Parse(format!("metrics row {n} has wrong arity")));
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))
            };
            rows.push(RunRow {
                update: fields[0]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad update index '{}'", fields[0])))?,
                mean_episodic_coverage: parse_f(fields[1])?,
                lifetime_coverage: fields[2]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad coverage '{}'", fields[2])))?,
                mean_return: parse_f(fields[3])?,
                per_skill_endpoint_distance: fields[4..]
                    .iter()
                    .map(|s| parse_f(s))
                    .collect::<Result<_>>()?,
            });
        }
        Ok(Self { rows })
    }
}

/// Either objective model behind one labeling/training interface.
pub enum ObjectiveModel {
    Wic(PotentialBank),
    Vic(Discriminator),
}

impl ObjectiveModel {
    pub fn save_file(&self, path: &Path) -> Result<()> {
        match self {
            ObjectiveModel::Wic(bank) => bank.save_file(path),
            ObjectiveModel::Vic(d) => d.save_file(path),
        }
    }
}

pub struct TrainedRun {
    pub record: RunRecord,
    pub policy: SkillPolicy,
    pub baseline: Baseline,
    pub objective: ObjectiveModel,
}

// BFS tables keyed by source cell; chaining revisits sources constantly.
struct DistanceCache<'a> {
    spec: &'a GridSpec,
    tables: HashMap<GridState, Vec<Option<u32>>>,
}

impl<'a> DistanceCache<'a> {
    fn new(spec: &'a GridSpec) -> Self {
        Self { spec, tables: HashMap::new() }
    }

    fn distance(&mut self, from: GridState, to: GridState) -> f64 {
        let spec = self.spec;
        let table = self
            .tables
            .entry(from)
            .or_insert_with(|| spec.bfs_distances(from).unwrap());
        table[spec.cell_index(to)].map(f64::from).unwrap_or(f64::NAN)
    }
}

/// Runs one seeded experiment and writes metrics, resolved config, and
/// checkpoints under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainedRun> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.txt"), cfg.to_config_string())?;

    let spec = cfg.grid_spec();
    let topology = cfg.topology();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = SkillPolicy::init(&spec, cfg.k, topology, &mut rng);
    let mut baseline = Baseline::init(&spec, topology, &mut rng);
    let mut objective = match cfg.method {
        Method::Wic => ObjectiveModel::Wic(PotentialBank::init(&spec, cfg.k, topology, &mut rng)),
        Method::Vic => ObjectiveModel::Vic(Discriminator::init(&spec, cfg.k, topology, &mut rng)),
    };
    let mut policy_opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, policy.net.params.len());
    let mut baseline_opt =
        Optimizer::new(cfg.optimizer, cfg.learning_rate, baseline.net.params.len());
    let mut objective_opt = {
        let dim = match &objective {
            ObjectiveModel::Wic(b) => b.net.params.len(),
            ObjectiveModel::Vic(d) => d.net.params.len(),
        };
        Optimizer::new(cfg.optimizer, cfg.learning_rate, dim)
    };
    let wic_cfg = WicConfig {
        eta: cfg.eta,
        lipschitz_weight: cfg.lipschitz_weight,
        batch_size: cfg.batch_size,
    };

    let mut chain = ChainState::new(spec.start_cell, cfg.episodes_between_resets);
    let mut lifetime: HashSet<GridState> = HashSet::new();
    let mut distances = DistanceCache::new(&spec);
    let mut record = RunRecord::default();
    let mut last_skill_dist = vec![0.0; cfg.k];

    for update in 0..cfg.total_updates {
        // collect
        let mut episodes = Vec::with_capacity(cfg.episodes_per_update);
        for _ in 0..cfg.episodes_per_update {
            let skill = sample_skill(&mut rng, cfg.k)?;
            let s0 = chain.next_start(&spec);
            let ep = run_skill_episode(&spec, &policy, skill, s0, cfg.t, &mut rng)?;
            chain.record_end(ep.end_state());
            episodes.push(ep);
        }
        // label with the current objective model
        for ep in &mut episodes {
            match &objective {
                ObjectiveModel::Wic(bank) => bank.label_episode_rewards(&spec, ep, cfg.eta)?,
                ObjectiveModel::Vic(d) => d.label_episode_rewards(&spec, ep)?,
            }
        }
        // objective-model update; extra steps let the potential surface keep
        // pace with the policy, which only ever takes one step per batch
        for _ in 0..cfg.objective_steps {
            match &mut objective {
                ObjectiveModel::Wic(bank) => {
                    bank.train_step(&spec, &episodes, &wic_cfg, &mut objective_opt, &mut rng)?;
                }
                ObjectiveModel::Vic(d) => {
                    d.train_step(&spec, &episodes, &mut objective_opt)?;
                }
            }
        }
        // policy/baseline update
        reinforce_update(
            &mut policy,
            &mut baseline,
            &spec,
            &episodes,
            cfg.entropy_weight,
            &mut policy_opt,
            &mut baseline_opt,
        )?;

        // metrics
        let mut coverage = 0.0;
        let mut mean_return = 0.0;
        let mut dist_sum = vec![0.0; cfg.k];
        let mut dist_count = vec![0usize; cfg.k];
        for ep in &episodes {
            coverage += episodic_coverage(ep) as f64 / episodes.len() as f64;
            mean_return += ep.rewards.iter().sum::<f64>() / episodes.len() as f64;
            lifetime.extend(ep.states.iter().copied());
            dist_sum[ep.skill.index()] += distances.distance(ep.start_state, ep.end_state());
            dist_count[ep.skill.index()] += 1;
        }
        for k in 0..cfg.k {
            if dist_count[k] > 0 {
                last_skill_dist[k] = dist_sum[k] / dist_count[k] as f64;
            }
        }
        record.rows.push(RunRow {
            update,
            mean_episodic_coverage: coverage,
            lifetime_coverage: lifetime.len(),
            mean_return,
            per_skill_endpoint_distance: last_skill_dist.clone(),
        });
    }

    std::fs::write(out_dir.join("metrics.csv"), record.to_csv(cfg.k))?;
    policy.save_file(&out_dir.join("policy.bin"))?;
    baseline.save_file(&out_dir.join("baseline.bin"))?;
    objective.save_file(&out_dir.join("objective.bin"))?;

    Ok(TrainedRun {
        record,
        policy,
        baseline,
        objective,
    })
}

#[derive(Clone, Debug)]
pub struct AggregateRow {
    pub update: usize,
    pub mean_episodic_coverage: (f64, f64),
    pub lifetime_coverage: (f64, f64),
    pub mean_return: (f64, f64),
}

/// Runs one experiment per seed and aggregates the shared metrics into
/// mean +/- standard deviation curves.
pub fn multi_seed(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    out_root: &Path,
) -> Result<(Vec<TrainedRun>, Vec<AggregateRow>)> {
    if seeds.is_empty() {
        return Err(Error::Config {
            field: "seeds".into(),
            message: "at least one seed required".into(),
        });
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut c = cfg.clone();
        c.seed = seed;
        let dir = out_root.join(c.run_dir_name());
        runs.push(run_experiment(&c, &dir)?);
    }
    let updates = runs[0].record.rows.len();
    let mut aggregate = Vec::with_capacity(updates);
    for u in 0..updates {
        let stat = |f: &dyn Fn(&RunRow) -> f64| -> (f64, f64) {
            let vals: Vec<f64> = runs.iter().map(|r| f(&r.record.rows[u])).collect();
            mean_std(&vals)
        };
        aggregate.push(AggregateRow {
            update: runs[0].record.rows[u].update,
            mean_episodic_coverage: stat(&|r| r.mean_episodic_coverage),
            lifetime_coverage: stat(&|r| r.lifetime_coverage as f64),
            mean_return: stat(&|r| r.mean_return),
        });
    }
    let mut csv = String::from(
        "update,episodic_coverage_mean,episodic_coverage_std,lifetime_coverage_mean,lifetime_coverage_std,return_mean,return_std\n",
    );
    for row in &aggregate {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.update,
            row.mean_episodic_coverage.0,
            row.mean_episodic_coverage.1,
            row.lifetime_coverage.0,
            row.lifetime_coverage.1,
            row.mean_return.0,
            row.mean_return.1
        ));
    }
    std::fs::create_dir_all(out_root)?;
    std::fs::write(out_root.join(format!("{:016x}-aggregate.csv", cfg.config_hash())), csv)?;
    Ok((runs, aggregate))
}

fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    if vals.iter().all(|&v| v == vals[0]) {
        return (vals[0], 0.0);
    }
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
