//! Experiment configuration: flat `key = value` files, command-line
//! overrides, validation, and the per-run directory name.

use std::fmt::Write as _;
use std::path::Path;

use crate::grid::GridSpec;
use crate::net::Topology;
use crate::opt::OptKind;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Tabular15,
    FourRooms,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Wic,
    Vic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub environment: EnvKind,
    pub method: Method,
    pub k: usize,
    pub t: usize,
    pub eta: f64,
    pub entropy_weight: f64,
    pub lipschitz_weight: f64,
    pub batch_size: usize,
    pub optimizer: OptKind,
    pub learning_rate: f64,
    pub total_updates: usize,
    pub seed: u64,
    pub episodes_between_resets: usize,
    pub episodes_per_update: usize,
    /// Objective-model (potential bank or discriminator) optimizer steps per
    /// batch of episodes. The policy always takes one step per batch.
    pub objective_steps: usize,
    pub eval_rollouts: usize,
}

impl ExperimentConfig {
    /// The tabular experiment defaults: linear function approximators, SGD,
    /// per-episode resets to the grid center.
    pub fn tabular15(method: Method) -> Self {
        Self {
            environment: EnvKind::Tabular15,
            method,
            k: 4,
            t: 10,
            eta: 0.9,
            entropy_weight: 0.01,
            lipschitz_weight: 10.0,
            batch_size: 32,
            optimizer: OptKind::Sgd,
            learning_rate: 0.003,
            total_updates: 2_000_000,
            seed: 0,
            episodes_between_resets: 1,
            episodes_per_update: 1,
            objective_steps: 1,
            eval_rollouts: 32,
        }
    }

    /// The four-rooms experiment defaults: 2x128 ReLU networks, Adam, skill
    /// chaining with a reset every 17 episodes.
    pub fn four_rooms(method: Method) -> Self {
        Self {
            environment: EnvKind::FourRooms,
            method,
            k: 4,
            t: 40,
            eta: 0.9,
            entropy_weight: 0.03,
            lipschitz_weight: 10.0,
            batch_size: 32,
            optimizer: OptKind::Adam,
            learning_rate: 0.001,
            total_updates: 25000,
            seed: 0,
            episodes_between_resets: 17,
            episodes_per_update: 8,
            objective_steps: 4,
            eval_rollouts: 32,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        match self.environment {
            EnvKind::Tabular15 => GridSpec::open15(),
            EnvKind::FourRooms => GridSpec::four_rooms(),
        }
    }

    pub fn topology(&self) -> Topology {
        match self.environment {
            EnvKind::Tabular15 => Topology::Linear,
            EnvKind::FourRooms => Topology::Mlp2x128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, message: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    field: field.into(),
                    message: message.into(),
                })
            }
        };
        check(self.k >= 1, "k", "skill count must be at least 1")?;
        check(self.t >= 1, "t", "episode horizon must be at least 1")?;
        check((0.0..=1.0).contains(&self.eta), "eta", "must lie in [0, 1]")?;
        check(self.entropy_weight >= 0.0, "entropy_weight", "must be non-negative")?;
        check(self.lipschitz_weight >= 0.0, "lipschitz_weight", "must be non-negative")?;
        check(self.batch_size >= 1, "batch_size", "must be at least 1")?;
        check(self.learning_rate > 0.0, "learning_rate", "must be positive")?;
        check(
            self.episodes_between_resets >= 1,
            "episodes_between_resets",
            "must be at least 1",
        )?;
        check(
            self.episodes_per_update >= 1,
            "episodes_per_update",
            "must be at least 1",
        )?;
        check(self.objective_steps >= 1, "objective_steps", "must be at least 1")?;
        check(self.eval_rollouts >= 1, "eval_rollouts", "must be at least 1")?;
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |message: String| Error::Config {
            field: key.to_string(),
            message,
        };
        match key {
            "environment" => {
                self.environment = match value {
                    "tabular15" => EnvKind::Tabular15,
                    "four_rooms" => EnvKind::FourRooms,
                    other => return Err(bad(format!("unknown environment '{other}'"))),
                }
            }
            "method" => {
                self.method = match value {
                    "wic" => Method::Wic,
                    "vic" => Method::Vic,
                    other => return Err(bad(format!("unknown method '{other}'"))),
                }
            }
            "optimizer" => {
                self.optimizer = match value {
                    "sgd" => OptKind::Sgd,
                    "adam" => OptKind::Adam,
                    other => return Err(bad(format!("unknown optimizer '{other}'"))),
                }
            }
            "k" => self.k = parse(key, value)?,
            "t" => self.t = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "entropy_weight" => self.entropy_weight = parse(key, value)?,
            "lipschitz_weight" => self.lipschitz_weight = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "total_updates" => self.total_updates = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "episodes_between_resets" => self.episodes_between_resets = parse(key, value)?,
            "episodes_per_update" => self.episodes_per_update = parse(key, value)?,
            "objective_steps" => self.objective_steps = parse(key, value)?,
            "eval_rollouts" => self.eval_rollouts = parse(key, value)?,
            other => {
                return Err(Error::Config {
                    field: other.to_string(),
                    message: "unknown configuration key".into(),
                })
            }
        }
        Ok(())
    }

    /// Parses a flat `key = value` file on top of the defaults for whichever
    /// environment/method the file names (defaulting to tabular WIC).
    pub fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::tabular15(Method::Wic);
        // apply environment/method first so later keys override the right
        // default block
        let entries: Vec<(String, String)> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Parse(format!("expected 'key = value', got '{l}'")))
            })
            .collect::<Result<_>>()?;
        for (k, v) in entries.iter().filter(|(k, _)| k == "environment") {
            cfg.set(k, v)?;
        }
        if cfg.environment == EnvKind::FourRooms {
            cfg = Self::four_rooms(Method::Wic);
        }
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let env = match self.environment {
            EnvKind::Tabular15 => "tabular15",
            EnvKind::FourRooms => "four_rooms",
        };
        let method = match self.method {
            Method::Wic => "wic",
            Method::Vic => "vic",
        };
        let opt = match self.optimizer {
            OptKind::Sgd => "sgd",
            OptKind::Adam => "adam",
        };
        let _ = writeln!(s, "environment = {env}");
        let _ = writeln!(s, "method = {method}");
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "t = {}", self.t);
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "entropy_weight = {}", self.entropy_weight);
        let _ = writeln!(s, "lipschitz_weight = {}", self.lipschitz_weight);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "optimizer = {opt}");
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "total_updates = {}", self.total_updates);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "episodes_between_resets = {}", self.episodes_between_resets);
        let _ = writeln!(s, "episodes_per_update = {}", self.episodes_per_update);
        let _ = writeln!(s, "objective_steps = {}", self.objective_steps);
        let _ = writeln!(s, "eval_rollouts = {}", self.eval_rollouts);
        s
    }

    /// FNV-1a over the canonical config text, excluding the seed, so one
    /// sweep's runs group under a common prefix.
    pub fn config_hash(&self) -> u64 {
        let mut canonical = self.to_config_string();
        canonical = canonical
            .lines()
            .filter(|l| !l.starts_with("seed ="))
            .collect::<Vec<_>>()
            .join("\n");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in canonical.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn run_dir_name(&self) -> String {
        format!("{:016x}-seed{}", self.config_hash(), self.seed)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        field: key.to_string(),
        message: format!("cannot parse '{value}'"),
    })
}
