//! Skill discovery on grid worlds.
//!
//! Two intrinsic-reward objectives share one runtime: a Wasserstein-distance
//! potential trained against each skill's state visitation, and a
//! discriminator baseline that classifies skills from episode endpoints.
//! An exact optimal-transport solver validates the learned potentials.

pub mod config;
pub mod grid;
pub mod net;
pub mod opt;
pub mod ot;
pub mod reinforce;
pub mod report;
pub mod runner;
pub mod skills;
pub mod vic;
pub mod wic;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
