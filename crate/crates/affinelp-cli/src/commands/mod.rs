pub mod gen;
pub mod pe;
pub mod report;
pub mod solve;
pub mod synth;
pub mod verify;

use crate::config::ExperimentConfig;
use anyhow::{Context as _, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        affinelp::io::save_json(self.path(name), value)
            .with_context(|| format!("cannot write {name}"))
    }
}

/// Report preamble shared by every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seed: config.seed,
        }
    }
}

pub fn read_dataset(ctx: &Context) -> Result<affinelp::model::Dataset> {
    affinelp::io::read_dataset(ctx.path("dataset.csv"), ctx.path("dataset.json"))
        .context("cannot read the dataset (run `affinelp gen` first?)")
}

pub fn read_system(ctx: &Context) -> Result<affinelp::model::AffineSystem> {
    affinelp::io::load_json(ctx.path("system.json"))
        .context("cannot read system.json (run `affinelp gen` first?)")
}

pub fn read_cost(ctx: &Context) -> Result<affinelp::model::StageCost> {
    affinelp::io::load_json(ctx.path("cost.json"))
        .context("cannot read cost.json (run `affinelp gen` first?)")
}

/// Optional file: `Ok(None)` when absent.
pub fn maybe_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(affinelp::io::load_json(path).with_context(|| {
        format!("cannot parse {}", path.display())
    })?))
}
