//! Run configuration merged from flags, environment, and a config file.
//!
//! Precedence per field: command-line flag, then `ROBUST_PATH_*` environment
//! variable (caps only), then the JSON config file, then the built-in
//! default. Validation failures are usage errors (exit 2).

use std::path::PathBuf;

use anyhow::{anyhow, Context};
use serde::Deserialize;

use robust_path::Instance;

use crate::genspec::{self, GenOutput};
use crate::record::{Caps, Pipeline};
use crate::CliError;

pub const ENV_ENUM_CAP: &str = "ROBUST_PATH_ENUM_CAP";
pub const ENV_SPACE_CAP: &str = "ROBUST_PATH_SPACE_CAP";
pub const ENV_NODE_CAP: &str = "ROBUST_PATH_NODE_CAP";

#[derive(clap::Args)]
pub struct CommonArgs {
    /// Instance file to load; mutually exclusive with --gen.
    #[arg(long, conflicts_with = "gen")]
    pub instance: Option<PathBuf>,
    /// Generator spec producing the instance in memory.
    #[arg(long)]
    pub gen: Option<String>,
    #[arg(long)]
    pub pipeline: Pipeline,
    /// Rounding trials; stochastic pipelines keep the best draw.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed for the rounding stage.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON config file supplying defaults for trials, seed, and caps.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub caps: CapsArgs,
}

#[derive(clap::Args, Clone, Copy)]
pub struct CapsArgs {
    /// Path-enumeration cap for brute-force optima.
    #[arg(long)]
    pub enum_cap: Option<usize>,
    /// Label-space cap for the treewidth pipeline.
    #[arg(long)]
    pub space_cap: Option<u64>,
    /// Node cap for the metatree pipeline.
    #[arg(long)]
    pub node_cap: Option<u64>,
}

/// Optional overrides loaded from `--config <file>`.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub enum_cap: Option<usize>,
    pub space_cap: Option<u64>,
    pub node_cap: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(CliError::usage)?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(CliError::usage)
    }
}

/// Fully resolved configuration for `solve` and `moment-check`.
pub struct RunConfig {
    pub source: InstanceSource,
    pub pipeline: Pipeline,
    pub trials: usize,
    pub seed: Option<u64>,
    pub caps: Caps,
}

pub enum InstanceSource {
    File(PathBuf),
    Gen(String),
}

impl InstanceSource {
    /// Instance id used in records: the file stem or the generator spec.
    pub fn id(&self) -> String {
        match self {
            InstanceSource::File(path) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            InstanceSource::Gen(spec) => spec.clone(),
        }
    }

    pub fn load(&self) -> Result<Instance, CliError> {
        match self {
            InstanceSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading instance {}", path.display()))
                    .map_err(CliError::usage)?;
                Instance::from_text(&text)
                    .with_context(|| format!("parsing instance {}", path.display()))
                    .map_err(CliError::usage)
            }
            InstanceSource::Gen(spec) => match genspec::build(spec)? {
                GenOutput::Path(inst) => Ok(inst),
                GenOutput::Cover(_) => Err(CliError::usage(anyhow!(
                    "generator spec `{spec}` yields a set-cover file, not a path instance"
                ))),
            },
        }
    }
}

fn env_cap(name: &str) -> Result<Option<u64>, CliError> {
    match std::env::var(name) {
        Ok(raw) => raw
            .parse::<u64>()
            .map(Some)
            .with_context(|| format!("parsing {name}={raw}"))
            .map_err(CliError::usage),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::usage(
            anyhow::Error::new(e).context(format!("reading {name}")),
        )),
    }
}

pub fn resolve_caps(flags: CapsArgs, file: &FileConfig) -> Result<Caps, CliError> {
    let defaults = Caps::default();
    let enum_cap = match flags.enum_cap {
        Some(v) => v,
        None => match env_cap(ENV_ENUM_CAP)? {
            Some(v) => v as usize,
            None => file.enum_cap.unwrap_or(defaults.enum_cap),
        },
    };
    let space_cap = match flags.space_cap {
        Some(v) => v as u128,
        None => match env_cap(ENV_SPACE_CAP)? {
            Some(v) => v as u128,
            None => file.space_cap.map(|v| v as u128).unwrap_or(defaults.space_cap),
        },
    };
    let node_cap = match flags.node_cap {
        Some(v) => v as u128,
        None => match env_cap(ENV_NODE_CAP)? {
            Some(v) => v as u128,
            None => file.node_cap.map(|v| v as u128).unwrap_or(defaults.node_cap),
        },
    };
    let caps = Caps { enum_cap, space_cap, node_cap };
    if caps.enum_cap == 0 || caps.space_cap == 0 || caps.node_cap == 0 {
        return Err(CliError::usage(anyhow!("caps must be positive")));
    }
    Ok(caps)
}

impl RunConfig {
    pub fn resolve(args: CommonArgs) -> Result<Self, CliError> {
        let file = FileConfig::load(args.config.as_ref())?;
        let source = match (args.instance, args.gen) {
            (Some(path), None) => InstanceSource::File(path),
            (None, Some(spec)) => InstanceSource::Gen(spec),
            (None, None) => {
                return Err(CliError::usage(anyhow!("one of --instance or --gen is required")))
            }
            (Some(_), Some(_)) => unreachable!("clap rejects the conflict"),
        };
        let caps = resolve_caps(args.caps, &file)?;
        let trials = args.trials.or(file.trials).unwrap_or(32);
        let seed = args.seed.or(file.seed);
        if args.pipeline.is_stochastic() && seed.is_none() {
            return Err(CliError::usage(anyhow!(
                "--seed is required for the {} pipeline",
                args.pipeline
            )));
        }
        if trials == 0 {
            return Err(CliError::usage(anyhow!("--trials must be positive")));
        }
        Ok(RunConfig { source, pipeline: args.pipeline, trials, seed, caps })
    }
}
