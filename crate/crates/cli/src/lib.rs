//! Command-line front end: config loading, output-directory ownership and the
//! subcommands behind the `rootopt` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod outdir;
pub mod svg;

use crate::error::CliResult;
use crate::outdir::OutDir;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Effective configuration written next to the artifacts of every run.
pub const CONFIG_ECHO: &str = "config.toml";

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
    pub print_config: bool,
}

/// Loads the config, applies overrides, then either prints it or claims the
/// output directory and runs `body`.
pub fn execute<T: Serialize + DeserializeOwned + Default>(
    name: &str,
    inv: &Invocation,
    overrides: impl FnOnce(&mut T, Option<u64>),
    body: impl FnOnce(&T, &OutDir) -> CliResult<()>,
) -> CliResult<()> {
    let mut cfg: T = config::load(inv.config.as_deref())?;
    overrides(&mut cfg, inv.seed);
    let text = config::render(&cfg)?;
    if inv.print_config {
        print!("{text}");
        return Ok(());
    }
    let default_out = Path::new("runs").join(name);
    let out = OutDir::claim(inv.out.as_deref().unwrap_or(&default_out), inv.force)?;
    out.write(CONFIG_ECHO, &text)?;
    body(&cfg, &out)
}
