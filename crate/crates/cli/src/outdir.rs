//! Exclusive ownership of an output directory.

use crate::error::{CliError, CliResult};
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

pub const LOCK_NAME: &str = ".rootopt.lock";

/// An output directory held for the lifetime of one invocation.
///
/// Claiming fails if another invocation holds the lock, or if the directory
/// already has contents and `force` is not set. The lock file is removed on
/// drop.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    lock: PathBuf,
}

impl OutDir {
    pub fn claim(root: &Path, force: bool) -> CliResult<Self> {
        if root.exists() && !root.is_dir() {
            return Err(CliError::config(format!("{} exists and is not a directory", root.display())));
        }
        let lock = root.join(LOCK_NAME);
        if lock.exists() {
            return Err(CliError::Locked(root.to_path_buf()));
        }
        if root.exists() && fs::read_dir(root)?.next().is_some() && !force {
            return Err(CliError::config(format!(
                "{} already holds a run; pass --force to overwrite",
                root.display()
            )));
        }
        fs::create_dir_all(root)?;
        let mut file = match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(CliError::Locked(root.to_path_buf())),
            Err(e) => return Err(e.into()),
        };
        writeln!(file, "{}", std::process::id())?;
        Ok(Self {
            root: root.to_path_buf(),
            lock,
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
