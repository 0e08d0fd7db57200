//! Output directory handling. Every file a subcommand writes goes through
//! [`OutDir`], which only accepts plain file names.

use std::fs;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use togglebench_core::jsonl;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        let rel = Path::new(name);
        assert!(
            rel.components().all(|c| matches!(c, Component::Normal(_))),
            "output name `{name}` escapes the output directory"
        );
        self.root.join(rel)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn text(&self, name: &str, content: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let s = serde_json::to_string_pretty(value)?;
        self.text(name, &(s + "\n"))
    }

    pub fn jsonl<'a, T: Serialize + 'a>(
        &self,
        name: &str,
        values: impl IntoIterator<Item = &'a T>,
    ) -> Result<PathBuf> {
        let p = self.path(name);
        jsonl::write(&p, values)?;
        Ok(p)
    }

    pub fn remove(&self, name: &str) -> Result<()> {
        let p = self.path(name);
        match fs::remove_file(&p) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
                Err(e).with_context(|| format!("removing {}", p.display()))
            }
            _ => Ok(()),
        }
    }
}

/// Rejects input files that live inside the output directory under a name
/// the command is about to overwrite.
pub fn ensure_distinct(input: &Path, output: &Path) -> Result<()> {
    if let (Ok(a), Ok(b)) = (input.canonicalize(), output.canonicalize()) {
        if a == b {
            bail!("{} would be overwritten by the output", input.display());
        }
    }
    Ok(())
}
