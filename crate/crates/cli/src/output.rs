//! Staged, all-or-nothing output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

/// Relative output paths are placed under this directory when it is set.
pub const OUTPUT_DIR_ENV: &str = "CLIR_OUTPUT_DIR";

pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Output files written to temporaries next to their destination and moved
/// into place together by [`Outputs::commit`]. Dropping without committing
/// leaves nothing behind.
#[derive(Default)]
pub struct Outputs {
    staged: Vec<(PathBuf, NamedTempFile)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stage(&mut self, path: &Path, bytes: &[u8]) -> Result<PathBuf> {
        let path = resolve(path);
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent)
            .with_context(|| format!("cannot create directory {}", parent.display()))?;
        let mut tmp = NamedTempFile::new_in(&parent)
            .with_context(|| format!("cannot create a temporary file in {}", parent.display()))?;
        tmp.write_all(bytes)
            .and_then(|_| tmp.as_file().sync_all())
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.staged.push((path.clone(), tmp));
        Ok(path)
    }

    /// Moves every staged file into place; on failure the files already
    /// moved are removed again.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done: Vec<PathBuf> = Vec::with_capacity(self.staged.len());
        for (path, tmp) in self.staged {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e.error).with_context(|| format!("cannot write {}", path.display()));
            }
            done.push(path);
        }
        Ok(done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_lands_before_commit() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("sub/out.txt");
        let mut out = Outputs::new();
        out.stage(&target, b"hello").unwrap();
        assert!(!target.exists());
        drop(out);
        assert!(!target.exists());
        assert_eq!(std::fs::read_dir(dir.path().join("sub")).unwrap().count(), 0);

        let mut out = Outputs::new();
        out.stage(&target, b"hello").unwrap();
        out.commit().unwrap();
        assert_eq!(std::fs::read(&target).unwrap(), b"hello");
    }
}
