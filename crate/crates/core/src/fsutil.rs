//! Atomic file and directory output.

use std::io::Write;
use std::path::{Path, PathBuf};

fn parent_of(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Write `bytes` to a temporary file next to `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = parent_of(path);
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".nlgp-tmp-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// A directory built under a temporary name and renamed into place by
/// [`StagingDir::commit`]. Dropping it uncommitted removes everything written.
#[derive(Debug)]
pub struct StagingDir {
    tmp: Option<tempfile::TempDir>,
    target: PathBuf,
}

impl StagingDir {
    pub fn new(target: &Path) -> std::io::Result<Self> {
        let dir = parent_of(target);
        std::fs::create_dir_all(dir)?;
        let tmp = tempfile::Builder::new().prefix(".nlgp-stage-").tempdir_in(dir)?;
        Ok(StagingDir {
            tmp: Some(tmp),
            target: target.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        self.tmp.as_ref().expect("not committed").path()
    }

    /// Replace the target directory with the staged one.
    pub fn commit(mut self) -> std::io::Result<PathBuf> {
        let tmp = self.tmp.take().expect("not committed").keep();
        if self.target.exists() {
            std::fs::remove_dir_all(&self.target)?;
        }
        std::fs::rename(&tmp, &self.target)?;
        Ok(self.target.clone())
    }
}
