//! Write-to-temp-then-rename helpers.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

pub(crate) const TEMP_PREFIX: &str = ".tmp-";

/// What happens between writing the temporary file and renaming it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Finish {
    Rename,
    /// Leave the temporary file behind and skip the rename, as a process
    /// killed at that instant would.
    Abandon,
}

pub(crate) fn atomic_write(path: &Path, content: &[u8], finish: Finish) -> io::Result<()> {
    let parent = path
        .parent()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no parent"))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(TEMP_PREFIX)
        .tempfile_in(parent)?;
    tmp.write_all(content)?;
    tmp.as_file().sync_all()?;
    match finish {
        Finish::Rename => {
            tmp.persist(path).map_err(|e| e.error)?;
            sync_dir(parent);
            Ok(())
        }
        Finish::Abandon => {
            tmp.keep().map_err(|e| e.error)?;
            Err(io::Error::other("simulated crash before rename"))
        }
    }
}

/// Makes renames inside `dir` durable, where the platform allows it.
pub(crate) fn sync_dir(dir: &Path) {
    if let Ok(handle) = fs::File::open(dir) {
        let _ = handle.sync_all();
    }
}

/// Previous content of a file, `None` when it did not exist.
pub(crate) fn snapshot(path: &Path) -> io::Result<Option<Vec<u8>>> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(bytes)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

pub(crate) fn restore(path: &Path, previous: Option<&[u8]>) -> io::Result<()> {
    match previous {
        Some(bytes) => atomic_write(path, bytes, Finish::Rename),
        None => match fs::remove_file(path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        },
    }
}
