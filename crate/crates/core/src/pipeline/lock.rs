use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use super::PipelineError;

pub const LOCK_FILE: &str = ".lock";

/// Exclusive ownership of an output directory, released on drop.
///
/// The lock file holds the owner's PID; a lock whose process is gone
/// (no `/proc/<pid>`) is stale and gets replaced.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

fn process_alive(pid: u32) -> bool {
    Path::new("/proc").join(pid.to_string()).exists()
}

impl RunLock {
    pub fn acquire(output_dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(output_dir)?;
        let path = output_dir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id())?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    let owner = fs::read_to_string(&path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    match owner {
                        Some(pid) if process_alive(pid) => {
                            return Err(PipelineError::Lock(format!(
                                "{} is in use by process {pid}",
                                output_dir.display()
                            )));
                        }
                        _ => {
                            log::warn!("removing stale lock {}", path.display());
                            fs::remove_file(&path)?;
                        }
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(PipelineError::Lock(format!("could not lock {}", output_dir.display())))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
