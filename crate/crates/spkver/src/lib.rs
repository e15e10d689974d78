//! File formats, stage drivers and the end-to-end pipeline of the `spkver`
//! speaker-verification toolkit. The numerics live in [`spkver_core`].

use std::fs;
use std::io::Write;
use std::path::Path;

pub mod archive;
pub mod config;
pub mod error;
pub mod model_io;
pub mod pipeline;
pub mod plda_io;
pub mod plot;
pub mod report;
pub mod stages;
pub mod wav;

pub use error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`, creating
/// parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?).map_err(|_| Error::format(path.display().to_string(), "not UTF-8"))
}

/// 64-bit FNV-1a, used to fingerprint artifacts in the manifest.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3))
}
