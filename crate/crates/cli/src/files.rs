use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use tlh_core::index::{read_ids, write_ids};
use tlh_core::{codes, BitCode, EncoderParams, FeatureMatrix, LabelMode, LabelStore};

use crate::error::{io_err, CliError, Context, Result};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Writes through a buffer, creating parent directories as needed.
pub fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> tlh_core::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = File::create(path).map(BufWriter::new).map_err(io_err(path))?;
    body(&mut w).context(|| format!("writing {}", path.display()))?;
    w.flush().map_err(io_err(path))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::read_fvc(&mut open(path)?).context(|| path.display().to_string())
}

pub fn read_labels(path: &Path, mode: Option<LabelMode>) -> Result<LabelStore> {
    LabelStore::read(open(path)?, mode).context(|| path.display().to_string())
}

pub fn read_encoder(path: &Path) -> Result<EncoderParams> {
    EncoderParams::read_checkpoint(&mut open(path)?).context(|| path.display().to_string())
}

pub fn write_encoder(path: &Path, params: &EncoderParams) -> Result<()> {
    write_with(path, |w| params.write_checkpoint(w))
}

/// Id sidecar of a code file: same path with extension `ids`.
pub fn ids_path(codes: &Path) -> PathBuf {
    codes.with_extension("ids")
}

pub fn write_codes(path: &Path, bits: usize, codes: &[BitCode], ids: &[u64]) -> Result<()> {
    write_with(path, |w| codes::write_codes(w, bits, codes))?;
    write_with(&ids_path(path), |w| write_ids(w, ids))
}

pub fn read_codes(path: &Path) -> Result<(Vec<BitCode>, Vec<u64>)> {
    let (_, codes) = codes::read_codes(&mut open(path)?).context(|| path.display().to_string())?;
    let sidecar = ids_path(path);
    let ids = read_ids(open(&sidecar)?).context(|| sidecar.display().to_string())?;
    if ids.len() != codes.len() {
        return Err(CliError::Core {
            context: sidecar.display().to_string(),
            source: tlh_core::Error::DimensionMismatch {
                expected: codes.len(),
                actual: ids.len(),
            },
        });
    }
    Ok((codes, ids))
}
