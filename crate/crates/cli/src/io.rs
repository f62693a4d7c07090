use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use pose2traj::data::{parse_frame_records, write_frame_records_annotated, RecordFile, RecordFormat};

use crate::error::CliError;

pub fn record_format(path: &Path, explicit: Option<RecordFormat>) -> Result<RecordFormat, CliError> {
    explicit.or_else(|| RecordFormat::from_path(path)).ok_or_else(|| {
        CliError::Input(format!(
            "{}: cannot tell the record format from the extension; use --format",
            path.display()
        ))
    })
}

pub fn read_records(path: &Path, format: Option<RecordFormat>) -> Result<RecordFile, CliError> {
    let format = record_format(path, format)?;
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_frame_records(file, format)
        .map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

pub fn write_records(
    path: &Path,
    file: &RecordFile,
    format: Option<RecordFormat>,
    notes: &str,
) -> Result<(), CliError> {
    let format = record_format(path, format)?;
    let mut out = create(path)?;
    write_frame_records_annotated(file, format, notes, &mut out)?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Input(format!("stdout: {e}")))
        }
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}
