//! On-disk formats: the three ingestion tables, checkpoints and reports.

pub mod checkpoint;
pub mod report;
pub mod tables;

use std::fs;
use std::path::Path;

use crate::error::{AppError, AppResult};

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> AppResult<()> {
    fs::write(path, contents).map_err(|e| AppError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}
