//! File formats: multichannel WAV, label and result CSVs, tensor files,
//! calibration tables and JSON documents.
//!
//! Every format carries `"version": 1` where it has a header. CSVs use `,`
//! separators, `.` decimals and `\n` line ends.

pub mod calibration;
pub mod labels;
pub mod results;
pub mod tensor;
pub mod wav;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("field `version`: unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}
