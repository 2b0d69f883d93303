//! Shared helpers for the sidecar file format: a JSON header next to a raw
//! little-endian f32 payload, `<name>.json` + `<name>.raw`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) const SCHEMA_VERSION: u32 = 1;
pub(crate) const DTYPE_F32: &str = "f32";
pub(crate) const ENDIAN_LITTLE: &str = "little";

/// Resolve a user-supplied path to its header/payload pair. The path may be
/// the bare base name or either sidecar file.
pub(crate) fn sidecar_paths(path: &Path) -> (PathBuf, PathBuf) {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => (path.with_extension("json"), path.with_extension("raw")),
        _ => {
            let mut json = path.as_os_str().to_owned();
            json.push(".json");
            let mut raw = path.as_os_str().to_owned();
            raw.push(".raw");
            (PathBuf::from(json), PathBuf::from(raw))
        }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub(crate) fn check_schema(path: &Path, header: &serde_json::Value, kind: &str) -> Result<()> {
    let schema = header.get("schema").and_then(|v| v.as_u64());
    if schema != Some(SCHEMA_VERSION as u64) {
        return Err(Error::format(
            path,
            format!("unsupported schema {schema:?}, expected {SCHEMA_VERSION}"),
        ));
    }
    let got_kind = header.get("kind").and_then(|v| v.as_str());
    if got_kind != Some(kind) {
        return Err(Error::format(
            path,
            format!("wrong kind {got_kind:?}, expected {kind:?}"),
        ));
    }
    let dtype = header.get("dtype").and_then(|v| v.as_str());
    if dtype != Some(DTYPE_F32) {
        return Err(Error::format(path, format!("unsupported dtype {dtype:?}")));
    }
    let endian = header.get("endianness").and_then(|v| v.as_str());
    if endian != Some(ENDIAN_LITTLE) {
        return Err(Error::format(
            path,
            format!("unsupported endianness {endian:?}"),
        ));
    }
    Ok(())
}

pub(crate) fn write_raw_f32(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_raw_f32(path: &Path, expected_len: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected_len * 4 {
        return Err(Error::format(
            path,
            format!(
                "raw payload is {} bytes, header implies {} ({} f32 values)",
                bytes.len(),
                expected_len * 4,
                expected_len
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Reject payloads containing NaN or infinities, reporting the first offender.
pub(crate) fn check_finite(path: &Path, data: &[f32]) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(
            path,
            format!("non-finite value {} at flat index {i}", data[i]),
        ));
    }
    Ok(())
}
