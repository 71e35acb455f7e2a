//! Reading and writing operators and reports.
//!
//! Operators with more than [`INLINE_MAX_MODES`] modes store their matrix in
//! a binary sidecar (`<stem>.matrix.bin`, little-endian `f64` pairs, row
//! major) next to the JSON file. All writes go through a temporary file in
//! the target directory and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{BoundaryOperator, OperatorJson};

pub const INLINE_MAX_MODES: usize = 64;

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// JSON text with sorted keys; `indent = None` gives the compact form.
pub fn to_json_string<T: Serialize>(value: &T, indent: Option<usize>) -> Result<String> {
    // Round-tripping through `Value` sorts map keys.
    let v = serde_json::to_value(value)?;
    let mut out = match indent {
        None => serde_json::to_vec(&v)?,
        Some(n) => {
            let pad = vec![b' '; n];
            let fmt = serde_json::ser::PrettyFormatter::with_indent(&pad);
            let mut buf = Vec::new();
            let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
            v.serialize(&mut ser)?;
            buf
        }
    };
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, indent: Option<usize>) -> Result<()> {
    write_atomic(path, to_json_string(value, indent)?.as_bytes())
}

fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.matrix.bin"))
}

/// Serializes `op`, inline or with a sidecar depending on its size.
pub fn write_operator(path: &Path, op: &BoundaryOperator, indent: Option<usize>) -> Result<()> {
    let inline = op.grid().modes <= INLINE_MAX_MODES;
    let mut parts = op.to_json_parts(inline);
    if !inline {
        let side = sidecar_path(path);
        let mut bytes = Vec::with_capacity(16 * op.grid().size() * op.grid().size());
        for c in op.row_major() {
            bytes.extend_from_slice(&c.re.to_le_bytes());
            bytes.extend_from_slice(&c.im.to_le_bytes());
        }
        write_atomic(&side, &bytes)?;
        parts.matrix_file = side.file_name().map(|s| s.to_string_lossy().into_owned());
    }
    write_json(path, &parts, indent)
}

/// Parses an operator from JSON text. A sidecar reference is resolved
/// relative to `base`.
pub fn operator_from_json(text: &str, base: Option<&Path>) -> Result<BoundaryOperator> {
    let parts: OperatorJson = serde_json::from_str(text)?;
    let entries = match (&parts.matrix, &parts.matrix_file) {
        (None, Some(file)) => {
            let dir = base.unwrap_or(Path::new("."));
            Some(read_sidecar(&dir.join(file))?)
        }
        _ => None,
    };
    BoundaryOperator::from_json_parts(parts, entries)
}

fn read_sidecar(path: &Path) -> Result<Vec<C64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 16 != 0 {
        return Err(Error::InvalidInput(format!(
            "{}: length {} is not a multiple of 16",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect())
}

pub fn read_operator(path: &Path) -> Result<BoundaryOperator> {
    let text = fs::read_to_string(path)?;
    operator_from_json(&text, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::GridSpec;
    use crate::forward::dn_disk;

    #[test]
    fn inline_and_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for n in [8, 70] {
            let op = dn_disk(GridSpec::unit_circle(n).unwrap()).rotate(0.3);
            let p = dir.path().join(format!("op{n}.json"));
            write_operator(&p, &op, Some(2)).unwrap();
            assert_eq!(dir.path().join(format!("op{n}.matrix.bin")).exists(), n > INLINE_MAX_MODES);
            assert_eq!(read_operator(&p).unwrap(), op);
        }
    }

    #[test]
    fn json_text_is_stable() {
        let op = dn_disk(GridSpec::unit_circle(4).unwrap());
        let a = to_json_string(&op, Some(2)).unwrap();
        assert_eq!(a, to_json_string(&op, Some(2)).unwrap());
        assert!(!to_json_string(&op, None).unwrap().contains("\n "));
    }

    #[test]
    fn bad_sidecar_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("op.json");
        write_operator(&p, &dn_disk(GridSpec::unit_circle(70).unwrap()), None).unwrap();
        fs::write(dir.path().join("op.matrix.bin"), [0u8; 17]).unwrap();
        assert!(read_operator(&p).unwrap_err().is_input_error());
    }
}
