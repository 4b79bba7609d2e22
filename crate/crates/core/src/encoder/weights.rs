//! Tensor persistence: a text manifest (`manifest.txt`) describing named
//! tensors plus a raw little-endian f32 blob (`weights.bin`). The same
//! container backs encoder weights and the subspace cache.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BLOB_FILE: &str = "weights.bin";

/// One named tensor: shape of rank 1 or 2, values held as f64 in memory and
/// serialized as f32 on disk.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        let t = Tensor {
            name: name.into(),
            shape,
            values,
        };
        debug_assert_eq!(t.shape.iter().product::<usize>(), t.values.len());
        t
    }
}

/// Ordered collection of tensors plus string metadata.
#[derive(Debug, Clone, Default)]
pub struct TensorArchive {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::InvalidParameter {
                name: "manifest",
                detail: format!("missing or invalid meta field {key}"),
            })
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) {
        self.tensors.push(Tensor::new(name, shape, values));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    /// Writes `manifest.txt` and `weights.bin` into `dir`, creating it if
    /// needed. Offsets are sequential in declaration order.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut manifest = String::new();
        manifest.push_str(&format!("format_version {FORMAT_VERSION}\n"));
        for (k, v) in &self.meta {
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        let mut blob: Vec<u8> = Vec::new();
        for t in &self.tensors {
            let offset = blob.len();
            let shape = t
                .shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x");
            manifest.push_str(&format!("tensor {} {} {}\n", t.name, shape, offset));
            for &v in &t.values {
                blob.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let mpath = dir.join(MANIFEST_FILE);
        std::fs::write(&mpath, manifest)
            .map_err(|e| Error::io(format!("writing {}", mpath.display()), e))?;
        let bpath = dir.join(BLOB_FILE);
        std::fs::write(&bpath, blob)
            .map_err(|e| Error::io(format!("writing {}", bpath.display()), e))?;
        Ok(())
    }

    /// Loads and validates a manifest+blob pair from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let manifest = std::fs::read_to_string(&mpath)
            .map_err(|e| Error::io(format!("reading {}", mpath.display()), e))?;
        let bpath = dir.join(BLOB_FILE);
        let blob = std::fs::read(&bpath)
            .map_err(|e| Error::io(format!("reading {}", bpath.display()), e))?;

        let mut meta = BTreeMap::new();
        let mut entries: Vec<(String, Vec<usize>, usize)> = Vec::new();
        let mut version: Option<u32> = None;
        for (lineno, line) in manifest.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let malformed = |msg: &str| Error::Malformed {
                path: mpath.display().to_string(),
                line: lineno + 1,
                message: msg.to_string(),
            };
            match parts.next() {
                Some("format_version") => {
                    let v: u32 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| malformed("unreadable format_version"))?;
                    version = Some(v);
                }
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| malformed("meta key missing"))?;
                    let value = parts
                        .next()
                        .ok_or_else(|| malformed("meta value missing"))?;
                    meta.insert(key.to_string(), value.to_string());
                }
                Some("tensor") => {
                    let name = parts
                        .next()
                        .ok_or_else(|| malformed("tensor name missing"))?;
                    let shape_str = parts
                        .next()
                        .ok_or_else(|| malformed("tensor shape missing"))?;
                    let offset: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| malformed("tensor offset missing"))?;
                    let shape: Vec<usize> = shape_str
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| malformed("unreadable tensor shape"))?;
                    entries.push((name.to_string(), shape, offset));
                }
                Some(other) => {
                    return Err(malformed(&format!("unknown manifest directive \"{other}\"")))
                }
                None => {}
            }
        }

        match version {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::UnknownFormatVersion(v)),
            None => {
                return Err(Error::Malformed {
                    path: mpath.display().to_string(),
                    line: 0,
                    message: "missing format_version".into(),
                })
            }
        }

        let expected_len: usize = entries
            .iter()
            .map(|(_, shape, _)| shape.iter().product::<usize>() * 4)
            .sum();
        if blob.len() != expected_len {
            return Err(Error::BlobLengthMismatch {
                expected: expected_len,
                got: blob.len(),
            });
        }

        let mut tensors = Vec::with_capacity(entries.len());
        for (name, shape, offset) in entries {
            let count: usize = shape.iter().product();
            let end = offset + count * 4;
            if end > blob.len() {
                return Err(Error::TensorShape {
                    name,
                    detail: format!("offset {offset} + {count} values exceeds blob length"),
                });
            }
            let values: Vec<f64> = blob[offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "tensor blob" });
            }
            tensors.push(Tensor::new(name, shape, values));
        }
        Ok(TensorArchive { meta, tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = TensorArchive::new();
        a.set_meta("d_model", 2usize);
        a.push("w", vec![2, 2], vec![1.0, -0.5, 0.25, 3.0]);
        a.push("b", vec![2], vec![0.125, -2.0]);
        a.save(dir.path()).unwrap();
        let back = TensorArchive::load(dir.path()).unwrap();
        assert_eq!(back.meta_usize("d_model").unwrap(), 2);
        assert_eq!(back.get("w").unwrap().values, vec![1.0, -0.5, 0.25, 3.0]);
        assert_eq!(back.get("b").unwrap().values, vec![0.125, -2.0]);
    }

    #[test]
    fn truncated_blob_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = TensorArchive::new();
        a.push("w", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        a.save(dir.path()).unwrap();
        let blob_path = dir.path().join(BLOB_FILE);
        let blob = std::fs::read(&blob_path).unwrap();
        std::fs::write(&blob_path, &blob[..blob.len() - 4]).unwrap();
        let err = TensorArchive::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("blob length mismatch"), "{err}");
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = TensorArchive::new();
        a.save(dir.path()).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        std::fs::write(&mpath, "format_version 9\n").unwrap();
        let err = TensorArchive::load(dir.path()).unwrap_err();
        assert!(matches!(err, Error::UnknownFormatVersion(9)));
    }
}
