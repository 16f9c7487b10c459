//! Checkpoint serialization.
//!
//! Layout: one UTF-8 JSON header line `{format_version, config fields,
//! rng_seed}`, then for each tensor in order: name length (LE u32),
//! name bytes, rows (LE u32), cols (LE u32), row-major f64 LE payload.
//! Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::{Model, ModelConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    #[serde(flatten)]
    config: ModelConfig,
    rng_seed: u64,
}

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = Header {
            format_version: FORMAT_VERSION,
            config: *self.config(),
            rng_seed: self.init_seed(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for (name, tensor) in self.params().tensors() {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&(tensor.rows() as u32).to_le_bytes())?;
            w.write_all(&(tensor.cols() as u32).to_le_bytes())?;
            for v in tensor.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path)?);
        let mut header_line = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte).map_err(|_| Error::DataFormat {
                path: path.display().to_string(),
                line: 1,
                msg: "missing checkpoint header".into(),
            })?;
            if byte[0] == b'\n' {
                break;
            }
            header_line.push(byte[0]);
        }
        let header: Header =
            serde_json::from_slice(&header_line).map_err(|e| Error::DataFormat {
                path: path.display().to_string(),
                line: 1,
                msg: format!("bad checkpoint header: {e}"),
            })?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::DataFormat {
                path: path.display().to_string(),
                line: 1,
                msg: format!(
                    "unsupported format version {} (supported: {FORMAT_VERSION})",
                    header.format_version
                ),
            });
        }

        let mut model = Model::new(header.config, header.rng_seed)?;
        for (name, slot) in model.params_mut().tensors_mut() {
            let mut len4 = [0u8; 4];
            r.read_exact(&mut len4)?;
            let name_len = u32::from_le_bytes(len4) as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let stored = String::from_utf8(name_buf).map_err(|_| Error::DataFormat {
                path: path.display().to_string(),
                line: 0,
                msg: "tensor name is not UTF-8".into(),
            })?;
            if stored != name {
                return Err(Error::DataFormat {
                    path: path.display().to_string(),
                    line: 0,
                    msg: format!("tensor order mismatch: expected {name}, found {stored}"),
                });
            }
            r.read_exact(&mut len4)?;
            let rows = u32::from_le_bytes(len4) as usize;
            r.read_exact(&mut len4)?;
            let cols = u32::from_le_bytes(len4) as usize;
            if (rows, cols) != slot.shape() {
                return Err(Error::DataFormat {
                    path: path.display().to_string(),
                    line: 0,
                    msg: format!(
                        "tensor {name} has shape {rows}x{cols}, expected {}",
                        slot.shape_str()
                    ),
                });
            }
            let mut data = vec![0.0f64; rows * cols];
            let mut buf8 = [0u8; 8];
            for v in &mut data {
                r.read_exact(&mut buf8)?;
                *v = f64::from_le_bytes(buf8);
            }
            *slot = Arc::new(Matrix::from_vec(rows, cols, data)?);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::DataFormat {
                path: path.display().to_string(),
                line: 0,
                msg: "trailing bytes after last tensor".into(),
            });
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = Model::new(ModelConfig::tiny(6, 5), 1234).unwrap();
        model.save(&path).unwrap();
        let loaded = Model::load(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        assert_eq!(loaded.init_seed(), model.init_seed());
        for ((n1, t1), (n2, t2)) in model
            .params()
            .tensors()
            .iter()
            .zip(loaded.params().tensors().iter())
        {
            assert_eq!(n1, n2);
            assert_eq!(t1.as_slice(), t2.as_slice());
        }
        // and the file itself reproduces byte-for-byte
        let path2 = dir.path().join("model2.ckpt");
        loaded.save(&path2).unwrap();
        let b1 = std::fs::read(&path).unwrap();
        let b2 = std::fs::read(&path2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn rejects_garbage_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not json\nrest").unwrap();
        assert!(Model::load(&path).is_err());
    }
}
