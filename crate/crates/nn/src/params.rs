//! Named parameter storage with a deterministic binary on-disk format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MSP1";

#[derive(Debug, Error)]
pub enum ParamIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a parameter file (bad magic)")]
    BadMagic,
    #[error("corrupt parameter file: {0}")]
    Corrupt(String),
}

/// Index of one tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamRef(pub(crate) usize);

/// Ordered collection of named parameter tensors.
#[derive(Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, t: Tensor) -> ParamRef {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        self.names.push(name.to_string());
        self.tensors.push(t);
        ParamRef(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, r: ParamRef) -> &str {
        &self.names[r.0]
    }

    pub fn get(&self, r: ParamRef) -> &Tensor {
        &self.tensors[r.0]
    }

    pub fn get_mut(&mut self, r: ParamRef) -> &mut Tensor {
        &mut self.tensors[r.0]
    }

    pub fn refs(&self) -> impl Iterator<Item = ParamRef> {
        (0..self.tensors.len()).map(ParamRef)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.tensors.iter())
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Create one tape leaf per parameter, in order.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        BoundParams { vars }
    }

    pub fn save(&self, path: &Path) -> Result<(), ParamIoError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in self.iter() {
            let nb = name.as_bytes();
            w.write_all(&(nb.len() as u32).to_le_bytes())?;
            w.write_all(nb)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ParamIoError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ParamIoError::BadMagic);
        }
        let count = read_u32(&mut r)? as usize;
        let mut ps = ParamSet::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| ParamIoError::Corrupt("non-utf8 name".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            let mut b = [0u8; 8];
            for _ in 0..numel {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            ps.add(&name, Tensor::new(&shape, data));
        }
        Ok(ps)
    }

    /// Copy values from `other`, matching by name. Shapes must agree.
    pub fn load_values_from(&mut self, other: &ParamSet) -> Result<(), ParamIoError> {
        for (i, name) in self.names.iter().enumerate() {
            let Some(j) = other.names.iter().position(|n| n == name) else {
                return Err(ParamIoError::Corrupt(format!("missing parameter {name}")));
            };
            if other.tensors[j].shape() != self.tensors[i].shape() {
                return Err(ParamIoError::Corrupt(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    self.tensors[i].shape(),
                    other.tensors[j].shape()
                )));
            }
            self.tensors[i] = other.tensors[j].clone();
        }
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, ParamIoError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Tape vars for every parameter of a [`ParamSet`], aligned by index.
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, r: ParamRef) -> Var {
        self.vars[r.0]
    }

    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip_is_exact() {
        let mut ps = ParamSet::new();
        ps.add("a.w", Tensor::new(&[2, 3], vec![0.1, -0.2, 1e-17, 3.0, f64::MIN_POSITIVE, 5.5]));
        ps.add("a.b", Tensor::new(&[3], vec![1.0, 2.0, 3.0]));
        let dir = std::env::temp_dir().join("moodspace_nn_params_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("weights.bin");
        ps.save(&path).unwrap();
        let loaded = ParamSet::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        for (r0, r1) in ps.refs().zip(loaded.refs()) {
            assert_eq!(ps.name(r0), loaded.name(r1));
            assert_eq!(ps.get(r0).shape(), loaded.get(r1).shape());
            assert_eq!(ps.get(r0).data(), loaded.get(r1).data());
        }
    }

    #[test]
    fn duplicate_name_panics() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::zeros(&[1]));
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            ps.add("w", Tensor::zeros(&[1]));
        }));
        assert!(r.is_err());
    }
}
