//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"KGF1"
//! u32     array count
//! per array:
//!   u32       name length in bytes
//!   [u8]      name (UTF-8)
//!   u8        dtype: 1 = f32, 2 = f64, 3 = u32, 4 = u64, 5 = u8
//!   u8        ndim
//!   [u64]     ndim dimension sizes
//!   [bytes]   payload, row-major, little-endian
//! ```
//!
//! Training writes `entity_embeddings`, `relation_embeddings`,
//! `model_family`, `epoch`, `config_digest` and one array per optimizer
//! slot (`opt_entity_m`, `opt_relation_t`, ...). Files are written to a
//! temporary sibling and renamed into place.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::models::{Family, Matrix, ModelParams, ModelSpec, Real};

pub const MAGIC: &[u8; 4] = b"KGF1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint missing array {0:?}")]
    MissingArray(String),
    #[error("array {0:?} has unexpected dtype or shape")]
    BadArray(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
    U64(Vec<u64>),
    U8(Vec<u8>),
}

impl ArrayData {
    fn dtype(&self) -> u8 {
        match self {
            ArrayData::F32(_) => 1,
            ArrayData::F64(_) => 2,
            ArrayData::U32(_) => 3,
            ArrayData::U64(_) => 4,
            ArrayData::U8(_) => 5,
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::U32(v) => v.len(),
            ArrayData::U64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/payload mismatch"
        );
        Array { shape, data }
    }

    pub fn scalar_u64(v: u64) -> Self {
        Array::new(vec![1], ArrayData::U64(vec![v]))
    }

    pub fn scalar_u32(v: u32) -> Self {
        Array::new(vec![1], ArrayData::U32(vec![v]))
    }
}

/// Named arrays in insertion order; writing the same logical state twice
/// yields byte-identical files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    arrays: Vec<(String, Array)>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: Array) {
        self.arrays.push((name.into(), array));
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
            for (name, array) in &self.arrays {
                w.write_all(&(name.len() as u32).to_le_bytes())?;
                w.write_all(name.as_bytes())?;
                w.write_all(&[array.data.dtype(), array.shape.len() as u8])?;
                for &d in &array.shape {
                    w.write_all(&(d as u64).to_le_bytes())?;
                }
                match &array.data {
                    ArrayData::F32(v) => {
                        for x in v {
                            w.write_all(&x.to_le_bytes())?;
                        }
                    }
                    ArrayData::F64(v) => {
                        for x in v {
                            w.write_all(&x.to_le_bytes())?;
                        }
                    }
                    ArrayData::U32(v) => {
                        for x in v {
                            w.write_all(&x.to_le_bytes())?;
                        }
                    }
                    ArrayData::U64(v) => {
                        for x in v {
                            w.write_all(&x.to_le_bytes())?;
                        }
                    }
                    ArrayData::U8(v) => w.write_all(v)?,
                }
            }
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let count = read_u32(&mut r)? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            if name_len > 4096 {
                return Err(CheckpointError::Corrupt("oversized array name".into()));
            }
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| CheckpointError::Corrupt("array name not UTF-8".into()))?;
            let mut hdr = [0u8; 2];
            r.read_exact(&mut hdr)?;
            let (dtype, ndim) = (hdr[0], hdr[1] as usize);
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r)? as usize);
            }
            let len: usize = shape.iter().product();
            let data = match dtype {
                1 => ArrayData::F32(read_vec(&mut r, len, f32::from_le_bytes)?),
                2 => ArrayData::F64(read_vec(&mut r, len, f64::from_le_bytes)?),
                3 => ArrayData::U32(read_vec(&mut r, len, u32::from_le_bytes)?),
                4 => ArrayData::U64(read_vec(&mut r, len, u64::from_le_bytes)?),
                5 => {
                    let mut v = vec![0u8; len];
                    r.read_exact(&mut v)?;
                    ArrayData::U8(v)
                }
                other => return Err(CheckpointError::Corrupt(format!("unknown dtype {other}"))),
            };
            arrays.push((name, Array { shape, data }));
        }
        Ok(Container { arrays })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_vec<R: Read, T, const W: usize>(
    r: &mut R,
    len: usize,
    decode: fn([u8; W]) -> T,
) -> Result<Vec<T>, CheckpointError> {
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; W];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(decode(buf));
    }
    Ok(out)
}

fn family_code(family: Family) -> u32 {
    match family {
        Family::DistMult => 0,
        Family::ComplEx => 1,
        Family::SimplE => 2,
    }
}

fn family_from_code(code: u32) -> Option<Family> {
    match code {
        0 => Some(Family::DistMult),
        1 => Some(Family::ComplEx),
        2 => Some(Family::SimplE),
        _ => None,
    }
}

pub fn matrix_to_array<F: Real>(m: &Matrix<F>) -> Array {
    let shape = vec![m.rows(), m.cols()];
    let data = match F::dtype_code() {
        1 => ArrayData::F32(m.data().iter().map(|v| v.as_f64() as f32).collect()),
        _ => ArrayData::F64(m.data().iter().map(|v| v.as_f64()).collect()),
    };
    Array::new(shape, data)
}

fn matrix_from_array_f64(a: &Array, name: &str) -> Result<Matrix<f64>, CheckpointError> {
    if a.shape.len() != 2 {
        return Err(CheckpointError::BadArray(name.into()));
    }
    let data = match &a.data {
        ArrayData::F32(v) => v.iter().map(|&x| x as f64).collect(),
        ArrayData::F64(v) => v.clone(),
        _ => return Err(CheckpointError::BadArray(name.into())),
    };
    Ok(Matrix::from_vec(a.shape[0], a.shape[1], data))
}

/// Inserts model parameters plus family tag into a container.
pub fn insert_model<F: Real>(c: &mut Container, params: &ModelParams<F>) {
    c.insert("entity_embeddings", matrix_to_array(&params.entities));
    c.insert("relation_embeddings", matrix_to_array(&params.relations));
    c.insert(
        "model_family",
        Array::scalar_u32(family_code(params.spec.family)),
    );
}

/// Loads model parameters as f64 regardless of the stored precision.
pub fn load_model_f64(c: &Container) -> Result<ModelParams<f64>, CheckpointError> {
    let ent = c
        .get("entity_embeddings")
        .ok_or_else(|| CheckpointError::MissingArray("entity_embeddings".into()))?;
    let rel = c
        .get("relation_embeddings")
        .ok_or_else(|| CheckpointError::MissingArray("relation_embeddings".into()))?;
    let fam = c
        .get("model_family")
        .ok_or_else(|| CheckpointError::MissingArray("model_family".into()))?;
    let code = match &fam.data {
        ArrayData::U32(v) if v.len() == 1 => v[0],
        _ => return Err(CheckpointError::BadArray("model_family".into())),
    };
    let family =
        family_from_code(code).ok_or_else(|| CheckpointError::BadArray("model_family".into()))?;
    let entities = matrix_from_array_f64(ent, "entity_embeddings")?;
    let relations = matrix_from_array_f64(rel, "relation_embeddings")?;
    let spec = ModelSpec::new(family, entities.cols())
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    Ok(ModelParams {
        spec,
        entities,
        relations,
    })
}

pub fn epoch_of(c: &Container) -> Result<u64, CheckpointError> {
    match c.get("epoch").map(|a| &a.data) {
        Some(ArrayData::U64(v)) if v.len() == 1 => Ok(v[0]),
        Some(_) => Err(CheckpointError::BadArray("epoch".into())),
        None => Err(CheckpointError::MissingArray("epoch".into())),
    }
}

/// File name used for per-epoch checkpoints.
pub fn epoch_file_name(epoch: u64) -> String {
    format!("epoch_{epoch:05}.ckpt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::InitSpec;

    #[test]
    fn round_trip_preserves_bytes() {
        let dir = std::env::temp_dir().join(format!("kgf1_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut c = Container::new();
        c.insert(
            "entity_embeddings",
            Array::new(
                vec![2, 3],
                ArrayData::F32(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            ),
        );
        c.insert("epoch", Array::scalar_u64(7));
        c.insert(
            "config_digest",
            Array::new(vec![4], ArrayData::U8(vec![9, 8, 7, 6])),
        );
        let p1 = dir.join("a.ckpt");
        let p2 = dir.join("b.ckpt");
        c.write(&p1).unwrap();
        let back = Container::read(&p1).unwrap();
        assert_eq!(back, c);
        back.write(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = std::env::temp_dir().join(format!("kgf1_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("x.ckpt");
        std::fs::write(&p, b"NOPE").unwrap();
        assert!(matches!(
            Container::read(&p),
            Err(CheckpointError::BadMagic) | Err(CheckpointError::Io(_))
        ));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn model_round_trip_f32_to_f64() {
        let spec = ModelSpec::new(Family::SimplE, 4).unwrap();
        let init = InitSpec::Normal { std: 0.1 };
        let params = crate::models::init_params::<f32>(spec, 5, 2, &init, &init, 3, None).unwrap();
        let mut c = Container::new();
        insert_model(&mut c, &params);
        c.insert("epoch", Array::scalar_u64(1));
        let loaded = load_model_f64(&c).unwrap();
        assert_eq!(loaded.spec.family, Family::SimplE);
        assert_eq!(loaded.entities.rows(), 5);
        for (a, b) in params.entities.data().iter().zip(loaded.entities.data()) {
            assert_eq!(*a as f64, *b);
        }
    }
}
