//! Binary parameter checkpoint.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic     8 bytes   "RAVENCKP"
//! version   u32       1
//! meta_len  u64       byte length of the metadata document
//! meta      meta_len  UTF-8 (the model config as JSON; may be empty)
//! count     u32       number of tensors
//! count × {
//!   name_len u32, name (UTF-8)
//!   rank     u32, dims u64 × rank
//!   values   f64 × product(dims)
//! }
//! ```
//!
//! Tensors appear in parameter registration order. Floats are stored as raw
//! IEEE-754 bits, so a write/read round trip is lossless.

use std::io::{self, Read, Write};

use super::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RAVENCKP";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is malformed: {0}")]
    Malformed(String),
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
}

impl PartialEq for CheckpointError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: &str) -> Self {
        Self {
            meta: meta.to_string(),
            tensors: store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    /// Copies tensors into `store`, which must hold exactly the same names in
    /// the same order with the same shapes.
    pub fn apply_to(&self, store: &mut ParamStore) -> Result<(), CheckpointError> {
        if self.tensors.len() != store.len() {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (i, (name, tensor)) in self.tensors.iter().enumerate() {
            if store.name(i) != name {
                return Err(CheckpointError::Mismatch(format!(
                    "tensor {i} is `{name}`, model expects `{}`",
                    store.name(i)
                )));
            }
            store
                .set(name, tensor.clone())
                .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        }
        Ok(())
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, store: &ParamStore, meta: &str) -> Result<(), CheckpointError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String, CheckpointError> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

// Upper bound on a single tensor, to fail fast on corrupted headers.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let meta_len = read_u64(&mut r)?;
    if meta_len > MAX_ELEMENTS {
        return Err(CheckpointError::Malformed(format!("metadata length {meta_len}")));
    }
    let meta = read_string(&mut r, meta_len as usize)?;
    let count = read_u32(&mut r)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let name = read_string(&mut r, name_len)?;
        let rank = read_u32(&mut r)?;
        if rank > 8 {
            return Err(CheckpointError::Malformed(format!("`{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut n: u64 = 1;
        for _ in 0..rank {
            let d = read_u64(&mut r)?;
            n = n.saturating_mul(d);
            shape.push(d as usize);
        }
        if n > MAX_ELEMENTS {
            return Err(CheckpointError::Malformed(format!("`{name}` has {n} elements")));
        }
        let mut data = Vec::with_capacity(n as usize);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        tensors.push((name, t));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    Ok(Checkpoint { meta, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, AffineParams, InitScheme, LstmParams};
    use proptest::prelude::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        LstmParams::register(&mut s, "enc", 3, 2).unwrap();
        AffineParams::register(&mut s, "head", 2, 1, true).unwrap();
        init_params(&mut s, &InitScheme::default(), 5);
        s
    }

    #[test]
    fn round_trip_and_apply() {
        let s = store();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &s, "{\"k\":1}").unwrap();
        let ck = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(ck.meta, "{\"k\":1}");
        let mut fresh = ParamStore::new();
        LstmParams::register(&mut fresh, "enc", 3, 2).unwrap();
        AffineParams::register(&mut fresh, "head", 2, 1, true).unwrap();
        ck.apply_to(&mut fresh).unwrap();
        assert_eq!(fresh.checksum(), s.checksum());

        let mut again = Vec::new();
        write_checkpoint(&mut again, &fresh, "{\"k\":1}").unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn header_layout() {
        let mut s = ParamStore::new();
        s.register("w", Tensor::vector(vec![1.5])).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &s, "").unwrap();
        let mut expected = b"RAVENCKP".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(0u64.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(b"w");
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(1.5f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_mismatched_model() {
        let s = store();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &s, "").unwrap();
        let ck = read_checkpoint(bytes.as_slice()).unwrap();
        let mut other = ParamStore::new();
        LstmParams::register(&mut other, "enc", 4, 2).unwrap();
        AffineParams::register(&mut other, "head", 2, 1, true).unwrap();
        assert!(matches!(ck.apply_to(&mut other), Err(CheckpointError::Mismatch(_))));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_checkpoint(&b"NOTACKPT...."[..]), Err(CheckpointError::BadMagic)));
        let s = store();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &s, "").unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_checkpoint(bytes.as_slice()), Err(CheckpointError::Io(_))));
    }

    proptest! {
        #[test]
        fn arbitrary_bits_round_trip(values in proptest::collection::vec(any::<u64>(), 1..40)) {
            let data: Vec<f64> = values.iter().map(|b| f64::from_bits(*b)).collect();
            let mut s = ParamStore::new();
            s.register("t", Tensor::vector(data.clone())).unwrap();
            let mut bytes = Vec::new();
            write_checkpoint(&mut bytes, &s, "m").unwrap();
            let ck = read_checkpoint(bytes.as_slice()).unwrap();
            let got: Vec<u64> = ck.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, values);
        }
    }
}
