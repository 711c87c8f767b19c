//! Binary model snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"TANT"  u32 version
//! u32 base_channels  u32 num_tabs  u32 downscale_stages  u32 in_channels
//! u32 out_channels   u8 use_global_residual  u64 seed  u8 variant
//! u32 record count, then per record:
//!     u32 name length, UTF-8 name, u32 rank, rank x u32 dims, f32 payload
//! u64 FNV-1a of every preceding byte
//! ```

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use thiserror::Error;

use crate::nn::{NetworkConfig, TaNet, Variant};
use crate::tensor::{Real, Shape, Tensor, TensorError};

pub const MAGIC: &[u8; 4] = b"TANT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("value fits in u32").to_le_bytes());
}

pub fn encode<T: Real>(model: &TaNet<T>) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.base_channels, c.num_tabs, c.downscale_stages, c.in_channels, c.out_channels] {
        put_u32(&mut out, v);
    }
    out.push(c.use_global_residual as u8);
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.push(c.variant.code());

    let store = model.params();
    put_u32(&mut out, store.len());
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        put_u32(&mut out, name.len());
        out.extend_from_slice(name);
        let dims = store.shape(id).dims();
        put_u32(&mut out, dims.len());
        for d in dims {
            put_u32(&mut out, d);
        }
        for &v in store.get(id).data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Corrupt(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<TaNet<T>, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(CheckpointError::Corrupt("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = checksum(body);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }

    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32("version")? as u32;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let base_channels = r.u32("config")?;
    let num_tabs = r.u32("config")?;
    let downscale_stages = r.u32("config")?;
    let in_channels = r.u32("config")?;
    let out_channels = r.u32("config")?;
    let use_global_residual = match r.u8("config")? {
        0 => false,
        1 => true,
        v => return Err(CheckpointError::Corrupt(format!("bad residual flag {v}"))),
    };
    let seed = r.u64("config")?;
    let code = r.u8("config")?;
    let variant = Variant::from_code(code).ok_or_else(|| CheckpointError::Corrupt(format!("bad variant code {code}")))?;
    let config = NetworkConfig {
        base_channels,
        num_tabs,
        downscale_stages,
        in_channels,
        out_channels,
        use_global_residual,
        seed,
        variant,
    };
    config.validate()?;
    let mut model = TaNet::<T>::new(&config)?;

    let count = r.u32("record count")?;
    if count != model.params().len() {
        return Err(CheckpointError::Mismatch(format!(
            "{count} records, model has {} parameters",
            model.params().len()
        )));
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| CheckpointError::Corrupt("parameter name is not UTF-8".into()))?;
        let rank = r.u32("rank")?;
        if rank != 4 {
            return Err(CheckpointError::Corrupt(format!("{name}: rank {rank}, expected 4")));
        }
        let dims = [r.u32("dims")?, r.u32("dims")?, r.u32("dims")?, r.u32("dims")?];
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let id = model
            .params()
            .find(name)
            .ok_or_else(|| CheckpointError::Mismatch(format!("unknown parameter {name}")))?;
        if std::mem::replace(&mut seen[id.index()], true) {
            return Err(CheckpointError::Corrupt(format!("parameter {name} appears twice")));
        }
        if shape != model.params().shape(id) {
            return Err(CheckpointError::Mismatch(format!(
                "{name}: stored {shape}, model expects {}",
                model.params().shape(id)
            )));
        }
        let payload = r.take(4 * shape.numel(), name)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
            .collect();
        model.params_mut().set(id, Tensor::from_vec(shape, data)?)?;
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(model)
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save<T: Real>(model: &TaNet<T>, path: &Path) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, encode(model)).map_err(|e| io_err(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<TaNet<T>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes)
}

/// Hex digest of a checkpoint's bytes, for comparing runs.
pub fn digest(bytes: &[u8]) -> String {
    format!("{:016x}", checksum(bytes))
}
