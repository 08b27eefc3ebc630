//! Binary model container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "FSKRRMDL"
//! version    u32      FORMAT_VERSION
//! variant    u8       0 = exact, 1 = nystrom
//!            [u64 s, u64 seed, f64 eigen_cutoff]   nystrom only
//! sigma      f64
//! lambda     f64
//! intercept  f64
//! n, d       u64, u64
//! std flag   u8       1 if a standardizer follows
//!            [d x f64 mean, d x f64 scale]
//! alpha      n x f64
//! features   n*d x f64, row-major
//! checksum   u32      CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, KernelConfig, Standardizer};
use crate::krr::{KrrModel, Variant};

pub const MAGIC: &[u8; 8] = b"FSKRRMDL";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.0.reserve(v.len() * 8);
        v.iter().for_each(|x| self.f64(*x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("model file is truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            len.checked_mul(8)
                .ok_or_else(|| Error::Format("length overflows".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn encode_model(model: &KrrModel) -> Vec<u8> {
    let x = model.train_features();
    let mut w = Writer(Vec::with_capacity(64 + 8 * (x.rows() * (x.cols() + 1))));
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    match model.variant() {
        Variant::Exact => w.u8(0),
        Variant::Nystrom {
            s,
            seed,
            eigen_cutoff,
        } => {
            w.u8(1);
            w.u64(*s as u64);
            w.u64(*seed);
            w.f64(*eigen_cutoff);
        }
    }
    w.f64(model.config().sigma);
    w.f64(model.config().lambda);
    w.f64(model.intercept());
    w.u64(x.rows() as u64);
    w.u64(x.cols() as u64);
    match model.standardizer() {
        Some(st) => {
            w.u8(1);
            w.f64s(&st.mean);
            w.f64s(&st.scale);
        }
        None => w.u8(0),
    }
    w.f64s(model.alpha());
    w.f64s(x.as_slice());
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

pub fn decode_model(bytes: &[u8]) -> Result<KrrModel> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Format("model checksum mismatch".into()));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format version {version}"
        )));
    }
    let variant = match r.u8()? {
        0 => Variant::Exact,
        1 => Variant::Nystrom {
            s: r.usize()?,
            seed: r.u64()?,
            eigen_cutoff: r.f64()?,
        },
        t => return Err(Error::Format(format!("unknown variant tag {t}"))),
    };
    let config = KernelConfig::new(r.f64()?, r.f64()?)?;
    let intercept = r.f64()?;
    let n = r.usize()?;
    let d = r.usize()?;
    let standardizer = match r.u8()? {
        0 => None,
        1 => Some(Standardizer {
            mean: r.f64s(d)?,
            scale: r.f64s(d)?,
        }),
        t => return Err(Error::Format(format!("bad standardizer flag {t}"))),
    };
    let alpha = r.f64s(n)?;
    let features = FeatureMatrix::new(
        n,
        d,
        r.f64s(n.checked_mul(d).ok_or_else(|| Error::Format("size overflow".into()))?)?,
    )?;
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after model payload".into()));
    }
    KrrModel::from_parts(alpha, config, features, variant, intercept, standardizer)
}

pub fn save_model(model: &KrrModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<KrrModel> {
    decode_model(&fs::read(path)?)
}
