//! Named parameter storage and the binary weights file.
//!
//! File layout, little-endian throughout, no padding:
//!
//! ```text
//! "RTXW"            4 bytes magic
//! version           u32
//! record count      u32
//! per record:
//!   name length     u16
//!   name            UTF-8 bytes
//!   rank            u8
//!   dims            u32 x rank
//!   values          f32 x product(dims), row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Scalar, Tensor, Var};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"RTXW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Fixed bytes per record besides the name, dims and values: name length
/// (u16) and rank (u8).
pub const RECORD_FIXED_BYTES: usize = 3;
pub const HEADER_BYTES: usize = 12;

/// Which network's parameters an operation touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Decom,
    Enhance,
    All,
}

impl ParamGroup {
    pub fn contains(self, name: &str) -> bool {
        match self {
            ParamGroup::Decom => name.starts_with("decom."),
            ParamGroup::Enhance => name.starts_with("enhance."),
            ParamGroup::All => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor<f32>,
    pub grad: Option<Tensor<f32>>,
}

/// Ordered map from parameter name to tensor for both networks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    params: BTreeMap<String, Param>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(Error::invalid("WeightStore::insert", format!("bad name length {}", name.len())));
        }
        if value.shape().len() > u8::MAX as usize {
            return Err(Error::invalid("WeightStore::insert", "rank exceeds 255"));
        }
        if !value.all_finite() {
            return Err(Error::invalid("WeightStore::insert", format!("{name} has non-finite values")));
        }
        if self.params.contains_key(&name) {
            return Err(Error::invalid("WeightStore::insert", format!("duplicate parameter {name}")));
        }
        self.params.insert(name, Param { value, grad: None });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total scalar parameter count.
    pub fn value_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn clear_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    /// Adds every parameter to `graph`. Parameters in `trainable` track
    /// gradients; the rest enter as constants.
    pub fn bind<T: Scalar>(&self, graph: &mut Graph<T>, trainable: Option<ParamGroup>) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| {
                let track = trainable.is_some_and(|g| g.contains(name));
                (name.clone(), graph.leaf(p.value.cast(), track))
            })
            .collect();
        Bound { vars }
    }

    /// Moves gradients computed in `graph` into the store, accumulating onto
    /// any gradient already present.
    pub fn collect_grads<T: Scalar>(&mut self, graph: &mut Graph<T>, bound: &Bound) {
        for (name, &var) in &bound.vars {
            let Some(g) = graph.take_grad(var) else { continue };
            let g: Tensor<f32> = g.cast();
            let p = self.params.get_mut(name).expect("bound names come from this store");
            match &mut p.grad {
                Some(acc) => acc.accumulate(&g),
                slot @ None => *slot = Some(g),
            }
        }
    }

    /// Exact serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES
            + self
                .params
                .iter()
                .map(|(name, p)| RECORD_FIXED_BYTES + name.len() + 4 * p.value.shape().len() + 4 * p.value.len())
                .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        encode_records(&mut out, self.params.iter().map(|(k, p)| (k.as_str(), &p.value)));
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        let magic = r.take(4)?;
        if magic != WEIGHTS_MAGIC {
            return Err(Error::format(path, format!("bad magic {magic:?}, expected \"RTXW\"")));
        }
        let version = r.u32()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::format(path, format!("unsupported weights version {version}")));
        }
        let count = r.u32()? as usize;
        let records = decode_records(&mut r, count)?;
        r.finish()?;
        let mut store = Self::new();
        for (name, t) in records {
            store
                .insert(name, t)
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        Ok(store)
    }
}

/// Parameter handles of a [`WeightStore`] bound into one graph.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Binds names to existing graph variables, for graphs whose
    /// parameters were created by the caller.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid("model", format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &store.to_bytes())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    WeightStore::from_bytes(&bytes, path)
}

/// Writes through a temporary sibling so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| Error::io(tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(tmp, e))?;
    f.sync_all().map_err(|e| Error::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_records<'a>(out: &mut Vec<u8>, records: impl Iterator<Item = (&'a str, &'a Tensor<f32>)>) {
    for (name, t) in records {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub(crate) fn decode_records(r: &mut Reader<'_>, count: usize) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.error("parameter name is not UTF-8"))?
            .to_owned();
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| r.error("dimension product overflows"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| r.error("record too large"))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push((name, Tensor::new(dims, values)?));
    }
    Ok(records)
}

/// Bounds-checked little-endian cursor.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    pub fn error(&self, detail: impl Into<String>) -> Error {
        Error::format(self.path, format!("{} (at byte {})", detail.into(), self.pos))
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(format!("truncated: wanted {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}
