//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "SHECKPT\n"
//! version  u32
//! count    u32      number of named entries
//! entry:   name_len u32, name bytes, tag u8, body
//!   tag 0  MLP:     layers u32, then per layer in u32, out u32, activation u8,
//!                   out*in weights (row-major), out biases
//!   tag 1  Adam:    step u64, beta1, beta2, eps, tensors u32,
//!                   then per tensor len u64, len first moments, len second moments
//!   tag 2  vector:  len u64, len values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::AdamState;
use super::matrix::Matrix;
use super::mlp::{Activation, DenseLayer, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SHECKPT\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Mlp(Mlp),
    Adam(AdamState),
    Vector(Vec<f64>),
}

/// Ordered collection of named models, optimizer states and flat vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Entry)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(String, Entry)] {
        &self.entries
    }

    pub fn push(&mut self, name: impl Into<String>, entry: Entry) {
        self.entries.push((name.into(), entry));
    }

    pub fn push_mlp(&mut self, name: impl Into<String>, mlp: &Mlp) {
        self.push(name, Entry::Mlp(mlp.clone()));
    }

    pub fn push_adam(&mut self, name: impl Into<String>, state: &AdamState) {
        self.push(name, Entry::Adam(state.clone()));
    }

    pub fn push_vector(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.push(name, Entry::Vector(values));
    }

    /// Appends every entry of `other`.
    pub fn merge(&mut self, other: Checkpoint) {
        self.entries.extend(other.entries);
    }

    fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry '{name}'")))
    }

    pub fn mlp(&self, name: &str) -> Result<&Mlp> {
        match self.get(name)? {
            Entry::Mlp(m) => Ok(m),
            _ => Err(Error::Checkpoint(format!("entry '{name}' is not an MLP"))),
        }
    }

    pub fn adam(&self, name: &str) -> Result<&AdamState> {
        match self.get(name)? {
            Entry::Adam(a) => Ok(a),
            _ => Err(Error::Checkpoint(format!("entry '{name}' is not an optimizer state"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        match self.get(name)? {
            Entry::Vector(v) => Ok(v),
            _ => Err(Error::Checkpoint(format!("entry '{name}' is not a vector"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, self.entries.len() as u32);
        for (name, entry) in &self.entries {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::Mlp(mlp) => {
                    out.push(0);
                    put_u32(&mut out, mlp.layers().len() as u32);
                    for layer in mlp.layers() {
                        put_u32(&mut out, layer.input_dim() as u32);
                        put_u32(&mut out, layer.output_dim() as u32);
                        out.push(layer.activation().tag());
                        put_f64s(&mut out, layer.weights().data());
                        put_f64s(&mut out, layer.bias());
                    }
                }
                Entry::Adam(state) => {
                    out.push(1);
                    put_u64(&mut out, state.step());
                    for x in [state.beta1, state.beta2, state.eps] {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                    put_u32(&mut out, state.first_moments().len() as u32);
                    for (m, v) in state.first_moments().iter().zip(state.second_moments()) {
                        put_u64(&mut out, m.len() as u64);
                        put_f64s(&mut out, m);
                        put_f64s(&mut out, v);
                    }
                }
                Entry::Vector(values) => {
                    out.push(2);
                    put_u64(&mut out, values.len() as u64);
                    put_f64s(&mut out, values);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
            let entry = match r.u8()? {
                0 => {
                    let n = r.u32()?;
                    let mut layers = Vec::with_capacity(n as usize);
                    for _ in 0..n {
                        let (input, output) = (r.u32()? as usize, r.u32()? as usize);
                        let act = Activation::from_tag(r.u8()?)
                            .ok_or_else(|| Error::Checkpoint("unknown activation tag".into()))?;
                        let w = Matrix::from_vec(output, input, r.f64s(output * input)?)?;
                        let b = r.f64s(output)?;
                        layers.push(DenseLayer::new(w, b, act)?);
                    }
                    Entry::Mlp(Mlp::new(layers)?)
                }
                1 => {
                    let step = r.u64()?;
                    let (b1, b2, eps) = (r.f64()?, r.f64()?, r.f64()?);
                    let n = r.u32()?;
                    let (mut first, mut second) = (Vec::new(), Vec::new());
                    for _ in 0..n {
                        let len = r.u64()? as usize;
                        first.push(r.f64s(len)?);
                        second.push(r.f64s(len)?);
                    }
                    Entry::Adam(AdamState::from_parts(first, second, step, (b1, b2), eps)?)
                }
                2 => {
                    let len = r.u64()? as usize;
                    Entry::Vector(r.f64s(len)?)
                }
                t => return Err(Error::Checkpoint(format!("unknown entry tag {t}"))),
            };
            entries.push((name, entry));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { entries })
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(&self.to_bytes())?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
