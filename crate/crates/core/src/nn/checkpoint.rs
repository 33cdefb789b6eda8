//! Binary model checkpoints.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic     4 bytes   "PRNW" (complex) or "PRNR" (real)
//! version   u32
//! count     u32       number of entries in dims
//! dims      u32 x count
//! layers    complex: per layer W row-major as (re, im) f64 pairs, then b as pairs
//!           real:    per layer W row-major f64, then b
//! scale     f64       global input normalization scalar
//! checksum  u64       over every preceding byte
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{ComplexBatch, ComplexLayer, ComplexNetwork, RealLayer, RealNetwork, Regressor};
use crate::binio::{ByteReader, ByteWriter};
use crate::checksum::checksum64;
use crate::error::{Error, Result};

pub const COMPLEX_MAGIC: [u8; 4] = *b"PRNW";
pub const REAL_MAGIC: [u8; 4] = *b"PRNR";
pub const VERSION: u32 = 1;

const MAX_LAYERS: usize = 1024;

fn write_dims(w: &mut ByteWriter, magic: [u8; 4], dims: &[usize]) {
    w.bytes(&magic);
    w.u32(VERSION);
    w.u32(dims.len() as u32);
    for &d in dims {
        w.u32(d as u32);
    }
}

fn finish(mut w: ByteWriter, scale: f64) -> Vec<u8> {
    w.f64(scale);
    let sum = checksum64(w.as_slice());
    w.u64(sum);
    w.into_inner()
}

pub fn complex_to_bytes(net: &ComplexNetwork) -> Vec<u8> {
    let mut w = ByteWriter::with_capacity(16 + net.real_parameter_count() * 8);
    write_dims(&mut w, COMPLEX_MAGIC, net.dims());
    for layer in net.layers() {
        for r in 0..layer.outputs() {
            for c in 0..layer.inputs() {
                w.f64(layer.weight_re[(r, c)]);
                w.f64(layer.weight_im[(r, c)]);
            }
        }
        for r in 0..layer.outputs() {
            w.f64(layer.bias_re[r]);
            w.f64(layer.bias_im[r]);
        }
    }
    finish(w, net.input_scale())
}

pub fn real_to_bytes(net: &RealNetwork) -> Vec<u8> {
    let mut w = ByteWriter::with_capacity(16 + net.real_parameter_count() * 8);
    write_dims(&mut w, REAL_MAGIC, net.dims());
    for layer in net.layers() {
        for r in 0..layer.outputs() {
            for c in 0..layer.inputs() {
                w.f64(layer.weight[(r, c)]);
            }
        }
        for r in 0..layer.outputs() {
            w.f64(layer.bias[r]);
        }
    }
    finish(w, net.input_scale())
}

/// Validates magic, version, size and checksum; returns dims and a reader
/// positioned at the first parameter.
fn open<'a>(bytes: &'a [u8], magic: [u8; 4], reals_per_param: usize) -> Result<(Vec<usize>, ByteReader<'a>)> {
    if bytes.len() < 12 {
        return Err(Error::Truncated { expected: 12, actual: bytes.len() as u64 });
    }
    let mut r = ByteReader::new(bytes);
    let found: [u8; 4] = r.array()?;
    if found != magic {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&found),
                String::from_utf8_lossy(&magic)
            ),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format { offset: 4, message: format!("unsupported version {version}") });
    }
    let count = r.u32()? as usize;
    if !(2..=MAX_LAYERS).contains(&count) {
        return Err(Error::Format { offset: 8, message: format!("implausible dims count {count}") });
    }
    let header_len = 12 + 4 * count as u64;
    if (bytes.len() as u64) < header_len {
        return Err(Error::Truncated { expected: header_len, actual: bytes.len() as u64 });
    }
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.offset();
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(Error::Format { offset: at, message: "zero layer width".into() });
        }
        dims.push(d);
    }
    let mut params: u64 = 0;
    for w in dims.windows(2) {
        params = (w[0] as u64)
            .checked_mul(w[1] as u64)
            .and_then(|p| p.checked_add(w[1] as u64))
            .and_then(|p| params.checked_add(p))
            .ok_or_else(|| Error::Format { offset: 12, message: "dims overflow".into() })?;
    }
    let expected = params
        .checked_mul(8 * reals_per_param as u64)
        .and_then(|p| p.checked_add(header_len + 16))
        .ok_or_else(|| Error::Format { offset: 12, message: "dims overflow".into() })?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format { offset: expected, message: format!("{} trailing bytes", actual - expected) });
    }
    let body = expected as usize - 8;
    let stored = u64::from_le_bytes(bytes[body..].try_into().expect("8 bytes"));
    if stored != checksum64(&bytes[..body]) {
        return Err(Error::Format { offset: body as u64, message: "checksum mismatch".into() });
    }
    Ok((dims, r))
}

fn read_scale(r: &mut ByteReader<'_>) -> Result<f64> {
    let at = r.offset();
    let scale = r.finite_f64()?;
    if !(scale > 0.0) {
        return Err(Error::Format { offset: at, message: format!("input scale must be positive, got {scale}") });
    }
    Ok(scale)
}

pub fn complex_from_bytes(bytes: &[u8]) -> Result<ComplexNetwork> {
    let (dims, mut r) = open(bytes, COMPLEX_MAGIC, 2)?;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let mut weight_re = DMatrix::zeros(n_out, n_in);
        let mut weight_im = DMatrix::zeros(n_out, n_in);
        for row in 0..n_out {
            for col in 0..n_in {
                weight_re[(row, col)] = r.finite_f64()?;
                weight_im[(row, col)] = r.finite_f64()?;
            }
        }
        let mut bias_re = DVector::zeros(n_out);
        let mut bias_im = DVector::zeros(n_out);
        for row in 0..n_out {
            bias_re[row] = r.finite_f64()?;
            bias_im[row] = r.finite_f64()?;
        }
        layers.push(ComplexLayer { weight_re, weight_im, bias_re, bias_im, activation: false });
    }
    let scale = read_scale(&mut r)?;
    let mut net = ComplexNetwork::from_layers(layers)?;
    net.set_input_scale(scale);
    Ok(net)
}

pub fn real_from_bytes(bytes: &[u8]) -> Result<RealNetwork> {
    let (dims, mut r) = open(bytes, REAL_MAGIC, 1)?;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let mut weight = DMatrix::zeros(n_out, n_in);
        for row in 0..n_out {
            for col in 0..n_in {
                weight[(row, col)] = r.finite_f64()?;
            }
        }
        let mut bias = DVector::zeros(n_out);
        for row in 0..n_out {
            bias[row] = r.finite_f64()?;
        }
        layers.push(RealLayer { weight, bias, activation: false });
    }
    let scale = read_scale(&mut r)?;
    let mut net = RealNetwork::from_layers(layers)?;
    net.set_input_scale(scale);
    Ok(net)
}

/// Either kind of checkpoint, dispatched on the magic.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Complex(ComplexNetwork),
    Real(RealNetwork),
}

impl Checkpoint {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes.get(..4) {
            Some(m) if m == COMPLEX_MAGIC => complex_from_bytes(bytes).map(Checkpoint::Complex),
            Some(m) if m == REAL_MAGIC => real_from_bytes(bytes).map(Checkpoint::Real),
            Some(m) => Err(Error::Format {
                offset: 0,
                message: format!("unknown checkpoint magic {:?}", String::from_utf8_lossy(m)),
            }),
            None => Err(Error::Truncated { expected: 12, actual: bytes.len() as u64 }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Checkpoint::Complex(n) => complex_to_bytes(n),
            Checkpoint::Real(n) => real_to_bytes(n),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Predictions for raw inputs.
    pub fn predict(&self, inputs: &ComplexBatch) -> Result<ComplexBatch> {
        match self {
            Checkpoint::Complex(n) => n.predict(inputs),
            Checkpoint::Real(n) => n.predict(inputs),
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Checkpoint::Complex(n) => n.input_len(),
            Checkpoint::Real(n) => n.input_len(),
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Checkpoint::Complex(n) => n.output_len(),
            Checkpoint::Real(n) => n.output_len(),
        }
    }

    pub fn real_parameter_count(&self) -> usize {
        match self {
            Checkpoint::Complex(n) => n.real_parameter_count(),
            Checkpoint::Real(n) => n.real_parameter_count(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            Checkpoint::Complex(n) => n.dims(),
            Checkpoint::Real(n) => n.dims(),
        }
    }
}
