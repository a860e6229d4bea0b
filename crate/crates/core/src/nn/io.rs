//! Weight-vector files.
//!
//! Text form: a header line
//! `mlp-weights 1 text sizes=2,16,16,2 count=354`
//! followed by one decimal value per line.
//!
//! Binary form (little-endian): magic `MLPW`, `u32` format version (1), `u32`
//! layer count `L`, `L × u32` layer sizes, `u64` value count, `u8` value width
//! in bytes (4 or 8), then the IEEE-754 values.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::nn::{MlpSpec, WeightVector};
use crate::Scalar;

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MLPW";

pub fn write_text<T: Scalar, W: Write>(spec: &MlpSpec, w: &WeightVector<T>, mut out: W) -> Result<()> {
    w.check(spec)?;
    let sizes: Vec<String> = spec.layer_sizes.iter().map(|s| s.to_string()).collect();
    let io = |e| Error::io("<weights>", e);
    writeln!(
        out,
        "mlp-weights {WEIGHTS_FORMAT_VERSION} text sizes={} count={}",
        sizes.join(","),
        w.len()
    )
    .map_err(io)?;
    for v in &w.0 {
        writeln!(out, "{}", v.f64()).map_err(io)?;
    }
    Ok(())
}

pub fn read_text<T: Scalar, R: BufRead>(input: R) -> Result<(MlpSpec, WeightVector<T>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty weight file".into()))?
        .map_err(|e| Error::io("<weights>", e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "mlp-weights" || fields[2] != "text" {
        return Err(Error::Format(format!("bad weight header: {header}")));
    }
    if fields[1] != WEIGHTS_FORMAT_VERSION.to_string() {
        return Err(Error::Format(format!("unsupported weight format version {}", fields[1])));
    }
    let sizes = fields[3]
        .strip_prefix("sizes=")
        .ok_or_else(|| Error::Format("missing sizes=".into()))?
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|e| Error::Format(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let count: usize = fields[4]
        .strip_prefix("count=")
        .ok_or_else(|| Error::Format("missing count=".into()))?
        .parse()
        .map_err(|e: std::num::ParseIntError| Error::Format(e.to_string()))?;
    let spec = MlpSpec::new(sizes)?;
    let mut values = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("<weights>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line.trim().parse().map_err(|_| Error::Parse {
            path: "<weights>".into(),
            line: i + 2,
            message: format!("not a number: {line}"),
        })?;
        values.push(T::of(v));
    }
    if values.len() != count {
        return Err(Error::Format(format!("expected {count} values, found {}", values.len())));
    }
    let w = WeightVector(values);
    w.check(&spec)?;
    Ok((spec, w))
}

pub fn write_binary<T: Scalar, W: Write>(spec: &MlpSpec, w: &WeightVector<T>, mut out: W) -> Result<()> {
    w.check(spec)?;
    let width = std::mem::size_of::<T>() as u8;
    let mut buf = Vec::with_capacity(32 + w.len() * width as usize);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&WEIGHTS_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.layer_sizes.len() as u32).to_le_bytes());
    for s in &spec.layer_sizes {
        buf.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(w.len() as u64).to_le_bytes());
    buf.push(width);
    for v in &w.0 {
        match width {
            4 => buf.extend_from_slice(&(v.f64() as f32).to_le_bytes()),
            _ => buf.extend_from_slice(&v.f64().to_le_bytes()),
        }
    }
    out.write_all(&buf).map_err(|e| Error::io("<weights>", e))
}

pub fn read_binary<T: Scalar, R: Read>(mut input: R) -> Result<(MlpSpec, WeightVector<T>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::io("<weights>", e))?;
    let mut cur = Cursor { b: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic in binary weight file".into()));
    }
    let version = cur.u32()?;
    if version != WEIGHTS_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported weight format version {version}")));
    }
    let n_layers = cur.u32()? as usize;
    let sizes = (0..n_layers).map(|_| cur.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let count = cur.u64()? as usize;
    let width = cur.take(1)?[0];
    let spec = MlpSpec::new(sizes)?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let v = match width {
            4 => f32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as f64,
            8 => f64::from_le_bytes(cur.take(8)?.try_into().unwrap()),
            _ => return Err(Error::Format(format!("unsupported value width {width}"))),
        };
        values.push(T::of(v));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format("trailing bytes in binary weight file".into()));
    }
    let w = WeightVector(values);
    w.check(&spec)?;
    Ok((spec, w))
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.b.len() {
            return Err(Error::Format("truncated binary weight file".into()));
        }
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
