//! "LMT1" named-tensor files.
//!
//! Layout, all integers little-endian: magic `LMT1`, `u32` tensor count, then
//! per tensor a `u16` name length, the UTF-8 name, a `u8` rank, `rank` `u32`
//! dimensions and the `f32` payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{AutogradError, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

pub const MAGIC: &[u8; 4] = b"LMT1";

pub fn write_tensors<E: Scalar, W: Write>(mut out: W, tensors: &[(String, Tensor<E>)]) -> Result<()> {
    let count = u32::try_from(tensors.len()).map_err(|_| AutogradError::Format("too many tensors".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&count.to_le_bytes())?;
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| AutogradError::Format(format!("name too long: {name}")))?;
        let rank = u8::try_from(t.rank()).map_err(|_| AutogradError::Format(format!("rank too large: {name}")))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&[rank])?;
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| AutogradError::Format(format!("dimension too large: {name}")))?;
            out.write_all(&d.to_le_bytes())?;
        }
        for v in t.data() {
            out.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| AutogradError::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

pub fn read_tensors<E: Scalar, R: Read>(mut input: R) -> Result<Vec<(String, Tensor<E>)>> {
    if &take::<4, _>(&mut input)? != MAGIC {
        return Err(AutogradError::Format("bad magic".into()));
    }
    let count = u32::from_le_bytes(take(&mut input)?);
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(take(&mut input)?) as usize;
        let mut name = vec![0u8; len];
        input
            .read_exact(&mut name)
            .map_err(|e| AutogradError::Format(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| AutogradError::Format("name is not UTF-8".into()))?;
        let [rank] = take::<1, _>(&mut input)?;
        let shape = (0..rank)
            .map(|_| take(&mut input).map(|b| u32::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = numel(&shape);
        let mut bytes = vec![0u8; n * 4];
        input
            .read_exact(&mut bytes)
            .map_err(|e| AutogradError::Format(format!("truncated payload of {name}: {e}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| E::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        tensors.push((name, Tensor::new(data, &shape)?));
    }
    Ok(tensors)
}

pub fn save<E: Scalar>(path: impl AsRef<Path>, tensors: &[(String, Tensor<E>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensors(&mut w, tensors)?;
    w.flush()?;
    Ok(())
}

pub fn load<E: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<E>)>> {
    read_tensors(BufReader::new(File::open(path)?))
}
