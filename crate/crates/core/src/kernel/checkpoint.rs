//! Binary checkpoint format.
//!
//! Layout, all integers u32 little-endian:
//! `"TSQ1"`, N, then N records of
//! (name length, UTF-8 name, rank, dims..., f32 LE values...).

use std::collections::BTreeSet;
use std::io::{Read, Write};

use super::{KernelError, ParamStore};

pub const MAGIC: &[u8; 4] = b"TSQ1";

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<(), KernelError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, store.len())?;
    for (name, t) in store.iter() {
        put_u32(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut w, d)?;
        }
        for &v in t.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint into a copy of `template`, which fixes the expected
/// names and shapes.
pub fn read_checkpoint<R: Read>(template: &ParamStore, mut r: R) -> Result<ParamStore, KernelError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| KernelError::Checkpoint("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(KernelError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let n = get_u32(&mut r)? as usize;
    let mut out = template.clone();
    let mut seen = BTreeSet::new();
    for _ in 0..n {
        let len = get_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| KernelError::Checkpoint("truncated name".into()))?;
        let name = String::from_utf8(name).map_err(|_| KernelError::Checkpoint("name is not UTF-8".into()))?;
        let rank = get_u32(&mut r)? as usize;
        let shape = (0..rank).map(|_| get_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let count: usize = shape.iter().product();
        let mut raw = vec![0u8; 4 * count];
        r.read_exact(&mut raw).map_err(|_| KernelError::Checkpoint(format!("truncated values for {name}")))?;
        let slot = out
            .get_mut(&name)
            .ok_or_else(|| KernelError::Checkpoint(format!("unexpected parameter {name}")))?;
        if slot.shape() != shape.as_slice() {
            return Err(KernelError::Checkpoint(format!(
                "shape of {name}: checkpoint {shape:?}, model {:?}",
                slot.shape()
            )));
        }
        for (dst, chunk) in slot.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        }
        if !seen.insert(name.clone()) {
            return Err(KernelError::Checkpoint(format!("duplicate parameter {name}")));
        }
    }
    let expected: BTreeSet<String> = template.names().map(str::to_string).collect();
    if let Some(missing) = expected.difference(&seen).next() {
        return Err(KernelError::Checkpoint(format!("missing parameter {missing}")));
    }
    Ok(out)
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<(), KernelError> {
    let v = u32::try_from(v).map_err(|_| KernelError::Checkpoint(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32, KernelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| KernelError::Checkpoint("truncated record".into()))?;
    Ok(u32::from_le_bytes(b))
}
