//! Binary weight checkpoints.
//!
//! Layout, all integers little-endian:
//!   magic "MKPT", format version u32, then one record per tensor until EOF:
//!   name_len u32, name bytes (UTF-8), rank u32, dims u32 * rank, f32 data.
//! Record order is the parameter set's insertion order, so a save is
//! byte-reproducible.

use crate::error::{NnError, Result};
use crate::params::ParameterSet;
use crate::tensor::Tensor;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"MKPT";
pub const VERSION: u32 = 1;

pub fn save_checkpoint<W: Write>(mut w: W, params: &ParameterSet<f32>) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    for (name, t) in params.iter() {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u32::<LittleEndian>(t.rank() as u32)?;
        for &d in t.shape() {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in t.values() {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn save_checkpoint_file(path: &Path, params: &ParameterSet<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<ParameterSet<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| NnError::Checkpoint("file too short for magic".into()))?;
    if magic != MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| NnError::Checkpoint("file too short for version".into()))?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }

    let mut params = ParameterSet::new();
    loop {
        // Clean EOF is the only legal way for the record stream to end.
        let mut first = [0u8; 1];
        match r.read(&mut first) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => return Err(e.into()),
        }
        let mut rest = [0u8; 3];
        r.read_exact(&mut rest)
            .map_err(|_| NnError::Checkpoint("truncated record header".into()))?;
        let name_len = u32::from_le_bytes([first[0], rest[0], rest[1], rest[2]]) as usize;

        let name_bytes = read_exactly(&mut r, name_len, "name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| NnError::Checkpoint("name is not UTF-8".into()))?;

        let rank = r
            .read_u32::<LittleEndian>()
            .map_err(|_| NnError::Checkpoint(format!("truncated rank for {name:?}")))? as usize;
        if rank == 0 || rank > 8 {
            return Err(NnError::Checkpoint(format!("record {name:?} has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut total: usize = 1;
        for _ in 0..rank {
            let d = r
                .read_u32::<LittleEndian>()
                .map_err(|_| NnError::Checkpoint(format!("truncated dims for {name:?}")))?
                as usize;
            if d == 0 {
                return Err(NnError::Checkpoint(format!("record {name:?} has a zero dim")));
            }
            total = total
                .checked_mul(d)
                .ok_or_else(|| NnError::Checkpoint(format!("record {name:?} dims overflow")))?;
            dims.push(d);
        }
        let bytes = total
            .checked_mul(4)
            .ok_or_else(|| NnError::Checkpoint(format!("record {name:?} dims overflow")))?;

        let data = read_exactly(&mut r, bytes, "tensor data")?;
        let values: Vec<f32> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(dims, values)
            .map_err(|e| NnError::Checkpoint(format!("record {name:?}: {e}")))?;
        params.insert(&name, tensor)?;
    }
    Ok(params)
}

pub fn load_checkpoint_file(path: &Path) -> Result<ParameterSet<f32>> {
    load_checkpoint(BufReader::new(File::open(path)?))
}

/// Read exactly `n` bytes without trusting `n` for the allocation size, so a
/// hostile header can't force a huge up-front allocation.
fn read_exactly<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let got = r.by_ref().take(n as u64).read_to_end(&mut buf)?;
    if got != n {
        return Err(NnError::Checkpoint(format!("truncated {what}: wanted {n} bytes, got {got}")));
    }
    Ok(buf)
}
