//! Named-parameter archive.
//!
//! ```text
//! magic    8 bytes  "HGSUMCKP"
//! version  u32 LE
//! count    u32 LE
//! count × { name_len u32, name utf-8, trainable u8, rows u64, cols u64, rows*cols f64 LE }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{NumericError, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"HGSUMCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn ckpt_err(e: impl std::fmt::Display) -> NumericError {
    NumericError::Checkpoint(e.to_string())
}

pub fn write_checkpoint(store: &ParamStore, mut w: impl Write) -> std::result::Result<(), NumericError> {
    w.write_all(MAGIC).map_err(ckpt_err)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION).map_err(ckpt_err)?;
    w.write_u32::<LittleEndian>(store.len() as u32).map_err(ckpt_err)?;
    for p in store.iter() {
        w.write_u32::<LittleEndian>(p.name.len() as u32).map_err(ckpt_err)?;
        w.write_all(p.name.as_bytes()).map_err(ckpt_err)?;
        w.write_u8(p.trainable as u8).map_err(ckpt_err)?;
        let (r, c) = p.value.dim();
        w.write_u64::<LittleEndian>(r as u64).map_err(ckpt_err)?;
        w.write_u64::<LittleEndian>(c as u64).map_err(ckpt_err)?;
        for &x in p.value.iter() {
            w.write_f64::<LittleEndian>(x).map_err(ckpt_err)?;
        }
    }
    w.flush().map_err(ckpt_err)
}

pub fn read_checkpoint(mut r: impl Read) -> std::result::Result<ParamStore, NumericError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(ckpt_err)?;
    if &magic != MAGIC {
        return Err(ckpt_err("not a checkpoint file"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(ckpt_err)?;
    if version != CHECKPOINT_VERSION {
        return Err(ckpt_err(format!("unsupported version {version}")));
    }
    let count = r.read_u32::<LittleEndian>().map_err(ckpt_err)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.read_u32::<LittleEndian>().map_err(ckpt_err)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(ckpt_err)?;
        let name = String::from_utf8(name).map_err(ckpt_err)?;
        let trainable = r.read_u8().map_err(ckpt_err)? != 0;
        let rows = r.read_u64::<LittleEndian>().map_err(ckpt_err)? as usize;
        let cols = r.read_u64::<LittleEndian>().map_err(ckpt_err)? as usize;
        let mut data = vec![0.0; rows * cols];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(ckpt_err)?;
        let value = Array2::from_shape_vec((rows, cols), data).map_err(ckpt_err)?;
        store.insert(&name, value, trainable)?;
    }
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(store, BufWriter::new(file))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
