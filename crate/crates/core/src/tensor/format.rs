//! Raw tensor file format used for checkpoints and golden files.
//!
//! Layout: magic `OEPT`, one version byte, u8 dtype code (0 = f32, 1 = f64),
//! u8 rank, `rank` little-endian u32 extents, then the row-major payload in
//! little-endian element order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::{DType, Elem, Tensor};

pub const MAGIC: &[u8; 4] = b"OEPT";
pub const VERSION: u8 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format { what: "tensor file", msg: msg.into() }
}

pub fn write_tensor<E: Elem, W: Write>(w: &mut W, t: &Tensor<E>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, E::DTYPE.code()])?;
    let rank = t.rank();
    assert!(rank <= u8::MAX as usize, "rank exceeds format limit");
    w.write_all(&[rank as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes_vec())?;
    }
    Ok(())
}

pub fn read_tensor<E: Elem, R: Read>(r: &mut R) -> Result<Tensor<E>> {
    let io = |e: std::io::Error| format_err(format!("read failed: {}", e));
    let mut head = [0u8; 7];
    r.read_exact(&mut head).map_err(io)?;
    if &head[..4] != MAGIC {
        return Err(format_err("bad magic"));
    }
    if head[4] != VERSION {
        return Err(format_err(format!("unsupported version {}", head[4])));
    }
    let dtype = DType::from_code(head[5]).ok_or_else(|| format_err(format!("unknown dtype code {}", head[5])))?;
    if dtype != E::DTYPE {
        return Err(format_err(format!(
            "stored dtype {:?} does not match requested {:?}",
            dtype,
            E::DTYPE
        )));
    }
    let rank = head[6] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut ext = [0u8; 4];
        r.read_exact(&mut ext).map_err(io)?;
        shape.push(u32::from_le_bytes(ext) as usize);
    }
    let n: usize = shape.iter().product();
    let esz = E::DTYPE.size_bytes();
    let mut payload = vec![0u8; n * esz];
    r.read_exact(&mut payload).map_err(io)?;
    let data: Vec<E> = payload.chunks_exact(esz).map(E::from_le_slice).collect();
    Tensor::from_vec(data, &shape)
}
