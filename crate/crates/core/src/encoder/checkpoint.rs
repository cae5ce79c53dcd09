//! Versioned tensor container: magic, version, a JSON metadata string, then
//! every tensor as name, shape and little-endian `f64` data.

use std::io::{Read, Write};
use std::path::Path;

use super::params::Params;
use super::tensor::Mat;
use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::io;

const MAGIC: &[u8; 4] = b"OLNK";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(out: W, metadata: &str, params: &Params<f64>) -> Result<W> {
    let mut w = BinWriter::new(out, MAGIC, VERSION)?;
    w.str(metadata)?;
    w.u64(params.len() as u64)?;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        w.str(name)?;
        w.u64(t.rows as u64)?;
        w.u64(t.cols as u64)?;
        w.f64s(&t.data)?;
    }
    w.finish()
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<(String, Params<f64>)> {
    let mut r = BinReader::new(input, MAGIC, VERSION, "checkpoint")?;
    let metadata = r.str()?;
    let n = r.read_len()?;
    let mut params = Params::new();
    for _ in 0..n {
        let name = r.str()?;
        let rows = r.read_len()?;
        let cols = r.read_len()?;
        let data = r.f64s()?;
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "tensor {name}: {} values for shape {rows}x{cols}",
                    data.len()
                ),
            ));
        }
        params.push(name, Mat::from_vec(rows, cols, data));
    }
    r.expect_end()?;
    Ok((metadata, params))
}

pub fn save_checkpoint(path: &Path, metadata: &str, params: &Params<f64>) -> Result<()> {
    let mut w = write_checkpoint(io::create(path)?, metadata, params)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(String, Params<f64>)> {
    read_checkpoint(io::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_roundtrip() {
        let mut p = Params::new();
        p.push(
            "a",
            Mat::from_vec(2, 2, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]),
        );
        p.push(
            "b",
            Mat::from_vec(1, 3, vec![std::f64::consts::PI, 2.0, -3.5]),
        );
        let bytes = write_checkpoint(Vec::new(), r#"{"role":"linker"}"#, &p).unwrap();
        let (meta, back) = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(meta, r#"{"role":"linker"}"#);
        assert_eq!(back.names(), p.names());
        for (x, y) in back.tensors().iter().zip(p.tensors()) {
            let xb: Vec<u64> = x.data.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(read_checkpoint(&wrong[..]).is_err());
    }
}
