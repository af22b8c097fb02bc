//! Shared binary checkpoint container: magic, version, a text key/value
//! header, then named little-endian f32 arrays in a fixed documented order.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub(crate) fn write_checkpoint(
    path: &Path,
    magic: &[u8; 4],
    version: u32,
    header: &[(String, String)],
    arrays: &[(String, &Matrix<f32>)],
) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    for (k, v) in header {
        write_str(&mut w, k)?;
        write_str(&mut w, v)?;
    }
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for (name, m) in arrays {
        if !m.is_all_finite() {
            return Err(Error::Format(format!(
                "refusing to write non-finite values in array {name}"
            )));
        }
        write_str(&mut w, name)?;
        w.write_all(&(m.rows() as u32).to_le_bytes())?;
        w.write_all(&(m.cols() as u32).to_le_bytes())?;
        for &x in m.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) struct Checkpoint {
    pub header: Vec<(String, String)>,
    pub arrays: Vec<(String, Matrix<f32>)>,
}

impl Checkpoint {
    pub fn header_get(&self, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("missing header field {key}")))
    }

    pub fn header_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.header_get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("unparseable header field {key}")))
    }

    /// Take the array at position `idx`, validating its name and shape.
    pub fn expect_array(&mut self, idx: usize, name: &str, rows: usize, cols: usize) -> Result<Matrix<f32>> {
        if idx >= self.arrays.len() {
            return Err(Error::Format(format!(
                "checkpoint ends before array {name} (index {idx})"
            )));
        }
        let (got_name, m) = &mut self.arrays[idx];
        if got_name != name {
            return Err(Error::Format(format!(
                "array {idx} is named {got_name}, expected {name}"
            )));
        }
        if m.shape() != (rows, cols) {
            return Err(Error::Format(format!(
                "array {name} has shape {}, expected {rows}x{cols}",
                m.shape_str()
            )));
        }
        Ok(std::mem::replace(m, Matrix::zeros(0, 0)))
    }
}

pub(crate) fn read_checkpoint(path: &Path, magic: &[u8; 4], version: u32) -> Result<Checkpoint> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut got_magic = [0u8; 4];
    r.read_exact(&mut got_magic)
        .map_err(|_| Error::Format("file truncated before magic".into()))?;
    if &got_magic != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            got_magic, magic
        )));
    }
    let got_version = read_u32(&mut r)?;
    if got_version != version {
        return Err(Error::Format(format!(
            "unsupported version {got_version}; this build reads version {version}"
        )));
    }
    let n_header = read_u32(&mut r)? as usize;
    let mut header = Vec::with_capacity(n_header);
    for _ in 0..n_header {
        let k = read_str(&mut r)?;
        let v = read_str(&mut r)?;
        header.push((k, v));
    }
    let n_arrays = read_u32(&mut r)? as usize;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let name = read_str(&mut r)?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = vec![0f32; rows * cols];
        let mut buf = [0u8; 4];
        for x in &mut data {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format(format!("file truncated in array {name}")))?;
            *x = f32::from_le_bytes(buf);
        }
        let m = Matrix::from_vec(rows, cols, data)?;
        if !m.is_all_finite() {
            return Err(Error::Format(format!("non-finite values in array {name}")));
        }
        arrays.push((name, m));
    }
    Ok(Checkpoint { header, arrays })
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("file truncated reading string".into()))?;
    String::from_utf8(buf).map_err(|_| Error::Format("non-utf8 string in header".into()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("file truncated reading u32".into()))?;
    Ok(u32::from_le_bytes(buf))
}
