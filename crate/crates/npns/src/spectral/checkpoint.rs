//! Binary checkpoint format for one spectral field.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   4 bytes  "NPNS"
//! version u32      currently 1
//! n       u32      modes per dimension
//! flags   u32      bit 0: mean_free
//! coeffs  n*n * (f64 re, f64 im), row-major wavevector storage order
//! ```

use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField};
use num_complex::Complex64;
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"NPNS";
pub const VERSION: u32 = 1;

const FLAG_MEAN_FREE: u32 = 1;

pub fn write_field<W: Write>(w: &mut W, field: &SpectralField) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(field.grid().n() as u32).to_le_bytes())?;
    let flags = if field.is_mean_free() { FLAG_MEAN_FREE } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    for c in field.coeffs() {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: Read>(r: &mut R) -> Result<SpectralField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = read_u32(r)? as usize;
    let flags = read_u32(r)?;
    let grid = Grid::new(n).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut coeffs = Vec::with_capacity(n * n);
    let mut buf = [0u8; 16];
    for _ in 0..n * n {
        r.read_exact(&mut buf)?;
        let re = f64::from_le_bytes(buf[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(buf[8..16].try_into().unwrap());
        coeffs.push(Complex64::new(re, im));
    }
    Ok(SpectralField::from_raw(
        grid,
        coeffs,
        flags & FLAG_MEAN_FREE != 0,
    ))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn field_round_trip() {
        let grid = Grid::new(16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let f = SpectralField::random(grid, &mut rng, 4, 2.5);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let g = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(f.coeffs(), g.coeffs());
        assert_eq!(f.is_mean_free(), g.is_mean_free());
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = b"XXXX".to_vec();
        buf.extend_from_slice(&[0u8; 12]);
        assert!(read_field(&mut buf.as_slice()).is_err());
    }
}
