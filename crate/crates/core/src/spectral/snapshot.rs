//! SHF1 snapshot files.
//!
//! Little-endian layout: magic `SHF1`, `u32` n, `f64` viscosity, `f64` time,
//! then `3 n^3` complex coefficients as `(re, im)` `f64` pairs, component-major
//! and row-major in `(xi1, xi2, xi3)` FFT order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{Lattice, SpectralField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SHF1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nu: f64,
    pub time: f64,
    pub field: SpectralField,
}

impl Snapshot {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.field.lattice().n();
        w.write_all(MAGIC)?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&self.nu.to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        for comp in self.field.components() {
            for z in comp {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Snapshot(format!("header: {e}")))?;
        if &magic != MAGIC {
            return Err(Error::Snapshot(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)
            .map_err(|e| Error::Snapshot(format!("header: {e}")))?;
        let n = u32::from_le_bytes(b4) as usize;
        let lattice = Lattice::new(n).map_err(|e| Error::Snapshot(e.to_string()))?;
        r.read_exact(&mut b8)
            .map_err(|e| Error::Snapshot(format!("header: {e}")))?;
        let nu = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)
            .map_err(|e| Error::Snapshot(format!("header: {e}")))?;
        let time = f64::from_le_bytes(b8);

        let len = lattice.len();
        let mut raw = vec![0u8; 16 * len];
        let mut comps: [Vec<Complex64>; 3] = Default::default();
        for comp in comps.iter_mut() {
            r.read_exact(&mut raw)
                .map_err(|e| Error::Snapshot(format!("truncated coefficients: {e}")))?;
            *comp = raw
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect();
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Snapshot("trailing bytes after coefficients".into()));
        }
        if comps.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Snapshot("non-finite coefficient".into()));
        }
        Ok(Snapshot {
            nu,
            time,
            field: SpectralField::from_components(lattice, comps)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
