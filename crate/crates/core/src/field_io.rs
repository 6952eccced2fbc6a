//! Binary field file format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   [u8; 4]  = "BPFD"
//! version u16      = 1
//! nx      u16
//! ny      u16
//! pitch   u32      pixel pitch in whole nanometers
//! payload nx*ny pairs of (f64 re, f64 im), row-major (y rows, x fastest)
//! ```

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid2D;
use crate::image::ScalarImage;
use ndarray::Array2;
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

pub const FIELD_MAGIC: [u8; 4] = *b"BPFD";
pub const FIELD_VERSION: u16 = 1;

fn pitch_to_nm(pitch: f64) -> Result<u32> {
    let nm = pitch * 1e9;
    let rounded = nm.round();
    if (nm - rounded).abs() > 1e-3 || rounded < 1.0 || rounded > u32::MAX as f64 {
        return Err(Error::PitchNotRepresentable(pitch));
    }
    Ok(rounded as u32)
}

pub fn write_field(field: &ComplexField, path: &Path) -> Result<()> {
    let grid = field.grid();
    let pitch_nm = pitch_to_nm(grid.pitch())?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&FIELD_MAGIC)?;
    out.write_all(&FIELD_VERSION.to_le_bytes())?;
    out.write_all(&(grid.nx() as u16).to_le_bytes())?;
    out.write_all(&(grid.ny() as u16).to_le_bytes())?;
    out.write_all(&pitch_nm.to_le_bytes())?;
    for v in field.values().iter() {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ComplexField> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);

    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| Error::Truncated("header shorter than magic".into()))?;
    if magic != FIELD_MAGIC {
        return Err(Error::MagicMismatch {
            expected: FIELD_MAGIC,
            found: magic,
        });
    }

    let version = read_u16(&mut file)?;
    if version != FIELD_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let nx = read_u16(&mut file)? as usize;
    let ny = read_u16(&mut file)? as usize;
    let pitch_nm = read_u32(&mut file)?;
    let grid = Grid2D::new(nx, ny, pitch_nm as f64 * 1e-9)?;

    let mut values = Vec::with_capacity(nx * ny);
    let mut buf = [0u8; 16];
    for i in 0..nx * ny {
        file.read_exact(&mut buf).map_err(|_| {
            Error::Truncated(format!("payload ends at record {i} of {}", nx * ny))
        })?;
        let re = f64::from_le_bytes(buf[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(buf[8..16].try_into().unwrap());
        values.push(Complex64::new(re, im));
    }
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(Error::Truncated("trailing bytes after payload".into()));
    }

    let array = Array2::from_shape_vec((ny, nx), values)
        .map_err(|e| Error::Parse(e.to_string()))?;
    ComplexField::new(grid, array)
}

/// Store a real image as a field with zero imaginary parts.
pub fn write_scalar(image: &ScalarImage, path: &Path) -> Result<()> {
    let field = ComplexField::new(*image.grid(), image.data().mapv(|v| Complex64::new(v, 0.0)))?;
    write_field(&field, path)
}

/// Read a real image back, discarding imaginary parts.
pub fn read_scalar(path: &Path) -> Result<ScalarImage> {
    let field = read_field(path)?;
    ScalarImage::new(*field.grid(), field.values().mapv(|v| v.re))
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)
        .map_err(|_| Error::Truncated("header ends inside a u16".into()))?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Truncated("header ends inside a u32".into()))?;
    Ok(u32::from_le_bytes(b))
}
