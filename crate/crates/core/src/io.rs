//! Binary field format.
//!
//! Layout: magic `RWF1`, little-endian u32 `d`, u32 `n`, f64 `box_length`,
//! then `2 n^d` complex entries as interleaved (re, im) f64 in row-major axis
//! order, comp1 before comp2. Round trips are bit-exact.

use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, RwError};
use crate::field::Field;
use crate::grid::TorusGrid;

const MAGIC: &[u8; 4] = b"RWF1";

pub fn field_io_write(field: &Field, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 32 * field.grid().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(field.grid().dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(field.grid().n() as u32).to_le_bytes());
    buf.extend_from_slice(&field.grid().box_length().to_le_bytes());
    for comp in field.components() {
        for z in comp {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn field_io_read(path: &Path) -> Result<Field> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(RwError::Format(format!(
            "file too short for header: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(RwError::Format(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[0..4],
            MAGIC
        )));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let l = f64::from_le_bytes(bytes[12..20].try_into().map_err(|_| {
        RwError::Format("truncated header".into())
    })?);
    if bytes.len() < 20 {
        return Err(RwError::Format("truncated header".into()));
    }
    let grid = TorusGrid::new(d, n, l)
        .map_err(|e| RwError::Format(format!("header describes invalid grid: {e}")))?;
    let count = 2 * grid.len();
    let expected = 20 + 16 * count;
    if bytes.len() != expected {
        return Err(RwError::Format(format!(
            "payload length {} does not match expected {} for d={d}, n={n}",
            bytes.len(),
            expected
        )));
    }
    let read_entries = |offset: usize| -> Vec<Complex64> {
        (0..grid.len())
            .map(|i| {
                let at = offset + 16 * i;
                let re = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
                let im = f64::from_le_bytes(bytes[at + 8..at + 16].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect()
    };
    let comp1 = read_entries(20);
    let comp2 = read_entries(20 + 16 * grid.len());
    Field::from_components(grid, comp1, comp2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random_field;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("rwave-io-{}-{}", std::process::id(), name));
        p
    }

    #[test]
    fn round_trip_bitwise() {
        let g = TorusGrid::new(2, 16, 2.5).unwrap();
        let f = random_field(g, 9);
        let path = tmp("rt.rwf");
        field_io_write(&f, &path).unwrap();
        let back = field_io_read(&path).unwrap();
        assert_eq!(f.grid(), back.grid());
        for (a, b) in f.comp1.iter().zip(&back.comp1) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        for (a, b) in f.comp2.iter().zip(&back.comp2) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn wrong_magic_rejected() {
        let path = tmp("magic.rwf");
        std::fs::write(&path, b"NOPE____________________").unwrap();
        match field_io_read(&path) {
            Err(RwError::Format(msg)) => assert!(msg.contains("magic")),
            other => panic!("expected format error, got {other:?}"),
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn truncation_rejected_at_every_cut() {
        let g = TorusGrid::new(1, 8, 1.0).unwrap();
        let f = random_field(g, 1);
        let path = tmp("trunc.rwf");
        field_io_write(&f, &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        // Fuzz truncation points across the whole file.
        for cut in (0..full.len()).step_by(7).chain([full.len() - 1]) {
            std::fs::write(&path, &full[..cut]).unwrap();
            assert!(
                field_io_read(&path).is_err(),
                "truncation at {cut} accepted"
            );
        }
        std::fs::remove_file(path).ok();
    }
}
