//! SWF1 field files and the branch CSV.
//!
//! SWF1 layout, little-endian throughout:
//!
//! ```text
//! b"SWF1" | u32 version = 1 | u32 N1 | u32 N2 | f64 L1 | f64 L2 | u32 count
//! count x { u16 name_len | name (UTF-8) | N1*N2 f64 samples, row-major }
//! ```
//!
//! Row-major means sample `(j1, j2)` sits at position `j1 * N2 + j2`, with
//! `x = (j1 L1 / N1, j2 L2 / N2)`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid};

pub const SWF1_MAGIC: &[u8; 4] = b"SWF1";
pub const SWF1_VERSION: u32 = 1;

/// In-memory contents of an SWF1 file.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub n: [usize; 2],
    pub periods: [f64; 2],
    pub fields: Vec<(String, Vec<f64>)>,
}

impl FieldFile {
    pub fn new(grid: &Grid) -> Self {
        Self {
            n: grid.n(),
            periods: grid.periods(),
            fields: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, field: &Field) {
        self.fields.push((name.to_string(), field.values().to_vec()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|(n, _)| n.as_str())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.periods, self.n)
    }

    /// Field `name` on `grid`; the file's grid must match exactly.
    pub fn field(&self, name: &str, grid: &Arc<Grid>) -> Result<Field> {
        if grid.n() != self.n || grid.periods() != self.periods {
            return Err(Error::GridMismatch);
        }
        let (_, values) = self
            .fields
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("no field named {name:?}")))?;
        Field::from_values(grid, values.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let len = self.n[0] * self.n[1];
        let mut out = Vec::with_capacity(36 + self.fields.len() * (8 * len + 16));
        out.extend_from_slice(SWF1_MAGIC);
        out.extend_from_slice(&SWF1_VERSION.to_le_bytes());
        for n in self.n {
            let n = u32::try_from(n).map_err(|_| Error::Format("resolution too large".into()))?;
            out.extend_from_slice(&n.to_le_bytes());
        }
        for l in self.periods {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, values) in &self.fields {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Format(format!("field name too long: {name}")))?;
            if values.len() != len {
                return Err(Error::Format(format!(
                    "field {name} has {} samples, expected {len}",
                    values.len()
                )));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != SWF1_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != SWF1_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = [r.u32()? as usize, r.u32()? as usize];
        let periods = [r.f64()?, r.f64()?];
        let count = r.u32()? as usize;
        let len = n[0]
            .checked_mul(n[1])
            .ok_or_else(|| Error::Format("resolution overflow".into()))?;
        let mut fields = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("field name is not UTF-8".into()))?
                .to_string();
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            fields.push((name, values));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { n, periods, fields })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn write_swf1(path: impl AsRef<Path>, file: &FieldFile) -> Result<()> {
    let bytes = file.to_bytes()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_swf1(path: impl AsRef<Path>) -> Result<FieldFile> {
    FieldFile::from_bytes(&fs::read(path)?)
}

/// One line of the branch summary table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub kappa: f64,
    pub eta_max: f64,
    pub depth_min: f64,
    pub residual: f64,
    pub power_relerr: f64,
    pub h1_u: f64,
    pub h2_eta: f64,
}

/// Header written by [`write_branch_csv`].
pub const BRANCH_CSV_HEADER: &str = "kappa,eta_max,depth_min,residual,power_relerr,h1_u,h2_eta";

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Format(format!("branch table: {other:?}")),
    }
}

pub fn write_branch_csv(path: impl AsRef<Path>, rows: &[BranchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    if rows.is_empty() {
        w.write_record(BRANCH_CSV_HEADER.split(',')).map_err(csv_error)?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_branch_csv(path: impl AsRef<Path>) -> Result<Vec<BranchRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if header.join(",") != BRANCH_CSV_HEADER {
        return Err(Error::Format(format!("unexpected branch header {:?}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let g = Grid::new([1.5, 2.0], [8, 10]).unwrap();
        let mut file = FieldFile::new(&g);
        file.push("eta", &Field::from_fn(&g, |x| x[0] - 2.0 * x[1]));
        file.push("u1", &Field::constant(&g, -0.25));
        let bytes = file.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"SWF1");
        assert_eq!(bytes.len(), 36 + 2 * (2 + 80 * 8) + 3 + 2);
        let back = FieldFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, file);
        let eta = back.field("eta", &g).unwrap();
        assert_eq!(eta.values()[10], g.point(1, 0)[0]);
    }

    #[test]
    fn header_layout_is_fixed() {
        let g = Grid::new([3.0, 4.0], [8, 12]).unwrap();
        let bytes = FieldFile::new(&g).to_bytes().unwrap();
        assert_eq!(bytes.len(), 36);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 12);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3.0);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 4.0);
        assert_eq!(u32::from_le_bytes(bytes[32..36].try_into().unwrap()), 0);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let g = Grid::new([1.0, 1.0], [8, 8]).unwrap();
        let mut file = FieldFile::new(&g);
        file.push("beta", &Field::zeros(&g));
        let bytes = file.to_bytes().unwrap();
        assert!(FieldFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FieldFile::from_bytes(&bad).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(FieldFile::from_bytes(&long).is_err());
        let other = Grid::new([1.0, 1.0], [8, 10]).unwrap();
        assert!(matches!(file.field("beta", &other), Err(Error::GridMismatch)));
        assert!(file.field("eta", &g).is_err());
    }

    #[test]
    fn branch_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("branch.csv");
        let rows = [
            BranchRow { kappa: 0.0, eta_max: 0.0, depth_min: 1.0, residual: 0.0, power_relerr: 0.0, h1_u: 0.0, h2_eta: 0.0 },
            BranchRow { kappa: 0.1, eta_max: 1.0 / 3.0, depth_min: 0.97, residual: 2.5e-13, power_relerr: 1e-15, h1_u: 0.12, h2_eta: 7.0e-3 },
        ];
        write_branch_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), BRANCH_CSV_HEADER);
        assert_eq!(read_branch_csv(&path).unwrap(), rows);
        write_branch_csv(&path, &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().trim(), BRANCH_CSV_HEADER);
    }
}
