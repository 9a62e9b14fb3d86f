//! Binary snapshot files.
//!
//! Layout (little-endian): a 32-byte header
//!
//! | offset | type  | content          |
//! |--------|-------|------------------|
//! | 0      | [u8;4]| magic `MHD2`     |
//! | 4      | u32   | format version   |
//! | 8      | u32   | nx               |
//! | 12     | u32   | ny               |
//! | 16     | f64   | lx               |
//! | 24     | f64   | ly               |
//!
//! followed by `nx·ny` physical samples of `u`, then `v`, then `ψ`, each
//! row-major over `(ix, iy)` with `iy` fastest.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::spectral::{Grid2D, SpectralField};
use crate::state::State;

pub const MAGIC: &[u8; 4] = b"MHD2";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed snapshot at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}

fn malformed(offset: usize, reason: impl Into<String>) -> SnapshotError {
    SnapshotError::Malformed {
        offset,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub psi: Vec<f64>,
}

impl Snapshot {
    pub fn from_state(state: &State) -> Self {
        let g = state.grid();
        Self {
            nx: g.nx(),
            ny: g.ny(),
            lx: g.lx(),
            ly: g.ly(),
            u: state.u.to_physical(),
            v: state.v.to_physical(),
            psi: state.psi.to_physical(),
        }
    }

    pub fn into_state(self, grid: &Grid2D, t: f64) -> State {
        State {
            u: SpectralField::from_physical(grid, &self.u),
            v: SpectralField::from_physical(grid, &self.v),
            psi: SpectralField::from_physical(grid, &self.psi),
            t,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 24 * self.nx * self.ny);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        out.extend_from_slice(&self.lx.to_le_bytes());
        out.extend_from_slice(&self.ly.to_le_bytes());
        for field in [&self.u, &self.v, &self.psi] {
            for s in field.iter() {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        if bytes.len() < HEADER_LEN {
            return Err(malformed(bytes.len(), "truncated header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(malformed(0, "bad magic, expected MHD2"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(malformed(4, format!("unsupported version {version}")));
        }
        let (nx, ny) = (u32_at(8) as usize, u32_at(12) as usize);
        if nx < 4 || nx % 2 != 0 {
            return Err(malformed(8, format!("invalid nx {nx}")));
        }
        if ny < 4 || ny % 2 != 0 {
            return Err(malformed(12, format!("invalid ny {ny}")));
        }
        let (lx, ly) = (f64_at(16), f64_at(24));
        if !(lx.is_finite() && lx > 0.0) {
            return Err(malformed(16, format!("invalid lx {lx}")));
        }
        if !(ly.is_finite() && ly > 0.0) {
            return Err(malformed(24, format!("invalid ly {ly}")));
        }
        let n = nx * ny;
        let expected = HEADER_LEN + 3 * 8 * n;
        if bytes.len() != expected {
            return Err(malformed(
                bytes.len().min(expected),
                format!("payload length {} != expected {}", bytes.len(), expected),
            ));
        }
        let mut fields = Vec::with_capacity(3);
        for f in 0..3 {
            let base = HEADER_LEN + f * 8 * n;
            let mut data = Vec::with_capacity(n);
            for i in 0..n {
                let o = base + 8 * i;
                let s = f64_at(o);
                if !s.is_finite() {
                    return Err(malformed(o, "non-finite sample"));
                }
                data.push(s);
            }
            fields.push(data);
        }
        let psi = fields.pop().unwrap();
        let v = fields.pop().unwrap();
        let u = fields.pop().unwrap();
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            u,
            v,
            psi,
        })
    }
}

/// Writes via a temporary file and rename so readers never see a partial file.
pub fn write_snapshot(path: &Path, state: &State) -> Result<(), SnapshotError> {
    let bytes = Snapshot::from_state(state).encode();
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    Snapshot::decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Snapshot {
        let n = 16;
        Snapshot {
            nx: 4,
            ny: 4,
            lx: 1.0,
            ly: 2.0,
            u: (0..n).map(|i| i as f64).collect(),
            v: (0..n).map(|i| -(i as f64)).collect(),
            psi: vec![0.5; n],
        }
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let bytes = tiny().encode();
        assert_eq!(bytes.len(), 32 + 3 * 16 * 8);
        assert_eq!(&bytes[0..4], b"MHD2");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &4u32.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[24..32], &2.0f64.to_le_bytes());
        // first u sample, first v sample
        assert_eq!(&bytes[32..40], &0.0f64.to_le_bytes());
        assert_eq!(&bytes[32 + 128 + 8..32 + 128 + 16], &(-1.0f64).to_le_bytes());
        assert_eq!(Snapshot::decode(&bytes).unwrap(), tiny());
    }

    #[test]
    fn malformed_files_report_offsets() {
        let good = tiny().encode();
        let err = |b: &[u8]| match Snapshot::decode(b) {
            Err(SnapshotError::Malformed { offset, .. }) => offset,
            other => panic!("expected malformed, got {other:?}"),
        };
        assert_eq!(err(&good[..10]), 10);
        let mut b = good.clone();
        b[0] = b'X';
        assert_eq!(err(&b), 0);
        let mut b = good.clone();
        b[4] = 9;
        assert_eq!(err(&b), 4);
        let mut b = good.clone();
        b[8] = 3;
        assert_eq!(err(&b), 8);
        assert_eq!(err(&good[..good.len() - 1]), good.len() - 1);
        let mut b = good.clone();
        b[40..48].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(err(&b), 40);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(8, 8, 3.0, 3.0).unwrap();
        let s = State::random(&g, 3, 0.1, 5.0);
        let path = dir.path().join("s.bin");
        write_snapshot(&path, &s).unwrap();
        let back = read_snapshot(&path).unwrap().into_state(&g, 1.0);
        assert!(back.u.max_coeff_diff(&s.u) < 1e-15);
        assert!(back.psi.max_coeff_diff(&s.psi) < 1e-15);
    }
}
