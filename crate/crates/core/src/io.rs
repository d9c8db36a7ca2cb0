//! Binary checkpoints and CSV tables.
//!
//! A checkpoint is an 8-byte magic (`NCHNS1`, `NCHNT1`, `NCHNA1` or `NCHNC1`
//! padded with two zero bytes), then `nx, ny, nt` as little-endian `u64` and
//! `dt, lx, ly` as little-endian `f64`, then one frame per stored level. A
//! frame is the scalar slot, the x faces, the y faces and the pressure slot,
//! each row-major (`j` outer, `i` inner) little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::adjoint::AdjointTrajectory;
use crate::error::{Error, Result};
use crate::forward::{DiagnosticsRow, StateTrajectory};
use crate::grid::{Grid2D, ScalarField, VectorField};
use crate::optimizer::IterationRecord;
use crate::tangent::TangentTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    State,
    Tangent,
    Adjoint,
    Control,
}

impl CheckpointKind {
    pub fn magic(self) -> [u8; 8] {
        let tag: &[u8; 6] = match self {
            CheckpointKind::State => b"NCHNS1",
            CheckpointKind::Tangent => b"NCHNT1",
            CheckpointKind::Adjoint => b"NCHNA1",
            CheckpointKind::Control => b"NCHNC1",
        };
        let mut m = [0u8; 8];
        m[..6].copy_from_slice(tag);
        m
    }

    fn from_magic(m: &[u8; 8]) -> Result<Self> {
        [
            CheckpointKind::State,
            CheckpointKind::Tangent,
            CheckpointKind::Adjoint,
            CheckpointKind::Control,
        ]
        .into_iter()
        .find(|k| &k.magic() == m)
        .ok_or_else(|| Error::Format(format!("unknown magic {:?}", String::from_utf8_lossy(m))))
    }

    /// Controls live on steps, everything else on levels.
    fn frames(self, nt: usize) -> usize {
        match self {
            CheckpointKind::Control => nt,
            _ => nt + 1,
        }
    }
}

/// One stored level: for a state `(phi, u, pressure)`, for a tangent
/// `(eta, xi, pressure)`, for an adjoint `(q, p, pressure)`, for a control
/// `(0, v, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub scalar: ScalarField,
    pub vector: VectorField,
    pub pressure: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub grid: Grid2D,
    pub nt: usize,
    pub dt: f64,
    pub frames: Vec<Frame>,
}

impl Checkpoint {
    pub fn from_state(traj: &StateTrajectory) -> Self {
        Self::from_parts(
            CheckpointKind::State,
            traj.grid,
            traj.dt,
            &traj.phi,
            &traj.u,
            &traj.pressure,
        )
    }

    pub fn from_tangent(grid: Grid2D, dt: f64, t: &TangentTrajectory) -> Self {
        Self::from_parts(
            CheckpointKind::Tangent,
            grid,
            dt,
            &t.eta,
            &t.xi,
            &t.pressure,
        )
    }

    pub fn from_adjoint(grid: Grid2D, dt: f64, a: &AdjointTrajectory) -> Self {
        Self::from_parts(CheckpointKind::Adjoint, grid, dt, &a.q, &a.p, &a.pressure)
    }

    pub fn from_control(grid: Grid2D, dt: f64, v: &[VectorField]) -> Self {
        let zero = ScalarField::zeros(grid);
        Checkpoint {
            kind: CheckpointKind::Control,
            grid,
            nt: v.len(),
            dt,
            frames: v
                .iter()
                .map(|f| Frame {
                    scalar: zero.clone(),
                    vector: f.clone(),
                    pressure: zero.clone(),
                })
                .collect(),
        }
    }

    fn from_parts(
        kind: CheckpointKind,
        grid: Grid2D,
        dt: f64,
        s: &[ScalarField],
        v: &[VectorField],
        p: &[ScalarField],
    ) -> Self {
        Checkpoint {
            kind,
            grid,
            nt: s.len() - 1,
            dt,
            frames: s
                .iter()
                .zip(v)
                .zip(p)
                .map(|((s, v), p)| Frame {
                    scalar: s.clone(),
                    vector: v.clone(),
                    pressure: p.clone(),
                })
                .collect(),
        }
    }

    pub fn control(&self) -> Result<Vec<VectorField>> {
        if self.kind != CheckpointKind::Control {
            return Err(Error::Format(format!(
                "expected a control checkpoint, got {:?}",
                self.kind
            )));
        }
        Ok(self.frames.iter().map(|f| f.vector.clone()).collect())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.kind.magic())?;
        for n in [self.grid.nx, self.grid.ny, self.nt] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for x in [self.dt, self.grid.lx, self.grid.ly] {
            w.write_all(&x.to_le_bytes())?;
        }
        let mut put = |xs: &[f64]| -> Result<()> {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        for f in &self.frames {
            put(&f.scalar.values)?;
            put(&f.vector.ux)?;
            put(&f.vector.uy)?;
            put(&f.pressure.values)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        let kind = CheckpointKind::from_magic(&magic)?;
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let mut ints = [0usize; 3];
        for n in &mut ints {
            *n = usize::try_from(u64::from_le_bytes(next(r)?))
                .map_err(|_| Error::Format("header size overflows usize".into()))?;
        }
        let mut reals = [0f64; 3];
        for x in &mut reals {
            *x = f64::from_le_bytes(next(r)?);
        }
        let [nx, ny, nt] = ints;
        let [dt, lx, ly] = reals;
        let grid = Grid2D::new(nx, ny, lx, ly).map_err(|e| Error::Format(e.to_string()))?;
        let mut take = |len: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; 8 * len];
            r.read_exact(&mut buf).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
                _ => e.into(),
            })?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let mut frames = Vec::new();
        for _ in 0..kind.frames(nt) {
            let scalar = ScalarField::from_values(grid, take(grid.n_cells())?)?;
            let ux = take(grid.n_xfaces())?;
            let uy = take(grid.n_yfaces())?;
            let vector = VectorField::from_values(grid, ux, uy)?;
            let pressure = ScalarField::from_values(grid, take(grid.n_cells())?)?;
            frames.push(Frame {
                scalar,
                vector,
                pressure,
            });
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after last frame".into()));
        }
        Ok(Checkpoint {
            kind,
            grid,
            nt,
            dt,
            frames,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Format(format!("{other:?}")),
    }
}

pub fn write_diagnostics(w: impl Write, rows: &[DiagnosticsRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_diagnostics(r: impl Read) -> Result<Vec<DiagnosticsRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

pub const OPTIMIZATION_LOG_HEADER: [&str; 6] = [
    "iter",
    "J",
    "grad_norm",
    "kkt_residual",
    "tau_accepted",
    "armijo_shrinks",
];

pub fn write_optimization_log(w: impl Write, history: &[IterationRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(OPTIMIZATION_LOG_HEADER)
        .map_err(csv_error)?;
    for h in history {
        out.write_record([
            h.iter.to_string(),
            h.cost.to_string(),
            h.grad_norm.to_string(),
            h.kkt_residual.to_string(),
            h.tau.to_string(),
            h.armijo_shrinks.to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(kind: CheckpointKind) -> Checkpoint {
        let g = Grid2D::new(5, 4, 2.5, 2.0).unwrap();
        let frames = (0..kind.frames(2))
            .map(|k| {
                let s = k as f64;
                Frame {
                    scalar: ScalarField::from_fn(g, |x, y| x + 10.0 * y + s),
                    vector: VectorField::from_fn(g, |x, y| x * y - s, |x, y| x - y * s),
                    pressure: ScalarField::from_fn(g, |x, _| -x * s),
                }
            })
            .collect();
        Checkpoint {
            kind,
            grid: g,
            nt: 2,
            dt: 0.125,
            frames,
        }
    }

    #[test]
    fn byte_layout() {
        let c = sample(CheckpointKind::State);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"NCHNS1\0\0");
        assert_eq!(&buf[8..16], &5u64.to_le_bytes());
        assert_eq!(&buf[16..24], &4u64.to_le_bytes());
        assert_eq!(&buf[24..32], &2u64.to_le_bytes());
        assert_eq!(&buf[32..40], &0.125f64.to_le_bytes());
        assert_eq!(&buf[40..48], &2.5f64.to_le_bytes());
        assert_eq!(&buf[48..56], &2.0f64.to_le_bytes());
        // 20 cells + 24 x faces + 25 y faces + 20 cells per frame, 3 frames
        assert_eq!(buf.len(), 56 + 8 * 89 * 3);
        // first scalar value is cell (0, 0), second is cell (1, 0)
        let first = f64::from_le_bytes(buf[56..64].try_into().unwrap());
        let second = f64::from_le_bytes(buf[64..72].try_into().unwrap());
        assert_eq!(first, 0.25 + 10.0 * 0.25);
        assert_eq!(second, 0.75 + 10.0 * 0.25);
    }

    #[test]
    fn round_trip_all_kinds() {
        for kind in [
            CheckpointKind::State,
            CheckpointKind::Tangent,
            CheckpointKind::Adjoint,
            CheckpointKind::Control,
        ] {
            let c = sample(kind);
            let mut buf = Vec::new();
            c.write_to(&mut buf).unwrap();
            let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
            assert_eq!(back, c);
        }
        let c = sample(CheckpointKind::Control);
        assert_eq!(c.frames.len(), 2);
        assert!(c.control().is_ok());
        assert!(sample(CheckpointKind::Adjoint).control().is_err());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let c = sample(CheckpointKind::Tangent);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[4] = b'X';
        assert!(matches!(
            Checkpoint::read_from(&mut bad.as_slice()),
            Err(Error::Format(_))
        ));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(
            Checkpoint::read_from(&mut &short[..]),
            Err(Error::Format(_))
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(
            Checkpoint::read_from(&mut long.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn diagnostics_csv_round_trip() {
        let rows = vec![
            DiagnosticsRow {
                step: 0,
                time: 0.0,
                mass: 1.0 / 3.0,
                kinetic_energy: 0.0,
                free_energy: -2.5,
                max_div: 1e-17,
                max_u: 0.0,
                min_phi: -1.0,
                max_phi: 1.0,
            },
            DiagnosticsRow {
                step: 1,
                time: 0.1,
                mass: 1.0 / 3.0,
                kinetic_energy: 1e-300,
                free_energy: -2.6,
                max_div: 0.0,
                max_u: 3.0,
                min_phi: -0.9,
                max_phi: 0.9,
            },
        ];
        let mut buf = Vec::new();
        write_diagnostics(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "step,time,mass,kinetic_energy,free_energy,max_div,max_u,min_phi,max_phi"
        );
        let back = read_diagnostics(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&rows) {
            assert_eq!(a.mass.to_bits(), b.mass.to_bits());
            assert_eq!(a.kinetic_energy, b.kinetic_energy);
            assert_eq!(a.step, b.step);
        }
    }

    #[test]
    fn optimization_log_columns() {
        let h = [IterationRecord {
            iter: 0,
            cost: 2.0,
            grad_norm: 0.5,
            kkt_residual: 0.25,
            tau: 1.0,
            armijo_shrinks: 3,
        }];
        let mut buf = Vec::new();
        write_optimization_log(&mut buf, &h).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iter,J,grad_norm,kkt_residual,tau_accepted,armijo_shrinks\n0,2,0.5,0.25,1,3\n"
        );
    }
}
